use std::net::Ipv4Addr;

/// Sorted, duplicate-free set of IPv4 addresses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IpSet(Vec<Ipv4Addr>);

impl IpSet {
    pub fn new() -> Self {
        IpSet(Vec::new())
    }

    pub fn from_sorted_unchecked(v: Vec<Ipv4Addr>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        IpSet(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, ip: &Ipv4Addr) -> bool {
        self.0.binary_search(ip).is_ok()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Ipv4Addr> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[Ipv4Addr] {
        &self.0
    }

    pub fn intersection_count(&self, other: &IpSet) -> usize {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn intersection(&self, other: &IpSet) -> IpSet {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        IpSet(out)
    }

    pub fn union(&self, other: &IpSet) -> IpSet {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        IpSet(v)
    }

    pub fn union_all<'a>(sets: impl IntoIterator<Item = &'a IpSet>) -> IpSet {
        let mut v: Vec<Ipv4Addr> = Vec::new();
        for s in sets {
            v.extend_from_slice(&s.0);
        }
        v.sort_unstable();
        v.dedup();
        IpSet(v)
    }

    pub fn is_subset(&self, other: &IpSet) -> bool {
        self.intersection_count(other) == self.len()
    }

    pub fn insert(&mut self, ip: Ipv4Addr) -> bool {
        match self.0.binary_search(&ip) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, ip);
                true
            }
        }
    }
}

impl FromIterator<Ipv4Addr> for IpSet {
    fn from_iter<T: IntoIterator<Item = Ipv4Addr>>(iter: T) -> Self {
        let mut v: Vec<Ipv4Addr> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IpSet(v)
    }
}

impl<'a> IntoIterator for &'a IpSet {
    type Item = &'a Ipv4Addr;
    type IntoIter = std::slice::Iter<'a, Ipv4Addr>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
