use std::collections::BTreeSet;
use std::net::Ipv4Addr;

/// Exact intersection and its size, computed in the clear.
pub fn plaintext_intersection(
    a: &BTreeSet<Ipv4Addr>,
    b: &BTreeSet<Ipv4Addr>,
) -> (BTreeSet<Ipv4Addr>, usize) {
    let i: BTreeSet<Ipv4Addr> = a.intersection(b).copied().collect();
    let n = i.len();
    (i, n)
}
