//! Prime-order groups used by the blind-exponentiation protocols.

use std::fmt;
use std::sync::OnceLock;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use num_bigint::{BigUint, RandBigInt};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256, Sha512};

use super::ProtocolError;

/// Wire code of a group. Part of the handshake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum GroupId {
    Ristretto255 = 1,
    Modp2048 = 2,
}

impl GroupId {
    pub fn from_code(code: u8) -> Option<GroupId> {
        match code {
            1 => Some(GroupId::Ristretto255),
            2 => Some(GroupId::Modp2048),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn element_len(self) -> usize {
        match self {
            GroupId::Ristretto255 => Ristretto255::ELEMENT_LEN,
            GroupId::Modp2048 => Modp2048::ELEMENT_LEN,
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupId::Ristretto255 => "ristretto255",
            GroupId::Modp2048 => "modp2048",
        })
    }
}

impl std::str::FromStr for GroupId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ristretto255" => Ok(GroupId::Ristretto255),
            "modp2048" => Ok(GroupId::Modp2048),
            _ => Err(format!(
                "unknown group {s:?} (expected ristretto255 or modp2048)"
            )),
        }
    }
}

/// A cyclic group of prime order `q` with a hash onto it.
///
/// Elements have a canonical fixed-width encoding; `decode` rejects anything
/// else. Scalars are integers mod `q`.
pub trait PrimeOrderGroup: Send + Sync + 'static {
    type Element: Clone + PartialEq + Eq + Send + Sync + fmt::Debug;
    type Scalar: Clone + Send + Sync;

    const ID: GroupId;
    const ELEMENT_LEN: usize;

    /// Deterministic map from a nonempty byte string to a group element.
    fn hash_to_group(item: &[u8]) -> Self::Element;
    /// Uniform scalar in `[1, q-1]`.
    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar;
    fn invert(s: &Self::Scalar) -> Self::Scalar;
    fn exp(e: &Self::Element, s: &Self::Scalar) -> Self::Element;
    fn encode(e: &Self::Element, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> Result<Self::Element, ProtocolError>;

    fn encode_to_vec(e: &Self::Element) -> Vec<u8> {
        let mut v = Vec::with_capacity(Self::ELEMENT_LEN);
        Self::encode(e, &mut v);
        v
    }
}

/// The ristretto255 group over Curve25519 with the RFC 9496 one-way map.
#[derive(Debug, Clone, Copy)]
pub struct Ristretto255;

const H2G_DOMAIN: &[u8] = b"coshare/hash-to-group/v1";

impl PrimeOrderGroup for Ristretto255 {
    type Element = RistrettoPoint;
    type Scalar = Scalar;

    const ID: GroupId = GroupId::Ristretto255;
    const ELEMENT_LEN: usize = 32;

    fn hash_to_group(item: &[u8]) -> RistrettoPoint {
        let mut h = Sha512::new();
        h.update(H2G_DOMAIN);
        h.update(item);
        RistrettoPoint::from_hash(h)
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
        loop {
            let s = Scalar::random(rng);
            if s != Scalar::ZERO {
                return s;
            }
        }
    }

    fn invert(s: &Scalar) -> Scalar {
        s.invert()
    }

    fn exp(e: &RistrettoPoint, s: &Scalar) -> RistrettoPoint {
        e * s
    }

    fn encode(e: &RistrettoPoint, out: &mut Vec<u8>) {
        out.extend_from_slice(e.compress().as_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<RistrettoPoint, ProtocolError> {
        let c = CompressedRistretto::from_slice(bytes)
            .map_err(|_| ProtocolError::Decode("ristretto255 element must be 32 bytes".into()))?;
        c.decompress()
            .ok_or_else(|| ProtocolError::Decode("non-canonical ristretto255 encoding".into()))
    }
}

/// The order-`q` subgroup of quadratic residues modulo the RFC 3526 2048-bit
/// safe prime `p = 2q + 1`. Hashing uses try-and-increment.
#[derive(Debug, Clone, Copy)]
pub struct Modp2048;

const MODP_2048_HEX: &str = "\
FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74\
020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437\
4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05\
98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB\
9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718\
3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

struct ModpConsts {
    p: BigUint,
    q: BigUint,
}

fn modp() -> &'static ModpConsts {
    static C: OnceLock<ModpConsts> = OnceLock::new();
    C.get_or_init(|| {
        let p = BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).expect("valid prime constant");
        let q = (&p - 1u32) >> 1;
        ModpConsts { p, q }
    })
}

impl Modp2048 {
    pub fn order() -> &'static BigUint {
        &modp().q
    }

    pub fn modulus() -> &'static BigUint {
        &modp().p
    }

    fn in_subgroup(x: &BigUint) -> bool {
        let c = modp();
        *x > BigUint::from(0u32) && *x < c.p && x.modpow(&c.q, &c.p) == BigUint::from(1u32)
    }
}

impl PrimeOrderGroup for Modp2048 {
    type Element = BigUint;
    type Scalar = BigUint;

    const ID: GroupId = GroupId::Modp2048;
    const ELEMENT_LEN: usize = 256;

    fn hash_to_group(item: &[u8]) -> BigUint {
        let c = modp();
        let one = BigUint::from(1u32);
        let mut counter: u32 = 0;
        loop {
            // 288 bytes of SHA-256 output, reduced mod p: bias below 2^-256
            let mut wide = Vec::with_capacity(288);
            for block in 0u8..9 {
                let mut h = Sha256::new();
                h.update(H2G_DOMAIN);
                h.update(counter.to_be_bytes());
                h.update([block]);
                h.update(item);
                wide.extend_from_slice(&h.finalize());
            }
            let x = BigUint::from_bytes_be(&wide) % &c.p;
            if x > one && x != &c.p - 1u32 && x.modpow(&c.q, &c.p) == one {
                return x;
            }
            counter += 1;
        }
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> BigUint {
        rng.gen_biguint_range(&BigUint::from(1u32), &modp().q)
    }

    fn invert(s: &BigUint) -> BigUint {
        let q = &modp().q;
        s.modpow(&(q - 2u32), q)
    }

    fn exp(e: &BigUint, s: &BigUint) -> BigUint {
        e.modpow(s, &modp().p)
    }

    fn encode(e: &BigUint, out: &mut Vec<u8>) {
        let bytes = e.to_bytes_be();
        out.extend(std::iter::repeat_n(0u8, Self::ELEMENT_LEN - bytes.len()));
        out.extend_from_slice(&bytes);
    }

    fn decode(bytes: &[u8]) -> Result<BigUint, ProtocolError> {
        if bytes.len() != Self::ELEMENT_LEN {
            return Err(ProtocolError::Decode(
                "modp2048 element must be 256 bytes".into(),
            ));
        }
        let x = BigUint::from_bytes_be(bytes);
        if !Self::in_subgroup(&x) {
            return Err(ProtocolError::Decode(
                "value is not in the prime-order subgroup".into(),
            ));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    fn blinding_roundtrip<G: PrimeOrderGroup>() {
        let mut rng = OsRng;
        for i in 0..8u32 {
            let x = G::hash_to_group(&i.to_be_bytes());
            let rc = G::random_scalar(&mut rng);
            let rs = G::random_scalar(&mut rng);
            let double = G::exp(&G::exp(&x, &rc), &rs);
            assert_eq!(G::exp(&double, &G::invert(&rc)), G::exp(&x, &rs));
        }
    }

    fn deterministic_and_distinct<G: PrimeOrderGroup>() {
        let a = G::hash_to_group(b"1.2.3.4");
        assert_eq!(a, G::hash_to_group(b"1.2.3.4"));
        let b = G::hash_to_group(b"1.2.3.5");
        assert_ne!(G::encode_to_vec(&a), G::encode_to_vec(&b));
        let enc = G::encode_to_vec(&a);
        assert_eq!(enc.len(), G::ELEMENT_LEN);
        assert_eq!(G::decode(&enc).unwrap(), a);
    }

    #[test]
    fn ristretto_blinding_commutes() {
        blinding_roundtrip::<Ristretto255>();
    }

    #[test]
    fn ristretto_hash_is_deterministic() {
        deterministic_and_distinct::<Ristretto255>();
    }

    #[test]
    fn ristretto_order_annihilates() {
        // x^(q-1) * x = x^q = identity
        let x = Ristretto255::hash_to_group(b"8.8.8.8");
        let minus_one = -Scalar::ONE;
        assert_eq!(x * minus_one + x, RistrettoPoint::default());
    }

    #[test]
    fn ristretto_rejects_noncanonical() {
        assert!(Ristretto255::decode(&[0xff; 32]).is_err());
        assert!(Ristretto255::decode(&[0u8; 31]).is_err());
    }

    #[test]
    fn modp_constants() {
        let c = modp();
        assert_eq!(c.p.bits(), 2048);
        assert_eq!(&c.q * 2u32 + 1u32, c.p);
    }

    #[test]
    fn modp_blinding_commutes() {
        blinding_roundtrip::<Modp2048>();
    }

    #[test]
    fn modp_hash_lands_in_subgroup() {
        deterministic_and_distinct::<Modp2048>();
        let x = Modp2048::hash_to_group(b"8.8.8.8");
        assert_eq!(
            x.modpow(Modp2048::order(), Modp2048::modulus()),
            BigUint::from(1u32)
        );
    }

    #[test]
    fn modp_rejects_out_of_range() {
        let mut p = Modp2048::modulus().to_bytes_be();
        assert!(Modp2048::decode(&p).is_err());
        p.fill(0);
        assert!(Modp2048::decode(&p).is_err());
        // p - 1 has order 2
        let m1 = Modp2048::modulus() - 1u32;
        let mut enc = Vec::new();
        Modp2048::encode(&m1, &mut enc);
        assert!(Modp2048::decode(&enc).is_err());
    }
}
