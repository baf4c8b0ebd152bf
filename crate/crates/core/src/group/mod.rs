//! Prime-order subgroups of `Z_P^*` for a safe prime `P = 2p + 1`, plus the
//! discrete-log machinery used to read small results out of the exponent.
//!
//! Group elements and exponents are plain [`BigUint`]s. Elements live in
//! `[1, P)`, exponents (scalars) in `[0, p)`.

mod dlog;
mod prime;

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dlog::{build_dlog_table, default_table_bound, dlog_solve, Bsgs, DlogSolver, DlogTable};
pub use dlog::DEFAULT_MAX_TABLE_ENTRIES;
pub use prime::is_probable_prime;

/// Smallest modulus size accepted by [`GroupParams::setup`]. Anything this
/// small is only useful in tests.
pub const MIN_SECURITY_BITS: u32 = 16;

/// Default modulus size.
pub const DEFAULT_SECURITY_BITS: u32 = 2048;

const MILLER_RABIN_ROUNDS: usize = 32;
const SAFE_PRIME_WINDOWS: usize = 10_000;

// RFC 3526 group 14 (2048-bit MODP). P is a safe prime and P = 7 mod 8, so 2
// generates the subgroup of prime order (P - 1) / 2.
const RFC3526_2048_HEX: &str = concat!(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74",
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437",
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED",
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05",
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB",
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B",
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718",
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
);

/// A Schnorr group: the order-`p` subgroup of `Z_P^*` for a safe prime `P`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    modulus: BigUint,
    order: BigUint,
    generator: BigUint,
    generator_inv: BigUint,
    security_bits: u32,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("security_bits", &self.security_bits)
            .field("modulus", &self.modulus.to_str_radix(16))
            .field("generator", &self.generator)
            .finish()
    }
}

impl GroupParams {
    /// Creates a group with a modulus of `security_bits` bits.
    ///
    /// With a seed the safe prime is derived deterministically from it.
    /// Without one, 2048 bits maps to the RFC 3526 group and other sizes are
    /// generated from OS randomness.
    pub fn setup(security_bits: u32, seed: Option<u64>) -> Result<Self> {
        if security_bits < MIN_SECURITY_BITS {
            return Err(Error::Setup(format!(
                "security_bits must be at least {MIN_SECURITY_BITS}, got {security_bits}"
            )));
        }
        match seed {
            None if security_bits == DEFAULT_SECURITY_BITS => Self::rfc3526_2048(),
            None => {
                let mut rng = ChaCha20Rng::from_os_rng();
                Self::generate(security_bits, &mut rng)
            }
            Some(seed) => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                Self::generate(security_bits, &mut rng)
            }
        }
    }

    /// The 2048-bit MODP group from RFC 3526.
    pub fn rfc3526_2048() -> Result<Self> {
        static GROUP: OnceLock<GroupParams> = OnceLock::new();
        if let Some(g) = GROUP.get() {
            return Ok(g.clone());
        }
        let modulus = BigUint::parse_bytes(RFC3526_2048_HEX.as_bytes(), 16)
            .ok_or_else(|| Error::Setup("bad builtin modulus".into()))?;
        let order = (&modulus - 1u32) >> 1;
        let g = Self::from_parts(modulus, order, BigUint::from(2u32))?;
        Ok(GROUP.get_or_init(|| g).clone())
    }

    /// Builds the group for a known safe prime, using 4 = 2^2 as generator.
    pub fn from_safe_prime(modulus: BigUint) -> Result<Self> {
        if modulus < BigUint::from(7u32) {
            return Err(Error::InvalidGroup("modulus too small".into()));
        }
        let order = (&modulus - 1u32) >> 1;
        Self::from_parts(modulus, order, BigUint::from(4u32))
    }

    /// Validates and assembles explicit parameters.
    pub fn from_parts(modulus: BigUint, order: BigUint, generator: BigUint) -> Result<Self> {
        if !is_probable_prime(&modulus, MILLER_RABIN_ROUNDS) {
            return Err(Error::InvalidGroup("modulus is not prime".into()));
        }
        if !is_probable_prime(&order, MILLER_RABIN_ROUNDS) {
            return Err(Error::InvalidGroup("order is not prime".into()));
        }
        if !((&modulus - 1u32) % &order).is_zero() {
            return Err(Error::InvalidGroup("order does not divide modulus - 1".into()));
        }
        if generator <= BigUint::one() || generator >= modulus {
            return Err(Error::InvalidGroup("generator out of range".into()));
        }
        if !generator.modpow(&order, &modulus).is_one() {
            return Err(Error::InvalidGroup("generator does not have the stated order".into()));
        }
        let generator_inv = generator
            .modinv(&modulus)
            .ok_or_else(|| Error::InvalidGroup("generator is not invertible".into()))?;
        let security_bits = modulus.bits() as u32;
        Ok(Self { modulus, order, generator, generator_inv, security_bits })
    }

    fn generate<R: RngCore>(bits: u32, rng: &mut R) -> Result<Self> {
        let modulus = prime::random_safe_prime(bits, rng, SAFE_PRIME_WINDOWS)
            .ok_or_else(|| Error::Setup(format!("no {bits}-bit safe prime found in retry budget")))?;
        Self::from_safe_prime(modulus)
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator
    }

    pub fn security_bits(&self) -> u32 {
        self.security_bits
    }

    /// Size in bytes of a serialized group element.
    pub fn element_bytes(&self) -> usize {
        self.modulus.bits().div_ceil(8) as usize
    }

    /// True if `h` lies in the prime-order subgroup.
    pub fn contains(&self, h: &BigUint) -> bool {
        !h.is_zero() && h < &self.modulus && h.modpow(&self.order, &self.modulus).is_one()
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.modulus
    }

    /// Inverse of a group element.
    pub fn inv(&self, a: &BigUint) -> BigUint {
        a.modinv(&self.modulus).expect("group elements are invertible")
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, &self.modulus)
    }

    /// `base^exp` for a small signed exponent; negative powers go through the inverse.
    pub fn pow_signed(&self, base: &BigUint, exp: i64) -> BigUint {
        let e = BigUint::from(exp.unsigned_abs());
        if exp >= 0 {
            base.modpow(&e, &self.modulus)
        } else {
            self.inv(base).modpow(&e, &self.modulus)
        }
    }

    /// `g^exp`.
    pub fn g_pow(&self, exp: &BigUint) -> BigUint {
        self.generator.modpow(exp, &self.modulus)
    }

    /// `g^exp` for a small signed exponent, using the cached `g^-1`.
    pub fn g_pow_signed(&self, exp: i64) -> BigUint {
        let e = BigUint::from(exp.unsigned_abs());
        if exp >= 0 {
            self.generator.modpow(&e, &self.modulus)
        } else {
            self.generator_inv.modpow(&e, &self.modulus)
        }
    }

    /// `g^e` for any exponent in `[0, order)`; exponents near either end are
    /// evaluated through their short signed representative.
    pub fn g_pow_lifted(&self, exp: &BigUint) -> BigUint {
        match self.lift_signed(exp).to_i64() {
            Some(small) => self.g_pow_signed(small),
            None => self.g_pow(exp),
        }
    }

    /// Uniform scalar in `[0, order)`.
    pub fn random_scalar<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        random_below(&self.order, rng)
    }

    pub fn scalar_add(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + b) % &self.order
    }

    pub fn scalar_mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.order
    }

    /// Reduces a signed integer into `[0, order)`.
    pub fn scalar_from_i64(&self, v: i64) -> BigUint {
        self.reduce(&BigInt::from(v))
    }

    pub fn reduce(&self, v: &BigInt) -> BigUint {
        let q = BigInt::from_biguint(Sign::Plus, self.order.clone());
        let r = ((v % &q) + &q) % &q;
        r.to_biguint().expect("non-negative after reduction")
    }

    /// Centered lift of a scalar to `(-order/2, order/2]`.
    pub fn lift_signed(&self, v: &BigUint) -> BigInt {
        let half = &self.order >> 1;
        let v = v % &self.order;
        if v > half {
            BigInt::from_biguint(Sign::Minus, &self.order - v)
        } else {
            BigInt::from_biguint(Sign::Plus, v)
        }
    }

    pub fn to_toml(&self) -> String {
        let file = GroupParamsFile {
            security_bits: self.security_bits,
            modulus: self.modulus.to_str_radix(10),
            order: self.order.to_str_radix(10),
            generator: self.generator.to_str_radix(10),
        };
        toml::to_string(&file).expect("group params serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: GroupParamsFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("group file: {e}")))?;
        let parse = |name: &str, s: &str| {
            BigUint::parse_bytes(s.trim().as_bytes(), 10)
                .ok_or_else(|| Error::Config(format!("group file: `{name}` is not a decimal integer")))
        };
        let params = Self::from_parts(
            parse("modulus", &file.modulus)?,
            parse("order", &file.order)?,
            parse("generator", &file.generator)?,
        )?;
        if params.security_bits != file.security_bits {
            return Err(Error::Config(format!(
                "group file: security_bits {} does not match a {}-bit modulus",
                file.security_bits, params.security_bits
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// On-disk form of [`GroupParams`]: decimal strings so that any language can read it.
#[derive(Debug, Serialize, Deserialize)]
struct GroupParamsFile {
    security_bits: u32,
    modulus: String,
    order: String,
    generator: String,
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: Rng + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let nbytes = bits.div_ceil(8) as usize;
    let excess = (nbytes as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; nbytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let v = BigUint::from_bytes_be(&buf);
        if &v < bound {
            return v;
        }
    }
}
