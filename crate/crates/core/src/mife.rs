//! Multi-input functional encryption for inner products under DDH, with one
//! input slot per participant.
//!
//! A model vector of length `m` is encrypted as `m` parallel single-element
//! instances sharing the slot's key material, so one function key decrypts
//! every coordinate of the weighted sum at once.
//!
//! With `a = (1, a)`, per-slot `W_i` (1x2) and `u_i`, slot `i` encrypts a
//! coordinate `x` with nonce `r` as
//!
//! ```text
//! t = (g^r, g^{a r}),   c = g^{x + u_i + (W_i a) r}
//! ```
//!
//! and a key for `y` is `d_i = y_i W_i`, `z = sum y_i u_i`. Decryption computes
//! `prod c_i^{y_i} / (prod t_i^{d_i} * g^z) = g^{<x, y>}` and takes the dlog.
//!
//! [`NonceMode::Shared`] draws one nonce for the whole vector. It is much
//! cheaper but `c_j / c_k = g^{x_j - x_k}` for any two coordinates of the same
//! ciphertext, so intra-vector differences are exposed to the aggregator.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixedpoint::EncodedVector;
use crate::group::{DlogSolver, GroupParams};
use crate::wire::{self, Reader};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonceMode {
    /// A fresh nonce per coordinate.
    #[default]
    #[serde(alias = "fresh")]
    PerCoordinate,
    /// One nonce per ciphertext, reused across all coordinates.
    Shared,
}

impl NonceMode {
    fn tag(self) -> u8 {
        match self {
            NonceMode::PerCoordinate => 0,
            NonceMode::Shared => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(NonceMode::PerCoordinate),
            1 => Ok(NonceMode::Shared),
            t => Err(Error::Wire(format!("unknown nonce mode tag {t}"))),
        }
    }
}

impl fmt::Display for NonceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonceMode::PerCoordinate => "fresh",
            NonceMode::Shared => "shared",
        })
    }
}

impl FromStr for NonceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" | "per-coordinate" => Ok(NonceMode::PerCoordinate),
            "shared" => Ok(NonceMode::Shared),
            other => Err(Error::Argument(format!("unknown nonce mode `{other}` (fresh|shared)"))),
        }
    }
}

/// Master public and secret key material for `capacity` slots.
#[derive(Clone)]
pub struct MasterKeys {
    params: GroupParams,
    a: BigUint,
    a_exp: [BigUint; 2],
    wa_exp: Vec<BigUint>,
    w: Vec<[BigUint; 2]>,
    u: Vec<BigUint>,
}

impl fmt::Debug for MasterKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKeys").field("capacity", &self.capacity()).finish_non_exhaustive()
    }
}

impl MasterKeys {
    pub fn setup<R: RngCore>(params: &GroupParams, capacity: usize, rng: &mut R) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Argument("capacity must be at least 1".into()));
        }
        let a = params.random_scalar(rng);
        let a_exp = [params.generator().clone(), params.g_pow(&a)];
        let mut w = Vec::with_capacity(capacity);
        let mut u = Vec::with_capacity(capacity);
        for _ in 0..capacity {
            w.push([params.random_scalar(rng), params.random_scalar(rng)]);
            u.push(params.random_scalar(rng));
        }
        let wa_exp = w
            .par_iter()
            .map(|wi| params.g_pow(&params.scalar_add(&wi[0], &params.scalar_mul(&wi[1], &a))))
            .collect();
        Ok(Self { params: params.clone(), a, a_exp, wa_exp, w, u })
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn capacity(&self) -> usize {
        self.u.len()
    }

    /// `[a] = (g, g^a)`.
    pub fn a_exp(&self) -> &[BigUint; 2] {
        &self.a_exp
    }

    /// `[W_i a]` for every slot.
    pub fn wa_exp(&self) -> &[BigUint] {
        &self.wa_exp
    }

    pub fn secret_a(&self) -> &BigUint {
        &self.a
    }

    pub fn secret_w(&self, slot: usize) -> Option<&[BigUint; 2]> {
        self.w.get(slot)
    }

    pub fn secret_u(&self, slot: usize) -> Option<&BigUint> {
        self.u.get(slot)
    }

    /// Public key for a slot, independent of any assignment bookkeeping.
    pub fn share_for_slot(&self, slot: usize) -> Result<PublicKeyShare> {
        if slot >= self.capacity() {
            return Err(Error::NoSlot { capacity: self.capacity() });
        }
        Ok(PublicKeyShare {
            slot_index: slot,
            params: self.params.clone(),
            a_exp: self.a_exp.clone(),
            wa_exp: self.wa_exp[slot].clone(),
            u: self.u[slot].clone(),
        })
    }

    /// Looks up (or assigns) the participant's slot and returns its key.
    pub fn pk_distribute(&self, slots: &mut SlotAssignments, participant_id: &str) -> Result<PublicKeyShare> {
        let slot = slots.assign(participant_id)?;
        self.share_for_slot(slot)
    }

    /// Function key for the weight vector `y`, indexed by slot.
    pub fn sk_generate(&self, y: &[i64]) -> Result<FunctionKey> {
        if y.len() > self.capacity() {
            return Err(Error::Dimension { expected: self.capacity(), actual: y.len() });
        }
        let p = &self.params;
        let mut d = Vec::with_capacity(y.len());
        let mut z = BigUint::zero();
        for (i, &yi) in y.iter().enumerate() {
            let ys = p.scalar_from_i64(yi);
            d.push([p.scalar_mul(&ys, &self.w[i][0]), p.scalar_mul(&ys, &self.w[i][1])]);
            z = p.scalar_add(&z, &p.scalar_mul(&ys, &self.u[i]));
        }
        Ok(FunctionKey { d, z, weights: y.to_vec() })
    }

    /// SHA-256 over all key material, for detecting any change.
    pub fn digest(&self) -> [u8; 32] {
        let mut buf = Vec::new();
        wire::put_uint(&mut buf, &self.a);
        for e in &self.a_exp {
            wire::put_uint(&mut buf, e);
        }
        for ((wi, ui), wa) in self.w.iter().zip(&self.u).zip(&self.wa_exp) {
            wire::put_uint(&mut buf, &wi[0]);
            wire::put_uint(&mut buf, &wi[1]);
            wire::put_uint(&mut buf, ui);
            wire::put_uint(&mut buf, wa);
        }
        Sha256::digest(&buf).into()
    }
}

/// Same as [`MasterKeys::setup`].
pub fn mife_setup<R: RngCore>(params: &GroupParams, capacity: usize, rng: &mut R) -> Result<MasterKeys> {
    MasterKeys::setup(params, capacity, rng)
}

/// Participant id to slot mapping. Slots are handed out in order and never reused.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SlotAssignments {
    capacity: usize,
    by_id: BTreeMap<String, usize>,
}

impl SlotAssignments {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, by_id: BTreeMap::new() }
    }

    pub fn assign(&mut self, participant_id: &str) -> Result<usize> {
        if let Some(&slot) = self.by_id.get(participant_id) {
            return Ok(slot);
        }
        let slot = self.by_id.len();
        if slot >= self.capacity {
            return Err(Error::NoSlot { capacity: self.capacity });
        }
        self.by_id.insert(participant_id.to_owned(), slot);
        Ok(slot)
    }

    pub fn slot_of(&self, participant_id: &str) -> Option<usize> {
        self.by_id.get(participant_id).copied()
    }

    pub fn is_assigned(&self, slot: usize) -> bool {
        slot < self.by_id.len()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.by_id.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// A participant's encryption key.
#[derive(Clone, PartialEq, Eq)]
pub struct PublicKeyShare {
    slot_index: usize,
    params: GroupParams,
    a_exp: [BigUint; 2],
    wa_exp: BigUint,
    u: BigUint,
}

impl fmt::Debug for PublicKeyShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKeyShare").field("slot_index", &self.slot_index).finish_non_exhaustive()
    }
}

impl PublicKeyShare {
    pub fn slot_index(&self) -> usize {
        self.slot_index
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn a_exp(&self) -> &[BigUint; 2] {
        &self.a_exp
    }

    pub fn wa_exp(&self) -> &BigUint {
        &self.wa_exp
    }

    pub fn u(&self) -> &BigUint {
        &self.u
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        x: &EncodedVector,
        mode: NonceMode,
        rng: &mut R,
    ) -> Result<SlotCiphertext> {
        let p = &self.params;
        if x.codec().order() != p.order() {
            return Err(Error::Encoding("vector was encoded for a different group order".into()));
        }
        if let Some(bad) = x.coords().iter().position(|c| c >= p.order()) {
            return Err(Error::Encoding(format!("coordinate {bad} is outside [0, order)")));
        }
        let g_u = p.g_pow(&self.u);
        let masked = |xj: &BigUint| p.mul(&p.g_pow_lifted(xj), &g_u);
        let (t_exp, c_exp) = match mode {
            NonceMode::PerCoordinate => {
                let nonces: Vec<BigUint> = (0..x.dim()).map(|_| p.random_scalar(rng)).collect();
                x.coords()
                    .par_iter()
                    .zip(nonces.par_iter())
                    .map(|(xj, r)| {
                        let t = [p.g_pow(r), p.pow(&self.a_exp[1], r)];
                        let c = p.mul(&masked(xj), &p.pow(&self.wa_exp, r));
                        (t, c)
                    })
                    .unzip()
            }
            NonceMode::Shared => {
                let r = p.random_scalar(rng);
                let t = [p.g_pow(&r), p.pow(&self.a_exp[1], &r)];
                let pad = p.pow(&self.wa_exp, &r);
                let c = x.coords().par_iter().map(|xj| p.mul(&masked(xj), &pad)).collect();
                (vec![t], c)
            }
        };
        Ok(SlotCiphertext { slot_index: self.slot_index, mode, t_exp, c_exp })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        wire::put_u32(&mut buf, self.slot_index as u32);
        wire::put_uint(&mut buf, &self.a_exp[0]);
        wire::put_uint(&mut buf, &self.a_exp[1]);
        wire::put_uint(&mut buf, &self.wa_exp);
        wire::put_uint(&mut buf, &self.u);
        buf
    }

    pub fn encoded_len(&self) -> usize {
        4 + wire::uint_len(&self.a_exp[0])
            + wire::uint_len(&self.a_exp[1])
            + wire::uint_len(&self.wa_exp)
            + wire::uint_len(&self.u)
    }

    /// Parses a share; group context travels separately.
    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let slot_index = r.u32()? as usize;
        let a_exp = [r.uint()?, r.uint()?];
        let wa_exp = r.uint()?;
        let u = r.uint()?;
        r.finish()?;
        Ok(Self { slot_index, params: params.clone(), a_exp, wa_exp, u })
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

/// Same as [`PublicKeyShare::encrypt`].
pub fn encrypt<R: RngCore + ?Sized>(
    share: &PublicKeyShare,
    x: &EncodedVector,
    mode: NonceMode,
    rng: &mut R,
) -> Result<SlotCiphertext> {
    share.encrypt(x, mode, rng)
}

/// Key that reveals `sum_i y_i x_i` and nothing else.
#[derive(Clone, PartialEq, Eq)]
pub struct FunctionKey {
    d: Vec<[BigUint; 2]>,
    z: BigUint,
    weights: Vec<i64>,
}

impl fmt::Debug for FunctionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionKey").field("weights", &self.weights).finish_non_exhaustive()
    }
}

impl FunctionKey {
    pub fn d(&self) -> &[[BigUint; 2]] {
        &self.d
    }

    pub fn z(&self) -> &BigUint {
        &self.z
    }

    pub fn weight_vector(&self) -> &[i64] {
        &self.weights
    }

    /// Slots carrying a nonzero weight.
    pub fn active_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights.iter().enumerate().filter(|(_, &w)| w != 0).map(|(i, _)| i)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        wire::put_u32(&mut buf, self.weights.len() as u32);
        for (w, d) in self.weights.iter().zip(&self.d) {
            buf.extend_from_slice(&w.to_be_bytes());
            wire::put_uint(&mut buf, &d[0]);
            wire::put_uint(&mut buf, &d[1]);
        }
        wire::put_uint(&mut buf, &self.z);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        let mut weights = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for _ in 0..n {
            let mut w = [0u8; 8];
            for b in &mut w {
                *b = r.u8()?;
            }
            weights.push(i64::from_be_bytes(w));
            d.push([r.uint()?, r.uint()?]);
        }
        let z = r.uint()?;
        r.finish()?;
        Ok(Self { d, z, weights })
    }

    pub fn encoded_len(&self) -> usize {
        4 + self.d.iter().map(|d| 8 + wire::uint_len(&d[0]) + wire::uint_len(&d[1])).sum::<usize>()
            + wire::uint_len(&self.z)
    }
}

/// Same as [`MasterKeys::sk_generate`].
pub fn sk_generate(keys: &MasterKeys, y: &[i64]) -> Result<FunctionKey> {
    keys.sk_generate(y)
}

/// One participant's encrypted vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotCiphertext {
    slot_index: usize,
    mode: NonceMode,
    t_exp: Vec<[BigUint; 2]>,
    c_exp: Vec<BigUint>,
}

impl SlotCiphertext {
    pub fn slot_index(&self) -> usize {
        self.slot_index
    }

    pub fn mode(&self) -> NonceMode {
        self.mode
    }

    pub fn t_exp(&self) -> &[[BigUint; 2]] {
        &self.t_exp
    }

    pub fn c_exp(&self) -> &[BigUint] {
        &self.c_exp
    }

    pub fn coord_count(&self) -> usize {
        self.c_exp.len()
    }

    /// Number of group elements carried.
    pub fn element_count(&self) -> usize {
        2 * self.t_exp.len() + self.c_exp.len()
    }

    fn check_shape(&self) -> Result<()> {
        let expected = match self.mode {
            NonceMode::PerCoordinate => self.c_exp.len(),
            NonceMode::Shared => 1,
        };
        if self.t_exp.len() != expected {
            return Err(Error::Protocol(format!(
                "slot {} carries {} nonce pairs, {:?} mode needs {expected}",
                self.slot_index,
                self.t_exp.len(),
                self.mode
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        wire::put_u32(&mut buf, self.slot_index as u32);
        buf.push(self.mode.tag());
        wire::put_u32(&mut buf, self.c_exp.len() as u32);
        wire::put_u32(&mut buf, self.t_exp.len() as u32);
        for t in &self.t_exp {
            wire::put_uint(&mut buf, &t[0]);
            wire::put_uint(&mut buf, &t[1]);
        }
        for c in &self.c_exp {
            wire::put_uint(&mut buf, c);
        }
        buf
    }

    pub fn encoded_len(&self) -> usize {
        13 + self.t_exp.iter().map(|t| wire::uint_len(&t[0]) + wire::uint_len(&t[1])).sum::<usize>()
            + self.c_exp.iter().map(wire::uint_len).sum::<usize>()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let slot_index = r.u32()? as usize;
        let mode = NonceMode::from_tag(r.u8()?)?;
        let coord_count = r.u32()? as usize;
        let t_count = r.u32()? as usize;
        // each encoded integer is at least 5 bytes
        if (coord_count + 2 * t_count).saturating_mul(5) > bytes.len() {
            return Err(Error::Wire("declared lengths exceed the buffer".into()));
        }
        let mut t_exp = Vec::with_capacity(t_count);
        for _ in 0..t_count {
            t_exp.push([r.uint()?, r.uint()?]);
        }
        let c_exp = (0..coord_count).map(|_| r.uint()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        let ct = Self { slot_index, mode, t_exp, c_exp };
        ct.check_shape().map_err(|e| Error::Wire(e.to_string()))?;
        Ok(ct)
    }
}

/// Recovers `sum_i y_i x_i[j]` for every coordinate `j`.
///
/// `cts` must hold exactly one ciphertext for every slot with nonzero weight
/// in `fk`, all with the same coordinate count.
pub fn decrypt(cts: &[SlotCiphertext], fk: &FunctionKey, solver: &DlogSolver) -> Result<Vec<i64>> {
    let params = solver.table().params();
    let mut by_slot: HashMap<usize, &SlotCiphertext> = HashMap::with_capacity(cts.len());
    for ct in cts {
        if fk.weights.get(ct.slot_index).copied().unwrap_or(0) == 0 {
            return Err(Error::Protocol(format!("ciphertext for slot {} is not covered by the key", ct.slot_index)));
        }
        if by_slot.insert(ct.slot_index, ct).is_some() {
            return Err(Error::Protocol(format!("duplicate ciphertext for slot {}", ct.slot_index)));
        }
        ct.check_shape()?;
    }
    let active: Vec<usize> = fk.active_slots().collect();
    if let Some(missing) = active.iter().find(|s| !by_slot.contains_key(s)) {
        return Err(Error::Protocol(format!("no ciphertext for weighted slot {missing}")));
    }
    let Some(dim) = cts.first().map(SlotCiphertext::coord_count) else {
        return Ok(Vec::new());
    };
    if cts.iter().any(|ct| ct.coord_count() != dim) {
        return Err(Error::Protocol("ciphertexts disagree on coordinate count".into()));
    }

    let nonce_term = |slot: usize, t: &[BigUint; 2]| {
        let d = &fk.d[slot];
        params.mul(&params.pow(&t[0], &d[0]), &params.pow(&t[1], &d[1]))
    };
    // g^z times the nonce terms that do not vary by coordinate
    let mut fixed = params.g_pow(&fk.z);
    let mut per_coord = Vec::new();
    for &slot in &active {
        let ct = by_slot[&slot];
        match ct.mode {
            NonceMode::Shared => fixed = params.mul(&fixed, &nonce_term(slot, &ct.t_exp[0])),
            NonceMode::PerCoordinate => per_coord.push(ct),
        }
    }
    let fixed_inv = per_coord.is_empty().then(|| params.inv(&fixed));
    let slots: Vec<(&SlotCiphertext, i64)> = active.iter().map(|&s| (by_slot[&s], fk.weights[s])).collect();

    (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut num = BigUint::one();
            for &(ct, y) in &slots {
                let c = &ct.c_exp[j];
                num = if y == 1 { params.mul(&num, c) } else { params.mul(&num, &params.pow_signed(c, y)) };
            }
            let den_inv = match &fixed_inv {
                Some(inv) => inv.clone(),
                None => {
                    let den = per_coord
                        .iter()
                        .fold(fixed.clone(), |acc, ct| params.mul(&acc, &nonce_term(ct.slot_index, &ct.t_exp[j])));
                    params.inv(&den)
                }
            };
            solver.solve(&params.mul(&num, &den_inv))
        })
        .collect()
}

/// Draws `n` uniformly random scalars; handy for building test inputs.
pub fn random_scalars<R: Rng + ?Sized>(params: &GroupParams, n: usize, rng: &mut R) -> Vec<BigUint> {
    (0..n).map(|_| params.random_scalar(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPointCodec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    use crate::group::DlogTable;

    struct Fixture {
        params: GroupParams,
        keys: MasterKeys,
        codec: FixedPointCodec,
        solver: DlogSolver,
        rng: ChaCha8Rng,
    }

    fn fixture(bits: u32, capacity: usize, bound: u64) -> Fixture {
        let params = GroupParams::setup(bits, Some(bits as u64)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let keys = MasterKeys::setup(&params, capacity, &mut rng).unwrap();
        let codec = FixedPointCodec::new(0, params.order().clone()).unwrap();
        let solver = DlogSolver::with_bounds(&params, bound.min(1 << 12), bound).unwrap();
        Fixture { params, keys, codec, solver, rng }
    }

    fn encrypt_all(f: &mut Fixture, xs: &[Vec<i64>], mode: NonceMode) -> Vec<SlotCiphertext> {
        xs.iter()
            .enumerate()
            .map(|(i, x)| {
                let enc = EncodedVector::from_signed(x, &f.codec).unwrap();
                f.keys.share_for_slot(i).unwrap().encrypt(&enc, mode, &mut f.rng).unwrap()
            })
            .collect()
    }

    #[test]
    fn setup_shapes_and_identities() {
        let f = fixture(64, 64, 100);
        assert_eq!(f.keys.capacity(), 64);
        assert_eq!(f.keys.wa_exp().len(), 64);
        let p = &f.params;
        let a = f.keys.secret_a();
        for i in [0, 17, 63] {
            let w = f.keys.secret_w(i).unwrap();
            let wa = p.scalar_add(&w[0], &p.scalar_mul(&w[1], a));
            assert_eq!(&p.g_pow(&wa), &f.keys.wa_exp()[i]);
        }
        assert_eq!(f.keys.a_exp()[0], *p.generator());
    }

    #[test]
    fn setup_is_deterministic_under_seed() {
        let params = GroupParams::setup(64, Some(1)).unwrap();
        let k1 = MasterKeys::setup(&params, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let k2 = MasterKeys::setup(&params, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(k1.digest(), k2.digest());
        assert!(MasterKeys::setup(&params, 0, &mut ChaCha8Rng::seed_from_u64(5)).is_err());
    }

    #[test]
    fn single_slot_degenerates_to_plain_fe() {
        let mut f = fixture(64, 1, 100);
        let cts = encrypt_all(&mut f, &[vec![42, -7]], NonceMode::PerCoordinate);
        let fk = f.keys.sk_generate(&[1]).unwrap();
        assert_eq!(decrypt(&cts, &fk, &f.solver).unwrap(), vec![42, -7]);
    }

    #[test]
    fn pk_distribute_assigns_stable_slots() {
        let f = fixture(64, 64, 10);
        let mut slots = SlotAssignments::new(64);
        let first = f.keys.pk_distribute(&mut slots, "p1").unwrap();
        assert_eq!(first.slot_index(), 0);
        assert_eq!(f.keys.pk_distribute(&mut slots, "p1").unwrap(), first);
        for i in 2..=64 {
            let s = f.keys.pk_distribute(&mut slots, &format!("p{i}")).unwrap();
            assert_eq!(s.slot_index(), i - 1);
        }
        let r = f.keys.pk_distribute(&mut slots, "p65");
        assert!(matches!(r, Err(Error::NoSlot { capacity: 64 })));
        assert_eq!(f.keys.pk_distribute(&mut slots, "p1").unwrap(), first);
    }

    #[test]
    fn sk_generate_examples() {
        let f = fixture(64, 3, 10);
        let p = &f.params;
        let zero = f.keys.sk_generate(&[0, 0, 0]).unwrap();
        assert!(zero.d().iter().all(|d| d[0].is_zero() && d[1].is_zero()));
        assert!(zero.z().is_zero());
        let e1 = f.keys.sk_generate(&[1, 0, 0]).unwrap();
        assert_eq!(&e1.d()[0], f.keys.secret_w(0).unwrap());
        assert_eq!(e1.z(), f.keys.secret_u(0).unwrap());
        let both = f.keys.sk_generate(&[1, 1]).unwrap();
        let expect = p.scalar_add(f.keys.secret_u(0).unwrap(), f.keys.secret_u(1).unwrap());
        assert_eq!(both.z(), &expect);
        let r = f.keys.sk_generate(&[1, 1, 1, 1]);
        assert!(matches!(r, Err(Error::Dimension { expected: 3, actual: 4 })));
    }

    #[test]
    fn decrypt_examples() {
        let mut f = fixture(64, 2, 1000);
        for mode in [NonceMode::PerCoordinate, NonceMode::Shared] {
            let cts = encrypt_all(&mut f, &[vec![3], vec![5]], mode);
            let fk = f.keys.sk_generate(&[1, 1]).unwrap();
            assert_eq!(decrypt(&cts, &fk, &f.solver).unwrap(), vec![8]);

            let zeros = encrypt_all(&mut f, &[vec![0, 0], vec![0, 0]], mode);
            assert_eq!(decrypt(&zeros, &fk, &f.solver).unwrap(), vec![0, 0]);

            let cts = encrypt_all(&mut f, &[vec![7], vec![123]], mode);
            let only_first = f.keys.sk_generate(&[1, 0]).unwrap();
            assert_eq!(decrypt(&cts[..1], &only_first, &f.solver).unwrap(), vec![7]);
        }
    }

    #[test]
    fn decrypt_with_general_weights() {
        let mut f = fixture(64, 3, 10_000);
        let xs = [vec![3, -4], vec![10, 2], vec![-1, 1]];
        let cts = encrypt_all(&mut f, &xs, NonceMode::PerCoordinate);
        let fk = f.keys.sk_generate(&[2, -3, 5]).unwrap();
        let got = decrypt(&cts, &fk, &f.solver).unwrap();
        assert_eq!(got, vec![2 * 3 - 30 - 5, -8 - 6 + 5]);
    }

    #[test]
    fn ciphertext_shapes() {
        let mut f = fixture(64, 1, 10);
        let x = vec![1i64; 4];
        let ct = &encrypt_all(&mut f, std::slice::from_ref(&x), NonceMode::PerCoordinate)[0];
        assert_eq!(ct.t_exp().len(), 4);
        assert_eq!(ct.element_count(), 3 * 4);
        let ct = &encrypt_all(&mut f, &[x], NonceMode::Shared)[0];
        assert_eq!(ct.t_exp().len(), 1);
        assert_eq!(ct.element_count(), 4 + 2);
    }

    #[test]
    fn slot_mismatch_is_a_protocol_error() {
        let mut f = fixture(64, 3, 100);
        let cts = encrypt_all(&mut f, &[vec![1], vec![2], vec![3]], NonceMode::Shared);
        let fk = f.keys.sk_generate(&[1, 1, 0]).unwrap();
        // extra ciphertext for an unweighted slot
        assert!(matches!(decrypt(&cts, &fk, &f.solver), Err(Error::Protocol(_))));
        // missing ciphertext
        assert!(matches!(decrypt(&cts[..1], &fk, &f.solver), Err(Error::Protocol(_))));
        // duplicate slot
        let dup = vec![cts[0].clone(), cts[0].clone()];
        assert!(matches!(decrypt(&dup, &fk, &f.solver), Err(Error::Protocol(_))));
        assert_eq!(decrypt(&cts[..2], &fk, &f.solver).unwrap(), vec![3]);
    }

    #[test]
    fn out_of_bound_sum_surfaces_dlog_error() {
        let mut f = fixture(64, 2, 100);
        let cts = encrypt_all(&mut f, &[vec![90], vec![90]], NonceMode::Shared);
        let fk = f.keys.sk_generate(&[1, 1]).unwrap();
        assert!(matches!(decrypt(&cts, &fk, &f.solver), Err(Error::DlogOutOfRange { .. })));
    }

    #[test]
    fn foreign_encoding_is_rejected() {
        let mut f = fixture(64, 1, 10);
        let other = FixedPointCodec::new(0, BigUint::from(1_000_003u32)).unwrap();
        let enc = other.encode_vector(&[1.0]).unwrap();
        let share = f.keys.share_for_slot(0).unwrap();
        assert!(matches!(share.encrypt(&enc, NonceMode::Shared, &mut f.rng), Err(Error::Encoding(_))));
    }

    #[test]
    fn wire_round_trips() {
        let mut f = fixture(64, 2, 10);
        for mode in [NonceMode::PerCoordinate, NonceMode::Shared] {
            let ct = encrypt_all(&mut f, &[vec![1, -2, 3]], mode).remove(0);
            let bytes = ct.to_bytes();
            assert_eq!(bytes.len(), ct.encoded_len());
            assert_eq!(SlotCiphertext::from_bytes(&bytes).unwrap(), ct);
            assert!(SlotCiphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
        let fk = f.keys.sk_generate(&[1, -1]).unwrap();
        let bytes = fk.to_bytes();
        assert_eq!(bytes.len(), fk.encoded_len());
        assert_eq!(FunctionKey::from_bytes(&bytes).unwrap(), fk);
        let share = f.keys.share_for_slot(1).unwrap();
        assert_eq!(share.to_bytes().len(), share.encoded_len());
        assert_eq!(PublicKeyShare::from_bytes(&f.params, &share.to_bytes()).unwrap(), share);
    }

    #[test]
    fn nonce_mode_parsing() {
        assert_eq!("fresh".parse::<NonceMode>().unwrap(), NonceMode::PerCoordinate);
        assert_eq!("shared".parse::<NonceMode>().unwrap(), NonceMode::Shared);
        assert!("bogus".parse::<NonceMode>().is_err());
        assert_eq!(NonceMode::default(), NonceMode::PerCoordinate);
    }

    #[test]
    fn shared_nonce_exposes_coordinate_differences() {
        let mut f = fixture(64, 1, 10);
        let ct = encrypt_all(&mut f, &[vec![9, 4, -6]], NonceMode::Shared).remove(0);
        let p = &f.params;
        let ratio = p.mul(&ct.c_exp()[0], &p.inv(&ct.c_exp()[1]));
        assert_eq!(ratio, p.g_pow_signed(5));
        let ratio = p.mul(&ct.c_exp()[2], &p.inv(&ct.c_exp()[0]));
        assert_eq!(ratio, p.g_pow_signed(-15));
    }

    #[test]
    fn fresh_nonces_make_coordinate_ratio_uniform() {
        // order-11 subgroup of Z_23^*: the ratio c_0 / c_1 over repeated
        // encryptions of the same plaintext should fill all 11 elements evenly
        let params = GroupParams::from_safe_prime(BigUint::from(23u32)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let keys = MasterKeys::setup(&params, 1, &mut rng).unwrap();
        assert!(!keys.wa_exp()[0].is_one(), "degenerate key; pick another seed");
        let codec = FixedPointCodec::new(0, params.order().clone()).unwrap();
        let x = EncodedVector::from_signed(&[2, -3], &codec).unwrap();
        let share = keys.share_for_slot(0).unwrap();

        let chi_square = |mode: NonceMode, rng: &mut ChaCha8Rng| {
            let samples = 2200;
            let mut counts: HashMap<BigUint, usize> = HashMap::new();
            for _ in 0..samples {
                let ct = share.encrypt(&x, mode, rng).unwrap();
                let ratio = params.mul(&ct.c_exp()[0], &params.inv(&ct.c_exp()[1]));
                *counts.entry(ratio).or_default() += 1;
            }
            let expected = samples as f64 / 11.0;
            let observed: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
            let missing = (11 - counts.len()) as f64 * expected;
            observed + missing
        };
        // 10 degrees of freedom, 0.1% critical value 29.59
        assert!(chi_square(NonceMode::PerCoordinate, &mut rng) < 29.59);
        assert!(chi_square(NonceMode::Shared, &mut rng) > 29.59);
    }

    #[test]
    fn solver_table_may_be_shared() {
        let f = fixture(64, 1, 10);
        let table = Arc::new(DlogTable::build(&f.params, 10).unwrap());
        let a = DlogSolver::new(table.clone(), 10).unwrap();
        let b = DlogSolver::new(table, 10).unwrap();
        assert_eq!(a.solve(&f.params.g_pow_signed(-3)).unwrap(), b.solve(&f.params.g_pow_signed(-3)).unwrap());
    }
}
