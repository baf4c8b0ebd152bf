//! Small discrete logarithms: a precomputed lookup table over `[-b, b]` with
//! a baby-step giant-step fallback for wider windows.
//!
//! Tables are keyed by a 64-bit hash of the element rather than the full
//! element, so a 2^21-entry table over a 2048-bit group
//! costs tens of megabytes instead of gigabytes. Every fingerprint hit is
//! confirmed by recomputing `g^f` before it is returned.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use rayon::prelude::*;

use super::GroupParams;
use crate::error::{Error, Result};

/// Default cap on table entries (about 80 MB of index).
pub const DEFAULT_MAX_TABLE_ENTRIES: u64 = 1 << 22;

const BUILD_CHUNK: i64 = 1 << 15;

// Hashes every limb: with a small generator such as 4, the powers g^f stay
// unreduced for small f and share their low limbs.
fn fingerprint(h: &BigUint) -> u64 {
    let mut s = DefaultHasher::new();
    h.hash(&mut s);
    s.finish()
}

#[derive(Clone, Default)]
struct FingerprintIndex {
    primary: HashMap<u64, i64>,
    // additional values whose fingerprint was already taken
    overflow: HashMap<u64, Vec<i64>>,
}

impl FingerprintIndex {
    fn with_capacity(n: usize) -> Self {
        Self { primary: HashMap::with_capacity(n), overflow: HashMap::new() }
    }

    fn insert(&mut self, fp: u64, value: i64) {
        if let Some(&existing) = self.primary.get(&fp) {
            if existing != value {
                self.overflow.entry(fp).or_default().push(value);
            }
        } else {
            self.primary.insert(fp, value);
        }
    }

    fn candidates(&self, fp: u64) -> impl Iterator<Item = i64> + '_ {
        self.primary
            .get(&fp)
            .copied()
            .into_iter()
            .chain(self.overflow.get(&fp).into_iter().flatten().copied())
    }

    fn len(&self) -> usize {
        self.primary.len() + self.overflow.values().map(Vec::len).sum::<usize>()
    }
}

/// Lookup table for `g^f -> f` over `f` in `[-bound, bound]`.
#[derive(Clone)]
pub struct DlogTable {
    params: GroupParams,
    bound: Option<u64>,
    index: FingerprintIndex,
}

impl std::fmt::Debug for DlogTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DlogTable").field("bound", &self.bound).field("len", &self.len()).finish()
    }
}

impl DlogTable {
    pub fn build(params: &GroupParams, bound: u64) -> Result<Self> {
        Self::build_with_cap(params, bound, DEFAULT_MAX_TABLE_ENTRIES)
    }

    pub fn build_with_cap(params: &GroupParams, bound: u64, max_entries: u64) -> Result<Self> {
        let requested = bound.checked_mul(2).and_then(|v| v.checked_add(1)).unwrap_or(u64::MAX);
        if requested > max_entries || bound > i64::MAX as u64 / 4 {
            return Err(Error::Capacity { requested, cap: max_entries });
        }
        let lo = -(bound as i64);
        let hi = bound as i64;
        let starts: Vec<i64> = (lo..=hi).step_by(BUILD_CHUNK as usize).collect();
        let chunks: Vec<Vec<(u64, i64)>> = starts
            .par_iter()
            .map(|&start| {
                let end = (start + BUILD_CHUNK - 1).min(hi);
                let mut h = params.g_pow_signed(start);
                let mut out = Vec::with_capacity((end - start + 1) as usize);
                for f in start..=end {
                    out.push((fingerprint(&h), f));
                    h = params.mul(&h, params.generator());
                }
                out
            })
            .collect();
        let mut index = FingerprintIndex::with_capacity(requested as usize);
        for (fp, f) in chunks.into_iter().flatten() {
            index.insert(fp, f);
        }
        Ok(Self { params: params.clone(), bound: Some(bound), index })
    }

    /// A table with no entries; every solve goes to the fallback.
    pub fn empty(params: &GroupParams) -> Self {
        Self { params: params.clone(), bound: None, index: FingerprintIndex::default() }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn base(&self) -> &BigUint {
        self.params.generator()
    }

    /// `None` for an empty table.
    pub fn bound(&self) -> Option<u64> {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bound.is_none()
    }

    /// Exponent of `h`, if tabulated. When the table wraps around the group
    /// order several exponents match; the one of least magnitude wins.
    pub fn lookup(&self, h: &BigUint) -> Option<i64> {
        self.index
            .candidates(fingerprint(h))
            .filter(|&f| &self.params.g_pow_signed(f) == h)
            .min_by_key(|f| (f.unsigned_abs(), *f < 0))
    }
}

/// Same as [`DlogTable::build`].
pub fn build_dlog_table(params: &GroupParams, bound: u64) -> Result<DlogTable> {
    DlogTable::build(params, bound)
}

/// Table bound covering a per-coordinate sum of `max_responders` values of
/// magnitude `clip_value` at `precision` decimal digits, rounded up to a
/// power of two.
pub fn default_table_bound(max_responders: u64, precision: u32, clip_value: f64) -> u64 {
    let raw = (max_responders as f64) * 10f64.powi(precision as i32) * clip_value;
    (raw.ceil().max(1.0) as u64).next_power_of_two()
}

/// Standalone baby-step giant-step over `[-bound, bound]`, solved as a
/// non-negative instance for `f + bound` in `[0, 2 bound]`.
#[derive(Clone)]
pub struct Bsgs {
    params: GroupParams,
    bound: u64,
    step: u64,
    baby: FingerprintIndex,
    giant: BigUint,
    shift: BigUint,
}

impl Bsgs {
    pub fn new(params: &GroupParams, bound: u64) -> Result<Self> {
        Self::with_cap(params, bound, DEFAULT_MAX_TABLE_ENTRIES)
    }

    pub fn with_cap(params: &GroupParams, bound: u64, max_entries: u64) -> Result<Self> {
        if bound > i64::MAX as u64 / 4 {
            return Err(Error::Capacity { requested: u64::MAX, cap: max_entries });
        }
        let width = 2 * bound + 1;
        let step = ((width as f64).sqrt().ceil() as u64).max(1);
        if step > max_entries {
            return Err(Error::Capacity { requested: step, cap: max_entries });
        }
        let mut baby = FingerprintIndex::with_capacity(step as usize);
        let mut h = BigUint::one();
        for j in 0..step {
            baby.insert(fingerprint(&h), j as i64);
            h = params.mul(&h, params.generator());
        }
        let giant = params.inv(&h);
        let shift = params.g_pow(&BigUint::from(bound));
        Ok(Self { params: params.clone(), bound, step, baby, giant, shift })
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn solve(&self, h: &BigUint) -> Option<i64> {
        let total = 2 * self.bound;
        let mut gamma = self.params.mul(h, &self.shift);
        for i in 0..=total / self.step {
            for j in self.baby.candidates(fingerprint(&gamma)) {
                let e = i * self.step + j as u64;
                if e <= total {
                    let f = e as i64 - self.bound as i64;
                    if &self.params.g_pow_signed(f) == h {
                        return Some(f);
                    }
                }
            }
            gamma = self.params.mul(&gamma, &self.giant);
        }
        None
    }
}

/// How the solver covers exponents outside the table.
#[derive(Clone)]
enum Fallback {
    /// The table itself covers the whole window.
    None,
    /// Giant steps of width `2b + 1` with the table as the baby-step set.
    TableGiantSteps { width: u64, step_down: BigUint, step_up: BigUint },
    Bsgs(Arc<Bsgs>),
}

/// A table plus a fallback window, prepared once and shared by all
/// decryptions of a run.
#[derive(Clone)]
pub struct DlogSolver {
    table: Arc<DlogTable>,
    fallback_bound: u64,
    fallback: Fallback,
}

impl std::fmt::Debug for DlogSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DlogSolver")
            .field("table", &self.table)
            .field("fallback_bound", &self.fallback_bound)
            .finish()
    }
}

impl DlogSolver {
    pub fn new(table: Arc<DlogTable>, fallback_bound: u64) -> Result<Self> {
        let fallback = match table.bound() {
            Some(b) if b >= fallback_bound => Fallback::None,
            Some(b) => {
                let width = 2 * b + 1;
                let giant_steps = fallback_bound / width + 1;
                if giant_steps <= width {
                    let params = table.params();
                    let step_up = params.g_pow(&BigUint::from(width));
                    let step_down = params.inv(&step_up);
                    Fallback::TableGiantSteps { width, step_down, step_up }
                } else {
                    Fallback::Bsgs(Arc::new(Bsgs::new(table.params(), fallback_bound)?))
                }
            }
            None => Fallback::Bsgs(Arc::new(Bsgs::new(table.params(), fallback_bound)?)),
        };
        Ok(Self { table, fallback_bound, fallback })
    }

    /// Builds a table of `table_bound` and a solver over `fallback_bound`.
    pub fn with_bounds(params: &GroupParams, table_bound: u64, fallback_bound: u64) -> Result<Self> {
        Self::new(Arc::new(DlogTable::build(params, table_bound)?), fallback_bound.max(table_bound))
    }

    pub fn table(&self) -> &DlogTable {
        &self.table
    }

    pub fn fallback_bound(&self) -> u64 {
        self.fallback_bound
    }

    pub fn solve(&self, h: &BigUint) -> Result<i64> {
        if let Some(f) = self.table.lookup(h) {
            return Ok(f);
        }
        let found = match &self.fallback {
            Fallback::None => None,
            Fallback::Bsgs(bsgs) => bsgs.solve(h),
            Fallback::TableGiantSteps { width, step_down, step_up } => {
                self.giant_steps(h, *width, step_down, step_up)
            }
        };
        found
            .filter(|f| f.unsigned_abs() <= self.fallback_bound)
            .ok_or(Error::DlogOutOfRange { bound: self.fallback_bound })
    }

    fn giant_steps(&self, h: &BigUint, width: u64, step_down: &BigUint, step_up: &BigUint) -> Option<i64> {
        let params = self.table.params();
        let mut down = h.clone();
        let mut up = h.clone();
        let mut k = 0i64;
        // f = k * width + r with r inside the table
        while (k as u64).saturating_mul(width) <= self.fallback_bound + width {
            k += 1;
            down = params.mul(&down, step_down);
            if let Some(r) = self.table.lookup(&down) {
                return Some(k * width as i64 + r);
            }
            up = params.mul(&up, step_up);
            if let Some(r) = self.table.lookup(&up) {
                return Some(-k * width as i64 + r);
            }
        }
        None
    }
}

/// Table lookup first, then baby-step giant-step over `[-fallback_bound, fallback_bound]`.
pub fn dlog_solve(h: &BigUint, table: &DlogTable, fallback_bound: u64) -> Result<i64> {
    if let Some(f) = table.lookup(h) {
        return Ok(f);
    }
    if table.bound().is_some_and(|b| b >= fallback_bound) {
        return Err(Error::DlogOutOfRange { bound: fallback_bound });
    }
    Bsgs::new(table.params(), fallback_bound)?
        .solve(h)
        .ok_or(Error::DlogOutOfRange { bound: fallback_bound })
}
