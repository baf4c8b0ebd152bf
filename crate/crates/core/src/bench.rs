//! Encryption and decryption micro-benchmarks over participant and precision sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{EncodedVector, FixedPointCodec};
use crate::group::{DlogSolver, GroupParams};
use crate::mife::{decrypt, FunctionKey, MasterKeys, NonceMode, PublicKeyShare, SlotCiphertext};

pub const BENCH_HEADER: [&str; 7] =
    ["participants", "dim", "precision", "enc_avg_s", "dec_s", "ct_bytes_initial", "ct_bytes_subsequent"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchOp {
    Enc,
    Dec,
    Dlog,
    #[default]
    EndToEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub operation: BenchOp,
    pub participants: Vec<usize>,
    pub dim: usize,
    pub precision: Vec<u32>,
    /// At least 3; the median is reported.
    pub repetitions: usize,
    pub mode: NonceMode,
    /// Plaintext coordinates are drawn uniformly from `[-value_range, value_range]`.
    pub value_range: f64,
    pub table_bound: u64,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            operation: BenchOp::EndToEnd,
            participants: vec![2, 4, 8, 16],
            dim: 1000,
            precision: vec![6],
            repetitions: 3,
            mode: NonceMode::PerCoordinate,
            value_range: 1.0,
            table_bound: 1 << 17,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub participants: usize,
    pub dim: usize,
    pub precision: u32,
    pub enc_avg_s: f64,
    pub dec_s: f64,
    pub ct_bytes_initial: usize,
    /// Always zero: decryption needs no further ciphertext traffic.
    pub ct_bytes_subsequent: usize,
}

pub fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

/// Runs every `(participants, precision)` combination on one worker thread.
/// Repetitions are interleaved across combinations, in a fresh random order
/// each round, so that drift in machine speed affects every row alike.
pub fn run_bench(spec: &BenchSpec, params: &GroupParams) -> Result<Vec<BenchRow>> {
    if spec.repetitions < 3 {
        return Err(Error::Argument(format!("repetitions must be at least 3, got {}", spec.repetitions)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut cases = Vec::new();
        for &n in &spec.participants {
            if n == 0 {
                continue;
            }
            for &p in &spec.precision {
                cases.push(Case::prepare(spec, params, n, p)?);
            }
        }
        let mut order: Vec<usize> = (0..cases.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.repetitions {
            order.shuffle(&mut rng);
            for &i in &order {
                cases[i].run_once(spec, params)?;
            }
        }
        Ok(cases.into_iter().map(|c| c.finish(spec.dim)).collect())
    })
}

struct Case {
    participants: usize,
    precision: u32,
    rng: ChaCha20Rng,
    inputs: Vec<EncodedVector>,
    shares: Vec<PublicKeyShare>,
    fk: FunctionKey,
    solver: DlogSolver,
    enc_times: Vec<f64>,
    dec_times: Vec<f64>,
    ct_bytes: usize,
}

impl Case {
    fn prepare(spec: &BenchSpec, params: &GroupParams, n: usize, precision: u32) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed ^ ((n as u64) << 32) ^ precision as u64);
        let keys = MasterKeys::setup(params, n, &mut rng)?;
        let codec = FixedPointCodec::new(precision, params.order().clone())?;
        let inputs = (0..n)
            .map(|_| {
                let v: Vec<f64> =
                    (0..spec.dim).map(|_| rng.random_range(-spec.value_range..=spec.value_range)).collect();
                codec.encode_vector(&v)
            })
            .collect::<Result<_>>()?;
        let shares = (0..n).map(|i| keys.share_for_slot(i)).collect::<Result<_>>()?;
        let fk = keys.sk_generate(&vec![1; n])?;
        let fallback = (n as f64 * spec.value_range * codec.scale() as f64).ceil() as u64 + 1;
        let solver = DlogSolver::with_bounds(params, spec.table_bound.min(fallback), fallback)?;
        Ok(Self {
            participants: n,
            precision,
            rng,
            inputs,
            shares,
            fk,
            solver,
            enc_times: Vec::new(),
            dec_times: Vec::new(),
            ct_bytes: 0,
        })
    }

    fn run_once(&mut self, spec: &BenchSpec, params: &GroupParams) -> Result<()> {
        let n = self.participants;
        let started = Instant::now();
        let cts: Vec<SlotCiphertext> = self
            .shares
            .iter()
            .zip(&self.inputs)
            .map(|(s, x)| s.encrypt(x, spec.mode, &mut self.rng))
            .collect::<Result<_>>()?;
        self.enc_times.push(started.elapsed().as_secs_f64() / n as f64);
        self.ct_bytes = cts.iter().map(SlotCiphertext::encoded_len).sum();

        if spec.operation != BenchOp::Enc {
            let started = Instant::now();
            if spec.operation == BenchOp::Dlog {
                for x in &self.inputs {
                    for c in x.coords() {
                        self.solver.solve(&params.g_pow_lifted(c))?;
                    }
                }
            } else {
                decrypt(&cts, &self.fk, &self.solver)?;
            }
            self.dec_times.push(started.elapsed().as_secs_f64());
        }
        Ok(())
    }

    fn finish(mut self, dim: usize) -> BenchRow {
        BenchRow {
            participants: self.participants,
            dim,
            precision: self.precision,
            enc_avg_s: median(&mut self.enc_times),
            dec_s: if self.dec_times.is_empty() { 0.0 } else { median(&mut self.dec_times) },
            ct_bytes_initial: self.ct_bytes,
            ct_bytes_subsequent: 0,
        }
    }
}

/// Writes the header even when there are no rows.
pub fn write_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Machine description stored next to timing results.
pub fn hardware_metadata() -> Vec<(String, String)> {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("model name")).map(|l| l.split(':').nth(1).unwrap_or("").trim().to_owned()))
        .unwrap_or_else(|| "unknown".into());
    vec![
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("cpu".into(), cpu),
        (
            "available_parallelism".into(),
            std::thread::available_parallelism().map_or("unknown".into(), |n| n.to_string()),
        ),
        ("bench_threads".into(), "1".into()),
        ("crate_version".into(), env!("CARGO_PKG_VERSION").into()),
    ]
}

pub fn write_hardware_metadata(path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for (k, v) in hardware_metadata() {
        writeln!(f, "{k} = {v:?}")?;
    }
    Ok(())
}
