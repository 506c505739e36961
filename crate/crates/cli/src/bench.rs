//! LFA benchmark: a correctness gate over all implementations, then
//! interleaved timing repetitions.

use std::fmt::Write as _;
use std::time::Instant;

use rgk_core::cloud::{generate_scene, SceneSpec};
use rgk_core::lfa::{build_neighbor_index, run_lfa, transient_bytes, LfaMethod};
use rgk_core::nn::{LinearLayer, Matrix};
use rgk_core::rng::Rng;
use rgk_core::{Error, Result};

use crate::num::sig9;

/// Largest element-wise deviation from the traversal output the gate accepts.
pub const GATE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub sizes: Vec<usize>,
    pub c_raw: usize,
    pub channels: usize,
    pub radius: f64,
    pub reps: usize,
    pub seed: u64,
    pub mem_cap: u64,
    pub methods: Vec<LfaMethod>,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("need at least one size and one method".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.c_raw == 0 || self.channels == 0 {
            return Err(Error::InvalidConfig("c_raw and channels must be positive".into()));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    /// The implementation refused to run under the memory cap.
    OomGuard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: LfaMethod,
    pub n: usize,
    pub pairs: usize,
    pub reps: usize,
    /// Wall times in milliseconds; empty for OOM-guard rows.
    pub times_ms: Vec<f64>,
    pub mem_bytes: u64,
    pub checksum: Option<u64>,
    pub max_abs_diff: Option<f64>,
    pub status: RowStatus,
}

impl BenchRow {
    pub fn mean_ms(&self) -> Option<f64> {
        (!self.times_ms.is_empty()).then(|| self.times_ms.iter().sum::<f64>() / self.times_ms.len() as f64)
    }

    pub fn median_ms(&self) -> Option<f64> {
        percentile(&self.times_ms, 0.5)
    }

    pub fn p95_ms(&self) -> Option<f64> {
        percentile(&self.times_ms, 0.95)
    }
}

/// Nearest-rank percentile; the median of an even count averages the two
/// middle values.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if q == 0.5 {
        let m = v.len() / 2;
        return Some(if v.len().is_multiple_of(2) {
            0.5 * (v[m - 1] + v[m])
        } else {
            v[m]
        });
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// FNV-1a over the IEEE-754 bits of every output element.
pub fn checksum(m: &Matrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in m.as_slice() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateFailure {
    pub method: LfaMethod,
    pub n: usize,
    pub max_abs_diff: f64,
}

pub fn bench_cloud(spec: &BenchSpec, n: usize) -> Result<rgk_core::cloud::PointCloud> {
    let mut scene = SceneSpec::new(spec.seed, n);
    scene.c_raw = spec.c_raw;
    generate_scene(&scene)
}

pub fn bench_layer(spec: &BenchSpec) -> LinearLayer {
    LinearLayer::init(
        spec.c_raw + 3,
        spec.channels,
        true,
        &mut Rng::seed_from_u64(spec.seed ^ 0x4c46_4121),
    )
}

/// Runs the gate for every size, then times the methods. Returns `Err` only
/// for invalid input; gate failures come back in the second slot and no
/// timing is performed for that size.
pub fn run_bench(spec: &BenchSpec) -> Result<(BenchReport, Vec<GateFailure>)> {
    spec.validate()?;
    let layer = bench_layer(spec);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &spec.sizes {
        let cloud = bench_cloud(spec, n)?;
        let pairs = build_neighbor_index(&cloud, spec.radius)?.len();
        let reference = run_lfa(LfaMethod::Traversal, &cloud, &layer, spec.radius, spec.mem_cap)?;
        let mut size_rows = Vec::new();
        for &method in &spec.methods {
            let mem_bytes = transient_bytes(method, n, spec.c_raw, spec.channels, pairs);
            let mut row = BenchRow {
                method,
                n,
                pairs,
                reps: 0,
                times_ms: Vec::new(),
                mem_bytes,
                checksum: None,
                max_abs_diff: None,
                status: RowStatus::Ok,
            };
            match run_lfa(method, &cloud, &layer, spec.radius, spec.mem_cap) {
                Ok(out) => {
                    let diff = out.max_abs_diff(&reference);
                    if !(diff <= GATE_TOLERANCE) {
                        failures.push(GateFailure {
                            method,
                            n,
                            max_abs_diff: diff,
                        });
                    }
                    row.checksum = Some(checksum(&out));
                    row.max_abs_diff = Some(diff);
                }
                Err(Error::AllocationLimit { requested, .. }) => {
                    row.status = RowStatus::OomGuard;
                    row.mem_bytes = requested;
                }
                Err(e) => return Err(e),
            }
            size_rows.push(row);
        }
        if failures.iter().any(|f| f.n == n) {
            rows.extend(size_rows);
            continue;
        }
        // steady state: one untimed call per method, then its timed run, so a
        // method never pays for the cache and heap state another one left
        for row in size_rows.iter_mut().filter(|r| r.status == RowStatus::Ok) {
            std::hint::black_box(run_lfa(row.method, &cloud, &layer, spec.radius, spec.mem_cap)?);
            for _ in 0..spec.reps {
                let start = Instant::now();
                let out = run_lfa(row.method, &cloud, &layer, spec.radius, spec.mem_cap)?;
                row.times_ms.push(start.elapsed().as_secs_f64() * 1e3);
                std::hint::black_box(out);
                row.reps += 1;
            }
        }
        rows.extend(size_rows);
    }
    Ok((BenchReport { rows }, failures))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, sig9)
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,n,pairs,reps,mean_ms,median_ms,p95_ms,mem_bytes,checksum,max_abs_diff,status\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.n,
                r.pairs,
                r.reps,
                opt(r.mean_ms()),
                opt(r.median_ms()),
                opt(r.p95_ms()),
                r.mem_bytes,
                r.checksum.map_or_else(String::new, |c| format!("{c:016x}")),
                opt(r.max_abs_diff),
                status_str(&r.status),
            )
            .expect("write to String");
        }
        out
    }

    /// Human-readable table, rows of each size ranked by median time.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<15} {:>6} {:>8} {:>5} {:>12} {:>12} {:>12} {:>14} {:>16}  {}\n",
            "method", "n", "pairs", "reps", "mean_ms", "median_ms", "p95_ms", "mem_bytes", "checksum", "status"
        );
        let mut sizes: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        sizes.dedup();
        for n in sizes {
            let mut rows: Vec<&BenchRow> = self.rows.iter().filter(|r| r.n == n).collect();
            rows.sort_by(|a, b| {
                let key = |r: &BenchRow| r.median_ms().unwrap_or(f64::INFINITY);
                key(a).total_cmp(&key(b))
            });
            for r in rows {
                writeln!(
                    out,
                    "{:<15} {:>6} {:>8} {:>5} {:>12} {:>12} {:>12} {:>14} {:>16}  {}",
                    r.method.name(),
                    r.n,
                    r.pairs,
                    r.reps,
                    opt(r.mean_ms()),
                    opt(r.median_ms()),
                    opt(r.p95_ms()),
                    r.mem_bytes,
                    r.checksum.map_or_else(|| "-".into(), |c| format!("{c:016x}")),
                    status_str(&r.status),
                )
                .expect("write to String");
            }
        }
        out
    }

    pub fn row(&self, method: LfaMethod, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }
}

fn status_str(s: &RowStatus) -> &'static str {
    match s {
        RowStatus::Ok => "ok",
        RowStatus::OomGuard => "OOM-guard",
    }
}
