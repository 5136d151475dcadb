//! Look-up tables from generator parameters `(alpha, mu_beta)` to traffic
//! statistics `(C, rho)`, and their inversion.
//!
//! Node statistics are Monte Carlo means over independent drops. Drop `k`
//! uses the same random stream at every node, so neighbouring nodes differ
//! only through the parameters. The surfaces are then smoothed by 2D
//! isotonic regression and interpolated bilinearly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::{GeometryChannel, LayoutSpec};
use crate::error::{Error, Result};
use crate::io::content_hash;
use crate::measures::Measure;
use crate::rng::RandomStream;
use crate::traffic::{self, Bias, Initial, Method, Tgip, TrafficStats};

pub const MIN_RESOLUTION: usize = 5;
pub const MIN_DROPS: usize = 30;

/// Distance in `(C, rho)` below which a target counts as attained.
pub const FEASIBILITY_TOLERANCE: f64 = 0.02;

/// Distance in `(C, rho)` within which two candidate inversions are
/// considered equally good.
pub const TIE_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Nodes per axis.
    pub resolution: usize,
    pub drops: usize,
    pub mean_ues: f64,
    pub measure: Measure,
    pub method: Method,
    pub initial: Initial,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            resolution: 11,
            drops: 100,
            mean_ues: 1000.0,
            measure: Measure::VoronoiArea,
            method: Method::Enhanced,
            initial: Initial::Ppp,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least {MIN_RESOLUTION}, got {}",
                self.resolution
            )));
        }
        if self.drops < MIN_DROPS {
            return Err(Error::InvalidParameter(format!(
                "drops per node must be at least {MIN_DROPS}, got {}",
                self.drops
            )));
        }
        if !(self.mean_ues >= 4.0) {
            return Err(Error::InvalidParameter(format!("mean UE count too small: {}", self.mean_ues)));
        }
        Ok(())
    }
}

/// `n` evenly spaced nodes covering `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub seed: u64,
    pub drops: usize,
    pub measure: Measure,
    pub layout_hash: String,
    /// Hash of the layout spec together with the calibration config.
    pub config_hash: String,
    pub initial: Initial,
    pub method: Method,
    pub mean_ues: f64,
}

/// Calibration surfaces indexed `[alpha][beta]`. `C` and `rho` hold the
/// smoothed values used for interpolation; the raw node means are kept
/// alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub grid_alpha: Vec<f64>,
    pub grid_beta: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    #[serde(rename = "se_C")]
    pub se_c: Vec<Vec<f64>>,
    pub se_rho: Vec<Vec<f64>>,
    #[serde(rename = "C_raw")]
    pub c_raw: Vec<Vec<f64>>,
    pub rho_raw: Vec<Vec<f64>>,
    pub meta: TableMeta,
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sweeps the `(alpha, mu_beta)` grid. Work is spread over the current
/// rayon pool; results do not depend on the number of threads.
pub fn build_calibration(
    spec: &LayoutSpec,
    config: &CalibrationConfig,
    channel: &GeometryChannel,
) -> Result<CalibrationTable> {
    config.validate()?;
    spec.validate()?;
    let n = config.resolution;
    let grid = unit_grid(n);
    let master = RandomStream::new(config.seed);
    let drops = config.drops;

    let stats: Vec<TrafficStats> = (0..n * n * drops)
        .into_par_iter()
        .map(|job| {
            let (node, drop) = (job / drops, job % drops);
            let tgip = Tgip {
                alpha: grid[node / n],
                mu_beta: grid[node % n],
                method: config.method,
                bias: Bias::Center,
                initial: config.initial,
            };
            let stream = master.child(drop as u64);
            let t = traffic::generate_drop(spec, &tgip, config.mean_ues, channel, &stream)?;
            traffic::measure_traffic(&t.layout, &t.ues, config.measure, channel)
        })
        .collect::<Result<_>>()?;

    let mut c_raw = vec![vec![0.0; n]; n];
    let mut rho_raw = vec![vec![0.0; n]; n];
    let mut se_c = vec![vec![0.0; n]; n];
    let mut se_rho = vec![vec![0.0; n]; n];
    for node in 0..n * n {
        let chunk = &stats[node * drops..(node + 1) * drops];
        let (i, j) = (node / n, node % n);
        (c_raw[i][j], se_c[i][j]) = mean_and_se(chunk.iter().map(|s| s.c));
        (rho_raw[i][j], se_rho[i][j]) = mean_and_se(chunk.iter().map(|s| s.rho));
    }

    Ok(CalibrationTable {
        grid_alpha: grid.clone(),
        grid_beta: grid,
        c: isotonic_2d(&c_raw),
        rho: isotonic_2d(&rho_raw),
        se_c,
        se_rho,
        c_raw,
        rho_raw,
        meta: TableMeta {
            seed: config.seed,
            drops,
            measure: config.measure,
            layout_hash: content_hash(spec)?,
            config_hash: content_hash(&(spec, config))?,
            initial: config.initial,
            method: config.method,
            mean_ues: config.mean_ues,
        },
    })
}

/// Least-squares non-decreasing fit of a sequence (pool adjacent violators).
pub fn isotonic_1d(values: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 <= s1 / n1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    blocks.into_iter().flat_map(|(s, n)| std::iter::repeat_n(s / n as f64, n)).collect()
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m[0].len()).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

fn rows_isotonic(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| isotonic_1d(r)).collect()
}

fn cols_isotonic(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    transpose(&rows_isotonic(&transpose(m)))
}

fn zip_with(a: &[Vec<f64>], b: &[Vec<f64>], f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| f(x, y)).collect())
        .collect()
}

/// Least-squares fit of a matrix that is non-decreasing along rows and
/// columns, by Dykstra's alternating projections onto the two monotone
/// cones. A final running maximum removes residual violations of order of
/// the convergence tolerance.
pub fn isotonic_2d(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if values.is_empty() || values[0].is_empty() {
        return values.to_vec();
    }
    let zeros = vec![vec![0.0; values[0].len()]; values.len()];
    let mut x = values.to_vec();
    let (mut p, mut q) = (zeros.clone(), zeros);
    for _ in 0..10_000 {
        let y = rows_isotonic(&zip_with(&x, &p, |a, b| a + b));
        p = zip_with(&zip_with(&x, &p, |a, b| a + b), &y, |a, b| a - b);
        let next = cols_isotonic(&zip_with(&y, &q, |a, b| a + b));
        q = zip_with(&zip_with(&y, &q, |a, b| a + b), &next, |a, b| a - b);
        let change = x
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    for i in 0..x.len() {
        for j in 0..x[i].len() {
            let mut v = x[i][j];
            if i > 0 {
                v = v.max(x[i - 1][j]);
            }
            if j > 0 {
                v = v.max(x[i][j - 1]);
            }
            x[i][j] = v;
        }
    }
    x
}

/// Largest monotonicity violation along either axis (0 for a monotone
/// surface).
pub fn max_monotonicity_violation(m: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.len() {
        for j in 0..m[i].len() {
            if i + 1 < m.len() {
                worst = worst.max(m[i][j] - m[i + 1][j]);
            }
            if j + 1 < m[i].len() {
                worst = worst.max(m[i][j] - m[i][j + 1]);
            }
        }
    }
    worst
}

fn locate(grid: &[f64], v: f64) -> (usize, f64) {
    let v = v.clamp(grid[0], grid[grid.len() - 1]);
    let k = grid.partition_point(|&g| g <= v).clamp(1, grid.len() - 1) - 1;
    let t = (v - grid[k]) / (grid[k + 1] - grid[k]);
    (k, t)
}

fn bilinear(m: &[Vec<f64>], (i, s): (usize, f64), (j, t): (usize, f64)) -> f64 {
    let a = m[i][j] * (1.0 - t) + m[i][j + 1] * t;
    let b = m[i + 1][j] * (1.0 - t) + m[i + 1][j + 1] * t;
    a * (1.0 - s) + b * s
}

/// Dense samples per axis used for feasibility bins and the coarse
/// inversion search.
const DENSE: usize = 201;
const RHO_BINS: usize = 50;

impl CalibrationTable {
    pub fn resolution(&self) -> usize {
        self.grid_alpha.len()
    }

    /// Smoothed `(C, rho)` at `(alpha, mu_beta)` by bilinear interpolation.
    pub fn predict(&self, alpha: f64, mu_beta: f64) -> (f64, f64) {
        let a = locate(&self.grid_alpha, alpha);
        let b = locate(&self.grid_beta, mu_beta);
        (bilinear(&self.c, a, b), bilinear(&self.rho, a, b))
    }

    fn tgip(&self, alpha: f64, mu_beta: f64) -> Tgip {
        Tgip { alpha, mu_beta, method: self.meta.method, bias: Bias::Center, initial: self.meta.initial }
    }

    fn images(&self) -> Vec<(f64, f64)> {
        let g = unit_grid(DENSE);
        g.iter().flat_map(|&a| g.iter().map(move |&b| (a, b))).map(|(a, b)| self.predict(a, b)).collect()
    }

    pub fn feasible(&self) -> FeasibleRegion {
        FeasibleRegion::from_images(&self.images())
    }

    /// The `(alpha, mu_beta)` minimizing the squared distance between the
    /// interpolated statistics and the target, with its image. Candidates
    /// within [`TIE_TOLERANCE`] of the best distance count as ties, which go
    /// to the smaller `alpha`, then the smaller `mu_beta`.
    pub fn best_match(&self, c: f64, rho: f64) -> ((f64, f64), (f64, f64)) {
        let dist = |(a, b): (f64, f64)| {
            let (pc, pr) = self.predict(a, b);
            (pc - c).hypot(pr - rho)
        };
        let coarse: Vec<(f64, f64)> = {
            let g = unit_grid(DENSE);
            g.iter().flat_map(|&a| g.iter().map(move |&b| (a, b))).collect()
        };
        let mut best = coarse[0];
        let mut best_d = dist(best);
        for &p in &coarse[1..] {
            let d = dist(p);
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        let mut span = 1.0 / (DENSE - 1) as f64;
        for _ in 0..4 {
            let (a0, b0) = best;
            for ia in -10..=10 {
                for ib in -10..=10 {
                    let p = (
                        (a0 + span * ia as f64 / 10.0).clamp(0.0, 1.0),
                        (b0 + span * ib as f64 / 10.0).clamp(0.0, 1.0),
                    );
                    let d = dist(p);
                    if d < best_d {
                        best_d = d;
                        best = p;
                    }
                }
            }
            span /= 10.0;
        }
        // Coarse nodes are in (alpha, beta) lexicographic order.
        if let Some(&p) = coarse.iter().find(|&&p| p < best && dist(p) <= best_d + TIE_TOLERANCE) {
            best = p;
        }
        (best, self.predict(best.0, best.1))
    }

    /// Generator parameters attaining `(c, rho)`, or `Infeasible` with the
    /// nearest attainable statistics.
    pub fn invert(&self, c: f64, rho: f64) -> Result<Tgip> {
        let ((a, b), (pc, pr)) = self.best_match(c, rho);
        if (pc - c).hypot(pr - rho) > FEASIBILITY_TOLERANCE {
            return Err(Error::Infeasible { c, rho, nearest: (pc, pr) });
        }
        Ok(self.tgip(a, b))
    }
}

/// Attainable `C` interval per `rho` bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub rho_min: f64,
    pub rho_max: f64,
    pub c_lo: Vec<f64>,
    pub c_hi: Vec<f64>,
}

impl FeasibleRegion {
    pub fn from_images(images: &[(f64, f64)]) -> Self {
        let rho_min = images.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let rho_max = images.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut c_lo = vec![f64::INFINITY; RHO_BINS];
        let mut c_hi = vec![f64::NEG_INFINITY; RHO_BINS];
        let mut region = Self { rho_min, rho_max, c_lo: Vec::new(), c_hi: Vec::new() };
        for &(c, rho) in images {
            let k = region.bin(rho);
            c_lo[k] = c_lo[k].min(c);
            c_hi[k] = c_hi[k].max(c);
        }
        region.c_lo = c_lo;
        region.c_hi = c_hi;
        region
    }

    fn bin(&self, rho: f64) -> usize {
        let span = self.rho_max - self.rho_min;
        if span <= 0.0 {
            return 0;
        }
        (((rho - self.rho_min) / span * RHO_BINS as f64) as usize).min(RHO_BINS - 1)
    }

    /// Center of bin `k`.
    pub fn bin_center(&self, k: usize) -> f64 {
        self.rho_min + (k as f64 + 0.5) * (self.rho_max - self.rho_min) / RHO_BINS as f64
    }

    /// Attainable `[min C, max C]` at `rho`.
    pub fn c_interval(&self, rho: f64) -> Result<(f64, f64)> {
        if !(rho >= self.rho_min && rho <= self.rho_max) {
            return Err(Error::RhoOutOfRange { rho, lo: self.rho_min, hi: self.rho_max });
        }
        let k = self.bin(rho);
        Ok((self.c_lo[k], self.c_hi[k]))
    }

    pub fn contains(&self, c: f64, rho: f64) -> bool {
        let tol = FEASIBILITY_TOLERANCE;
        let rho = if rho < self.rho_min && rho >= self.rho_min - tol {
            self.rho_min
        } else if rho > self.rho_max && rho <= self.rho_max + tol {
            self.rho_max
        } else {
            rho
        };
        match self.c_interval(rho) {
            Ok((lo, hi)) => c >= lo - tol && c <= hi + tol,
            Err(_) => false,
        }
    }

    /// Targets on a grid inside the region: for each `rho` fraction of the
    /// attainable `rho` range, the given fractions of that bin's `C`
    /// interval.
    pub fn spread_targets(&self, rho_fractions: &[f64], c_fractions: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &fr in rho_fractions {
            let rho = self.rho_min + fr * (self.rho_max - self.rho_min);
            if let Ok((lo, hi)) = self.c_interval(rho) {
                if lo.is_finite() {
                    out.extend(c_fractions.iter().map(|&fc| (lo + fc * (hi - lo), rho)));
                }
            }
        }
        out
    }

    /// Rows `(rho_center, c_lo, c_hi)` for non-empty bins.
    pub fn boundary(&self) -> Vec<(f64, f64, f64)> {
        (0..self.c_lo.len())
            .filter(|&k| self.c_lo[k].is_finite())
            .map(|k| (self.bin_center(k), self.c_lo[k], self.c_hi[k]))
            .collect()
    }
}

/// Poisson-start and lattice-start tables. Targets below `C = 1` are
/// inverted on the lattice table, the rest on the Poisson table; if the
/// preferred table cannot attain a target the other one is tried.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub ppp: Option<CalibrationTable>,
    pub lattice: Option<CalibrationTable>,
}

impl CalibrationSet {
    pub fn new(tables: Vec<CalibrationTable>) -> Result<Self> {
        let mut set = Self { ppp: None, lattice: None };
        for t in tables {
            let slot = match t.meta.initial {
                Initial::Ppp => &mut set.ppp,
                Initial::Lattice => &mut set.lattice,
            };
            if slot.is_some() {
                return Err(Error::InvalidParameter(format!("two calibration tables with initial={}", t.meta.initial)));
            }
            *slot = Some(t);
        }
        if set.ppp.is_none() && set.lattice.is_none() {
            return Err(Error::InvalidParameter("no calibration table given".into()));
        }
        Ok(set)
    }

    pub fn tables(&self) -> impl Iterator<Item = &CalibrationTable> {
        self.ppp.iter().chain(self.lattice.iter())
    }

    pub fn feasible(&self) -> FeasibleRegion {
        let images: Vec<_> = self.tables().flat_map(|t| t.images()).collect();
        FeasibleRegion::from_images(&images)
    }

    pub fn invert(&self, c: f64, rho: f64) -> Result<Tgip> {
        let (first, second) = if c < 1.0 { (&self.lattice, &self.ppp) } else { (&self.ppp, &self.lattice) };
        let mut nearest: Option<(f64, (f64, f64))> = None;
        for table in [first, second].into_iter().flatten() {
            match table.invert(c, rho) {
                Ok(t) => return Ok(t),
                Err(Error::Infeasible { nearest: n, .. }) => {
                    let d = (n.0 - c).hypot(n.1 - rho);
                    if nearest.is_none_or(|(best, _)| d < best) {
                        nearest = Some((d, n));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Infeasible { c, rho, nearest: nearest.expect("at least one table").1 })
    }
}

/// Desired versus measured statistics for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripRow {
    #[serde(rename = "target_C")]
    pub target_c: f64,
    pub target_rho: f64,
    pub alpha: f64,
    pub mu_beta: f64,
    pub initial: Initial,
    #[serde(rename = "measured_C")]
    pub measured_c: f64,
    pub measured_rho: f64,
    #[serde(rename = "se_C")]
    pub se_c: f64,
    pub se_rho: f64,
    pub drops: usize,
}

/// Inverts every target and measures `drops` fresh drops of the resulting
/// generator parameters. Infeasible targets are returned as errors in
/// place.
#[allow(clippy::too_many_arguments)]
pub fn roundtrip(
    set: &CalibrationSet,
    targets: &[(f64, f64)],
    spec: &LayoutSpec,
    measure: Measure,
    mean_ues: f64,
    channel: &GeometryChannel,
    drops: usize,
    seed: u64,
) -> Result<Vec<Result<RoundtripRow>>> {
    if drops < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 drops, got {drops}")));
    }
    let master = RandomStream::new(seed);
    let mut rows = Vec::with_capacity(targets.len());
    for &(c, rho) in targets {
        let tgip = match set.invert(c, rho) {
            Ok(t) => t,
            Err(e @ Error::Infeasible { .. }) => {
                rows.push(Err(e));
                continue;
            }
            Err(e) => return Err(e),
        };
        let stats: Vec<TrafficStats> = (0..drops)
            .into_par_iter()
            .map(|k| {
                let t = traffic::generate_drop(spec, &tgip, mean_ues, channel, &master.child(k as u64))?;
                traffic::measure_traffic(&t.layout, &t.ues, measure, channel)
            })
            .collect::<Result<_>>()?;
        let (mc, sc) = mean_and_se(stats.iter().map(|s| s.c));
        let (mr, sr) = mean_and_se(stats.iter().map(|s| s.rho));
        rows.push(Ok(RoundtripRow {
            target_c: c,
            target_rho: rho,
            alpha: tgip.alpha,
            mu_beta: tgip.mu_beta,
            initial: tgip.initial,
            measured_c: mc,
            measured_rho: mr,
            se_c: sc,
            se_rho: sr,
            drops,
        }));
    }
    Ok(rows)
}
