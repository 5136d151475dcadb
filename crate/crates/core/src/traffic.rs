//! Two-parameter traffic generator.
//!
//! Social attractors (SAs) are pulled toward their serving base station by
//! `alpha`; UEs are then pulled toward their Euclidean-nearest SA by `beta`.
//! In the enhanced method `beta` is drawn per UE from a normal distribution
//! around `mu_beta`, which keeps some UEs near the edges of the SA cells. With
//! edge bias, UEs are pulled toward the nearest edge of their serving BS cell
//! instead, producing negatively correlated traffic.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::{GeometryChannel, LayoutSpec, NetworkLayout, WeightedCells};
use crate::error::{Error, Result};
use crate::geom::{Point, PointPattern};
use crate::measures::{Measure, Tessellation};
use crate::pointgen;
use crate::rng::{RandomStream, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Basic,
    Enhanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bias {
    Center,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    Ppp,
    Lattice,
}

macro_rules! lowercase_enum_text {
    ($ty:ty { $($variant:ident => $text:literal),+ }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok(<$ty>::$variant),)+
                    other => Err(Error::InvalidParameter(format!(
                        "unknown {} {other:?}", stringify!($ty).to_ascii_lowercase()
                    ))),
                }
            }
        }
    };
}

lowercase_enum_text!(Method { Basic => "basic", Enhanced => "enhanced" });
lowercase_enum_text!(Bias { Center => "center", Edge => "edge" });
lowercase_enum_text!(Initial { Ppp => "ppp", Lattice => "lattice" });

/// Traffic generator input parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tgip {
    pub alpha: f64,
    pub mu_beta: f64,
    pub method: Method,
    pub bias: Bias,
    pub initial: Initial,
}

impl Tgip {
    /// Enhanced method, center bias, Poisson start.
    pub fn new(alpha: f64, mu_beta: f64) -> Self {
        Self {
            alpha,
            mu_beta,
            method: Method::Enhanced,
            bias: Bias::Center,
            initial: Initial::Ppp,
        }
    }

    pub fn with_method(self, method: Method) -> Self {
        Self { method, ..self }
    }

    pub fn with_bias(self, bias: Bias) -> Self {
        Self { bias, ..self }
    }

    pub fn with_initial(self, initial: Initial) -> Self {
        Self { initial, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("mu_beta", self.mu_beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn sigma_beta(&self) -> f64 {
        match self.method {
            Method::Basic => 0.0,
            Method::Enhanced => sigma_beta(self.mu_beta),
        }
    }
}

/// Spread of the per-UE pull factor: zero at `mu_beta` 0 and 1, largest
/// (1/6) at 0.5, so that about 0.1% of draws fall outside `[0, 1]`.
pub fn sigma_beta(mu_beta: f64) -> f64 {
    (0.5 - (mu_beta - 0.5).abs()) / 3.0
}

/// Moves every attractor toward its serving station by `alpha`.
pub fn move_attractors(attractors: &PointPattern, cells: &WeightedCells, alpha: f64) -> Result<PointPattern> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let moved = attractors
        .points()
        .iter()
        .map(|&s| s.toward(cells.position(cells.serving_station(s)), alpha))
        .collect();
    PointPattern::new(moved, *attractors.window())
}

fn nearest(points: &[Point], p: Point) -> Point {
    let mut best = points[0];
    let mut best_d2 = best.dist2(p);
    for &q in &points[1..] {
        let d2 = q.dist2(p);
        if d2 < best_d2 {
            best_d2 = d2;
            best = q;
        }
    }
    best
}

/// Outcome of [`move_ues`].
#[derive(Debug, Clone, PartialEq)]
pub struct MovedUes {
    pub ues: PointPattern,
    /// Number of pull factors that fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
}

/// Pulls every UE toward its target by its pull factor `beta`: the
/// Euclidean-nearest attractor for center bias, the nearest point on its
/// serving BS cell edge for edge bias.
pub fn move_ues<R: Rng + ?Sized>(
    ues: &PointPattern,
    attractors: &PointPattern,
    cells: &WeightedCells,
    tgip: &Tgip,
    rng: &mut R,
) -> Result<MovedUes> {
    tgip.validate()?;
    if tgip.bias == Bias::Center && attractors.is_empty() {
        return Err(Error::EmptyAttractorSet);
    }
    let sigma = tgip.sigma_beta();
    let beta_dist = Normal::new(tgip.mu_beta, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut clamped = 0;
    let mut moved = Vec::with_capacity(ues.len());
    for &u in ues.points() {
        let beta = if sigma > 0.0 {
            let b = beta_dist.sample(rng);
            if !(0.0..=1.0).contains(&b) {
                clamped += 1;
            }
            b.clamp(0.0, 1.0)
        } else {
            tgip.mu_beta
        };
        let target = match tgip.bias {
            Bias::Center => nearest(attractors.points(), u),
            Bias::Edge => cells.nearest_edge_point(u)?,
        };
        moved.push(u.toward(target, beta));
    }
    Ok(MovedUes { ues: PointPattern::new(moved, *ues.window())?, clamped })
}

/// Initial UE pattern with a Poisson-distributed count of mean `mean_ues`.
pub fn initial_ues<R: Rng + ?Sized>(
    initial: Initial,
    mean_ues: f64,
    window: &crate::geom::Window,
    rng: &mut R,
) -> Result<PointPattern> {
    let n = pointgen::poisson_count(mean_ues, rng)?;
    match initial {
        Initial::Ppp => PointPattern::new(pointgen::uniform_points(n, window, rng), *window),
        Initial::Lattice => pointgen::generate_lattice(n.max(4), window),
    }
}

/// One realization of the generator on a given layout.
#[derive(Debug, Clone)]
pub struct Traffic {
    /// The layout with attractors at their moved positions.
    pub layout: NetworkLayout,
    pub ues: PointPattern,
    pub clamped_betas: usize,
}

/// Full pipeline on a fixed layout: initial pattern, attractor move, UE
/// move. UE positions come from the `Ues` substream of `stream`, pull
/// factors from its `Beta` substream.
pub fn generate_traffic(
    layout: &NetworkLayout,
    tgip: &Tgip,
    mean_ues: f64,
    channel: &GeometryChannel,
    stream: &RandomStream,
) -> Result<Traffic> {
    tgip.validate()?;
    let cells = layout.cells(channel);
    let initial = initial_ues(tgip.initial, mean_ues, layout.window(), &mut stream.sub(Substream::Ues).rng())?;
    let attractors = move_attractors(layout.attractors(), &cells, tgip.alpha)?;
    let moved = move_ues(&initial, &attractors, &cells, tgip, &mut stream.sub(Substream::Beta).rng())?;
    Ok(Traffic {
        layout: layout.with_attractors(attractors)?,
        ues: moved.ues,
        clamped_betas: moved.clamped,
    })
}

/// Draws a fresh layout (stations and attractors) from `stream` and
/// generates traffic on it.
pub fn generate_drop(
    spec: &LayoutSpec,
    tgip: &Tgip,
    mean_ues: f64,
    channel: &GeometryChannel,
    stream: &RandomStream,
) -> Result<Traffic> {
    let layout = spec.draw(
        &mut stream.sub(Substream::Layout).rng(),
        &mut stream.sub(Substream::Attractors).rng(),
    )?;
    generate_traffic(&layout, tgip, mean_ues, channel, stream)
}

/// Measured `(C, rho)` of a UE pattern on a layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats {
    #[serde(rename = "C")]
    pub c: f64,
    pub rho: f64,
}

/// Normalized CoV of `measure` (boundary cells excluded) and correlation
/// coefficient with the layout's stations.
pub fn measure_traffic(
    layout: &NetworkLayout,
    ues: &PointPattern,
    measure: Measure,
    channel: &GeometryChannel,
) -> Result<TrafficStats> {
    let c = Tessellation::new(ues)?.normalized_cov(measure, true)?;
    let rho = layout.cells(channel).correlation_coefficient(ues)?;
    Ok(TrafficStats { c, rho })
}

/// Mean raw and normalized CoV of each measure at one `mu_beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovProfileRow {
    pub alpha: f64,
    pub mu_beta: f64,
    pub measure: Measure,
    pub cov: f64,
    pub normalized_cov: f64,
    pub se_normalized_cov: f64,
    pub drops: usize,
}

/// CoV of every measure against `mu_beta` at fixed `alpha`, averaged over
/// `drops` drops (boundary cells excluded). Drop `k` uses
/// `RandomStream::new(seed).child(k)` at every `mu_beta`.
#[allow(clippy::too_many_arguments)]
pub fn cov_profile(
    spec: &LayoutSpec,
    alpha: f64,
    betas: &[f64],
    method: Method,
    mean_ues: f64,
    channel: &GeometryChannel,
    drops: usize,
    seed: u64,
) -> Result<Vec<CovProfileRow>> {
    use rayon::prelude::*;
    if drops < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 drops, got {drops}")));
    }
    let master = RandomStream::new(seed);
    let per_drop: Vec<Vec<(f64, f64)>> = (0..betas.len() * drops)
        .into_par_iter()
        .map(|job| {
            let tgip = Tgip::new(alpha, betas[job / drops]).with_method(method);
            let t = generate_drop(spec, &tgip, mean_ues, channel, &master.child((job % drops) as u64))?;
            let tess = Tessellation::new(&t.ues)?;
            Measure::ALL
                .iter()
                .map(|&m| Ok((tess.stats(m, true)?.cov, tess.normalized_cov(m, true)?)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (b, &mu_beta) in betas.iter().enumerate() {
        let chunk = &per_drop[b * drops..(b + 1) * drops];
        for (k, &measure) in Measure::ALL.iter().enumerate() {
            let n = drops as f64;
            let cov = chunk.iter().map(|d| d[k].0).sum::<f64>() / n;
            let norm = chunk.iter().map(|d| d[k].1).sum::<f64>() / n;
            let var = chunk.iter().map(|d| (d[k].1 - norm).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(CovProfileRow {
                alpha,
                mu_beta,
                measure,
                cov,
                normalized_cov: norm,
                se_normalized_cov: (var / n).sqrt(),
                drops,
            });
        }
    }
    Ok(rows)
}
