//! Received-power cell membership, the cell potential field and the UE-BS
//! correlation coefficient.
//!
//! Cells here are geometric: membership uses a deterministic log-distance
//! law with no shadowing, so each station owns a fixed multiplicatively
//! weighted Voronoi region. The potential at a point `p` served by station
//! `s` is `1 - 2 d^2 / D^2`, where `d = |p - s|` and `D` is the distance from
//! `s` along the ray through `p` to the cell edge (or the window edge). It is
//! `+1` at the station, `-1` on the cell edge, and integrates to zero over
//! every cell. Macro cells with pico cells inside them are not star-shaped;
//! see [`WeightedCells::potential`] for how rays crossing such holes are
//! handled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, PointPattern, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Macro,
    Pico,
    Femto,
}

impl Tier {
    pub fn default_tx_power_dbm(self) -> f64 {
        match self {
            Tier::Macro => 37.0,
            Tier::Pico => 17.0,
            Tier::Femto => 20.0,
        }
    }
}

/// BS boresight gain, applied isotropically (omni antennas).
pub const DEFAULT_BS_GAIN_DBI: f64 = 17.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Point,
    pub tier: Tier,
    pub tx_power_dbm: f64,
    pub antenna_gain_dbi: f64,
}

impl BaseStation {
    pub fn new(position: Point, tier: Tier) -> Self {
        Self {
            position,
            tier,
            tx_power_dbm: tier.default_tx_power_dbm(),
            antenna_gain_dbi: DEFAULT_BS_GAIN_DBI,
        }
    }

    pub fn eirp_dbm(&self) -> f64 {
        self.tx_power_dbm + self.antenna_gain_dbi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    stations: Vec<BaseStation>,
    attractors: PointPattern,
}

impl NetworkLayout {
    pub fn new(stations: Vec<BaseStation>, attractors: PointPattern) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one station".into()));
        }
        let window = *attractors.window();
        for s in &stations {
            if !window.contains(s.position) {
                return Err(Error::InvalidParameter(format!(
                    "station at ({}, {}) lies outside the window",
                    s.position.x, s.position.y
                )));
            }
            if !s.tx_power_dbm.is_finite() || !s.antenna_gain_dbi.is_finite() {
                return Err(Error::InvalidParameter("station power must be finite".into()));
            }
        }
        Ok(Self { stations, attractors })
    }

    pub fn stations(&self) -> &[BaseStation] {
        &self.stations
    }

    pub fn attractors(&self) -> &PointPattern {
        &self.attractors
    }

    pub fn window(&self) -> &Window {
        self.attractors.window()
    }

    pub fn with_attractors(&self, attractors: PointPattern) -> Result<Self> {
        Self::new(self.stations.clone(), attractors)
    }

    /// Geometric cells of this layout under `channel`.
    pub fn cells(&self, channel: &GeometryChannel) -> WeightedCells {
        WeightedCells::new(&self.stations, *self.window(), channel)
    }
}

/// Deterministic path-loss law used for cell geometry:
/// `PL(d) = intercept + 10 * exponent * log10(d / 1 m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryChannel {
    pub exponent: f64,
    pub intercept_db: f64,
}

impl GeometryChannel {
    pub fn for_carrier_ghz(carrier_ghz: f64) -> Self {
        Self {
            exponent: 3.67,
            intercept_db: 22.7 + 26.0 * carrier_ghz.log10(),
        }
    }

    pub fn path_loss_db(&self, d: f64) -> f64 {
        self.intercept_db + 10.0 * self.exponent * d.max(1e-9).log10()
    }
}

impl Default for GeometryChannel {
    fn default() -> Self {
        Self::for_carrier_ghz(2.5)
    }
}

/// Cell membership predicate for a fixed set of stations.
///
/// Comparing received powers `eirp_k - PL(d_k)` is equivalent to comparing
/// `d_k^2 * 10^(-eirp_k / (5 * exponent))`, which avoids a logarithm per
/// station.
#[derive(Debug, Clone)]
pub struct WeightedCells {
    positions: Vec<Point>,
    eirp_dbm: Vec<f64>,
    scale: Vec<f64>,
    window: Window,
    channel: GeometryChannel,
    step: f64,
}

/// Bisection iterations after the march brackets a crossing.
const BISECTION_STEPS: usize = 40;

/// Ray directions searched for the nearest cell-edge point.
pub const EDGE_SEARCH_RAYS: usize = 64;

impl WeightedCells {
    pub fn new(stations: &[BaseStation], window: Window, channel: &GeometryChannel) -> Self {
        let eirp_dbm: Vec<f64> = stations.iter().map(BaseStation::eirp_dbm).collect();
        let top = eirp_dbm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = eirp_dbm
            .iter()
            .map(|e| 10f64.powf(-(e - top) / (5.0 * channel.exponent)))
            .collect();
        Self {
            positions: stations.iter().map(|s| s.position).collect(),
            eirp_dbm,
            scale,
            window,
            channel: *channel,
            step: (window.width() / 500.0).min(5.0),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, station: usize) -> Point {
        self.positions[station]
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Received power from `station` at `p` under the geometry channel.
    pub fn received_power_dbm(&self, station: usize, p: Point) -> f64 {
        self.eirp_dbm[station] - self.channel.path_loss_db(self.positions[station].dist(p))
    }

    /// Index of the station with the highest received power at `p`; ties go
    /// to the lowest index.
    pub fn serving_station(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_key = f64::INFINITY;
        for (k, (&s, &c)) in self.positions.iter().zip(&self.scale).enumerate() {
            let key = s.dist2(p) * c;
            if key < best_key {
                best_key = key;
                best = k;
            }
        }
        best
    }

    fn direction(from: Point, through: Point) -> (f64, f64) {
        let (dx, dy) = (through.x - from.x, through.y - from.y);
        let len = dx.hypot(dy);
        if len > 0.0 {
            (dx / len, dy / len)
        } else {
            (1.0, 0.0)
        }
    }

    /// The parts of the ray from `serving` in direction `dir` that lie in
    /// its cell, up to the window edge.
    ///
    /// Along the ray `q(t) = s + t u`, station `k` beats the serving station
    /// where `c_k |q(t) - b_k|^2 < c_s t^2`, a quadratic inequality in `t`.
    /// Stronger or equal stations take over on a half-line, after which the
    /// serving station never regains the ray; weaker stations carve out
    /// bounded holes.
    pub fn ray_segments(&self, serving: usize, dir: (f64, f64)) -> Result<RaySegments> {
        if serving >= self.len() {
            return Err(Error::IndexOutOfRange { index: serving, len: self.len() });
        }
        let origin = self.positions[serving];
        let cs = self.scale[serving];
        let mut end = self.window.exit_distance(origin, dir);
        let mut holes: Vec<(f64, f64)> = Vec::new();
        for (k, (&b, &ck)) in self.positions.iter().zip(&self.scale).enumerate() {
            if k == serving {
                continue;
            }
            let (ox, oy) = (origin.x - b.x, origin.y - b.y);
            let c0 = ck * (ox * ox + oy * oy);
            if c0 == 0.0 {
                if ck < cs || (ck == cs && k < serving) {
                    return Err(Error::NumericalNonConvergence(format!(
                        "station {serving} shares its position with a station that wins there"
                    )));
                }
                continue;
            }
            let a = ck - cs;
            let bq = 2.0 * ck * (dir.0 * ox + dir.1 * oy);
            if a == 0.0 {
                if bq < 0.0 {
                    end = end.min(c0 / -bq);
                }
            } else if a < 0.0 {
                // One positive root; the competitor wins beyond it.
                let disc = (bq * bq - 4.0 * a * c0).sqrt();
                let root = if bq <= 0.0 { 2.0 * c0 / (disc - bq) } else { (-bq - disc) / (2.0 * a) };
                end = end.min(root);
            } else if bq < 0.0 {
                let disc = bq * bq - 4.0 * a * c0;
                if disc > 0.0 {
                    let q = 0.5 * (-bq + disc.sqrt());
                    let (lo, hi) = (c0 / q, q / a);
                    holes.push((lo.min(hi), lo.max(hi)));
                }
            }
        }
        holes.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut segments = Vec::with_capacity(holes.len() + 1);
        let mut start = 0.0;
        for (lo, hi) in holes {
            if lo >= end {
                break;
            }
            if lo > start {
                segments.push((start, lo));
            }
            start = start.max(hi);
            if start >= end {
                break;
            }
        }
        if start < end {
            segments.push((start, end));
        }
        Ok(RaySegments { segments })
    }

    /// Distance from `serving`'s position along the ray through `p` to the
    /// first point where another station takes over, or to the window edge.
    /// When `p` coincides with the station the ray points along +x.
    pub fn boundary_distance(&self, p: Point, serving: usize) -> Result<f64> {
        if serving >= self.len() {
            return Err(Error::IndexOutOfRange { index: serving, len: self.len() });
        }
        let dir = Self::direction(self.positions[serving], p);
        Ok(self.ray_segments(serving, dir)?.first_exit())
    }

    /// [`boundary_distance`](Self::boundary_distance) computed by marching
    /// the membership predicate in steps of `min(5 m, width / 500)` and
    /// bisecting the first bracketed change. It does not use the closed form
    /// of the path-loss law, so it serves as an independent check; it can
    /// step over holes thinner than the march step.
    pub fn boundary_distance_marched(&self, p: Point, serving: usize) -> Result<f64> {
        if serving >= self.len() {
            return Err(Error::IndexOutOfRange { index: serving, len: self.len() });
        }
        let origin = self.positions[serving];
        let dir = Self::direction(origin, p);
        let at = |t: f64| Point::new(origin.x + t * dir.0, origin.y + t * dir.1);
        if self.serving_station(origin) != serving {
            return Err(Error::NumericalNonConvergence(format!(
                "station {serving} does not own its own position"
            )));
        }
        let exit = self.window.exit_distance(origin, dir);
        let mut inside = 0.0;
        loop {
            let t = (inside + self.step).min(exit);
            if self.serving_station(at(t)) != serving {
                let mut lo = inside;
                let mut hi = t;
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if self.serving_station(at(mid)) == serving {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if hi - lo > 1e-3 {
                    return Err(Error::NumericalNonConvergence(format!(
                        "bracket [{lo}, {hi}] did not shrink below 1e-3 m"
                    )));
                }
                return Ok(0.5 * (lo + hi));
            }
            if t >= exit {
                return Ok(exit);
            }
            inside = t;
        }
    }

    /// Potential value of `p` with respect to its serving station.
    ///
    /// With `m(r)` the integral of `t dt` over the in-cell parts of the ray
    /// up to `r`, the value is `1 - 2 m(d) / m(end)`. On a ray that stays in
    /// the cell until its edge at `D` this is exactly `1 - 2 d^2 / D^2`; on
    /// rays that pass through a hole left by a weaker station it keeps the
    /// cell integral at zero.
    pub fn potential(&self, p: Point) -> Result<Potential> {
        let serving = self.serving_station(p);
        let origin = self.positions[serving];
        let d = origin.dist(p);
        if d == 0.0 {
            return Ok(Potential::MAX);
        }
        let segments = self.ray_segments(serving, Self::direction(origin, p))?;
        let total = segments.radial_mass(f64::INFINITY);
        if total <= 0.0 {
            return Err(Error::NumericalNonConvergence(format!(
                "ray from station {serving} through ({}, {}) has no extent",
                p.x, p.y
            )));
        }
        Ok(Potential::clamped(1.0 - 2.0 * segments.radial_mass(d) / total))
    }

    /// Mean potential over the points of `ues`.
    pub fn correlation_coefficient(&self, ues: &PointPattern) -> Result<f64> {
        if ues.is_empty() {
            return Err(Error::EmptyPattern);
        }
        let mut sum = 0.0;
        for &u in ues.points() {
            sum += self.potential(u)?.get();
        }
        Ok(sum / ues.len() as f64)
    }

    /// Point on the edge of `p`'s serving cell closest to `p`, searched over
    /// [`EDGE_SEARCH_RAYS`] rays from the station, the first of which passes
    /// through `p`. Every end of an in-cell ray segment counts as an edge
    /// point, including the window edge.
    pub fn nearest_edge_point(&self, p: Point) -> Result<Point> {
        let serving = self.serving_station(p);
        let origin = self.positions[serving];
        let (c0, s0) = Self::direction(origin, p);
        let mut best = origin;
        let mut best_d2 = f64::INFINITY;
        for k in 0..EDGE_SEARCH_RAYS {
            let phi = std::f64::consts::TAU * k as f64 / EDGE_SEARCH_RAYS as f64;
            let (s, c) = phi.sin_cos();
            let dir = (c0 * c - s0 * s, s0 * c + c0 * s);
            let segments = self.ray_segments(serving, dir)?;
            for t in segments.edges() {
                let q = Point::new(origin.x + t * dir.0, origin.y + t * dir.1);
                let d2 = q.dist2(p);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = q;
                }
            }
        }
        Ok(Point::new(
            best.x.clamp(self.window.x_min, self.window.x_max),
            best.y.clamp(self.window.y_min, self.window.y_max),
        ))
    }

    /// Monte Carlo mean of the potential over the cell of `station`, with its
    /// standard error. Samples are uniform in a box around the cell and
    /// rejected unless `station` serves them.
    pub fn cell_potential_integral<R: Rng + ?Sized>(
        &self,
        station: usize,
        n_samples: usize,
        rng: &mut R,
    ) -> Result<CellIntegral> {
        if n_samples < MIN_INTEGRAL_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "n_samples must be at least {MIN_INTEGRAL_SAMPLES}, got {n_samples}"
            )));
        }
        if station >= self.len() {
            return Err(Error::IndexOutOfRange { index: station, len: self.len() });
        }
        let (lo, hi) = self.cell_bounds(station)?;
        let max_draws = n_samples.saturating_mul(100_000);
        let (mut sum, mut sum_sq, mut accepted, mut draws) = (0.0, 0.0, 0usize, 0usize);
        while accepted < n_samples {
            if draws >= max_draws {
                return Err(Error::NumericalNonConvergence(format!(
                    "cell {station} accepted only {accepted} of {draws} samples"
                )));
            }
            draws += 1;
            let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
            if self.serving_station(p) != station {
                continue;
            }
            let v = self.potential(p)?.get();
            sum += v;
            sum_sq += v * v;
            accepted += 1;
        }
        let n = accepted as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Ok(CellIntegral {
            mean,
            std_error: (var / n).sqrt(),
            samples: accepted,
            area_fraction: n / draws as f64 * (hi.x - lo.x) * (hi.y - lo.y) / self.window.area(),
        })
    }

    /// Axis-aligned box containing the cell of `station`, from the segment
    /// ends of 720 rays, padded for the angular gaps between them and
    /// clipped to the window.
    pub fn cell_bounds(&self, station: usize) -> Result<(Point, Point)> {
        const RAYS: usize = 720;
        let origin = self.position(station);
        let (mut lo, mut hi) = (origin, origin);
        let mut reach: f64 = 0.0;
        for k in 0..RAYS {
            let (s, c) = (std::f64::consts::TAU * k as f64 / RAYS as f64).sin_cos();
            let segs = self.ray_segments(station, (c, s))?;
            for t in segs.edges() {
                reach = reach.max(t);
                lo = Point::new(lo.x.min(origin.x + t * c), lo.y.min(origin.y + t * s));
                hi = Point::new(hi.x.max(origin.x + t * c), hi.y.max(origin.y + t * s));
            }
        }
        let pad = 0.02 * reach + self.step;
        let w = &self.window;
        Ok((
            Point::new((lo.x - pad).max(w.x_min), (lo.y - pad).max(w.y_min)),
            Point::new((hi.x + pad).min(w.x_max), (hi.y + pad).min(w.y_max)),
        ))
    }
}

pub const MIN_INTEGRAL_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellIntegral {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Fraction of window samples that fell in the cell.
    pub area_fraction: f64,
}

/// In-cell intervals `[start, end)` of a ray from a station, sorted, with
/// the first starting at the station.
#[derive(Debug, Clone, PartialEq)]
pub struct RaySegments {
    segments: Vec<(f64, f64)>,
}

impl RaySegments {
    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// Where the ray first leaves the cell.
    pub fn first_exit(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.1)
    }

    /// `integral of t dt` over the in-cell parts of `[0, r]`.
    pub fn radial_mass(&self, r: f64) -> f64 {
        let mut m = 0.0;
        for &(lo, hi) in &self.segments {
            if lo >= r {
                break;
            }
            let hi = hi.min(r);
            m += 0.5 * (hi * hi - lo * lo);
        }
        m
    }

    /// Distances at which the ray crosses a cell edge.
    pub fn edges(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .flat_map(|&(lo, hi)| [lo, hi])
            .filter(|&t| t > 0.0)
    }
}

/// A potential value in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Potential(f64);

impl Potential {
    pub const MAX: Potential = Potential(1.0);
    pub const MIN: Potential = Potential(-1.0);

    /// `1 - 2 r^2` for `r = d / D`, clamped to `[-1, 1]`.
    pub fn from_ratio(r: f64) -> Self {
        Self::clamped(1.0 - 2.0 * r * r)
    }

    pub fn clamped(v: f64) -> Self {
        Potential(v.clamp(-1.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Station counts and powers for randomly drawn layouts. Stations and
/// attractors are placed i.i.d. uniformly in the window with fixed counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutSpec {
    pub macros: usize,
    pub picos: usize,
    pub femtos: usize,
    pub attractors: usize,
    pub window: Window,
    pub macro_tx_power_dbm: f64,
    pub pico_tx_power_dbm: f64,
    pub femto_tx_power_dbm: f64,
    pub bs_gain_dbi: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        Self {
            macros: 10,
            picos: 20,
            femtos: 0,
            attractors: 50,
            window: Window::square(1000.0),
            macro_tx_power_dbm: Tier::Macro.default_tx_power_dbm(),
            pico_tx_power_dbm: Tier::Pico.default_tx_power_dbm(),
            femto_tx_power_dbm: Tier::Femto.default_tx_power_dbm(),
            bs_gain_dbi: DEFAULT_BS_GAIN_DBI,
        }
    }
}

impl LayoutSpec {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.macros + self.picos + self.femtos == 0 {
            return Err(Error::InvalidParameter("layout needs at least one station".into()));
        }
        Ok(())
    }

    /// Draws station positions from `station_rng` and attractor positions
    /// from `attractor_rng`.
    pub fn draw<R: Rng + ?Sized, S: Rng + ?Sized>(
        &self,
        station_rng: &mut R,
        attractor_rng: &mut S,
    ) -> Result<NetworkLayout> {
        self.validate()?;
        let w = self.window;
        let uniform = |rng: &mut R| {
            Point::new(rng.random_range(w.x_min..w.x_max), rng.random_range(w.y_min..w.y_max))
        };
        let mut stations = Vec::with_capacity(self.macros + self.picos + self.femtos);
        for (tier, count, power) in [
            (Tier::Macro, self.macros, self.macro_tx_power_dbm),
            (Tier::Pico, self.picos, self.pico_tx_power_dbm),
            (Tier::Femto, self.femtos, self.femto_tx_power_dbm),
        ] {
            for _ in 0..count {
                stations.push(BaseStation {
                    position: uniform(station_rng),
                    tier,
                    tx_power_dbm: power,
                    antenna_gain_dbi: self.bs_gain_dbi,
                });
            }
        }
        let attractors = (0..self.attractors)
            .map(|_| {
                Point::new(
                    attractor_rng.random_range(w.x_min..w.x_max),
                    attractor_rng.random_range(w.y_min..w.y_max),
                )
            })
            .collect();
        NetworkLayout::new(stations, PointPattern::new(attractors, w)?)
    }
}

/// On-disk layout description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    #[serde(default)]
    pub macros: Vec<StationEntry>,
    #[serde(default)]
    pub picos: Vec<StationEntry>,
    #[serde(default)]
    pub femtos: Vec<StationEntry>,
    #[serde(default)]
    pub attractors: Vec<Point>,
    pub window: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationEntry {
    pub x: f64,
    pub y: f64,
    pub tx_power_dbm: f64,
    pub gain_dbi: f64,
}

impl From<&NetworkLayout> for LayoutFile {
    fn from(layout: &NetworkLayout) -> Self {
        let mut file = LayoutFile {
            attractors: layout.attractors().points().to_vec(),
            window: *layout.window(),
            ..Default::default()
        };
        for s in layout.stations() {
            let entry = StationEntry {
                x: s.position.x,
                y: s.position.y,
                tx_power_dbm: s.tx_power_dbm,
                gain_dbi: s.antenna_gain_dbi,
            };
            match s.tier {
                Tier::Macro => file.macros.push(entry),
                Tier::Pico => file.picos.push(entry),
                Tier::Femto => file.femtos.push(entry),
            }
        }
        file
    }
}

impl TryFrom<LayoutFile> for NetworkLayout {
    type Error = Error;

    fn try_from(file: LayoutFile) -> Result<Self> {
        let mut stations = Vec::new();
        for (tier, list) in [(Tier::Macro, &file.macros), (Tier::Pico, &file.picos), (Tier::Femto, &file.femtos)] {
            stations.extend(list.iter().map(|e| BaseStation {
                position: Point::new(e.x, e.y),
                tier,
                tx_power_dbm: e.tx_power_dbm,
                antenna_gain_dbi: e.gain_dbi,
            }));
        }
        NetworkLayout::new(stations, PointPattern::new(file.attractors, file.window)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(stations: Vec<BaseStation>, side: f64) -> NetworkLayout {
        NetworkLayout::new(stations, PointPattern::empty(Window::square(side))).unwrap()
    }

    fn macro_at(x: f64, y: f64) -> BaseStation {
        BaseStation::new(Point::new(x, y), Tier::Macro)
    }

    #[test]
    fn single_station_serves_everything() {
        let l = layout(vec![macro_at(500.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        for p in [Point::new(0.0, 0.0), Point::new(999.0, 3.0), Point::new(500.0, 500.0)] {
            assert_eq!(cells.serving_station(p), 0);
        }
    }

    #[test]
    fn nearer_equal_station_wins_and_ties_go_low() {
        let l = layout(vec![macro_at(100.0, 500.0), macro_at(300.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        assert_eq!(cells.serving_station(Point::new(150.0, 500.0)), 0);
        assert_eq!(cells.serving_station(Point::new(250.0, 500.0)), 1);
        assert_eq!(cells.serving_station(Point::new(200.0, 500.0)), 0);
    }

    #[test]
    fn macro_versus_pico_by_direct_power_evaluation() {
        // Pico at 50 m, macro at 400 m. Direct evaluation with the same
        // gains: macro 37 - 36.7 log10(400) = -58.49 dB-ish, pico
        // 17 - 36.7 log10(50) = -45.35; the pico is stronger.
        let ch = GeometryChannel::default();
        let p = Point::new(500.0, 500.0);
        let l = layout(
            vec![macro_at(100.0, 500.0), BaseStation::new(Point::new(550.0, 500.0), Tier::Pico)],
            1000.0,
        );
        let cells = l.cells(&ch);
        let macro_rx = 37.0 + 17.0 - (ch.intercept_db + 36.7 * 400f64.log10());
        let pico_rx = 17.0 + 17.0 - (ch.intercept_db + 36.7 * 50f64.log10());
        assert!(pico_rx > macro_rx);
        assert_eq!(cells.serving_station(p), 1);
        assert!((cells.received_power_dbm(0, p) - macro_rx).abs() < 1e-9);
        assert!((cells.received_power_dbm(1, p) - pico_rx).abs() < 1e-9);
    }

    #[test]
    fn boundary_distance_single_station_hits_window() {
        let l = layout(vec![macro_at(500.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        // Ray toward +x from the station exits at x = 1000, 500 m away;
        // toward a point 300 m from the bottom edge exits after 500 m too.
        let d = cells.boundary_distance(Point::new(700.0, 500.0), 0).unwrap();
        assert!((d - 500.0).abs() < 1e-3);
        let l = layout(vec![macro_at(200.0, 300.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let d = cells.boundary_distance(Point::new(200.0, 100.0), 0).unwrap();
        assert!((d - 300.0).abs() < 1e-3);
    }

    #[test]
    fn boundary_distance_equal_stations_is_bisector() {
        let l = layout(vec![macro_at(400.0, 500.0), macro_at(600.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let d = cells.boundary_distance(Point::new(450.0, 500.0), 0).unwrap();
        assert!((d - 100.0).abs() < 1e-3, "{d}");
    }

    #[test]
    fn boundary_point_balances_unequal_powers() {
        let l = layout(
            vec![macro_at(300.0, 500.0), BaseStation::new(Point::new(700.0, 520.0), Tier::Pico)],
            1000.0,
        );
        let cells = l.cells(&GeometryChannel::default());
        let p = Point::new(620.0, 510.0);
        let s = cells.serving_station(p);
        assert_eq!(s, 1);
        let d = cells.boundary_distance(p, s).unwrap();
        let origin = cells.position(s);
        let dir = ((p.x - origin.x) / origin.dist(p), (p.y - origin.y) / origin.dist(p));
        let q = Point::new(origin.x + d * dir.0, origin.y + d * dir.1);
        let gap = cells.received_power_dbm(0, q) - cells.received_power_dbm(1, q);
        assert!(gap.abs() < 0.01, "power gap {gap} dB");
    }

    #[test]
    fn potential_anchor_values() {
        let l = layout(vec![macro_at(400.0, 500.0), macro_at(600.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        assert_eq!(cells.potential(Point::new(400.0, 500.0)).unwrap().get(), 1.0);
        // D = 100 along +x from station 0.
        let half = cells.potential(Point::new(450.0, 500.0)).unwrap().get();
        assert!((half - 0.5).abs() < 1e-4, "{half}");
        let edge = cells.potential(Point::new(499.9999, 500.0)).unwrap().get();
        assert!((edge + 1.0).abs() < 1e-4, "{edge}");
        assert_eq!(Potential::from_ratio(1.0).get(), -1.0);
        assert_eq!(Potential::from_ratio(0.5).get(), 0.5);
        assert_eq!(Potential::from_ratio(3.0).get(), -1.0);
    }

    #[test]
    fn rho_at_stations_and_edges() {
        let l = layout(vec![macro_at(250.0, 500.0), macro_at(750.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let w = *l.window();
        let at_stations = PointPattern::new(vec![Point::new(250.0, 500.0), Point::new(750.0, 500.0)], w).unwrap();
        assert_eq!(cells.correlation_coefficient(&at_stations).unwrap(), 1.0);
        let on_edges = PointPattern::new(
            vec![Point::new(0.0, 500.0), Point::new(1000.0, 200.0), Point::new(250.0, 0.0)],
            w,
        )
        .unwrap();
        assert!((cells.correlation_coefficient(&on_edges).unwrap() + 1.0).abs() < 1e-6);
        assert!(matches!(
            cells.correlation_coefficient(&PointPattern::empty(w)),
            Err(Error::EmptyPattern)
        ));
    }

    #[test]
    fn integral_needs_enough_samples() {
        let l = layout(vec![macro_at(500.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(cells.cell_potential_integral(0, 100, &mut rng).is_err());
    }

    #[test]
    fn centered_and_symmetric_cells_integrate_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = layout(vec![macro_at(500.0, 500.0)], 1000.0);
        let r = l.cells(&GeometryChannel::default()).cell_potential_integral(0, 20_000, &mut rng).unwrap();
        assert!(r.mean.abs() < 3.0 * r.std_error, "{r:?}");

        let l = layout(vec![macro_at(250.0, 500.0), macro_at(750.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        for s in 0..2 {
            let r = cells.cell_potential_integral(s, 20_000, &mut rng).unwrap();
            assert!(r.mean.abs() < 3.0 * r.std_error, "{r:?}");
            assert!((r.area_fraction - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn nearest_edge_point_lies_on_boundary() {
        let l = layout(vec![macro_at(400.0, 500.0), macro_at(600.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let q = cells.nearest_edge_point(Point::new(480.0, 510.0)).unwrap();
        assert!((q.x - 500.0).abs() < 0.5, "{q:?}");
        assert!(cells.potential(q).unwrap().get() < -0.99);
    }

    #[test]
    fn layout_file_roundtrip() {
        let spec = LayoutSpec::default();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let l = spec.draw(&mut a, &mut b).unwrap();
        assert_eq!(l.stations().len(), 30);
        let json = serde_json::to_string(&LayoutFile::from(&l)).unwrap();
        let back: LayoutFile = serde_json::from_str(&json).unwrap();
        assert_eq!(NetworkLayout::try_from(back).unwrap(), l);
    }

    fn random_layout(seed: u64) -> NetworkLayout {
        let mut a = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ChaCha8Rng::seed_from_u64(seed + 1000);
        LayoutSpec::default().draw(&mut a, &mut b).unwrap()
    }

    #[test]
    fn analytic_boundary_matches_marched_predicate() {
        let l = random_layout(21);
        let cells = l.cells(&GeometryChannel::default());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut agree, mut total) = (0, 0);
        for _ in 0..2000 {
            let p = Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            let s = cells.serving_station(p);
            let exact = cells.boundary_distance(p, s).unwrap();
            let marched = cells.boundary_distance_marched(p, s).unwrap();
            total += 1;
            if (exact - marched).abs() < 1e-3 {
                agree += 1;
            } else {
                // The march can only overshoot a hole thinner than its step.
                assert!(marched > exact, "exact {exact} marched {marched}");
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn ray_through_pico_hole_has_two_segments() {
        let l = layout(
            vec![macro_at(200.0, 500.0), BaseStation::new(Point::new(500.0, 500.0), Tier::Pico)],
            1000.0,
        );
        let cells = l.cells(&GeometryChannel::default());
        let segs = cells.ray_segments(0, (1.0, 0.0)).unwrap();
        assert_eq!(segs.segments().len(), 2);
        let (a, b) = (segs.segments()[0].1, segs.segments()[1].0);
        // Both hole edges have equal received power.
        for t in [a, b] {
            let q = Point::new(200.0 + t, 500.0);
            let gap = cells.received_power_dbm(0, q) - cells.received_power_dbm(1, q);
            assert!(gap.abs() < 1e-9, "{gap}");
        }
        assert!(a < 300.0 && b > 300.0);
        assert_eq!(segs.segments()[1].1, 800.0);
        // Behind the hole the potential keeps decreasing toward -1.
        let near = cells.potential(Point::new(200.0 + b + 1.0, 500.0)).unwrap().get();
        let far = cells.potential(Point::new(999.0, 500.0)).unwrap().get();
        assert!(near > far && far < -0.99);
    }

    #[test]
    fn random_layout_cells_have_zero_mean_potential() {
        let l = random_layout(3);
        let cells = l.cells(&GeometryChannel::default());
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for s in 0..cells.len() {
            let r = cells.cell_potential_integral(s, MIN_INTEGRAL_SAMPLES, &mut rng).unwrap();
            assert!(r.mean.abs() < 4.0 * r.std_error, "cell {s}: {r:?}");
        }
    }

    #[test]
    fn uniform_ues_have_rho_near_zero() {
        let l = layout(vec![macro_at(500.0, 500.0)], 1000.0);
        let cells = l.cells(&GeometryChannel::default());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = (0..10_000)
            .map(|_| Point::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
            .collect();
        let rho = cells.correlation_coefficient(&PointPattern::new(pts, Window::square(1000.0)).unwrap()).unwrap();
        assert!(rho.abs() < 0.05, "{rho}");
    }

    proptest::proptest! {
        #[test]
        fn argmax_invariant_under_power_offset(
            offset in -30.0f64..30.0,
            x in 0.0f64..1000.0,
            y in 0.0f64..1000.0,
            seed in 0u64..50,
        ) {
            let l = random_layout(seed);
            let shifted: Vec<BaseStation> = l
                .stations()
                .iter()
                .map(|s| BaseStation { tx_power_dbm: s.tx_power_dbm + offset, ..*s })
                .collect();
            let a = l.cells(&GeometryChannel::default());
            let b = WeightedCells::new(&shifted, *l.window(), &GeometryChannel::default());
            let p = Point::new(x, y);
            proptest::prop_assert_eq!(a.serving_station(p), b.serving_station(p));
        }

        #[test]
        fn potential_in_range(x in 0.0f64..1000.0, y in 0.0f64..1000.0, seed in 0u64..50) {
            let l = random_layout(seed);
            let v = l.cells(&GeometryChannel::default()).potential(Point::new(x, y)).unwrap().get();
            proptest::prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
