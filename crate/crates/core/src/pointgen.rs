//! Primitive point processes: homogeneous Poisson, centered lattice and
//! Gaussian-perturbed patterns.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geom::{Point, PointPattern, Window};

/// `count` i.i.d. uniform points in `window`.
pub fn uniform_points<R: Rng + ?Sized>(count: usize, window: &Window, rng: &mut R) -> Vec<Point> {
    (0..count)
        .map(|_| {
            Point::new(
                rng.random_range(window.x_min..window.x_max),
                rng.random_range(window.y_min..window.y_max),
            )
        })
        .collect()
}

/// Draws a Poisson count with the given mean.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<usize> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("Poisson mean must be positive, got {mean}")));
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(rng) as usize)
}

/// Homogeneous Poisson point process with `intensity` points per m^2.
pub fn generate_ppp<R: Rng + ?Sized>(intensity: f64, window: &Window, rng: &mut R) -> Result<PointPattern> {
    window.validate()?;
    if !(intensity > 0.0) {
        return Err(Error::InvalidParameter(format!("intensity must be positive, got {intensity}")));
    }
    let n = poisson_count(intensity * window.area(), rng)?;
    PointPattern::new(uniform_points(n, window, rng), *window)
}

/// Centered grid with `ceil(sqrt(count))` columns and as many rows as that
/// column count allows, filled row by row from the bottom; the last row is
/// left short when `count` is not a perfect square.
pub fn generate_lattice(count: usize, window: &Window) -> Result<PointPattern> {
    window.validate()?;
    if count < 4 {
        return Err(Error::InvalidParameter(format!("lattice needs at least 4 points, got {count}")));
    }
    let side = (count as f64).sqrt().ceil() as usize;
    let dx = window.width() / side as f64;
    let dy = window.height() / side as f64;
    let points = (0..count)
        .map(|k| {
            let (col, row) = (k % side, k / side);
            Point::new(
                window.x_min + (col as f64 + 0.5) * dx,
                window.y_min + (row as f64 + 0.5) * dy,
            )
        })
        .collect();
    PointPattern::new(points, *window)
}

/// Folds `v` back into `[lo, hi]` by mirror reflection at the edges.
fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let u = (v - lo).rem_euclid(2.0 * span);
    let u = if u > span { 2.0 * span - u } else { u };
    (lo + u).clamp(lo, hi)
}

/// Displaces every point by independent `N(0, sigma^2)` offsets per axis,
/// reflecting at the window edges.
pub fn perturb<R: Rng + ?Sized>(pattern: &PointPattern, sigma: f64, rng: &mut R) -> Result<PointPattern> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(pattern.clone());
    }
    let w = *pattern.window();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let points = pattern
        .points()
        .iter()
        .map(|p| {
            Point::new(
                reflect(p.x + noise.sample(rng), w.x_min, w.x_max),
                reflect(p.y + noise.sample(rng), w.y_min, w.y_max),
            )
        })
        .collect();
    PointPattern::new(points, w)
}
