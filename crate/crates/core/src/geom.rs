//! Planar point patterns, Delaunay triangulation and window-clipped Voronoi
//! cells.

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation as _};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist2(other).sqrt()
    }

    /// `t * target + (1 - t) * self`.
    pub fn toward(self, target: Point, t: f64) -> Point {
        Point::new(
            t * target.x + (1.0 - t) * self.x,
            t * target.y + (1.0 - t) * self.y,
        )
    }
}

/// Axis-aligned rectangular observation window, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// The 1000 m x 1000 m field used throughout the simulations.
impl Default for Window {
    fn default() -> Self {
        Self::square(1000.0)
    }
}

impl Window {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let w = Self { x_min, y_min, x_max, y_max };
        w.validate()?;
        Ok(w)
    }

    /// `[0, side] x [0, side]`.
    pub fn square(side: f64) -> Self {
        Self { x_min: 0.0, y_min: 0.0, x_max: side, y_max: side }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidParameter(format!("window {self:?} has no area")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Corners in counter-clockwise order starting at `(x_min, y_min)`.
    pub fn corners(&self) -> Vec<Point> {
        vec![
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    /// Distance from `origin` (inside the window) along the unit vector
    /// `dir` to the window edge.
    pub fn exit_distance(&self, origin: Point, dir: (f64, f64)) -> f64 {
        let axis = |o: f64, d: f64, lo: f64, hi: f64| {
            if d > 0.0 {
                (hi - o) / d
            } else if d < 0.0 {
                (lo - o) / d
            } else {
                f64::INFINITY
            }
        };
        let tx = axis(origin.x, dir.0, self.x_min, self.x_max);
        let ty = axis(origin.y, dir.1, self.y_min, self.y_max);
        tx.min(ty).max(0.0)
    }

    fn on_edge(&self, p: Point, tol: f64) -> bool {
        (p.x - self.x_min).abs() <= tol
            || (p.x - self.x_max).abs() <= tol
            || (p.y - self.y_min).abs() <= tol
            || (p.y - self.y_max).abs() <= tol
    }
}

/// A finite set of points inside a window. Coincident points are allowed
/// here; they are separated by a tiny deterministic jitter when the pattern
/// is tessellated (see [`PointPattern::separated`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    points: Vec<Point>,
    window: Window,
}

impl PointPattern {
    pub fn new(points: Vec<Point>, window: Window) -> Result<Self> {
        window.validate()?;
        if let Some(p) = points.iter().find(|p| !window.contains(**p)) {
            return Err(Error::InvalidParameter(format!(
                "point ({}, {}) lies outside the window",
                p.x, p.y
            )));
        }
        Ok(Self { points, window })
    }

    pub fn empty(window: Window) -> Self {
        Self { points: Vec::new(), window }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points per square meter.
    pub fn intensity(&self) -> f64 {
        self.points.len() as f64 / self.window.area()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Copy of the points with exact duplicates moved apart by
    /// `1e-9 * window width` (times a small per-duplicate factor). Indices
    /// are preserved; the first occurrence of each location is not moved.
    pub fn separated(&self) -> Vec<Point> {
        let mut pts = self.points.clone();
        let eps = 1e-9 * self.window.width();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        // A jittered point can in principle land on another point; loop
        // until no exact duplicates remain.
        for round in 0..8 {
            order.sort_by(|&a, &b| lex_cmp(pts[a], pts[b]).then(a.cmp(&b)));
            let mut moved = false;
            let mut run = 0usize;
            let mut anchor = match order.first() {
                Some(&i) => pts[i],
                None => break,
            };
            for &idx in &order[1..] {
                let base = pts[idx];
                if base != anchor {
                    anchor = base;
                    run = 0;
                    continue;
                }
                run += 1;
                let j = (run + round * 7919) as f64;
                let theta = j * 2.399_963_229_728_653;
                let r = eps * j.sqrt();
                let mut q = Point::new(base.x + r * theta.cos(), base.y + r * theta.sin());
                if q.x < self.window.x_min || q.x > self.window.x_max {
                    q.x = base.x - r * theta.cos();
                }
                if q.y < self.window.y_min || q.y > self.window.y_max {
                    q.y = base.y - r * theta.sin();
                }
                pts[idx] = q;
                moved = true;
            }
            if !moved {
                break;
            }
        }
        pts
    }
}

fn lex_cmp(a: Point, b: Point) -> std::cmp::Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Delaunay triangulation of a point pattern. Vertex indices refer to the
/// pattern's point order.
#[derive(Debug, Clone)]
pub struct Triangulation {
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

/// Triangulates `pattern`. Exact duplicates are separated first; vertices
/// are inserted in lexicographic `(x, y)` order so the output is a
/// deterministic function of the input.
pub fn delaunay(pattern: &PointPattern) -> Result<Triangulation> {
    triangulate_points(pattern.separated())
}

pub(crate) fn triangulate_points(points: Vec<Point>) -> Result<Triangulation> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateInput(format!("{n} points cannot be triangulated")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(points[a], points[b]));
    let sorted: Vec<Point2<f64>> = order
        .iter()
        .map(|&i| Point2::new(points[i].x, points[i].y))
        .collect();
    let dt = DelaunayTriangulation::<Point2<f64>>::bulk_load_stable(sorted)
        .map_err(|e| Error::DegenerateInput(format!("{e:?}")))?;
    if dt.num_vertices() != n {
        return Err(Error::DegenerateInput("coincident points survived separation".into()));
    }
    if dt.num_inner_faces() == 0 {
        return Err(Error::DegenerateInput("all points are collinear".into()));
    }

    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let v = f.vertices();
            let mut t = [
                order[v[0].fix().index()],
                order[v[1].fix().index()],
                order[v[2].fix().index()],
            ];
            if orient(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
            t
        })
        .collect();
    triangles.sort_unstable();

    let mut edges: Vec<(usize, usize)> = dt
        .undirected_edges()
        .map(|e| {
            let [a, b] = e.vertices();
            let (a, b) = (order[a.fix().index()], order[b.fix().index()]);
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }

    Ok(Triangulation { points, triangles, edges, neighbors })
}

impl Triangulation {
    /// Vertex coordinates as triangulated (after duplicate separation).
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Counter-clockwise vertex triples.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Undirected edges as `(lo, hi)` index pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn natural_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.neighbors
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange { index: i, len: self.points.len() })
    }

    pub fn triangle_area(&self, t: [usize; 3]) -> f64 {
        0.5 * orient(self.points[t[0]], self.points[t[1]], self.points[t[2]]).abs()
    }
}

/// Voronoi cells clipped to the observation window.
#[derive(Debug, Clone)]
pub struct VoronoiDiagram {
    pub cells: Vec<Vec<Point>>,
    pub cell_area: Vec<f64>,
    /// True when the cell reaches the window edge, i.e. it was cut by the
    /// window rather than only by neighbouring bisectors.
    pub boundary_flag: Vec<bool>,
}

pub fn voronoi(tri: &Triangulation, window: &Window) -> Result<VoronoiDiagram> {
    window.validate()?;
    Ok(build_cells(&tri.points, window, |i| tri.neighbors[i].iter().copied()))
}

/// Voronoi diagram of any pattern with at least one point. Patterns that
/// cannot be triangulated (fewer than three points, or collinear) are
/// handled by clipping each cell against every other generator.
pub fn voronoi_of(pattern: &PointPattern) -> Result<VoronoiDiagram> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    match delaunay(pattern) {
        Ok(tri) => voronoi(&tri, pattern.window()),
        Err(Error::DegenerateInput(_)) => {
            let pts = pattern.separated();
            let n = pts.len();
            Ok(build_cells(&pts, pattern.window(), |i| (0..n).filter(move |&j| j != i)))
        }
        Err(e) => Err(e),
    }
}

fn build_cells<F, I>(points: &[Point], window: &Window, neighbors: F) -> VoronoiDiagram
where
    F: Fn(usize) -> I,
    I: Iterator<Item = usize>,
{
    let tol = 1e-9 * window.width().max(window.height());
    let mut cells = Vec::with_capacity(points.len());
    let mut cell_area = Vec::with_capacity(points.len());
    let mut boundary_flag = Vec::with_capacity(points.len());
    for (i, &p) in points.iter().enumerate() {
        let mut poly = window.corners();
        for j in neighbors(i) {
            let q = points[j];
            let normal = (q.x - p.x, q.y - p.y);
            let mid = Point::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y));
            poly = clip_halfplane(&poly, normal, normal.0 * mid.x + normal.1 * mid.y);
            if poly.is_empty() {
                break;
            }
        }
        boundary_flag.push(poly.iter().any(|v| window.on_edge(*v, tol)));
        cell_area.push(polygon_area(&poly));
        cells.push(poly);
    }
    VoronoiDiagram { cells, cell_area, boundary_flag }
}

/// Sutherland-Hodgman clip of a convex polygon to `normal . x <= offset`.
fn clip_halfplane(poly: &[Point], normal: (f64, f64), offset: f64) -> Vec<Point> {
    let side = |p: Point| normal.0 * p.x + normal.1 * p.y - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(a), side(b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    out
}

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}
