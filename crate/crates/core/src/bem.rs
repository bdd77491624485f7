//! Galerkin discretization of the Laplace single-layer operator with
//! piecewise-constant basis functions on quadrangular meshes.
//!
//! Matrix entries are the double surface integrals
//! `a_ij = ∫_{T_i} ∫_{T_j} 1 / (4π |x - y|) dσ(y) dσ(x)`.
//! Pairs of panels fall into five cases:
//!
//! * identical panels: relative coordinates `z = s - t` followed by a Duffy
//!   split of each quadrant into two triangles,
//! * common edge: relative coordinate along the edge, then a three-way Duffy
//!   split of the remaining cube,
//! * common vertex: four-way Duffy split of the four-dimensional cube,
//! * near pairs: tensor Gauss of the singular order, subdividing panels that
//!   are close compared to their size,
//! * far pairs: tensor Gauss of the far order.
//!
//! In all singular cases the Duffy Jacobian cancels the `1/r` singularity,
//! leaving integrands that are smooth on the reference domain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::clustering::BoundingBox;
use crate::entry::EntryEvaluator;
use crate::geometry::{FlatPanel, Point3, SurfaceMesh, SurfacePatch};
use crate::quadrature::{gauss, GaussRule, MAX_ORDER};
use crate::{Error, Result};

const INV_4PI: f64 = 0.25 / PI;
const MAX_SUBDIVISION: usize = 8;

/// Laplace fundamental solution `1 / (4π |x - y|)`.
pub fn kernel(x: Point3, y: Point3) -> Result<f64> {
    let r = x.dist(y);
    if r == 0.0 {
        return Err(Error::Domain(format!("kernel evaluated at coincident points {x:?}")));
    }
    Ok(INV_4PI / r)
}

/// `4x² - 3y² - z²`, harmonic in ℝ³.
pub fn cube_harmonic(p: Point3) -> f64 {
    4.0 * p.x * p.x - 3.0 * p.y * p.y - p.z * p.z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Gauss points per direction for well-separated panel pairs.
    pub far_order: usize,
    /// Gauss points per direction inside singular and near-singular rules.
    pub sing_order: usize,
    /// Pairs whose center distance is below this multiple of the larger
    /// panel diameter use the near-field rules.
    pub near_threshold: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { far_order: 4, sing_order: 6, near_threshold: 2.0 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_order = |n: usize| (1..=MAX_ORDER).contains(&n);
        if !ok_order(self.far_order) || !ok_order(self.sing_order) {
            return Err(Error::InvalidInput(format!(
                "quadrature orders must lie in 1..={MAX_ORDER}, got {}/{}",
                self.far_order, self.sing_order
            )));
        }
        if self.near_threshold.is_nan() || self.near_threshold < 0.0 {
            return Err(Error::InvalidInput("near threshold must be nonnegative".into()));
        }
        Ok(())
    }

    /// Both orders raised by `by`.
    pub fn refined(&self, by: usize) -> Self {
        Self { far_order: self.far_order + by, sing_order: self.sing_order + by, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Identical,
    /// Shared edge from `shared.0` to `shared.1` (global vertex ids).
    Edge { shared: (usize, usize) },
    Vertex { shared: usize },
    Near,
    Far,
}

/// Galerkin entries of the single-layer operator on a mesh.
#[derive(Debug, Clone)]
pub struct LaplaceSlpEvaluator<'a> {
    mesh: &'a SurfaceMesh,
    quad: QuadratureConfig,
    diam: Vec<f64>,
    // Far-order quadrature points and weights (times the Jacobian),
    // `far_order²` per element.
    far_points: Vec<Point3>,
    far_weights: Vec<f64>,
}

impl<'a> LaplaceSlpEvaluator<'a> {
    pub fn new(mesh: &'a SurfaceMesh, quad: QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        let rule = gauss(quad.far_order);
        let per = rule.order() * rule.order();
        let mut far_points = Vec::with_capacity(mesh.len() * per);
        let mut far_weights = Vec::with_capacity(mesh.len() * per);
        let mut diam = Vec::with_capacity(mesh.len());
        for i in 0..mesh.len() {
            let p = mesh.panel(i);
            diam.push(p.diam());
            for (s, ws) in rule.iter() {
                for (t, wt) in rule.iter() {
                    far_points.push(p.point(s, t));
                    far_weights.push(ws * wt * p.jacobian(s, t));
                }
            }
        }
        Ok(Self { mesh, quad, diam, far_points, far_weights })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.mesh
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn classify(&self, i: usize, j: usize) -> PairKind {
        if i == j {
            return PairKind::Identical;
        }
        let (vi, vj) = (self.mesh.elements[i].vertex_ids, self.mesh.elements[j].vertex_ids);
        let shared: Vec<usize> = vi.iter().copied().filter(|v| vj.contains(v)).collect();
        match shared.as_slice() {
            [w] => PairKind::Vertex { shared: *w },
            [a, b] if is_edge(&vi, *a, *b) && is_edge(&vj, *a, *b) => PairKind::Edge { shared: (*a, *b) },
            [a, ..] => PairKind::Vertex { shared: *a },
            [] => {
                let d = self.mesh.centers[i].dist(self.mesh.centers[j]);
                if d < self.quad.near_threshold * self.diam[i].max(self.diam[j]) {
                    PairKind::Near
                } else {
                    PairKind::Far
                }
            }
        }
    }

    /// `∫_{T_i} ∫_{T_j} 1/(4π|x - y|)`.
    pub fn galerkin_entry(&self, i: usize, j: usize) -> Result<f64> {
        // Evaluate every pair in one orientation so the matrix is exactly
        // symmetric.
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.quad.sing_order;
        let value = match self.classify(i, j) {
            PairKind::Identical => {
                let p = self.mesh.panel(i);
                identical_panel(&p, gauss(n))
            }
            PairKind::Edge { shared: (a, b) } => {
                let p = self.panel_along(i, a, b);
                let q = self.panel_along(j, a, b);
                common_edge(p.du, p.dv, q.dv, gauss(n)) * p.area() * q.area()
            }
            PairKind::Vertex { shared } => {
                let p = self.panel_at(i, shared);
                let q = self.panel_at(j, shared);
                common_vertex([p.du, p.dv], [q.du, q.dv], gauss(n)) * p.area() * q.area()
            }
            PairKind::Near => near_pair(&self.mesh.panel(i), &self.mesh.panel(j), gauss(n), 0),
            PairKind::Far => self.far_pair(i, j),
        };
        let value = value * INV_4PI;
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::QuadratureFailure(i, j))
        }
    }

    fn far_pair(&self, i: usize, j: usize) -> f64 {
        let per = self.quad.far_order * self.quad.far_order;
        let (xs, wx) = (&self.far_points[i * per..(i + 1) * per], &self.far_weights[i * per..(i + 1) * per]);
        let (ys, wy) = (&self.far_points[j * per..(j + 1) * per], &self.far_weights[j * per..(j + 1) * per]);
        let mut total = 0.0;
        for (x, w) in xs.iter().zip(wx) {
            let mut inner = 0.0;
            for (y, v) in ys.iter().zip(wy) {
                inner += v / x.dist(*y);
            }
            total += w * inner;
        }
        total
    }

    fn local_corner(&self, i: usize, vertex: usize) -> usize {
        self.mesh.elements[i].vertex_ids.iter().position(|&v| v == vertex).expect("shared vertex")
    }

    /// Element `i` as a panel anchored at global vertex `w`.
    fn panel_at(&self, i: usize, w: usize) -> FlatPanel {
        self.mesh.panel_from_corner(i, self.local_corner(i, w))
    }

    /// Element `i` anchored at `a` with its first edge running to `b`.
    fn panel_along(&self, i: usize, a: usize, b: usize) -> FlatPanel {
        let ids = self.mesh.elements[i].vertex_ids;
        let ca = self.local_corner(i, a);
        let next = ids[(ca + 1) % 4];
        let other = if next == b { ids[(ca + 3) % 4] } else { next };
        let v = &self.mesh.vertices;
        FlatPanel { origin: v[a], du: v[b] - v[a], dv: v[other] - v[a] }
    }
}

fn is_edge(ids: &[usize; 4], a: usize, b: usize) -> bool {
    let pa = ids.iter().position(|&v| v == a);
    let pb = ids.iter().position(|&v| v == b);
    matches!((pa, pb), (Some(x), Some(y)) if (x + 1) % 4 == y || (y + 1) % 4 == x)
}

fn inv_norm(d: Point3) -> f64 {
    1.0 / d.norm()
}

/// `∫∫ 1/|x - y|` over a panel with itself.
///
/// With `z = s - t ∈ [-1, 1]²` the integrand depends on `z` only and carries
/// the weight `(1 - |z₁|)(1 - |z₂|)`. Kernel symmetry folds the four
/// quadrants onto two, and each is split along its diagonal into Duffy
/// triangles `z = u (1, w)` and `z = u (w, 1)` with Jacobian `u`.
fn identical_panel(p: &FlatPanel, rule: &GaussRule) -> f64 {
    let quadrant = |a: Point3, b: Point3| -> f64 {
        let mut sum = 0.0;
        for (u, wu) in rule.iter() {
            for (w, ww) in rule.iter() {
                let weight = (1.0 - u) * (1.0 - u * w);
                let f = inv_norm((a + b * w) * u) + inv_norm((a * w + b) * u);
                sum += wu * ww * u * weight * f;
            }
        }
        sum
    };
    let j = p.area();
    2.0 * j * j * (quadrant(p.du, p.dv) + quadrant(p.du, -p.dv))
}

/// `∫∫ 1/|x - y|` (parameter measure) for panels `x = s₁e + s₂p`,
/// `y = t₁e + t₂q` sharing the edge `e`.
///
/// The difference `x - y = (s₁ - t₁)e + s₂p - t₂q` depends on `s₁ - t₁` only,
/// which leaves a weighted integral over `(z, s₂, t₂) ∈ [-1, 1] × [0, 1]²`;
/// each sign of `z` is split into three Duffy pyramids with Jacobian `λ²`.
fn common_edge(e: Point3, p: Point3, q: Point3, rule: &GaussRule) -> f64 {
    let mut sum = 0.0;
    for sign in [1.0, -1.0] {
        for (lam, wl) in rule.iter() {
            for (a, wa) in rule.iter() {
                for (b, wb) in rule.iter() {
                    let (la, lb) = (lam * a, lam * b);
                    let mut f = 0.0;
                    for (z, s, t) in [(lam, la, lb), (la, lam, lb), (la, lb, lam)] {
                        f += (1.0 - z) * inv_norm(e * (sign * z) + p * s - q * t);
                    }
                    sum += wl * wa * wb * lam * lam * f;
                }
            }
        }
    }
    sum
}

/// `∫∫ 1/|x - y|` (parameter measure) for panels `x = s₁a₁ + s₂a₂`,
/// `y = t₁b₁ + t₂b₂` sharing the origin, split into four Duffy pyramids with
/// Jacobian `λ³`.
fn common_vertex(a: [Point3; 2], b: [Point3; 2], rule: &GaussRule) -> f64 {
    let mut sum = 0.0;
    for (lam, wl) in rule.iter() {
        let l3 = lam * lam * lam;
        for (c1, w1) in rule.iter() {
            for (c2, w2) in rule.iter() {
                for (c3, w3) in rule.iter() {
                    let (x, y, z) = (lam * c1, lam * c2, lam * c3);
                    let d = |s1: f64, s2: f64, t1: f64, t2: f64| a[0] * s1 + a[1] * s2 - b[0] * t1 - b[1] * t2;
                    let f = inv_norm(d(lam, x, y, z))
                        + inv_norm(d(x, lam, y, z))
                        + inv_norm(d(x, y, lam, z))
                        + inv_norm(d(x, y, z, lam));
                    sum += wl * w1 * w2 * w3 * l3 * f;
                }
            }
        }
    }
    sum
}

fn panel_box(p: &FlatPanel) -> BoundingBox {
    BoundingBox::from_points(&p.corners()).expect("four corners")
}

/// Tensor Gauss on `p × q`, splitting the larger panel while the pair is
/// closer than half its diameter.
fn near_pair(p: &FlatPanel, q: &FlatPanel, rule: &GaussRule, depth: usize) -> f64 {
    let (dp, dq) = (p.diam(), q.diam());
    let gap = panel_box(p).dist(&panel_box(q));
    if gap >= 0.5 * dp.max(dq) || depth >= MAX_SUBDIVISION {
        return tensor_pair(p, q, rule);
    }
    if dp >= dq {
        p.quarters().iter().map(|s| near_pair(s, q, rule, depth + 1)).sum()
    } else {
        q.quarters().iter().map(|s| near_pair(p, s, rule, depth + 1)).sum()
    }
}

fn tensor_pair(p: &FlatPanel, q: &FlatPanel, rule: &GaussRule) -> f64 {
    let ys: Vec<(Point3, f64)> = rule
        .iter()
        .flat_map(|(s, ws)| rule.iter().map(move |(t, wt)| (q.point(s, t), ws * wt)))
        .collect();
    let mut sum = 0.0;
    for (s, ws) in rule.iter() {
        for (t, wt) in rule.iter() {
            let x = p.point(s, t);
            let inner: f64 = ys.iter().map(|(y, w)| w * inv_norm(x - *y)).sum();
            sum += ws * wt * inner;
        }
    }
    sum * p.area() * q.area()
}

impl EntryEvaluator for LaplaceSlpEvaluator<'_> {
    fn row_count(&self) -> usize {
        self.mesh.len()
    }
    fn col_count(&self) -> usize {
        self.mesh.len()
    }
    fn row_point(&self, i: usize) -> Point3 {
        self.mesh.centers[i]
    }
    fn col_point(&self, j: usize) -> Point3 {
        self.mesh.centers[j]
    }
    fn get_matrix_entry(&self, i: usize, j: usize) -> Result<f64> {
        self.galerkin_entry(i, j)
    }
}

/// `f_i = ∫_{T_i} f` by tensor Gauss of order `order`.
pub fn assemble_rhs(mesh: &SurfaceMesh, f: impl Fn(Point3) -> f64, order: usize) -> Vec<f64> {
    let rule = gauss(order);
    (0..mesh.len())
        .map(|i| {
            let p = mesh.panel(i);
            let mut sum = 0.0;
            for (s, ws) in rule.iter() {
                for (t, wt) in rule.iter() {
                    sum += ws * wt * f(p.point(s, t)) * p.jacobian(s, t);
                }
            }
            sum
        })
        .collect()
}

/// `∫_P 1/(4π|x - y|) dσ(y)` for a point off the panel, subdividing while the
/// point is closer than `near_threshold` panel diameters.
fn panel_potential(p: &FlatPanel, x: Point3, rule: &GaussRule, near: f64, depth: usize) -> f64 {
    if depth < MAX_SUBDIVISION && p.distance_to(x) < near * p.diam() {
        return p.quarters().iter().map(|s| panel_potential(s, x, rule, near, depth + 1)).sum();
    }
    let mut sum = 0.0;
    for (s, ws) in rule.iter() {
        for (t, wt) in rule.iter() {
            sum += ws * wt * inv_norm(x - p.point(s, t));
        }
    }
    sum * p.area() * INV_4PI
}

/// Single-layer potential `Σ_i α_i ∫_{T_i} 1/(4π|x - y|)` at each point.
pub fn eval_potential(mesh: &SurfaceMesh, alpha: &[f64], pts: &[Point3], quad: &QuadratureConfig) -> Result<Vec<f64>> {
    if alpha.len() != mesh.len() {
        return Err(Error::DimensionMismatch { expected: mesh.len(), actual: alpha.len() });
    }
    quad.validate()?;
    let rule = gauss(quad.far_order);
    let panels: Vec<FlatPanel> = (0..mesh.len()).map(|i| mesh.panel(i)).collect();
    pts.iter()
        .map(|&x| {
            let mut u = 0.0;
            for (p, &a) in panels.iter().zip(alpha) {
                if p.distance_to(x) <= 1e-12 * p.diam() {
                    return Err(Error::Domain(format!("evaluation point {x:?} lies on the surface")));
                }
                if a != 0.0 {
                    u += a * panel_potential(p, x, rule, quad.near_threshold, 0);
                }
            }
            Ok(u)
        })
        .collect()
}

/// `max_x |U_exact(x) - (S̃ α)(x)|` over `pts`.
pub fn worst_case_error(
    mesh: &SurfaceMesh,
    alpha: &[f64],
    pts: &[Point3],
    exact: impl Fn(Point3) -> f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let u = eval_potential(mesh, alpha, pts, quad)?;
    Ok(pts.iter().zip(&u).map(|(&x, &v)| (exact(x) - v).abs()).fold(0.0, f64::max))
}
