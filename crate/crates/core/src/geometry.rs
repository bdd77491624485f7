//! Quadrangular surface meshes and evaluation point sets.

use std::collections::HashMap;
use std::io::Write;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest mesh `make_cube_mesh` will build (level 10).
pub const MAX_ELEMENTS: usize = 6 * (1 << 20);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coord(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A quadrangle given by four vertex indices, counterclockwise when viewed
/// from outside the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadElement {
    pub vertex_ids: [usize; 4],
    pub face_id: u8,
}

/// A flat parallelogram panel `x(s, t) = origin + s * du + t * dv` over
/// `(s, t) ∈ [0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatPanel {
    pub origin: Point3,
    pub du: Point3,
    pub dv: Point3,
}

/// Parametric description of a surface patch over the unit square.
pub trait SurfacePatch {
    fn point(&self, s: f64, t: f64) -> Point3;
    /// Surface measure density `|∂x/∂s × ∂x/∂t|`.
    fn jacobian(&self, s: f64, t: f64) -> f64;
}

impl FlatPanel {
    pub fn area(&self) -> f64 {
        self.du.cross(self.dv).norm()
    }

    pub fn diam(&self) -> f64 {
        (self.du + self.dv).norm().max((self.du - self.dv).norm())
    }

    pub fn corners(&self) -> [Point3; 4] {
        [
            self.origin,
            self.origin + self.du,
            self.origin + self.du + self.dv,
            self.origin + self.dv,
        ]
    }

    pub fn center(&self) -> Point3 {
        self.origin + (self.du + self.dv) * 0.5
    }

    /// Splits the panel into its four parameter-space quarters.
    pub fn quarters(&self) -> [FlatPanel; 4] {
        let hu = self.du * 0.5;
        let hv = self.dv * 0.5;
        let o = self.origin;
        [
            FlatPanel { origin: o, du: hu, dv: hv },
            FlatPanel { origin: o + hu, du: hu, dv: hv },
            FlatPanel { origin: o + hu + hv, du: hu, dv: hv },
            FlatPanel { origin: o + hv, du: hu, dv: hv },
        ]
    }

    /// Euclidean distance from `p` to the panel.
    pub fn distance_to(&self, p: Point3) -> f64 {
        // Minimize |origin + s du + t dv - p| over the unit square: check the
        // interior stationary point, then the four edges.
        let r = p - self.origin;
        let (a, b, c) = (self.du.dot(self.du), self.du.dot(self.dv), self.dv.dot(self.dv));
        let (d, e) = (self.du.dot(r), self.dv.dot(r));
        let det = a * c - b * b;
        if det > 0.0 {
            let s = (c * d - b * e) / det;
            let t = (a * e - b * d) / det;
            if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
                return self.point(s, t).dist(p);
            }
        }
        let [c0, c1, c2, c3] = self.corners();
        segment_distance(p, c0, c1)
            .min(segment_distance(p, c1, c2))
            .min(segment_distance(p, c2, c3))
            .min(segment_distance(p, c3, c0))
    }
}

impl SurfacePatch for FlatPanel {
    fn point(&self, s: f64, t: f64) -> Point3 {
        self.origin + self.du * s + self.dv * t
    }

    fn jacobian(&self, _s: f64, _t: f64) -> f64 {
        self.area()
    }
}

fn segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t).dist(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3>,
    pub elements: Vec<QuadElement>,
    pub centers: Vec<Point3>,
    pub areas: Vec<f64>,
}

impl SurfaceMesh {
    /// Builds a mesh from vertices and elements, deriving centers and areas.
    pub fn new(vertices: Vec<Point3>, elements: Vec<QuadElement>) -> Result<Self> {
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite vertex {p:?}")));
        }
        let mut centers = Vec::with_capacity(elements.len());
        let mut areas = Vec::with_capacity(elements.len());
        for (i, el) in elements.iter().enumerate() {
            let ids = el.vertex_ids;
            if ids.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!("element {i} references a missing vertex")));
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if ids[a] == ids[b] {
                        return Err(Error::InvalidInput(format!("element {i} repeats vertex {}", ids[a])));
                    }
                }
            }
            let [p0, p1, p2, p3] = ids.map(|v| vertices[v]);
            centers.push((p0 + p1 + p2 + p3) * 0.25);
            // Two-triangle split is exact for planar quads.
            let area = 0.5 * ((p1 - p0).cross(p2 - p0).norm() + (p2 - p0).cross(p3 - p0).norm());
            if area <= 0.0 {
                return Err(Error::InvalidInput(format!("element {i} has zero area")));
            }
            areas.push(area);
        }
        Ok(Self { vertices, elements, centers, areas })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn corners(&self, i: usize) -> [Point3; 4] {
        self.elements[i].vertex_ids.map(|v| self.vertices[v])
    }

    /// The element as a parallelogram anchored at its first vertex.
    pub fn panel(&self, i: usize) -> FlatPanel {
        self.panel_from_corner(i, 0)
    }

    /// The element as a parallelogram anchored at local corner `c`, with the
    /// first edge running to corner `c + 1`.
    pub fn panel_from_corner(&self, i: usize, c: usize) -> FlatPanel {
        let p = self.corners(i);
        let o = p[c % 4];
        FlatPanel { origin: o, du: p[(c + 1) % 4] - o, dv: p[(c + 3) % 4] - o }
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Writes `N_vertices N_elements`, then `x y z` lines, then 0-based
    /// `v0 v1 v2 v3` lines.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.vertices.len(), self.elements.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
        }
        for e in &self.elements {
            let [a, b, c, d] = e.vertex_ids;
            writeln!(out, "{a} {b} {c} {d}")?;
        }
        Ok(())
    }
}

// Each face is (fixed axis, fixed value, first in-plane axis, second in-plane
// axis) with first × second pointing outward.
const CUBE_FACES: [(usize, bool, usize, usize); 6] = [
    (0, false, 2, 1),
    (0, true, 1, 2),
    (1, false, 0, 2),
    (1, true, 2, 0),
    (2, false, 1, 0),
    (2, true, 0, 1),
];

/// Surface of the unit cube `[0, 1]³`, each face split into
/// `2^level × 2^level` congruent squares.
pub fn make_cube_mesh(level: u32) -> Result<SurfaceMesh> {
    let n = 1usize.checked_shl(level).filter(|&n| n <= 1 << 20).unwrap_or(usize::MAX);
    let n_elements = n.checked_mul(n).and_then(|m| m.checked_mul(6)).unwrap_or(usize::MAX);
    if n_elements > MAX_ELEMENTS {
        return Err(Error::ResourceExhausted {
            what: "cube mesh elements",
            requested: n_elements,
            limit: MAX_ELEMENTS,
        });
    }

    // Vertices live on the integer lattice {0..n}³, so deduplication by
    // exact integer key is lossless.
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut elements = Vec::with_capacity(n_elements);
    let scale = 1.0 / n as f64;
    let mut vertex = |key: [usize; 3]| -> usize {
        *index.entry(key).or_insert_with(|| {
            vertices.push(Point3::from_array(key.map(|k| k as f64 * scale)));
            vertices.len() - 1
        })
    };

    for (face_id, &(fixed, high, a, b)) in CUBE_FACES.iter().enumerate() {
        let lattice = |u: usize, v: usize| {
            let mut key = [0; 3];
            key[fixed] = if high { n } else { 0 };
            key[a] = u;
            key[b] = v;
            key
        };
        for v in 0..n {
            for u in 0..n {
                let ids = [
                    vertex(lattice(u, v)),
                    vertex(lattice(u + 1, v)),
                    vertex(lattice(u + 1, v + 1)),
                    vertex(lattice(u, v + 1)),
                ];
                elements.push(QuadElement { vertex_ids: ids, face_id: face_id as u8 });
            }
        }
    }
    SurfaceMesh::new(vertices, elements)
}

/// `grid_n³` points on a uniform lattice over `[1/4, 3/4]³`.
pub fn make_eval_points(grid_n: usize) -> Vec<Point3> {
    let coord = |i: usize| {
        if grid_n == 1 {
            0.5
        } else {
            0.25 + 0.5 * i as f64 / (grid_n - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(grid_n.pow(3));
    for i in 0..grid_n {
        for j in 0..grid_n {
            for k in 0..grid_n {
                pts.push(Point3::new(coord(i), coord(j), coord(k)));
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_zero_is_six_unit_squares() {
        let m = make_cube_mesh(0).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.vertices.len(), 8);
        assert!(m.areas.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn element_counts() {
        assert_eq!(make_cube_mesh(2).unwrap().len(), 96);
        assert_eq!(make_cube_mesh(4).unwrap().len(), 1536);
    }

    #[test]
    fn level_two_areas() {
        let m = make_cube_mesh(2).unwrap();
        assert!(m.areas.iter().all(|&a| a == 1.0 / 16.0));
        assert_eq!(m.total_area(), 6.0);
        // (n + 1)^3 - (n - 1)^3 surface lattice points
        assert_eq!(m.vertices.len(), 125 - 27);
    }

    #[test]
    fn total_area_is_six() {
        for level in 0..6 {
            let m = make_cube_mesh(level).unwrap();
            assert!((m.total_area() - 6.0).abs() <= 6.0 * 1e-12, "level {level}");
        }
    }

    #[test]
    fn too_large_mesh_is_rejected() {
        assert!(matches!(make_cube_mesh(11), Err(Error::ResourceExhausted { .. })));
        assert!(matches!(make_cube_mesh(64), Err(Error::ResourceExhausted { .. })));
    }

    #[test]
    fn watertight_and_outward() {
        for level in 0..4 {
            let m = make_cube_mesh(level).unwrap();
            let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
            for e in &m.elements {
                for k in 0..4 {
                    let (a, b) = (e.vertex_ids[k], e.vertex_ids[(k + 1) % 4]);
                    // consistent orientation: each directed edge appears once,
                    // its reverse once in the neighbour
                    *edges.entry((a, b)).or_default() += 1;
                }
            }
            for (&(a, b), &count) in &edges {
                assert_eq!(count, 1);
                assert_eq!(edges.get(&(b, a)), Some(&1), "edge {a}-{b} at level {level}");
            }
            let mid = Point3::new(0.5, 0.5, 0.5);
            for i in 0..m.len() {
                let p = m.panel(i);
                let normal = p.du.cross(p.dv);
                assert!(normal.dot(m.centers[i] - mid) > 0.0);
            }
        }
    }

    #[test]
    fn centers_are_vertex_means() {
        let m = make_cube_mesh(3).unwrap();
        for i in 0..m.len() {
            let c = m.corners(i);
            let mean = (c[0] + c[1] + c[2] + c[3]) * 0.25;
            assert_eq!(mean, m.centers[i]);
            assert_eq!(m.panel(i).center(), m.centers[i]);
        }
    }

    #[test]
    fn refinement_nests() {
        let coarse = make_cube_mesh(2).unwrap();
        let fine = make_cube_mesh(3).unwrap();
        let mut children = vec![0; coarse.len()];
        for c in &fine.centers {
            let owners: Vec<usize> = (0..coarse.len())
                .filter(|&i| coarse.panel(i).distance_to(*c) < 1e-14)
                .collect();
            assert_eq!(owners.len(), 1);
            children[owners[0]] += 1;
        }
        assert!(children.iter().all(|&k| k == 4));
    }

    #[test]
    fn eval_points() {
        assert_eq!(make_eval_points(1), vec![Point3::new(0.5, 0.5, 0.5)]);
        let two = make_eval_points(2);
        assert_eq!(two.len(), 8);
        assert!(two.iter().all(|p| [p.x, p.y, p.z].iter().all(|&c| c == 0.25 || c == 0.75)));
        let five = make_eval_points(5);
        assert_eq!(five.len(), 125);
        let mut min = f64::INFINITY;
        for (i, a) in five.iter().enumerate() {
            for b in &five[i + 1..] {
                min = min.min(a.dist(*b));
            }
        }
        assert!((min - 0.125).abs() < 1e-15);
        let cube = make_cube_mesh(1).unwrap();
        for p in &five {
            let d = (0..cube.len()).map(|i| cube.panel(i).distance_to(*p)).fold(f64::INFINITY, f64::min);
            assert!(d >= 0.25 - 1e-15);
        }
    }

    #[test]
    fn panel_distance() {
        let p = FlatPanel {
            origin: Point3::ORIGIN,
            du: Point3::new(1.0, 0.0, 0.0),
            dv: Point3::new(0.0, 1.0, 0.0),
        };
        assert_eq!(p.distance_to(Point3::new(0.5, 0.5, 2.0)), 2.0);
        assert_eq!(p.distance_to(Point3::new(3.0, 0.5, 0.0)), 2.0);
        assert!((p.distance_to(Point3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn export_format() {
        let m = make_cube_mesh(0).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "8 6");
        assert_eq!(lines.len(), 1 + 8 + 6);
        assert_eq!(lines[1].split_whitespace().count(), 3);
        assert_eq!(lines[9].split_whitespace().count(), 4);
    }
}
