//! Morton ordering and cardinality-based cluster trees.
//!
//! Nodes are sorted along the Morton (Z-order) curve once; every cluster is
//! then a contiguous range `[lo, hi)` of the sorted array and splitting a
//! cluster is just splitting its range in the middle.

use std::fmt::Write as _;
use std::ops::Range;

use crate::geometry::Point3;
use crate::{Error, Result};

/// Bits per axis in a Morton code.
pub const MORTON_BITS: u32 = 21;
const MORTON_MAX: u64 = (1 << MORTON_BITS) - 1;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold(Self::new(first, first), |b, p| b.including(*p)))
    }

    pub fn including(self, p: Point3) -> Self {
        Self {
            min: Point3::new(self.min.x.min(p.x), self.min.y.min(p.y), self.min.z.min(p.z)),
            max: Point3::new(self.max.x.max(p.x), self.max.y.max(p.y), self.max.z.max(p.z)),
        }
    }

    pub fn union(self, other: Self) -> Self {
        self.including(other.min).including(other.max)
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|a| self.min.coord(a) <= p.coord(a) && p.coord(a) <= self.max.coord(a))
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Length of the diagonal.
    pub fn diam(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Distance between the boxes as point sets.
    pub fn dist(&self, other: &Self) -> f64 {
        let gap = |a: usize| {
            (other.min.coord(a) - self.max.coord(a))
                .max(self.min.coord(a) - other.max.coord(a))
                .max(0.0)
        };
        Point3::new(gap(0), gap(1), gap(2)).norm()
    }
}

pub fn bbox_diam(b: &BoundingBox) -> f64 {
    b.diam()
}

pub fn bbox_dist(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    b1.dist(b2)
}

/// 63-bit Morton code, 21 bits per axis, x in the high bit of every triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MortonCode(pub u64);

impl MortonCode {
    pub fn from_cell(cell: [u32; 3]) -> Self {
        let [x, y, z] = cell.map(|c| spread(c as u64 & MORTON_MAX));
        MortonCode(x << 2 | y << 1 | z)
    }

    pub fn cell(self) -> [u32; 3] {
        [self.0 >> 2, self.0 >> 1, self.0].map(|v| compact(v) as u32)
    }
}

// Inserts two zero bits between each of the low 21 bits.
fn spread(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | x << 32) & 0x001f_0000_0000_ffff;
    x = (x | x << 16) & 0x001f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    x = (x | x << 2) & 0x1249_2492_4924_9249;
    x
}

fn compact(v: u64) -> u64 {
    let mut x = v & 0x1249_2492_4924_9249;
    x = (x | x >> 2) & 0x10c3_0c30_c30c_30c3;
    x = (x | x >> 4) & 0x100f_00f0_0f00_f00f;
    x = (x | x >> 8) & 0x001f_0000_ff00_00ff;
    x = (x | x >> 16) & 0x001f_0000_0000_ffff;
    x = (x | x >> 32) & 0x1f_ffff;
    x
}

/// Morton code of `p` relative to `bbox`.
///
/// Each coordinate is normalized to `[0, 1]`, scaled to `2^21` cells and
/// clamped to the last cell, so the maximum corner maps to all ones.
pub fn morton_code(p: Point3, bbox: &BoundingBox) -> Result<MortonCode> {
    let mut cell = [0u32; 3];
    for (axis, c) in cell.iter_mut().enumerate() {
        let (lo, hi, v) = (bbox.min.coord(axis), bbox.max.coord(axis), p.coord(axis));
        let slack = 1e-12 * (hi - lo).abs().max(lo.abs()).max(hi.abs()).max(f64::MIN_POSITIVE);
        if !v.is_finite() || v < lo - slack || v > hi + slack {
            return Err(Error::Domain(format!("point {p:?} lies outside {bbox:?}")));
        }
        let extent = hi - lo;
        let t = if extent > 0.0 { ((v - lo) / extent).clamp(0.0, 1.0) } else { 0.0 };
        *c = ((t * (1u64 << MORTON_BITS) as f64) as u64).min(MORTON_MAX) as u32;
    }
    Ok(MortonCode::from_cell(cell))
}

/// Index of a cluster inside its [`ClusterTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub lo: usize,
    pub hi: usize,
    pub bbox: BoundingBox,
    pub children: Option<[ClusterId; 2]>,
    pub level: usize,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn range(&self) -> Range<usize> {
        self.lo..self.hi
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary cluster tree over Morton-sorted nodes.
///
/// `perm[s]` is the application index of the node at sorted (internal)
/// position `s`, and `iperm` is its inverse.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    clusters: Vec<Cluster>,
    pub perm: Vec<usize>,
    pub iperm: Vec<usize>,
    pub sorted_points: Vec<Point3>,
    pub leaf_size: usize,
}

impl ClusterTree {
    pub const ROOT: ClusterId = ClusterId(0);

    /// Sorts `nodes` by Morton code (ties by original index) and splits the
    /// sorted range in halves, the first half taking the extra node, until
    /// clusters hold at most `leaf_size` nodes.
    pub fn build(nodes: &[Point3], leaf_size: usize) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::InvalidInput("leaf size must be positive".into()));
        }
        let global = BoundingBox::from_points(nodes)
            .ok_or_else(|| Error::InvalidInput("cluster tree needs at least one node".into()))?;
        let codes = nodes
            .iter()
            .map(|&p| morton_code(p, &global))
            .collect::<Result<Vec<_>>>()?;
        let mut perm: Vec<usize> = (0..nodes.len()).collect();
        // sort_by_key is stable, so equal codes keep their original order
        perm.sort_by_key(|&i| codes[i]);
        let mut iperm = vec![0; nodes.len()];
        for (s, &i) in perm.iter().enumerate() {
            iperm[i] = s;
        }
        let sorted_points: Vec<Point3> = perm.iter().map(|&i| nodes[i]).collect();

        let mut tree = Self { clusters: Vec::new(), perm, iperm, sorted_points, leaf_size };
        tree.split(0, nodes.len(), 0);
        Ok(tree)
    }

    fn split(&mut self, lo: usize, hi: usize, level: usize) -> ClusterId {
        let id = ClusterId(self.clusters.len());
        let placeholder = BoundingBox::new(self.sorted_points[lo], self.sorted_points[lo]);
        self.clusters.push(Cluster { lo, hi, bbox: placeholder, children: None, level });
        if hi - lo > self.leaf_size {
            let mid = lo + (hi - lo).div_ceil(2);
            let left = self.split(lo, mid, level + 1);
            let right = self.split(mid, hi, level + 1);
            let bbox = self.clusters[left.0].bbox.union(self.clusters[right.0].bbox);
            let c = &mut self.clusters[id.0];
            c.children = Some([left, right]);
            c.bbox = bbox;
        } else {
            let bbox = BoundingBox::from_points(&self.sorted_points[lo..hi]).expect("nonempty");
            self.clusters[id.0].bbox = bbox;
        }
        id
    }

    pub fn root(&self) -> &Cluster {
        &self.clusters[0]
    }

    pub fn get(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.0]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.clusters.iter().map(|c| c.level).max().unwrap_or(0) + 1
    }

    /// Indented text dump, one cluster per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            let _ = writeln!(
                out,
                "{:indent$}[{}, {}) diam={:.6e}{}",
                "",
                c.lo,
                c.hi,
                c.bbox.diam(),
                if c.is_leaf() { " leaf" } else { "" },
                indent = 2 * c.level
            );
        }
        out
    }
}
