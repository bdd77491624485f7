//! Block cluster tree and the two leaf task lists.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::clustering::{Cluster, ClusterId, ClusterTree};
use crate::entry::EntryEvaluator;
use crate::geometry::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTreeConfig {
    /// Admissibility parameter η.
    pub eta: f64,
    pub leaf_size: usize,
}

impl Default for BlockTreeConfig {
    fn default() -> Self {
        Self { eta: 1.0, leaf_size: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Admissible,
    Dense,
    Inner,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Admissible => "admissible",
            BlockKind::Dense => "dense",
            BlockKind::Inner => "inner",
        }
    }
}

/// `min(diam τ, diam σ) <= η dist(τ, σ)` on the cluster bounding boxes.
pub fn is_admissible(tau: &Cluster, sigma: &Cluster, eta: f64) -> bool {
    tau.bbox.diam().min(sigma.bbox.diam()) <= eta * tau.bbox.dist(&sigma.bbox)
}

/// A leaf block `rows × cols` in internal (sorted) indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafBlock {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl LeafBlock {
    pub fn rows(&self) -> Range<usize> {
        self.row_lo..self.row_hi
    }

    pub fn cols(&self) -> Range<usize> {
        self.col_lo..self.col_hi
    }

    pub fn n_rows(&self) -> usize {
        self.row_hi - self.row_lo
    }

    pub fn n_cols(&self) -> usize {
        self.col_hi - self.col_lo
    }

    pub fn size(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    pub(crate) fn wrap_err(&self, source: Error) -> Error {
        Error::Block {
            row_lo: self.row_lo,
            row_hi: self.row_hi,
            col_lo: self.col_lo,
            col_hi: self.col_hi,
            source: Box::new(source),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TaskLists {
    pub admissible: Vec<LeafBlock>,
    pub dense: Vec<LeafBlock>,
}

impl TaskLists {
    pub fn len(&self) -> usize {
        self.admissible.len() + self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dense_entries(&self) -> usize {
        self.dense.iter().map(LeafBlock::size).sum()
    }

    /// Hash of both lists, identical for identical inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.hash(&mut h);
        h.finish()
    }

    /// One `kind row_lo row_hi col_lo col_hi` line per leaf.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (kind, list) in [(BlockKind::Dense, &self.dense), (BlockKind::Admissible, &self.admissible)] {
            for b in list {
                let _ = writeln!(out, "{} {} {} {} {}", kind.as_str(), b.row_lo, b.row_hi, b.col_lo, b.col_hi);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BlockNode {
    pub row: ClusterId,
    pub col: ClusterId,
    pub kind: BlockKind,
    pub children: Vec<usize>,
}

/// Block cluster tree stored as an arena; node 0 is `I × J`.
#[derive(Debug, Clone)]
pub struct BlockTree {
    pub nodes: Vec<BlockNode>,
}

impl BlockTree {
    /// Builds the tree from the two root clusters.
    ///
    /// A block is subdivided only if it is not admissible and both clusters
    /// are larger than the leaf size; otherwise it becomes a leaf, which is
    /// low-rank if admissible and dense if not. Leaves are appended in
    /// depth-first order, row child before column child.
    pub fn build(rows: &ClusterTree, cols: &ClusterTree, cfg: &BlockTreeConfig) -> Result<(Self, TaskLists)> {
        if cfg.eta.is_nan() || cfg.eta < 0.0 {
            return Err(Error::InvalidInput(format!("eta must be nonnegative, got {}", cfg.eta)));
        }
        if rows.leaf_size != cfg.leaf_size || cols.leaf_size != cfg.leaf_size {
            return Err(Error::InvalidInput(format!(
                "cluster trees use leaf sizes {}/{}, block tree expects {}",
                rows.leaf_size, cols.leaf_size, cfg.leaf_size
            )));
        }
        let mut tree = BlockTree { nodes: Vec::new() };
        let mut tasks = TaskLists::default();
        tree.recurse(rows, cols, ClusterTree::ROOT, ClusterTree::ROOT, cfg, &mut tasks);
        Ok((tree, tasks))
    }

    fn recurse(
        &mut self,
        rows: &ClusterTree,
        cols: &ClusterTree,
        tau_id: ClusterId,
        sigma_id: ClusterId,
        cfg: &BlockTreeConfig,
        tasks: &mut TaskLists,
    ) -> usize {
        let (tau, sigma) = (rows.get(tau_id), cols.get(sigma_id));
        let admissible = is_admissible(tau, sigma, cfg.eta);
        let me = self.nodes.len();
        let block = LeafBlock { row_lo: tau.lo, row_hi: tau.hi, col_lo: sigma.lo, col_hi: sigma.hi };

        if !admissible && tau.len() > cfg.leaf_size && sigma.len() > cfg.leaf_size {
            self.nodes.push(BlockNode { row: tau_id, col: sigma_id, kind: BlockKind::Inner, children: Vec::new() });
            let (Some(tc), Some(sc)) = (tau.children, sigma.children) else {
                unreachable!("clusters above the leaf size always have children");
            };
            let mut children = Vec::with_capacity(4);
            for t in tc {
                for s in sc {
                    children.push(self.recurse(rows, cols, t, s, cfg, tasks));
                }
            }
            self.nodes[me].children = children;
        } else {
            let kind = if admissible {
                tasks.admissible.push(block);
                BlockKind::Admissible
            } else {
                tasks.dense.push(block);
                BlockKind::Dense
            };
            self.nodes.push(BlockNode { row: tau_id, col: sigma_id, kind, children: Vec::new() });
        }
        me
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind != BlockKind::Inner).count()
    }
}

/// Cluster trees, block tree configuration and the resulting task lists:
/// everything every worker needs to agree on before assembly.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    pub rows: ClusterTree,
    pub cols: ClusterTree,
    pub config: BlockTreeConfig,
    pub tasks: TaskLists,
}

impl BlockStructure {
    pub fn build(row_points: &[Point3], col_points: &[Point3], config: BlockTreeConfig) -> Result<Self> {
        let rows = ClusterTree::build(row_points, config.leaf_size)?;
        let cols = ClusterTree::build(col_points, config.leaf_size)?;
        let (_, tasks) = BlockTree::build(&rows, &cols, &config)?;
        Ok(Self { rows, cols, config, tasks })
    }

    /// Clusters the row and column nodes of an evaluator.
    pub fn for_evaluator<E: EntryEvaluator + ?Sized>(ev: &E, config: BlockTreeConfig) -> Result<Self> {
        Self::build(&ev.row_points(), &ev.col_points(), config)
    }

    /// Rebuilds the task lists from the cluster trees.
    pub fn rebuild_tasks(&self) -> Result<TaskLists> {
        BlockTree::build(&self.rows, &self.cols, &self.config).map(|(_, t)| t)
    }
}
