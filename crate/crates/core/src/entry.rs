//! The application-facing extension point.
//!
//! An application describes its matrix through an [`EntryEvaluator`]: the row
//! and column node sets (used only for clustering) and a callback returning a
//! single entry. Indices are always in application order; the engine
//! translates from its Morton-sorted order through the cluster-tree
//! permutations.

use crate::dense::DenseMatrix;
use crate::geometry::Point3;
use crate::Result;

/// Source of matrix entries. Implementations are called concurrently from
/// many threads and must return bit-identical values for repeated calls.
pub trait EntryEvaluator: Sync {
    fn row_count(&self) -> usize;
    fn col_count(&self) -> usize;
    fn row_point(&self, i: usize) -> Point3;
    fn col_point(&self, j: usize) -> Point3;
    fn get_matrix_entry(&self, i: usize, j: usize) -> Result<f64>;

    fn row_points(&self) -> Vec<Point3> {
        (0..self.row_count()).map(|i| self.row_point(i)).collect()
    }

    fn col_points(&self) -> Vec<Point3> {
        (0..self.col_count()).map(|j| self.col_point(j)).collect()
    }
}

impl<E: EntryEvaluator + ?Sized> EntryEvaluator for &E {
    fn row_count(&self) -> usize {
        (**self).row_count()
    }
    fn col_count(&self) -> usize {
        (**self).col_count()
    }
    fn row_point(&self, i: usize) -> Point3 {
        (**self).row_point(i)
    }
    fn col_point(&self, j: usize) -> Point3 {
        (**self).col_point(j)
    }
    fn get_matrix_entry(&self, i: usize, j: usize) -> Result<f64> {
        (**self).get_matrix_entry(i, j)
    }
}

/// Evaluates `ev` on `rows × cols`, column by column.
pub fn evaluate_block<E: EntryEvaluator + ?Sized>(ev: &E, rows: &[usize], cols: &[usize]) -> Result<DenseMatrix> {
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    fill_block(ev, rows, cols, &mut data)?;
    DenseMatrix::from_col_major(rows.len(), cols.len(), data)
}

pub(crate) fn fill_block<E: EntryEvaluator + ?Sized>(
    ev: &E,
    rows: &[usize],
    cols: &[usize],
    out: &mut Vec<f64>,
) -> Result<()> {
    for &j in cols {
        for &i in rows {
            out.push(ev.get_matrix_entry(i, j)?);
        }
    }
    Ok(())
}

/// The identity matrix on a set of points.
#[derive(Debug, Clone)]
pub struct IdentityEvaluator {
    pub points: Vec<Point3>,
}

impl EntryEvaluator for IdentityEvaluator {
    fn row_count(&self) -> usize {
        self.points.len()
    }
    fn col_count(&self) -> usize {
        self.points.len()
    }
    fn row_point(&self, i: usize) -> Point3 {
        self.points[i]
    }
    fn col_point(&self, j: usize) -> Point3 {
        self.points[j]
    }
    fn get_matrix_entry(&self, i: usize, j: usize) -> Result<f64> {
        Ok(if i == j { 1.0 } else { 0.0 })
    }
}

/// Point-to-point kernel `1 / |x - y|` between two point sets, with a
/// user-chosen value on coincident points.
#[derive(Debug, Clone)]
pub struct InverseDistanceEvaluator {
    pub rows: Vec<Point3>,
    pub cols: Vec<Point3>,
    pub self_value: f64,
}

impl EntryEvaluator for InverseDistanceEvaluator {
    fn row_count(&self) -> usize {
        self.rows.len()
    }
    fn col_count(&self) -> usize {
        self.cols.len()
    }
    fn row_point(&self, i: usize) -> Point3 {
        self.rows[i]
    }
    fn col_point(&self, j: usize) -> Point3 {
        self.cols[j]
    }
    fn get_matrix_entry(&self, i: usize, j: usize) -> Result<f64> {
        let r = self.rows[i].dist(self.cols[j]);
        Ok(if r == 0.0 { self.self_value } else { 1.0 / r })
    }
}
