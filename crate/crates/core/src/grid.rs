//! Uniform hyperrectangular quantization of the state space.
//!
//! Cells are ordered row-major with dimension 0 varying fastest, so the
//! linear index of the multi-index `(k_0, k_1, ..)` is
//! `k_0 + L_0 * (k_1 + L_1 * (k_2 + ..))`. Every cell is half-open
//! `[a, a + w)` except the last one along each dimension, which is closed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        let dims = lower.len();
        if dims == 0 {
            return Err(Error::InvalidGrid("grid needs at least one dimension".into()));
        }
        if upper.len() != dims || cells.len() != dims {
            return Err(Error::InvalidGrid(format!(
                "bounds and resolution disagree on dimension count ({}, {}, {})",
                dims,
                upper.len(),
                cells.len()
            )));
        }
        for m in 0..dims {
            if !(lower[m].is_finite() && upper[m].is_finite()) || lower[m] >= upper[m] {
                return Err(Error::InvalidGrid(format!(
                    "dimension {m}: need finite lower < upper, got [{}, {}]",
                    lower[m], upper[m]
                )));
            }
            if cells[m] == 0 {
                return Err(Error::InvalidGrid(format!("dimension {m}: zero cells")));
            }
        }
        cells
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::InvalidGrid("total cell count overflows".into()))?;
        Ok(Self { lower, upper, cells })
    }

    /// Same resolution `cells` along every dimension.
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>, cells: usize) -> Result<Self> {
        let dims = lower.len();
        Self::new(lower, upper, vec![cells; dims])
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Total number of cells `L_S`.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self, m: usize) -> f64 {
        (self.upper[m] - self.lower[m]) / self.cells[m] as f64
    }

    pub fn widths(&self) -> Vec<f64> {
        (0..self.dims()).map(|m| self.width(m)).collect()
    }

    /// Index along one dimension, clamped to the boundary cells.
    fn axis_index(&self, m: usize, v: f64) -> usize {
        let last = self.cells[m] - 1;
        if v >= self.upper[m] {
            return last;
        }
        let k = ((v - self.lower[m]) / self.width(m)).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(last)
        }
    }

    pub fn cell_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch { expected: self.dims(), got: x.len() });
        }
        let mut index = 0usize;
        let mut stride = 1usize;
        for (m, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { dim: m, value: v });
            }
            index += stride * self.axis_index(m, v);
            stride *= self.cells[m];
        }
        Ok(index)
    }

    /// Per-dimension cell indices of linear index `l` (no range check).
    fn multi_index(&self, mut l: usize) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().map(move |&c| {
            let k = l % c;
            l /= c;
            k
        })
    }

    pub fn center(&self, l: usize) -> Result<Vec<f64>> {
        if l >= self.len() {
            return Err(Error::CellOutOfRange { index: l, cells: self.len() });
        }
        Ok(self.multi_index(l).enumerate().map(|(m, k)| self.lower[m] + (k as f64 + 0.5) * self.width(m)).collect())
    }

    /// Clamps `x` into the closed box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(m, &v)| v.clamp(self.lower[m], self.upper[m])).collect()
    }

    pub fn reconstruction_matrix(&self) -> ReconstructionMatrix {
        let n = self.len();
        let mut entries = DMatrix::zeros(self.dims(), n);
        for l in 0..n {
            for (m, k) in self.multi_index(l).enumerate() {
                entries[(m, l)] = self.lower[m] + (k as f64 + 0.5) * self.width(m);
            }
        }
        ReconstructionMatrix { entries }
    }
}

/// The `M x L_S` matrix whose column `l` is the center of cell `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionMatrix {
    entries: DMatrix<f64>,
}

impl ReconstructionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dims(&self) -> usize {
        self.entries.nrows()
    }

    pub fn len(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.ncols() == 0
    }

    pub fn point(&self, l: usize) -> Vec<f64> {
        self.entries.column(l).iter().copied().collect()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }
}
