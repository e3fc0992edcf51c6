//! The discretized algebra `M_n ⊗ C(X)`: matrix-valued functions on a
//! uniform midpoint grid over `[0,1]`, with pointwise *-algebra operations
//! and the sup-of-operator-norms C*-norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{self, HermitianMatrix};
use crate::{CMatrix, CVector, C64};

/// Uniform midpoint grid on `[0,1]`: `x_j = (2j−1)/(2m)` for `j = 1..m`
/// (stored 0-based as `(2j+1)/(2m)`, `j = 0..m`). Midpoints keep quadrature
/// symmetric and avoid endpoint degeneracies when measures become weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
    dyadic_level: Option<u32>,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("grid needs at least one point".into()));
        }
        Ok(Grid {
            m,
            dyadic_level: None,
        })
    }

    /// Grid with `m = 2^level` points.
    pub fn dyadic(level: u32) -> Result<Self> {
        if level > 24 {
            return Err(Error::InvalidArgument(format!(
                "dyadic level {level} too large"
            )));
        }
        Ok(Grid {
            m: 1usize << level,
            dyadic_level: Some(level),
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dyadic_level(&self) -> Option<u32> {
        self.dyadic_level
    }

    pub fn point(&self, j: usize) -> f64 {
        (2.0 * j as f64 + 1.0) / (2.0 * self.m as f64)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.m).map(|j| self.point(j))
    }

    /// Index ranges of the dyadic blocks at `level`, finest first to coarsest:
    /// `2^level` consecutive blocks of length `m / 2^level`.
    pub fn dyadic_blocks(&self, level: u32) -> Result<Vec<std::ops::Range<usize>>> {
        let base = self
            .dyadic_level
            .ok_or_else(|| Error::InvalidArgument("grid is not dyadic".into()))?;
        if level > base {
            return Err(Error::InvalidLevels {
                level: base,
                balance_level: level,
            });
        }
        let len = self.m >> level;
        Ok((0..(1usize << level))
            .map(|k| (k * len)..((k + 1) * len))
            .collect())
    }
}

/// Element of the discretized algebra: one `n×n` complex matrix per grid
/// point. General (not necessarily self-adjoint) elements are allowed;
/// positivity and self-adjointness are predicates, not invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFunction {
    n: usize,
    grid: Grid,
    values: Vec<CMatrix>,
}

impl MatrixFunction {
    pub fn new(n: usize, grid: Grid, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        for v in &values {
            if v.nrows() != n || v.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "expected {n}x{n} values, got {}x{}",
                    v.nrows(),
                    v.ncols()
                )));
            }
        }
        Ok(MatrixFunction { n, grid, values })
    }

    /// The unit `1 ⊗ 1` of the algebra.
    pub fn unit(n: usize, grid: &Grid) -> Self {
        MatrixFunction {
            n,
            grid: grid.clone(),
            values: vec![CMatrix::identity(n, n); grid.len()],
        }
    }

    pub fn zero(n: usize, grid: &Grid) -> Self {
        MatrixFunction {
            n,
            grid: grid.clone(),
            values: vec![CMatrix::zeros(n, n); grid.len()],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn value(&self, j: usize) -> &CMatrix {
        &self.values[j]
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [CMatrix] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &MatrixFunction) -> Result<()> {
        if self.n != other.n || self.grid != other.grid {
            return Err(Error::ShapeMismatch(format!(
                "(n = {}, m = {}) vs (n = {}, m = {})",
                self.n,
                self.grid.len(),
                other.n,
                other.grid.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MatrixFunction) -> Result<MatrixFunction> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(MatrixFunction {
            n: self.n,
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &MatrixFunction) -> Result<MatrixFunction> {
        self.same_shape(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(MatrixFunction {
            n: self.n,
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scale(&self, c: C64) -> MatrixFunction {
        MatrixFunction {
            n: self.n,
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise self-adjointness defect `max_j ‖h_j − h_j*‖`.
    pub fn self_adjointness_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|v| matcore::op_norm(&(v - v.adjoint())))
            .fold(0.0, f64::max)
    }

    /// Minimal pointwise eigenvalue over the grid (values symmetrized first).
    pub fn pointwise_min_eigenvalue(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for v in &self.values {
            let h = HermitianMatrix::symmetrize(v.clone());
            let check = matcore::is_psd(&h, 0.0)?;
            min = min.min(check.min_eigenvalue);
        }
        Ok(min)
    }
}

/// `b ⊗ f`: the matrix `b` scaled pointwise by the scalar function `f`.
pub fn tensor_embed(b: &CMatrix, f: &CVector) -> Result<MatrixFunction> {
    if b.nrows() != b.ncols() {
        return Err(Error::ShapeMismatch("tensor factor must be square".into()));
    }
    let grid = Grid::new(f.len())?;
    let values = f.iter().map(|&c| b * c).collect();
    MatrixFunction::new(b.nrows(), grid, values)
}

/// `b ⊗ f` on an explicit grid (checked against the length of `f`).
pub fn tensor_embed_on(b: &CMatrix, f: &CVector, grid: &Grid) -> Result<MatrixFunction> {
    if f.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: f.len(),
        });
    }
    if b.nrows() != b.ncols() {
        return Err(Error::ShapeMismatch("tensor factor must be square".into()));
    }
    let values = f.iter().map(|&c| b * c).collect();
    MatrixFunction::new(b.nrows(), grid.clone(), values)
}

/// Scalar function `k ↦ (h_k)_{ij}` (0-based indices).
pub fn corner_extract(h: &MatrixFunction, i: usize, j: usize) -> Result<CVector> {
    let n = h.n();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    Ok(CVector::from_iterator(
        h.grid().len(),
        h.values().iter().map(|v| v[(i, j)]),
    ))
}

/// The C*-norm: `max_j ‖h_j‖` with `‖·‖` the operator norm.
pub fn sup_norm(h: &MatrixFunction) -> f64 {
    h.values()
        .iter()
        .map(matcore::op_norm)
        .fold(0.0, f64::max)
}

/// Pointwise matrix product.
pub fn multiply(a: &MatrixFunction, b: &MatrixFunction) -> Result<MatrixFunction> {
    a.same_shape(b)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .collect();
    MatrixFunction::new(a.n(), a.grid().clone(), values)
}

/// Pointwise conjugate transpose.
pub fn adjoint(a: &MatrixFunction) -> MatrixFunction {
    MatrixFunction::new(
        a.n(),
        a.grid().clone(),
        a.values().iter().map(|v| v.adjoint()).collect(),
    )
    .expect("shape preserved")
}

/// Named scalar test functions on a grid, all with values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionPreset {
    /// `f ≡ 1`.
    One,
    /// `f(x) = x`.
    Linear,
    /// `f(x) = x²`.
    Square,
    /// `f(x) = (1 + cos 2πx)/2`.
    Cosine,
}

impl FunctionPreset {
    pub const ALL: [FunctionPreset; 4] = [
        FunctionPreset::One,
        FunctionPreset::Linear,
        FunctionPreset::Square,
        FunctionPreset::Cosine,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FunctionPreset::One => "one",
            FunctionPreset::Linear => "linear",
            FunctionPreset::Square => "square",
            FunctionPreset::Cosine => "cosine",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionPreset::One => 1.0,
            FunctionPreset::Linear => x,
            FunctionPreset::Square => x * x,
            FunctionPreset::Cosine => 0.5 * (1.0 + (2.0 * std::f64::consts::PI * x).cos()),
        }
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.points().map(|x| self.eval(x)).collect()
    }

    pub fn sample_complex(&self, grid: &Grid) -> CVector {
        CVector::from_iterator(grid.len(), grid.points().map(|x| C64::new(self.eval(x), 0.0)))
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "one" | "constant" => Ok(FunctionPreset::One),
            "linear" | "x" => Ok(FunctionPreset::Linear),
            "square" | "x2" => Ok(FunctionPreset::Square),
            "cosine" | "cos" => Ok(FunctionPreset::Cosine),
            other => Err(Error::InvalidArgument(format!(
                "unknown function preset '{other}'"
            ))),
        }
    }
}

/// Real samples promoted to a complex scalar function.
pub fn scalar_fn(values: &[f64]) -> CVector {
    CVector::from_iterator(values.len(), values.iter().map(|&x| C64::new(x, 0.0)))
}

/// Matrix unit `e_{ij}` (0-based) in `M_n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}
