//! Linear maps on the discretized algebra, stored per component.
//!
//! A map `S` is kept as a sparse table of component maps: for each pair
//! (output point `k`, input point `j`) an `n²×n²` matrix acting on `M_n` in
//! the matrix-unit basis, so that `S(h)_k = Σ_j component[k][j](h_j)`.
//! Since the grid summands sit under orthogonal central projections, `S` is
//! completely positive iff every component map is, which reduces complete
//! positivity to per-component Choi matrices of size `n²`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gridalg::{self, Grid, MatrixFunction};
use crate::matcore::{self, HermitianMatrix};
use crate::{CMatrix, CVector, C64};

/// Row-major index of the matrix unit `e_{ab}` in the `n²`-dimensional basis.
#[inline]
pub fn unit_index(n: usize, a: usize, b: usize) -> usize {
    a * n + b
}

/// `vec(x)` in the row-major matrix-unit basis.
pub fn vec_matrix(x: &CMatrix) -> CVector {
    let n = x.nrows();
    CVector::from_fn(n * n, |idx, _| x[(idx / n, idx % n)])
}

/// Inverse of [`vec_matrix`].
pub fn unvec_matrix(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |a, b| v[a * n + b])
}

/// Optional block structure: a partition of the grid such that all nonzero
/// components stay within one block. Lets verification and rank computations
/// work block by block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellBlockTag {
    pub cells: Vec<Vec<usize>>,
}

/// Linear map on `M_n ⊗ C(X_grid)` with per-component storage. Components
/// absent from the table are zero.
#[derive(Debug, Clone)]
pub struct GridMap {
    n: usize,
    grid: Grid,
    components: BTreeMap<(usize, usize), CMatrix>,
    structure: Option<CellBlockTag>,
    rank_bound: Option<usize>,
}

impl GridMap {
    pub fn new(n: usize, grid: Grid) -> Self {
        GridMap {
            n,
            grid,
            components: BTreeMap::new(),
            structure: None,
            rank_bound: None,
        }
    }

    pub fn identity(n: usize, grid: &Grid) -> Self {
        let mut map = GridMap::new(n, grid.clone());
        for j in 0..grid.len() {
            map.set_component(j, j, CMatrix::identity(n * n, n * n));
        }
        map
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank_bound(&self) -> Option<usize> {
        self.rank_bound
    }

    pub fn set_rank_bound(&mut self, bound: usize) {
        self.rank_bound = Some(bound);
    }

    pub fn structure(&self) -> Option<&CellBlockTag> {
        self.structure.as_ref()
    }

    pub fn set_structure(&mut self, tag: CellBlockTag) {
        self.structure = Some(tag);
    }

    pub fn components(&self) -> impl Iterator<Item = (&(usize, usize), &CMatrix)> {
        self.components.iter()
    }

    pub fn component(&self, k: usize, j: usize) -> Option<&CMatrix> {
        self.components.get(&(k, j))
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Inserts (or accumulates into) the component at `(k, j)`.
    pub fn add_to_component(&mut self, k: usize, j: usize, m: CMatrix) {
        let nn = self.n * self.n;
        assert_eq!(m.nrows(), nn);
        assert_eq!(m.ncols(), nn);
        self.components
            .entry((k, j))
            .and_modify(|existing| *existing += &m)
            .or_insert(m);
    }

    pub fn set_component(&mut self, k: usize, j: usize, m: CMatrix) {
        let nn = self.n * self.n;
        assert_eq!(m.nrows(), nn);
        assert_eq!(m.ncols(), nn);
        self.components.insert((k, j), m);
    }

    /// `S(h)_k = Σ_j component[k][j](h_j)`.
    pub fn apply(&self, h: &MatrixFunction) -> Result<MatrixFunction> {
        if h.n() != self.n || h.grid() != &self.grid {
            return Err(Error::ShapeMismatch(
                "map and element live on different algebras".into(),
            ));
        }
        let n = self.n;
        let mut out = vec![CMatrix::zeros(n, n); self.grid.len()];
        let vecs: Vec<CVector> = h.values().iter().map(vec_matrix).collect();
        for (&(k, j), m) in &self.components {
            let img = m * &vecs[j];
            out[k] += unvec_matrix(&img, n);
        }
        MatrixFunction::new(n, self.grid.clone(), out)
    }

    /// Pointwise sum of two maps.
    pub fn add(&self, other: &GridMap) -> Result<GridMap> {
        if self.n != other.n || self.grid != other.grid {
            return Err(Error::ShapeMismatch("maps on different algebras".into()));
        }
        let mut out = self.clone();
        out.structure = None;
        out.rank_bound = None;
        for (&(k, j), m) in &other.components {
            out.add_to_component(k, j, m.clone());
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> GridMap {
        let mut out = self.clone();
        for m in out.components.values_mut() {
            *m *= C64::new(c, 0.0);
        }
        out
    }

    /// Choi matrix of the component at `(k, j)`:
    /// `C[(a,b),(c,d)] = (component(e_{ac}))_{bd}`. The component map is CP
    /// iff this matrix is Hermitian PSD.
    pub fn component_choi(&self, k: usize, j: usize) -> CMatrix {
        let n = self.n;
        let nn = n * n;
        match self.components.get(&(k, j)) {
            None => CMatrix::zeros(nn, nn),
            Some(m) => CMatrix::from_fn(nn, nn, |row, col| {
                let (a, b) = (row / n, row % n);
                let (c, d) = (col / n, col % n);
                m[(unit_index(n, b, d), unit_index(n, a, c))]
            }),
        }
    }

    /// Assembles the dense `(n²m)×(n²m)` matrix of the map. Intended for
    /// small grids (oracle tests, rank checks without block structure).
    pub fn assemble_dense(&self) -> CMatrix {
        let nn = self.n * self.n;
        let dim = nn * self.grid.len();
        let mut out = CMatrix::zeros(dim, dim);
        for (&(k, j), m) in &self.components {
            for r in 0..nn {
                for c in 0..nn {
                    out[(k * nn + r, j * nn + c)] = m[(r, c)];
                }
            }
        }
        out
    }

    /// Numerical rank of the assembled map (singular values above `cutoff`).
    ///
    /// With a block structure tag the map is block-diagonal after grouping
    /// grid points by cell, so the rank is the sum of per-block ranks; this
    /// is verified against the component support before use.
    pub fn numerical_rank(&self, cutoff: f64) -> Result<usize> {
        if let Some(tag) = &self.structure {
            let mut cell_of = vec![usize::MAX; self.grid.len()];
            for (idx, cell) in tag.cells.iter().enumerate() {
                for &j in cell {
                    if j >= self.grid.len() || cell_of[j] != usize::MAX {
                        return Err(Error::Internal(
                            "block structure tag is not a partition".into(),
                        ));
                    }
                    cell_of[j] = idx;
                }
            }
            if cell_of.iter().any(|&c| c == usize::MAX) {
                return Err(Error::Internal(
                    "block structure tag does not cover the grid".into(),
                ));
            }
            for &(k, j) in self.components.keys() {
                if cell_of[k] != cell_of[j] {
                    return Err(Error::Internal(format!(
                        "component ({k}, {j}) crosses the declared block structure"
                    )));
                }
            }
            let nn = self.n * self.n;
            let mut rank = 0usize;
            for cell in &tag.cells {
                let pos: BTreeMap<usize, usize> =
                    cell.iter().enumerate().map(|(p, &j)| (j, p)).collect();
                let dim = nn * cell.len();
                let mut block = CMatrix::zeros(dim, dim);
                for (&(k, j), m) in &self.components {
                    let (Some(&pk), Some(&pj)) = (pos.get(&k), pos.get(&j)) else {
                        continue;
                    };
                    for r in 0..nn {
                        for c in 0..nn {
                            block[(pk * nn + r, pj * nn + c)] = m[(r, c)];
                        }
                    }
                }
                rank += numerical_rank_dense(&block, cutoff);
            }
            Ok(rank)
        } else {
            Ok(numerical_rank_dense(&self.assemble_dense(), cutoff))
        }
    }
}

/// Count of singular values strictly above `cutoff`.
pub fn numerical_rank_dense(m: &CMatrix, cutoff: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    m.singular_values().iter().filter(|&&s| s > cutoff).count()
}

/// Outcome of UCP verification.
#[derive(Debug, Clone)]
pub struct UcpReport {
    pub unitality_defect: f64,
    pub min_choi_eigenvalue: f64,
    /// `max ‖C − C*‖` over component Choi matrices; a CP map must also be
    /// Hermiticity-preserving, which is what this measures.
    pub choi_hermiticity_defect: f64,
    pub is_ucp: bool,
    pub worst_component: (usize, usize),
}

/// Verifies unitality and complete positivity of `S` at tolerance `tol`.
pub fn verify_ucp(s: &GridMap, tol: f64) -> Result<UcpReport> {
    let unit = MatrixFunction::unit(s.n(), s.grid());
    let s_unit = s.apply(&unit)?;
    let unitality_defect = gridalg::sup_norm(&s_unit.sub(&unit)?);

    let mut min_choi = f64::INFINITY;
    let mut herm_defect = 0.0_f64;
    let mut worst = (0, 0);
    for (&(k, j), _) in s.components() {
        let choi = s.component_choi(k, j);
        let dev = matcore::op_norm(&(&choi - choi.adjoint()));
        herm_defect = herm_defect.max(dev);
        let sym = HermitianMatrix::symmetrize(choi);
        let check = matcore::is_psd(&sym, 0.0)?;
        if check.min_eigenvalue < min_choi {
            min_choi = check.min_eigenvalue;
            worst = (k, j);
        }
    }
    let total = s.grid().len() * s.grid().len();
    if s.component_count() < total && min_choi > 0.0 {
        // Absent components are zero maps with vanishing Choi spectrum.
        min_choi = 0.0;
    }
    if min_choi == f64::INFINITY {
        min_choi = 0.0;
    }

    let is_ucp = unitality_defect <= tol && min_choi >= -tol && herm_defect <= tol;
    Ok(UcpReport {
        unitality_defect,
        min_choi_eigenvalue: min_choi,
        choi_hermiticity_defect: herm_defect,
        is_ucp,
        worst_component: worst,
    })
}

/// Largest identity defect `‖S(x) − x‖` over the probe family
/// `{b ⊗ f}` for `b` in `probes` (operator norm at most 1), `f` in `funcs`,
/// together with the `extra` elements. This samples the identity defect from
/// below; it is not the supremum over the unit ball.
pub fn defect_probe(
    s: &GridMap,
    funcs: &[CVector],
    probes: &[CMatrix],
    extra: &[MatrixFunction],
) -> Result<f64> {
    for b in probes {
        let norm = matcore::op_norm(b);
        if norm > 1.0 + 1e-12 {
            return Err(Error::InvalidProbe { norm });
        }
    }
    let mut worst = 0.0_f64;
    for f in funcs {
        for b in probes {
            let x = gridalg::tensor_embed_on(b, f, s.grid())?;
            let defect = gridalg::sup_norm(&s.apply(&x)?.sub(&x)?);
            worst = worst.max(defect);
        }
    }
    for x in extra {
        let defect = gridalg::sup_norm(&s.apply(x)?.sub(x)?);
        worst = worst.max(defect);
    }
    Ok(worst)
}

/// Largest violation of `φ∘S = φ` over the basis `{e_ab ⊗ δ_q}`. Both sides
/// are linear, so this bounds the defect on the whole algebra up to the
/// basis-expansion constant.
pub fn preservation_defect(s: &GridMap, state: &crate::states::State) -> Result<f64> {
    if s.n() != state.n() || s.grid() != state.grid() {
        return Err(Error::ShapeMismatch(
            "map and state live on different algebras".into(),
        ));
    }
    let n = s.n();
    let m = s.grid().len();
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            for q in 0..m {
                let mut values = vec![CMatrix::zeros(n, n); m];
                values[q] = gridalg::matrix_unit(n, a, b);
                let h = MatrixFunction::new(n, s.grid().clone(), values)?;
                let lhs = state.eval(&s.apply(&h)?)?;
                let rhs = state.eval(&h)?;
                worst = worst.max((lhs - rhs).norm());
            }
        }
    }
    Ok(worst)
}

/// Builds the component matrix of the map `x ↦ c* x c`.
pub fn congruence_component(c: &CMatrix) -> CMatrix {
    let n = c.nrows();
    let nn = n * n;
    let cadj = c.adjoint();
    CMatrix::from_fn(nn, nn, |row, col| {
        let (a, b) = (row / n, row % n);
        let (p, q) = (col / n, col % n);
        // (c* e_{pq} c)_{ab} = conj(c[p,a]) * c[q,b]
        cadj[(a, p)] * c[(q, b)]
    })
}

/// Component matrix recovered from a Choi matrix (inverse of
/// [`GridMap::component_choi`]).
pub fn component_from_choi(choi: &CMatrix, n: usize) -> CMatrix {
    let nn = n * n;
    CMatrix::from_fn(nn, nn, |row, col| {
        let (b, d) = (row / n, row % n);
        let (a, c) = (col / n, col % n);
        choi[(unit_index(n, a, b), unit_index(n, c, d))]
    })
}
