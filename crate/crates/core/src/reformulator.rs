//! Conversion of a UCP state-preserving map into an exactly block-form map
//! with the same guarantees, for diagonal states with mass in every corner.
//!
//! Three stages, each preserving complete positivity:
//!
//! 1. [`compress_blocks`]: `S̃(x) = Σ_{i,j} e_ii S(e_ii x e_jj) e_jj`, which
//!    maps every corner `e_ij ⊗ A` into itself. In the matrix-unit basis
//!    this keeps exactly the diagonal of every component matrix, and the
//!    component Choi matrices of `S̃` are compressions of those of `S`.
//! 2. [`add_corrections`]: `R = S̃ + Σ_k T_k` with
//!    `T_k(x) = φ(e_kk x e_kk − e_kk S(e_kk x e_kk) e_kk)/φ(e_kk) · e_kk⊗1`;
//!    for diagonal φ-preserving `S` the functionals are positive and `R`
//!    preserves `φ` exactly.
//! 3. [`renormalize`]: `R̃ = V R(·) V + Σ_k D_k` where `V` carries the
//!    corner weights `‖R(e_kk⊗1)‖^{-1/2}` and
//!    `D_k(x) = [φ(e_kk x e_kk)/φ(e_kk)] · (e_kk⊗1 − R(e_kk⊗1)/‖R(e_kk⊗1)‖)`.
//!
//! `D_k` keeps only the second summand of the classical correction term;
//! the first summand, `‖R(e_kk)‖^{-1} R(e_kk x e_kk)`, already appears as
//! the `kk`-part of `V R(x) V`, and adding it twice breaks unitality. The
//! literal two-summand form stays available behind
//! [`RenormalizationForm::Literal`] so its unitality defect can be measured
//! rather than assumed.

use crate::blockmap::{self, GridMap, UcpReport};
use crate::error::{Error, Precondition, Result};
use crate::gridalg::{self, Grid, MatrixFunction};
use crate::matcore::{self, HermitianMatrix};
use crate::states::State;
use crate::{CMatrix, CVector, C64};

/// Input tolerance: maps arriving from files may carry this much UCP or
/// preservation error and are still accepted.
pub const INPUT_TOL: f64 = 1e-7;

/// Output tolerance: pipeline outputs are re-certified at this level.
pub const OUTPUT_TOL: f64 = 1e-9;

/// Which renormalization formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RenormalizationForm {
    /// `V R(·) V + Σ_k D_k`; exactly unital (the default).
    #[default]
    Corrected,
    /// The two-summand correction term including
    /// `‖R(e_kk)‖^{-1} R(e_kk x e_kk)`; double-counts the corner part and is
    /// kept only so the resulting unitality defect is measurable.
    Literal,
}

/// A map that sends every corner `e_ij ⊗ A` into itself, stored as its
/// `n²` corner maps on scalar functions (each an `m×m` matrix).
#[derive(Debug, Clone)]
pub struct BlockFormMap {
    n: usize,
    grid: Grid,
    corners: Vec<CMatrix>,
}

impl BlockFormMap {
    pub fn new(n: usize, grid: Grid, corners: Vec<CMatrix>) -> Result<Self> {
        if corners.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: corners.len(),
            });
        }
        let m = grid.len();
        for c in &corners {
            if c.nrows() != m || c.ncols() != m {
                return Err(Error::ShapeMismatch(format!(
                    "corner map must be {m}x{m}, got {}x{}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        Ok(BlockFormMap { n, grid, corners })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The corner map `R_ab` acting on scalar functions (0-based corners).
    pub fn corner(&self, a: usize, b: usize) -> &CMatrix {
        &self.corners[a * self.n + b]
    }

    pub fn apply_corner(&self, a: usize, b: usize, f: &CVector) -> CVector {
        self.corner(a, b) * f
    }

    pub fn apply(&self, h: &MatrixFunction) -> Result<MatrixFunction> {
        if h.n() != self.n || h.grid() != &self.grid {
            return Err(Error::ShapeMismatch(
                "map and element live on different algebras".into(),
            ));
        }
        let m = self.grid.len();
        let mut out = vec![CMatrix::zeros(self.n, self.n); m];
        for a in 0..self.n {
            for b in 0..self.n {
                let f = gridalg::corner_extract(h, a, b)?;
                let img = self.apply_corner(a, b, &f);
                for k in 0..m {
                    out[k][(a, b)] = img[k];
                }
            }
        }
        MatrixFunction::new(self.n, self.grid.clone(), out)
    }

    /// `max_{a,b} ‖R_ba − conj(R_ab)‖`: the Hermitian-symmetry defect of the
    /// corner family (`R_ba(f) = conj(R_ab(conj f))` for adjoint-compatible
    /// maps).
    pub fn hermitian_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for a in 0..self.n {
            for b in 0..self.n {
                let conj_ab = self.corner(a, b).map(|z| z.conj());
                worst = worst.max(matcore::op_norm(&(self.corner(b, a) - conj_ab)));
            }
        }
        worst
    }

    /// The dense component view; every component matrix is diagonal in the
    /// matrix-unit basis with entries taken from the corner maps.
    pub fn to_grid_map(&self) -> GridMap {
        let n = self.n;
        let nn = n * n;
        let m = self.grid.len();
        let mut map = GridMap::new(n, self.grid.clone());
        for k in 0..m {
            for j in 0..m {
                let mut comp = CMatrix::zeros(nn, nn);
                let mut nonzero = false;
                for a in 0..n {
                    for b in 0..n {
                        let v = self.corner(a, b)[(k, j)];
                        if v != C64::ZERO {
                            nonzero = true;
                        }
                        comp[(a * n + b, a * n + b)] = v;
                    }
                }
                if nonzero {
                    map.set_component(k, j, comp);
                }
            }
        }
        map
    }

    /// Extracts the block form of a grid map, reporting the cross-corner
    /// leakage (largest off-diagonal component entry); fails if it exceeds
    /// `leak_tol`.
    pub fn try_from_grid_map(map: &GridMap, leak_tol: f64) -> Result<(Self, f64)> {
        let n = map.n();
        let nn = n * n;
        let m = map.grid().len();
        let mut corners = vec![CMatrix::zeros(m, m); nn];
        let mut leakage = 0.0_f64;
        for (&(k, j), comp) in map.components() {
            for r in 0..nn {
                for c in 0..nn {
                    if r == c {
                        corners[r][(k, j)] = comp[(r, c)];
                    } else {
                        leakage = leakage.max(comp[(r, c)].norm());
                    }
                }
            }
        }
        if leakage > leak_tol {
            return Err(Error::precondition(
                Precondition::Ucp,
                format!("map is not block-form: cross-corner leakage {leakage:.3e}"),
            ));
        }
        Ok((
            BlockFormMap {
                n,
                grid: map.grid().clone(),
                corners,
            },
            leakage,
        ))
    }

    /// UCP verification specialized to block form: the component Choi matrix
    /// at `(k, j)` is PSD iff the `n×n` matrix `W[a][c] = R_ac[k, j]` is.
    pub fn ucp_report(&self, tol: f64) -> Result<UcpReport> {
        let n = self.n;
        let m = self.grid.len();
        let unit = MatrixFunction::unit(n, &self.grid);
        let unitality_defect = gridalg::sup_norm(&self.apply(&unit)?.sub(&unit)?);

        let mut min_choi = f64::INFINITY;
        let mut herm = 0.0_f64;
        let mut worst = (0, 0);
        let mut skipped_zero = false;
        for k in 0..m {
            for j in 0..m {
                let w = CMatrix::from_fn(n, n, |a, c| self.corner(a, c)[(k, j)]);
                if w.iter().all(|z| *z == crate::C64::ZERO) {
                    skipped_zero = true;
                    continue;
                }
                let dev = matcore::op_norm(&(&w - w.adjoint()));
                herm = herm.max(dev);
                let sym = HermitianMatrix::symmetrize(w);
                let check = matcore::is_psd(&sym, 0.0)?;
                if check.min_eigenvalue < min_choi {
                    min_choi = check.min_eigenvalue;
                    worst = (k, j);
                }
            }
        }
        if skipped_zero && min_choi > 0.0 {
            min_choi = 0.0;
        }
        if min_choi == f64::INFINITY {
            min_choi = 0.0;
        }
        let is_ucp = unitality_defect <= tol && min_choi >= -tol && herm <= tol;
        Ok(UcpReport {
            unitality_defect,
            min_choi_eigenvalue: min_choi,
            choi_hermiticity_defect: herm,
            is_ucp,
            worst_component: worst,
        })
    }
}

/// `S̃(x) = Σ_{i,j} e_ii S(e_ii x e_jj) e_jj`: keeps the diagonal of every
/// component matrix. Completely positive whenever `S` is (each component
/// Choi matrix becomes a compression of the original one), and agrees with
/// `S` on single-corner inputs up to the outer compression.
pub fn compress_blocks(s: &GridMap) -> GridMap {
    let nn = s.n() * s.n();
    let mut out = GridMap::new(s.n(), s.grid().clone());
    for (&(k, j), comp) in s.components() {
        let mut diag = CMatrix::zeros(nn, nn);
        let mut nonzero = false;
        for r in 0..nn {
            let v = comp[(r, r)];
            if v != C64::ZERO {
                nonzero = true;
            }
            diag[(r, r)] = v;
        }
        if nonzero {
            out.set_component(k, j, diag);
        }
    }
    out
}

/// State data used by the corrections: corner masses `φ(e_kk ⊗ 1)` and the
/// per-point corner weights `μ_j (g_j)_{kk} / n`.
struct CornerWeights {
    gamma: Vec<f64>,
    weight: Vec<Vec<f64>>,
}

fn corner_weights(state: &State) -> Result<CornerWeights> {
    if !state.is_diagonal() {
        return Err(Error::precondition(
            Precondition::DiagonalState,
            "corrections require a diagonal state",
        ));
    }
    let n = state.n();
    let m = state.grid().len();
    let mut gamma = vec![0.0; n];
    let mut weight = vec![vec![0.0; m]; n];
    for k in 0..n {
        for j in 0..m {
            let w = state.weights()[j] * state.density(j).matrix()[(k, k)].re / n as f64;
            weight[k][j] = w;
            gamma[k] += w;
        }
    }
    for (k, &g) in gamma.iter().enumerate() {
        if g <= 0.0 {
            return Err(Error::precondition(
                Precondition::PositiveCorner,
                format!("corner {k} carries no mass"),
            ));
        }
    }
    Ok(CornerWeights { gamma, weight })
}

/// `R = S̃ + Σ_k T_k` with the correction functionals
/// `T_k(x) = φ(e_kk x e_kk − e_kk S(e_kk x e_kk) e_kk)/φ(e_kk) · e_kk⊗1`.
///
/// Positivity of each `T_k` holds exactly when `S` is φ-preserving (the
/// state sees at most `φ(S(y)) = φ(y)` through one corner); a coefficient
/// dropping below `-INPUT_TOL` therefore reports a φ-preservation failure.
/// `R` preserves `φ` identically for any diagonal `φ`.
pub fn add_corrections(s_tilde: &GridMap, s: &GridMap, state: &State) -> Result<GridMap> {
    if s_tilde.n() != s.n() || s_tilde.grid() != s.grid() {
        return Err(Error::ShapeMismatch("compressed map does not match".into()));
    }
    if s.n() != state.n() || s.grid() != state.grid() {
        return Err(Error::ShapeMismatch(
            "map and state live on different algebras".into(),
        ));
    }
    let n = s.n();
    let m = s.grid().len();
    let cw = corner_weights(state)?;

    // λ_{k,j} = [w_{k,j} − Σ_{k'} w_{k,k'} (component_{k',j}(e_kk))_{kk}] / γ_k.
    let mut lambda = vec![vec![C64::ZERO; m]; n];
    for k in 0..n {
        let unit_kk = blockmap::unit_index(n, k, k);
        for j in 0..m {
            lambda[k][j] = C64::new(cw.weight[k][j], 0.0);
        }
        for (&(kp, j), comp) in s.components() {
            // (component_{kp,j}(e_kk))_{kk} in the matrix-unit basis.
            let entry = comp[(unit_kk, unit_kk)];
            lambda[k][j] -= entry * cw.weight[k][kp];
        }
        for j in 0..m {
            lambda[k][j] /= cw.gamma[k];
            if lambda[k][j].re < -INPUT_TOL || lambda[k][j].im.abs() > INPUT_TOL {
                return Err(Error::precondition(
                    Precondition::PhiPreservation,
                    format!(
                        "correction functional T_{k} is negative at point {j} ({:.3e})",
                        lambda[k][j].re
                    ),
                ));
            }
        }
    }

    let mut out = s_tilde.clone();
    for k in 0..n {
        let unit_kk = blockmap::unit_index(n, k, k);
        for j in 0..m {
            if lambda[k][j] == C64::ZERO {
                continue;
            }
            let mut comp = CMatrix::zeros(n * n, n * n);
            comp[(unit_kk, unit_kk)] = lambda[k][j];
            // T_k emits the constant function λ e_kk: same contribution at
            // every output point.
            for kp in 0..m {
                out.add_to_component(kp, j, comp.clone());
            }
        }
    }
    Ok(out)
}

/// Renormalizes a corner-preserving CP φ-preserving map to a unital one in
/// exact block form.
pub fn renormalize(
    r: &GridMap,
    state: &State,
    form: RenormalizationForm,
) -> Result<BlockFormMap> {
    let n = r.n();
    let m = r.grid().len();
    let cw = corner_weights(state)?;

    // Components must already be corner-preserving (diagonal in the
    // matrix-unit basis).
    let (blocks, _) = BlockFormMap::try_from_grid_map(r, 1e-12).map_err(|_| {
        Error::InvalidArgument("renormalize expects a corner-preserving map".into())
    })?;

    // Corner images r_k = R(e_kk ⊗ 1) as scalar functions, and their norms.
    let one = CVector::from_element(m, C64::new(1.0, 0.0));
    let mut corner_norms = vec![0.0; n];
    let mut corner_funcs: Vec<CVector> = Vec::with_capacity(n);
    for k in 0..n {
        let rk = blocks.apply_corner(k, k, &one);
        let norm = rk.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if norm <= 0.0 {
            return Err(Error::DegenerateCorner { corner: k });
        }
        corner_norms[k] = norm;
        corner_funcs.push(rk);
    }

    // V R(·) V: corner (a, b) scaled by (‖r_a‖‖r_b‖)^{-1/2}.
    let mut corners: Vec<CMatrix> = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let scale = 1.0 / (corner_norms[a] * corner_norms[b]).sqrt();
            corners.push(blocks.corner(a, b) * C64::new(scale, 0.0));
        }
    }

    // Corrections live in the diagonal corners: as corner-map updates,
    // D_k adds (weight_j/γ_k)·(1 − r_k(·)/‖r_k‖) to column j of R_kk.
    for k in 0..n {
        let corner = &mut corners[k * n + k];
        for j in 0..m {
            let w = cw.weight[k][j] / cw.gamma[k];
            if w == 0.0 {
                continue;
            }
            for kp in 0..m {
                let deficiency = C64::new(1.0, 0.0) - corner_funcs[k][kp] / corner_norms[k];
                corner[(kp, j)] += deficiency * w;
                if form == RenormalizationForm::Literal {
                    // The literal two-summand correction also re-adds the
                    // compressed corner term.
                    corner[(kp, j)] +=
                        blocks.corner(k, k)[(kp, j)] / C64::new(corner_norms[k], 0.0);
                }
            }
        }
    }

    BlockFormMap::new(n, r.grid().clone(), corners)
}

/// Result of the full reformulation pipeline.
#[derive(Debug)]
pub struct ReformulateOutput {
    pub map: BlockFormMap,
    pub report: UcpReport,
    /// Measured ratio of output identity defect to input identity defect on
    /// corner probes; infinite when the input fixes a probe the output moves.
    pub amplification: f64,
}

/// Full pipeline: compress, correct, renormalize, re-certify.
pub fn reformulate(s: &GridMap, state: &State) -> Result<ReformulateOutput> {
    let input_report = blockmap::verify_ucp(s, INPUT_TOL)?;
    if !input_report.is_ucp {
        return Err(Error::precondition(
            Precondition::Ucp,
            format!(
                "input map: unitality defect {:.3e}, min Choi eigenvalue {:.3e}",
                input_report.unitality_defect, input_report.min_choi_eigenvalue
            ),
        ));
    }
    let pres = blockmap::preservation_defect(s, state)?;
    if pres > INPUT_TOL {
        return Err(Error::precondition(
            Precondition::PhiPreservation,
            format!("input map moves the state by {pres:.3e}"),
        ));
    }

    let s_tilde = compress_blocks(s);
    let r = add_corrections(&s_tilde, s, state)?;
    let map = renormalize(&r, state, RenormalizationForm::Corrected)?;
    let report = map.ucp_report(OUTPUT_TOL)?;

    // Measured identity-defect amplification over corner probes.
    let n = s.n();
    let grid = s.grid().clone();
    let mut amplification = 0.0_f64;
    for preset in gridalg::FunctionPreset::ALL {
        let f = preset.sample_complex(&grid);
        for a in 0..n {
            for b in 0..n {
                let probe = gridalg::tensor_embed_on(&gridalg::matrix_unit(n, a, b), &f, &grid)?;
                let out_defect = gridalg::sup_norm(&map.apply(&probe)?.sub(&probe)?);
                let in_defect = gridalg::sup_norm(&s.apply(&probe)?.sub(&probe)?);
                if in_defect > 1e-12 {
                    amplification = amplification.max(out_defect / in_defect);
                } else if out_defect > 1e-9 {
                    amplification = f64::INFINITY;
                }
            }
        }
    }

    Ok(ReformulateOutput {
        map,
        report,
        amplification,
    })
}
