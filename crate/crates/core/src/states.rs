//! States on the discretized algebra in density form, the conditional
//! expectation onto `M_n`, diagonality/faithfulness predicates, and the
//! balanced-pattern counterexample state.
//!
//! A state is a pair `(μ, g)`: probability weights on the grid plus a
//! pointwise-PSD matrix density, acting as
//! `φ(h) = Σ_j μ_j · τ(g_j h_j)` with `τ` the normalized trace.

use crate::error::{Error, Result};
use crate::gridalg::{Grid, MatrixFunction};
use crate::matcore::{self, HermitianMatrix};
use crate::{CMatrix, C64};

/// Tolerance for the trace-normalization invariant `Σ μ_j τ(g_j) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// State `(μ, g)` on `M_n ⊗ C(X_grid)`.
#[derive(Debug, Clone)]
pub struct State {
    n: usize,
    grid: Grid,
    mu: Vec<f64>,
    g: Vec<HermitianMatrix>,
}

/// Normalized trace `trace(a)/n`.
pub fn normalized_trace(a: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut t = C64::ZERO;
    for j in 0..n {
        t += a[(j, j)];
    }
    t / n as f64
}

impl State {
    /// Builds a state from weights and Hermitian densities.
    ///
    /// Enforces the normalization `Σ μ_j τ(g_j) = 1` by rescaling the density
    /// when necessary; the applied factor is returned so callers can record
    /// it. Densities at points of positive weight must be PSD.
    pub fn new(
        n: usize,
        grid: Grid,
        mu: Vec<f64>,
        g: Vec<HermitianMatrix>,
    ) -> Result<(Self, f64)> {
        let m = grid.len();
        if mu.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: mu.len(),
            });
        }
        if g.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: g.len(),
            });
        }
        for d in &g {
            if d.dim() != n {
                return Err(Error::ShapeMismatch(format!(
                    "density has size {}, expected {n}",
                    d.dim()
                )));
            }
        }
        if mu.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::NotAState("weights must be nonnegative".into()));
        }
        let total_mu: f64 = mu.iter().sum();
        if total_mu <= 0.0 {
            return Err(Error::NotAState("weights sum to zero".into()));
        }
        for (j, d) in g.iter().enumerate() {
            if mu[j] > 0.0 {
                let check = matcore::is_psd(d, matcore::CLAMP_TOL)?;
                if !check.is_psd {
                    return Err(Error::NotAState(format!(
                        "density at point {j} has eigenvalue {:.3e}",
                        check.min_eigenvalue
                    )));
                }
            }
        }
        let raw: f64 = mu
            .iter()
            .zip(&g)
            .map(|(&w, d)| w * normalized_trace(d.matrix()).re)
            .sum();
        if raw <= 0.0 {
            return Err(Error::NotAState(format!(
                "total mass {raw:.3e} is not positive"
            )));
        }
        let rescale = 1.0 / raw;
        let g = if (raw - 1.0).abs() <= NORMALIZATION_TOL {
            g
        } else {
            g.into_iter()
                .map(|d| HermitianMatrix::symmetrize(d.into_matrix() * C64::new(rescale, 0.0)))
                .collect()
        };
        Ok((State { n, grid, mu, g }, rescale))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.mu
    }

    pub fn density(&self, j: usize) -> &HermitianMatrix {
        &self.g[j]
    }

    pub fn densities(&self) -> &[HermitianMatrix] {
        &self.g
    }

    /// `φ(h) = Σ_j μ_j τ(g_j h_j)`.
    pub fn eval(&self, h: &MatrixFunction) -> Result<C64> {
        if h.n() != self.n || h.grid() != &self.grid {
            return Err(Error::ShapeMismatch(
                "state and element live on different algebras".into(),
            ));
        }
        let mut acc = C64::ZERO;
        for j in 0..self.grid.len() {
            if self.mu[j] == 0.0 {
                continue;
            }
            acc += normalized_trace(&(self.g[j].matrix() * h.value(j))) * self.mu[j];
        }
        Ok(acc)
    }

    /// Conditional expectation `E(h) = Σ_j μ_j h_j` onto `M_n`, the adjoint
    /// of the unital embedding with respect to `τ ⊗ μ`:
    /// `τ(a · E(h)) = Σ_j μ_j τ(a h_j)` for all `a`.
    pub fn cond_exp(&self, h: &MatrixFunction) -> Result<CMatrix> {
        if h.n() != self.n || h.grid() != &self.grid {
            return Err(Error::ShapeMismatch(
                "state and element live on different algebras".into(),
            ));
        }
        let mut acc = CMatrix::zeros(self.n, self.n);
        for j in 0..self.grid.len() {
            if self.mu[j] == 0.0 {
                continue;
            }
            acc += h.value(j) * C64::new(self.mu[j], 0.0);
        }
        Ok(acc)
    }

    /// True iff every density carrying positive weight is diagonal, which is
    /// equivalent to `φ(e_ij ⊗ a) = 0` for all `a` whenever `i ≠ j`.
    pub fn is_diagonal(&self) -> bool {
        for (j, d) in self.g.iter().enumerate() {
            if self.mu[j] == 0.0 {
                continue;
            }
            let m = d.matrix();
            for r in 0..self.n {
                for c in 0..self.n {
                    if r != c && m[(r, c)].norm() > 1e-12 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `min_{j : μ_j > 0} λ_min(g_j)`: the grid realization of faithfulness
    /// of the vector state in the GNS representation. A positive margin means
    /// the density is invertible at every point of positive weight.
    pub fn faithfulness_margin(&self) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for (j, d) in self.g.iter().enumerate() {
            if self.mu[j] == 0.0 {
                continue;
            }
            let check = matcore::is_psd(d, 0.0)?;
            margin = margin.min(check.min_eigenvalue);
        }
        if margin == f64::INFINITY {
            return Err(Error::NotAState("no point carries positive weight".into()));
        }
        Ok(margin)
    }

    /// Mass of the state restricted to grid indices where `pred` holds.
    pub fn mass_where(&self, pred: impl Fn(usize) -> bool) -> f64 {
        self.mu
            .iter()
            .enumerate()
            .filter(|(j, _)| pred(*j))
            .map(|(_, &w)| w)
            .sum()
    }
}

/// Subset of a dyadic grid with exact half-mass in every dyadic interval up
/// to `balance_level` — the grid analogue of a set that, like a fat Cantor
/// set complement pair, has positive mass alongside its complement in every
/// interval down to that scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    grid: Grid,
    members: Vec<bool>,
    balance_level: u32,
}

impl PatternSet {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn level(&self) -> u32 {
        self.grid.dyadic_level().expect("pattern grids are dyadic")
    }

    pub fn balance_level(&self) -> u32 {
        self.balance_level
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members[j]
    }

    pub fn member_indices(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&j| self.members[j]).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Builds a pattern from explicit member indices, verifying the exact
    /// half-mass invariant at every dyadic level up to `balance_level`.
    pub fn from_members(grid: Grid, members: &[usize], balance_level: u32) -> Result<Self> {
        let level = grid
            .dyadic_level()
            .ok_or_else(|| Error::InvalidArgument("pattern grids must be dyadic".into()))?;
        if balance_level >= level {
            return Err(Error::InvalidLevels {
                level,
                balance_level,
            });
        }
        let mut flags = vec![false; grid.len()];
        for &j in members {
            if j >= grid.len() {
                return Err(Error::IndexOutOfRange {
                    i: j,
                    j,
                    n: grid.len(),
                });
            }
            flags[j] = true;
        }
        let pattern = PatternSet {
            grid,
            members: flags,
            balance_level,
        };
        pattern.verify_balance()?;
        Ok(pattern)
    }

    /// Checks `|X ∩ I| = |I|/2` for every dyadic interval `I` of level
    /// `≤ balance_level`.
    pub fn verify_balance(&self) -> Result<()> {
        for level in 0..=self.balance_level {
            for block in self.grid.dyadic_blocks(level)? {
                let half = block.len() / 2;
                let count = block.clone().filter(|&j| self.members[j]).count();
                if count != half {
                    return Err(Error::Internal(format!(
                        "balance violated at level {level}, block {block:?}: {count} of {} members",
                        block.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The default balanced pattern: members at even 0-based indices
/// (alternation at the finest scale), balanced at every level `≤ L0 < L`.
pub fn balanced_pattern(level: u32, balance_level: u32) -> Result<PatternSet> {
    if level < 1 || balance_level >= level {
        return Err(Error::InvalidLevels {
            level,
            balance_level,
        });
    }
    let grid = Grid::dyadic(level)?;
    let members: Vec<usize> = (0..grid.len()).step_by(2).collect();
    PatternSet::from_members(grid, &members, balance_level)
}

/// The two-valued diagonal state carried by a pattern: uniform weights and
/// density `diag(2, 0)` on members, `diag(0, 2)` off members, so that
/// `φ((f_ij)) = mean_X f_11 + mean_{X^c} f_22`.
pub fn rudin_state(pattern: &PatternSet) -> State {
    let grid = pattern.grid().clone();
    let m = grid.len();
    let mu = vec![1.0 / m as f64; m];
    let g: Vec<HermitianMatrix> = (0..m)
        .map(|j| {
            if pattern.contains(j) {
                HermitianMatrix::from_real_diag(&[2.0, 0.0])
            } else {
                HermitianMatrix::from_real_diag(&[0.0, 2.0])
            }
        })
        .collect();
    let (state, rescale) =
        State::new(2, grid, mu, g).expect("pattern state is well-formed by construction");
    debug_assert_eq!(rescale, 1.0);
    state
}

/// Recovers the membership flags of a two-valued diagonal state produced by
/// [`rudin_state`]; errors if the state is not of that form.
pub fn pattern_of_state(state: &State) -> Result<Vec<bool>> {
    if state.n() != 2 {
        return Err(Error::precondition(
            crate::error::Precondition::PatternState,
            format!("pattern states have n = 2, got {}", state.n()),
        ));
    }
    let mut members = Vec::with_capacity(state.grid().len());
    for j in 0..state.grid().len() {
        let d = state.density(j).matrix();
        let (a, b) = (d[(0, 0)].re, d[(1, 1)].re);
        let off = d[(0, 1)].norm();
        if off > 1e-12 || (a - 2.0).abs().min(a.abs()) > 1e-9 || (b - 2.0).abs().min(b.abs()) > 1e-9
        {
            return Err(Error::precondition(
                crate::error::Precondition::PatternState,
                format!("density at point {j} is not diag(2,0)/diag(0,2)"),
            ));
        }
        members.push(a > b);
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::gridalg::{self, matrix_unit, scalar_fn, FunctionPreset};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_identity_state(n: usize, m: usize) -> State {
        let grid = Grid::new(m).unwrap();
        let mu = vec![1.0 / m as f64; m];
        let g = vec![HermitianMatrix::identity(n); m];
        State::new(n, grid, mu, g).unwrap().0
    }

    #[test]
    fn make_state_examples() {
        let s = uniform_identity_state(2, 4);
        let unit = MatrixFunction::unit(2, s.grid());
        assert_relative_eq!(s.eval(&unit).unwrap().re, 1.0, max_relative = 1e-14);

        // mu = (1/2, 1/2), g = (diag(2,0), I): τ(diag(2,0)) = 1, already normalized.
        let grid = Grid::new(2).unwrap();
        let g = vec![
            HermitianMatrix::from_real_diag(&[2.0, 0.0]),
            HermitianMatrix::identity(2),
        ];
        let (s, rescale) = State::new(2, grid, vec![0.5, 0.5], g).unwrap();
        assert_eq!(rescale, 1.0);
        let unit = MatrixFunction::unit(2, s.grid());
        assert_relative_eq!(s.eval(&unit).unwrap().re, 1.0, max_relative = 1e-14);

        // Negative eigenvalue is rejected.
        let grid = Grid::new(1).unwrap();
        let bad = vec![HermitianMatrix::from_real_diag(&[1.0, -0.3])];
        assert!(matches!(
            State::new(2, grid, vec![1.0], bad),
            Err(Error::NotAState(_))
        ));
    }

    #[test]
    fn normalization_rescales() {
        let grid = Grid::new(2).unwrap();
        let g = vec![
            HermitianMatrix::from_real_diag(&[4.0, 4.0]),
            HermitianMatrix::from_real_diag(&[4.0, 4.0]),
        ];
        let (s, rescale) = State::new(2, grid, vec![0.5, 0.5], g).unwrap();
        assert_relative_eq!(rescale, 0.25, max_relative = 1e-14);
        assert_relative_eq!(s.density(0).matrix()[(0, 0)].re, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn eval_examples() {
        let s = uniform_identity_state(2, 4);
        let e11_one = gridalg::tensor_embed_on(
            &matrix_unit(2, 0, 0),
            &FunctionPreset::One.sample_complex(s.grid()),
            s.grid(),
        )
        .unwrap();
        assert_relative_eq!(s.eval(&e11_one).unwrap().re, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn eval_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grid = Grid::new(5).unwrap();
        let s = gen::random_state(&mut rng, 3, &grid, 0.1, 2.0).unwrap();
        for _ in 0..20 {
            let h = gen::random_matrix_function(&mut rng, 3, &grid);
            let fast = s.eval(&h).unwrap();
            // Independent summation: explicit double loop over entries.
            let mut slow = C64::ZERO;
            for j in 0..grid.len() {
                let mut tr = C64::ZERO;
                for r in 0..3 {
                    for c in 0..3 {
                        tr += s.density(j).matrix()[(r, c)] * h.value(j)[(c, r)];
                    }
                }
                slow += tr / 3.0 * s.weights()[j];
            }
            assert!((fast - slow).norm() < 1e-12);
        }
    }

    #[test]
    fn cond_exp_examples() {
        let s = uniform_identity_state(2, 4);
        // Constant function maps to its value.
        let b = gen::random_herm(&mut ChaCha8Rng::seed_from_u64(3), 2).into_matrix();
        let h = MatrixFunction::new(2, s.grid().clone(), vec![b.clone(); 4]).unwrap();
        assert!(crate::matcore::op_norm(&(s.cond_exp(&h).unwrap() - &b)) < 1e-14);

        // E(b ⊗ f) = (Σ μ_j f_j)·b.
        let f = scalar_fn(&[0.1, 0.2, 0.3, 0.4]);
        let h = gridalg::tensor_embed_on(&b, &f, s.grid()).unwrap();
        let want = &b * C64::new(0.25 * (0.1 + 0.2 + 0.3 + 0.4), 0.0);
        assert!(crate::matcore::op_norm(&(s.cond_exp(&h).unwrap() - want)) < 1e-14);
    }

    #[test]
    fn cond_exp_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let grid = Grid::new(6).unwrap();
        let s = gen::random_state(&mut rng, 2, &grid, 0.1, 2.0).unwrap();
        for _ in 0..50 {
            let a = gen::random_herm(&mut rng, 2).into_matrix();
            let h = gen::random_matrix_function(&mut rng, 2, &grid);
            let lhs = normalized_trace(&(&a * s.cond_exp(&h).unwrap()));
            let mut rhs = C64::ZERO;
            for j in 0..grid.len() {
                rhs += normalized_trace(&(&a * h.value(j))) * s.weights()[j];
            }
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn cond_exp_unital_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let grid = Grid::new(6).unwrap();
        let s = gen::random_state(&mut rng, 3, &grid, 0.1, 2.0).unwrap();
        // E(unit) = identity.
        let e_unit = s.cond_exp(&MatrixFunction::unit(3, &grid)).unwrap();
        assert!(crate::matcore::op_norm(&(e_unit - CMatrix::identity(3, 3))) < 1e-12);
        // E(h) is PSD for pointwise-PSD h.
        for _ in 0..30 {
            let h = gen::random_positive_function(&mut rng, 3, &grid);
            let e = HermitianMatrix::symmetrize(s.cond_exp(&h).unwrap());
            assert!(crate::matcore::is_psd(&e, 1e-10).unwrap().is_psd);
        }
    }

    #[test]
    fn diagonality() {
        let s = uniform_identity_state(2, 4);
        assert!(s.is_diagonal());

        let grid = Grid::new(2).unwrap();
        let mut offdiag = CMatrix::identity(2, 2);
        offdiag[(0, 1)] = C64::new(0.2, 0.0);
        offdiag[(1, 0)] = C64::new(0.2, 0.0);
        let g = vec![
            HermitianMatrix::new(offdiag).unwrap(),
            HermitianMatrix::identity(2),
        ];
        let (s, _) = State::new(2, grid, vec![0.5, 0.5], g).unwrap();
        assert!(!s.is_diagonal());
    }

    #[test]
    fn margins() {
        let s = uniform_identity_state(2, 4);
        assert_eq!(s.faithfulness_margin().unwrap(), 1.0);

        let pattern = balanced_pattern(3, 2).unwrap();
        let r = rudin_state(&pattern);
        assert_eq!(r.faithfulness_margin().unwrap(), 0.0);
        assert!(r.is_diagonal());

        let grid = Grid::new(3).unwrap();
        let g = vec![HermitianMatrix::from_real_diag(&[0.3, 2.0]); 3];
        let (s, _) = State::new(2, grid, vec![1.0 / 3.0; 3], g).unwrap();
        // Normalization rescales 0.3 along with everything else.
        let expected = 0.3 / (0.5 * (0.3 + 2.0));
        assert_relative_eq!(s.faithfulness_margin().unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn balanced_pattern_examples() {
        // L = 3 (m = 8), L0 = 2: members at 0-based even indices.
        let p = balanced_pattern(3, 2).unwrap();
        assert_eq!(p.member_indices(), vec![0, 2, 4, 6]);
        // Every length-2 dyadic block contains exactly one member.
        for block in p.grid().dyadic_blocks(2).unwrap() {
            let count = block.clone().filter(|&j| p.contains(j)).count();
            assert_eq!(count, 1);
        }
        // L0 = 0 only requires global balance.
        let p = balanced_pattern(3, 0).unwrap();
        assert_eq!(p.member_indices().len(), 4);

        assert!(matches!(
            balanced_pattern(3, 3),
            Err(Error::InvalidLevels { .. })
        ));
        assert!(matches!(
            balanced_pattern(0, 0),
            Err(Error::InvalidLevels { .. })
        ));
    }

    #[test]
    fn balance_invariant_exhaustive() {
        for level in 1..=12u32 {
            for balance in 0..level.min(6) {
                let p = balanced_pattern(level, balance).unwrap();
                p.verify_balance().unwrap();
            }
        }
    }

    #[test]
    fn rudin_state_examples() {
        let pattern = balanced_pattern(4, 2).unwrap();
        let s = rudin_state(&pattern);
        let grid = s.grid().clone();

        // φ(e_11 ⊗ 1) = |X|/m = 1/2.
        let e11 = gridalg::tensor_embed_on(
            &matrix_unit(2, 0, 0),
            &FunctionPreset::One.sample_complex(&grid),
            &grid,
        )
        .unwrap();
        assert_relative_eq!(s.eval(&e11).unwrap().re, 0.5, max_relative = 1e-14);

        // Diagonal densities kill off-diagonal corners.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let f = gen::random_scalar_fn(&mut rng, &grid);
            let e12f = gridalg::tensor_embed_on(&matrix_unit(2, 0, 1), &f, &grid).unwrap();
            assert!(s.eval(&e12f).unwrap().norm() < 1e-14);
        }

        assert_eq!(s.faithfulness_margin().unwrap(), 0.0);
        let members = pattern_of_state(&s).unwrap();
        for j in 0..grid.len() {
            assert_eq!(members[j], pattern.contains(j));
        }
    }

    #[test]
    fn restricted_faithfulness_on_balanced_cells() {
        // Positive nonzero elements constant on balance-scale cells have
        // strictly positive state value.
        let pattern = balanced_pattern(6, 3).unwrap();
        let s = rudin_state(&pattern);
        let grid = s.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let blocks = grid.dyadic_blocks(3).unwrap();
        for block in &blocks {
            for _ in 0..10 {
                let v = gen::random_psd(&mut rng, 2, 0.1, 1.0);
                let mut values = vec![CMatrix::zeros(2, 2); grid.len()];
                for j in block.clone() {
                    values[j] = v.matrix().clone();
                }
                let h = MatrixFunction::new(2, grid.clone(), values).unwrap();
                let val = s.eval(&h).unwrap();
                assert!(val.re > 0.0, "block {block:?} gave {val}");
            }
        }
    }
}
