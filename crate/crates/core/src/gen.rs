//! Seeded generators for matrices, grid functions, states, and maps.
//!
//! Every generator takes an explicit RNG so that experiments and the test
//! suite are byte-reproducible from a single seed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gridalg::{Grid, MatrixFunction};
use crate::matcore::HermitianMatrix;
use crate::states::State;
use crate::{CMatrix, CVector, C64};

fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Complex Ginibre matrix (i.i.d. standard complex Gaussian entries).
pub fn random_matrix(rng: &mut impl Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Haar-distributed unitary via QR of a Ginibre matrix, with the phase
/// convention that makes the factorization (and thus the draw) unique.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let g = random_matrix(rng, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix `(G + G*)/2`.
pub fn random_herm(rng: &mut impl Rng, n: usize) -> HermitianMatrix {
    HermitianMatrix::symmetrize(random_matrix(rng, n))
}

/// Random PSD matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_psd(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> HermitianMatrix {
    let u = random_unitary(rng, n);
    let mut d = CMatrix::zeros(n, n);
    for j in 0..n {
        d[(j, j)] = C64::new(rng.random_range(lo..=hi), 0.0);
    }
    HermitianMatrix::symmetrize(&u * d * u.adjoint())
}

/// Random complex scalar grid function with entries of magnitude O(1).
pub fn random_scalar_fn(rng: &mut impl Rng, grid: &Grid) -> CVector {
    CVector::from_fn(grid.len(), |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Random real scalar grid function with values in `[0, 1]`.
pub fn random_unit_interval_fn(rng: &mut impl Rng, grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|_| rng.random_range(0.0..=1.0)).collect()
}

/// Random general element of the discretized algebra.
pub fn random_matrix_function(rng: &mut impl Rng, n: usize, grid: &Grid) -> MatrixFunction {
    let values = (0..grid.len()).map(|_| random_matrix(rng, n)).collect();
    MatrixFunction::new(n, grid.clone(), values).expect("shapes consistent")
}

/// Random self-adjoint element.
pub fn random_selfadjoint_function(rng: &mut impl Rng, n: usize, grid: &Grid) -> MatrixFunction {
    let values = (0..grid.len())
        .map(|_| random_herm(rng, n).into_matrix())
        .collect();
    MatrixFunction::new(n, grid.clone(), values).expect("shapes consistent")
}

/// Random pointwise-PSD element `x*x`, rescaled to sup-norm 1.
pub fn random_positive_function(rng: &mut impl Rng, n: usize, grid: &Grid) -> MatrixFunction {
    let x = random_matrix_function(rng, n, grid);
    let xx = crate::gridalg::multiply(&crate::gridalg::adjoint(&x), &x).expect("same shape");
    let norm = crate::gridalg::sup_norm(&xx);
    if norm > 0.0 {
        xx.scale(C64::new(1.0 / norm, 0.0))
    } else {
        xx
    }
}

/// Random grid map with one component per point pair, derived from random
/// Choi matrices: PSD Choi matrices when `cp` is set (so the map is CP by
/// construction), indefinite Hermitian ones otherwise.
pub fn random_grid_map(rng: &mut impl Rng, n: usize, grid: &Grid, cp: bool) -> crate::blockmap::GridMap {
    let mut map = crate::blockmap::GridMap::new(n, grid.clone());
    let m = grid.len();
    for k in 0..m {
        for j in 0..m {
            let choi = if cp {
                random_psd(rng, n * n, 0.0, 1.0).into_matrix()
            } else {
                // Shift a random Hermitian matrix so it is clearly indefinite.
                let h = random_herm(rng, n * n).into_matrix();
                let id = CMatrix::identity(n * n, n * n);
                h - id * C64::new(0.5, 0.0)
            };
            map.set_component(k, j, crate::blockmap::component_from_choi(&choi, n));
        }
    }
    map
}

/// Random state whose density varies smoothly along the grid: a random PSD
/// base plus a linearly interpolated Hermitian modulation of the given
/// operator-norm `amplitude`, then normalized. Small amplitudes keep nearby
/// density values within the range-clustering tolerance, which exercises the
/// averaging (rather than identity-like) regime of the approximation
/// pipeline; large amplitudes degenerate into singleton cells.
pub fn random_smooth_state(
    rng: &mut impl Rng,
    n: usize,
    grid: &Grid,
    lo: f64,
    hi: f64,
    amplitude: f64,
) -> Result<State> {
    assert!(0.0 < lo && lo < hi);
    let mid = 0.5 * (lo + hi);
    let span = 0.5 * (hi - lo);
    let amplitude = amplitude.min(0.5 * span);
    let (draw_lo, draw_hi) = (
        mid - 0.75 * span + amplitude,
        mid + 0.75 * span - amplitude,
    );
    let m = grid.len();
    let anchors = 4.min(m);
    let mu = vec![1.0 / m as f64; m];
    for _attempt in 0..100 {
        let base = random_psd(rng, n, draw_lo, draw_hi).into_matrix();
        let knots: Vec<CMatrix> = (0..anchors)
            .map(|_| {
                let h = random_herm(rng, n);
                let norm = crate::matcore::op_norm(h.matrix()).max(1e-300);
                &base + h.matrix() * C64::new(amplitude / norm, 0.0)
            })
            .collect();
        let g: Vec<HermitianMatrix> = (0..m)
            .map(|j| {
                let t = if m == 1 {
                    0.0
                } else {
                    j as f64 / (m - 1) as f64 * (anchors - 1) as f64
                };
                let left = (t.floor() as usize).min(anchors - 1);
                let right = (left + 1).min(anchors - 1);
                let frac = t - left as f64;
                HermitianMatrix::symmetrize(
                    &knots[left] * C64::new(1.0 - frac, 0.0) + &knots[right] * C64::new(frac, 0.0),
                )
            })
            .collect();
        let (state, _rescale) = State::new(n, grid.clone(), mu.clone(), g)?;
        let mut ok = true;
        for j in 0..m {
            let d = crate::matcore::eig_herm(state.density(j))?;
            if d.min_eigenvalue() < lo || d.max_eigenvalue() > hi {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(state);
        }
    }
    Err(crate::error::Error::Internal(
        "smooth state generator failed to land spectra inside the target range".into(),
    ))
}

/// The map `h ↦ φ(h)·1`: unital, completely positive, and φ-preserving.
pub fn state_expectation_map(state: &State) -> crate::blockmap::GridMap {
    let n = state.n();
    let m = state.grid().len();
    let mut map = crate::blockmap::GridMap::new(n, state.grid().clone());
    for j in 0..m {
        let w = state.weights()[j];
        if w == 0.0 {
            continue;
        }
        let g = state.density(j).matrix();
        let nn = n * n;
        let mut comp = CMatrix::zeros(nn, nn);
        for a in 0..n {
            for c in 0..n {
                for d in 0..n {
                    // (φ-component of e_{cd}) · identity: τ(g e_{cd}) = g_{dc}/n.
                    comp[(a * n + a, c * n + d)] = g[(d, c)] * (w / n as f64);
                }
            }
        }
        for k in 0..m {
            map.set_component(k, j, comp.clone());
        }
    }
    map
}

/// A UCP state-preserving map drawn from a small family: the identity, the
/// state expectation `φ(·)·1`, an approximating map built for the state, or
/// a convex mixture. `variant` selects deterministically.
pub fn admissible_map(
    rng: &mut impl Rng,
    state: &State,
    funcs: &[Vec<f64>],
    variant: usize,
) -> Result<crate::blockmap::GridMap> {
    use crate::blockmap::GridMap;
    match variant % 5 {
        0 => Ok(GridMap::identity(state.n(), state.grid())),
        1 => Ok(state_expectation_map(state)),
        2 => Ok(crate::approximator::build_t(state, funcs, 0.4)?.0),
        3 => Ok(crate::approximator::build_t(state, funcs, 0.15)?.0),
        _ => {
            let t: f64 = rng.random_range(0.1..0.9);
            let a = crate::approximator::build_t(state, funcs, 0.3)?.0;
            let b = state_expectation_map(state);
            a.scale(t).add(&b.scale(1.0 - t))
        }
    }
}

/// Random state with uniform weights and densities whose spectra stay inside
/// `[lo, hi]` after the exact trace normalization.
///
/// Eigenvalues are drawn from the middle of `[lo, hi]` so that dividing by
/// the (concentrated near 1) normalizing constant cannot push them out; the
/// draw is retried in the rare case it does.
pub fn random_state(rng: &mut impl Rng, n: usize, grid: &Grid, lo: f64, hi: f64) -> Result<State> {
    assert!(0.0 < lo && lo < hi);
    let mid = 0.5 * (lo + hi);
    let span = 0.5 * (hi - lo);
    let (draw_lo, draw_hi) = (mid - 0.75 * span, mid + 0.75 * span);
    let m = grid.len();
    let mu = vec![1.0 / m as f64; m];
    for _attempt in 0..100 {
        let g: Vec<HermitianMatrix> = (0..m).map(|_| random_psd(rng, n, draw_lo, draw_hi)).collect();
        let (state, _rescale) = State::new(n, grid.clone(), mu.clone(), g)?;
        let mut ok = true;
        for j in 0..m {
            let d = crate::matcore::eig_herm(state.density(j))?;
            if d.min_eigenvalue() < lo || d.max_eigenvalue() > hi {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(state);
        }
    }
    Err(crate::error::Error::Internal(
        "state generator failed to land spectra inside the target range".into(),
    ))
}
