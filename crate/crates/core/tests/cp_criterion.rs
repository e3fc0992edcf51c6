//! Equivalence of the per-component Choi criterion with amplified-positivity
//! sampling: a map on the discretized algebra is completely positive iff its
//! amplification by `M_2` sends positive elements to positive elements.
//!
//! The forward direction (PSD Choi matrices ⇒ positive outputs on every
//! probe) must never fail. The reverse is validated through sampling; the
//! probe family includes the maximally entangled elements supported at one
//! grid point, whose images are exactly the component Choi matrices, so a
//! negative Choi always leaves a witness.

use cpapprox_core::blockmap::{verify_ucp, GridMap};
use cpapprox_core::gridalg::Grid;
use cpapprox_core::matcore::{self, HermitianMatrix};
use cpapprox_core::{gen, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

/// Applies `id_{M_2} ⊗ S` to an element of `M_2 ⊗ (M_n ⊗ C^m)`, stored as
/// one `2n×2n` matrix per grid point split into `n×n` blocks.
fn amplified_apply(map: &GridMap, values: &[CMatrix]) -> Vec<CMatrix> {
    let n = map.n();
    let m = map.grid().len();
    let mut out = vec![CMatrix::zeros(2 * n, 2 * n); m];
    for (&(k, j), comp) in map.components() {
        for p in 0..2 {
            for q in 0..2 {
                let block = values[j].view((p * n, q * n), (n, n)).into_owned();
                let img = cpapprox_core::blockmap::unvec_matrix(
                    &(comp * cpapprox_core::blockmap::vec_matrix(&block)),
                    n,
                );
                for r in 0..n {
                    for c in 0..n {
                        out[k][(p * n + r, q * n + c)] += img[(r, c)];
                    }
                }
            }
        }
    }
    out
}

fn pointwise_positive(values: &[CMatrix], tol: f64) -> bool {
    for v in values {
        let herm_defect = matcore::op_norm(&(v - v.adjoint()));
        if herm_defect > tol {
            return false;
        }
        let sym = HermitianMatrix::symmetrize(v.clone());
        let check = matcore::is_psd(&sym, tol).expect("positivity check");
        if !check.is_psd {
            return false;
        }
    }
    true
}

/// Maximally entangled element `P_Ω ⊗ δ_j`: its amplified image at point `k`
/// is the Choi matrix of the `(k, j)` component.
fn entangled_probe(n: usize, m: usize, j: usize) -> Vec<CMatrix> {
    let mut values = vec![CMatrix::zeros(2 * n, 2 * n); m];
    // Here the amplifying factor is M_2 and n = 2: P_Ω lives in M_2 ⊗ M_2.
    assert_eq!(n, 2);
    let mut p = CMatrix::zeros(4, 4);
    for a in 0..2 {
        for c in 0..2 {
            p[(a * 2 + a, c * 2 + c)] = C64::new(1.0, 0.0);
        }
    }
    values[j] = p;
    values
}

#[test]
fn choi_criterion_matches_amplified_positivity() {
    let n = 2;
    let grid = Grid::new(3).unwrap();
    let m = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut cp_seen = 0;
    let mut non_cp_seen = 0;

    for trial in 0..100 {
        let cp = trial % 2 == 0;
        let map = gen::random_grid_map(&mut rng, n, &grid, cp);
        let report = verify_ucp(&map, TOL).expect("verification");
        let choi_psd =
            report.min_choi_eigenvalue >= -TOL && report.choi_hermiticity_defect <= TOL;

        // 200 positive probes: 197 random x*x plus the entangled elements.
        let mut sampled_positive = true;
        for probe_idx in 0..197 {
            let _ = probe_idx;
            let x: Vec<CMatrix> = (0..m).map(|_| gen::random_matrix(&mut rng, 2 * n)).collect();
            let xx: Vec<CMatrix> = x.iter().map(|v| v.adjoint() * v).collect();
            let scale = xx.iter().map(matcore::op_norm).fold(1.0, f64::max);
            let out = amplified_apply(&map, &xx);
            let out_scale = out.iter().map(matcore::op_norm).fold(1.0, f64::max);
            if !pointwise_positive(&out, TOL * scale.max(out_scale)) {
                sampled_positive = false;
                break;
            }
        }
        if sampled_positive {
            for j in 0..m {
                let probe = entangled_probe(n, m, j);
                let out = amplified_apply(&map, &probe);
                let out_scale = out.iter().map(matcore::op_norm).fold(1.0, f64::max);
                if !pointwise_positive(&out, TOL * out_scale) {
                    sampled_positive = false;
                    break;
                }
            }
        }

        // Forward direction must never fail; disagreement in either
        // direction halts the suite.
        assert_eq!(
            choi_psd, sampled_positive,
            "trial {trial}: Choi criterion ({choi_psd}) disagrees with sampling"
        );
        if choi_psd {
            cp_seen += 1;
        } else {
            non_cp_seen += 1;
        }

        // Consistency with the generator's intent.
        assert_eq!(choi_psd, cp, "trial {trial}: generator produced the wrong class");
    }
    assert_eq!(cp_seen, 50);
    assert_eq!(non_cp_seen, 50);
}

#[test]
fn entangled_probe_image_is_the_choi_matrix() {
    let grid = Grid::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cp = rng.random_bool(0.5);
    let map = gen::random_grid_map(&mut rng, 2, &grid, cp);
    for j in 0..3 {
        let out = amplified_apply(&map, &entangled_probe(2, 3, j));
        for k in 0..3 {
            let choi = map.component_choi(k, j);
            let dev = matcore::op_norm(&(&out[k] - &choi));
            assert!(dev < 1e-12, "component ({k}, {j}): deviation {dev}");
        }
    }
}
