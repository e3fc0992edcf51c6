//! Property tests for the algebra layer: the C*-identity, bilinearity of the
//! tensor embedding, and corner bookkeeping.

use cpapprox_core::gridalg::{
    self, adjoint, corner_extract, multiply, sup_norm, tensor_embed_on, Grid,
};
use cpapprox_core::{gen, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_and_rng(seed: u64, m: usize) -> (Grid, ChaCha8Rng) {
    (Grid::new(m).unwrap(), ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cstar_identity(seed in 0u64..10_000, m in 2usize..8, n in 1usize..4) {
        let (grid, mut rng) = grid_and_rng(seed, m);
        let a = gen::random_matrix_function(&mut rng, n, &grid);
        let lhs = sup_norm(&multiply(&adjoint(&a), &a).unwrap());
        let rhs = sup_norm(&a).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
    }

    #[test]
    fn sup_norm_submultiplicative(seed in 0u64..10_000, m in 2usize..8) {
        let (grid, mut rng) = grid_and_rng(seed, m);
        let a = gen::random_matrix_function(&mut rng, 2, &grid);
        let b = gen::random_matrix_function(&mut rng, 2, &grid);
        let product = sup_norm(&multiply(&a, &b).unwrap());
        prop_assert!(product <= sup_norm(&a) * sup_norm(&b) + 1e-10);
    }

    #[test]
    fn tensor_embed_bilinear(seed in 0u64..10_000, m in 2usize..8) {
        let (grid, mut rng) = grid_and_rng(seed, m);
        let b1 = gen::random_matrix(&mut rng, 2);
        let b2 = gen::random_matrix(&mut rng, 2);
        let f = gen::random_scalar_fn(&mut rng, &grid);
        let c = C64::new(0.7, -0.3);

        let lhs = tensor_embed_on(&(&b1 * c + &b2), &f, &grid).unwrap();
        let rhs = tensor_embed_on(&b1, &f, &grid)
            .unwrap()
            .scale(c)
            .add(&tensor_embed_on(&b2, &f, &grid).unwrap())
            .unwrap();
        prop_assert!(sup_norm(&lhs.sub(&rhs).unwrap()) < 1e-12);

        let g = gen::random_scalar_fn(&mut rng, &grid);
        let sum = tensor_embed_on(&b1, &(f.clone() + g.clone()), &grid).unwrap();
        let split = tensor_embed_on(&b1, &f, &grid)
            .unwrap()
            .add(&tensor_embed_on(&b1, &g, &grid).unwrap())
            .unwrap();
        prop_assert!(sup_norm(&sum.sub(&split).unwrap()) < 1e-12);
    }

    #[test]
    fn corner_extract_inverts_embedding(seed in 0u64..10_000, m in 2usize..8, n in 2usize..4) {
        let (grid, mut rng) = grid_and_rng(seed, m);
        let b = gen::random_matrix(&mut rng, n);
        let f = gen::random_scalar_fn(&mut rng, &grid);
        let h = tensor_embed_on(&b, &f, &grid).unwrap();
        for i in 0..n {
            for j in 0..n {
                let c = corner_extract(&h, i, j).unwrap();
                for k in 0..m {
                    prop_assert!((c[k] - b[(i, j)] * f[k]).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn block_decomposition_reassembles(seed in 0u64..10_000, m in 2usize..6) {
        let (grid, mut rng) = grid_and_rng(seed, m);
        let h = gen::random_matrix_function(&mut rng, 3, &grid);
        let mut sum = gridalg::MatrixFunction::zero(3, &grid);
        for i in 0..3 {
            for j in 0..3 {
                let f = corner_extract(&h, i, j).unwrap();
                let piece = tensor_embed_on(&gridalg::matrix_unit(3, i, j), &f, &grid).unwrap();
                sum = sum.add(&piece).unwrap();
            }
        }
        prop_assert!(sup_norm(&sum.sub(&h).unwrap()) < 1e-12);
    }
}
