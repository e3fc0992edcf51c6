//! End-to-end approximation runs: build the state-preserving map over the
//! eps ladder and verify its guarantees.

use std::collections::BTreeMap;
use std::time::Instant;

use cpapprox_core::{approximator, blockmap, gen, gridalg};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::report::{Check, Report};

pub fn run(config: RunConfig) -> anyhow::Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let state = super::resolve_state(&config, &mut rng)?;
    let presets = super::parse_presets(&config.functions)?;
    let grid = state.grid().clone();
    let funcs: Vec<Vec<f64>> = presets.iter().map(|p| p.sample(&grid)).collect();
    let funcs_c: Vec<cpapprox_core::CVector> =
        presets.iter().map(|p| p.sample_complex(&grid)).collect();

    let ucp_tol = config.tolerance("ucp", 1e-9);
    let pres_tol = config.tolerance("preservation", 1e-9);
    let rank_cutoff = config.tolerance("rank_cutoff", 1e-9);

    // Probes: matrix units, the identity, and 20 seeded random unitaries.
    let n = state.n();
    let mut probes = Vec::new();
    for i in 0..n {
        for j in 0..n {
            probes.push(gridalg::matrix_unit(n, i, j));
        }
    }
    probes.push(cpapprox_core::CMatrix::identity(n, n));
    for _ in 0..20 {
        probes.push(gen::random_unitary(&mut rng, n));
    }

    let mut checks = Vec::new();
    let mut stages = Vec::new();
    let mut timings = BTreeMap::new();
    let mut prev_defect = f64::INFINITY;

    for &eps in &config.eps {
        let t0 = Instant::now();
        let (map, diag) = approximator::build_t(&state, &funcs, eps)?;
        let tag = format!("eps{eps}");

        let ucp = blockmap::verify_ucp(&map, ucp_tol)?;
        checks.push(Check::flag(
            format!("ucp_{tag}"),
            ucp.is_ucp,
            format!(
                "unitality {:.3e}, min Choi {:.3e}",
                ucp.unitality_defect, ucp.min_choi_eigenvalue
            ),
        ));

        let mut preservation = 0.0_f64;
        for _ in 0..200 {
            let h = gen::random_matrix_function(&mut rng, n, &grid);
            let lhs = state.eval(&map.apply(&h)?)?;
            let rhs = state.eval(&h)?;
            preservation =
                preservation.max((lhs - rhs).norm() / gridalg::sup_norm(&h).max(1.0));
        }
        checks.push(Check::le(
            format!("preservation_{tag}"),
            preservation,
            pres_tol,
            "relative residual over 200 random elements",
        ));

        let family_defect = blockmap::defect_probe(&map, &funcs_c, &probes, &[])?;
        checks.push(Check::le(
            format!("probe_defect_{tag}"),
            family_defect,
            eps,
            "identity defect over the test family",
        ));
        let one = gridalg::scalar_fn(&vec![1.0; grid.len()]);
        let matrix_defect = blockmap::defect_probe(&map, &[one], &probes, &[])?;
        checks.push(Check::le(
            format!("matrix_defect_{tag}"),
            matrix_defect,
            7.0 * eps / 8.0,
            "identity defect on the matrix part",
        ));

        let rank = map.numerical_rank(rank_cutoff)?;
        checks.push(Check::le(
            format!("rank_{tag}"),
            rank as f64,
            diag.rank_bound as f64,
            format!("numerical rank at cutoff {rank_cutoff:.1e}"),
        ));

        checks.push(Check::le(
            format!("monotone_{tag}"),
            family_defect,
            prev_defect + 1e-12,
            "probe defect non-increasing along the eps ladder",
        ));
        prev_defect = family_defect;

        timings.insert(format!("build_{tag}"), t0.elapsed().as_secs_f64() * 1e3);
        stages.push(serde_json::json!({
            "eps": eps,
            "diagnostics": diag,
            "measured": {
                "unitality_defect": ucp.unitality_defect,
                "min_choi_eigenvalue": ucp.min_choi_eigenvalue,
                "preservation_residual": preservation,
                "family_defect": family_defect,
                "matrix_defect": matrix_defect,
                "numerical_rank": rank,
            },
        }));
    }

    Ok(Report::new(
        "approximate",
        config,
        checks,
        serde_json::Value::Array(stages),
        timings,
    ))
}
