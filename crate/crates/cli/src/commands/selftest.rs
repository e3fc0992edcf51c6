//! Reduced-size property suite over every module, seeded and deterministic.

use std::collections::BTreeMap;
use std::time::Instant;

use cpapprox_core::blockmap::{self, GridMap};
use cpapprox_core::gridalg::{self, FunctionPreset, Grid};
use cpapprox_core::matcore::{self, HermitianMatrix};
use cpapprox_core::obstruction::{self, ScanStatus};
use cpapprox_core::reformulator::{self, BlockFormMap};
use cpapprox_core::states::{self, State};
use cpapprox_core::{approximator, gen, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::report::{Check, Report};

fn presets_on(grid: &Grid) -> Vec<Vec<f64>> {
    FunctionPreset::ALL.iter().map(|p| p.sample(grid)).collect()
}

pub fn run(config: RunConfig) -> anyhow::Result<Report> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();
    let mut timings = BTreeMap::new();

    // Spectral kernel: square roots multiply back.
    let mut worst = 0.0_f64;
    for trial in 0..500 {
        let n = 2 + trial % 3;
        let a = gen::random_psd(&mut rng, n, 0.0, 2.0);
        let s = matcore::psd_sqrt(&a)?;
        let back = s.matrix() * s.matrix();
        let scale = f64::max(1.0, matcore::op_norm(a.matrix()));
        worst = worst.max(matcore::op_norm(&(back - a.matrix())) / scale);
    }
    checks.push(Check::le(
        "matcore_sqrt_multiply_back",
        worst,
        1e-9,
        "500 random PSD instances, n in {2,3,4}",
    ));

    // Inverse-root modulus: ‖A^{-1/2} − B^{-1/2}‖ ≤ s^{-1}‖A−B‖^{1/2}.
    let mut worst = 0.0_f64;
    for trial in 0..1000 {
        let n = 2 + trial % 3;
        let s = 0.1 + 0.4 * (trial % 7) as f64 / 7.0;
        let a = gen::random_psd(&mut rng, n, s, 2.0);
        let b = gen::random_psd(&mut rng, n, s, 2.0);
        let ia = matcore::psd_inv_sqrt(&a, s)?;
        let ib = matcore::psd_inv_sqrt(&b, s)?;
        let lhs = matcore::op_norm(&(ia.matrix() - ib.matrix()));
        let rhs = matcore::op_norm(&(a.matrix() - b.matrix())).sqrt() / s;
        worst = worst.max(lhs - rhs);
    }
    checks.push(Check::le(
        "matcore_inverse_root_modulus",
        worst,
        1e-10,
        "1000 random PSD pairs",
    ));

    // Operator norm: submultiplicative, unitarily invariant.
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let a = gen::random_matrix(&mut rng, 3);
        let b = gen::random_matrix(&mut rng, 3);
        worst = worst.max(matcore::op_norm(&(&a * &b)) - matcore::op_norm(&a) * matcore::op_norm(&b));
        let u = gen::random_unitary(&mut rng, 3);
        worst = worst.max(
            (matcore::op_norm(&(&u * &a * u.adjoint())) - matcore::op_norm(&a)).abs() - 1e-9,
        );
    }
    checks.push(Check::le(
        "matcore_norm_properties",
        worst,
        1e-9,
        "submultiplicativity and unitary invariance",
    ));

    // C*-identity on the grid algebra.
    let grid = Grid::new(16)?;
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let a = gen::random_matrix_function(&mut rng, 2, &grid);
        let lhs = gridalg::sup_norm(&gridalg::multiply(&gridalg::adjoint(&a), &a)?);
        let rhs = gridalg::sup_norm(&a).powi(2);
        worst = worst.max((lhs - rhs).abs() / rhs.max(1.0));
    }
    checks.push(Check::le(
        "gridalg_cstar_identity",
        worst,
        1e-9,
        "‖a*a‖ = ‖a‖² pointwise",
    ));

    // Component application matches the assembled dense matrix.
    let small = Grid::new(3)?;
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let map = gen::random_grid_map(&mut rng, 2, &small, true);
        let dense = map.assemble_dense();
        let h = gen::random_matrix_function(&mut rng, 2, &small);
        let fast = map.apply(&h)?;
        let mut stacked = cpapprox_core::CVector::zeros(4 * small.len());
        for j in 0..small.len() {
            let v = blockmap::vec_matrix(h.value(j));
            for r in 0..4 {
                stacked[j * 4 + r] = v[r];
            }
        }
        let slow = &dense * stacked;
        for k in 0..small.len() {
            let got = blockmap::vec_matrix(fast.value(k));
            for r in 0..4 {
                worst = worst.max((slow[k * 4 + r] - got[r]).norm());
            }
        }
    }
    checks.push(Check::le(
        "blockmap_apply_oracle",
        worst,
        1e-12,
        "apply against assembled matrix-vector products",
    ));

    // CP criterion equivalence at reduced size (forward direction exact).
    let mut agreement_failures = 0usize;
    for trial in 0..20 {
        let cp = trial % 2 == 0;
        let map = gen::random_grid_map(&mut rng, 2, &small, cp);
        let report = blockmap::verify_ucp(&map, 1e-9)?;
        let choi_psd =
            report.min_choi_eigenvalue >= -1e-9 && report.choi_hermiticity_defect <= 1e-9;
        let mut sampled_positive = true;
        for _ in 0..40 {
            let x: Vec<CMatrix> = (0..small.len()).map(|_| gen::random_matrix(&mut rng, 4)).collect();
            let xx: Vec<CMatrix> = x.iter().map(|v| v.adjoint() * v).collect();
            if !amplified_positive(&map, &xx)? {
                sampled_positive = false;
                break;
            }
        }
        if sampled_positive {
            for j in 0..small.len() {
                if !amplified_positive(&map, &entangled(small.len(), j))? {
                    sampled_positive = false;
                    break;
                }
            }
        }
        if choi_psd != sampled_positive {
            agreement_failures += 1;
        }
    }
    checks.push(Check::le(
        "blockmap_cp_equivalence",
        agreement_failures as f64,
        0.0,
        "Choi criterion against amplified positivity sampling",
    ));

    // Pattern balance, exhaustively at small levels.
    let mut violations = 0usize;
    for level in 1..=10u32 {
        for balance in 0..level.min(5) {
            let p = states::balanced_pattern(level, balance)?;
            if p.verify_balance().is_err() {
                violations += 1;
            }
        }
    }
    checks.push(Check::le(
        "states_pattern_balance",
        violations as f64,
        0.0,
        "exact half-mass in every dyadic block",
    ));

    // Pattern state: margin, diagonality, corner mass.
    let pattern = states::balanced_pattern(8, 4)?;
    let rudin = states::rudin_state(&pattern);
    let margin = rudin.faithfulness_margin()?;
    checks.push(Check::le(
        "states_rudin_margin",
        margin.abs(),
        0.0,
        "pattern-state spectral margin is exactly zero",
    ));
    let rgrid = rudin.grid().clone();
    let e11 = gridalg::tensor_embed_on(
        &gridalg::matrix_unit(2, 0, 0),
        &FunctionPreset::One.sample_complex(&rgrid),
        &rgrid,
    )?;
    checks.push(Check::le(
        "states_rudin_corner_mass",
        (rudin.eval(&e11)?.re - 0.5).abs(),
        0.0,
        "eval on e_11 ⊗ 1 equals 1/2 exactly",
    ));
    checks.push(Check::flag(
        "states_rudin_diagonal",
        rudin.is_diagonal(),
        "pattern state is diagonal",
    ));

    // Restricted faithfulness on balance-scale cells.
    let mut min_value = f64::INFINITY;
    for block in rgrid.dyadic_blocks(4)? {
        for _ in 0..50 {
            let v = gen::random_psd(&mut rng, 2, 0.1, 1.0);
            let mut values = vec![CMatrix::zeros(2, 2); rgrid.len()];
            for j in block.clone() {
                values[j] = v.matrix().clone();
            }
            let h = gridalg::MatrixFunction::new(2, rgrid.clone(), values)?;
            min_value = min_value.min(rudin.eval(&h)?.re);
        }
    }
    checks.push(Check::flag(
        "states_restricted_faithfulness",
        min_value > 0.0,
        format!("smallest cell-constant positive value {min_value:.3e}"),
    ));

    // Approximator guarantees at reduced size.
    let agrid = Grid::new(32)?;
    let funcs = presets_on(&agrid);
    let mut prev = f64::INFINITY;
    let mut monotone_ok = true;
    let mut worst_ucp = 0.0_f64;
    let mut worst_pres = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for trial in 0..3 {
        let astate = gen::random_state(&mut rng, 2, &agrid, 0.1, 2.0)?;
        for eps in [0.4, 0.2] {
            let (map, diag) = approximator::build_t(&astate, &funcs, eps)?;
            let report = blockmap::verify_ucp(&map, 1e-9)?;
            worst_ucp = worst_ucp
                .max(report.unitality_defect)
                .max((-report.min_choi_eigenvalue).max(0.0));
            for _ in 0..30 {
                let h = gen::random_matrix_function(&mut rng, 2, &agrid);
                let lhs = astate.eval(&map.apply(&h)?)?;
                let rhs = astate.eval(&h)?;
                worst_pres =
                    worst_pres.max((lhs - rhs).norm() / gridalg::sup_norm(&h).max(1.0));
            }
            worst_ratio = worst_ratio.max(diag.family_defect / eps);
            let rank = map.numerical_rank(1e-9)?;
            if rank > diag.rank_bound {
                worst_ratio = f64::INFINITY;
            }
            if trial == 0 {
                if diag.family_defect > prev + 1e-12 {
                    monotone_ok = false;
                }
                prev = diag.family_defect;
            }
        }
    }
    checks.push(Check::le(
        "approximator_ucp",
        worst_ucp,
        1e-9,
        "unitality and Choi floors over reduced runs",
    ));
    checks.push(Check::le(
        "approximator_preservation",
        worst_pres,
        1e-9,
        "state preservation over reduced runs",
    ));
    checks.push(Check::le(
        "approximator_defect_ratio",
        worst_ratio,
        1.0,
        "family defect within eps; rank within bound",
    ));
    checks.push(Check::flag(
        "approximator_monotone",
        monotone_ok,
        "probe defect non-increasing when eps halves",
    ));

    // Reformulator guarantees at reduced size.
    let rgrid2 = Grid::new(8)?;
    let rfuncs = presets_on(&rgrid2);
    let mut worst_block = 0.0_f64;
    let mut worst_out = 0.0_f64;
    for trial in 0..10 {
        let dstate = diagonal_state(&mut rng, 2, &rgrid2)?;
        let s = gen::admissible_map(&mut rng, &dstate, &rfuncs, trial)?;
        let out = reformulator::reformulate(&s, &dstate)?;
        let report = out.report;
        worst_out = worst_out
            .max(report.unitality_defect)
            .max((-report.min_choi_eigenvalue).max(0.0))
            .max(blockmap::preservation_defect(&out.map.to_grid_map(), &dstate)?);
        worst_block = worst_block.max(out.map.hermitian_symmetry_defect());
        if trial % 5 == 0 {
            let id = GridMap::identity(2, &rgrid2);
            let id_out = reformulator::reformulate(&id, &dstate)?;
            let m = rgrid2.len();
            for a in 0..2 {
                for b in 0..2 {
                    let want = CMatrix::identity(m, m);
                    let dev = matcore::op_norm(&(id_out.map.corner(a, b) - want));
                    worst_block = worst_block.max(dev);
                }
            }
        }
    }
    checks.push(Check::le(
        "reformulator_guarantees",
        worst_out,
        1e-9,
        "UCP and preservation of reformulated maps",
    ));
    checks.push(Check::le(
        "reformulator_block_exactness",
        worst_block,
        1e-12,
        "corner symmetry and identity fixed point",
    ));

    // Obstruction chain and scan at reduced size.
    let pattern = states::balanced_pattern(8, 4)?;
    let ostate = states::rudin_state(&pattern);
    let ogrid = ostate.grid().clone();
    let s0 = obstruction::expectation_family(&ostate, 4, 0.0)?;
    let (blocks0, _) = BlockFormMap::try_from_grid_map(&s0, 1e-12)?;
    let mut chain_ok = true;
    for preset in FunctionPreset::ALL {
        for eps in [0.4, 0.2, 0.1] {
            let cert =
                obstruction::verify_chain(&blocks0, &ostate, &preset.sample(&ogrid), 100, eps)?;
            chain_ok &= cert.pass && cert.final_average <= cert.final_bound;
        }
    }
    checks.push(Check::flag(
        "obstruction_chain",
        chain_ok,
        "certificate passes for the preserving member",
    ));
    let identity = obstruction::identity_block_map(&ogrid);
    let rejected = matches!(
        obstruction::verify_chain(
            &identity,
            &ostate,
            &FunctionPreset::Linear.sample(&ogrid),
            100,
            0.2
        ),
        Err(cpapprox_core::Error::PreconditionFailed {
            which: cpapprox_core::Precondition::RangeSmoothness,
            ..
        })
    );
    checks.push(Check::flag(
        "obstruction_identity_rejected",
        rejected,
        "grid identity fails RangeSmoothness",
    ));
    let rows = obstruction::defect_tradeoff_scan(
        &ostate,
        4,
        &[0.0, 0.5, 1.0],
        &FunctionPreset::One.sample(&ogrid),
        100,
        0.2,
    )?;
    let scan_ok = rows[0].status == ScanStatus::Pass
        && rows[1..]
            .iter()
            .all(|r| r.retention > 1e-3 && r.preservation_defect > 1e-3);
    checks.push(Check::flag(
        "obstruction_scan_tradeoff",
        scan_ok,
        "retention and preservation defect trade off across the family",
    ));

    // Serialization round-trips.
    let io_state = gen::random_state(&mut rng, 2, &small, 0.1, 2.0)?;
    let encoded = cpapprox_core::io::StateFile::encode(&io_state);
    let text = serde_json::to_string(&encoded)?;
    let decoded: cpapprox_core::io::StateFile = serde_json::from_str(&text)?;
    let (back, _) = decoded.decode()?;
    let mut io_worst = 0.0_f64;
    for j in 0..small.len() {
        io_worst = io_worst.max(matcore::op_norm(
            &(back.density(j).matrix() - io_state.density(j).matrix()),
        ));
    }
    checks.push(Check::le(
        "io_state_roundtrip",
        io_worst,
        0.0,
        "byte-exact state file round-trip",
    ));

    timings.insert("total".into(), t0.elapsed().as_secs_f64() * 1e3);
    Ok(Report::new(
        "selftest",
        config,
        checks,
        serde_json::Value::Null,
        timings,
    ))
}

fn diagonal_state(rng: &mut ChaCha8Rng, n: usize, grid: &Grid) -> anyhow::Result<State> {
    let mu = vec![1.0 / grid.len() as f64; grid.len()];
    let g = (0..grid.len())
        .map(|_| {
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.7)).collect();
            HermitianMatrix::from_real_diag(&diag)
        })
        .collect();
    Ok(State::new(n, grid.clone(), mu, g)?.0)
}

fn amplified_positive(map: &GridMap, values: &[CMatrix]) -> anyhow::Result<bool> {
    let n = map.n();
    let m = map.grid().len();
    let mut out = vec![CMatrix::zeros(2 * n, 2 * n); m];
    for (&(k, j), comp) in map.components() {
        for p in 0..2 {
            for q in 0..2 {
                let block = values[j].view((p * n, q * n), (n, n)).into_owned();
                let img = blockmap::unvec_matrix(&(comp * blockmap::vec_matrix(&block)), n);
                for r in 0..n {
                    for c in 0..n {
                        out[k][(p * n + r, q * n + c)] += img[(r, c)];
                    }
                }
            }
        }
    }
    let scale = out
        .iter()
        .chain(values.iter())
        .map(matcore::op_norm)
        .fold(1.0, f64::max);
    for v in &out {
        if matcore::op_norm(&(v - v.adjoint())) > 1e-9 * scale {
            return Ok(false);
        }
        let sym = HermitianMatrix::symmetrize(v.clone());
        if !matcore::is_psd(&sym, 1e-9 * scale)?.is_psd {
            return Ok(false);
        }
    }
    Ok(true)
}

fn entangled(m: usize, j: usize) -> Vec<CMatrix> {
    let mut values = vec![CMatrix::zeros(4, 4); m];
    let mut p = CMatrix::zeros(4, 4);
    for a in 0..2 {
        for c in 0..2 {
            p[(a * 2 + a, c * 2 + c)] = C64::new(1.0, 0.0);
        }
    }
    values[j] = p;
    values
}
