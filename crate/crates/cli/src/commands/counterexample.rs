//! Counterexample runs: build the balanced pattern and its state, run the
//! trade-off scan, and certify the inequality chain for the preserving
//! member of the expectation family.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use cpapprox_core::error::Error;
use cpapprox_core::obstruction::{self, ScanStatus};
use cpapprox_core::reformulator::BlockFormMap;
use cpapprox_core::states;
use cpapprox_core::{gridalg, Precondition};

use crate::config::RunConfig;
use crate::report::{Check, Report};

/// Fixed column order of the scan CSV.
pub const CSV_HEADER: &str =
    "lambda,eps,preservation_defect,retention,identity_defect,certified_bound,final_average,pass";

pub fn scan_csv(rows: &[obstruction::ScanRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let final_avg = row
            .final_average
            .map(|v| format!("{v:.17e}"))
            .unwrap_or_default();
        let status = match &row.status {
            ScanStatus::Pass => "pass".to_string(),
            ScanStatus::Fail => "fail".to_string(),
            ScanStatus::Ineligible(which) => format!("ineligible({which})"),
        };
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            row.lambda,
            row.eps,
            row.preservation_defect,
            row.retention,
            row.identity_defect,
            row.certified_bound,
            final_avg,
            status
        )
        .expect("string write");
    }
    out
}

pub fn run(config: RunConfig) -> anyhow::Result<Report> {
    let level = config.level.unwrap_or(10);
    let smooth_level = config.smooth_level.unwrap_or(5);
    if smooth_level < 1 || smooth_level >= level {
        return Err(Error::InvalidLevels {
            level,
            balance_level: smooth_level,
        }
        .into());
    }
    let t0 = Instant::now();
    let pattern = states::balanced_pattern(level, smooth_level)?;
    let state = states::rudin_state(&pattern);
    let grid = state.grid().clone();
    let theta = config.theta.unwrap_or(grid.len() / 2);
    let presets = super::parse_presets(&config.functions)?;

    let mut checks = Vec::new();
    let mut stages = Vec::new();
    let mut timings = BTreeMap::new();
    let mut csv_files = Vec::new();

    // The preserving member, certified for every preset and eps.
    let s0 = obstruction::expectation_family(&state, smooth_level, 0.0)?;
    let (blocks0, _) = BlockFormMap::try_from_grid_map(&s0, 1e-12)?;
    for &eps in &config.eps {
        for preset in &presets {
            let f = preset.sample(&grid);
            let cert = obstruction::verify_chain(&blocks0, &state, &f, theta, eps)?;
            checks.push(Check::flag(
                format!("chain_{}_eps{eps}", preset.name()),
                cert.pass,
                format!(
                    "final average {:.3e} against bound {:.3e}",
                    cert.final_average, cert.final_bound
                ),
            ));
            checks.push(Check::le(
                format!("final_average_{}_eps{eps}", preset.name()),
                cert.final_average,
                cert.final_bound,
                "averaged |S_12(f)|² under the certified bound",
            ));
            stages.push(serde_json::json!({
                "kind": "certificate",
                "preset": preset.name(),
                "certificate": cert,
            }));
        }
    }

    // Retention of the preserving member vanishes; its identity defect on
    // the annihilated corner is exactly the function norm.
    let one = gridalg::FunctionPreset::One.sample_complex(&grid);
    let e12_one =
        gridalg::tensor_embed_on(&gridalg::matrix_unit(2, 0, 1), &one, &grid)?;
    let image = s0.apply(&e12_one)?;
    checks.push(Check::le(
        "retention_lambda0",
        gridalg::sup_norm(&image),
        0.0,
        "‖S_0(e_12 ⊗ 1)‖",
    ));
    let defect = gridalg::sup_norm(&image.sub(&e12_one)?);
    checks.push(Check::le(
        "identity_defect_lambda0",
        (defect - 1.0).abs(),
        1e-12,
        "‖S_0(e_12 ⊗ 1) − e_12 ⊗ 1‖ = 1",
    ));

    // The grid identity is rejected for range smoothness.
    let identity = obstruction::identity_block_map(&grid);
    let f0 = presets[0].sample(&grid);
    let rejected = matches!(
        obstruction::verify_chain(&identity, &state, &f0, theta, config.eps[0]),
        Err(Error::PreconditionFailed {
            which: Precondition::RangeSmoothness,
            ..
        })
    );
    checks.push(Check::flag(
        "identity_rejected_range_smoothness",
        rejected,
        "grid identity map must fail the RangeSmoothness precondition",
    ));

    // Trade-off scan per eps, one CSV each.
    for &eps in &config.eps {
        let rows =
            obstruction::defect_tradeoff_scan(&state, smooth_level, &config.lambdas, &f0, theta, eps)?;
        for row in &rows {
            if row.lambda == 0.0 {
                checks.push(Check::le(
                    format!("scan_preserving_lambda0_eps{eps}"),
                    row.preservation_defect,
                    1e-9,
                    "preservation defect at λ = 0",
                ));
                checks.push(Check::flag(
                    format!("scan_certified_lambda0_eps{eps}"),
                    row.status == ScanStatus::Pass,
                    "λ = 0 member is certificate-eligible and passes",
                ));
            } else {
                checks.push(Check::flag(
                    format!("scan_tradeoff_lambda{}_eps{eps}", row.lambda),
                    row.retention > 1e-3 && row.preservation_defect > 1e-3,
                    format!(
                        "retention {:.3e}, preservation defect {:.3e}",
                        row.retention, row.preservation_defect
                    ),
                ));
                checks.push(Check::flag(
                    format!("scan_ineligible_lambda{}_eps{eps}", row.lambda),
                    matches!(row.status, ScanStatus::Ineligible(_)),
                    "non-preserving members are not certificate-eligible",
                ));
            }
        }
        let csv = scan_csv(&rows);
        csv_files.push((format!("scan_eps{eps}.csv"), csv));
        stages.push(serde_json::json!({
            "kind": "scan",
            "eps": eps,
            "rows": rows,
        }));
    }

    timings.insert("total".into(), t0.elapsed().as_secs_f64() * 1e3);

    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir)?;
        for (name, csv) in &csv_files {
            std::fs::write(dir.join(name), csv)?;
        }
    } else {
        for (name, csv) in &csv_files {
            println!("# {name}\n{csv}");
        }
    }

    Ok(Report::new(
        "counterexample",
        config,
        checks,
        serde_json::Value::Array(stages),
        timings,
    ))
}
