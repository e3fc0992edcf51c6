//! Command implementations.

pub mod approximate;
pub mod counterexample;
pub mod selftest;

use anyhow::{bail, Context};
use cpapprox_core::gridalg::FunctionPreset;
use cpapprox_core::states::State;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, StateSource};

/// Seed of the bundled demo state; independent of the run seed so the demo
/// is the same across configurations.
const DEMO_SEED: u64 = 0xD0_0D;

pub(crate) fn resolve_state(config: &RunConfig, rng: &mut ChaCha8Rng) -> anyhow::Result<State> {
    let source = config.state.clone().unwrap_or(StateSource::Demo);
    let state = match source {
        StateSource::File { path } => {
            let file: cpapprox_core::io::StateFile =
                cpapprox_core::io::read_json(&path).context("reading state file")?;
            let (state, rescale) = file.decode()?;
            if (rescale - 1.0).abs() > 1e-12 {
                eprintln!("note: state density rescaled by {rescale:.6e} to normalize");
            }
            state
        }
        StateSource::Random { n, m, spectrum } => {
            let grid = cpapprox_core::gridalg::Grid::new(m)?;
            cpapprox_core::gen::random_state(rng, n, &grid, spectrum[0], spectrum[1])?
        }
        StateSource::Demo => {
            let grid = cpapprox_core::gridalg::Grid::new(128)?;
            let mut demo_rng = ChaCha8Rng::seed_from_u64(DEMO_SEED);
            cpapprox_core::gen::random_smooth_state(&mut demo_rng, 2, &grid, 0.1, 2.0, 0.05)?
        }
        StateSource::Rudin {
            level,
            balance_level,
        } => {
            let pattern = cpapprox_core::states::balanced_pattern(level, balance_level)?;
            cpapprox_core::states::rudin_state(&pattern)
        }
    };
    Ok(state)
}

pub(crate) fn parse_presets(names: &[String]) -> anyhow::Result<Vec<FunctionPreset>> {
    if names.is_empty() {
        bail!("at least one test function is required");
    }
    names
        .iter()
        .map(|n| FunctionPreset::parse(n).map_err(Into::into))
        .collect()
}
