//! Construction of finite-rank, unital, completely positive,
//! state-preserving maps close to the identity on a prescribed test family.
//!
//! Pipeline for a state `(μ, g)` with positive spectral margin, a family `F`
//! of scalar test functions, and a target `ε`:
//!
//! 1. partition the grid into consecutive cells on which every `f ∈ F`
//!    oscillates at most `ε/8`;
//! 2. pick `δ` from the ladder `{‖g‖/2^k}` so every cell carries positive
//!    mass where `λ_min(g) ≥ δ`, cluster those density values into range
//!    cells of operator-norm diameter `< ε²δ/64`, designate the heaviest
//!    range cell per domain cell, and record `r`, the smallest designated
//!    mass;
//! 3. pick `γ` so the remaining "bad" set `{λ_min(g) < γ}` is empty (margin
//!    policy) or carries mass below the budget
//!    `½·min{F(δr/2), εδr/(8‖g‖)}` (budget policy), then extend the
//!    clustering down to spectral floor `γ`;
//! 4. split each domain cell into Y-cells along range-cell membership, the
//!    first Y-cell absorbing the designated range cell and any bad points;
//! 5. emit `T(h) = Σ_cells [M^{-1/2} E(ρ g^{1/2} h g^{1/2}) M^{-1/2}] ⊗ ρ`
//!    with `M = E(ρ g)`, a sum of congruences, one block per Y-cell.
//!
//! Unitality and state preservation are algebraic identities of this form;
//! the per-cell diameter and oscillation bounds give the quantitative defect
//! `‖T(b⊗f) − b⊗f‖ ≤ ε` (and `≤ 7ε/8` for constant `f`) on the family.
//!
//! Indicator partitions of unity are exact at grid scale, so the
//! compact/open sandwich of the continuum construction collapses and its
//! error terms vanish; the smoothed mode keeps those error terms alive by
//! spilling a budgeted fraction of each indicator onto neighboring points.

use std::ops::Range;

use serde::Serialize;

use crate::blockmap::{congruence_component, CellBlockTag, GridMap};
use crate::error::{Error, Result};
use crate::gridalg::{self, MatrixFunction};
use crate::matcore::{self, HermitianMatrix};
use crate::states::State;
use crate::{CMatrix, C64};

/// Consecutive grid cells on which every test function oscillates at most
/// `osc_bound`.
#[derive(Debug, Clone)]
pub struct DomainPartition {
    pub cells: Vec<Range<usize>>,
    pub osc_bound: f64,
}

/// Greedy left-to-right maximal cells: each cell is extended while every
/// function's oscillation (max − min over the cell) stays within `bound`.
/// Singleton cells always qualify, so this cannot fail.
pub fn partition_domain(funcs: &[Vec<f64>], bound: f64) -> Result<DomainPartition> {
    if funcs.is_empty() {
        return Err(Error::InvalidArgument(
            "domain partition needs at least one test function".into(),
        ));
    }
    if !(bound > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "oscillation bound must be positive, got {bound}"
        )));
    }
    let m = funcs[0].len();
    if funcs.iter().any(|f| f.len() != m) {
        return Err(Error::ShapeMismatch(
            "test functions sampled on different grids".into(),
        ));
    }
    let mut cells = Vec::new();
    let mut start = 0usize;
    let mut lows: Vec<f64> = funcs.iter().map(|f| f[0]).collect();
    let mut highs = lows.clone();
    for k in 1..m {
        let fits = funcs.iter().enumerate().all(|(i, f)| {
            let lo = lows[i].min(f[k]);
            let hi = highs[i].max(f[k]);
            hi - lo <= bound
        });
        if fits {
            for (i, f) in funcs.iter().enumerate() {
                lows[i] = lows[i].min(f[k]);
                highs[i] = highs[i].max(f[k]);
            }
        } else {
            cells.push(start..k);
            start = k;
            for (i, f) in funcs.iter().enumerate() {
                lows[i] = f[k];
                highs[i] = f[k];
            }
        }
    }
    cells.push(start..m);
    Ok(DomainPartition {
        cells,
        osc_bound: bound,
    })
}

/// The admissible perturbation `F(s) = (εs/(8‖g‖))²`: if two PSD matrices
/// with spectra in `[s, ‖g‖]` differ by at most `F(s)`, their inverse square
/// roots differ by at most `ε/(8‖g‖)`, via
/// `‖a^{-1/2} − b^{-1/2}‖ ≤ s^{-1}‖a − b‖^{1/2}`.
pub fn modulus_inverse_root(s: f64, eps: f64, gnorm: f64) -> Result<f64> {
    if !(s > 0.0) || s > gnorm {
        return Err(Error::InvalidArgument(format!(
            "spectral floor must satisfy 0 < s ≤ ‖g‖, got s = {s}, ‖g‖ = {gnorm}"
        )));
    }
    let root = eps * s / (8.0 * gnorm);
    Ok(root * root)
}

/// One cluster of density values: members share a spectral floor and sit
/// within `diameter` of each other in operator norm.
#[derive(Debug, Clone)]
pub struct RangeCell {
    pub members: Vec<usize>,
    pub floor: f64,
    pub diameter: f64,
}

/// Clustering of `{j : λ_min(g_j) ≥ gamma}` into cells tight enough that
/// square-root/inverse-square-root quotients of convex combinations stay
/// within `ε/8` of the identity.
#[derive(Debug, Clone)]
pub struct RangeCells {
    pub gamma: f64,
    pub cells: Vec<RangeCell>,
    /// Range-cell index per grid point; `None` marks points below `gamma`.
    pub member_of: Vec<Option<usize>>,
}

const RANGE_CELL_MAX_RETRIES: usize = 8;
const HULL_SAMPLES_PER_CELL: usize = 100;

/// Greedy clustering of the density values at spectral floor `gamma` with
/// per-cell diameter `< ε²γ/64`, followed by a sampling check of the
/// convex-hull property `‖a^{1/2}b^{-1/2} − 1‖ < ε/8`; a failed sample halves
/// the diameter target and re-clusters.
pub fn partition_range(state: &State, gamma: f64, eps: f64) -> Result<RangeCells> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "range floor must be positive, got {gamma}"
        )));
    }
    let mins = point_min_eigenvalues(state)?;
    let candidates: Vec<usize> = (0..state.grid().len())
        .filter(|&j| mins[j] >= gamma)
        .collect();
    cluster_points(state, &candidates, gamma, eps)
}

fn point_min_eigenvalues(state: &State) -> Result<Vec<f64>> {
    state
        .densities()
        .iter()
        .map(|g| Ok(matcore::eig_herm(g)?.min_eigenvalue()))
        .collect()
}

fn cluster_points(state: &State, points: &[usize], floor: f64, eps: f64) -> Result<RangeCells> {
    use rand::Rng;
    use rand::SeedableRng;

    let mut eta = eps * eps * floor / 64.0;
    let mut worst = 0.0_f64;
    for retry in 0..=RANGE_CELL_MAX_RETRIES {
        let mut cells: Vec<RangeCell> = Vec::new();
        let mut member_of = vec![None; state.grid().len()];
        for &j in points {
            let gj = state.density(j).matrix();
            let mut placed = false;
            for (idx, cell) in cells.iter_mut().enumerate() {
                let mut far = 0.0_f64;
                for &k in &cell.members {
                    far = far.max(matcore::op_norm(&(gj - state.density(k).matrix())));
                    if far >= eta {
                        break;
                    }
                }
                if far < eta {
                    cell.members.push(j);
                    cell.diameter = cell.diameter.max(far);
                    member_of[j] = Some(idx);
                    placed = true;
                    break;
                }
            }
            if !placed {
                member_of[j] = Some(cells.len());
                cells.push(RangeCell {
                    members: vec![j],
                    floor,
                    diameter: 0.0,
                });
            }
        }

        // Sampling check of the hull property backing the diameter bound.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
            0x7261_6e67 ^ ((state.grid().len() as u64) << 8) ^ retry as u64,
        );
        let bound = eps / 8.0;
        let mut ok = true;
        'cells: for cell in &cells {
            if cell.members.len() < 2 {
                continue;
            }
            for _ in 0..HULL_SAMPLES_PER_CELL {
                let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let a = cell.members[rng.random_range(0..cell.members.len())];
                    let b = cell.members[rng.random_range(0..cell.members.len())];
                    let t: f64 = rng.random_range(0.0..=1.0);
                    let m = state.density(a).matrix() * C64::new(t, 0.0)
                        + state.density(b).matrix() * C64::new(1.0 - t, 0.0);
                    HermitianMatrix::symmetrize(m)
                };
                let a = pick(&mut rng);
                let b = pick(&mut rng);
                let root = matcore::psd_sqrt(&a)?;
                let inv_root = matcore::psd_inv_sqrt(&b, floor * (1.0 - 1e-9))?;
                let dev = matcore::op_norm(
                    &(root.matrix() * inv_root.matrix()
                        - CMatrix::identity(state.n(), state.n())),
                );
                worst = worst.max(dev);
                if dev >= bound {
                    ok = false;
                    break 'cells;
                }
            }
        }
        if ok {
            return Ok(RangeCells {
                gamma: floor,
                cells,
                member_of,
            });
        }
        eta *= 0.5;
    }
    Err(Error::RangeCellTooCoarse {
        retries: RANGE_CELL_MAX_RETRIES,
        worst,
    })
}

/// How `γ` is chosen once `δ` and `r` are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaPolicy {
    /// `γ = min(δ, margin)` whenever the state has positive spectral margin,
    /// which makes the bad set `{λ_min(g) < γ}` empty. Grid invertibility is
    /// uniform, so the continuum mass budget is not needed.
    #[default]
    EmptyBadSet,
    /// Walk `γ` down the ladder `{δ/2^t}` until the bad-set mass fits the
    /// budget `½·min{F(δr/2), εδr/(8‖g‖)}`. Keeps the bad-set absorption
    /// path of the construction alive even for states with positive margin.
    Budget,
}

/// Build-time switches; the defaults reproduce the plain construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub gamma_policy: GammaPolicy,
    /// Replace indicator partitions of unity by overlapping tents whose
    /// spill mass obeys the per-cell approximation budget.
    pub smoothed_rho: bool,
}

/// The chosen thresholds of a build.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    pub delta: f64,
    pub gamma: f64,
    pub r: f64,
}

struct ThresholdPlan {
    delta: f64,
    gamma: f64,
    r: f64,
    gnorm: f64,
    margin: f64,
    /// δ-stage clustering extended by γ-stage cells.
    range: RangeCells,
    /// Designated range-cell index per domain cell.
    designations: Vec<usize>,
}

const LADDER_DEPTH: u32 = 60;

fn threshold_plan(
    state: &State,
    partition: &DomainPartition,
    eps: f64,
    policy: GammaPolicy,
) -> Result<ThresholdPlan> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let lambda_mins = point_min_eigenvalues(state)?;
    let gnorm = state
        .densities()
        .iter()
        .map(|g| matcore::op_norm(g.matrix()))
        .fold(0.0, f64::max);
    if gnorm <= 0.0 {
        return Err(Error::NotGridFaithful);
    }
    let margin = state.faithfulness_margin()?;
    let mu = state.weights();

    // Largest ladder value δ = ‖g‖/2^k giving every cell positive mass on
    // {λ_min(g) ≥ δ}.
    let mut delta = None;
    'ladder: for k in 0..=LADDER_DEPTH {
        let cand = gnorm / f64::powi(2.0, k as i32);
        for cell in &partition.cells {
            let mass: f64 = cell
                .clone()
                .filter(|&j| lambda_mins[j] >= cand)
                .map(|j| mu[j])
                .sum();
            if mass <= 0.0 {
                continue 'ladder;
            }
        }
        delta = Some(cand);
        break;
    }
    let delta = delta.ok_or(Error::NotGridFaithful)?;

    // δ-stage clustering and heaviest-cell designations.
    let delta_points: Vec<usize> = (0..state.grid().len())
        .filter(|&j| lambda_mins[j] >= delta)
        .collect();
    let delta_cells = cluster_points(state, &delta_points, delta, eps)?;
    let mut designations = Vec::with_capacity(partition.cells.len());
    let mut r = f64::INFINITY;
    for cell in &partition.cells {
        let mut best = (0usize, -1.0_f64);
        for (idx, rc) in delta_cells.cells.iter().enumerate() {
            let mass: f64 = rc
                .members
                .iter()
                .filter(|&&j| cell.contains(&j))
                .map(|&j| mu[j])
                .sum();
            if mass > best.1 {
                best = (idx, mass);
            }
        }
        if best.1 <= 0.0 {
            return Err(Error::NotGridFaithful);
        }
        designations.push(best.0);
        r = r.min(best.1);
    }

    // γ: empty the bad set outright, or fit its mass under the budget.
    let gamma = match policy {
        GammaPolicy::EmptyBadSet if margin > 0.0 => delta.min(margin),
        _ => {
            let f_mod = modulus_inverse_root((delta * r / 2.0).min(gnorm), eps, gnorm)?;
            let budget = 0.5 * f_mod.min(eps * delta * r / (8.0 * gnorm));
            let mut found = None;
            for t in 1..=LADDER_DEPTH {
                let cand = delta / f64::powi(2.0, t as i32);
                let bad_mass: f64 = (0..state.grid().len())
                    .filter(|&j| lambda_mins[j] < cand)
                    .map(|j| mu[j])
                    .sum();
                if bad_mass < budget {
                    found = Some(cand);
                    break;
                }
            }
            found.ok_or(Error::NotGridFaithful)?
        }
    };

    // Extend the clustering down to floor γ, keeping the δ-stage cells.
    let gamma_points: Vec<usize> = (0..state.grid().len())
        .filter(|&j| lambda_mins[j] >= gamma && lambda_mins[j] < delta)
        .collect();
    let extra = cluster_points(state, &gamma_points, gamma, eps)?;
    let mut range = delta_cells;
    range.gamma = gamma;
    let offset = range.cells.len();
    for (idx, cell) in extra.cells.into_iter().enumerate() {
        for &j in &cell.members {
            range.member_of[j] = Some(offset + idx);
        }
        range.cells.push(cell);
    }

    Ok(ThresholdPlan {
        delta,
        gamma,
        r,
        gnorm,
        margin,
        range,
        designations,
    })
}

/// Chooses `(δ, γ, r)` for a state and domain partition. Fails with
/// [`Error::NotGridFaithful`] when no ladder value puts positive mass in
/// every cell (for example for the pattern state, whose density is singular
/// at every point).
pub fn choose_thresholds(
    state: &State,
    partition: &DomainPartition,
    eps: f64,
) -> Result<Thresholds> {
    let plan = threshold_plan(state, partition, eps, GammaPolicy::EmptyBadSet)?;
    Ok(Thresholds {
        delta: plan.delta,
        gamma: plan.gamma,
        r: plan.r,
    })
}

/// One block of the final partition of unity.
#[derive(Debug, Clone)]
pub struct YCell {
    pub domain_cell: usize,
    /// First cells absorb the designated range cell and all bad points of
    /// their domain cell.
    pub is_first: bool,
    /// Range cell owning the members; for first cells, the designated one.
    pub range_cell: Option<usize>,
    pub members: Vec<usize>,
    pub rho: Vec<f64>,
    pub mass: f64,
}

/// The Y-cells of all domain cells, in deterministic order (first cell of a
/// domain cell first, then by range-cell index).
#[derive(Debug, Clone)]
pub struct YCells {
    pub cells: Vec<YCell>,
}

/// Splits every domain cell along range-cell membership. The first Y-cell of
/// a domain cell collects the designated range cell, all points below the
/// spectral floor, and zero-weight orphans; remaining range cells generate
/// Y-cells only where they carry positive mass.
pub fn build_y_cells(
    state: &State,
    partition: &DomainPartition,
    range: &RangeCells,
    designations: &[usize],
) -> Result<YCells> {
    if designations.len() != partition.cells.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.cells.len(),
            got: designations.len(),
        });
    }
    let m = state.grid().len();
    let mu = state.weights();
    let mut cells = Vec::new();
    for (b, cell) in partition.cells.iter().enumerate() {
        let designated = designations[b];
        let mut first_members = Vec::new();
        let mut by_range: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for j in cell.clone() {
            match range.member_of[j] {
                None => first_members.push(j),
                Some(rc) if rc == designated => first_members.push(j),
                Some(rc) => {
                    let mass: f64 = range.cells[rc]
                        .members
                        .iter()
                        .filter(|&&p| cell.contains(&p))
                        .map(|&p| mu[p])
                        .sum();
                    if mass > 0.0 {
                        by_range.entry(rc).or_default().push(j);
                    } else {
                        first_members.push(j);
                    }
                }
            }
        }
        if first_members.is_empty() {
            return Err(Error::Internal(format!(
                "empty first Y-cell in domain cell {b}; thresholds guarantee r > 0"
            )));
        }
        let mut push = |members: Vec<usize>, is_first: bool, rc: Option<usize>| {
            let mut rho = vec![0.0; m];
            let mut mass = 0.0;
            for &j in &members {
                rho[j] = 1.0;
                mass += mu[j];
            }
            cells.push(YCell {
                domain_cell: b,
                is_first,
                range_cell: rc,
                members,
                rho,
                mass,
            });
        };
        push(first_members, true, Some(designated));
        for (rc, members) in by_range {
            push(members, false, Some(rc));
        }
    }
    Ok(YCells { cells })
}

fn smooth_rhos(state: &State, plan: &ThresholdPlan, eps: f64, ycells: &mut YCells) -> Result<()> {
    let m = state.grid().len();
    let mu = state.weights();
    let mut owner = vec![usize::MAX; m];
    for (idx, cell) in ycells.cells.iter().enumerate() {
        for &j in &cell.members {
            owner[j] = idx;
        }
    }
    // Spill fraction limited by every cell's approximation budget
    // ½·min{F(γ·mass/2), ε·γ·mass/(8‖g‖)} against its incoming boundary mass.
    let mut sigma = 0.25_f64;
    for (idx, cell) in ycells.cells.iter().enumerate() {
        let floor_mass = plan.gamma * cell.mass.max(1e-300);
        let f_mod = modulus_inverse_root((floor_mass / 2.0).min(plan.gnorm), eps, plan.gnorm)?;
        let budget = 0.5 * f_mod.min(eps * floor_mass / (8.0 * plan.gnorm));
        let mut incoming = 0.0;
        for &j in &cell.members {
            for nb in [j.wrapping_sub(1), j + 1] {
                if nb < m && owner[nb] != idx {
                    incoming += mu[nb];
                }
            }
        }
        if incoming > 0.0 && budget > 0.0 {
            sigma = sigma.min(0.9 * budget / incoming);
        }
    }
    sigma = sigma.clamp(0.0, 0.25);
    if sigma == 0.0 {
        return Ok(());
    }
    let snapshot: Vec<usize> = owner.clone();
    for j in 0..m.saturating_sub(1) {
        let (a, b) = (snapshot[j], snapshot[j + 1]);
        if a != b {
            ycells.cells[a].rho[j + 1] += sigma;
            ycells.cells[b].rho[j + 1] -= sigma;
            ycells.cells[b].rho[j] += sigma;
            ycells.cells[a].rho[j] -= sigma;
        }
    }
    for cell in &ycells.cells {
        if cell.rho.iter().any(|&w| w < -1e-12) {
            return Err(Error::Internal("smoothed partition went negative".into()));
        }
    }
    Ok(())
}

/// Per-build diagnostics: thresholds, per-cell floors and sandwich
/// deviations, measured probe defects.
#[derive(Debug, Clone, Serialize)]
pub struct ApproximatorDiagnostics {
    pub eps: f64,
    pub delta: f64,
    pub gamma: f64,
    pub r: f64,
    pub gnorm: f64,
    pub margin: f64,
    pub cell_count: usize,
    pub rank_bound: usize,
    /// Actual `λ_min(E(ρ g))` per Y-cell.
    pub spectral_floors: Vec<f64>,
    /// Guaranteed floor per Y-cell: `δr/2` for first cells, `γ·mass/2` else.
    pub floor_requirements: Vec<f64>,
    /// Per cell: `sup` over member points of
    /// `‖g_y^{1/2} M^{-1/2} − mass^{-1/2}‖`.
    pub sandwich_deviations: Vec<f64>,
    /// `max_b ‖T(b⊗1) − b⊗1‖` over matrix units and the identity.
    pub matrix_part_defect: f64,
    /// `max_{f,b} ‖T(b⊗f) − b⊗f‖` over the test family and the same probes.
    pub family_defect: f64,
}

/// Builds the approximating map for `state`, the test family `funcs`
/// (real samples on the state's grid), and target `eps`, with default
/// options. Returns the map together with its diagnostics.
pub fn build_t(
    state: &State,
    funcs: &[Vec<f64>],
    eps: f64,
) -> Result<(GridMap, ApproximatorDiagnostics)> {
    build_t_with(state, funcs, eps, BuildOptions::default())
}

pub fn build_t_with(
    state: &State,
    funcs: &[Vec<f64>],
    eps: f64,
    options: BuildOptions,
) -> Result<(GridMap, ApproximatorDiagnostics)> {
    let n = state.n();
    let grid = state.grid().clone();
    let partition = partition_domain(funcs, eps / 8.0)?;
    let plan = threshold_plan(state, &partition, eps, options.gamma_policy)?;
    let mut ycells = build_y_cells(state, &partition, &plan.range, &plan.designations)?;
    if options.smoothed_rho {
        smooth_rhos(state, &plan, eps, &mut ycells)?;
    }

    let mu = state.weights();
    let roots: Vec<HermitianMatrix> = state
        .densities()
        .iter()
        .map(matcore::psd_sqrt)
        .collect::<Result<_>>()?;

    let mut map = GridMap::new(n, grid.clone());
    let mut spectral_floors = Vec::with_capacity(ycells.cells.len());
    let mut floor_requirements = Vec::with_capacity(ycells.cells.len());
    let mut sandwich_deviations = Vec::with_capacity(ycells.cells.len());

    for cell in &ycells.cells {
        // M = E(ρ g).
        let mut m_mat = CMatrix::zeros(n, n);
        for j in 0..grid.len() {
            let w = mu[j] * cell.rho[j];
            if w > 0.0 {
                m_mat += state.density(j).matrix() * C64::new(w, 0.0);
            }
        }
        let m_herm = HermitianMatrix::symmetrize(m_mat);
        let floor = if cell.is_first {
            plan.delta * plan.r / 2.0
        } else {
            plan.gamma * cell.mass / 2.0
        };
        floor_requirements.push(floor);
        spectral_floors.push(matcore::eig_herm(&m_herm)?.min_eigenvalue());
        let m_inv_root = matcore::psd_inv_sqrt(&m_herm, floor)?;

        // Sandwich deviation sup over the cell's in-range members.
        let witness_mass: f64 = match (cell.is_first, cell.range_cell) {
            (true, Some(designated)) => cell
                .members
                .iter()
                .filter(|&&j| plan.range.member_of[j] == Some(designated))
                .map(|&j| mu[j])
                .sum(),
            _ => cell.mass,
        };
        let mut deviation = 0.0_f64;
        if witness_mass > 0.0 {
            let target = witness_mass.powf(-0.5);
            for &j in &cell.members {
                let in_witness = if cell.is_first {
                    plan.range.member_of[j] == cell.range_cell
                } else {
                    true
                };
                if !in_witness {
                    continue;
                }
                let w = roots[j].matrix() * m_inv_root.matrix();
                let shifted = &w - CMatrix::identity(n, n) * C64::new(target, 0.0);
                deviation = deviation.max(matcore::op_norm(&shifted));
            }
        }
        sandwich_deviations.push(deviation);

        // Components: congruences x ↦ c* x c with c = √(ρ_k μ_j ρ_j) g_j^{1/2} M^{-1/2}.
        for j in 0..grid.len() {
            let wj = mu[j] * cell.rho[j];
            if wj <= 0.0 {
                continue;
            }
            let c = roots[j].matrix() * m_inv_root.matrix() * C64::new(wj.sqrt(), 0.0);
            let base = congruence_component(&c);
            for k in 0..grid.len() {
                let wk = cell.rho[k];
                if wk > 0.0 {
                    map.add_to_component(k, j, &base * C64::new(wk, 0.0));
                }
            }
        }
    }

    let cell_count = ycells.cells.len();
    map.set_rank_bound(cell_count * n * n);
    if !options.smoothed_rho {
        map.set_structure(CellBlockTag {
            cells: ycells.cells.iter().map(|c| c.members.clone()).collect(),
        });
    }

    // Measured identity defects on the family and on the matrix part.
    let mut probes: Vec<CMatrix> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            probes.push(gridalg::matrix_unit(n, i, j));
        }
    }
    probes.push(CMatrix::identity(n, n));
    let one = vec![1.0; grid.len()];
    let matrix_part_defect =
        crate::blockmap::defect_probe(&map, &[gridalg::scalar_fn(&one)], &probes, &[])?;
    let complex_funcs: Vec<crate::CVector> =
        funcs.iter().map(|f| gridalg::scalar_fn(f)).collect();
    let family_defect = crate::blockmap::defect_probe(&map, &complex_funcs, &probes, &[])?;

    let diagnostics = ApproximatorDiagnostics {
        eps,
        delta: plan.delta,
        gamma: plan.gamma,
        r: plan.r,
        gnorm: plan.gnorm,
        margin: plan.margin,
        cell_count,
        rank_bound: cell_count * n * n,
        spectral_floors,
        floor_requirements,
        sandwich_deviations,
        matrix_part_defect,
        family_defect,
    };
    Ok((map, diagnostics))
}

/// A matrix function is fixed by `T` when it is constant on every Y-cell in
/// the matrix direction the cell averages; exposed for tests and experiments.
pub fn apply(map: &GridMap, h: &MatrixFunction) -> Result<MatrixFunction> {
    map.apply(h)
}
