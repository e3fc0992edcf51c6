//! JSON file formats. Complex numbers are two-element `[re, im]` arrays in
//! every format; omitted map components are zero.

use serde::{Deserialize, Serialize};

use crate::blockmap::GridMap;
use crate::error::{Error, Result};
use crate::gridalg::{Grid, MatrixFunction};
use crate::matcore::HermitianMatrix;
use crate::reformulator::BlockFormMap;
use crate::states::{PatternSet, State};
use crate::{CMatrix, C64};

type ComplexPair = [f64; 2];
type MatrixData = Vec<Vec<ComplexPair>>;

fn encode_matrix(m: &CMatrix) -> MatrixData {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn decode_matrix(data: &MatrixData, rows: usize, cols: usize) -> Result<CMatrix> {
    if data.len() != rows || data.iter().any(|row| row.len() != cols) {
        return Err(Error::ShapeMismatch(format!(
            "expected a {rows}x{cols} matrix"
        )));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, c| {
        C64::new(data[r][c][0], data[r][c][1])
    }))
}

/// `{n, m, values}` with one `n×n` matrix per grid point.
#[derive(Serialize, Deserialize)]
pub struct MatrixFunctionFile {
    pub n: usize,
    pub m: usize,
    pub values: Vec<MatrixData>,
}

impl MatrixFunctionFile {
    pub fn encode(h: &MatrixFunction) -> Self {
        MatrixFunctionFile {
            n: h.n(),
            m: h.grid().len(),
            values: h.values().iter().map(encode_matrix).collect(),
        }
    }

    pub fn decode(&self) -> Result<MatrixFunction> {
        let grid = Grid::new(self.m)?;
        let values = self
            .values
            .iter()
            .map(|v| decode_matrix(v, self.n, self.n))
            .collect::<Result<Vec<_>>>()?;
        MatrixFunction::new(self.n, grid, values)
    }
}

/// `{n, m, mu, g}`: weights and one density matrix per grid point.
#[derive(Serialize, Deserialize)]
pub struct StateFile {
    pub n: usize,
    pub m: usize,
    pub mu: Vec<f64>,
    pub g: Vec<MatrixData>,
}

impl StateFile {
    pub fn encode(state: &State) -> Self {
        StateFile {
            n: state.n(),
            m: state.grid().len(),
            mu: state.weights().to_vec(),
            g: state
                .densities()
                .iter()
                .map(|d| encode_matrix(d.matrix()))
                .collect(),
        }
    }

    /// Decodes and normalizes; returns the state and the rescale factor that
    /// was applied to the density.
    pub fn decode(&self) -> Result<(State, f64)> {
        let grid = Grid::new(self.m)?;
        let g = self
            .g
            .iter()
            .map(|d| Ok(HermitianMatrix::new(decode_matrix(d, self.n, self.n)?)?))
            .collect::<Result<Vec<_>>>()?;
        State::new(self.n, grid, self.mu.clone(), g)
    }
}

/// `{level, balance_level, members}` with sorted member indices.
#[derive(Serialize, Deserialize)]
pub struct PatternFile {
    pub level: u32,
    pub balance_level: u32,
    pub members: Vec<usize>,
}

impl PatternFile {
    pub fn encode(pattern: &PatternSet) -> Self {
        PatternFile {
            level: pattern.level(),
            balance_level: pattern.balance_level(),
            members: pattern.member_indices(),
        }
    }

    pub fn decode(&self) -> Result<PatternSet> {
        let grid = Grid::dyadic(self.level)?;
        PatternSet::from_members(grid, &self.members, self.balance_level)
    }
}

#[derive(Serialize, Deserialize)]
pub struct GridMapComponent {
    pub k: usize,
    pub j: usize,
    pub matrix: MatrixData,
}

/// Header plus explicit nonzero components (`n²×n²` each, matrix-unit
/// basis); everything absent is the zero map.
#[derive(Serialize, Deserialize)]
pub struct GridMapFile {
    pub n: usize,
    pub m: usize,
    pub structure: Option<String>,
    pub components: Vec<GridMapComponent>,
}

impl GridMapFile {
    pub fn encode(map: &GridMap) -> Self {
        GridMapFile {
            n: map.n(),
            m: map.grid().len(),
            structure: map.structure().map(|tag| format!("cells:{}", tag.cells.len())),
            components: map
                .components()
                .map(|(&(k, j), mat)| GridMapComponent {
                    k,
                    j,
                    matrix: encode_matrix(mat),
                })
                .collect(),
        }
    }

    pub fn decode(&self) -> Result<GridMap> {
        let grid = Grid::new(self.m)?;
        let nn = self.n * self.n;
        let mut map = GridMap::new(self.n, grid);
        for comp in &self.components {
            if comp.k >= self.m || comp.j >= self.m {
                return Err(Error::IndexOutOfRange {
                    i: comp.k,
                    j: comp.j,
                    n: self.m,
                });
            }
            map.set_component(comp.k, comp.j, decode_matrix(&comp.matrix, nn, nn)?);
        }
        Ok(map)
    }
}

/// `{n, m, corners}` with the `n²` corner maps (`m×m` each) in row-major
/// corner order.
#[derive(Serialize, Deserialize)]
pub struct BlockFormMapFile {
    pub n: usize,
    pub m: usize,
    pub corners: Vec<MatrixData>,
}

impl BlockFormMapFile {
    pub fn encode(map: &BlockFormMap) -> Self {
        let mut corners = Vec::with_capacity(map.n() * map.n());
        for a in 0..map.n() {
            for b in 0..map.n() {
                corners.push(encode_matrix(map.corner(a, b)));
            }
        }
        BlockFormMapFile {
            n: map.n(),
            m: map.grid().len(),
            corners,
        }
    }

    pub fn decode(&self) -> Result<BlockFormMap> {
        let grid = Grid::new(self.m)?;
        let corners = self
            .corners
            .iter()
            .map(|c| decode_matrix(c, self.m, self.m))
            .collect::<Result<Vec<_>>>()?;
        BlockFormMap::new(self.n, grid, corners)
    }
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen;
    use crate::states::{balanced_pattern, rudin_state};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn state_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = Grid::new(6).unwrap();
        let state = gen::random_state(&mut rng, 2, &grid, 0.1, 2.0).unwrap();
        let file = StateFile::encode(&state);
        let text = serde_json::to_string(&file).unwrap();
        let back: StateFile = serde_json::from_str(&text).unwrap();
        let (decoded, rescale) = back.decode().unwrap();
        assert!((rescale - 1.0).abs() < 1e-9);
        for j in 0..6 {
            let d = crate::matcore::op_norm(
                &(decoded.density(j).matrix() - state.density(j).matrix()),
            );
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn pattern_file_roundtrip() {
        let pattern = balanced_pattern(5, 3).unwrap();
        let file = PatternFile::encode(&pattern);
        let back = file.decode().unwrap();
        assert_eq!(back, pattern);
    }

    #[test]
    fn grid_map_file_roundtrip_preserves_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = Grid::new(3).unwrap();
        let map = gen::random_grid_map(&mut rng, 2, &grid, true);
        let file = GridMapFile::encode(&map);
        let back = file.decode().unwrap();
        let h = gen::random_matrix_function(&mut rng, 2, &grid);
        let a = map.apply(&h).unwrap();
        let b = back.apply(&h).unwrap();
        assert!(crate::gridalg::sup_norm(&a.sub(&b).unwrap()) < 1e-14);
    }

    #[test]
    fn block_map_file_roundtrip() {
        let pattern = balanced_pattern(4, 2).unwrap();
        let state = rudin_state(&pattern);
        let s0 = crate::obstruction::expectation_family(&state, 2, 0.25).unwrap();
        let (blocks, _) = BlockFormMap::try_from_grid_map(&s0, 1e-12).unwrap();
        let file = BlockFormMapFile::encode(&blocks);
        let back = file.decode().unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let d = crate::matcore::op_norm(&(back.corner(a, b) - blocks.corner(a, b)));
                assert!(d < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn matrix_function_roundtrip(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grid = Grid::new(4).unwrap();
            let h = gen::random_matrix_function(&mut rng, 2, &grid);
            let file = MatrixFunctionFile::encode(&h);
            let text = serde_json::to_string(&file).unwrap();
            let back: MatrixFunctionFile = serde_json::from_str(&text).unwrap();
            let decoded = back.decode().unwrap();
            prop_assert!(crate::gridalg::sup_norm(&decoded.sub(&h).unwrap()) == 0.0);
        }
    }
}
