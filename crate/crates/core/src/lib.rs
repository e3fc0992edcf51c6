//! Numerical toolkit for completely positive, state-preserving approximation
//! on grid-discretized homogeneous C*-algebras.
//!
//! The algebra under study is `M_n ⊗ C(X)` with `X = [0,1]`, discretized as
//! one `n×n` complex matrix per point of a uniform grid. On top of that sit:
//!
//! - [`matcore`] — dense Hermitian/PSD kernel (eigendecompositions, operator
//!   square roots, positivity tests, operator norms);
//! - [`gridalg`] — the discretized algebra: matrix-valued grid functions with
//!   pointwise *-algebra structure and the sup/operator C*-norm;
//! - [`blockmap`] — linear maps on the discretized algebra stored per
//!   component, with Choi-matrix access and UCP verification;
//! - [`states`] — states in density form `(μ, g)`, the conditional
//!   expectation onto `M_n`, diagonality/faithfulness predicates, and the
//!   balanced-pattern counterexample state;
//! - [`approximator`] — construction of finite-rank, unital, completely
//!   positive, state-preserving maps close to the identity on a prescribed
//!   test family, with per-stage diagnostics;
//! - [`reformulator`] — conversion of a UCP state-preserving map into an
//!   exactly block-form map with the same guarantees;
//! - [`obstruction`] — covers, averaging maps, and the certified inequality
//!   chain showing that block-form state-preserving maps with smooth ranges
//!   annihilate the off-diagonal corner for the balanced-pattern state;
//! - [`gen`] — seeded generators for reproducible experiments;
//! - [`io`] — file formats (complex numbers are `[re, im]` pairs throughout).

pub mod approximator;
pub mod blockmap;
pub mod error;
pub mod gen;
pub mod gridalg;
pub mod io;
pub mod matcore;
pub mod obstruction;
pub mod reformulator;
pub mod states;

pub use error::{Error, Precondition, Result};

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex vector; scalar grid functions are stored this way.
pub type CVector = nalgebra::DVector<C64>;
