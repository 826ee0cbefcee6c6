//! Reconstruction from linearized boundary data: integral identities
//! (moments), least-squares recovery of `q` and `V_m`, circular obstacle
//! search and the density experiment for products of gradients.

mod bank;
mod density;
mod lsq;
mod moments;
mod obstacle;
mod recover;

use serde::{Deserialize, Serialize};

pub use bank::{adjoint_weights, RowModel, TestBank, TestSpec};
pub use density::{density_basis, density_check, DensityReport};
pub use lsq::{tikhonov_solve, LsqReport};
pub use moments::{
    all_tuples, boundary_moments, green_consistency, interior_q_moments, moment_from_boundary, q_moment_interior,
    random_tuples, v_moment_interior, GreenCheck, MomentRecord, MomentSource,
};
pub use obstacle::{obstacle_misfit, obstacle_response, recover_obstacle, ObstacleReport, ObstacleSearch};
pub use recover::{recover_q, recover_vm, Basis, Reconstruction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    GridNodal,
    FourierModes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructionOptions {
    pub basis: BasisKind,
    /// Modes per axis for the cosine basis.
    pub fourier_modes: usize,
    /// Tikhonov weight relative to `‖WA‖₂²`.
    pub tikhonov_lambda: f64,
    /// Sobolev order `s` of the penalty on cosine coefficients,
    /// `Σ (1 + |k|²)^s c_k²`; zero gives the plain `‖c‖²`.
    pub smoothness: f64,
    pub n_test_triplets: usize,
    pub rng_seed: u64,
    /// Condition estimate above which the system is reported rank deficient.
    pub rank_threshold: f64,
    pub row_model: RowModel,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            basis: BasisKind::FourierModes,
            fourier_modes: 9,
            tikhonov_lambda: 1e-6,
            smoothness: 0.0,
            n_test_triplets: 400,
            rng_seed: 0,
            rank_threshold: 1e10,
            row_model: RowModel::DiscreteAdjoint,
        }
    }
}
