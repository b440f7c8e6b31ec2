//! Model-based localization: oracle MFP, semi-blind localization and the
//! GCC-PHAT/TDOA baseline, all maximized over a coarse-to-fine grid.

pub mod eigen;
pub mod mfp;
pub mod sbl;
pub mod search;
pub mod tdoa;

use crate::geometry::CartesianPosition;

pub use eigen::PowerIteration;
pub use mfp::{mfp_objective, model_channels, oracle_mfp};
pub use sbl::{build_q, lambda_max, model_steering, sbl_localize, sbl_objective, QMatrix, SblObjective};
pub use search::{grid_search, GridOptimum, SearchVolume};
pub use tdoa::{gcc_phat, gcc_phat_localize, tdoa_localize, TdoaSet};

/// A position estimate with the objective value that selected it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub position: CartesianPosition,
    pub objective: f64,
}

impl From<GridOptimum> for Estimate {
    fn from(g: GridOptimum) -> Self {
        Self {
            position: g.position,
            objective: g.value,
        }
    }
}
