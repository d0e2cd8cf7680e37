//! Gaussian-process Bayesian optimisation with expected improvement over
//! mixed continuous and discrete domains. All search happens in the unit
//! cube; [`SearchSpace`] maps to and from raw hyperparameter values.

mod acquisition;
mod gp;
mod lbfgs;
mod optimizer;
mod space;

pub use acquisition::{expected_improvement, expected_improvement_at};
pub use gp::{Gp, GpHyper, NoiseModel};
pub use lbfgs::{minimize_box, LbfgsOptions};
pub use optimizer::{latin_hypercube, optimize, propose_next, BoConfig, BoOutcome, BoState, Evaluation};
pub use space::{Dim, DimKind, SearchSpace};
