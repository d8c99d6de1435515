//! Information geometry of category learning: categorical and neural Fisher
//! information, discriminant curves, mutual-information estimates, Fisher
//! allocation under resource constraints, and probes of trained networks.

pub mod allocate;
pub mod catfisher;
pub mod categories;
pub mod digest;
pub mod error;
pub mod infomeasure;
pub mod mc;
pub mod nettrain;
pub mod neurocode;
pub mod quadrature;

pub use categories::{CategoryModel, Component, ExpGaussComponent, GaussianComponent, LatentEmbedding};
pub use catfisher::{FisherMatrix, Polyline};
pub use error::{Error, Flag, Result};
pub use mc::MCConfig;
pub use allocate::{AllocationProblem, Constraint, Profile, TabulatedPsi};
pub use nettrain::{Activation, Dataset, MLPModel, NetNoise, PathProbe, TrainConfig};
pub use neurocode::{NoiseSpec, PopulationCode, QTag, Unit, VarianceLink};
pub use quadrature::QuadratureGrid;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
