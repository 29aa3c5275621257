//! Feedforward neural networks treated as statistical-mechanical systems.
//!
//! The library models a network as a septuple: state vector, input/output
//! projections (as index sets), masked weight matrix, bias vector,
//! activation map and a loss selector. On top of the usual training
//! machinery (forward propagation, backprop, SGD) it computes the
//! thermodynamic diagnostic stack for the canonical ensemble of state
//! vectors: the residual Gram operator and its spectrum, partition
//! function, free energy, average loss, entropy/complexity decomposition,
//! free-energy Laplacian, log-moment skewness and gap-based inverse
//! temperature estimates, plus exact Monte Carlo validation on small
//! instances.
//!
//! Modules:
//! - [`linalg`]: dense matrices, Jacobi symmetric eigensolver, LU determinant
//! - [`septuple`]: the network data model, propagation, checkpoints
//! - [`loss`]: boundary and bulk losses, hidden-state minimization
//! - [`trainer`]: reverse-mode gradients and SGD
//! - [`spectral`]: the operator spectrum and all thermodynamic functionals
//! - [`ensemble`]: Metropolis sampling of the canonical ensemble
//! - [`dataio`]: IDX ingestion, record encoding, synthetic data
//! - [`cli`]: the command-line front end

pub mod cli;
pub mod dataio;
pub mod ensemble;
pub mod linalg;
pub mod loss;
pub mod septuple;
pub mod spectral;
pub mod trainer;

pub use dataio::{Dataset, Record};
pub use linalg::{sym_eig, DenseMatrix, EigenDecomposition};
pub use septuple::{Activation, LossKind, Propagation, Septuple, StateVector, Topology};
pub use spectral::{GramMode, SpectralReport, ThermoRecord, ThermoTrace};
pub use trainer::{sgd_train, TrainConfig};
