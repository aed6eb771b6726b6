//! Nonparametric structure learning for deep belief networks.
//!
//! A cascade of two-parameter Indian buffet processes places a prior over
//! layered directed graphs of unbounded width and depth. Each unit carries a
//! noisy sigmoid of its weighted parents. Inference is a single Markov chain
//! over structure, weights, biases, precisions, hidden states and
//! hyperparameters.

pub mod checkpoint;
pub mod data;
pub mod dense;
pub mod error;
pub mod experiment;
pub mod hypers;
pub mod ibp;
pub mod mcmc;
pub mod network;
pub mod random;

pub use checkpoint::Checkpoint;
pub use data::Dataset;
pub use error::{Error, ParseErrorKind, Result};
pub use experiment::{ReconstructionConfig, ReconstructionReport, RunConfig, TrainOutput};
pub use hypers::{HyperParameters, LayerHyperprior, NormalGamma};
pub use ibp::{CibpSample, EdgeMatrix, IbpParams};
pub use mcmc::{sweep, MoveFlags, SweepConfig, SweepStats};
pub use network::{LayerParameters, ModelState, NetworkStructure, PriorParams, UnitStates};
