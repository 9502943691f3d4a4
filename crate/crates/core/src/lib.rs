//! Pseudoinverse learning for feedforward networks.
//!
//! Networks are trained without gradients: every weight matrix is either a
//! Moore–Penrose pseudoinverse solve or a seeded random draw. The crate
//! provides
//!
//! - [`linalg`]: SVD pseudoinverse, numerical rank, projector residuals;
//! - [`activation`]: elementwise nonlinearities and their inverses;
//! - [`dataset`]: CSV loading, target encoding, bias augmentation;
//! - [`network`]: the weight stack, forward pass and `.pilnet` files;
//! - [`trainers`]: the `pil`, `pil0`, `epil` and `pil1` trainers;
//! - [`diagnostics`]: saturation sweeps, rank experiments and error floors;
//! - [`cli`]: the `pilkit` command-line front end.

pub mod activation;
pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod trainers;

pub use activation::Activation;
pub use dataset::{ColumnSpec, Dataset, EncodingMode, TargetEncoding};
pub use error::{PilError, Result};
pub use linalg::{Matrix, RankInfo};
pub use network::{BiasPolicy, PilNetwork};
pub use trainers::{train, Algorithm, HiddenWidth, StopReason, TrainConfig, TrainReport};
