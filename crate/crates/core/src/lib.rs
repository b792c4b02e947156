//! Nadaraya-Watson class probabilities with aleatoric/epistemic uncertainty,
//! a reject option, bandwidth tuning and the metrics used to evaluate them.
//!
//! ```no_run
//! use nuq::{toys, FitOptions, KernelKind, KernelSpec, NuqModel};
//!
//! let ds = toys::gen_two_moons(2000, 0.1, 0).unwrap();
//! let kernel = KernelSpec::new(KernelKind::Gaussian, 0.1, ds.dim()).unwrap();
//! let model = NuqModel::fit(ds, kernel, FitOptions::default()).unwrap();
//! let report = model.uncertainties(&[0.5, 0.25]).unwrap();
//! println!("U_a = {}, U_e = {}", report.aleatoric, report.epistemic);
//! ```

pub mod config;
pub mod dataset;
pub mod density;
pub mod error;
pub mod io;
pub mod kernels;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod reject;
pub mod rng;
pub mod toys;
pub mod tuning;

pub use dataset::{EmbeddingDataset, PointMatrix};
pub use density::{DensityMode, GaussianFit, Ridge};
pub use error::{NuqError, Result};
pub use kernels::{KernelKind, KernelSpec};
pub use knn::{Backend, IndexConfig};
pub use model::{ClassProbabilities, FitOptions, NuqModel, ScoreColumns, UncertaintyReport};
pub use persist::{load_model, save_model};
pub use reject::{abstain, abstain_batch, Action, RejectConfig, RejectDecision};
pub use tuning::{tune_bandwidth, BandwidthGrid, TuneConfig, TuneResult};
