//! Parameter identification by dynamic regressor extension and mixing, with
//! the gradient law and the averaging law, plus a state-reconstruction
//! application built on the same pipeline.
//!
//! ```no_run
//! use drem::{bundled, simulate, LawKind};
//!
//! let file = bundled("scenario_a").unwrap();
//! let run = simulate(&file, LawKind::Averaging).unwrap();
//! println!("{:?}", run.summary.theta_tilde_final);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod expcli;
pub mod extension;
pub mod integrator;
pub mod mixing;
pub mod observer;
pub mod signals;
pub mod smallmat;
pub mod system;

pub use error::{Error, Result};
pub use expcli::{simulate, RunResult, Summary};
pub use integrator::Trace;
pub use signals::{bundled, bundled_names, LawKind, ScenarioFile, ScenarioSpec};
pub use smallmat::Mat;
pub use system::DremSystem;
