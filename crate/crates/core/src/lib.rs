//! Perturbed stochastic recursive gradient descent (SSRGD) for smooth
//! nonconvex problems, with finite-sum and online oracles.
//!
//! The crate provides the optimizer, the gradient estimators it is built on,
//! first-order baselines sharing the same trace format, synthetic and
//! LIBSVM-backed test problems, Hessian-based stationarity certificates and a
//! set of diagnostics that probe the analysis numerically.

pub mod baselines;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod problem;
pub mod problems;
pub mod rng;
pub mod spectral;
pub mod ssrgd;
pub mod trace;
pub mod vector;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use problem::{Mode, Problem, ProblemExt, ProblemInstance, SfoCounter, Smoothness};
pub use rng::RngStream;
pub use spectral::{certify, Certificate, SospCertifier};
pub use ssrgd::{run_ssrgd, run_ssrgd_with, RunFailure, RunHooks, SsrgdOutcome, Termination};
pub use trace::{Event, TraceRecord};
pub use vector::ParamVector;
