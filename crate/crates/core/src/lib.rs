//! Design-based variance estimation for GREG estimators of a finite
//! population mean, via the H-decomposition of the estimator's U-statistic
//! representation.

pub mod classicvar;
pub mod designs;
pub mod error;
pub mod frame;
pub mod greg;
pub mod io;
pub mod hdvar;
pub mod kernels;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod sum;

pub use classicvar::{asymptotic_variance, ij_bm_variance, ij_direct_tau1, BmPlugin, BmVariance};
pub use designs::{compute_inclusion_probs, draw_sample, joint_inclusion, DesignSpec};
pub use error::{Error, ErrorKind, Result};
pub use frame::{InclusionProbs, PairwiseRule, Population, Sample};
pub use greg::{estimate_difference, estimate_greg, estimate_ht, fit_greg, GregFit, PopulationModel};
pub use hdvar::{hd_variance, HdEstimator, HdOptions, Normalizer, PhiStatus, VarianceReport};
pub use kernels::KernelContext;
pub use sim::{normal_quantile, run_replications, summarize, Method, ReplicationResult, SimConfig, Summary};
pub use oracle::{enumerate_statistic, exact_estimator_expectation, exact_h_components, OracleReport, SampleEstimator};
