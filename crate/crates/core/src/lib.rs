//! Hypothesis testing for small average treatment effects in randomised
//! experiments with the permuted weighted two-armed-bandit (PWTAB) test.
//!
//! The pipeline is: cross-fitted doubly robust pseudo-outcomes
//! ([`dr_engine`]), the WTAB statistic driven by the tail-maximising policy
//! ([`tab_statistic`]), permutation and Cauchy aggregation ([`meta_perm`]),
//! with the limiting distribution in [`bandit_dist`]. Baseline tests, data
//! generators and a replication harness complete the toolkit.

pub mod bandit_dist;
pub mod baselines;
pub mod dgp;
pub mod dr_engine;
pub mod error;
pub mod folds;
pub mod harness;
pub mod learners;
pub mod matrix;
pub mod meta_perm;
pub mod normal;
pub mod rng;
pub mod stats;
pub mod tab_statistic;

pub use dr_engine::{Dataset, NuisanceFits, NuisanceSource, Propensity};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use meta_perm::{PermutationPlan, PwtabConfig, TestReport};
pub use tab_statistic::{LambdaConfig, PseudoOutcomes, RewardSequence};
