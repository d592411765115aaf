//! Prior construction, candidate sampling, posterior weighting, anchor
//! placement and count selection, point estimates, and multi-dataset
//! assimilation.
//!
//! The inference scheme is prior importance sampling: candidates
//! `(theta, anchors)` are drawn from the prior decomposition
//! `p(anchors_a | z_a) p(theta | anchors_a, z_a) p(anchors_b | theta, anchors_a, z_a)`,
//! each candidate's likelihood against the type-B data is estimated
//! nonparametrically, and the normalized likelihoods become the posterior
//! weights.

mod anchors;
mod dependence;
mod ensemble;
mod pipeline;
mod prior;

pub use anchors::{place_anchors, AnchorStrategy};
pub use dependence::{
    dependence_diagnostic, dependence_diagnostic_with_null, forward_output_blocks,
    max_canonical_correlation, permutation_null_quantile, DependenceDiagnostic,
};
pub use ensemble::{
    point_estimate, posterior_weights, posterior_weights_from, Candidate, PointEstimateMode,
    PosteriorEnsemble,
};
pub use pipeline::{
    assimilate_joint, assimilate_naive_sequential, select_anchor_count, AnchorSelectionOutcome,
    Dataset, InversionSettings, PipelineSpec, StabilizationStep,
};
pub use prior::{prior_sample, MarginalPrior, PriorSpec};
