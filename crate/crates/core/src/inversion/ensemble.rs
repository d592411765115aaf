//! Weighted candidate ensembles and point estimates.

use crate::error::{Error, Result};
use crate::fieldsim::AnchorSet;
use crate::geostat::StructuralParams;
use crate::likelihood::DensityEstimate;

/// One `(theta, anchors)` draw with its evaluated likelihood and weight.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub id: usize,
    pub theta: StructuralParams,
    pub anchors: AnchorSet,
    /// Log prior density of the candidate, up to a shared additive constant.
    pub log_prior: f64,
    pub likelihood: Option<DensityEstimate>,
    /// Set when the likelihood estimate was degenerate (zero k-th-neighbor
    /// radius); such candidates carry zero weight instead of aborting the run.
    pub degenerate: bool,
    pub weight: f64,
}

impl Candidate {
    /// Likelihood value used for weighting: 0 for degenerate candidates,
    /// `None` when not yet evaluated.
    pub fn likelihood_value(&self) -> Option<f64> {
        if self.degenerate {
            Some(0.0)
        } else {
            self.likelihood.map(|e| e.value)
        }
    }
}

/// Weighted sample of candidates representing the posterior.
#[derive(Clone, Debug)]
pub struct PosteriorEnsemble {
    pub candidates: Vec<Candidate>,
    pub ess: f64,
    pub degenerate_count: usize,
}

impl PosteriorEnsemble {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.weight).collect()
    }

    /// Posterior weight on each distinct smoothness value: the
    /// model-averaging view of the discrete kappa support. Collapsing to
    /// the arg-max entry is model selection. Sorted by kappa.
    pub fn kappa_marginal(&self) -> Vec<(f64, f64)> {
        let mut entries: Vec<(f64, f64)> = Vec::new();
        for c in &self.candidates {
            match entries.iter_mut().find(|(k, _)| *k == c.theta.kappa) {
                Some((_, w)) => *w += c.weight,
                None => entries.push((c.theta.kappa, c.weight)),
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        entries
    }

    /// Posterior mean of the type-B anchor values.
    pub fn anchor_posterior_mean(&self) -> Vec<f64> {
        let q = self
            .candidates
            .first()
            .map(|c| c.anchors.type_b.len())
            .unwrap_or(0);
        let mut mean = vec![0.0; q];
        for c in &self.candidates {
            for (m, v) in mean.iter_mut().zip(&c.anchors.type_b.values) {
                *m += c.weight * v;
            }
        }
        mean
    }

    /// Posterior standard deviation of the type-B anchor values.
    pub fn anchor_posterior_sd(&self) -> Vec<f64> {
        let mean = self.anchor_posterior_mean();
        let mut var = vec![0.0; mean.len()];
        for c in &self.candidates {
            for (j, v) in c.anchors.type_b.values.iter().enumerate() {
                var[j] += c.weight * (v - mean[j]).powi(2);
            }
        }
        var.iter().map(|v| v.sqrt()).collect()
    }
}

/// Normalize estimated likelihoods into posterior weights.
///
/// Candidates flagged degenerate get weight zero (their count is surfaced
/// in the ensemble); if every candidate is degenerate or zero the whole
/// inference has failed.
pub fn posterior_weights(candidates: Vec<Candidate>) -> Result<PosteriorEnsemble> {
    let values: Vec<f64> = candidates
        .iter()
        .map(|c| {
            c.likelihood_value().ok_or_else(|| {
                Error::Config(format!("candidate {} has no evaluated likelihood", c.id))
            })
        })
        .collect::<Result<_>>()?;
    posterior_weights_from(candidates, values)
}

/// Weight candidates by externally supplied likelihood values. Used by the
/// comparison harness where per-dataset estimates are multiplied together.
pub fn posterior_weights_from(
    mut candidates: Vec<Candidate>,
    values: Vec<f64>,
) -> Result<PosteriorEnsemble> {
    if candidates.is_empty() {
        return Err(Error::Config(
            "posterior_weights needs at least one candidate".into(),
        ));
    }
    if values.len() != candidates.len() {
        return Err(Error::Dimension(
            "one likelihood value per candidate required".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numerical(
            "likelihood values must be finite and >= 0".into(),
        ));
    }
    let total: f64 = values.iter().sum();
    let degenerate_count = candidates
        .iter()
        .zip(&values)
        .filter(|(c, v)| c.degenerate || **v == 0.0)
        .count();
    if total <= 0.0 {
        return Err(Error::InferenceFailure(format!(
            "all {} candidates have zero or degenerate likelihood",
            candidates.len()
        )));
    }
    let mut sum_sq = 0.0;
    for (c, v) in candidates.iter_mut().zip(&values) {
        c.weight = v / total;
        sum_sq += c.weight * c.weight;
    }
    if degenerate_count > 0 {
        log::info!("{degenerate_count} degenerate candidate(s) received zero weight");
    }
    Ok(PosteriorEnsemble {
        candidates,
        ess: 1.0 / sum_sq,
        degenerate_count,
    })
}

/// Which point estimate to extract from a weighted ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointEstimateMode {
    /// Arg-max of the estimated likelihood alone.
    MaximumLikelihood,
    /// Arg-max of prior * likelihood. Coincides with the maximum-likelihood
    /// pick exactly when the prior is flat across candidates.
    MaximumAPosteriori,
}

/// Best candidate under the requested criterion. Ties break toward the
/// lowest candidate index.
pub fn point_estimate(ensemble: &PosteriorEnsemble, mode: PointEstimateMode) -> Result<&Candidate> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in &ensemble.candidates {
        let value = match c.likelihood_value() {
            Some(v) if v > 0.0 => match mode {
                PointEstimateMode::MaximumLikelihood => v.ln(),
                PointEstimateMode::MaximumAPosteriori => c.log_prior + v.ln(),
            },
            _ => continue,
        };
        match best {
            Some((_, bv)) if value <= bv => {}
            _ => best = Some((c, value)),
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        Error::InferenceFailure("no candidate with positive likelihood for a point estimate".into())
    })
}
