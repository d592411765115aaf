//! Prior specification and candidate sampling.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsim::{
    condition_gaussian, gaussian_log_density, sample_mvn, AnchorSet, Conditioning, PointData,
    TypeAData,
};
use crate::geostat::{covariance_matrix, trend_mean, Location, StructuralParams, TrendBasis};
use crate::seed;

use super::ensemble::Candidate;

/// Bounded-support marginal prior for one scalar parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalPrior {
    /// Uniform density on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Log-uniform on `[lo, hi]` (uniform in the logarithm); requires `lo > 0`.
    LogUniform { lo: f64, hi: f64 },
    /// Point mass: the parameter is held fixed.
    Fixed { value: f64 },
}

impl MarginalPrior {
    pub fn validate(&self, name: &str) -> Result<()> {
        match *self {
            MarginalPrior::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!(
                        "{name}: uniform prior needs finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            MarginalPrior::LogUniform { lo, hi } => {
                if !(0.0 < lo && lo < hi) || !hi.is_finite() {
                    return Err(Error::Config(format!(
                        "{name}: log-uniform prior needs 0 < lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            MarginalPrior::Fixed { value } => {
                if !value.is_finite() {
                    return Err(Error::Config(format!(
                        "{name}: fixed prior value must be finite"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            MarginalPrior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            MarginalPrior::LogUniform { lo, hi } => {
                (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
            }
            MarginalPrior::Fixed { value } => value,
        }
    }

    /// Log density at `x` (0 for a point mass at its own value).
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            MarginalPrior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            MarginalPrior::LogUniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(x.ln() + (hi.ln() - lo.ln()).ln())
                } else {
                    f64::NEG_INFINITY
                }
            }
            MarginalPrior::Fixed { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Prior over the structural parameters and anchors.
///
/// The decomposition order is fixed:
/// `p(anchors_a | z_a)` pins the type-A anchors to the data (exactly when the
/// data are error-free; with a positive type-A noise variance the anchors
/// stay pinned and the noise enters the conditioning covariance instead),
/// then `p(theta | anchors_a, z_a)` updates the structural marginals by the
/// Gaussian type-A likelihood, then `p(anchors_b | theta, anchors_a, z_a)`
/// is the conditional Gaussian at the anchor locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// One marginal per trend coefficient.
    pub beta: Vec<MarginalPrior>,
    pub sigma2: MarginalPrior,
    pub phi: MarginalPrior,
    pub lambda: MarginalPrior,
    /// Discrete smoothness support, uniform weights. Competing kappa values
    /// act as competing covariance models; the posterior kappa marginal is
    /// the model-averaging weight vector.
    pub kappa_set: Vec<f64>,
    /// Nugget is held fixed rather than inferred.
    pub nugget: f64,
    #[serde(default)]
    pub trend: TrendBasis,
    /// Observation-noise variance of the type-A data under the model.
    #[serde(default)]
    pub type_a_noise_var: f64,
}

impl PriorSpec {
    /// Independent defaults around unit scales, constant trend.
    pub fn default_for_scale(phi_lo: f64, phi_hi: f64) -> Self {
        PriorSpec {
            beta: vec![MarginalPrior::Uniform {
                lo: -10.0,
                hi: 10.0,
            }],
            sigma2: MarginalPrior::LogUniform { lo: 0.1, hi: 10.0 },
            phi: MarginalPrior::LogUniform {
                lo: phi_lo,
                hi: phi_hi,
            },
            lambda: MarginalPrior::Fixed { value: 0.0 },
            kappa_set: vec![0.5, 1.5, 2.5],
            nugget: 0.0,
            trend: TrendBasis::Constant,
            type_a_noise_var: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.trend.n_coeffs() {
            return Err(Error::Config(format!(
                "trend basis {:?} needs {} beta marginals, got {}",
                self.trend,
                self.trend.n_coeffs(),
                self.beta.len()
            )));
        }
        for (i, b) in self.beta.iter().enumerate() {
            b.validate(&format!("beta[{i}]"))?;
        }
        self.sigma2.validate("sigma2")?;
        self.phi.validate("phi")?;
        self.lambda.validate("lambda")?;
        if self.kappa_set.is_empty() {
            return Err(Error::Config("kappa set must be non-empty".into()));
        }
        if self.kappa_set.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
            return Err(Error::Config(
                "kappa values must be positive and finite".into(),
            ));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::Config("nugget must be >= 0".into()));
        }
        if !(self.type_a_noise_var >= 0.0 && self.type_a_noise_var.is_finite()) {
            return Err(Error::Config("type-A noise variance must be >= 0".into()));
        }
        match (self.sigma2, self.phi) {
            (MarginalPrior::Uniform { lo, .. }, _) if lo <= 0.0 => {
                return Err(Error::Config("sigma2 support must be positive".into()));
            }
            (_, MarginalPrior::Uniform { lo, .. }) if lo <= 0.0 => {
                return Err(Error::Config("phi support must be positive".into()));
            }
            (MarginalPrior::Fixed { value }, _) if value <= 0.0 => {
                return Err(Error::Config("sigma2 must be positive".into()));
            }
            (_, MarginalPrior::Fixed { value }) if value <= 0.0 => {
                return Err(Error::Config("phi must be positive".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn sample_theta<R: Rng>(&self, rng: &mut R) -> StructuralParams {
        StructuralParams {
            beta: self.beta.iter().map(|b| b.sample(rng)).collect(),
            sigma2: self.sigma2.sample(rng),
            phi: self.phi.sample(rng),
            nugget: self.nugget,
            kappa: self.kappa_set[rng.random_range(0..self.kappa_set.len())],
            lambda: self.lambda.sample(rng),
            trend: self.trend,
        }
    }

    /// Central representative of the prior (marginal midpoints, middle
    /// kappa); used as the reference parameter set for sensitivity maps.
    pub fn reference_theta(&self) -> StructuralParams {
        fn mid(m: &MarginalPrior) -> f64 {
            match *m {
                MarginalPrior::Uniform { lo, hi } => 0.5 * (lo + hi),
                MarginalPrior::LogUniform { lo, hi } => (lo * hi).sqrt(),
                MarginalPrior::Fixed { value } => value,
            }
        }
        StructuralParams {
            beta: self.beta.iter().map(mid).collect(),
            sigma2: mid(&self.sigma2),
            phi: mid(&self.phi),
            nugget: self.nugget,
            kappa: self.kappa_set[self.kappa_set.len() / 2],
            lambda: mid(&self.lambda),
            trend: self.trend,
        }
    }

    /// Log prior density of the structural marginals (up to the additive
    /// constant shared by every candidate).
    pub fn theta_log_density(&self, theta: &StructuralParams) -> f64 {
        let mut lp = 0.0;
        for (b, m) in theta.beta.iter().zip(&self.beta) {
            lp += m.log_density(*b);
        }
        lp += self.sigma2.log_density(theta.sigma2);
        lp += self.phi.log_density(theta.phi);
        lp += self.lambda.log_density(theta.lambda);
        lp -= (self.kappa_set.len() as f64).ln();
        lp
    }
}

/// Gaussian log likelihood of the type-A data under `theta`:
/// `log N(z_a; m(x_a), C_aa + noise I)`.
fn type_a_log_likelihood(theta: &StructuralParams, za: &TypeAData, noise_var: f64) -> Result<f64> {
    let mean = trend_mean(&za.locations, &theta.beta, theta.trend)?;
    let mut cov = covariance_matrix(&za.locations, theta)?;
    for i in 0..cov.nrows() {
        cov[(i, i)] += noise_var;
    }
    gaussian_log_density(&DVector::from_column_slice(&za.values), &mean, &cov)
}

/// Draw `count` candidates from the prior.
///
/// The structural parameters are drawn from `p(theta | z_a)` by weighted
/// resampling of a marginal-prior pool against the Gaussian type-A
/// likelihood (with empty `z_a` this reduces to plain marginal sampling).
/// Type-A anchors are pinned to the data; type-B anchor values are drawn
/// from their conditional Gaussian given `(theta, z_a)`.
pub fn prior_sample(
    prior: &PriorSpec,
    za: &TypeAData,
    anchor_locs: &[Location],
    count: usize,
    seed: u64,
) -> Result<Vec<Candidate>> {
    prior.validate()?;
    if count == 0 {
        return Err(Error::Config("prior_sample needs count >= 1".into()));
    }
    for (i, loc) in anchor_locs.iter().enumerate() {
        for (j, xa) in za.locations.iter().enumerate() {
            if loc.distance(xa) == 0.0 {
                return Err(Error::Config(format!(
                    "anchor location {i} coincides with type-A location {j}"
                )));
            }
        }
    }

    let thetas = sample_theta_given_za(prior, za, count, seed)?;

    let za_model = PointData {
        locations: za.locations.clone(),
        values: za.values.clone(),
        noise_var: prior.type_a_noise_var,
    };
    let mut za_cond = Conditioning::empty();
    za_cond.push_point_data(&za_model);

    let mut candidates = Vec::with_capacity(count);
    for (i, theta) in thetas.into_iter().enumerate() {
        let cand_seed = seed::derive_indexed(seed, "candidate", i as u64);
        let mut log_prior = prior.theta_log_density(&theta);
        if !za.is_empty() {
            log_prior += type_a_log_likelihood(&theta, za, prior.type_a_noise_var)?;
        }
        let type_b = if anchor_locs.is_empty() {
            PointData::empty()
        } else {
            let (mean, cov) = condition_gaussian(&theta, &za_cond, anchor_locs)?;
            let values = sample_mvn(
                &mean,
                &cov,
                theta.sigma2,
                seed::derive(cand_seed, "anchor-prior"),
            )?;
            log_prior += gaussian_log_density(&values, &mean, &cov)?;
            PointData::new(anchor_locs.to_vec(), values.iter().copied().collect(), 0.0)?
        };
        let anchors = AnchorSet::new(za_model.clone(), type_b)?;
        candidates.push(Candidate {
            id: i,
            theta,
            anchors,
            log_prior,
            likelihood: None,
            degenerate: false,
            weight: 0.0,
        });
    }
    Ok(candidates)
}

/// Draw structural parameters from `p(theta | z_a)`.
fn sample_theta_given_za(
    prior: &PriorSpec,
    za: &TypeAData,
    count: usize,
    seed: u64,
) -> Result<Vec<StructuralParams>> {
    let mut rng = seed::rng_from(seed::derive(seed, "theta-pool"));
    if za.is_empty() {
        return Ok((0..count).map(|_| prior.sample_theta(&mut rng)).collect());
    }
    let pool_size = (4 * count).max(1024);
    let mut pool = Vec::with_capacity(pool_size);
    let mut log_w = Vec::with_capacity(pool_size);
    for _ in 0..pool_size {
        let theta = prior.sample_theta(&mut rng);
        log_w.push(type_a_log_likelihood(&theta, za, prior.type_a_noise_var)?);
        pool.push(theta);
    }
    let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_lw.is_finite() {
        return Err(Error::InferenceFailure(
            "type-A likelihood vanished on the whole prior pool; check prior supports".into(),
        ));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max_lw).exp()).collect();
    let total: f64 = weights.iter().sum();
    // systematic resampling of `count` pool members
    let mut out = Vec::with_capacity(count);
    let mut resample_rng = seed::rng_from(seed::derive(seed, "theta-resample"));
    let u: f64 = resample_rng.random();
    let step = total / count as f64;
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..count {
        let target = (i as f64 + u) * step;
        while cum < target && j + 1 < pool_size {
            j += 1;
            cum += weights[j];
        }
        out.push(pool[j].clone());
    }
    Ok(out)
}
