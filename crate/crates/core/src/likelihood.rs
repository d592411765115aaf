//! Nonparametric likelihood estimation.
//!
//! The likelihood of a candidate `(theta, anchors)` against the observed
//! type-B vector has no tractable form: the forward-output distribution
//! changes shape with the forward process and with the candidate itself.
//! It is therefore estimated numerically — simulate fields conditional on
//! the candidate, push each through the forward model, and evaluate a
//! k-th-nearest-neighbor density estimate of the resulting sample at the
//! single point that matters, the observed data vector:
//!
//! `f_hat(z) = (k - 1) / n * 1 / (v_d r^d)`
//!
//! with `r` the distance from `z` to its k-th nearest sample point and
//! `v_d` the unit-ball volume. Distances are Euclidean on per-dimension
//! standardized coordinates (the components of a type-B vector can mix
//! heads, rates, and summaries with incomparable units); the Jacobian of
//! the standardization is applied so the returned density lives in the
//! original data space.

use crate::error::{Error, Result};
use crate::fieldsim::{AnchorSet, ConditionalSimulator};
use crate::forward::{self, ForwardModel, TypeBData};
use crate::geostat::{Grid, StructuralParams};
use crate::seed;

/// Warn beyond this output dimension: neighbor distances concentrate and
/// the estimate degrades; configure linear summaries instead.
pub const HIGH_DIM_WARN: usize = 10;

/// Sample of forward outputs with its standardization record.
#[derive(Clone, Debug)]
pub struct SampleCloud {
    /// Standardized points, row-major `n x dim`.
    std_points: Vec<f64>,
    n: usize,
    dim: usize,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl SampleCloud {
    /// Build a cloud from raw sample rows, standardizing each dimension to
    /// zero mean and unit sample standard deviation. A dimension with zero
    /// spread keeps scale 1 so the record stays invertible.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Dimension(format!(
                "sample cloud needs n >= 2 rows, got {n}"
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Dimension(
                "sample cloud rows must be non-empty".into(),
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} contains non-finite values")));
            }
        }
        let mut shift = vec![0.0; dim];
        let mut scale = vec![0.0; dim];
        for j in 0..dim {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            shift[j] = mean;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let mut std_points = Vec::with_capacity(n * dim);
        for row in rows {
            for j in 0..dim {
                std_points.push((row[j] - shift[j]) / scale[j]);
            }
        }
        Ok(SampleCloud {
            std_points,
            n,
            dim,
            shift,
            scale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Raw (original-space) sample row.
    pub fn row(&self, i: usize) -> Vec<f64> {
        let s = &self.std_points[i * self.dim..(i + 1) * self.dim];
        s.iter()
            .enumerate()
            .map(|(j, v)| v * self.scale[j] + self.shift[j])
            .collect()
    }

    fn squared_distance_std(&self, i: usize, std_point: &[f64]) -> f64 {
        let row = &self.std_points[i * self.dim..(i + 1) * self.dim];
        row.iter()
            .zip(std_point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// k-nearest-neighbor density estimate at one point.
///
/// `value` is the original-space density. `r` is the k-th-neighbor radius
/// expressed on the original-space volume scale (standardized radius times
/// the geometric mean of the per-dimension scales), so
/// `value = (k-1)/n * 1/(v_d r^d)` holds exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityEstimate {
    pub value: f64,
    pub k: usize,
    pub r: f64,
    pub n: usize,
    pub dim: usize,
}

/// Volume of the unit ball in `d` dimensions, `pi^{d/2} / Γ(1 + d/2)`,
/// computed by the exact two-step recursion `v_d = 2 pi / d * v_{d-2}`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("unit_ball_volume requires d >= 1".into()));
    }
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut i = if d % 2 == 0 { 2 } else { 3 };
    while i <= d {
        v *= 2.0 * std::f64::consts::PI / i as f64;
        i += 2;
    }
    Ok(v)
}

/// The empirical default `k = round(sqrt(n))`, clamped to `[2, n]`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).clamp(2, n)
}

/// k-NN density estimate of the cloud at `point`.
pub fn knn_density(cloud: &SampleCloud, point: &[f64], k: usize) -> Result<DensityEstimate> {
    let (n, d) = (cloud.n(), cloud.dim());
    if point.len() != d {
        return Err(Error::Dimension(format!(
            "query point has {} components, cloud has {d}",
            point.len()
        )));
    }
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("query point must be finite".into()));
    }
    if k < 2 || k > n {
        return Err(Error::Domain(format!(
            "k must satisfy 2 <= k <= n = {n}, got {k}"
        )));
    }
    let std_point: Vec<f64> = point
        .iter()
        .enumerate()
        .map(|(j, v)| (v - cloud.shift[j]) / cloud.scale[j])
        .collect();
    let mut dists: Vec<f64> = (0..n)
        .map(|i| cloud.squared_distance_std(i, &std_point))
        .collect();
    let (_, kth, _) = dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    let r_std = kth.sqrt();
    if r_std == 0.0 {
        return Err(Error::DegenerateDensity(format!(
            "the {k}-th nearest sample coincides with the query point; \
             add observation error to the forward outputs or reduce k"
        )));
    }
    let v_d = unit_ball_volume(d)?;
    let jacobian: f64 = cloud.scale.iter().product();
    let density_std = (k as f64 - 1.0) / (n as f64 * v_d * r_std.powi(d as i32));
    Ok(DensityEstimate {
        value: density_std / jacobian,
        k,
        r: r_std * jacobian.powf(1.0 / d as f64),
        n,
        dim: d,
    })
}

/// Estimate the likelihood of `(theta, anchors)` against the observed
/// type-B data: simulate `n` fields on the grid conditional on the
/// anchors, evaluate the forward model on each (adding observation error
/// when the data carry noise), and take the k-NN density of the outputs
/// at the data.
///
/// `k = None` uses the `sqrt(n)` default. Deterministic given `seed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_likelihood(
    grid: &Grid,
    theta: &StructuralParams,
    anchors: &AnchorSet,
    model: &ForwardModel,
    zb: &TypeBData,
    n: usize,
    k: Option<usize>,
    seed: u64,
) -> Result<DensityEstimate> {
    let (estimate, _) =
        estimate_likelihood_with_cloud(grid, theta, anchors, model, zb, n, k, seed)?;
    Ok(estimate)
}

/// As [`estimate_likelihood`], returning the sample cloud for diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn estimate_likelihood_with_cloud(
    grid: &Grid,
    theta: &StructuralParams,
    anchors: &AnchorSet,
    model: &ForwardModel,
    zb: &TypeBData,
    n: usize,
    k: Option<usize>,
    seed: u64,
) -> Result<(DensityEstimate, SampleCloud)> {
    let k = k.unwrap_or_else(|| default_k(n));
    if n < (k + 1).max(50) {
        return Err(Error::Config(format!(
            "need n >= max(k+1, 50) realizations, got n = {n} with k = {k}"
        )));
    }
    let d_b = model.output_dim();
    if d_b != zb.dim() {
        return Err(Error::Dimension(format!(
            "forward model outputs {d_b} components, observed data has {}",
            zb.dim()
        )));
    }
    if d_b > HIGH_DIM_WARN {
        log::warn!(
            "type-B dimension {d_b} is high for neighbor-distance density estimation; \
             consider configuring linear summaries of the forward output"
        );
    }
    let sim = ConditionalSimulator::new(grid, theta, &anchors.conditioning())?;
    let mut rows = Vec::with_capacity(n);
    let noisy = zb.has_noise();
    for i in 0..n {
        let field = sim.simulate(seed::derive_indexed(seed, "realization", i as u64));
        let mut z = forward::evaluate(model, &field)?;
        if noisy {
            z = forward::add_observation_error(
                &z,
                &zb.noise_sd,
                seed::derive_indexed(seed, "obs-noise", i as u64),
            )?;
        }
        rows.push(z);
    }
    let cloud = SampleCloud::from_rows(&rows)?;
    let estimate = knn_density(&cloud, &zb.values, k)?;
    Ok((estimate, cloud))
}
