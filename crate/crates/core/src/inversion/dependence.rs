//! Dependence diagnostics between the outputs of two forward processes.
//!
//! Two type-B datasets observed through different forward processes are
//! still dependent — the same field underlies both — no matter how
//! different the physics. The diagnostic simulates fields conditional on
//! the anchors, pushes each through both models, and reports the maximum
//! canonical correlation between the two output blocks. A permutation
//! null band tells whether the score is distinguishable from sampling
//! noise.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fieldsim::{AnchorSet, ConditionalSimulator};
use crate::forward::{self, ForwardModel};
use crate::geostat::{Grid, StructuralParams};
use crate::seed;

/// Paired forward outputs of two models over `n` shared conditional fields.
pub fn forward_output_blocks(
    grid: &Grid,
    theta: &StructuralParams,
    anchors: &AnchorSet,
    model1: &ForwardModel,
    model2: &ForwardModel,
    n: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 10 {
        return Err(Error::Config(format!(
            "dependence diagnostic needs n >= 10 fields, got {n}"
        )));
    }
    model1.check_grid(grid)?;
    model2.check_grid(grid)?;
    let sim = ConditionalSimulator::new(grid, theta, &anchors.conditioning())?;
    let (d1, d2) = (model1.output_dim(), model2.output_dim());
    let mut z1 = DMatrix::zeros(n, d1);
    let mut z2 = DMatrix::zeros(n, d2);
    for i in 0..n {
        let field = sim.simulate(seed::derive_indexed(seed, "realization", i as u64));
        for (j, v) in forward::evaluate(model1, &field)?.into_iter().enumerate() {
            z1[(i, j)] = v;
        }
        for (j, v) in forward::evaluate(model2, &field)?.into_iter().enumerate() {
            z2[(i, j)] = v;
        }
    }
    Ok((z1, z2))
}

/// Maximum canonical correlation between two row-paired sample blocks,
/// in [0, 1].
pub fn max_canonical_correlation(z1: &DMatrix<f64>, z2: &DMatrix<f64>) -> Result<f64> {
    let n = z1.nrows();
    if z2.nrows() != n {
        return Err(Error::Dimension(
            "blocks must have the same number of rows".into(),
        ));
    }
    if n < 3 {
        return Err(Error::Config(
            "canonical correlation needs at least 3 rows".into(),
        ));
    }
    let c1 = centered(z1);
    let c2 = centered(z2);
    let denom = (n - 1) as f64;
    let s11 = ridge(&(&c1.transpose() * &c1 / denom));
    let s22 = ridge(&(&c2.transpose() * &c2 / denom));
    let s12 = &c1.transpose() * &c2 / denom;
    let l1 = nalgebra::Cholesky::new(s11)
        .ok_or_else(|| Error::Numerical("block 1 covariance is not positive definite".into()))?;
    let l2 = nalgebra::Cholesky::new(s22)
        .ok_or_else(|| Error::Numerical("block 2 covariance is not positive definite".into()))?;
    // whitened cross-covariance: L1^{-1} S12 L2^{-T}
    let m = l1.solve(&s12);
    let m = l2.solve(&m.transpose()).transpose();
    let sigma_max = m.svd(false, false).singular_values.max();
    Ok(sigma_max.clamp(0.0, 1.0))
}

fn centered(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    let mut c = z.clone();
    for j in 0..z.ncols() {
        let mean = z.column(j).sum() / n;
        for i in 0..z.nrows() {
            c[(i, j)] -= mean;
        }
    }
    c
}

/// Small relative ridge so constant output components do not make the
/// block covariance singular.
fn ridge(s: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = s.diagonal().max().max(f64::MIN_POSITIVE);
    let mut out = s.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += 1e-10 * scale;
    }
    out
}

/// Dependence score between two forward processes sharing the field:
/// maximum canonical correlation of their outputs over `n` conditional
/// simulations.
pub fn dependence_diagnostic(
    grid: &Grid,
    theta: &StructuralParams,
    anchors: &AnchorSet,
    model1: &ForwardModel,
    model2: &ForwardModel,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let (z1, z2) = forward_output_blocks(grid, theta, anchors, model1, model2, n, seed)?;
    max_canonical_correlation(&z1, &z2)
}

/// Upper quantile of the permutation null for the dependence score:
/// rows of the second block are shuffled to break the pairing while
/// keeping both marginals.
pub fn permutation_null_quantile(
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    quantile: f64,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Config(format!(
            "quantile must be in [0, 1], got {quantile}"
        )));
    }
    if permutations == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let n = z2.nrows();
    let mut rng = seed::rng_from(seed::derive(seed, "permutation-null"));
    let mut scores = Vec::with_capacity(permutations);
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut shuffled = DMatrix::zeros(n, z2.ncols());
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..z2.ncols() {
                shuffled[(i, j)] = z2[(p, j)];
            }
        }
        scores.push(max_canonical_correlation(z1, &shuffled)?);
    }
    scores.sort_by(f64::total_cmp);
    let idx = ((permutations as f64 - 1.0) * quantile).round() as usize;
    Ok(scores[idx])
}

/// Dependence score together with its permutation null band.
#[derive(Clone, Copy, Debug)]
pub struct DependenceDiagnostic {
    pub score: f64,
    pub null_quantile: f64,
    pub exceeds_null: bool,
}

/// Convenience wrapper computing the score and a 95% permutation band in
/// one pass over the simulations.
#[allow(clippy::too_many_arguments)]
pub fn dependence_diagnostic_with_null(
    grid: &Grid,
    theta: &StructuralParams,
    anchors: &AnchorSet,
    model1: &ForwardModel,
    model2: &ForwardModel,
    n: usize,
    permutations: usize,
    seed: u64,
) -> Result<DependenceDiagnostic> {
    let (z1, z2) = forward_output_blocks(grid, theta, anchors, model1, model2, n, seed)?;
    let score = max_canonical_correlation(&z1, &z2)?;
    let null_quantile = permutation_null_quantile(&z1, &z2, 0.95, permutations, seed)?;
    Ok(DependenceDiagnostic {
        score,
        null_quantile,
        exceeds_null: score > null_quantile,
    })
}
