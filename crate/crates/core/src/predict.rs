//! Posterior-predictive field ensembles.
//!
//! The payoff of anchor-based inference: fields simulated conditional on
//! the weighted anchors are already conditioned on the type-B data, so no
//! forward-model run or accept/reject step is needed here — this module
//! never evaluates a forward model.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fieldsim::{ConditionalSimulator, Field};
use crate::geostat::{Grid, Location};
use crate::inversion::PosteriorEnsemble;
use crate::seed;

/// Fields drawn from the posterior predictive, with the candidate each
/// field came from.
#[derive(Clone, Debug)]
pub struct PredictiveEnsemble {
    pub fields: Vec<Field>,
    /// Candidate id behind each field.
    pub source: Vec<usize>,
}

impl PredictiveEnsemble {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.fields[0].grid
    }
}

/// Generate `m` posterior-predictive fields: resample candidates by weight
/// (systematic resampling, lower variance than multinomial), then simulate
/// one conditional field per draw.
///
/// Fields are a pure function of `(posterior weights, grid, m, seed)`;
/// candidate order does not matter because candidates are processed in id
/// order.
pub fn predictive_ensemble(
    posterior: &PosteriorEnsemble,
    grid: &Grid,
    m: usize,
    seed: u64,
) -> Result<PredictiveEnsemble> {
    if m == 0 {
        return Err(Error::Config(
            "predictive ensemble needs m >= 1 fields".into(),
        ));
    }
    if posterior.is_empty() {
        return Err(Error::Config("posterior ensemble is empty".into()));
    }
    // canonical candidate order for order-independence
    let mut order: Vec<usize> = (0..posterior.len()).collect();
    order.sort_by_key(|&i| posterior.candidates[i].id);

    // systematic resampling: draws (j + u)/m against the cumulative weights
    let mut rng = seed::rng_from(seed::derive(seed, "resample"));
    let u: f64 = rng.random();
    let total: f64 = posterior.candidates.iter().map(|c| c.weight).sum();
    let step = total / m as f64;

    let mut fields = Vec::with_capacity(m);
    let mut source = Vec::with_capacity(m);
    let mut cum = 0.0;
    let mut pos = 0usize; // index into `order`
    let mut sim: Option<ConditionalSimulator> = None;
    let mut current = usize::MAX;
    for j in 0..m {
        let target = (j as f64 + u) * step;
        while cum + posterior.candidates[order[pos]].weight < target && pos + 1 < order.len() {
            cum += posterior.candidates[order[pos]].weight;
            pos += 1;
        }
        let cand = &posterior.candidates[order[pos]];
        if current != order[pos] {
            sim = Some(ConditionalSimulator::new(
                grid,
                &cand.theta,
                &cand.anchors.conditioning(),
            )?);
            current = order[pos];
        }
        let field = sim
            .as_ref()
            .expect("simulator built above")
            .simulate(seed::derive_indexed(seed, "field", j as u64));
        fields.push(field);
        source.push(cand.id);
    }
    Ok(PredictiveEnsemble { fields, source })
}

/// Empirical summary of the predictive distribution at one target.
#[derive(Clone, Copy, Debug)]
pub struct TargetSummary {
    pub target: Location,
    pub cell: usize,
    pub mean: f64,
    pub variance: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Nearest-rank quantile of a sorted slice: index `round(p * (m - 1))`.
/// Kept interpolation-free so an offline recomputation from the raw field
/// dump reproduces it exactly.
fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn summarize(values: &mut [f64]) -> (f64, f64, f64, f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    values.sort_by(f64::total_cmp);
    (
        mean,
        variance,
        nearest_rank(values, 0.05),
        nearest_rank(values, 0.5),
        nearest_rank(values, 0.95),
    )
}

/// Per-target mean, variance, and {5, 50, 95}% quantiles at the nearest
/// grid cells (no interpolation).
pub fn predictive_summary(
    ensemble: &PredictiveEnsemble,
    targets: &[Location],
) -> Result<Vec<TargetSummary>> {
    if ensemble.is_empty() {
        return Err(Error::Config("predictive ensemble is empty".into()));
    }
    let grid = ensemble.grid();
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        if !grid.contains(t) {
            return Err(Error::Config(format!(
                "target ({}, {}) lies outside the grid",
                t.x, t.y
            )));
        }
        let (cell, _) = grid.nearest_cell(t);
        let mut values: Vec<f64> = ensemble.fields.iter().map(|f| f.values[cell]).collect();
        let (mean, variance, q05, q50, q95) = summarize(&mut values);
        out.push(TargetSummary {
            target: *t,
            cell,
            mean,
            variance,
            q05,
            q50,
            q95,
        });
    }
    Ok(out)
}

/// Cellwise summary layers over the whole grid.
#[derive(Clone, Debug)]
pub struct GridSummary {
    pub mean: Field,
    pub sd: Field,
    pub q05: Field,
    pub q50: Field,
    pub q95: Field,
}

/// Summarize the ensemble cell by cell (single pass after the generation
/// barrier; serial on purpose so the output is independent of thread count).
pub fn grid_summary(ensemble: &PredictiveEnsemble) -> Result<GridSummary> {
    if ensemble.is_empty() {
        return Err(Error::Config("predictive ensemble is empty".into()));
    }
    let grid = ensemble.grid().clone();
    let n = grid.cell_count();
    let mut mean = DVector::zeros(n);
    let mut sd = DVector::zeros(n);
    let mut q05 = DVector::zeros(n);
    let mut q50 = DVector::zeros(n);
    let mut q95 = DVector::zeros(n);
    let mut scratch = vec![0.0; ensemble.len()];
    for cell in 0..n {
        for (j, f) in ensemble.fields.iter().enumerate() {
            scratch[j] = f.values[cell];
        }
        let (m, v, a, b, c) = summarize(&mut scratch);
        mean[cell] = m;
        sd[cell] = v.sqrt();
        q05[cell] = a;
        q50[cell] = b;
        q95[cell] = c;
    }
    Ok(GridSummary {
        mean: Field::new(grid.clone(), mean)?,
        sd: Field::new(grid.clone(), sd)?,
        q05: Field::new(grid.clone(), q05)?,
        q50: Field::new(grid.clone(), q50)?,
        q95: Field::new(grid, q95)?,
    })
}
