//! The inversion pipeline: candidate evaluation and multi-dataset
//! assimilation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fieldsim::{ConditionalSimulator, TypeAData};
use crate::forward::{ForwardModel, TypeBData};
use crate::geostat::{Grid, Location};
use crate::likelihood::{self, DensityEstimate, SampleCloud};
use crate::seed;

use super::ensemble::{posterior_weights, posterior_weights_from, PosteriorEnsemble};
use super::prior::{prior_sample, PriorSpec};

/// One type-B dataset: the forward process that produced it and the
/// observed vector.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub model: ForwardModel,
    pub data: TypeBData,
}

/// Monte Carlo sizes of the inversion.
#[derive(Clone, Copy, Debug)]
pub struct InversionSettings {
    /// Number of prior candidates N.
    pub candidates: usize,
    /// Conditional realizations n per candidate.
    pub realizations: usize,
    /// Neighbor count for the density estimate; `None` = round(sqrt(n)).
    pub k: Option<usize>,
}

/// Everything the pipeline needs besides the anchor locations.
#[derive(Clone, Debug)]
pub struct PipelineSpec<'a> {
    pub grid: &'a Grid,
    pub prior: &'a PriorSpec,
    pub za: &'a TypeAData,
    pub datasets: &'a [Dataset],
    pub settings: InversionSettings,
    /// When set, each candidate's forward-output cloud is dumped to
    /// `<dir>/candidate_<id>.csv`.
    pub dump_clouds: Option<PathBuf>,
}

fn joint_model_and_data(datasets: &[Dataset], grid: &Grid) -> Result<(ForwardModel, TypeBData)> {
    if datasets.is_empty() {
        return Err(Error::Config(
            "assimilation needs at least one dataset".into(),
        ));
    }
    for (i, ds) in datasets.iter().enumerate() {
        ds.model.check_grid(grid).map_err(|e| {
            Error::Config(format!("dataset {i} does not match the shared grid: {e}"))
        })?;
        if ds.model.output_dim() != ds.data.dim() {
            return Err(Error::Config(format!(
                "dataset {i}: model outputs {} components, data has {}",
                ds.model.output_dim(),
                ds.data.dim()
            )));
        }
    }
    if datasets.len() == 1 {
        return Ok((datasets[0].model.clone(), datasets[0].data.clone()));
    }
    let model = ForwardModel::Composite {
        parts: datasets.iter().map(|d| d.model.clone()).collect(),
    };
    let refs: Vec<&TypeBData> = datasets.iter().map(|d| &d.data).collect();
    Ok((model, TypeBData::concat(&refs)?))
}

fn dump_cloud(dir: &Path, id: usize, cloud: &SampleCloud) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::io::write_cloud_csv(cloud, &dir.join(format!("candidate_{id:04}.csv")))
}

/// Joint assimilation of one or more type-B datasets.
///
/// Multiple datasets are concatenated into a single prediction/data vector
/// and one likelihood is estimated per candidate. This is the default
/// treatment: the datasets share the underlying field, so their forward
/// outputs are dependent and a factorized (sequential) update would need
/// independence that only holds for disjoint, far-apart forward domains.
/// With a single dataset this is the plain pipeline.
pub fn assimilate_joint(
    spec: &PipelineSpec,
    anchor_locs: &[Location],
    seed: u64,
) -> Result<PosteriorEnsemble> {
    let (model, zb) = joint_model_and_data(spec.datasets, spec.grid)?;
    let mut candidates = prior_sample(
        spec.prior,
        spec.za,
        anchor_locs,
        spec.settings.candidates,
        seed::derive(seed, "prior"),
    )?;
    let results: Vec<Result<(DensityEstimate, Option<SampleCloud>)>> = candidates
        .par_iter()
        .map(|cand| {
            let cand_seed = seed::derive_indexed(seed, "likelihood", cand.id as u64);
            let (est, cloud) = likelihood::estimate_likelihood_with_cloud(
                spec.grid,
                &cand.theta,
                &cand.anchors,
                &model,
                &zb,
                spec.settings.realizations,
                spec.settings.k,
                cand_seed,
            )?;
            Ok((est, spec.dump_clouds.is_some().then_some(cloud)))
        })
        .collect();
    for (cand, res) in candidates.iter_mut().zip(results) {
        match res {
            Ok((est, cloud)) => {
                cand.likelihood = Some(est);
                if let (Some(dir), Some(cloud)) = (&spec.dump_clouds, cloud) {
                    dump_cloud(dir, cand.id, &cloud)?;
                }
            }
            Err(Error::DegenerateDensity(_)) => cand.degenerate = true,
            Err(e) => return Err(e),
        }
    }
    posterior_weights(candidates)
}

/// Comparison harness only: assimilate datasets as if they were
/// independent given `(theta, anchors)`, multiplying separately estimated
/// likelihoods. The independence assumption fails whenever the forward
/// domains overlap or sit within a few correlation scales of each other —
/// the shared field makes the outputs dependent — so this is NOT a default
/// path; it exists to quantify the error of the factorized update.
pub fn assimilate_naive_sequential(
    spec: &PipelineSpec,
    anchor_locs: &[Location],
    seed: u64,
) -> Result<PosteriorEnsemble> {
    if spec.datasets.is_empty() {
        return Err(Error::Config(
            "assimilation needs at least one dataset".into(),
        ));
    }
    for (i, ds) in spec.datasets.iter().enumerate() {
        ds.model.check_grid(spec.grid).map_err(|e| {
            Error::Config(format!("dataset {i} does not match the shared grid: {e}"))
        })?;
    }
    let mut candidates = prior_sample(
        spec.prior,
        spec.za,
        anchor_locs,
        spec.settings.candidates,
        seed::derive(seed, "prior"),
    )?;
    let results: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|cand| {
            let mut product = 1.0;
            for (j, ds) in spec.datasets.iter().enumerate() {
                let cand_seed =
                    seed::derive_indexed(seed, &format!("likelihood-{j}"), cand.id as u64);
                let est = likelihood::estimate_likelihood(
                    spec.grid,
                    &cand.theta,
                    &cand.anchors,
                    &ds.model,
                    &ds.data,
                    spec.settings.realizations,
                    spec.settings.k,
                    cand_seed,
                )?;
                product *= est.value;
            }
            Ok(product)
        })
        .collect();
    let mut values = Vec::with_capacity(candidates.len());
    for (cand, res) in candidates.iter_mut().zip(results) {
        match res {
            Ok(v) => values.push(v),
            Err(Error::DegenerateDensity(_)) => {
                cand.degenerate = true;
                values.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }
    posterior_weights_from(candidates, values)
}

/// Step of the anchor-count stabilization trace.
#[derive(Clone, Copy, Debug)]
pub struct StabilizationStep {
    pub count: usize,
    /// RMS difference between this count's posterior-predictive mean field
    /// and the next count's; `None` for the last entry.
    pub rms_to_next: Option<f64>,
    pub ess: f64,
}

/// Result of the anchor-count search.
#[derive(Clone, Debug)]
pub struct AnchorSelectionOutcome {
    pub chosen: usize,
    /// False when no adjacent pair met the tolerance and the largest count
    /// was returned as a fallback.
    pub stabilized: bool,
    pub trace: Vec<StabilizationStep>,
}

/// Increase the anchor count along `counts` until the posterior-predictive
/// mean field stops moving: the chosen count is the smallest whose mean
/// field differs from the next count's by less than `stability_tol` in
/// RMS over the grid. If no pair stabilizes, the largest count is returned
/// with `stabilized = false`.
///
/// `place` maps an anchor count to its locations (typically coverage
/// placement), so the candidate designs are nested in spirit if not in
/// cells.
pub fn select_anchor_count(
    spec: &PipelineSpec,
    place: impl Fn(usize) -> Result<Vec<Location>>,
    counts: &[usize],
    stability_tol: f64,
    seed: u64,
) -> Result<AnchorSelectionOutcome> {
    if counts.len() < 2 {
        return Err(Error::Config(
            "anchor-count selection needs at least two counts".into(),
        ));
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "counts must be strictly increasing, got {counts:?}"
        )));
    }
    if stability_tol.is_nan() || stability_tol < 0.0 {
        return Err(Error::Config("stability tolerance must be >= 0".into()));
    }

    let mut mean_fields = Vec::with_capacity(counts.len());
    let mut esses = Vec::with_capacity(counts.len());
    for &count in counts {
        let locs = place(count)?;
        if locs.len() != count {
            return Err(Error::Config(format!(
                "placement returned {} locations for count {count}",
                locs.len()
            )));
        }
        let ensemble = assimilate_joint(
            spec,
            &locs,
            seed::derive_indexed(seed, "anchor-count", count as u64),
        )?;
        mean_fields.push(posterior_predictive_mean(spec.grid, &ensemble)?);
        esses.push(ensemble.ess);
    }

    let mut trace = Vec::with_capacity(counts.len());
    let mut chosen = None;
    for i in 0..counts.len() {
        let rms = if i + 1 < counts.len() {
            let a = &mean_fields[i];
            let b = &mean_fields[i + 1];
            let rms = ((a - b).map(|v| v * v).sum() / a.len() as f64).sqrt();
            if chosen.is_none() && rms < stability_tol {
                chosen = Some(counts[i]);
            }
            Some(rms)
        } else {
            None
        };
        trace.push(StabilizationStep {
            count: counts[i],
            rms_to_next: rms,
            ess: esses[i],
        });
    }
    match chosen {
        Some(count) => Ok(AnchorSelectionOutcome {
            chosen: count,
            stabilized: true,
            trace,
        }),
        None => {
            log::warn!(
                "prediction did not stabilize below tol {stability_tol}; returning the largest count"
            );
            Ok(AnchorSelectionOutcome {
                chosen: *counts.last().unwrap(),
                stabilized: false,
                trace,
            })
        }
    }
}

/// Weighted average over candidates of the exact conditional mean field:
/// the mean of the posterior-predictive distribution, without sampling.
fn posterior_predictive_mean(
    grid: &Grid,
    ensemble: &PosteriorEnsemble,
) -> Result<nalgebra::DVector<f64>> {
    let mut mean = nalgebra::DVector::zeros(grid.cell_count());
    for cand in &ensemble.candidates {
        if cand.weight == 0.0 {
            continue;
        }
        let sim = ConditionalSimulator::new(grid, &cand.theta, &cand.anchors.conditioning())?;
        mean += cand.weight * sim.conditional_mean();
    }
    Ok(mean)
}
