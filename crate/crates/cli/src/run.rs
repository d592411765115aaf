//! Experiment execution: synthetic data generation, the inversion
//! pipeline, prediction, and anchor-count selection.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anchorinv::error::{Error, Result};
use anchorinv::fieldsim::{
    simulate_unconditional, AnchorSet, ConditionalSimulator, Conditioning, Field, PointData,
};
use anchorinv::forward::{add_observation_error, evaluate, TypeBData};
use anchorinv::geostat::{Grid, Location};
use anchorinv::inversion::{
    assimilate_joint, dependence_diagnostic_with_null, place_anchors, posterior_weights_from,
    select_anchor_count, AnchorStrategy, Candidate, Dataset, InversionSettings, PipelineSpec,
    PosteriorEnsemble,
};
use anchorinv::io as core_io;
use anchorinv::likelihood::DensityEstimate;
use anchorinv::predict::{grid_summary, predictive_ensemble, predictive_summary};
use anchorinv::seed::{derive, derive_indexed};

use crate::config::{AnchorStrategyKind, ExperimentConfig};
use crate::manifest::{
    sha256_hex, AnchorSelectionEntry, DependenceEntry, RunManifest, MANIFEST_NAME,
};

pub struct RunContext {
    pub config: ExperimentConfig,
    pub config_text: String,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

/// Prefix errors with the pipeline stage that produced them, preserving
/// the error class (and therefore the exit code).
fn in_stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| {
        let msg = format!("[stage {name}] {e}");
        match e {
            Error::Config(_) => Error::Config(msg),
            Error::InferenceFailure(_) => Error::InferenceFailure(msg),
            Error::Domain(_) => Error::Domain(msg),
            Error::Dimension(_) => Error::Dimension(msg),
            Error::Conditioning(_) => Error::Conditioning(msg),
            Error::DegenerateDensity(_) => Error::DegenerateDensity(msg),
            _ => Error::Numerical(msg),
        }
    })
}

struct SyntheticData {
    truth: Field,
    za: PointData,
    datasets: Vec<Dataset>,
}

fn generate_synthetic(cfg: &ExperimentConfig, grid: &Grid, seed: u64) -> Result<SyntheticData> {
    let theta = cfg.truth_params();
    let truth = simulate_unconditional(grid, &theta, derive(seed, "truth"))?;

    let za_locs = cfg.type_a_locations();
    let mut za_values: Vec<f64> = za_locs.iter().map(|l| truth.value_near(l)).collect();
    if cfg.type_a.noise_sd > 0.0 && !za_values.is_empty() {
        za_values = add_observation_error(
            &za_values,
            &vec![cfg.type_a.noise_sd; za_values.len()],
            derive(seed, "type-a-noise"),
        )?;
    }
    let za = cfg.type_a_data(za_values)?;

    let mut datasets = Vec::with_capacity(cfg.forwards.len());
    for (j, fwd) in cfg.forwards.iter().enumerate() {
        let model = fwd.to_model(grid)?;
        let clean = evaluate(&model, &truth)?;
        let observed = add_observation_error(
            &clean,
            &vec![fwd.noise_sd(); clean.len()],
            derive_indexed(seed, "zb-noise", j as u64),
        )?;
        datasets.push(Dataset {
            model,
            data: TypeBData::with_uniform_noise(observed, fwd.noise_sd())?,
        });
    }
    Ok(SyntheticData {
        truth,
        za,
        datasets,
    })
}

fn write_synthetic(out: &Path, data: &SyntheticData) -> Result<()> {
    core_io::write_field_raw(&data.truth, &out.join("truth.bin"))?;
    core_io::write_field_csv(&data.truth, &out.join("truth.csv"))?;
    let mut w = csv::Writer::from_path(out.join("za.csv"))?;
    w.write_record(["x", "y", "value", "noise_var"])?;
    for (loc, v) in data.za.locations.iter().zip(&data.za.values) {
        w.write_record([
            loc.x.to_string(),
            loc.y.to_string(),
            v.to_string(),
            data.za.noise_var.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("zb.csv"))?;
    w.write_record(["dataset", "component", "value", "noise_sd"])?;
    for (j, ds) in data.datasets.iter().enumerate() {
        for (c, (v, s)) in ds.data.values.iter().zip(&ds.data.noise_sd).enumerate() {
            w.write_record([j.to_string(), c.to_string(), v.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn prepare_out(ctx: &RunContext) -> Result<()> {
    std::fs::create_dir_all(&ctx.out)?;
    std::fs::write(ctx.out.join("config.toml"), &ctx.config_text)?;
    Ok(())
}

fn place_configured_anchors(
    cfg: &ExperimentConfig,
    grid: &Grid,
    za: &PointData,
    datasets: &[Dataset],
    count: usize,
) -> Result<Vec<Location>> {
    match cfg.anchors.strategy {
        AnchorStrategyKind::Coverage => {
            place_anchors(grid, count, &AnchorStrategy::Coverage, &za.locations)
        }
        AnchorStrategyKind::Targeted => {
            let targets: Vec<Location> = cfg
                .anchors
                .targets
                .iter()
                .map(|t| Location::new(t[0], t[1]))
                .collect();
            place_anchors(
                grid,
                count,
                &AnchorStrategy::Targeted { targets: &targets },
                &za.locations,
            )
        }
        AnchorStrategyKind::Sensitivity => {
            let map = sensitivity_map(cfg, grid, za, datasets)?;
            let min_separation = cfg.anchors.min_separation.expect("validated");
            place_anchors(
                grid,
                count,
                &AnchorStrategy::Sensitivity {
                    map: &map,
                    min_separation,
                },
                &za.locations,
            )
        }
    }
}

/// Cellwise sensitivity of the combined forward output to the field:
/// perturb the conditional-mean reference field one cell at a time and
/// accumulate the absolute output change across all datasets.
fn sensitivity_map(
    cfg: &ExperimentConfig,
    grid: &Grid,
    za: &PointData,
    datasets: &[Dataset],
) -> Result<Field> {
    let theta_ref = cfg.prior.reference_theta();
    let mut cond = Conditioning::empty();
    cond.push_point_data(za);
    let sim = ConditionalSimulator::new(grid, &theta_ref, &cond)?;
    let reference = Field::new(grid.clone(), sim.conditional_mean())?;
    let base: Vec<Vec<f64>> = datasets
        .iter()
        .map(|ds| evaluate(&ds.model, &reference))
        .collect::<Result<_>>()?;
    let eps = 0.05 * cfg.prior.reference_theta().sigma2.sqrt().max(1e-3);
    let mut map = Field::constant(grid.clone(), 0.0)?;
    let mut perturbed = reference.clone();
    for cell in 0..grid.cell_count() {
        perturbed.values[cell] += eps;
        let mut total = 0.0;
        for (ds, b) in datasets.iter().zip(&base) {
            let z = evaluate(&ds.model, &perturbed)?;
            total += z.iter().zip(b).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        map.values[cell] = total / eps;
        perturbed.values[cell] = reference.values[cell];
    }
    Ok(map)
}

pub fn print_plan(ctx: &RunContext, command: &str) -> Result<()> {
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    println!("dry run: {command}");
    println!(
        "  config hash    sha256:{}",
        sha256_hex(ctx.config_text.as_bytes())
    );
    println!("  master seed    {}", ctx.seed);
    println!("  threads        {}", ctx.threads);
    println!(
        "  grid           {}x{} cells, spacing {}x{} m",
        cfg.grid.nx, cfg.grid.ny, cfg.grid.dx, cfg.grid.dy
    );
    println!("  type-A points  {}", cfg.type_a.locations.len());
    println!("  datasets       {}", cfg.forwards.len());
    let d_b: usize = cfg.models(&grid)?.iter().map(|m| m.output_dim()).sum();
    println!("  joint d_B      {d_b}");
    println!(
        "  anchors        {} ({:?})",
        cfg.anchors.count, cfg.anchors.strategy
    );
    println!(
        "  inversion      N={} candidates x n={} realizations, k={}",
        cfg.inversion.candidates,
        cfg.inversion.realizations,
        cfg.inversion
            .k
            .unwrap_or_else(|| anchorinv::likelihood::default_k(cfg.inversion.realizations))
    );
    if command == "invert" {
        println!("  prediction     m={} fields", cfg.predict.fields);
    }
    if command == "select-anchors" {
        match &cfg.select_anchors {
            Some(sel) => println!(
                "  anchor counts  {:?}, stability tol {}",
                sel.counts, sel.stability_tol
            ),
            None => {
                return Err(Error::Config(
                    "select-anchors needs a [select_anchors] config section".into(),
                ));
            }
        }
    }
    println!("  output dir     {}", ctx.out.display());
    println!("stages: synthetic-data -> anchor-placement -> inversion -> prediction -> export");
    Ok(())
}

/// `simulate`: generate and write the synthetic truth and both data types.
pub fn cmd_simulate(ctx: &RunContext) -> Result<()> {
    let grid = ctx.config.grid()?;
    prepare_out(ctx)?;
    let data = in_stage("synthetic-data", || {
        generate_synthetic(&ctx.config, &grid, ctx.seed)
    })?;
    in_stage("export", || write_synthetic(&ctx.out, &data))?;
    println!(
        "wrote truth.bin, truth.csv, za.csv ({} points), zb.csv ({} datasets) to {}",
        data.za.len(),
        data.datasets.len(),
        ctx.out.display()
    );
    Ok(())
}

/// `invert`: the full synthetic pipeline — truth, data, inversion,
/// prediction, summaries, manifest.
pub fn cmd_invert(ctx: &RunContext, dump_clouds: bool) -> Result<()> {
    let total = Instant::now();
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    prepare_out(ctx)?;
    let mut timings: BTreeMap<String, u128> = BTreeMap::new();

    let t = Instant::now();
    let data = in_stage("synthetic-data", || {
        generate_synthetic(cfg, &grid, ctx.seed)
    })?;
    write_synthetic(&ctx.out, &data)?;
    timings.insert("synthetic-data".into(), t.elapsed().as_millis());

    let t = Instant::now();
    let anchor_locs = in_stage("anchor-placement", || {
        place_configured_anchors(cfg, &grid, &data.za, &data.datasets, cfg.anchors.count)
    })?;
    timings.insert("anchor-placement".into(), t.elapsed().as_millis());

    let t = Instant::now();
    let settings = InversionSettings {
        candidates: cfg.inversion.candidates,
        realizations: cfg.inversion.realizations,
        k: cfg.inversion.k,
    };
    let spec = PipelineSpec {
        grid: &grid,
        prior: &cfg.prior,
        za: &data.za,
        datasets: &data.datasets,
        settings,
        dump_clouds: dump_clouds.then(|| ctx.out.join("clouds")),
    };
    let inversion_seed = derive(ctx.seed, "inversion");
    let posterior = in_stage("inversion", || {
        assimilate_joint(&spec, &anchor_locs, inversion_seed)
    })?;
    timings.insert("inversion".into(), t.elapsed().as_millis());

    let mut dependence = Vec::new();
    if data.datasets.len() > 1 {
        let t = Instant::now();
        dependence = in_stage("dependence-diagnostic", || {
            dependence_entries(&grid, &posterior, &data.datasets, cfg, ctx.seed)
        })?;
        timings.insert("dependence-diagnostic".into(), t.elapsed().as_millis());
    }

    let t = Instant::now();
    let prediction_seed = derive(ctx.seed, "prediction");
    let ensemble = in_stage("prediction", || {
        predictive_ensemble(&posterior, &grid, cfg.predict.fields, prediction_seed)
    })?;
    timings.insert("prediction".into(), t.elapsed().as_millis());

    let t = Instant::now();
    in_stage("export", || {
        core_io::write_candidates_csv(&posterior, &ctx.out.join("candidates.csv"))?;
        let fields_dir = ctx.out.join("fields");
        std::fs::create_dir_all(&fields_dir)?;
        let mut index = csv::Writer::from_path(fields_dir.join("index.csv"))?;
        index.write_record(["field", "source_candidate"])?;
        for (j, (field, src)) in ensemble.fields.iter().zip(&ensemble.source).enumerate() {
            core_io::write_field_raw(field, &fields_dir.join(format!("field_{j:04}.bin")))?;
            index.write_record([j.to_string(), src.to_string()])?;
        }
        index.flush()?;
        let summary = grid_summary(&ensemble)?;
        core_io::write_grid_summary(&summary, &ctx.out.join("summary"))?;
        if !cfg.predict.targets.is_empty() {
            let targets: Vec<Location> = cfg
                .predict
                .targets
                .iter()
                .map(|t| Location::new(t[0], t[1]))
                .collect();
            let summaries = predictive_summary(&ensemble, &targets)?;
            core_io::write_target_summaries_csv(&summaries, &ctx.out.join("summary/targets.csv"))?;
        }
        Ok(())
    })?;
    timings.insert("export".into(), t.elapsed().as_millis());
    timings.insert("total".into(), total.elapsed().as_millis());

    let mut stage_seeds = BTreeMap::new();
    stage_seeds.insert("truth".into(), derive(ctx.seed, "truth"));
    stage_seeds.insert("inversion".into(), inversion_seed);
    stage_seeds.insert("prediction".into(), prediction_seed);

    let mut outputs = BTreeMap::new();
    outputs.insert("candidates".into(), "candidates.csv".into());
    outputs.insert("fields".into(), "fields/".into());
    outputs.insert("summary".into(), "summary/".into());
    outputs.insert("truth".into(), "truth.bin".into());

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: "invert".into(),
        config_hash: sha256_hex(ctx.config_text.as_bytes()),
        master_seed: ctx.seed,
        threads: ctx.threads,
        stage_seeds,
        anchor_locations: anchor_locs.iter().map(|l| [l.x, l.y]).collect(),
        candidates: cfg.inversion.candidates,
        realizations: cfg.inversion.realizations,
        k: cfg
            .inversion
            .k
            .unwrap_or_else(|| anchorinv::likelihood::default_k(cfg.inversion.realizations)),
        ess: posterior.ess,
        degenerate_count: posterior.degenerate_count,
        kappa_marginal: posterior.kappa_marginal(),
        dependence,
        anchor_selection: None,
        timings_ms: timings,
        outputs,
    };
    manifest.write(&ctx.out)?;

    println!(
        "inversion complete: N={} candidates, ESS {:.1}, {} degenerate; wrote {}",
        posterior.len(),
        posterior.ess,
        posterior.degenerate_count,
        ctx.out.join(MANIFEST_NAME).display()
    );
    Ok(())
}

fn dependence_entries(
    grid: &Grid,
    posterior: &PosteriorEnsemble,
    datasets: &[Dataset],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<DependenceEntry>> {
    use anchorinv::inversion::{point_estimate, PointEstimateMode};
    let best = point_estimate(posterior, PointEstimateMode::MaximumAPosteriori)?;
    let n = cfg.inversion.realizations.clamp(50, 500);
    let mut out = Vec::new();
    for a in 0..datasets.len() {
        for b in (a + 1)..datasets.len() {
            let diag = dependence_diagnostic_with_null(
                grid,
                &best.theta,
                &best.anchors,
                &datasets[a].model,
                &datasets[b].model,
                n,
                199,
                derive_indexed(seed, "dependence", (a * datasets.len() + b) as u64),
            )?;
            out.push(DependenceEntry {
                dataset_a: a,
                dataset_b: b,
                score: diag.score,
                null_quantile_95: diag.null_quantile,
                exceeds_null: diag.exceeds_null,
            });
        }
    }
    Ok(out)
}

/// `predict`: rebuild the posterior from a completed run directory and
/// generate a fresh predictive ensemble.
pub fn cmd_predict(run_dir: &Path, fields: Option<usize>, seed: Option<u64>) -> Result<()> {
    let manifest = RunManifest::read(run_dir)?;
    let (cfg, _) = ExperimentConfig::load(&run_dir.join("config.toml"))?;
    let grid = cfg.grid()?;
    let za = read_za(run_dir, &cfg)?;
    let records = core_io::read_candidates_csv(&run_dir.join("candidates.csv"))?;
    let anchor_locs: Vec<Location> = manifest
        .anchor_locations
        .iter()
        .map(|l| Location::new(l[0], l[1]))
        .collect();

    let mut candidates = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len());
    for r in records {
        let theta = anchorinv::geostat::StructuralParams {
            beta: r.beta.clone(),
            sigma2: r.sigma2,
            phi: r.phi,
            nugget: r.nugget,
            kappa: r.kappa,
            lambda: r.lambda,
            trend: cfg.prior.trend,
        };
        let type_a = PointData {
            locations: za.locations.clone(),
            values: za.values.clone(),
            noise_var: cfg.prior.type_a_noise_var,
        };
        let type_b = PointData::new(anchor_locs.clone(), r.anchors.clone(), 0.0)?;
        values.push(r.likelihood.unwrap_or(0.0));
        candidates.push(Candidate {
            id: r.id,
            theta,
            anchors: AnchorSet::new(type_a, type_b)?,
            log_prior: r.log_prior,
            likelihood: r.likelihood.map(|value| DensityEstimate {
                value,
                k: manifest.k,
                r: f64::NAN,
                n: manifest.realizations,
                dim: 0,
            }),
            degenerate: r.degenerate,
            weight: r.weight,
        });
    }
    let posterior = posterior_weights_from(candidates, values)?;

    let m = fields.unwrap_or(cfg.predict.fields);
    let prediction_seed = derive(seed.unwrap_or(manifest.master_seed), "prediction");
    let ensemble = in_stage("prediction", || {
        predictive_ensemble(&posterior, &grid, m, prediction_seed)
    })?;

    let fields_dir = run_dir.join("fields");
    std::fs::create_dir_all(&fields_dir)?;
    let mut index = csv::Writer::from_path(fields_dir.join("index.csv"))?;
    index.write_record(["field", "source_candidate"])?;
    for (j, (field, src)) in ensemble.fields.iter().zip(&ensemble.source).enumerate() {
        core_io::write_field_raw(field, &fields_dir.join(format!("field_{j:04}.bin")))?;
        index.write_record([j.to_string(), src.to_string()])?;
    }
    index.flush()?;
    let summary = grid_summary(&ensemble)?;
    core_io::write_grid_summary(&summary, &run_dir.join("summary"))?;
    if !cfg.predict.targets.is_empty() {
        let targets: Vec<Location> = cfg
            .predict
            .targets
            .iter()
            .map(|t| Location::new(t[0], t[1]))
            .collect();
        let summaries = predictive_summary(&ensemble, &targets)?;
        core_io::write_target_summaries_csv(&summaries, &run_dir.join("summary/targets.csv"))?;
    }
    println!(
        "wrote {m} predictive fields and summaries to {}",
        run_dir.display()
    );
    Ok(())
}

fn read_za(run_dir: &Path, cfg: &ExperimentConfig) -> Result<PointData> {
    let path = run_dir.join("za.csv");
    if !path.exists() {
        return PointData::new(Vec::new(), Vec::new(), 0.0);
    }
    let mut locations = Vec::new();
    let mut values = Vec::new();
    let mut noise_var = cfg.type_a.noise_sd.powi(2);
    let mut reader = csv::Reader::from_path(&path).map_err(Error::from)?;
    for rec in reader.records() {
        let rec = rec.map_err(Error::from)?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad za.csv field {:?}", &rec[i])))
        };
        locations.push(Location::new(parse(0)?, parse(1)?));
        values.push(parse(2)?);
        noise_var = parse(3)?;
    }
    PointData::new(locations, values, noise_var)
}

/// `select-anchors`: run the stabilization search over anchor counts.
pub fn cmd_select_anchors(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.config;
    let sel = cfg.select_anchors.clone().ok_or_else(|| {
        Error::Config("select-anchors needs a [select_anchors] config section".into())
    })?;
    let grid = cfg.grid()?;
    prepare_out(ctx)?;
    let data = in_stage("synthetic-data", || {
        generate_synthetic(cfg, &grid, ctx.seed)
    })?;
    write_synthetic(&ctx.out, &data)?;

    let settings = InversionSettings {
        candidates: cfg.inversion.candidates,
        realizations: cfg.inversion.realizations,
        k: cfg.inversion.k,
    };
    let spec = PipelineSpec {
        grid: &grid,
        prior: &cfg.prior,
        za: &data.za,
        datasets: &data.datasets,
        settings,
        dump_clouds: None,
    };
    let outcome = in_stage("anchor-count-selection", || {
        select_anchor_count(
            &spec,
            |count| place_configured_anchors(cfg, &grid, &data.za, &data.datasets, count),
            &sel.counts,
            sel.stability_tol,
            derive(ctx.seed, "anchor-selection"),
        )
    })?;

    for step in &outcome.trace {
        match step.rms_to_next {
            Some(rms) => println!(
                "count {:>3}: rms-to-next {:.6}, ess {:.1}",
                step.count, rms, step.ess
            ),
            None => println!("count {:>3}: (last), ess {:.1}", step.count, step.ess),
        }
    }
    println!(
        "chosen anchor count: {}{}",
        outcome.chosen,
        if outcome.stabilized {
            ""
        } else {
            " (NOT stabilized; largest count returned)"
        }
    );

    let entry = AnchorSelectionEntry {
        chosen: outcome.chosen,
        stabilized: outcome.stabilized,
        trace: outcome
            .trace
            .iter()
            .map(|s| (s.count, s.rms_to_next))
            .collect(),
    };
    let file = std::fs::File::create(ctx.out.join("anchor_selection.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &entry)?;
    Ok(())
}
