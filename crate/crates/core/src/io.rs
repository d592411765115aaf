//! Serialization of fields, ensembles, and summaries.
//!
//! Formats:
//! * fields as `x,y,value` CSV, or as a raw little-endian f64 dump next to
//!   a small JSON header (`<name>.meta.json`) holding dims/spacing/origin;
//! * candidate ensembles as one CSV row per candidate;
//! * forward-output clouds as CSV rows keyed by realization id.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsim::Field;
use crate::geostat::{Grid, Location};
use crate::inversion::PosteriorEnsemble;
use crate::likelihood::SampleCloud;
use crate::predict::{GridSummary, TargetSummary};

/// Write a field as `x,y,value` rows.
pub fn write_field_csv(field: &Field, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (i, v) in field.values.iter().enumerate() {
        let c = field.grid.cell_center(i);
        w.write_record([c.x.to_string(), c.y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RawHeader {
    dims: [usize; 2],
    spacing: [f64; 2],
    origin: [f64; 2],
}

fn meta_path(bin_path: &Path) -> std::path::PathBuf {
    bin_path.with_extension("meta.json")
}

/// Raw little-endian f64 dump of the field values, with the grid geometry
/// in a sibling `<name>.meta.json` header.
pub fn write_field_raw(field: &Field, bin_path: &Path) -> Result<()> {
    let header = RawHeader {
        dims: field.grid.dims,
        spacing: field.grid.spacing,
        origin: [field.grid.origin.x, field.grid.origin.y],
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(meta_path(bin_path))?), &header)?;
    let mut w = BufWriter::new(File::create(bin_path)?);
    for v in field.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a raw field dump written by [`write_field_raw`].
pub fn read_field_raw(bin_path: &Path) -> Result<Field> {
    let header: RawHeader =
        serde_json::from_reader(BufReader::new(File::open(meta_path(bin_path))?))?;
    let grid = Grid::new(
        header.dims,
        header.spacing,
        Location::new(header.origin[0], header.origin[1]),
    )?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(bin_path)?).read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.cell_count() {
        return Err(Error::Config(format!(
            "raw field {} has {} bytes, expected {}",
            bin_path.display(),
            bytes.len(),
            8 * grid.cell_count()
        )));
    }
    let values = DVector::from_iterator(
        grid.cell_count(),
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
    );
    Field::new(grid, values)
}

/// One CSV row per candidate: structural parameters, type-B anchor values,
/// estimated likelihood, and weight.
pub fn write_candidates_csv(ensemble: &PosteriorEnsemble, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let first = ensemble
        .candidates
        .first()
        .ok_or_else(|| Error::Config("cannot write an empty ensemble".into()))?;
    let n_beta = first.theta.beta.len();
    let n_anchor = first.anchors.type_b.len();
    let mut header: Vec<String> = vec!["id".into()];
    header.extend((0..n_beta).map(|i| format!("beta_{i}")));
    header.extend(["sigma2", "phi", "nugget", "kappa", "lambda"].map(String::from));
    header.extend((0..n_anchor).map(|i| format!("anchor_{i}")));
    header.extend(["log_prior", "likelihood", "degenerate", "weight"].map(String::from));
    w.write_record(&header)?;
    for c in &ensemble.candidates {
        let mut row: Vec<String> = vec![c.id.to_string()];
        row.extend(c.theta.beta.iter().map(|v| v.to_string()));
        row.push(c.theta.sigma2.to_string());
        row.push(c.theta.phi.to_string());
        row.push(c.theta.nugget.to_string());
        row.push(c.theta.kappa.to_string());
        row.push(c.theta.lambda.to_string());
        row.extend(c.anchors.type_b.values.iter().map(|v| v.to_string()));
        row.push(c.log_prior.to_string());
        row.push(
            c.likelihood
                .map(|e| e.value.to_string())
                .unwrap_or_default(),
        );
        row.push((c.degenerate as u8).to_string());
        row.push(c.weight.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Candidate record read back from `candidates.csv`.
#[derive(Clone, Debug)]
pub struct CandidateRecord {
    pub id: usize,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub anchors: Vec<f64>,
    pub log_prior: f64,
    pub likelihood: Option<f64>,
    pub degenerate: bool,
    pub weight: f64,
}

pub fn read_candidates_csv(path: &Path) -> Result<Vec<CandidateRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())))
    };
    let beta_cols: Vec<usize> = (0..)
        .map(|i| header.iter().position(|h| h == format!("beta_{i}")))
        .take_while(|c| c.is_some())
        .flatten()
        .collect();
    let anchor_cols: Vec<usize> = (0..)
        .map(|i| header.iter().position(|h| h == format!("anchor_{i}")))
        .take_while(|c| c.is_some())
        .flatten()
        .collect();
    if beta_cols.is_empty() {
        return Err(Error::Config(format!(
            "{}: no beta_* columns",
            path.display()
        )));
    }
    let (ci, cs, cp, cn, ck, cla) = (
        col("id")?,
        col("sigma2")?,
        col("phi")?,
        col("nugget")?,
        col("kappa")?,
        col("lambda")?,
    );
    let (clp, cl, cd, cw) = (
        col("log_prior")?,
        col("likelihood")?,
        col("degenerate")?,
        col("weight")?,
    );
    let parse = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Config(format!("{}: bad {what} value {s:?}", path.display())))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(CandidateRecord {
            id: parse(&rec[ci], "id")? as usize,
            beta: beta_cols
                .iter()
                .map(|&c| parse(&rec[c], "beta"))
                .collect::<Result<_>>()?,
            sigma2: parse(&rec[cs], "sigma2")?,
            phi: parse(&rec[cp], "phi")?,
            nugget: parse(&rec[cn], "nugget")?,
            kappa: parse(&rec[ck], "kappa")?,
            lambda: parse(&rec[cla], "lambda")?,
            anchors: anchor_cols
                .iter()
                .map(|&c| parse(&rec[c], "anchor"))
                .collect::<Result<_>>()?,
            log_prior: parse(&rec[clp], "log_prior")?,
            likelihood: if rec[cl].is_empty() {
                None
            } else {
                Some(parse(&rec[cl], "likelihood")?)
            },
            degenerate: &rec[cd] == "1",
            weight: parse(&rec[cw], "weight")?,
        });
    }
    Ok(rows)
}

/// Forward-output cloud, one row per realization.
pub fn write_cloud_csv(cloud: &SampleCloud, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["realization".to_string()];
    header.extend((0..cloud.dim()).map(|j| format!("z_{j}")));
    w.write_record(&header)?;
    for i in 0..cloud.n() {
        let mut row = vec![i.to_string()];
        row.extend(cloud.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-target predictive summaries.
pub fn write_target_summaries_csv(summaries: &[TargetSummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "cell", "mean", "variance", "q05", "q50", "q95"])?;
    for s in summaries {
        w.write_record([
            s.target.x.to_string(),
            s.target.y.to_string(),
            s.cell.to_string(),
            s.mean.to_string(),
            s.variance.to_string(),
            s.q05.to_string(),
            s.q50.to_string(),
            s.q95.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write the five summary layers as `mean.csv`, `sd.csv`, `q05.csv`,
/// `q50.csv`, `q95.csv` inside `dir`.
pub fn write_grid_summary(summary: &GridSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_field_csv(&summary.mean, &dir.join("mean.csv"))?;
    write_field_csv(&summary.sd, &dir.join("sd.csv"))?;
    write_field_csv(&summary.q05, &dir.join("q05.csv"))?;
    write_field_csv(&summary.q50, &dir.join("q50.csv"))?;
    write_field_csv(&summary.q95, &dir.join("q95.csv"))?;
    Ok(())
}
