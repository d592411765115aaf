//! Deterministic forward models mapping a field realization to a type-B
//! prediction vector, plus observation-error handling.
//!
//! Type-B data are *functions of the whole field*: a prediction vector to
//! compare against observations, with no per-component spatial location.
//! A forward model is deterministic — one field in, exactly one vector out.

pub mod darcy;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldsim::Field;
use crate::geostat::{Grid, Location};
use crate::seed;

pub use darcy::{darcy2d_solve, mass_balance, BoundaryCondition, BoundarySpec};

/// Indirect (type-B) observations: a plain vector with per-component
/// observation-noise standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeBData {
    pub values: Vec<f64>,
    pub noise_sd: Vec<f64>,
}

impl TypeBData {
    pub fn new(values: Vec<f64>, noise_sd: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension(
                "type-B data must have at least one component".into(),
            ));
        }
        if noise_sd.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} values but {} noise entries",
                values.len(),
                noise_sd.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("type-B values must be finite".into()));
        }
        if noise_sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Domain(
                "type-B noise sd must be >= 0 and finite".into(),
            ));
        }
        Ok(TypeBData { values, noise_sd })
    }

    /// Same noise level on every component.
    pub fn with_uniform_noise(values: Vec<f64>, sd: f64) -> Result<Self> {
        let n = values.len();
        TypeBData::new(values, vec![sd; n])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn has_noise(&self) -> bool {
        self.noise_sd.iter().any(|s| *s > 0.0)
    }

    /// Concatenation of several datasets into one joint vector.
    pub fn concat(parts: &[&TypeBData]) -> Result<Self> {
        let mut values = Vec::new();
        let mut noise = Vec::new();
        for p in parts {
            values.extend_from_slice(&p.values);
            noise.extend_from_slice(&p.noise_sd);
        }
        TypeBData::new(values, noise)
    }
}

/// How a linear observer reads the field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldTransform {
    /// Observe the transformed attribute directly.
    #[default]
    Raw,
    /// Observe `exp(value)` (e.g. conductivity when the field is log-conductivity).
    Exp,
}

/// Linear observer: each output component is a weighted sum of (optionally
/// exp-transformed) cell values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearObserver {
    /// One weight row per output component; row length = grid cell count.
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub transform: FieldTransform,
}

impl LinearObserver {
    pub fn new(weights: Vec<Vec<f64>>, transform: FieldTransform) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config(
                "linear observer needs at least one weight row".into(),
            ));
        }
        let len = weights[0].len();
        if weights.iter().any(|row| row.len() != len) {
            return Err(Error::Config(
                "linear observer weight rows have unequal lengths".into(),
            ));
        }
        Ok(LinearObserver { weights, transform })
    }

    /// Observer selecting individual cells of a grid with `n_cells` cells.
    pub fn selecting_cells(cells: &[usize], n_cells: usize) -> Result<Self> {
        let mut weights = Vec::with_capacity(cells.len());
        for &c in cells {
            if c >= n_cells {
                return Err(Error::Config(format!(
                    "cell index {c} out of range 0..{n_cells}"
                )));
            }
            let mut row = vec![0.0; n_cells];
            row[c] = 1.0;
            weights.push(row);
        }
        LinearObserver::new(weights, FieldTransform::Raw)
    }
}

/// Darcy forward model: treats field values as log-conductivity
/// (`K = exp(value)`), solves steady 2-D flow, and reports heads at the
/// well locations, optionally followed by the mean head over the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarcyObserver {
    pub bc: BoundarySpec,
    pub wells: Vec<Location>,
    #[serde(default)]
    pub include_mean_head: bool,
}

/// Built-in deterministic forward models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForwardModel {
    LinearObserver(LinearObserver),
    Darcy2d(DarcyObserver),
    /// Concatenation of the outputs of several models on the same grid.
    Composite {
        parts: Vec<ForwardModel>,
    },
}

impl ForwardModel {
    /// Output dimension `d_B`.
    pub fn output_dim(&self) -> usize {
        match self {
            ForwardModel::LinearObserver(o) => o.weights.len(),
            ForwardModel::Darcy2d(d) => d.wells.len() + usize::from(d.include_mean_head),
            ForwardModel::Composite { parts } => parts.iter().map(|p| p.output_dim()).sum(),
        }
    }

    /// Validate the model against the grid it will be evaluated on.
    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        match self {
            ForwardModel::LinearObserver(o) => {
                if o.weights[0].len() != grid.cell_count() {
                    return Err(Error::Config(format!(
                        "linear observer expects {} cells, grid has {}",
                        o.weights[0].len(),
                        grid.cell_count()
                    )));
                }
                Ok(())
            }
            ForwardModel::Darcy2d(d) => {
                d.bc.validate()?;
                for (i, w) in d.wells.iter().enumerate() {
                    if !grid.contains(w) {
                        return Err(Error::Config(format!(
                            "well {i} at ({}, {}) lies outside the grid",
                            w.x, w.y
                        )));
                    }
                }
                if d.wells.is_empty() && !d.include_mean_head {
                    return Err(Error::Config("darcy model observes nothing".into()));
                }
                Ok(())
            }
            ForwardModel::Composite { parts } => {
                if parts.is_empty() {
                    return Err(Error::Config("composite model has no parts".into()));
                }
                parts.iter().try_for_each(|p| p.check_grid(grid))
            }
        }
    }
}

/// Evaluate a forward model on a field realization. Deterministic:
/// identical fields give bit-identical outputs.
pub fn evaluate(model: &ForwardModel, field: &Field) -> Result<Vec<f64>> {
    model.check_grid(&field.grid)?;
    match model {
        ForwardModel::LinearObserver(o) => {
            let transformed: DVector<f64> = match o.transform {
                FieldTransform::Raw => field.values.clone(),
                FieldTransform::Exp => field.values.map(|v| v.exp()),
            };
            Ok(o.weights
                .iter()
                .map(|row| row.iter().zip(transformed.iter()).map(|(w, v)| w * v).sum())
                .collect())
        }
        ForwardModel::Darcy2d(d) => {
            let conductivity = Field::new(field.grid.clone(), field.values.map(|v| v.exp()))?;
            let heads = darcy2d_solve(&conductivity, &d.bc)?;
            let mut out: Vec<f64> = d.wells.iter().map(|w| heads.value_near(w)).collect();
            if d.include_mean_head {
                out.push(heads.values.sum() / heads.values.len() as f64);
            }
            Ok(out)
        }
        ForwardModel::Composite { parts } => {
            let mut out = Vec::with_capacity(model.output_dim());
            for p in parts {
                out.extend(evaluate(p, field)?);
            }
            Ok(out)
        }
    }
}

/// Add independent zero-mean Gaussian noise componentwise.
/// A zero sd leaves the component exactly unchanged.
pub fn add_observation_error(prediction: &[f64], noise_sd: &[f64], seed: u64) -> Result<Vec<f64>> {
    if prediction.len() != noise_sd.len() {
        return Err(Error::Dimension(format!(
            "prediction has {} components but noise has {}",
            prediction.len(),
            noise_sd.len()
        )));
    }
    if noise_sd.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Domain("noise sd must be >= 0".into()));
    }
    let mut rng = seed::rng_from(seed);
    Ok(prediction
        .iter()
        .zip(noise_sd)
        .map(|(&p, &s)| p + s * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
