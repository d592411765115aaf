//! TOML experiment configuration and its conversion to core types.

use std::path::Path;

use serde::{Deserialize, Serialize};

use anchorinv::error::{Error, Result};
use anchorinv::fieldsim::TypeAData;
use anchorinv::forward::{
    BoundaryCondition, DarcyObserver, FieldTransform, ForwardModel, LinearObserver,
};
use anchorinv::geostat::{Grid, Location, StructuralParams, TrendBasis};
use anchorinv::inversion::PriorSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage seed derives from it.
    pub seed: u64,
    pub grid: GridConfig,
    pub truth: TruthConfig,
    #[serde(default)]
    pub type_a: TypeAConfig,
    #[serde(rename = "forward")]
    pub forwards: Vec<ForwardConfig>,
    pub prior: PriorSpec,
    pub anchors: AnchorConfig,
    pub inversion: InversionConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub select_anchors: Option<SelectAnchorsConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    #[serde(default)]
    pub origin: [f64; 2],
}

/// Structural parameters used to generate the synthetic truth field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub phi: f64,
    #[serde(default)]
    pub nugget: f64,
    pub kappa: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub trend: TrendBasis,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeAConfig {
    #[serde(default)]
    pub locations: Vec<[f64; 2]>,
    /// Noise added to the sampled truth values (and assumed by the prior).
    #[serde(default)]
    pub noise_sd: f64,
}

/// One forward process / type-B dataset. `noise_sd` is the observation
/// noise applied to every output component.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForwardConfig {
    Darcy2d {
        bc: BoundaryConfig,
        #[serde(default)]
        wells: Vec<[f64; 2]>,
        #[serde(default)]
        include_mean_head: bool,
        #[serde(default)]
        noise_sd: f64,
    },
    LinearObserver {
        /// Cells observed one-to-one; alternative to an explicit weight matrix.
        #[serde(default)]
        cells: Vec<usize>,
        #[serde(default)]
        weights: Vec<Vec<f64>>,
        #[serde(default)]
        transform: FieldTransform,
        #[serde(default)]
        noise_sd: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    pub top: BoundaryCondition,
    pub bottom: BoundaryCondition,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    pub strategy: AnchorStrategyKind,
    pub count: usize,
    /// Minimum separation for the sensitivity strategy, meters.
    #[serde(default)]
    pub min_separation: Option<f64>,
    /// Targets for the targeted strategy.
    #[serde(default)]
    pub targets: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorStrategyKind {
    Coverage,
    Sensitivity,
    Targeted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    /// Prior candidates N.
    pub candidates: usize,
    /// Conditional realizations n per candidate.
    pub realizations: usize,
    /// Neighbor count; default round(sqrt(n)).
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Posterior-predictive fields m.
    pub fields: usize,
    #[serde(default)]
    pub targets: Vec<[f64; 2]>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            fields: 200,
            targets: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectAnchorsConfig {
    pub counts: Vec<usize>,
    pub stability_tol: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.truth_params().validate()?;
        self.prior.validate()?;
        if self.forwards.is_empty() {
            return Err(Error::Config(
                "at least one [[forward]] block is required".into(),
            ));
        }
        for f in &self.forwards {
            f.to_model(&grid)?.check_grid(&grid)?;
        }
        for (i, loc) in self.type_a.locations.iter().enumerate() {
            if !grid.contains(&Location::new(loc[0], loc[1])) {
                return Err(Error::Config(format!(
                    "type-A location {i} lies outside the grid"
                )));
            }
        }
        for (i, t) in self.predict.targets.iter().enumerate() {
            if !grid.contains(&Location::new(t[0], t[1])) {
                return Err(Error::Config(format!(
                    "prediction target {i} lies outside the grid"
                )));
            }
        }
        if self.inversion.candidates == 0 || self.inversion.realizations == 0 {
            return Err(Error::Config("inversion sizes must be positive".into()));
        }
        if self.predict.fields == 0 {
            return Err(Error::Config("predict.fields must be positive".into()));
        }
        match self.anchors.strategy {
            AnchorStrategyKind::Sensitivity if self.anchors.min_separation.is_none() => {
                return Err(Error::Config(
                    "sensitivity anchor placement needs anchors.min_separation".into(),
                ));
            }
            AnchorStrategyKind::Targeted if self.anchors.targets.is_empty() => {
                return Err(Error::Config(
                    "targeted anchor placement needs anchors.targets".into(),
                ));
            }
            _ => {}
        }
        if let Some(sel) = &self.select_anchors {
            if sel.counts.len() < 2 || sel.counts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "select_anchors.counts must be strictly increasing with at least two entries"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(
            [self.grid.nx, self.grid.ny],
            [self.grid.dx, self.grid.dy],
            Location::new(self.grid.origin[0], self.grid.origin[1]),
        )
    }

    pub fn truth_params(&self) -> StructuralParams {
        StructuralParams {
            beta: self.truth.beta.clone(),
            sigma2: self.truth.sigma2,
            phi: self.truth.phi,
            nugget: self.truth.nugget,
            kappa: self.truth.kappa,
            lambda: self.truth.lambda,
            trend: self.truth.trend,
        }
    }

    pub fn type_a_locations(&self) -> Vec<Location> {
        self.type_a
            .locations
            .iter()
            .map(|l| Location::new(l[0], l[1]))
            .collect()
    }

    /// Type-A data with the given values (sampled from the truth field).
    pub fn type_a_data(&self, values: Vec<f64>) -> Result<TypeAData> {
        TypeAData::new(
            self.type_a_locations(),
            values,
            self.type_a.noise_sd.powi(2),
        )
    }

    pub fn models(&self, grid: &Grid) -> Result<Vec<ForwardModel>> {
        self.forwards.iter().map(|f| f.to_model(grid)).collect()
    }
}

impl ForwardConfig {
    pub fn noise_sd(&self) -> f64 {
        match self {
            ForwardConfig::Darcy2d { noise_sd, .. }
            | ForwardConfig::LinearObserver { noise_sd, .. } => *noise_sd,
        }
    }

    pub fn to_model(&self, grid: &Grid) -> Result<ForwardModel> {
        match self {
            ForwardConfig::Darcy2d {
                bc,
                wells,
                include_mean_head,
                ..
            } => Ok(ForwardModel::Darcy2d(DarcyObserver {
                bc: anchorinv::forward::BoundarySpec {
                    left: bc.left,
                    right: bc.right,
                    top: bc.top,
                    bottom: bc.bottom,
                },
                wells: wells.iter().map(|w| Location::new(w[0], w[1])).collect(),
                include_mean_head: *include_mean_head,
            })),
            ForwardConfig::LinearObserver {
                cells,
                weights,
                transform,
                ..
            } => {
                let observer = match (cells.is_empty(), weights.is_empty()) {
                    (false, true) => LinearObserver::selecting_cells(cells, grid.cell_count())?,
                    (true, false) => LinearObserver::new(weights.clone(), *transform)?,
                    _ => {
                        return Err(Error::Config(
                            "linear observer needs exactly one of `cells` or `weights`".into(),
                        ));
                    }
                };
                let observer = LinearObserver {
                    transform: *transform,
                    ..observer
                };
                Ok(ForwardModel::LinearObserver(observer))
            }
        }
    }
}
