//! Covariance models, variable transforms, and trend structure for the
//! spatial attribute.
//!
//! The correlation model is Matérn,
//! `rho(h) = 2^{1-kappa}/Γ(kappa) (h/phi)^kappa K_kappa(h/phi)`,
//! parameterized so that `kappa = 0.5` reduces to `exp(-h/phi)`. Closed
//! forms are used for `kappa` in {0.5, 1.5, 2.5}; any other smoothness
//! goes through the modified-Bessel evaluation in [`crate::special`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Spatial location in 1-D or 2-D, in meters. 1-D datasets use `y = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    /// 1-D convenience constructor.
    pub fn at(x: f64) -> Self {
        Location { x, y: 0.0 }
    }

    pub fn distance(&self, other: &Location) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Regular cell-centered grid. `origin` is the center of cell (0, 0);
/// cell (ix, iy) is stored at linear index `iy * nx + ix`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 2],
    pub spacing: [f64; 2],
    pub origin: Location,
}

impl Grid {
    pub fn new(dims: [usize; 2], spacing: [f64; 2], origin: Location) -> Result<Self> {
        if dims[0] == 0 || dims[1] == 0 {
            return Err(Error::Config(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0)
            || !spacing[0].is_finite()
            || !spacing[1].is_finite()
        {
            return Err(Error::Config(format!(
                "grid spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(Grid {
            dims,
            spacing,
            origin,
        })
    }

    /// 1-D grid along x.
    pub fn line(n: usize, dx: f64) -> Result<Self> {
        Grid::new([n, 1], [dx, dx], Location::new(0.0, 0.0))
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.dims[0] + ix
    }

    pub fn cell_center(&self, idx: usize) -> Location {
        let ix = idx % self.dims[0];
        let iy = idx / self.dims[0];
        Location::new(
            self.origin.x + ix as f64 * self.spacing[0],
            self.origin.y + iy as f64 * self.spacing[1],
        )
    }

    pub fn cell_centers(&self) -> Vec<Location> {
        (0..self.cell_count())
            .map(|i| self.cell_center(i))
            .collect()
    }

    /// Nearest cell index and the snap offset distance.
    pub fn nearest_cell(&self, loc: &Location) -> (usize, f64) {
        let fx = (loc.x - self.origin.x) / self.spacing[0];
        let fy = (loc.y - self.origin.y) / self.spacing[1];
        let ix = fx.round().clamp(0.0, (self.dims[0] - 1) as f64) as usize;
        let iy = fy.round().clamp(0.0, (self.dims[1] - 1) as f64) as usize;
        let idx = self.index(ix, iy);
        (idx, loc.distance(&self.cell_center(idx)))
    }

    /// Whether a location lies inside the grid's bounding box
    /// (cell centers padded by half a cell on each side).
    pub fn contains(&self, loc: &Location) -> bool {
        let lo_x = self.origin.x - 0.5 * self.spacing[0];
        let hi_x = self.origin.x + (self.dims[0] as f64 - 0.5) * self.spacing[0];
        let lo_y = self.origin.y - 0.5 * self.spacing[1];
        let hi_y = self.origin.y + (self.dims[1] as f64 - 0.5) * self.spacing[1];
        loc.x >= lo_x && loc.x <= hi_x && loc.y >= lo_y && loc.y <= hi_y
    }
}

/// Trend (mean) structure of the field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendBasis {
    /// Constant mean: the design matrix is a column of 1's, beta has length 1.
    #[default]
    Constant,
    /// Linear in the coordinates: design row (1, x, y), beta has length 3.
    LinearInCoords,
}

impl TrendBasis {
    pub fn n_coeffs(&self) -> usize {
        match self {
            TrendBasis::Constant => 1,
            TrendBasis::LinearInCoords => 3,
        }
    }

    fn design_row(&self, loc: &Location) -> Vec<f64> {
        match self {
            TrendBasis::Constant => vec![1.0],
            TrendBasis::LinearInCoords => vec![1.0, loc.x, loc.y],
        }
    }
}

/// Structural (geostatistical) parameters: trend coefficients, variance,
/// correlation scale, nugget, Matérn smoothness, and Box-Cox exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub phi: f64,
    pub nugget: f64,
    pub kappa: f64,
    pub lambda: f64,
    #[serde(default)]
    pub trend: TrendBasis,
}

impl StructuralParams {
    /// Constant-trend parameters with Box-Cox exponent 0 (log scale).
    pub fn isotropic(beta0: f64, sigma2: f64, phi: f64, nugget: f64, kappa: f64) -> Self {
        StructuralParams {
            beta: vec![beta0],
            sigma2,
            phi,
            nugget,
            kappa,
            lambda: 0.0,
            trend: TrendBasis::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::Domain(format!("phi must be > 0, got {}", self.phi)));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::Domain(format!(
                "nugget must be >= 0, got {}",
                self.nugget
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Domain(format!(
                "kappa must be > 0, got {}",
                self.kappa
            )));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Domain("lambda must be finite".into()));
        }
        if self.beta.len() != self.trend.n_coeffs() {
            return Err(Error::Dimension(format!(
                "trend basis {:?} needs {} coefficients, got {}",
                self.trend,
                self.trend.n_coeffs(),
                self.beta.len()
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("beta must be finite".into()));
        }
        Ok(())
    }
}

/// Matérn correlation at lag `h`, smoothness `kappa`, scale `phi`.
///
/// Uses the exact closed forms for `kappa` in {0.5, 1.5, 2.5} and the
/// Bessel evaluation otherwise.
pub fn matern_correlation(h: f64, kappa: f64, phi: f64) -> Result<f64> {
    check_matern_args(h, kappa, phi)?;
    if h == 0.0 {
        return Ok(1.0);
    }
    let t = h / phi;
    const HALF_INT_TOL: f64 = 1e-12;
    if (kappa - 0.5).abs() < HALF_INT_TOL {
        Ok((-t).exp())
    } else if (kappa - 1.5).abs() < HALF_INT_TOL {
        Ok((1.0 + t) * (-t).exp())
    } else if (kappa - 2.5).abs() < HALF_INT_TOL {
        Ok((1.0 + t + t * t / 3.0) * (-t).exp())
    } else {
        matern_correlation_general(h, kappa, phi)
    }
}

/// General-smoothness Matérn evaluation through `K_kappa`. Exposed so the
/// closed forms can be cross-checked against it.
pub fn matern_correlation_general(h: f64, kappa: f64, phi: f64) -> Result<f64> {
    check_matern_args(h, kappa, phi)?;
    if h == 0.0 {
        return Ok(1.0);
    }
    let t = h / phi;
    // 2^{1-k}/Γ(k) t^k K_k(t), assembled in log space for the prefactor to
    // keep large kappa / small t well-conditioned.
    let k = special::bessel_k(kappa, t)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    let log_pref =
        (1.0 - kappa) * std::f64::consts::LN_2 - special::ln_gamma(kappa) + kappa * t.ln();
    let rho = (log_pref + k.ln()).exp();
    // guard against rounding just above 1 at tiny lags
    Ok(rho.min(1.0))
}

fn check_matern_args(h: f64, kappa: f64, phi: f64) -> Result<()> {
    if !h.is_finite() || h < 0.0 {
        return Err(Error::Domain(format!(
            "lag must be finite and >= 0, got {h}"
        )));
    }
    if !kappa.is_finite() || kappa <= 0.0 {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    if !phi.is_finite() || phi <= 0.0 {
        return Err(Error::Domain(format!("phi must be > 0, got {phi}")));
    }
    Ok(())
}

/// Model covariance matrix over a set of locations:
/// `C[i,j] = sigma2 * rho(|x_i - x_j|) + nugget * 1{i == j}`.
///
/// Coincident locations are allowed; the resulting matrix is singular and
/// downstream factorizations report it as a conditioning failure.
pub fn covariance_matrix(locations: &[Location], theta: &StructuralParams) -> Result<DMatrix<f64>> {
    theta.validate()?;
    let n = locations.len();
    if n == 0 {
        return Err(Error::Dimension(
            "covariance_matrix needs at least one location".into(),
        ));
    }
    for loc in locations {
        if !loc.is_finite() {
            return Err(Error::Domain("locations must be finite".into()));
        }
    }
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = theta.sigma2 + theta.nugget;
        for j in (i + 1)..n {
            let rho =
                matern_correlation(locations[i].distance(&locations[j]), theta.kappa, theta.phi)?;
            let v = theta.sigma2 * rho;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Pairs of coincident locations, for conditioning-failure diagnostics.
pub fn coincident_pairs(locations: &[Location]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..locations.len() {
        for j in (i + 1)..locations.len() {
            if locations[i].distance(&locations[j]) == 0.0 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

const LAMBDA_ZERO_TOL: f64 = 1e-10;

/// Box-Cox transform of a positive value:
/// `(y^lambda - 1)/lambda` for `lambda != 0`, `ln y` for `lambda = 0`.
pub fn boxcox(y: f64, lambda: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("boxcox requires y > 0, got {y}")));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain("boxcox lambda must be finite".into()));
    }
    if lambda.abs() < LAMBDA_ZERO_TOL {
        Ok(y.ln())
    } else {
        // expm1 keeps the small-lambda limit accurate
        Ok((lambda * y.ln()).exp_m1() / lambda)
    }
}

/// Inverse Box-Cox transform. Errors when the value lies outside the
/// transform's range (`1 + lambda * t` must be positive).
pub fn inverse_boxcox(t: f64, lambda: f64) -> Result<f64> {
    if !t.is_finite() || !lambda.is_finite() {
        return Err(Error::Domain(
            "inverse_boxcox requires finite inputs".into(),
        ));
    }
    if lambda.abs() < LAMBDA_ZERO_TOL {
        Ok(t.exp())
    } else {
        if 1.0 + lambda * t <= 0.0 {
            return Err(Error::Domain(format!(
                "value {t} is outside the range of the Box-Cox transform with lambda {lambda}"
            )));
        }
        Ok(((lambda * t).ln_1p() / lambda).exp())
    }
}

/// Trend mean `m = X beta` at the given locations.
pub fn trend_mean(locations: &[Location], beta: &[f64], basis: TrendBasis) -> Result<DVector<f64>> {
    if beta.len() != basis.n_coeffs() {
        return Err(Error::Dimension(format!(
            "trend basis {:?} needs {} coefficients, got {}",
            basis,
            basis.n_coeffs(),
            beta.len()
        )));
    }
    let mut m = DVector::zeros(locations.len());
    for (i, loc) in locations.iter().enumerate() {
        m[i] = basis
            .design_row(loc)
            .iter()
            .zip(beta)
            .map(|(x, b)| x * b)
            .sum();
    }
    Ok(m)
}
