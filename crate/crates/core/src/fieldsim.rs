//! Unconditional and conditional Gaussian random-field simulation on a grid.
//!
//! Conditional draws use the residual-correction construction: an
//! unconditional draw is corrected by kriging the mismatch between the
//! conditioning values and the values the draw produced at the
//! conditioning cells. This honors the conditioning data exactly when
//! nugget and observation noise are zero, and yields draws whose mean and
//! covariance agree with [`condition_gaussian`] in general.
//!
//! Micro-scale (nugget) variation is treated as independent between a
//! conditioning measurement and any prediction target, matching the
//! covariance convention of [`crate::geostat::covariance_matrix`]: the
//! nugget appears only on the diagonal of a joint covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geostat::{
    self, covariance_matrix, matern_correlation, trend_mean, Grid, Location, StructuralParams,
};
use crate::seed;

/// Dense-Cholesky guard: grids beyond this cell count are rejected.
pub const MAX_DENSE_CELLS: usize = 20_000;

/// A realization of the transformed attribute on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: DVector<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Dimension(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("field values must be finite".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        let n = grid.cell_count();
        Field::new(grid, DVector::from_element(n, value))
    }

    /// Field value at the cell nearest to a location.
    pub fn value_near(&self, loc: &Location) -> f64 {
        let (idx, _) = self.grid.nearest_cell(loc);
        self.values[idx]
    }
}

/// Point observations of the (transformed) attribute: locations, values,
/// and a shared observation-noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointData {
    pub locations: Vec<Location>,
    pub values: Vec<f64>,
    pub noise_var: f64,
}

/// Direct (type-A) measurements of the attribute at individual locations.
pub type TypeAData = PointData;

impl PointData {
    pub fn new(locations: Vec<Location>, values: Vec<f64>, noise_var: f64) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::Domain(format!(
                "noise variance must be >= 0, got {noise_var}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || locations.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("point data must be finite".into()));
        }
        let dup = geostat::coincident_pairs(&locations);
        if !dup.is_empty() {
            return Err(Error::Config(format!(
                "point data locations must be pairwise distinct; coincident pairs: {dup:?}"
            )));
        }
        Ok(PointData {
            locations,
            values,
            noise_var,
        })
    }

    pub fn empty() -> Self {
        PointData {
            locations: Vec::new(),
            values: Vec::new(),
            noise_var: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Anchors: field values at the type-A locations plus user-placed
/// locations elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub type_a: PointData,
    pub type_b: PointData,
}

impl AnchorSet {
    pub fn new(type_a: PointData, type_b: PointData) -> Result<Self> {
        for (i, tb) in type_b.locations.iter().enumerate() {
            for (j, ta) in type_a.locations.iter().enumerate() {
                if tb.distance(ta) == 0.0 {
                    return Err(Error::Config(format!(
                        "type-B anchor {i} coincides with type-A location {j}"
                    )));
                }
            }
        }
        Ok(AnchorSet { type_a, type_b })
    }

    /// Anchors carrying only the type-A part.
    pub fn from_type_a(za: &TypeAData) -> Self {
        AnchorSet {
            type_a: za.clone(),
            type_b: PointData::empty(),
        }
    }

    pub fn conditioning(&self) -> Conditioning {
        let mut cond = Conditioning::empty();
        cond.push_point_data(&self.type_a);
        cond.push_point_data(&self.type_b);
        cond
    }

    pub fn total_len(&self) -> usize {
        self.type_a.len() + self.type_b.len()
    }
}

/// Flattened conditioning set with per-point noise variances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conditioning {
    pub locations: Vec<Location>,
    pub values: Vec<f64>,
    pub noise_vars: Vec<f64>,
}

impl Conditioning {
    pub fn empty() -> Self {
        Conditioning::default()
    }

    pub fn push_point_data(&mut self, data: &PointData) {
        self.locations.extend_from_slice(&data.locations);
        self.values.extend_from_slice(&data.values);
        self.noise_vars
            .extend(std::iter::repeat_n(data.noise_var, data.len()));
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

impl From<&AnchorSet> for Conditioning {
    fn from(anchors: &AnchorSet) -> Self {
        anchors.conditioning()
    }
}

/// Exactly coincident conditioning points make the kriging system singular
/// by construction; report them by name instead of letting jitter mask it.
fn reject_coincident(locations: &[Location], context: &str) -> Result<()> {
    let dup = geostat::coincident_pairs(locations);
    if dup.is_empty() {
        return Ok(());
    }
    let named: Vec<String> = dup
        .iter()
        .take(4)
        .map(|&(i, j)| {
            format!(
                "#{i}=({:.6}, {:.6}) and #{j}=({:.6}, {:.6})",
                locations[i].x, locations[i].y, locations[j].x, locations[j].y
            )
        })
        .collect();
    Err(Error::Conditioning(format!(
        "{context}: coincident conditioning locations: {}",
        named.join(", ")
    )))
}

/// Cholesky with the jitter policy: on failure, add `1e-10 * sigma2` to the
/// diagonal once and retry; a second failure is a hard error. Heavier
/// jitter would silently distort the likelihood estimates downstream.
fn cholesky_with_jitter(
    mut m: DMatrix<f64>,
    sigma2: f64,
    context: &str,
    locations: Option<&[Location]>,
) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let jitter = 1e-10 * sigma2;
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m).ok_or_else(|| {
                let mut msg = format!(
                    "{context}: covariance is not positive definite (jitter {jitter:.1e} did not help)"
                );
                if let Some(locs) = locations {
                    let dup = geostat::coincident_pairs(locs);
                    if !dup.is_empty() {
                        let named: Vec<String> = dup
                            .iter()
                            .take(4)
                            .map(|&(i, j)| {
                                format!(
                                    "#{i}=({:.6}, {:.6}) and #{j}=({:.6}, {:.6})",
                                    locs[i].x, locs[i].y, locs[j].x, locs[j].y
                                )
                            })
                            .collect();
                        msg.push_str(&format!("; coincident locations: {}", named.join(", ")));
                    }
                }
                Error::Conditioning(msg)
            })
        }
    }
}

/// Smooth-part covariance (no nugget): `sigma2 * rho(|x_i - x_j|)`.
fn smooth_covariance(locations: &[Location], theta: &StructuralParams) -> Result<DMatrix<f64>> {
    let n = locations.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = theta.sigma2;
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

/// Cross-covariance block between two location sets (smooth part only;
/// the nugget never appears off the diagonal of a joint covariance).
fn cross_covariance(
    rows: &[Location],
    cols: &[Location],
    theta: &StructuralParams,
) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(rows.len(), cols.len());
    for (i, r) in rows.iter().enumerate() {
        for (j, q) in cols.iter().enumerate() {
            c[(i, j)] = theta.sigma2 * matern_correlation(r.distance(q), theta.kappa, theta.phi)?;
        }
    }
    Ok(c)
}

/// Conditional Gaussian (kriging) mean and covariance of the field at
/// `targets` given the conditioning data.
///
/// With empty conditioning this returns the prior mean and covariance.
pub fn condition_gaussian(
    theta: &StructuralParams,
    known: &Conditioning,
    targets: &[Location],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    theta.validate()?;
    if targets.is_empty() {
        return Err(Error::Dimension(
            "condition_gaussian needs at least one target".into(),
        ));
    }
    let m_t = trend_mean(targets, &theta.beta, theta.trend)?;
    let c_tt = covariance_matrix(targets, theta)?;
    if known.is_empty() {
        return Ok((m_t, c_tt));
    }
    reject_coincident(&known.locations, "condition_gaussian")?;
    let m_k = trend_mean(&known.locations, &theta.beta, theta.trend)?;
    let mut c_kk = covariance_matrix(&known.locations, theta)?;
    for (i, nv) in known.noise_vars.iter().enumerate() {
        c_kk[(i, i)] += nv;
    }
    let chol = cholesky_with_jitter(
        c_kk,
        theta.sigma2,
        "condition_gaussian",
        Some(&known.locations),
    )?;
    let c_tk = cross_covariance(targets, &known.locations, theta)?;
    let resid = DVector::from_column_slice(&known.values) - m_k;
    let mean = m_t + &c_tk * chol.solve(&resid);
    let mut cov = &c_tt - &c_tk * chol.solve(&c_tk.transpose());
    // symmetrize away factorization round-off and clamp rounding-level
    // negative variances (exactly interpolated targets) to zero
    let clamp = 1e-10 * (theta.sigma2 + theta.nugget);
    for i in 0..cov.nrows() {
        if cov[(i, i)] < 0.0 && cov[(i, i)] > -clamp {
            cov[(i, i)] = 0.0;
        }
        for j in (i + 1)..cov.ncols() {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mean, cov))
}

/// Log density of a multivariate normal, factorizing the covariance with
/// the shared jitter policy.
pub fn gaussian_log_density(
    x: &DVector<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64> {
    let d = x.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::Dimension(
            "gaussian_log_density shape mismatch".into(),
        ));
    }
    if d == 0 {
        return Ok(0.0);
    }
    let scale = cov.diagonal().max();
    let chol = cholesky_with_jitter(
        cov.clone(),
        scale.max(f64::MIN_POSITIVE),
        "gaussian_log_density",
        None,
    )?;
    let resid = x - mean;
    let alpha = chol.solve(&resid);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (resid.dot(&alpha) + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln()))
}

/// One draw from `N(mean, cov)` using the shared jitter policy;
/// `jitter_scale` sets the magnitude of the one-shot diagonal jitter.
pub fn sample_mvn(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    jitter_scale: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(cov.clone(), jitter_scale, "sample_mvn", None)?;
    let mut rng = seed::rng_from(seed);
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + chol.l() * z)
}

/// Reusable conditional-field sampler for one `(theta, conditioning)` pair.
///
/// Factorizations are done once in [`ConditionalSimulator::new`]; each call
/// to [`ConditionalSimulator::simulate`] then costs one matrix-vector
/// product. Conditioning points are snapped to their nearest cell centers
/// and the snap offsets recorded.
pub struct ConditionalSimulator {
    grid: Grid,
    mean: DVector<f64>,
    chol_smooth: Cholesky<f64, Dyn>,
    tau: f64,
    correction: Option<Correction>,
    snap_offsets: Vec<f64>,
}

struct Correction {
    cells: Vec<usize>,
    values: DVector<f64>,
    noise_sds: Vec<f64>,
    /// n_cells x n_known kriging weights `C_gk (C_kk + N)^{-1}`.
    weights: DMatrix<f64>,
}

impl ConditionalSimulator {
    pub fn new(grid: &Grid, theta: &StructuralParams, cond: &Conditioning) -> Result<Self> {
        theta.validate()?;
        let n = grid.cell_count();
        if n > MAX_DENSE_CELLS {
            return Err(Error::Config(format!(
                "grid has {n} cells; dense simulation is guarded at {MAX_DENSE_CELLS}"
            )));
        }
        let centers = grid.cell_centers();
        let mean = trend_mean(&centers, &theta.beta, theta.trend)?;
        let chol_smooth = cholesky_with_jitter(
            smooth_covariance(&centers, theta)?,
            theta.sigma2,
            "simulate: grid covariance",
            None,
        )?;
        let tau = theta.nugget.sqrt();

        let mut snap_offsets = Vec::with_capacity(cond.len());
        let correction = if cond.is_empty() {
            None
        } else {
            let mut cells = Vec::with_capacity(cond.len());
            for loc in &cond.locations {
                if !grid.contains(loc) {
                    log::warn!(
                        "conditioning point ({}, {}) lies outside the grid bounding box",
                        loc.x,
                        loc.y
                    );
                }
                let (idx, offset) = grid.nearest_cell(loc);
                if offset > 0.0 {
                    log::debug!(
                        "conditioning point ({}, {}) snapped to cell {idx} (offset {offset:.3e})",
                        loc.x,
                        loc.y
                    );
                }
                cells.push(idx);
                snap_offsets.push(offset);
            }
            let snapped: Vec<Location> = cells.iter().map(|&i| grid.cell_center(i)).collect();
            reject_coincident(
                &snapped,
                "simulate: conditioning points snapped to shared cells",
            )?;
            let mut c_kk = covariance_matrix(&snapped, theta)?;
            for (i, nv) in cond.noise_vars.iter().enumerate() {
                c_kk[(i, i)] += nv;
            }
            let chol_kk = cholesky_with_jitter(
                c_kk,
                theta.sigma2,
                "simulate: conditioning covariance",
                Some(&snapped),
            )?;
            let c_gk = cross_covariance(&centers, &snapped, theta)?;
            let weights = chol_kk.solve(&c_gk.transpose()).transpose();
            Some(Correction {
                cells,
                values: DVector::from_column_slice(&cond.values),
                noise_sds: cond.noise_vars.iter().map(|v| v.sqrt()).collect(),
                weights,
            })
        };
        Ok(ConditionalSimulator {
            grid: grid.clone(),
            mean,
            chol_smooth,
            tau,
            correction,
            snap_offsets,
        })
    }

    /// Snap offset (meters) for each conditioning point, in input order.
    pub fn snap_offsets(&self) -> &[f64] {
        &self.snap_offsets
    }

    /// Exact conditional mean of the field on the grid (no sampling).
    pub fn conditional_mean(&self) -> DVector<f64> {
        match &self.correction {
            None => self.mean.clone(),
            Some(corr) => {
                let mut resid = corr.values.clone();
                for (j, &cell) in corr.cells.iter().enumerate() {
                    resid[j] -= self.mean[cell];
                }
                &self.mean + &corr.weights * resid
            }
        }
    }

    /// Draw one field. Identical seeds give bit-identical fields.
    pub fn simulate(&self, seed: u64) -> Field {
        let mut rng = seed::rng_from(seed);
        let n = self.mean.len();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let smooth = &self.mean + self.chol_smooth.l() * z;
        let mut values = smooth.clone();
        if self.tau > 0.0 {
            for v in values.iter_mut() {
                *v += self.tau * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if let Some(corr) = &self.correction {
            let k = corr.cells.len();
            // simulated measurements: smooth part at the conditioning cells
            // plus their own (independent) micro-scale and observation noise
            let mut sim_obs = DVector::zeros(k);
            for (j, &cell) in corr.cells.iter().enumerate() {
                let mut v = smooth[cell];
                if self.tau > 0.0 {
                    v += self.tau * rng.sample::<f64, _>(StandardNormal);
                }
                if corr.noise_sds[j] > 0.0 {
                    v += corr.noise_sds[j] * rng.sample::<f64, _>(StandardNormal);
                }
                sim_obs[j] = v;
            }
            let resid = &corr.values - sim_obs;
            values += &corr.weights * resid;
        }
        Field {
            grid: self.grid.clone(),
            values,
        }
    }
}

/// One unconditional draw from `N(m(theta), sigma2 R + nugget I)` on the
/// grid cell centers.
pub fn simulate_unconditional(grid: &Grid, theta: &StructuralParams, seed: u64) -> Result<Field> {
    ConditionalSimulator::new(grid, theta, &Conditioning::empty()).map(|s| s.simulate(seed))
}

/// One draw from the conditional Gaussian field given the conditioning data.
pub fn simulate_conditional(
    grid: &Grid,
    theta: &StructuralParams,
    cond: &Conditioning,
    seed: u64,
) -> Result<Field> {
    ConditionalSimulator::new(grid, theta, cond).map(|s| s.simulate(seed))
}

/// Draw type-B anchor values from their conditional prior
/// `p(anchor values | theta, z_a)`.
pub fn sample_anchor_prior(
    theta: &StructuralParams,
    za: &TypeAData,
    anchor_locs: &[Location],
    seed: u64,
) -> Result<Vec<f64>> {
    if anchor_locs.is_empty() {
        return Ok(Vec::new());
    }
    let mut cond = Conditioning::empty();
    cond.push_point_data(za);
    let (mean, cov) = condition_gaussian(theta, &cond, anchor_locs)?;
    let chol = cholesky_with_jitter(cov, theta.sigma2, "sample_anchor_prior", Some(anchor_locs))?;
    let mut rng = seed::rng_from(seed);
    let z = DVector::from_fn(anchor_locs.len(), |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    Ok((mean + chol.l() * z).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta_exp() -> StructuralParams {
        StructuralParams::isotropic(0.0, 1.0, 1.0, 0.0, 0.5)
    }

    #[test]
    fn unconditional_is_deterministic() {
        let grid = Grid::new([8, 8], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
        let theta = StructuralParams::isotropic(1.0, 0.8, 2.0, 0.05, 1.5);
        let a = simulate_unconditional(&grid, &theta, 77).unwrap();
        let b = simulate_unconditional(&grid, &theta, 77).unwrap();
        assert_eq!(a.values, b.values);
        let c = simulate_unconditional(&grid, &theta, 78).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn cell_guard_enforced() {
        let grid = Grid::new([150, 150], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
        let err = simulate_unconditional(&grid, &theta_exp(), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn condition_gaussian_no_data_is_prior() {
        let theta = theta_exp();
        let targets = [Location::at(0.0), Location::at(2.0)];
        let (mean, cov) = condition_gaussian(&theta, &Conditioning::empty(), &targets).unwrap();
        assert_eq!(
            mean,
            trend_mean(&targets, &theta.beta, theta.trend).unwrap()
        );
        assert_eq!(cov, covariance_matrix(&targets, &theta).unwrap());
    }

    #[test]
    fn condition_gaussian_exact_interpolation() {
        let theta = theta_exp();
        let mut cond = Conditioning::empty();
        cond.push_point_data(&PointData::new(vec![Location::at(0.5)], vec![1.7], 0.0).unwrap());
        let (mean, cov) = condition_gaussian(&theta, &cond, &[Location::at(0.5)]).unwrap();
        assert_relative_eq!(mean[0], 1.7, epsilon = 1e-10);
        assert!(cov[(0, 0)].abs() < 1e-10);
    }

    #[test]
    fn condition_gaussian_single_point_closed_form() {
        // 1-D, kappa = 0.5, sigma2 = 1, phi = 1, zero mean, y(0) = 1, target h = 1
        let theta = theta_exp();
        let mut cond = Conditioning::empty();
        cond.push_point_data(&PointData::new(vec![Location::at(0.0)], vec![1.0], 0.0).unwrap());
        let (mean, cov) = condition_gaussian(&theta, &cond, &[Location::at(1.0)]).unwrap();
        assert_relative_eq!(mean[0], (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 0)], 1.0 - (-2.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn condition_gaussian_permutation_invariant() {
        let theta = StructuralParams::isotropic(0.5, 2.0, 3.0, 0.1, 1.5);
        let locs = vec![
            Location::new(0.0, 0.0),
            Location::new(1.0, 2.0),
            Location::new(3.0, 1.0),
        ];
        let vals = vec![1.0, -0.5, 2.0];
        let mut fwd = Conditioning::empty();
        fwd.push_point_data(&PointData::new(locs.clone(), vals.clone(), 0.05).unwrap());
        let mut rev = Conditioning::empty();
        rev.push_point_data(
            &PointData::new(
                locs.into_iter().rev().collect(),
                vals.into_iter().rev().collect(),
                0.05,
            )
            .unwrap(),
        );
        let targets = [Location::new(0.7, 0.7), Location::new(2.0, 2.0)];
        let (m1, c1) = condition_gaussian(&theta, &fwd, &targets).unwrap();
        let (m2, c2) = condition_gaussian(&theta, &rev, &targets).unwrap();
        assert_relative_eq!((m1 - m2).amax(), 0.0, epsilon = 1e-10);
        assert_relative_eq!((c1 - c2).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn condition_gaussian_names_coincident_locations() {
        let theta = theta_exp();
        let mut cond = Conditioning::empty();
        // bypass PointData's distinctness check with two blocks
        cond.push_point_data(&PointData::new(vec![Location::at(1.0)], vec![0.3], 0.0).unwrap());
        cond.push_point_data(&PointData::new(vec![Location::at(1.0)], vec![0.4], 0.0).unwrap());
        let err = condition_gaussian(&theta, &cond, &[Location::at(2.0)]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coincident"), "got: {msg}");
    }

    #[test]
    fn conditional_variance_never_exceeds_prior() {
        use rand::Rng;
        let mut rng = crate::seed::rng_from(5150);
        for trial in 0..100 {
            let theta = StructuralParams::isotropic(
                rng.random::<f64>() * 2.0 - 1.0,
                0.1 + rng.random::<f64>() * 3.0,
                0.2 + rng.random::<f64>() * 5.0,
                rng.random::<f64>() * 0.3,
                [0.5, 1.5, 2.5][trial % 3],
            );
            let nk = 1 + trial % 5;
            let known = PointData::new(
                (0..nk)
                    .map(|i| {
                        Location::new(
                            rng.random::<f64>() * 10.0 + 20.0 * i as f64,
                            rng.random::<f64>() * 10.0,
                        )
                    })
                    .collect(),
                (0..nk).map(|_| rng.random::<f64>()).collect(),
                rng.random::<f64>() * 0.1,
            )
            .unwrap();
            let mut cond = Conditioning::empty();
            cond.push_point_data(&known);
            let targets: Vec<Location> = (0..4)
                .map(|_| Location::new(rng.random::<f64>() * 100.0, rng.random::<f64>() * 10.0))
                .collect();
            let (_, cov) = condition_gaussian(&theta, &cond, &targets).unwrap();
            let prior_var = theta.sigma2 + theta.nugget;
            for i in 0..targets.len() {
                assert!(
                    cov[(i, i)] <= prior_var + 1e-9,
                    "trial {trial}: conditional variance {} exceeds prior {}",
                    cov[(i, i)],
                    prior_var
                );
            }
        }
    }

    #[test]
    fn conditional_simulation_honors_anchor() {
        let grid = Grid::new([16, 1], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
        let theta = theta_exp();
        let mut cond = Conditioning::empty();
        cond.push_point_data(&PointData::new(vec![Location::at(5.0)], vec![2.25], 0.0).unwrap());
        let field = simulate_conditional(&grid, &theta, &cond, 9).unwrap();
        assert_relative_eq!(field.values[5], 2.25, epsilon = 1e-8);
    }

    #[test]
    fn conditional_with_empty_set_equals_unconditional() {
        let grid = Grid::new([6, 6], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
        let theta = StructuralParams::isotropic(0.3, 1.2, 2.0, 0.01, 1.5);
        let a = simulate_unconditional(&grid, &theta, 4242).unwrap();
        let b = simulate_conditional(&grid, &theta, &Conditioning::empty(), 4242).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn sample_anchor_prior_edge_cases() {
        let theta = theta_exp();
        let za = PointData::new(vec![Location::at(0.0)], vec![1.0], 0.0).unwrap();
        assert!(sample_anchor_prior(&theta, &za, &[], 3).unwrap().is_empty());
        let vals =
            sample_anchor_prior(&theta, &PointData::empty(), &[Location::at(2.0)], 3).unwrap();
        assert_eq!(vals.len(), 1);
        // error-free anchor at the data location reproduces the datum
        let vals = sample_anchor_prior(&theta, &za, &[Location::at(0.0)], 3).unwrap();
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn anchor_set_rejects_overlap_with_type_a() {
        let za = PointData::new(vec![Location::at(1.0)], vec![0.5], 0.0).unwrap();
        let tb = PointData::new(vec![Location::at(1.0)], vec![0.2], 0.0).unwrap();
        assert!(AnchorSet::new(za.clone(), tb).is_err());
        let tb = PointData::new(vec![Location::at(2.0)], vec![0.2], 0.0).unwrap();
        assert!(AnchorSet::new(za, tb).is_ok());
    }

    #[test]
    fn gaussian_log_density_matches_univariate() {
        let x = DVector::from_column_slice(&[1.5]);
        let mean = DVector::from_column_slice(&[1.0]);
        let cov = DMatrix::from_element(1, 1, 4.0);
        let expected =
            -0.5 * ((0.5f64 * 0.5 / 4.0) + 4.0f64.ln() + (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(
            gaussian_log_density(&x, &mean, &cov).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }
}
