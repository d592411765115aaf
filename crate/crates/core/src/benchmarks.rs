//! Reproducible synthetic benchmark problems.
//!
//! Shared by the verification suites and the performance benchmarks, and
//! useful as worked examples of wiring the pipeline together.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::fieldsim::{
    condition_gaussian, simulate_conditional, simulate_unconditional, Conditioning, Field,
    PointData, TypeAData,
};
use crate::forward::{
    add_observation_error, evaluate, BoundarySpec, DarcyObserver, ForwardModel, LinearObserver,
    TypeBData,
};
use crate::geostat::{Grid, Location, StructuralParams, TrendBasis};
use crate::inversion::{place_anchors, AnchorStrategy, Dataset, MarginalPrior, PriorSpec};
use crate::seed;

/// A 1-D inversion problem whose anchor posterior has a closed form.
///
/// The structural parameters are fixed, the forward model is a linear
/// observer, and the observation noise is Gaussian, so `(anchors, z_b)`
/// given `z_a` is jointly Gaussian and the posterior of the anchor values
/// follows by conjugacy.
pub struct LinearGaussianProblem {
    pub grid: Grid,
    pub theta: StructuralParams,
    pub za: TypeAData,
    pub anchor_locs: Vec<Location>,
    pub model: ForwardModel,
    pub zb: TypeBData,
    /// Conjugate posterior of the anchor values given both data types.
    pub posterior_mean: Vec<f64>,
    pub posterior_sd: Vec<f64>,
}

/// Build the 32-cell linear-Gaussian problem and its conjugate reference.
pub fn linear_gaussian_problem(noise_sd: f64, truth_seed: u64) -> Result<LinearGaussianProblem> {
    let grid = Grid::line(32, 1.0)?;
    let theta = StructuralParams {
        beta: vec![1.5],
        sigma2: 1.0,
        phi: 4.0,
        nugget: 0.0,
        kappa: 1.5,
        lambda: 0.0,
        trend: TrendBasis::Constant,
    };
    let za = PointData::new(
        vec![Location::at(4.0), Location::at(27.0)],
        vec![2.1, 0.9],
        0.0,
    )?;
    let anchor_locs = vec![Location::at(10.0), Location::at(21.0)];
    let obs_cells = [6usize, 13, 19, 26];
    let model = ForwardModel::LinearObserver(LinearObserver::selecting_cells(
        &obs_cells,
        grid.cell_count(),
    )?);

    // synthetic observed z_b: a conditional truth field plus noise
    let mut za_cond = Conditioning::empty();
    za_cond.push_point_data(&za);
    let truth = simulate_conditional(&grid, &theta, &za_cond, truth_seed)?;
    let clean = evaluate(&model, &truth)?;
    let noisy = add_observation_error(&clean, &vec![noise_sd; clean.len()], truth_seed ^ 0xabcd)?;
    let zb = TypeBData::with_uniform_noise(noisy, noise_sd)?;

    // conjugate reference: y | z_a is Gaussian on the grid; anchors and
    // observations are linear reads of it
    let (mu, sigma) = condition_gaussian(&theta, &za_cond, &grid.cell_centers())?;
    let n = grid.cell_count();
    let anchor_cells: Vec<usize> = anchor_locs.iter().map(|l| grid.nearest_cell(l).0).collect();
    let s = selection_matrix(&anchor_cells, n);
    let w = selection_matrix(&obs_cells, n);
    let c_aa = &s * &sigma * s.transpose();
    let c_az = &s * &sigma * w.transpose();
    let mut c_zz = &w * &sigma * w.transpose();
    for i in 0..c_zz.nrows() {
        c_zz[(i, i)] += noise_sd * noise_sd;
    }
    let mu_a = &s * &mu;
    let mu_z = &w * &mu;
    let chol = nalgebra::Cholesky::new(c_zz)
        .ok_or_else(|| crate::Error::Conditioning("benchmark covariance not PD".into()))?;
    let resid = DVector::from_column_slice(&zb.values) - mu_z;
    let post_mean = &mu_a + &c_az * chol.solve(&resid);
    let post_cov = &c_aa - &c_az * chol.solve(&c_az.transpose());

    Ok(LinearGaussianProblem {
        grid,
        theta,
        za,
        anchor_locs,
        model,
        zb,
        posterior_mean: post_mean.iter().copied().collect(),
        posterior_sd: (0..anchor_cells.len())
            .map(|i| post_cov[(i, i)].sqrt())
            .collect(),
    })
}

fn selection_matrix(cells: &[usize], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(cells.len(), n);
    for (i, &c) in cells.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    m
}

/// Prior holding every structural parameter fixed at `theta`.
pub fn fixed_theta_prior(theta: &StructuralParams) -> PriorSpec {
    PriorSpec {
        beta: theta
            .beta
            .iter()
            .map(|&b| MarginalPrior::Fixed { value: b })
            .collect(),
        sigma2: MarginalPrior::Fixed {
            value: theta.sigma2,
        },
        phi: MarginalPrior::Fixed { value: theta.phi },
        lambda: MarginalPrior::Fixed {
            value: theta.lambda,
        },
        kappa_set: vec![theta.kappa],
        nugget: theta.nugget,
        trend: theta.trend,
        type_a_noise_var: 0.0,
    }
}

/// The 16x16 synthetic Darcy benchmark: a lognormal conductivity truth,
/// two direct measurements, nine observed heads, coverage anchors, and a
/// deterministic set of held-out truth cells for scoring.
pub struct DarcyBenchmark {
    pub grid: Grid,
    pub truth: Field,
    pub za: TypeAData,
    pub dataset: Dataset,
    pub prior: PriorSpec,
    pub anchor_locs: Vec<Location>,
    pub held_out_cells: Vec<usize>,
}

pub fn darcy_benchmark_16x16(master_seed: u64) -> Result<DarcyBenchmark> {
    let grid = Grid::new([16, 16], [1.0, 1.0], Location::new(0.0, 0.0))?;
    let theta_truth = StructuralParams::isotropic(0.0, 1.0, 5.0, 0.0, 1.5);
    let truth = simulate_unconditional(&grid, &theta_truth, seed::derive(master_seed, "truth"))?;

    let za_locs = vec![Location::new(2.0, 13.0), Location::new(13.0, 2.0)];
    let za_values: Vec<f64> = za_locs.iter().map(|l| truth.value_near(l)).collect();
    let za = PointData::new(za_locs, za_values, 0.0)?;

    let wells: Vec<Location> = [3.0, 8.0, 13.0]
        .iter()
        .flat_map(|&y| [3.0, 8.0, 13.0].iter().map(move |&x| Location::new(x, y)))
        .collect();
    let model = ForwardModel::Darcy2d(DarcyObserver {
        bc: BoundarySpec::left_right(1.0, 0.0),
        wells,
        include_mean_head: false,
    });
    let noise_sd = 0.02;
    let clean = evaluate(&model, &truth)?;
    let observed = add_observation_error(
        &clean,
        &vec![noise_sd; clean.len()],
        seed::derive(master_seed, "zb-noise"),
    )?;
    let dataset = Dataset {
        model,
        data: TypeBData::with_uniform_noise(observed, noise_sd)?,
    };

    let prior = PriorSpec {
        beta: vec![MarginalPrior::Uniform { lo: -2.0, hi: 2.0 }],
        sigma2: MarginalPrior::LogUniform { lo: 0.3, hi: 3.0 },
        phi: MarginalPrior::LogUniform { lo: 2.0, hi: 10.0 },
        lambda: MarginalPrior::Fixed { value: 0.0 },
        kappa_set: vec![0.5, 1.5, 2.5],
        nugget: 0.0,
        trend: TrendBasis::Constant,
        type_a_noise_var: 0.0,
    };

    let anchor_locs = place_anchors(&grid, 6, &AnchorStrategy::Coverage, &za.locations)?;

    // held-out scoring cells: a deterministic stride over the grid,
    // skipping conditioning cells
    let mut reserved: Vec<usize> = za
        .locations
        .iter()
        .map(|l| grid.nearest_cell(l).0)
        .collect();
    reserved.extend(anchor_locs.iter().map(|l| grid.nearest_cell(l).0));
    let held_out_cells: Vec<usize> = (0..grid.cell_count())
        .filter(|c| c % 11 == 5 && !reserved.contains(c))
        .take(20)
        .collect();

    Ok(DarcyBenchmark {
        grid,
        truth,
        za,
        dataset,
        prior,
        anchor_locs,
        held_out_cells,
    })
}
