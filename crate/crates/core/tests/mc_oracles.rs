//! Monte Carlo checks of the simulation machinery against closed-form
//! (kriging) oracles, and solver checks against refined-grid references.

use anchorinv::fieldsim::{
    condition_gaussian, sample_anchor_prior, simulate_unconditional, AnchorSet,
    ConditionalSimulator, Conditioning, Field, PointData,
};
use anchorinv::forward::{darcy2d_solve, BoundarySpec, ForwardModel, LinearObserver, TypeBData};
use anchorinv::geostat::{covariance_matrix, Grid, Location, StructuralParams};
use anchorinv::likelihood;
use anchorinv::seed;

#[test]
fn unconditional_mean_matches_trend() {
    let grid = Grid::new([8, 8], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
    let theta = StructuralParams::isotropic(1.0, 0.49, 2.0, 0.0, 1.5);
    let n = 2000;
    let mut sums = vec![0.0; 64];
    for i in 0..n {
        let f = simulate_unconditional(&grid, &theta, seed::derive_indexed(10, "draw", i)).unwrap();
        for (s, v) in sums.iter_mut().zip(f.values.iter()) {
            *s += v;
        }
    }
    let bound = 4.0 * theta.sigma2.sqrt() / (n as f64).sqrt();
    for (cell, s) in sums.iter().enumerate() {
        let mean = s / n as f64;
        assert!(
            (mean - 1.0).abs() <= bound,
            "cell {cell}: sample mean {mean} outside 1 +/- {bound}"
        );
    }
}

#[test]
fn unconditional_covariance_matches_model() {
    let grid = Grid::new([8, 8], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
    let theta = StructuralParams::isotropic(0.0, 1.0, 3.0, 0.0, 0.5);
    let n = 5000;
    let cells = grid.cell_count();
    let mut sum = vec![0.0; cells];
    let mut cross = vec![0.0; cells * cells];
    for i in 0..n {
        let f = simulate_unconditional(&grid, &theta, seed::derive_indexed(11, "draw", i)).unwrap();
        for a in 0..cells {
            sum[a] += f.values[a];
            for b in a..cells {
                cross[a * cells + b] += f.values[a] * f.values[b];
            }
        }
    }
    let model = covariance_matrix(&grid.cell_centers(), &theta).unwrap();
    let mut max_err = 0.0f64;
    for a in 0..cells {
        for b in a..cells {
            let emp = cross[a * cells + b] / n as f64 - (sum[a] / n as f64) * (sum[b] / n as f64);
            max_err = max_err.max((emp - model[(a, b)]).abs());
        }
    }
    assert!(
        max_err < 0.1 * theta.sigma2,
        "max covariance-entry error {max_err} vs bound {}",
        0.1 * theta.sigma2
    );
}

#[test]
fn conditional_draw_moments_match_kriging_oracle() {
    let grid = Grid::line(10, 1.0).unwrap();
    let theta = StructuralParams::isotropic(0.5, 1.2, 2.5, 0.0, 0.5);
    let mut cond = Conditioning::empty();
    cond.push_point_data(
        &PointData::new(
            vec![Location::at(2.0), Location::at(7.0)],
            vec![1.6, -0.4],
            0.0,
        )
        .unwrap(),
    );
    let (oracle_mean, oracle_cov) =
        condition_gaussian(&theta, &cond, &grid.cell_centers()).unwrap();

    let sim = ConditionalSimulator::new(&grid, &theta, &cond).unwrap();
    let n = 3000;
    let mut sum = [0.0; 10];
    let mut sumsq = [0.0; 10];
    for i in 0..n {
        let f = sim.simulate(seed::derive_indexed(12, "draw", i));
        for c in 0..10 {
            sum[c] += f.values[c];
            sumsq[c] += f.values[c] * f.values[c];
        }
    }
    for c in 0..10 {
        let mean = sum[c] / n as f64;
        let var = sumsq[c] / n as f64 - mean * mean;
        let sd = oracle_cov[(c, c)].sqrt();
        let mean_band = 4.0 * sd / (n as f64).sqrt() + 1e-12;
        assert!(
            (mean - oracle_mean[c]).abs() <= mean_band,
            "cell {c}: mean {mean} vs oracle {} (band {mean_band})",
            oracle_mean[c]
        );
        let var_band = 4.0 * oracle_cov[(c, c)] * (2.0 / (n as f64 - 1.0)).sqrt() + 1e-12;
        assert!(
            (var - oracle_cov[(c, c)]).abs() <= var_band,
            "cell {c}: var {var} vs oracle {} (band {var_band})",
            oracle_cov[(c, c)]
        );
    }
}

#[test]
fn conditional_draws_with_nugget_and_noise_match_oracle_variance() {
    let grid = Grid::line(6, 1.0).unwrap();
    let theta = StructuralParams::isotropic(0.0, 1.0, 2.0, 0.2, 1.5);
    let mut cond = Conditioning::empty();
    cond.push_point_data(&PointData::new(vec![Location::at(3.0)], vec![1.0], 0.1).unwrap());
    let (oracle_mean, oracle_cov) =
        condition_gaussian(&theta, &cond, &grid.cell_centers()).unwrap();
    let sim = ConditionalSimulator::new(&grid, &theta, &cond).unwrap();
    let n = 4000;
    let mut sum = [0.0; 6];
    let mut sumsq = [0.0; 6];
    for i in 0..n {
        let f = sim.simulate(seed::derive_indexed(13, "draw", i));
        for c in 0..6 {
            sum[c] += f.values[c];
            sumsq[c] += f.values[c] * f.values[c];
        }
    }
    for c in 0..6 {
        let mean = sum[c] / n as f64;
        let var = sumsq[c] / n as f64 - mean * mean;
        let band_m = 4.0 * oracle_cov[(c, c)].sqrt() / (n as f64).sqrt();
        let band_v = 4.0 * oracle_cov[(c, c)] * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((mean - oracle_mean[c]).abs() <= band_m, "cell {c} mean");
        assert!(
            (var - oracle_cov[(c, c)]).abs() <= band_v,
            "cell {c} variance"
        );
    }
}

#[test]
fn anchor_prior_moments_match_oracle() {
    let theta = StructuralParams::isotropic(0.3, 0.8, 3.0, 0.0, 1.5);
    let za = PointData::new(
        vec![Location::at(0.0), Location::at(4.0)],
        vec![1.0, 0.2],
        0.0,
    )
    .unwrap();
    let anchor = [Location::at(1.5)];
    let mut cond = Conditioning::empty();
    cond.push_point_data(&za);
    let (mean, cov) = condition_gaussian(&theta, &cond, &anchor).unwrap();

    let n = 5000;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n {
        let v = sample_anchor_prior(&theta, &za, &anchor, seed::derive_indexed(14, "draw", i))
            .unwrap()[0];
        sum += v;
        sumsq += v * v;
    }
    let emp_mean = sum / n as f64;
    let emp_var = sumsq / n as f64 - emp_mean * emp_mean;
    assert!((emp_mean - mean[0]).abs() <= 4.0 * cov[(0, 0)].sqrt() / (n as f64).sqrt());
    assert!((emp_var - cov[(0, 0)]).abs() <= 4.0 * cov[(0, 0)] * (2.0 / (n as f64 - 1.0)).sqrt());
}

#[test]
fn darcy_refined_grid_agreement() {
    // the same continuum conductivity solved on 16x16 and on a 4x refined
    // 64x64 grid; well heads must agree within 2% of the head drop
    let coarse_grid = Grid::new([16, 16], [1.0, 1.0], Location::new(0.0, 0.0)).unwrap();
    let theta = StructuralParams::isotropic(0.0, 1.0, 6.0, 0.0, 1.5);
    let log_k = simulate_unconditional(&coarse_grid, &theta, 2718).unwrap();
    let k_coarse = Field::new(coarse_grid.clone(), log_k.values.map(|v| v.exp())).unwrap();

    let fine_grid = Grid::new([64, 64], [0.25, 0.25], Location::new(-0.375, -0.375)).unwrap();
    let mut fine_values = nalgebra::DVector::zeros(64 * 64);
    for iy in 0..64 {
        for ix in 0..64 {
            fine_values[iy * 64 + ix] = k_coarse.values[(iy / 4) * 16 + ix / 4];
        }
    }
    let k_fine = Field::new(fine_grid, fine_values).unwrap();

    let bc = BoundarySpec::left_right(1.0, 0.0);
    let h_coarse = darcy2d_solve(&k_coarse, &bc).unwrap();
    let h_fine = darcy2d_solve(&k_fine, &bc).unwrap();

    let wells = [
        Location::new(3.0, 3.0),
        Location::new(12.0, 3.0),
        Location::new(8.0, 8.0),
        Location::new(3.0, 12.0),
        Location::new(12.0, 12.0),
    ];
    for w in &wells {
        let hc = h_coarse.value_near(w);
        let hf = h_fine.value_near(w);
        assert!(
            (hc - hf).abs() <= 0.02,
            "well ({}, {}): coarse {hc} vs fine {hf}",
            w.x,
            w.y
        );
    }
}

#[test]
fn likelihood_estimate_stable_under_doubling_n() {
    // calibrated Gaussian case: Z ~ N(0,1) through an identity observer;
    // doubling n must move the estimate by no more than the estimator's
    // own sampling noise (~ f / sqrt(k))
    let grid = Grid::line(1, 1.0).unwrap();
    let theta = StructuralParams::isotropic(0.0, 1.0, 1.0, 0.0, 0.5);
    let anchors = AnchorSet::from_type_a(&PointData::empty());
    let model = ForwardModel::LinearObserver(LinearObserver::selecting_cells(&[0], 1).unwrap());
    let zb = TypeBData::with_uniform_noise(vec![0.0], 0.0).unwrap();
    let truth = 1.0 / (2.0 * std::f64::consts::PI).sqrt();

    let (n1, n2) = (2000usize, 4000usize);
    let k1 = likelihood::default_k(n1) as f64;
    let k2 = likelihood::default_k(n2) as f64;
    let predicted_sd = truth * (1.0 / k1 + 1.0 / k2).sqrt();

    let reps = 20;
    let mut abs_changes = Vec::with_capacity(reps);
    for rep in 0..reps {
        let s = seed::derive_indexed(5050, "rep", rep as u64);
        let e1 = likelihood::estimate_likelihood(&grid, &theta, &anchors, &model, &zb, n1, None, s)
            .unwrap();
        let e2 = likelihood::estimate_likelihood(
            &grid,
            &theta,
            &anchors,
            &model,
            &zb,
            n2,
            None,
            seed::derive(s, "doubled"),
        )
        .unwrap();
        abs_changes.push((e1.value - e2.value).abs());
    }
    let mean_change = abs_changes.iter().sum::<f64>() / reps as f64;
    let within = abs_changes
        .iter()
        .filter(|c| **c <= 2.0 * predicted_sd)
        .count();
    assert!(
        mean_change <= predicted_sd,
        "mean |change| {mean_change} exceeds predicted sampling noise {predicted_sd}"
    );
    assert!(
        within >= reps - 2,
        "only {within}/{reps} runs within twice the predicted noise"
    );
}
