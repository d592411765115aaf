//! End-to-end check of the importance-sampling posterior against the
//! closed-form conjugate-Gaussian posterior.
//!
//! With a fixed structural parameter vector, a linear observer, and
//! Gaussian observation noise, everything is jointly Gaussian and the
//! posterior of the anchor values given both data types has an exact
//! expression. The nonparametric pipeline must reproduce its mean and
//! spread.

use anchorinv::benchmarks::{fixed_theta_prior, linear_gaussian_problem};
use anchorinv::fieldsim::{condition_gaussian, Conditioning};
use anchorinv::inversion::{assimilate_joint, Dataset, InversionSettings, PipelineSpec};

#[test]
fn importance_posterior_matches_conjugate_oracle() {
    let problem = linear_gaussian_problem(0.25, 424242).unwrap();
    for (i, m) in problem.posterior_mean.iter().enumerate() {
        assert!(
            m.abs() > 0.5,
            "anchor {i}: analytic mean {m} too close to zero for a relative check"
        );
    }
    let prior = fixed_theta_prior(&problem.theta);
    let datasets = [Dataset {
        model: problem.model.clone(),
        data: problem.zb.clone(),
    }];
    let spec = PipelineSpec {
        grid: &problem.grid,
        prior: &prior,
        za: &problem.za,
        datasets: &datasets,
        settings: InversionSettings {
            candidates: 300,
            realizations: 1200,
            k: None,
        },
        dump_clouds: None,
    };
    let posterior = assimilate_joint(&spec, &problem.anchor_locs, 77).unwrap();
    assert!(
        posterior.ess > 10.0,
        "ESS {} too small to trust the estimate",
        posterior.ess
    );

    let est_mean = posterior.anchor_posterior_mean();
    let est_sd = posterior.anchor_posterior_sd();
    for i in 0..2 {
        let rel_mean =
            (est_mean[i] - problem.posterior_mean[i]).abs() / problem.posterior_mean[i].abs();
        assert!(
            rel_mean < 0.15,
            "anchor {i}: mean {} vs analytic {} ({:.1}% off)",
            est_mean[i],
            problem.posterior_mean[i],
            100.0 * rel_mean
        );
        let rel_sd = (est_sd[i] - problem.posterior_sd[i]).abs() / problem.posterior_sd[i];
        assert!(
            rel_sd < 0.30,
            "anchor {i}: sd {} vs analytic {} ({:.1}% off)",
            est_sd[i],
            problem.posterior_sd[i],
            100.0 * rel_sd
        );
    }
}

#[test]
fn posterior_tightens_on_the_anchor_prior() {
    // conditioning on z_b must shrink anchor uncertainty relative to the
    // prior spread p(anchor | z_a)
    let problem = linear_gaussian_problem(0.25, 99).unwrap();
    let mut za_cond = Conditioning::empty();
    za_cond.push_point_data(&problem.za);
    let (_, prior_cov) =
        condition_gaussian(&problem.theta, &za_cond, &problem.anchor_locs).unwrap();
    for i in 0..2 {
        assert!(
            problem.posterior_sd[i] < prior_cov[(i, i)].sqrt(),
            "anchor {i}: posterior sd not below prior sd"
        );
    }
}
