//! Post-run diagnostics: recount the ensemble from the raw CSV artifacts
//! and compare against the manifest.

use std::path::Path;

use anchorinv::error::{Error, Result};
use anchorinv::io::read_candidates_csv;

use crate::manifest::RunManifest;

pub fn cmd_diagnose(run_dir: &Path) -> Result<()> {
    let manifest = RunManifest::read(run_dir)?;
    let rows = read_candidates_csv(&run_dir.join("candidates.csv"))?;

    let weight_sum: f64 = rows.iter().map(|r| r.weight).sum();
    let sum_sq: f64 = rows.iter().map(|r| r.weight * r.weight).sum();
    let ess = if sum_sq > 0.0 {
        weight_sum * weight_sum / sum_sq
    } else {
        f64::NAN
    };
    let degenerate = rows.iter().filter(|r| r.degenerate).count();

    let mut kappa_marginal: Vec<(f64, f64)> = Vec::new();
    for r in &rows {
        match kappa_marginal.iter_mut().find(|(k, _)| *k == r.kappa) {
            Some((_, w)) => *w += r.weight,
            None => kappa_marginal.push((r.kappa, r.weight)),
        }
    }
    kappa_marginal.sort_by(|a, b| a.0.total_cmp(&b.0));

    println!("run directory      {}", run_dir.display());
    println!("config hash        sha256:{}", manifest.config_hash);
    println!("master seed        {}", manifest.master_seed);
    println!(
        "candidates         {} (N={} configured)",
        rows.len(),
        manifest.candidates
    );
    println!(
        "realizations / k   {} / {}",
        manifest.realizations, manifest.k
    );
    println!("weight sum         {weight_sum:.12}");
    println!("ESS                {ess:.3} (manifest {:.3})", manifest.ess);
    println!(
        "degenerate         {degenerate} (manifest {})",
        manifest.degenerate_count
    );
    println!("kappa marginal:");
    for (k, w) in &kappa_marginal {
        println!("  kappa {k:<6} weight {w:.6}");
    }
    if !manifest.dependence.is_empty() {
        println!("dependence scores:");
        for d in &manifest.dependence {
            println!(
                "  datasets {}-{}: score {:.4}, 95% null {:.4}{}",
                d.dataset_a,
                d.dataset_b,
                d.score,
                d.null_quantile_95,
                if d.exceeds_null { " (dependent)" } else { "" }
            );
        }
    }
    if let Some(sel) = &manifest.anchor_selection {
        println!(
            "anchor-count selection: chosen {}{}",
            sel.chosen,
            if sel.stabilized {
                ""
            } else {
                " (not stabilized)"
            }
        );
        for (count, rms) in &sel.trace {
            match rms {
                Some(r) => println!("  count {count}: rms-to-next {r:.6}"),
                None => println!("  count {count}: (last)"),
            }
        }
    }

    // the recount must agree with the manifest
    let mut mismatches = Vec::new();
    if (weight_sum - 1.0).abs() > 1e-9 {
        mismatches.push(format!("weights sum to {weight_sum}, expected 1"));
    }
    if (ess - manifest.ess).abs() > 1e-6 * manifest.ess.max(1.0) {
        mismatches.push(format!("recounted ESS {ess} vs manifest {}", manifest.ess));
    }
    if degenerate != manifest.degenerate_count {
        mismatches.push(format!(
            "recounted {degenerate} degenerate candidates vs manifest {}",
            manifest.degenerate_count
        ));
    }
    if rows.len() != manifest.candidates {
        mismatches.push(format!(
            "{} candidate rows vs configured {}",
            rows.len(),
            manifest.candidates
        ));
    }
    let kappa_ok = kappa_marginal.len() == manifest.kappa_marginal.len()
        && kappa_marginal
            .iter()
            .zip(&manifest.kappa_marginal)
            .all(|((ka, wa), (kb, wb))| ka == kb && (wa - wb).abs() < 1e-9);
    if !kappa_ok {
        mismatches.push("kappa marginal differs from manifest".into());
    }
    if mismatches.is_empty() {
        println!("recount: OK (CSV totals match the manifest)");
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "recount mismatch: {}",
            mismatches.join("; ")
        )))
    }
}
