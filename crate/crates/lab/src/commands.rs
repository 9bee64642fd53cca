//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use gyroshe_core::correlation::{validate, SpatialProfile};
use gyroshe_core::dcoeff::{
    coefficient_profile, mc_work_oracle, richardson_coefficient, scaling_exponent, QuadratureOptions,
};
use gyroshe_core::field::{empirical_correlation, empirical_mean};
use gyroshe_core::harness::{compare, run_convergence_study_with, ConvergenceRow};
use gyroshe_core::kinetics::{gyro_average_histogram, simulate_ensemble, InitialDistribution, PushConfig};
use gyroshe_core::math::Vec2;
use gyroshe_core::she::{delta_profile, sampled_profile, self_similar_fit, solve};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfigFile;
use crate::error::LabError;
use crate::io::{self, num, Manifest};

#[derive(Debug, Parser)]
#[command(name = "gyroshe", version, about = "Gyrokinetic SHE diffusion-limit laboratory")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the diffusion coefficient a(e).
    Coeff {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated energies.
        #[arg(long, value_delimiter = ',', required = true)]
        e: Vec<f64>,
        /// Add the Monte Carlo work-integral estimate.
        #[arg(long)]
        mc: bool,
        /// Window N of the work-integral oracle.
        #[arg(long, default_value_t = 8)]
        window: u32,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Check the synthesized field against its target correlation.
    FieldValidate {
        #[arg(long)]
        config: PathBuf,
        /// Lags per axis of the (tau, x1) grid.
        #[arg(long, default_value_t = 5)]
        lags: usize,
        #[arg(long, default_value_t = 400)]
        realizations: usize,
    },
    /// Kinetic ensemble at one epsilon.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
    /// Solve the SHE limit equation.
    She {
        #[arg(long)]
        config: PathBuf,
    },
    /// Distances between the final-time profiles of two CSV files.
    Compare { a: PathBuf, b: PathBuf },
    /// Full kinetic-vs-SHE convergence study.
    Study {
        #[arg(long)]
        config: PathBuf,
    },
    /// Self-similar exponent beta = 2/(4 - alpha).
    Scaling {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
    },
}

pub fn run(cli: Cli) -> Result<(), LabError> {
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let start = Instant::now();
    match cli.command {
        Command::Coeff { config, e, mc, window, samples } => coeff(&config, &e, mc, window, samples, start),
        Command::FieldValidate { config, lags, realizations } => field_validate(&config, lags, realizations, start),
        Command::Simulate { config, epsilon } => simulate(&config, epsilon, start),
        Command::She { config } => she(&config, start),
        Command::Compare { a, b } => compare_files(&a, &b),
        Command::Study { config } => study(&config, start),
        Command::Scaling { alpha } => {
            let beta = scaling_exponent(alpha).map_err(|e| LabError::Validation(format!("alpha: {e}")))?;
            println!("{}", json!({ "alpha": alpha, "beta": beta }));
            Ok(())
        }
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn coeff(
    config: &Path,
    energies: &[f64],
    mc: bool,
    window: u32,
    samples: usize,
    start: Instant,
) -> Result<(), LabError> {
    let cfg = RunConfigFile::load(config)?;
    let mut grid = energies.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let model = cfg.model()?;
    let n = cfg.n()?;
    let opts = QuadratureOptions::default();
    let table = coefficient_profile(&model, &grid, n, &opts)?;
    let mut rows = Vec::new();
    for (&e, &a) in table.e_values().iter().zip(table.a_values()) {
        rows.push(vec![num(e), Some("quadrature".into()), num(a), None]);
    }
    if let SpatialProfile::PowerLaw { alpha } = cfg.spatial()? {
        let k = richardson_coefficient(&cfg.envelope()?, alpha, n, &opts)?;
        for &e in &grid {
            rows.push(vec![num(e), Some("closed_form".into()), num(k * e.powf(0.5 * alpha)), None]);
        }
    }
    let mut manifest = Manifest::new("coeff", Some(&cfg));
    if mc {
        let spec = cfg.field_spec()?;
        let seed = spec.master_seed();
        for &e in &grid {
            let est = mc_work_oracle(&spec, e, n, window, samples, seed)?;
            rows.push(vec![num(e), Some("monte_carlo".into()), num(est.estimate), num(est.stderr)]);
        }
        manifest.seeds.extra.push(("work_oracle".into(), seed));
    }
    let dir = cfg.output_dir();
    let path = dir.join("coeff.csv");
    io::write_csv(&path, &io::COEFF_HEADER, rows)?;
    manifest.outputs.push(path.clone());
    let m = manifest.finish(start.elapsed(), &dir, "coeff")?;
    announce(&[path, m]);
    Ok(())
}

#[derive(Serialize)]
struct FieldReport {
    mean: f64,
    mean_stderr: f64,
    mean_ok: bool,
    lags_within_3_stderr: usize,
    lags: usize,
    model_checks: Vec<(String, bool, f64, f64)>,
    passed: bool,
}

fn field_validate(config: &Path, lags: usize, realizations: usize, start: Instant) -> Result<(), LabError> {
    let cfg = RunConfigFile::load(config)?;
    let spec = cfg.field_spec()?;
    if lags < 2 {
        return Err(LabError::Validation("lags: at least 2 per axis".into()));
    }
    let l = spec.block_length();
    let ell = spec.spatial().length_scale();
    let mut grid = Vec::new();
    for i in 0..lags {
        for j in 0..lags {
            let tau = 1.25 * l * i as f64 / (lags - 1) as f64;
            let x1 = 2.0 * ell * j as f64 / (lags - 1) as f64;
            grid.push((tau, Vec2::new(x1, 0.0)));
        }
    }
    let est = empirical_correlation(&spec, &grid, realizations)?;
    let (mean, mean_se) = empirical_mean(&spec, realizations)?;
    let report_checks = validate(spec.correlation(), 200, spec.master_seed());
    let ok_lags = est.iter().filter(|c| (c.estimate - c.target).abs() <= 3.0 * c.stderr).count();
    let mean_ok = mean.abs() <= 4.0 * mean_se;
    let report = FieldReport {
        mean,
        mean_stderr: mean_se,
        mean_ok,
        lags_within_3_stderr: ok_lags,
        lags: est.len(),
        model_checks: report_checks
            .checks
            .iter()
            .map(|c| (c.name.to_string(), c.passed, c.max_residual, c.tolerance))
            .collect(),
        passed: mean_ok && ok_lags == est.len() && report_checks.all_passed(),
    };
    let dir = cfg.output_dir();
    let csv = dir.join("field_correlation.csv");
    io::write_csv(
        &csv,
        &io::CORRELATION_HEADER,
        est.iter().map(|c| vec![num(c.tau), num(c.x.x), num(c.x.y), num(c.target), num(c.estimate), num(c.stderr)]),
    )?;
    let json_path = dir.join("field_validation.json");
    io::write_json(&json_path, &report)?;
    let mut manifest = Manifest::new("field-validate", Some(&cfg));
    manifest.outputs = vec![csv.clone(), json_path.clone()];
    if !report.passed {
        manifest.status = "failed".into();
    }
    let m = manifest.finish(start.elapsed(), &dir, "field_validate")?;
    announce(&[csv, json_path, m]);
    if report.passed {
        Ok(())
    } else {
        Err(LabError::CheckFailed(format!(
            "field validation: mean_ok={mean_ok}, {ok_lags}/{} lags within 3 stderr",
            est.len()
        )))
    }
}

fn simulate(config: &Path, eps: f64, start: Instant) -> Result<(), LabError> {
    let cfg = RunConfigFile::load(config)?;
    let exp = cfg.experiment()?;
    if !(eps > 0.0) {
        return Err(LabError::Validation("epsilon: must be positive".into()));
    }
    let push = PushConfig::with_steps_per_gyro(eps, exp.steps_per_gyro, exp.t_end(), exp.output_times.clone());
    push.validate(eps)?;
    let cells = exp.grid.cells();
    let mut per_time: Vec<Vec<Vec<f64>>> = vec![Vec::new(); exp.output_times.len()];
    let mut out_of_range = 0usize;
    let results: Vec<_> = {
        use rayon::prelude::*;
        (0..exp.realizations)
            .into_par_iter()
            .map(|r| {
                simulate_ensemble(&exp.init, &exp.field, eps, exp.n, exp.particles, &push, exp.master_seed, r as u64)
            })
            .collect()
    };
    for rec in results {
        for (i, snap) in rec?.into_iter().enumerate() {
            let h = gyro_average_histogram(&snap.energies, exp.grid.e_max(), cells)?;
            out_of_range += h.out_of_range;
            per_time[i].push(h.profile.density);
        }
    }
    let dir = cfg.output_dir();
    let path = dir.join(format!("simulate_eps{eps}.csv"));
    let mut rows = Vec::new();
    for (t, hists) in exp.output_times.iter().zip(&per_time) {
        let r = hists.len() as f64;
        let mut mean = vec![0.0; cells];
        for h in hists {
            mean.iter_mut().zip(h).for_each(|(m, x)| *m += x / r);
        }
        let se: Vec<f64> = (0..cells)
            .map(|k| (hists.iter().map(|h| (h[k] - mean[k]).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt())
            .collect();
        let p = exp.grid.profile(mean)?;
        rows.extend(io::profile_rows(*t, &p, Some(&se)));
    }
    io::write_csv(&path, &io::PROFILE_HEADER, rows)?;
    let meta = dir.join(format!("simulate_eps{eps}.json"));
    io::write_json(
        &meta,
        &json!({
            "epsilon": eps,
            "particles": exp.particles,
            "realizations": exp.realizations,
            "out_of_range": out_of_range,
            "config_hash": cfg.hash(),
            "master_seed": exp.master_seed,
            "wall_time_seconds": start.elapsed().as_secs_f64(),
        }),
    )?;
    let mut manifest = Manifest::new("simulate", Some(&cfg));
    manifest.outputs = vec![path.clone(), meta.clone()];
    let m = manifest.finish(start.elapsed(), &dir, &format!("simulate_eps{eps}"))?;
    announce(&[path, meta, m]);
    Ok(())
}

fn she(config: &Path, start: Instant) -> Result<(), LabError> {
    let cfg = RunConfigFile::load(config)?;
    let grid = cfg.grid()?;
    let s = cfg.she.as_ref().expect("checked by grid()");
    let t_end = cfg.kinetics.as_ref().map(|k| k.t_end);
    let times = match (&cfg.outputs, t_end) {
        (Some(o), _) if !o.times.is_empty() => o.times.clone(),
        (_, Some(t)) => vec![t],
        _ => return Err(LabError::Validation("outputs.times: required without a [kinetics] section".into())),
    };
    let t_end = *times.last().unwrap();
    let points = s.coefficient_points.unwrap_or(121).max(2);
    let e_grid: Vec<f64> = (0..points).map(|i| grid.e_max() * i as f64 / (points - 1) as f64).collect();
    let mut table = coefficient_profile(&cfg.model()?, &e_grid, cfg.n()?, &QuadratureOptions::default())?
        .scaled(cfg.coefficient_scale());
    let mut flipped = false;
    if table.first_negative().is_some() && matches!(cfg.spatial()?, SpatialProfile::PowerLaw { .. }) {
        // a(e) = K e^{α/2} with K < 0: use the covariance C - f|x|^α, which flips the sign
        table = table.scaled(-1.0);
        flipped = true;
    }
    let init = match &cfg.kinetics {
        Some(_) => cfg.init()?,
        None => InitialDistribution::Delta { e0: 0.0 },
    };
    let initial = match init {
        InitialDistribution::Delta { e0 } => delta_profile(&grid, e0)?,
        other => sampled_profile(&grid, |e| other.density(e).unwrap_or(0.0))?,
    };
    let snaps = solve(&initial, &table, t_end, s.dt, &times)?;
    let dir = cfg.output_dir();
    let path = dir.join("she.csv");
    let rows = snaps.iter().flat_map(|sn| io::profile_rows(sn.time, &sn.profile, None));
    io::write_csv(&path, &io::SHE_HEADER, rows)?;
    let fit = self_similar_fit(&snaps, (times[0], t_end));
    let fit_json = match &fit {
        Ok(f) => {
            json!({ "beta_hat": f.beta, "stderr": f.stderr, "window": [f.window.0, f.window.1], "points": f.points })
        }
        Err(e) => json!({ "beta_hat": null, "stderr": null, "window": [times[0], t_end], "error": e.to_string() }),
    };
    let fit_path = dir.join("she_fit.json");
    io::write_json(&fit_path, &json!({ "fit": fit_json, "coefficient_sign_flipped": flipped }))?;
    let mut manifest = Manifest::new("she", Some(&cfg));
    manifest.outputs = vec![path.clone(), fit_path.clone()];
    let m = manifest.finish(start.elapsed(), &dir, "she")?;
    announce(&[path, fit_path, m]);
    Ok(())
}

fn compare_files(a: &Path, b: &Path) -> Result<(), LabError> {
    let pa = io::read_profiles(a)?;
    let pb = io::read_profiles(b)?;
    let (ta, p) = pa.last().expect("non-empty");
    let (tb, q) = pb.last().expect("non-empty");
    let d = compare(p, q)?;
    println!("{}", json!({ "time_a": ta, "time_b": tb, "l1": d.l1, "l2": d.l2, "w1": d.w1 }));
    Ok(())
}

fn study_rows(row: &ConvergenceRow) -> Vec<Vec<Option<String>>> {
    row.per_time
        .iter()
        .map(|t| {
            vec![
                num(row.epsilon),
                num(t.time),
                num(t.distances.l1),
                num(t.distances.l2),
                num(t.distances.w1),
                num(t.l1_stderr),
                num(row.stderr_budget),
                Some(row.out_of_range.to_string()),
            ]
        })
        .collect()
}

fn study(config: &Path, start: Instant) -> Result<(), LabError> {
    let cfg = RunConfigFile::load(config)?;
    let exp = cfg.experiment()?;
    let dir = cfg.output_dir();
    let mut outputs = Vec::new();
    let mut table_rows: Vec<Vec<Option<String>>> = Vec::new();
    let study_csv = dir.join("study.csv");
    let mut write_err: Option<LabError> = None;
    // rows are persisted as soon as each epsilon finishes
    let mut on_row = |row: &ConvergenceRow, _: &[gyroshe_core::she::Snapshot]| {
        let path = dir.join(format!("kinetic_eps{}.csv", row.epsilon));
        let rows = row.kinetic.iter().flat_map(|(t, p, se)| io::profile_rows(*t, p, Some(se)));
        let res = io::write_csv(&path, &io::PROFILE_HEADER, rows).and_then(|_| {
            table_rows.extend(study_rows(row));
            io::write_csv(&study_csv, &io::STUDY_HEADER, table_rows.clone())
        });
        match res {
            Ok(()) => outputs.push(path),
            Err(e) => {
                write_err.get_or_insert(e);
            }
        }
    };
    let report = run_convergence_study_with(&exp, &mut on_row);
    if let Some(e) = write_err {
        return Err(e);
    }
    let report = report?;
    let she_path = dir.join("she_reference.csv");
    io::write_csv(
        &she_path,
        &io::SHE_HEADER,
        report.reference.iter().flat_map(|s| io::profile_rows(s.time, &s.profile, None)),
    )?;
    let report_path = dir.join("study_report.json");
    let rows_json: Vec<_> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "epsilon": r.epsilon,
                "l1": r.distances.l1,
                "l2": r.distances.l2,
                "w1": r.distances.w1,
                "l1_stderr": r.l1_stderr,
                "stderr_budget": r.stderr_budget,
                "out_of_range": r.out_of_range,
            })
        })
        .collect();
    io::write_json(
        &report_path,
        &json!({
            "note": "L1/L2/W1 between gyro-averaged energy densities are a finite-sample surrogate for the weak-L2 topology of the limit theorem",
            "comparison_time": exp.t_end(),
            "coefficient_scale": exp.coefficient_scale,
            "strictly_decreasing": report.strictly_decreasing(),
            "rows": rows_json,
        }),
    )?;
    outputs.extend([study_csv, she_path, report_path]);
    let mut manifest = Manifest::new("study", Some(&cfg));
    manifest.outputs = outputs.clone();
    let m = manifest.finish(start.elapsed(), &dir, "study")?;
    outputs.push(m);
    announce(&outputs);
    Ok(())
}
