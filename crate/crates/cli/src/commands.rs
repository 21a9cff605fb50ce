use std::path::Path;

use lapden::data_io::{read_csv_1d, read_pgm, write_csv_1d, write_pgm, write_svg_plot, PlotSpec, Series};
use lapden::experiment::{run_experiment, ExperimentConfig, Figure};
use lapden::nl_filter::{denoise_1d, denoise_2d, FilterParams, LambdaRule, RunTrace};
use lapden::report::{params_map, RunReport, TraceSummary};
use lapden::signals::{compute_metrics, default_tau, Sampled};
use lapden::tv_baseline::{tv_denoise_1d, tv_denoise_2d, TvParams};
use lapden::{Error, Field2D, Result, Signal1D};
use serde_json::{json, Map, Value};

use crate::{ExperimentArgs, Filter2dArgs, FilterArgs, IoArgs, TvArgs};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn load_1d(path: &Path, spacing: Option<f64>) -> Result<Signal1D> {
    let s = read_csv_1d(path)?;
    match spacing {
        Some(h) => Signal1D::new(s.values, h),
        None => Ok(s),
    }
}

fn load_2d(path: &Path, spacing: Option<f64>) -> Result<Field2D> {
    let f = read_pgm(path)?;
    Field2D::new(f.values, f.rows, f.cols, spacing.unwrap_or(1.0))
}

fn filter_params(a: &FilterArgs, threads: usize) -> Result<FilterParams> {
    let lambda = match (a.lambda, a.delta) {
        (Some(_), Some(_)) => return Err(Error::InvalidParams("--lambda and --delta are mutually exclusive".into())),
        (_, Some(d)) => LambdaRule::Adaptive { target_delta: d },
        (l, None) => LambdaRule::Fixed(l.unwrap_or(1.0)),
    };
    let params = FilterParams {
        lambda,
        epsilon: a.epsilon,
        p: a.p,
        dt: a.io.dt,
        max_iters: a.io.iters,
        tol: a.io.tol,
        solver: a.solver.into(),
        threads,
    };
    params.validate()?;
    Ok(params)
}

fn tv_params(a: &TvArgs, threads: usize) -> Result<TvParams> {
    let params = TvParams {
        lambda: a.lambda,
        beta: a.beta,
        dt: a.io.dt,
        max_iters: a.io.iters,
        tol: a.io.tol,
        threads,
    };
    params.validate()?;
    Ok(params)
}

fn plot(path: &Path, title: &str, noisy: &[f64], restored: &[f64]) -> Result<()> {
    let spec = PlotSpec {
        width_px: 800,
        height_px: 400,
        title: title.into(),
        series: vec![
            Series { label: "noisy".into(), color: "#d62728".into(), values: noisy.to_vec() },
            Series { label: "restored".into(), color: "#1f77b4".into(), values: restored.to_vec() },
        ],
    };
    write_svg_plot(path, &spec)
}

/// Middle row of an image, for the profile plot.
fn middle_row(f: &Field2D) -> &[f64] {
    let i = f.rows / 2;
    &f.values[i * f.cols..(i + 1) * f.cols]
}

struct Outcome<'a, T> {
    command: &'a str,
    method: &'a str,
    params: Value,
    io: &'a IoArgs,
    noisy: &'a T,
    restored: &'a T,
    trace: &'a RunTrace,
}

fn finish<T: Sampled>(o: Outcome<'_, T>, clean: Option<T>) -> Result<()> {
    let mut artifacts = vec![o.io.output.display().to_string()];
    if let Some(p) = &o.io.plot {
        artifacts.push(p.display().to_string());
    }
    let (metrics_noisy, metrics_restored) = match &clean {
        Some(c) => {
            let tau = default_tau(c);
            (Some(compute_metrics(o.noisy, c, tau)?), Some(compute_metrics(o.restored, c, tau)?))
        }
        None => (None, None),
    };
    let mut params = Map::new();
    params.insert("input".into(), json!(o.io.input.display().to_string()));
    params.insert("threads".into(), json!(lapden::parallel::threads_from_env()));
    params.insert("method_params".into(), o.params);
    let report = RunReport {
        command: o.command.into(),
        method: o.method.into(),
        params,
        metrics_noisy,
        metrics_restored,
        trace_summary: TraceSummary::from(o.trace),
        artifact_paths: artifacts,
    };
    match &o.io.report {
        Some(path) => report.append_to(path),
        None => {
            println!("{}", report.to_json_line()?);
            Ok(())
        }
    }
}

pub fn denoise1d(a: &FilterArgs, threads: usize) -> Result<()> {
    let params = filter_params(a, threads)?;
    let noisy = load_1d(&a.io.input, a.io.spacing)?;
    let clean = a.io.clean.as_deref().map(|p| load_1d(p, a.io.spacing)).transpose()?;
    let (restored, trace) = denoise_1d(&noisy, &params)?;
    write_csv_1d(&a.io.output, &restored)?;
    if let Some(p) = &a.io.plot {
        plot(p, "new method", &noisy.values, &restored.values)?;
    }
    let o = Outcome {
        command: "denoise1d",
        method: "nl",
        params: Value::Object(params_map(&params)),
        io: &a.io,
        noisy: &noisy,
        restored: &restored,
        trace: &trace,
    };
    finish(o, clean)
}

pub fn denoise2d(a: &Filter2dArgs, threads: usize) -> Result<()> {
    let io = &a.filter.io;
    let params = filter_params(&a.filter, threads)?;
    let noisy = load_2d(&io.input, io.spacing)?;
    let clean = io.clean.as_deref().map(|p| load_2d(p, io.spacing)).transpose()?;
    let warm = a.warm_start.as_deref().map(|p| load_2d(p, io.spacing)).transpose()?;
    let (restored, trace) = denoise_2d(&noisy, &params, warm.as_ref())?;
    write_pgm(&io.output, &restored)?;
    if let Some(p) = &io.plot {
        plot(p, "new method, middle row", middle_row(&noisy), middle_row(&restored))?;
    }
    let o = Outcome {
        command: "denoise2d",
        method: "nl",
        params: Value::Object(params_map(&params)),
        io,
        noisy: &noisy,
        restored: &restored,
        trace: &trace,
    };
    finish(o, clean)
}

pub fn tv1d(a: &TvArgs, threads: usize) -> Result<()> {
    let params = tv_params(a, threads)?;
    let noisy = load_1d(&a.io.input, a.io.spacing)?;
    let clean = a.io.clean.as_deref().map(|p| load_1d(p, a.io.spacing)).transpose()?;
    let (restored, trace) = tv_denoise_1d(&noisy, &params)?;
    write_csv_1d(&a.io.output, &restored)?;
    if let Some(p) = &a.io.plot {
        plot(p, "TV", &noisy.values, &restored.values)?;
    }
    let o = Outcome {
        command: "tv1d",
        method: "tv",
        params: Value::Object(params_map(&params)),
        io: &a.io,
        noisy: &noisy,
        restored: &restored,
        trace: &trace,
    };
    finish(o, clean)
}

pub fn tv2d(a: &TvArgs, threads: usize) -> Result<()> {
    let params = tv_params(a, threads)?;
    let noisy = load_2d(&a.io.input, a.io.spacing)?;
    let clean = a.io.clean.as_deref().map(|p| load_2d(p, a.io.spacing)).transpose()?;
    let (restored, trace) = tv_denoise_2d(&noisy, &params)?;
    write_pgm(&a.io.output, &restored)?;
    if let Some(p) = &a.io.plot {
        plot(p, "TV, middle row", middle_row(&noisy), middle_row(&restored))?;
    }
    let o = Outcome {
        command: "tv2d",
        method: "tv",
        params: Value::Object(params_map(&params)),
        io: &a.io,
        noisy: &noisy,
        restored: &restored,
        trace: &trace,
    };
    finish(o, clean)
}

pub fn experiment(a: &ExperimentArgs, threads: usize) -> Result<()> {
    let fig: Figure = a.name.parse()?;
    let cfg = ExperimentConfig { seed: a.seed, n: a.n, outdir: a.outdir.clone(), threads };
    let out = run_experiment(fig, &cfg)?;
    for r in &out.reports {
        let m = r.metrics_restored.as_ref().expect("experiments always have a reference");
        println!(
            "{fig} {}: rel_err {:.5} plateau {:.3} curvature {:.3} iters {} converged {}",
            r.method, m.rel_err, m.plateau_fraction, m.curvature_mass, r.trace_summary.iters, r.trace_summary.converged
        );
    }
    println!("report: {}", out.report_path.display());
    Ok(())
}
