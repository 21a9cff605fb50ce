//! Scaled reproductions of the one- and two-dimensional experiments: sample a
//! test function, add calibrated noise, restore it with the nonlinear filter
//! and with TV, and write data, plots and reports.
//!
//! All runs use unit grid spacing. The method settings were tuned by hand on
//! seed 1 and are recorded in every report.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::data_io::{write_csv_1d, write_pgm, write_svg_plot, PlotSpec, Series};
use crate::error::{Error, Result};
use crate::evolve::RunTrace;
use crate::grid::{Field2D, Signal1D};
use crate::nl_filter::{denoise_1d, denoise_2d, FilterParams, LambdaRule, Solver};
use crate::report::{params_map, RunReport, TraceSummary};
use crate::signals::{
    add_noise, compute_metrics, default_tau, sample_f2d, sample_f_sine, sample_g_jumps, Metrics, NoiseSpec, Sampled,
};
use crate::tv_baseline::{tv_denoise_1d, tv_denoise_2d, TvParams};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_N_1D: usize = 100;
pub const DEFAULT_N_2D: usize = 64;
pub const DELTA_1D: f64 = 0.09;
pub const DELTA_2D: f64 = 0.05;

const NOISY_COLOR: &str = "#d62728";
const RESTORED_COLOR: &str = "#1f77b4";
const CLEAN_COLOR: &str = "#000000";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Figure {
    /// Clean and noisy `f` and `g`.
    Fig1,
    /// Restorations of the noisy sine.
    Fig2,
    /// Restorations of the jump function.
    Fig3,
    /// Clean and noisy surface.
    Fig4,
    /// Restorations of the noisy surface.
    Fig5,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, Figure::Fig4 | Figure::Fig5)
    }

    pub fn default_n(self) -> usize {
        if self.is_2d() {
            DEFAULT_N_2D
        } else {
            DEFAULT_N_1D
        }
    }

    pub fn delta_rel(self) -> f64 {
        if self.is_2d() {
            DELTA_2D
        } else {
            DELTA_1D
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::params(format!("unknown figure {s:?}, expected one of fig1..fig5")))
    }
}

/// Tuned settings of both methods for one figure.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSettings {
    pub nl: FilterParams,
    pub tv: TvParams,
}

pub fn figure_settings(fig: Figure, threads: usize) -> MethodSettings {
    let tv = |lambda| TvParams { lambda, beta: 1e-6, threads, ..Default::default() };
    match fig {
        Figure::Fig1 | Figure::Fig2 => MethodSettings {
            nl: FilterParams {
                lambda: LambdaRule::Fixed(1.0),
                epsilon: 1e-2,
                p: 0.5,
                solver: Solver::SemiImplicit,
                threads,
                ..Default::default()
            },
            tv: tv(10.0),
        },
        // steeper flux saturation keeps the four jumps sharp
        Figure::Fig3 => MethodSettings {
            nl: FilterParams {
                lambda: LambdaRule::Fixed(10.0),
                epsilon: 1e-3,
                p: 0.75,
                solver: Solver::SemiImplicit,
                threads,
                ..Default::default()
            },
            tv: tv(10.0),
        },
        Figure::Fig4 | Figure::Fig5 => MethodSettings {
            nl: FilterParams { lambda: LambdaRule::Fixed(30.0), epsilon: 1e-2, p: 0.5, threads, ..Default::default() },
            tv: tv(30.0),
        },
    }
}

/// Clean samples of `f` on a unit grid.
pub fn clean_sine(n: usize) -> Result<Signal1D> {
    Signal1D::new(sample_f_sine(n)?.values, 1.0)
}

pub fn clean_jumps(n: usize) -> Result<Signal1D> {
    Signal1D::new(sample_g_jumps(n)?.values, 1.0)
}

pub fn clean_surface(n: usize) -> Result<Field2D> {
    Ok(Field2D { h: 1.0, ..sample_f2d(n)? })
}

#[derive(Clone, Debug)]
pub struct MethodResult<T> {
    pub restored: T,
    pub trace: RunTrace,
    pub metrics: Metrics,
}

/// Both restorations of one noisy instance.
#[derive(Clone, Debug)]
pub struct Comparison<T> {
    pub clean: T,
    pub noisy: T,
    pub tau: f64,
    pub metrics_noisy: Metrics,
    pub nl: MethodResult<T>,
    pub tv: MethodResult<T>,
}

type Runner<'a, T> = Box<dyn FnOnce(&T) -> Result<(T, RunTrace)> + Send + 'a>;

fn compare<T: Sampled + Send + Sync>(
    clean: T,
    noise: &NoiseSpec,
    nl: Runner<'_, T>,
    tv: Runner<'_, T>,
) -> Result<Comparison<T>> {
    let noisy = add_noise(&clean, noise)?;
    let tau = default_tau(&clean);
    // the methods share nothing, so they run side by side
    let (nl_out, tv_out) = std::thread::scope(|s| {
        let handle = s.spawn(|| tv(&noisy));
        let nl_out = nl(&noisy);
        (nl_out, handle.join().expect("tv run panicked"))
    });
    let finish = |(restored, trace): (T, RunTrace)| -> Result<MethodResult<T>> {
        let metrics = compute_metrics(&restored, &clean, tau)?;
        Ok(MethodResult { restored, trace, metrics })
    };
    let nl = finish(nl_out?)?;
    let tv = finish(tv_out?)?;
    let metrics_noisy = compute_metrics(&noisy, &clean, tau)?;
    Ok(Comparison { clean, noisy, tau, metrics_noisy, nl, tv })
}

pub fn compare_1d(clean: Signal1D, noise: &NoiseSpec, settings: &MethodSettings) -> Result<Comparison<Signal1D>> {
    compare(
        clean,
        noise,
        Box::new(|u| denoise_1d(u, &settings.nl)),
        Box::new(|u| tv_denoise_1d(u, &settings.tv)),
    )
}

pub fn compare_2d(clean: Field2D, noise: &NoiseSpec, settings: &MethodSettings) -> Result<Comparison<Field2D>> {
    compare(
        clean,
        noise,
        Box::new(|u| denoise_2d(u, &settings.nl, None)),
        Box::new(|u| tv_denoise_2d(u, &settings.tv)),
    )
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Defaults to 100 intervals in 1D and 64 nodes per side in 2D.
    pub n: Option<usize>,
    pub outdir: PathBuf,
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub reports: Vec<RunReport>,
    pub artifacts: Vec<PathBuf>,
    /// Where the JSON-lines reports were written.
    pub report_path: PathBuf,
}

struct Artifacts<'a> {
    dir: &'a Path,
    name: &'a str,
    seed: u64,
    written: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn path(&mut self, method: &str, ext: &str) -> PathBuf {
        let p = self.dir.join(format!("{}_{method}_{}.{ext}", self.name, self.seed));
        self.written.push(p.clone());
        p
    }

    fn plot(&mut self, method: &str, title: String, series: Vec<Series>) -> Result<()> {
        let spec = PlotSpec { width_px: 800, height_px: 400, title, series };
        write_svg_plot(self.path(method, "svg"), &spec)
    }
}

fn series(label: &str, color: &str, values: &[f64]) -> Series {
    Series { label: label.into(), color: color.into(), values: values.to_vec() }
}

/// Affine map of `[lo, hi]` onto the gray range.
fn to_gray(f: &Field2D, lo: f64, hi: f64) -> Field2D {
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
    f.like(f.values.iter().map(|v| (v - lo) * scale).collect())
}

/// Run one figure and write its artifacts to `cfg.outdir` as
/// `<figure>_<method>_<seed>.<ext>`. Reports go to `<figure>_report_<seed>.jsonl`.
pub fn run_experiment(fig: Figure, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let n = cfg.n.unwrap_or(fig.default_n());
    let threads = cfg.threads.max(1);
    let settings = figure_settings(fig, threads);
    let noise = NoiseSpec { seed: cfg.seed, delta_rel: fig.delta_rel() };
    fs::create_dir_all(&cfg.outdir)?;
    let mut art = Artifacts { dir: &cfg.outdir, name: fig.name(), seed: cfg.seed, written: Vec::new() };
    let mut extra = Map::new();

    let (metrics_noisy, nl, tv) = if fig.is_2d() {
        let cmp = compare_2d(clean_surface(n)?, &noise, &settings)?;
        let (lo, hi) = cmp.clean.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        extra.insert("gray_range".into(), json!([lo, hi]));
        write_pgm(art.path("clean", "pgm"), &to_gray(&cmp.clean, lo, hi))?;
        write_pgm(art.path("noisy", "pgm"), &to_gray(&cmp.noisy, lo, hi))?;
        write_pgm(art.path("nl", "pgm"), &to_gray(&cmp.nl.restored, lo, hi))?;
        write_pgm(art.path("tv", "pgm"), &to_gray(&cmp.tv.restored, lo, hi))?;
        if fig == Figure::Fig5 {
            // cross-section through x = 0.5
            let i = (3 * (n - 1)) / 4;
            let row = |f: &Field2D| f.values[i * f.cols..(i + 1) * f.cols].to_vec();
            art.plot(
                "profile",
                format!("{fig}: row {i} of noisy, new method and TV"),
                vec![
                    series("noisy", NOISY_COLOR, &row(&cmp.noisy)),
                    series("new method", RESTORED_COLOR, &row(&cmp.nl.restored)),
                    series("TV", "#2ca02c", &row(&cmp.tv.restored)),
                ],
            )?;
        }
        extra.insert("tau".into(), json!(cmp.tau));
        (cmp.metrics_noisy, (cmp.nl.trace, cmp.nl.metrics), (cmp.tv.trace, cmp.tv.metrics))
    } else {
        let clean = if fig == Figure::Fig3 { clean_jumps(n)? } else { clean_sine(n)? };
        let cmp = compare_1d(clean, &noise, &settings)?;
        write_csv_1d(art.path("clean", "csv"), &cmp.clean)?;
        write_csv_1d(art.path("noisy", "csv"), &cmp.noisy)?;
        write_csv_1d(art.path("nl", "csv"), &cmp.nl.restored)?;
        write_csv_1d(art.path("tv", "csv"), &cmp.tv.restored)?;
        if fig == Figure::Fig1 {
            art.plot(
                "noisy",
                format!("{fig}: f and its noisy version"),
                vec![series("f", CLEAN_COLOR, &cmp.clean.values), series("noisy f", NOISY_COLOR, &cmp.noisy.values)],
            )?;
            let g = clean_jumps(n)?;
            let g_noisy = add_noise(&g, &noise)?;
            write_csv_1d(art.path("g-clean", "csv"), &g)?;
            write_csv_1d(art.path("g-noisy", "csv"), &g_noisy)?;
            art.plot(
                "g-noisy",
                format!("{fig}: g and its noisy version"),
                vec![series("g", CLEAN_COLOR, &g.values), series("noisy g", NOISY_COLOR, &g_noisy.values)],
            )?;
        } else {
            for (method, label, restored) in
                [("nl", "new method", &cmp.nl.restored), ("tv", "TV", &cmp.tv.restored)]
            {
                art.plot(
                    method,
                    format!("{fig}: noisy and restored by {label}"),
                    vec![series("noisy", NOISY_COLOR, &cmp.noisy.values), series(label, RESTORED_COLOR, &restored.values)],
                )?;
            }
        }
        extra.insert("tau".into(), json!(cmp.tau));
        (cmp.metrics_noisy, (cmp.nl.trace, cmp.nl.metrics), (cmp.tv.trace, cmp.tv.metrics))
    };

    let artifact_paths: Vec<String> = art.written.iter().map(|p| p.display().to_string()).collect();
    let report = |method: &str, method_params: Value, (trace, metrics): (RunTrace, Metrics)| {
        let mut params = Map::new();
        params.insert("figure".into(), json!(fig.name()));
        params.insert("seed".into(), json!(cfg.seed));
        params.insert("n".into(), json!(n));
        params.insert("delta_rel".into(), json!(noise.delta_rel));
        params.insert("grid_spacing".into(), json!(1.0));
        params.extend(extra.clone());
        params.insert("method_params".into(), method_params);
        RunReport {
            command: format!("experiment {fig}"),
            method: method.into(),
            params,
            metrics_noisy: Some(metrics_noisy.clone()),
            metrics_restored: Some(metrics),
            trace_summary: TraceSummary::from(&trace),
            artifact_paths: artifact_paths.clone(),
        }
    };
    let reports = vec![
        report("nl", Value::Object(params_map(&settings.nl)), nl),
        report("tv", Value::Object(params_map(&settings.tv)), tv),
    ];
    let report_path = cfg.outdir.join(format!("{}_report_{}.jsonl", fig.name(), cfg.seed));
    if report_path.exists() {
        fs::remove_file(&report_path)?;
    }
    for r in &reports {
        r.append_to(&report_path)?;
    }
    Ok(ExperimentOutput { reports, artifacts: art.written, report_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_names_round_trip() {
        for f in Figure::ALL {
            assert_eq!(f.name().parse::<Figure>().unwrap(), f);
        }
        assert!(matches!("fig6".parse::<Figure>(), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn fig2_writes_named_artifacts_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { seed: 7, n: Some(40), outdir: dir.path().into(), threads: 1 };
        let out = run_experiment(Figure::Fig2, &cfg).unwrap();
        let names: Vec<String> =
            out.artifacts.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        for expected in ["fig2_noisy_7.csv", "fig2_nl_7.csv", "fig2_tv_7.svg", "fig2_nl_7.svg"] {
            assert!(names.iter().any(|n| n == expected), "{expected} missing from {names:?}");
        }
        assert!(out.artifacts.iter().all(|p| p.exists()));
        let svg = fs::read_to_string(dir.path().join("fig2_nl_7.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        let text = fs::read_to_string(&out.report_path).unwrap();
        assert_eq!(text.lines().count(), 2);
        for line in text.lines() {
            let r: RunReport = serde_json::from_str(line).unwrap();
            assert_eq!(r.command, "experiment fig2");
            assert!(r.metrics_restored.is_some() && r.metrics_noisy.is_some());
        }
    }
}
