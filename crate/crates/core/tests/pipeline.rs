use lapden::data_io::{read_csv_1d, read_pgm, write_csv_1d, write_pgm};
use lapden::experiment::{clean_sine, clean_surface};
use lapden::nl_filter::{denoise_1d, denoise_2d, FilterParams, LambdaRule, Solver};
use lapden::signals::{add_noise, compute_metrics, default_tau, NoiseSpec};
use lapden::tv_baseline::{tv_denoise_1d, TvParams};

#[test]
fn csv_file_round_trip_through_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let clean = clean_sine(60).unwrap();
    let noisy = add_noise(&clean, &NoiseSpec { seed: 11, delta_rel: 0.09 }).unwrap();
    let path = dir.path().join("noisy.csv");
    write_csv_1d(&path, &noisy).unwrap();
    let loaded = read_csv_1d(&path).unwrap();
    assert_eq!(loaded, noisy);

    let params = FilterParams { solver: Solver::SemiImplicit, ..Default::default() };
    let (nl, trace) = denoise_1d(&loaded, &params).unwrap();
    assert!(trace.converged);
    let (tv, trace) = tv_denoise_1d(&loaded, &TvParams { lambda: 10.0, ..Default::default() }).unwrap();
    assert!(trace.converged);

    let tau = default_tau(&clean);
    let noisy_err = compute_metrics(&loaded, &clean, tau).unwrap().rel_err;
    assert!(compute_metrics(&nl, &clean, tau).unwrap().rel_err < noisy_err);
    assert!(compute_metrics(&tv, &clean, tau).unwrap().rel_err < noisy_err);

    let out = dir.path().join("restored.csv");
    write_csv_1d(&out, &nl).unwrap();
    assert_eq!(read_csv_1d(&out).unwrap(), nl);
}

#[test]
fn pgm_input_denoises_and_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let clean = clean_surface(24).unwrap();
    // shift into the gray range
    let clean = clean.like(clean.values.iter().map(|v| 0.5 + 0.4 * v).collect());
    let noisy = add_noise(&clean, &NoiseSpec { seed: 3, delta_rel: 0.05 }).unwrap();
    let path = dir.path().join("noisy.pgm");
    write_pgm(&path, &noisy).unwrap();
    let loaded = read_pgm(&path).unwrap();
    assert_eq!((loaded.rows, loaded.cols), (24, 24));

    let params = FilterParams { lambda: LambdaRule::Fixed(30.0), ..Default::default() };
    let (restored, trace) = denoise_2d(&loaded, &params, None).unwrap();
    assert!(trace.converged);
    let tau = default_tau(&clean);
    assert!(
        compute_metrics(&restored, &clean, tau).unwrap().rel_err < compute_metrics(&loaded, &clean, tau).unwrap().rel_err
    );
}
