use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use cgrc::cli::{compare, load_summary, main_with_args, rd_curve, run, InputSource, RunConfig, RunSummary};
use cgrc::encoder_sim::{bd_rate, bitrate_error};
use cgrc::rate_control::{round_half_up, RateControlConfig, Scheme};
use cgrc::yuv_io::{write_yuv_sequence, FramePlane};
use cgrc::Error;

struct Csv {
    header: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').enumerate().map(|(i, h)| (h.to_string(), i)).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Self { header, rows }
    }

    fn col<T: std::str::FromStr>(&self, name: &str) -> Vec<T>
    where
        T::Err: std::fmt::Debug,
    {
        let i = self.header[name];
        self.rows.iter().map(|r| r[i].parse().unwrap()).collect()
    }
}

fn preset_config(name: &str, frames: usize, scheme: Scheme, out: &Path) -> RunConfig {
    RunConfig {
        input: Some(InputSource::Preset { name: name.into(), frames: Some(frames) }),
        rc: RateControlConfig { target_bitrate: 40_000.0, ..Default::default() },
        scheme,
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn sweep(name: &str, frames: usize, scheme: Scheme, points: &[f64], out: &Path) -> RunSummary {
    let cfg = RunConfig { rate_points: Some(points.to_vec()), ..preset_config(name, frames, scheme, out) };
    run(&cfg).unwrap()
}

const RATES: [f64; 4] = [20_000.0, 40_000.0, 80_000.0, 160_000.0];

#[test]
fn static_run_writes_one_row_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&preset_config("static", 64, Scheme::Proposed, dir.path())).unwrap();
    assert_eq!(summary.frames, 64);
    assert!(summary.be_permille.is_finite());
    let csv = Csv::read(&dir.path().join("frames.csv"));
    assert_eq!(csv.rows.len(), 64);
    let mut frames: Vec<usize> = csv.col("frame");
    frames.sort_unstable();
    assert_eq!(frames, (0..64).collect::<Vec<_>>());
    for name in ["summary.json", "config.echo.json"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    assert!(!dir.path().join("cu_stats.csv").exists());
}

#[test]
fn summary_bitrate_error_matches_csv_totals() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&preset_config("scene-change", 96, Scheme::Proposed, dir.path())).unwrap();
    let csv = Csv::read(&dir.path().join("frames.csv"));
    let bits: u64 = csv.col::<u64>("actual_bits").iter().sum();
    let point = &summary.points[0];
    assert_eq!(bits, point.total_bits);
    let actual = bits as f64 / (96.0 / point.fps);
    let be = bitrate_error(point.target_bitrate, actual).unwrap();
    assert!((be - point.be_permille).abs() < 1e-9, "{be} vs {}", point.be_permille);
    assert_eq!(summary.be_permille, point.be_permille);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = preset_config("panning", 48, Scheme::Proposed, dir.path());
        cfg.seeds = vec![3, 9];
        run(&cfg).unwrap();
    }
    for rel in ["summary.json", "r00_s3/frames.csv", "r00_s9/frames.csv", "r00_s9/summary.json"] {
        let x = fs::read(a.path().join(rel)).unwrap();
        let y = fs::read(b.path().join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs");
    }
    let s3 = fs::read(a.path().join("r00_s3/frames.csv")).unwrap();
    let s9 = fs::read(a.path().join("r00_s9/frames.csv")).unwrap();
    assert_ne!(s3, s9, "seeds should change the simulated sizes");
}

#[test]
fn without_conditional_increase_final_qp_is_rounded_base() {
    let dir = tempfile::tempdir().unwrap();
    run(&preset_config("panning", 64, Scheme::NoConditionalQp, dir.path())).unwrap();
    let csv = Csv::read(&dir.path().join("frames.csv"));
    let epp: Vec<f64> = csv.col("epp");
    let frames: Vec<usize> = csv.col("frame");
    // Near the end the epp window runs out of frames.
    let full_window = frames.iter().zip(&epp).filter(|(f, _)| **f + 20 < 64);
    assert!(full_window.clone().count() > 30);
    assert!({ full_window }.all(|(_, &e)| e >= 2.5), "panning should be a high-epp scenario");
    let base: Vec<f64> = csv.col("base_qp");
    let fin: Vec<i32> = csv.col("final_qp");
    for (b, f) in base.iter().zip(&fin) {
        assert_eq!(*f, round_half_up(*b).clamp(0, 51));
    }

    let dir = tempfile::tempdir().unwrap();
    run(&preset_config("panning", 64, Scheme::Proposed, dir.path())).unwrap();
    let csv = Csv::read(&dir.path().join("frames.csv"));
    let base: Vec<f64> = csv.col("base_qp");
    let fin: Vec<i32> = csv.col("final_qp");
    assert!(base.iter().zip(&fin).any(|(b, f)| *f > round_half_up(*b)));
}

#[test]
fn cu_stats_are_dumped_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("static", 24, Scheme::Proposed, dir.path());
    cfg.dump_cu_stats = true;
    run(&cfg).unwrap();
    let csv = Csv::read(&dir.path().join("cu_stats.csv"));
    // 128x96 luma is 64x48 after downsampling: 8x6 CUs per frame.
    assert_eq!(csv.rows.len(), 24 * 48);
    let dqp: Vec<f64> = csv.col("delta_qp");
    assert!(dqp.iter().all(|&d| d <= 0.0));
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset_config("static", 24, Scheme::EqualAllocation, dir.path());
    run(&cfg).unwrap();
    let echoed = RunConfig::load(dir.path().join("config.echo.json")).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn comparing_a_run_with_itself_is_neutral() {
    let dir = tempfile::tempdir().unwrap();
    sweep("static", 48, Scheme::Proposed, &RATES, dir.path());
    let dirs = vec![dir.path().to_path_buf(), dir.path().to_path_buf()];
    let cmp = compare(&dirs).unwrap();
    assert_eq!(cmp.cells.len(), 2);
    assert_eq!(cmp.cells[1].bd_rate.abs(), 0.0);
    assert_eq!(cmp.cells[0].be_permille, cmp.cells[1].be_permille);
}

#[test]
fn comparison_cell_matches_direct_bd_rate() {
    let base = tempfile::tempdir().unwrap();
    let test = tempfile::tempdir().unwrap();
    let a = sweep("panning", 48, Scheme::EqualAllocation, &RATES, base.path());
    let b = sweep("panning", 48, Scheme::Proposed, &RATES, test.path());
    let cmp = compare(&[base.path().to_path_buf(), test.path().to_path_buf()]).unwrap();
    let cell = cmp.cells.iter().find(|c| c.label == "proposed").unwrap();
    let curve = |s: &RunSummary| rd_curve(s).unwrap().into_iter().map(|(_, p)| p).collect::<Vec<_>>();
    let direct = bd_rate(&curve(&a), &curve(&b)).unwrap();
    assert_eq!(cell.bd_rate, direct);
    assert_eq!(cell.be_permille, b.be_permille);
    assert_eq!(load_summary(test.path()).unwrap(), b);
    assert!(cmp.to_csv().lines().count() >= 3);
    assert!(cmp.to_table().contains("panning"));
}

#[test]
fn comparison_rejects_mismatched_rate_points() {
    let full = tempfile::tempdir().unwrap();
    let short = tempfile::tempdir().unwrap();
    sweep("static", 32, Scheme::Proposed, &RATES, full.path());
    sweep("static", 32, Scheme::EqualAllocation, &RATES[..3], short.path());
    let err = compare(&[full.path().to_path_buf(), short.path().to_path_buf()]).unwrap_err();
    assert!(matches!(err, Error::Config(_) | Error::DegenerateCurve(_)), "{err}");
}

fn args(list: &[&str]) -> Vec<String> {
    std::iter::once("cgrc").chain(list.iter().copied()).map(String::from).collect()
}

fn path_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn analyze_mode_on_a_yuv_file() {
    let dir = tempfile::tempdir().unwrap();
    let yuv = dir.path().join("clip.yuv");
    let frames: Vec<FramePlane> = (0..20)
        .map(|t| FramePlane::from_fn(64, 48, |x, y| ((x * 3 + y * 5 + t * 4) % 255) as u8))
        .collect();
    write_yuv_sequence(&yuv, &frames).unwrap();
    let out = dir.path().join("out");
    let code = main_with_args(args(&[
        "run",
        "--yuv",
        &path_arg(&yuv),
        "--width",
        "64",
        "--height",
        "48",
        "--frame-count",
        "20",
        "--bitrate",
        "30000",
        "--out",
        &path_arg(&out),
    ]));
    assert_eq!(code, 0);
    let summary = load_summary(&out).unwrap();
    assert_eq!(summary.scenario, "clip");
    assert!(summary.mean_psnr.is_none());
    let csv = Csv::read(&out.join("frames.csv"));
    assert_eq!(csv.rows.len(), 20);
    let target: Vec<f64> = csv.col("target_bits");
    let actual: Vec<u64> = csv.col("actual_bits");
    for (t, a) in target.iter().zip(&actual) {
        assert!((t - *a as f64).abs() <= 0.5 + 1e-6);
    }
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"rc\": {\"target_bitrate\": -5}}").unwrap();
    assert_eq!(main_with_args(args(&["run", "--config", &path_arg(&bad), "--preset", "static"])), 2);
    assert_eq!(main_with_args(args(&["run", "--preset", "nope"])), 2);
    let missing = dir.path().join("missing.yuv");
    let code = main_with_args(args(&[
        "run",
        "--yuv",
        &path_arg(&missing),
        "--width",
        "64",
        "--height",
        "48",
        "--frame-count",
        "4",
        "--out",
        &path_arg(&dir.path().join("o")),
    ]));
    assert_eq!(code, 3);
    assert_eq!(main_with_args(args(&["compare", "only-one"])), 2);
    assert_eq!(main_with_args(args(&["preset", "panning"])), 0);
}

#[test]
fn sweep_flag_uses_preset_rate_points() {
    let dir = tempfile::tempdir().unwrap();
    let out: PathBuf = dir.path().join("sw");
    let code = main_with_args(args(&["run", "--preset", "static", "--frames", "24", "--sweep", "--out", &path_arg(&out)]));
    assert_eq!(code, 0);
    let summary = load_summary(&out).unwrap();
    assert_eq!(summary.points.len(), 4);
    for i in 0..4 {
        assert!(out.join(format!("r{i:02}_s1/frames.csv")).is_file());
    }
}
