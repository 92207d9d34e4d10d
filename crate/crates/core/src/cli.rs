//! Run orchestration, artifact writing and run comparison for the `cgrc`
//! binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder_sim::{
    bd_rate, bitrate_error, frame_seed, ref_quality_bonus, simulate_frame, RdPoint, Scenario,
};
use crate::error::{Error, Result};
use crate::preanalysis::{write_cu_stats_csv, PreAnalysisConfig};
use crate::rate_control::{RateControlConfig, Scheme};
use crate::rd_model::{ModelContext, ALPHA_RANGE, BETA_RANGE};
use crate::session::{Session, SessionConfig};
use crate::yuv_io::{read_yuv_sequence, FramePlane, VideoSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Closed loop against the synthetic encoder.
    #[default]
    Sim,
    /// Decisions on real luma with an encoder that hits every target.
    Analyze,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    Preset {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frames: Option<usize>,
    },
    Scenario {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frames: Option<usize>,
    },
    Yuv {
        path: PathBuf,
        spec: VideoSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub input: Option<InputSource>,
    pub rc: RateControlConfig,
    pub pre: PreAnalysisConfig,
    pub scheme: Scheme,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Target bitrates to sweep; `None` runs `rc.target_bitrate` only.
    pub rate_points: Option<Vec<f64>>,
    pub dump_cu_stats: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sim,
            input: None,
            rc: RateControlConfig::default(),
            pre: PreAnalysisConfig::default(),
            scheme: Scheme::Proposed,
            seeds: vec![1],
            output_dir: PathBuf::from("cgrc-out"),
            rate_points: None,
            dump_cu_stats: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.rc.validate()?;
        self.pre.validate()?;
        match (&self.input, self.mode) {
            (None, _) => return Err(Error::Config("no input given".into())),
            (Some(InputSource::Yuv { .. }), Mode::Sim) => {
                return Err(Error::Config("sim mode needs a preset or scenario input".into()))
            }
            (Some(InputSource::Preset { .. } | InputSource::Scenario { .. }), Mode::Analyze) => {
                return Err(Error::Config("analyze mode needs a yuv input".into()))
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(points) = &self.rate_points {
            if points.is_empty() || points.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return Err(Error::Config("rate_points must be a non-empty list of positive bitrates".into()));
            }
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rate_points.clone().unwrap_or_else(|| vec![self.rc.target_bitrate])
    }
}

/// Pictures and encoder behaviour shared by every point of a run.
#[derive(Clone, Debug)]
pub enum LoadedInput {
    Sim { scenario: Scenario, frames: Vec<FramePlane> },
    Yuv { name: String, spec: VideoSpec, frames: Vec<FramePlane> },
}

impl LoadedInput {
    pub fn load(source: &InputSource) -> Result<Self> {
        match source {
            InputSource::Preset { name, frames } => Self::from_scenario(Scenario::preset(name)?, *frames),
            InputSource::Scenario { path, frames } => {
                let text = fs::read_to_string(path)?;
                Self::from_scenario(Scenario::from_json(&text)?, *frames)
            }
            InputSource::Yuv { path, spec } => {
                let frames = read_yuv_sequence(path, spec)?;
                let name = path.file_stem().map_or_else(|| "yuv".into(), |s| s.to_string_lossy().into_owned());
                Ok(Self::Yuv { name, spec: *spec, frames })
            }
        }
    }

    pub fn from_scenario(scenario: Scenario, frames: Option<usize>) -> Result<Self> {
        let scenario = match frames {
            Some(n) => scenario.with_frames(n)?,
            None => scenario,
        };
        let frames = scenario.render_all();
        Ok(Self::Sim { scenario, frames })
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Sim { scenario, .. } => &scenario.name,
            Self::Yuv { name, .. } => name,
        }
    }

    pub fn spec(&self) -> VideoSpec {
        match self {
            Self::Sim { scenario, .. } => scenario.video_spec(),
            Self::Yuv { spec, .. } => *spec,
        }
    }

    pub fn frames(&self) -> &[FramePlane] {
        match self {
            Self::Sim { frames, .. } | Self::Yuv { frames, .. } => frames,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub scenario: String,
    pub scheme: Scheme,
    pub mode: Mode,
    pub seed: u64,
    pub frames: usize,
    pub fps: f64,
    pub target_bitrate: f64,
    pub total_bits: u64,
    pub actual_bitrate: f64,
    pub be_permille: f64,
    pub mean_psnr: Option<f64>,
    pub mean_final_qp: f64,
    pub saturated_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub scheme: Scheme,
    pub mode: Mode,
    pub frames: usize,
    pub total_bits: u64,
    /// Mean over points.
    pub be_permille: f64,
    pub mean_psnr: Option<f64>,
    pub points: Vec<PointSummary>,
}

#[derive(Clone, Debug)]
pub struct PointOutput {
    pub summary: PointSummary,
    pub frames_csv: String,
    pub cu_stats_csv: Option<String>,
}

const FRAME_HEADER: &str = "coding_order,frame,type,layer,w,lambda_g,lambda,base_qp,final_qp,eff_qp,epp,\
avg_abs_dqp,target_bits,actual_bits,gop_bits_left,psnr,alpha_i,beta_i,alpha_l1,beta_l1,alpha_l2,beta_l2,\
alpha_l3,beta_l3,saturated";

fn invariant(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Invariant(msg()))
    }
}

/// Runs the whole sequence once at `target_bitrate`.
#[allow(clippy::too_many_arguments)]
pub fn run_point(
    input: &LoadedInput,
    rc: &RateControlConfig,
    pre: &PreAnalysisConfig,
    scheme: Scheme,
    mode: Mode,
    target_bitrate: f64,
    seed: u64,
    dump_cu_stats: bool,
) -> Result<PointOutput> {
    let spec = input.spec();
    let rc = RateControlConfig { target_bitrate, ..*rc };
    let mut session = Session::new(SessionConfig { video: spec, rc, pre: *pre, scheme })?;
    let pixels = spec.pixels();
    let pictures = input.frames();
    let mut psnr: Vec<Option<f64>> = vec![None; spec.frame_count];
    let mut csv = String::with_capacity(256 * spec.frame_count);
    csv.push_str(FRAME_HEADER);
    csv.push('\n');
    let mut cu_rows: Vec<u8> = Vec::new();
    let mut header_written = false;
    let (mut total_bits, mut qp_sum, mut saturated) = (0u64, 0.0, 0usize);

    let mut fed = 0;
    let mut coded = 0;
    while !session.is_finished() {
        let d = match session.next_decision() {
            Ok(d) => d,
            Err(Error::NeedMoreInput) => {
                let picture = pictures.get(fed).ok_or_else(|| Error::Invariant("input ran out early".into()))?;
                session.push_frame(picture)?;
                fed += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let frame = session.current_frame().expect("pending frame").clone();
        invariant((rc.qp_min..=rc.qp_max).contains(&d.final_qp), || {
            format!("frame {} final QP {} outside [{}, {}]", d.frame_index, d.final_qp, rc.qp_min, rc.qp_max)
        })?;
        invariant(d.lambda.is_finite() && d.lambda > 0.0 && d.target_bits > 0.0, || {
            format!("frame {} has a degenerate target", d.frame_index)
        })?;
        let eff_qp = d.average_qp().clamp(0.0, 51.0);
        let (bits, frame_psnr) = match input {
            LoadedInput::Sim { scenario, .. } => {
                let model = scenario.frame_model(d.frame_index, &frame.refs);
                let ref_psnrs = frame
                    .refs
                    .iter()
                    .map(|&r| psnr[r].ok_or_else(|| Error::Invariant(format!("reference {r} not coded yet"))))
                    .collect::<Result<Vec<_>>>()?;
                let bonus = ref_quality_bonus(&ref_psnrs);
                let r = simulate_frame(&model, eff_qp, bonus, frame_seed(seed, d.frame_index), pixels)?;
                (r.bits, Some(r.psnr))
            }
            LoadedInput::Yuv { .. } => (d.target_bits.round().max(1.0) as u64, None),
        };
        if dump_cu_stats {
            let analysis = session.current_analysis().expect("pending analysis").clone();
            let mut buf = Vec::new();
            write_cu_stats_csv(&mut buf, std::slice::from_ref(&analysis))?;
            let text = String::from_utf8(buf).expect("ascii");
            let body = if header_written { text.split_once('\n').map_or("", |(_, b)| b) } else { &text };
            cu_rows.extend_from_slice(body.as_bytes());
            header_written = true;
        }
        session.report(bits)?;
        psnr[d.frame_index] = frame_psnr;
        total_bits += bits;
        qp_sum += d.final_qp as f64;
        saturated += d.saturated as usize;

        let gop_left = session.controller().gop().filter(|_| d.gop_pos.is_some()).map_or(0.0, |g| g.gop_bits_left);
        let models = session.models();
        let _ = write!(
            csv,
            "{coded},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{},{:.6},{}",
            d.frame_index,
            d.frame_type,
            d.layer,
            d.w,
            d.lambda_g,
            d.lambda,
            d.base_qp,
            d.final_qp,
            eff_qp,
            d.epp,
            d.avg_abs_delta_qp,
            d.target_bits,
            bits,
            gop_left,
            frame_psnr.map_or_else(String::new, |p| format!("{p:.6}")),
        );
        for ctx in ModelContext::ALL {
            let m = models.get(ctx);
            invariant(
                (ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&m.alpha) && (BETA_RANGE.0..=BETA_RANGE.1).contains(&m.beta),
                || format!("model {} left its legal range", ctx.label()),
            )?;
            let _ = write!(csv, ",{:.6},{:.6}", m.alpha, m.beta);
        }
        let _ = writeln!(csv, ",{}", d.saturated as u8);
        coded += 1;
    }

    let frames = spec.frame_count;
    let actual_bitrate = total_bits as f64 * spec.fps / frames as f64;
    let mean_psnr = match input {
        LoadedInput::Sim { .. } => Some(psnr.iter().map(|p| p.unwrap_or(0.0)).sum::<f64>() / frames as f64),
        LoadedInput::Yuv { .. } => None,
    };
    let summary = PointSummary {
        scenario: input.name().to_string(),
        scheme,
        mode,
        seed,
        frames,
        fps: spec.fps,
        target_bitrate,
        total_bits,
        actual_bitrate,
        be_permille: bitrate_error(target_bitrate, actual_bitrate)?,
        mean_psnr,
        mean_final_qp: qp_sum / frames as f64,
        saturated_frames: saturated,
    };
    Ok(PointOutput {
        summary,
        frames_csv: csv,
        cu_stats_csv: dump_cu_stats.then(|| String::from_utf8(cu_rows).expect("ascii")),
    })
}

fn point_dir_name(rate_index: usize, seed: u64) -> String {
    format!("r{rate_index:02}_s{seed}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_point(dir: &Path, out: &PointOutput) -> Result<()> {
    write_text(&dir.join("frames.csv"), &out.frames_csv)?;
    if let Some(cu) = &out.cu_stats_csv {
        write_text(&dir.join("cu_stats.csv"), cu)?;
    }
    Ok(())
}

/// Executes every (rate point, seed) pair of `cfg` and writes the artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let input = LoadedInput::load(cfg.input.as_ref().expect("validated"))?;
    let targets = cfg.targets();
    let jobs: Vec<(usize, f64, u64)> = targets
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| cfg.seeds.iter().map(move |&s| (i, t, s)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(_, t, s)| run_point(&input, &cfg.rc, &cfg.pre, cfg.scheme, cfg.mode, t, s, cfg.dump_cu_stats))
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    write_json(&cfg.output_dir.join("config.echo.json"), cfg)?;
    if outputs.len() == 1 {
        write_point(&cfg.output_dir, &outputs[0])?;
    } else {
        for (&(i, _, s), out) in jobs.iter().zip(&outputs) {
            let dir = cfg.output_dir.join(point_dir_name(i, s));
            fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
            write_point(&dir, out)?;
            write_json(&dir.join("summary.json"), &out.summary)?;
        }
    }

    let points: Vec<PointSummary> = outputs.into_iter().map(|o| o.summary).collect();
    let n = points.len() as f64;
    let summary = RunSummary {
        scenario: input.name().to_string(),
        scheme: cfg.scheme,
        mode: cfg.mode,
        frames: input.spec().frame_count,
        total_bits: points.iter().map(|p| p.total_bits).sum(),
        be_permille: points.iter().map(|p| p.be_permille).sum::<f64>() / n,
        mean_psnr: points
            .iter()
            .map(|p| p.mean_psnr)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.iter().sum::<f64>() / n),
        points,
    };
    write_json(&cfg.output_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// One scheme's numbers on one scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub scenario: String,
    pub label: String,
    /// Rate difference against the first run, in percent.
    pub bd_rate: f64,
    pub be_permille: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline: String,
    pub labels: Vec<String>,
    pub scenarios: Vec<String>,
    pub cells: Vec<ComparisonCell>,
}

pub fn load_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Seed-averaged `(actual bitrate, PSNR)` per target, ordered by target.
pub fn rd_curve(summary: &RunSummary) -> Result<Vec<(f64, RdPoint)>> {
    let mut by_target: BTreeMap<u64, (f64, Vec<&PointSummary>)> = BTreeMap::new();
    for p in &summary.points {
        by_target.entry(p.target_bitrate.to_bits()).or_insert((p.target_bitrate, Vec::new())).1.push(p);
    }
    let mut curve: Vec<(f64, RdPoint)> = by_target
        .into_values()
        .map(|(target, pts)| {
            let n = pts.len() as f64;
            let rate = pts.iter().map(|p| p.actual_bitrate).sum::<f64>() / n;
            let psnr = pts
                .iter()
                .map(|p| p.mean_psnr.ok_or_else(|| Error::Config(format!("{} has no PSNR", summary.scenario))))
                .sum::<Result<f64>>()?
                / n;
            Ok((target, RdPoint::new(rate, psnr)))
        })
        .collect::<Result<_>>()?;
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(curve)
}

/// Tabulates BD-rate and bitrate error of every run against the first one,
/// per scenario.
pub fn compare(run_dirs: &[PathBuf]) -> Result<Comparison> {
    if run_dirs.len() < 2 {
        return Err(Error::Config("compare needs at least two run directories".into()));
    }
    let mut columns: Vec<(String, BTreeMap<String, RunSummary>)> = Vec::new();
    for dir in run_dirs {
        let summary = load_summary(dir)?;
        let base = summary.scheme.name().to_string();
        let slot = columns.iter().position(|(l, runs)| *l == base && !runs.contains_key(&summary.scenario));
        match slot {
            Some(i) => {
                columns[i].1.insert(summary.scenario.clone(), summary);
            }
            None => {
                let taken = columns.iter().filter(|(l, _)| l.starts_with(&base)).count();
                let label = if taken == 0 { base } else { format!("{base}#{}", taken + 1) };
                let mut runs = BTreeMap::new();
                runs.insert(summary.scenario.clone(), summary);
                columns.push((label, runs));
            }
        }
    }
    if columns.len() < 2 {
        return Err(Error::Config("compare needs at least two distinct runs per scenario".into()));
    }
    let scenarios: Vec<String> = columns[0].1.keys().cloned().collect();
    for (label, runs) in &columns {
        if runs.keys().ne(scenarios.iter()) {
            return Err(Error::Config(format!("run '{label}' covers a different scenario set")));
        }
    }

    let mut cells = Vec::new();
    for scenario in &scenarios {
        let base_curve = rd_curve(&columns[0].1[scenario])?;
        let base_targets: Vec<f64> = base_curve.iter().map(|c| c.0).collect();
        let base_points: Vec<RdPoint> = base_curve.iter().map(|c| c.1).collect();
        for (label, runs) in &columns {
            let run = &runs[scenario];
            let curve = rd_curve(run)?;
            if curve.iter().map(|c| c.0).ne(base_targets.iter().copied()) {
                return Err(Error::Config(format!("run '{label}' has different rate points on {scenario}")));
            }
            let points: Vec<RdPoint> = curve.iter().map(|c| c.1).collect();
            cells.push(ComparisonCell {
                scenario: scenario.clone(),
                label: label.clone(),
                bd_rate: bd_rate(&base_points, &points)?,
                be_permille: run.be_permille,
            });
        }
    }
    Ok(Comparison {
        baseline: columns[0].0.clone(),
        labels: columns.iter().map(|c| c.0.clone()).collect(),
        scenarios,
        cells,
    })
}

impl Comparison {
    fn cell(&self, scenario: &str, label: &str) -> &ComparisonCell {
        self.cells.iter().find(|c| c.scenario == scenario && c.label == label).expect("complete table")
    }

    fn average(&self, label: &str) -> (f64, f64) {
        let mine: Vec<_> = self.cells.iter().filter(|c| c.label == label).collect();
        let n = mine.len() as f64;
        (mine.iter().map(|c| c.bd_rate).sum::<f64>() / n, mine.iter().map(|c| c.be_permille).sum::<f64>() / n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,run,bd_rate_percent,be_permille\n");
        for s in &self.scenarios {
            for l in &self.labels {
                let c = self.cell(s, l);
                let _ = writeln!(out, "{s},{l},{:.6},{:.6}", c.bd_rate, c.be_permille);
            }
        }
        for l in &self.labels {
            let (bd, be) = self.average(l);
            let _ = writeln!(out, "average,{l},{bd:.6},{be:.6}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let heads: Vec<String> = self.labels.iter().map(|l| format!("{l} BD% / BE‰")).collect();
        let first = self.scenarios.iter().map(String::len).max().unwrap_or(0).max("average".len()).max("scenario".len());
        let widths: Vec<usize> = heads.iter().map(|h| h.chars().count().max(18)).collect();
        let mut out = format!("{:<first$}", "scenario");
        for (h, w) in heads.iter().zip(&widths) {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, vals: Vec<(f64, f64)>| {
            let _ = write!(out, "{name:<first$}");
            for ((bd, be), w) in vals.into_iter().zip(&widths) {
                let cell = format!("{bd:+.2} / {be:.2}");
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        };
        for s in &self.scenarios {
            let vals = self.labels.iter().map(|l| {
                let c = self.cell(s, l);
                (c.bd_rate, c.be_permille)
            });
            row(&mut out, s, vals.collect());
        }
        row(&mut out, "average", self.labels.iter().map(|l| self.average(l)).collect());
        out
    }
}

#[derive(Debug, Parser)]
#[command(name = "cgrc", version, about = "Lookahead-guided λ-domain rate control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the controller over a scenario or a YUV file.
    Run(RunArgs),
    /// Tabulate BD-rate and bitrate error of runs against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        dirs: Vec<PathBuf>,
        /// Also write comparison.csv and comparison.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in scenario as JSON.
    Preset { name: String },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// proposed, no-conditional-qp or equal-allocation.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Single target bitrate in bits/s; replaces any rate sweep.
    #[arg(long)]
    pub bitrate: Option<f64>,
    /// Single simulator seed; replaces the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write per-CU pre-analysis results to cu_stats.csv.
    #[arg(long)]
    pub dump_cu_stats: bool,
    /// Built-in scenario to use as input.
    #[arg(long, conflicts_with = "yuv")]
    pub preset: Option<String>,
    /// Truncate the scenario to this many frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Sweep the scenario's own rate points.
    #[arg(long, conflicts_with = "bitrate")]
    pub sweep: bool,
    /// Raw I420 input; needs --width, --height and --frame-count.
    #[arg(long, requires_all = ["width", "height", "frame_count"])]
    pub yuv: Option<PathBuf>,
    /// Luma width of the YUV input.
    #[arg(long)]
    pub width: Option<usize>,
    /// Luma height of the YUV input.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// Frames to read from the YUV input.
    #[arg(long)]
    pub frame_count: Option<usize>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(name) = &self.preset {
            cfg.input = Some(InputSource::Preset { name: name.clone(), frames: self.frames });
        } else if let Some(path) = &self.yuv {
            let spec = VideoSpec {
                width: self.width.unwrap_or(0),
                height: self.height.unwrap_or(0),
                fps: self.fps,
                frame_count: self.frame_count.unwrap_or(0),
            };
            cfg.input = Some(InputSource::Yuv { path: path.clone(), spec });
            if self.mode.is_none() {
                cfg.mode = Mode::Analyze;
            }
        } else if let Some(n) = self.frames {
            match &mut cfg.input {
                Some(InputSource::Preset { frames, .. } | InputSource::Scenario { frames, .. }) => *frames = Some(n),
                _ => return Err(Error::Config("--frames applies to scenario inputs".into())),
            }
        }
        if let Some(b) = self.bitrate {
            cfg.rc.target_bitrate = b;
            cfg.rate_points = None;
        }
        if self.sweep {
            let points = match &cfg.input {
                Some(InputSource::Preset { name, .. }) => Scenario::preset(name)?.rate_points,
                Some(InputSource::Scenario { path, .. }) => Scenario::load(path)?.rate_points,
                _ => return Err(Error::Config("--sweep needs a scenario input".into())),
            };
            cfg.rate_points = Some(points);
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        cfg.dump_cu_stats |= self.dump_cu_stats;
        Ok(cfg)
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::InvalidSpec(_) | Error::DegenerateCurve(_) => 2,
        Error::Io(_) | Error::FileTooShort { .. } | Error::OddDimensions { .. } | Error::InvalidPlane(_) => 3,
        _ => 4,
    }
}

/// Parses `args` (program name first), executes and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = args.to_config()?;
            let s = run(&cfg)?;
            let psnr = s.mean_psnr.map_or_else(|| "n/a".to_string(), |p| format!("{p:.3} dB"));
            println!(
                "{} / {}: {} point(s), mean BE {:.3}‰, mean PSNR {psnr}, output in {}",
                s.scenario,
                s.scheme.name(),
                s.points.len(),
                s.be_permille,
                cfg.output_dir.display()
            );
        }
        Command::Compare { dirs, out } => {
            let cmp = compare(dirs)?;
            emit(&cmp.to_table())?;
            if let Some(dir) = out {
                fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
                write_text(&dir.join("comparison.csv"), &cmp.to_csv())?;
                write_text(&dir.join("comparison.txt"), &cmp.to_table())?;
            }
        }
        Command::Preset { name } => {
            emit(&format!("{}\n", serde_json::to_string_pretty(&Scenario::preset(name)?)?))?;
        }
    }
    Ok(())
}

/// Writes to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let cfg = RunConfig::from_json(r#"{"input": {"preset": {"name": "static", "frames": 16}}}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seeds, vec![1]);
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::default().validate().is_err());
        let yuv_in_sim = RunConfig {
            input: Some(InputSource::Yuv {
                path: "x.yuv".into(),
                spec: VideoSpec { width: 16, height: 16, fps: 25.0, frame_count: 1 },
            }),
            ..RunConfig::default()
        };
        assert!(yuv_in_sim.validate().is_err());
        let no_seeds = RunConfig { seeds: vec![], ..cfg.clone() };
        assert!(no_seeds.validate().is_err());
        let bad_points = RunConfig { rate_points: Some(vec![-1.0]), ..cfg };
        assert!(bad_points.validate().is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::FileTooShort { needed: 2, found: 1 }), 3);
        assert_eq!(exit_code(&Error::Invariant("x".into())), 4);
    }

    #[test]
    fn flag_overrides() {
        let cli = Cli::try_parse_from([
            "cgrc", "run", "--preset", "panning", "--frames", "32", "--scheme", "equal-allocation", "--bitrate",
            "30000", "--seed", "9", "--out", "/tmp/x",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else { panic!("run expected") };
        let cfg = args.to_config().unwrap();
        assert_eq!(cfg.scheme, Scheme::EqualAllocation);
        assert_eq!(cfg.rc.target_bitrate, 30000.0);
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.input, Some(InputSource::Preset { name: "panning".into(), frames: Some(32) }));
    }
}
