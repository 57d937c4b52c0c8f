//! The `trtls` command-line tool.
//!
//! Subcommands: `gen-operator`, `blur`, `deblur` and `benchmark`. Every
//! command that writes files also writes a JSON [`RunManifest`].
//!
//! Exit codes: 0 success, 2 usage or invalid values, 3 I/O or shape errors,
//! 4 non-convergence (outputs are still written).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::algebra::tprod;
use crate::baseline::{TruncationSpec, TtsvdFactorization};
use crate::deblur::{
    add_noise, aggregate_report, gaussian_blur_tensor, reg_operator, restoring_proportion, run_experiment,
    spectral_condition_numbers, sub_seed, ExperimentConfig, ExperimentResult, RegKind, BLURRED_MSE_CONVENTION,
};
use crate::error::{Error, Result};
use crate::image::{frames_to_tensor, read_frames, read_image, tensor_to_frames, write_image, Image};
use crate::solver::{solve_multi, MuMode, Scheme, StartRule};
use crate::tensor::{mse, DenseTensor3};
use crate::tns3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

const MU_COLLAPSE: f64 = 1e-12;

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub input_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub metrics: Option<ExperimentResult>,
    /// RFC 3339 UTC time at which the manifest was written.
    pub timestamp: String,
    /// Command-specific values, such as condition number summaries.
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    fn new(command: &str, config: ExperimentConfig) -> Self {
        RunManifest {
            command: command.into(),
            config,
            input_paths: Vec::new(),
            output_paths: Vec::new(),
            metrics: None,
            timestamp: String::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Stamps the time and writes the manifest. Fails if any listed path is missing.
    pub fn write(&mut self, path: &Path) -> Result<()> {
        for p in self.input_paths.iter().chain(&self.output_paths) {
            if !p.exists() {
                return Err(Error::Format(format!("manifest references missing path {}", p.display())));
            }
        }
        self.timestamp = chrono::Utc::now().to_rfc3339();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub param: String,
    pub mse: Option<f64>,
    pub wall_time_s: f64,
    pub restoring_proportion: Option<f64>,
}

#[derive(Serialize)]
struct ScatterRow<'a> {
    method: &'a str,
    param: &'a str,
    mse: Option<f64>,
    wall_time_s: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}

#[derive(Parser, Debug)]
#[command(name = "trtls", version, about = "Tensor regularized total least squares deblurring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the Gaussian blur operator and summarize its spectral conditioning.
    GenOperator(GenOperatorArgs),
    /// Blur an image or frame sequence and optionally perturb operator and observation.
    Blur(BlurArgs),
    /// Restore an observation with the regularized total least squares solver.
    Deblur(DeblurArgs),
    /// Compare the solver with a truncated T-SVD sweep.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug)]
struct BlurShape {
    /// Gaussian width.
    #[arg(long, default_value_t = 4.0)]
    sigma: f64,
    /// Number of nonzero diagonals on each side, including the main one.
    #[arg(long, default_value_t = 7)]
    band: usize,
}

#[derive(Args, Debug)]
struct GenOperatorArgs {
    /// Operator order (image side).
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    shape: BlurShape,
    /// Output TNS3 file; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// PGM/PPM image, TNS3 tensor, or a directory of frames.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory of numbered PGM/PPM frames.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
}

impl InputArgs {
    fn path(&self) -> &Path {
        self.input.as_deref().or(self.frames_dir.as_deref()).expect("clap enforces one input")
    }
}

#[derive(Args, Debug)]
struct BlurArgs {
    #[command(flatten)]
    input: InputArgs,
    /// TNS3 operator; generated from --sigma and --band when omitted.
    #[arg(long)]
    operator: Option<PathBuf>,
    /// Expected image side; checked against the input.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    shape: BlurShape,
    /// Relative noise level for operator and observation.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Tensor,
    Matrix,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StartArg {
    Ls,
    UnitNorm,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MuArg {
    Scalar,
    Tubewise,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Regularizer: k1, k2 or identity.
    #[arg(long)]
    reg: Option<RegKind>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Initial iterate: least-squares scaled or unit-norm `A^T * B`.
    #[arg(long, value_enum)]
    start: Option<StartArg>,
    #[arg(long, value_enum)]
    mu_mode: Option<MuArg>,
}

impl SolverArgs {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(reg) = self.reg {
            config.regularizer = reg;
        }
        let s = &mut config.solver;
        if let Some(scheme) = self.scheme {
            s.scheme = match scheme {
                SchemeArg::Tensor => Scheme::Tensor,
                SchemeArg::Matrix => Scheme::Matrix,
            };
        }
        if let Some(k) = self.max_iter {
            if k == 0 {
                return Err(Error::Invalid("--max-iter must be at least 1".into()));
            }
            s.max_iter = k;
        }
        if let Some(tol) = self.tol {
            s.tol = tol;
        }
        if let Some(start) = self.start {
            s.start = match start {
                StartArg::Ls => StartRule::LeastSquaresScaled,
                StartArg::UnitNorm => StartRule::UnitNorm,
            };
        }
        if let Some(mu) = self.mu_mode {
            s.mu_mode = match mu {
                MuArg::Scalar => MuMode::ScalarProjection,
                MuArg::Tubewise => MuMode::Tubewise,
            };
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct DeblurArgs {
    /// Observation: TNS3 tensor, PGM/PPM image or frame directory.
    #[command(flatten)]
    input: InputArgs,
    /// TNS3 operator.
    #[arg(long)]
    operator: PathBuf,
    /// Ground truth in any input format; enables MSE metrics.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    input: InputArgs,
    /// JSON experiment configuration; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Truncation levels `a:b:step`; defaults to `1:rank:1`.
    #[arg(long)]
    ttsvd_k_sweep: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write `(mse, wall_time_s)` pairs to this CSV file.
    #[arg(long)]
    scatter: Option<PathBuf>,
}

/// Parses `a:b:step` into the inclusive list `a, a+step, ..., <= b`.
pub fn parse_sweep(text: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Invalid(format!("k sweep {text:?} is not a:b:step with 1 <= a <= b and step >= 1"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<usize> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if a == 0 || a > b || step == 0 {
        return Err(bad());
    }
    Ok((a..=b).step_by(step).collect())
}

/// How lateral slices map back to images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// One image with this many channels.
    Single(usize),
    /// A frame sequence, each frame with this many channels.
    Frames(usize),
}

impl Layout {
    fn channels(self) -> usize {
        match self {
            Layout::Single(c) | Layout::Frames(c) => c,
        }
    }

    fn to_json(self) -> serde_json::Value {
        match self {
            Layout::Single(c) => serde_json::json!({"kind": "single", "channels": c}),
            Layout::Frames(c) => serde_json::json!({"kind": "frames", "channels": c}),
        }
    }

    fn from_json(v: &serde_json::Value) -> Option<Layout> {
        let channels = v.get("channels")?.as_u64().filter(|&c| c == 1 || c == 3)? as usize;
        match v.get("kind")?.as_str()? {
            "single" => Some(Layout::Single(channels)),
            "frames" => Some(Layout::Frames(channels)),
            _ => None,
        }
    }
}

/// Image layout recorded by `blur` next to a TNS3 file, if any.
fn layout_near(path: &Path) -> Option<Layout> {
    let manifest = RunManifest::read(&path.parent()?.join("manifest.json")).ok()?;
    Layout::from_json(manifest.extra.get("layout")?)
}

struct Data {
    tensor: DenseTensor3,
    layout: Layout,
    inputs: Vec<PathBuf>,
}

fn images_to_tensor(images: &[Image]) -> Result<DenseTensor3> {
    let channels: Vec<_> = images.iter().flat_map(|img| img.channels()).collect();
    let (h, w) = channels[0].shape();
    if h != w {
        return Err(Error::Shape(format!("images must be square, got {h}x{w}")));
    }
    if channels.iter().any(|c| c.shape() != (h, w)) {
        return Err(Error::Shape("frames differ in size".into()));
    }
    frames_to_tensor(&channels)
}

fn load_data(path: &Path) -> Result<Data> {
    if path.is_dir() {
        let frames = read_frames(path)?;
        let channels = frames[0].channels().len();
        if frames.iter().any(|f| f.channels().len() != channels) {
            return Err(Error::Shape("frames mix grayscale and color".into()));
        }
        return Ok(Data {
            tensor: images_to_tensor(&frames)?,
            layout: Layout::Frames(channels),
            inputs: crate::image::frame_paths(path)?,
        });
    }
    let is_tns3 = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("tns3"));
    if is_tns3 {
        let tensor = tns3::load(path)?;
        let layout = layout_near(path)
            .filter(|l| tensor.cols() % l.channels() == 0)
            .unwrap_or(if tensor.cols() == 1 { Layout::Single(1) } else { Layout::Frames(1) });
        return Ok(Data { tensor, layout, inputs: vec![path.to_path_buf()] });
    }
    let image = read_image(path)?;
    Ok(Data {
        layout: Layout::Single(image.channels().len()),
        tensor: images_to_tensor(std::slice::from_ref(&image))?,
        inputs: vec![path.to_path_buf()],
    })
}

/// Writes `t` as images named after `stem` inside `dir`; returns the files written.
fn write_images(t: &DenseTensor3, layout: Layout, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let planes = tensor_to_frames(t)?;
    let channels = layout.channels();
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    let images: Vec<Image> =
        planes.chunks(channels).map(|chunk| Image::from_channels(chunk.to_vec())).collect::<Result<_>>()?;
    let mut written = Vec::new();
    match layout {
        Layout::Single(_) => {
            let path = dir.join(format!("{stem}.{ext}"));
            write_image(&path, &images[0])?;
            written.push(path);
        }
        Layout::Frames(_) => {
            let sub = dir.join(format!("{stem}_frames"));
            fs::create_dir_all(&sub)?;
            for (idx, img) in images.iter().enumerate() {
                let path = sub.join(format!("frame_{:04}.{ext}", idx + 1));
                write_image(&path, img)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn check_order(data: &DenseTensor3, n: usize) -> Result<()> {
    if data.rows() != n || data.depth() != n {
        return Err(Error::Shape(format!("data is {}x{} per slice but the operator order is {n}", data.rows(), data.depth())));
    }
    Ok(())
}

fn check_operator(a: &DenseTensor3) -> Result<usize> {
    let (m, n, p) = a.shape();
    if m != n || n != p {
        return Err(Error::Shape(format!("operator must be N x N x N, got {m}x{n}x{p}")));
    }
    Ok(n)
}

fn summary(conds: &[f64]) -> (f64, f64, f64) {
    let mut sorted = conds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
    (sorted[0], median, sorted[sorted.len() - 1])
}

fn cond_json(conds: &[f64]) -> serde_json::Value {
    let (min, median, max) = summary(conds);
    let enc = |v: f64| if v.is_finite() { serde_json::json!(v) } else { serde_json::json!("inf") };
    serde_json::json!({"min": enc(min), "median": enc(median), "max": enc(max)})
}

fn cmd_gen_operator(args: &GenOperatorArgs) -> Result<i32> {
    let config = ExperimentConfig { n: args.n, sigma: args.shape.sigma, band: args.shape.band, ..Default::default() };
    config.validate()?;
    let a = gaussian_blur_tensor(args.n, args.shape.sigma, args.shape.band)?;
    tns3::save(&args.out, &a)?;
    let conds = spectral_condition_numbers(&a);
    let (min, median, max) = summary(&conds);
    println!("spectral condition numbers: min {min:.6e} median {median:.6e} max {max:.6e}");

    let mut manifest = RunManifest::new("gen-operator", config);
    manifest.output_paths.push(args.out.clone());
    manifest.extra.insert("condition_numbers".into(), cond_json(&conds));
    manifest.write(&sidecar(&args.out))?;
    Ok(EXIT_OK)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn cmd_blur(args: &BlurArgs) -> Result<i32> {
    let data = load_data(args.input.path())?;
    let n = data.tensor.rows();
    if let Some(expected) = args.n {
        if expected != n {
            return Err(Error::Shape(format!("--n {expected} but the input side is {n}")));
        }
    }
    let config = ExperimentConfig { n, sigma: args.shape.sigma, band: args.shape.band, eta: args.eta, seed: args.seed, ..Default::default() };
    config.validate()?;
    let mut inputs = data.inputs.clone();
    let a_true = match &args.operator {
        Some(path) => {
            inputs.push(path.clone());
            tns3::load(path)?
        }
        None => gaussian_blur_tensor(n, args.shape.sigma, args.shape.band)?,
    };
    check_order(&data.tensor, check_operator(&a_true)?)?;
    let b_true = tprod(&a_true, &data.tensor)?;
    let a_obs = add_noise(&a_true, args.eta, sub_seed(args.seed, 0));
    let b_obs = add_noise(&b_true, args.eta, sub_seed(args.seed, 1));

    fs::create_dir_all(&args.out)?;
    let mut outputs = Vec::new();
    for (name, t) in [("operator.tns3", &a_obs), ("truth.tns3", &data.tensor), ("observation.tns3", &b_obs)] {
        let path = args.out.join(name);
        tns3::save(&path, t)?;
        outputs.push(path);
    }
    outputs.extend(write_images(&b_obs, data.layout, &args.out, "blurred")?);
    let blurred_mse = mse(&b_obs, &data.tensor)?;
    println!("blurred mse {blurred_mse:.6e}");

    let mut manifest = RunManifest::new("blur", config);
    manifest.input_paths = inputs;
    manifest.output_paths = outputs;
    manifest.extra.insert("blurred_mse".into(), serde_json::json!(blurred_mse));
    manifest.extra.insert("layout".into(), data.layout.to_json());
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

fn label(config: &ExperimentConfig) -> String {
    let scheme = match config.solver.scheme {
        Scheme::Tensor => "tensor",
        Scheme::Matrix => "matrix",
    };
    format!("reg={};scheme={scheme}", config.regularizer)
}

/// Blur settings recorded by `blur` in the operator's directory, if any.
fn blur_config_near(operator: &Path) -> Option<ExperimentConfig> {
    let manifest = RunManifest::read(&operator.parent()?.join("manifest.json")).ok()?;
    (manifest.command == "blur").then_some(manifest.config)
}

/// Warns when the multiplier fell to zero, leaving an unregularized solution.
fn warn_collapse(report: &crate::solver::SolveReport) {
    if report.final_mu.abs() < MU_COLLAPSE {
        eprintln!("warning: the regularization multiplier collapsed to {:.1e}; the result is effectively unregularized", report.final_mu);
    }
}

fn cmd_deblur(args: &DeblurArgs) -> Result<i32> {
    let data = load_data(args.input.path())?;
    let a = tns3::load(&args.operator)?;
    let n = check_operator(&a)?;
    check_order(&data.tensor, n)?;
    let mut config = blur_config_near(&args.operator).unwrap_or_default();
    config.n = n;
    args.solver.apply(&mut config)?;
    config.solver.validate()?;
    let truth = match &args.truth {
        Some(path) => {
            let t = load_data(path)?.tensor;
            if t.shape() != data.tensor.shape() {
                return Err(Error::Shape(format!("truth {:?} does not match observation {:?}", t.shape(), data.tensor.shape())));
            }
            Some(t)
        }
        None => None,
    };

    let k = reg_operator(config.regularizer, n, n)?;
    let clock = Instant::now();
    let solved = solve_multi(&a, &data.tensor, &k, &config.solver)?;
    let wall = clock.elapsed().as_secs_f64();
    let constraint_norm = tprod(&k, &solved.x)?.fnorm();
    let report = aggregate_report(&solved.statuses, wall, constraint_norm);
    warn_collapse(&report);

    fs::create_dir_all(&args.out)?;
    let restored_path = args.out.join("restored.tns3");
    tns3::save(&restored_path, &solved.x)?;
    let mut outputs = vec![restored_path];
    outputs.extend(write_images(&solved.x, data.layout, &args.out, "restored")?);

    let metrics = match &truth {
        Some(t) => {
            let blurred_mse = mse(&data.tensor, t)?;
            let deblurred_mse = mse(&solved.x, t)?;
            println!("blurred mse {blurred_mse:.6e} deblurred mse {deblurred_mse:.6e}");
            Some(ExperimentResult {
                blurred_mse,
                deblurred_mse,
                restoring_proportion: restoring_proportion(blurred_mse, deblurred_mse),
                constraint_norm,
                report: report.clone(),
                blurred_mse_convention: BLURRED_MSE_CONVENTION.into(),
            })
        }
        None => None,
    };
    let row = MetricsRow {
        method: "trtls".into(),
        param: label(&config),
        mse: metrics.as_ref().map(|m| m.deblurred_mse),
        wall_time_s: wall,
        restoring_proportion: metrics.as_ref().map(|m| m.restoring_proportion),
    };
    let csv_path = args.out.join("metrics.csv");
    write_metrics(&csv_path, &[row])?;
    outputs.push(csv_path);

    let failed: Vec<usize> = (0..solved.statuses.len()).filter(|&j| !solved.statuses[j].converged()).collect();
    println!("{} of {} slices converged in at most {} iterations", solved.statuses.len() - failed.len(), solved.statuses.len(), report.iterations);

    let mut inputs = data.inputs;
    inputs.push(args.operator.clone());
    inputs.extend(args.truth.iter().cloned());
    let mut manifest = RunManifest::new("deblur", config);
    manifest.input_paths = inputs;
    manifest.output_paths = outputs;
    manifest.metrics = metrics;
    manifest.extra.insert("report".into(), serde_json::to_value(&report).map_err(|e| Error::Format(e.to_string()))?);
    manifest.extra.insert("unconverged_slices".into(), serde_json::json!(failed));
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<i32> {
    let data = load_data(args.input.path())?;
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    config.n = data.tensor.rows();
    if let Some(v) = args.sigma {
        config.sigma = v;
    }
    if let Some(v) = args.band {
        config.band = v;
    }
    if let Some(v) = args.eta {
        config.eta = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    args.solver.apply(&mut config)?;
    config.validate()?;
    let sweep = args.ttsvd_k_sweep.as_deref().map(parse_sweep).transpose()?;

    let exp = run_experiment(&data.tensor, &config)?;
    let r = &exp.result;
    warn_collapse(&r.report);
    println!(
        "trtls: blurred mse {:.6e} deblurred mse {:.6e} restoring {:.4}",
        r.blurred_mse, r.deblurred_mse, r.restoring_proportion
    );
    let mut rows = vec![MetricsRow {
        method: "trtls".into(),
        param: label(&config),
        mse: Some(r.deblurred_mse),
        wall_time_s: r.report.wall_time_s,
        restoring_proportion: Some(r.restoring_proportion),
    }];

    let clock = Instant::now();
    let factors = TtsvdFactorization::new(&exp.simulation.a_observed)?;
    let factor_time = clock.elapsed().as_secs_f64();
    let ks = sweep.unwrap_or_else(|| (1..=factors.max_rank().max(1)).collect());
    let mut best: Option<(usize, f64)> = None;
    for k in ks {
        let clock = Instant::now();
        let sol = factors.solve(&exp.simulation.b_observed, TruncationSpec::Rank(k))?;
        let elapsed = factor_time + clock.elapsed().as_secs_f64();
        let err = mse(&sol.x, &data.tensor)?;
        if best.is_none_or(|(_, b)| err < b) {
            best = Some((k, err));
        }
        rows.push(MetricsRow {
            method: "ttsvd".into(),
            param: format!("k={k}"),
            mse: Some(err),
            wall_time_s: elapsed,
            restoring_proportion: Some(restoring_proportion(r.blurred_mse, err)),
        });
    }
    if let Some((k, err)) = best {
        println!("ttsvd: best mse {err:.6e} at k = {k}");
    }

    fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("benchmark.csv");
    write_metrics(&csv_path, &rows)?;
    let restored = write_images(&exp.restored, data.layout, &args.out, "restored")?;
    let mut outputs = vec![csv_path];
    outputs.extend(restored);
    if let Some(path) = &args.scatter {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        for row in &rows {
            let s = ScatterRow { method: &row.method, param: &row.param, mse: row.mse, wall_time_s: row.wall_time_s };
            w.serialize(s).map_err(csv_error)?;
        }
        w.flush()?;
        outputs.push(path.clone());
    }

    let mut inputs = data.inputs;
    inputs.extend(args.config.iter().cloned());
    let converged = exp.result.report.converged;
    let mut manifest = RunManifest::new("benchmark", config);
    manifest.input_paths = inputs;
    manifest.output_paths = outputs;
    manifest.metrics = Some(exp.result);
    if let Some((k, err)) = best {
        manifest.extra.insert("ttsvd_best".into(), serde_json::json!({"k": k, "mse": err}));
    }
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(if converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) | Error::NonFinite(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) | Error::Shape(_) | Error::Bounds { .. } | Error::Capacity { .. } => EXIT_IO,
        Error::NotRealSpectral { .. } | Error::Singular { .. } | Error::DegenerateIterate { .. } | Error::Divergence(_)
        | Error::SvdNoConvergence { .. } => {
            EXIT_NOT_CONVERGED
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TRTLS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Invalid(format!("TRTLS_THREADS must be a positive integer, got {value:?}")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::GenOperator(a) => cmd_gen_operator(a),
        Command::Blur(a) => cmd_blur(a),
        Command::Deblur(a) => cmd_deblur(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
