//! The `dpost` command line.
//!
//! Every command that writes files also writes `manifest.json` next to
//! them; `dpost replay --manifest <file>` reruns the recorded command.
//!
//! Exit codes: 0 success, 2 invalid input, 3 remote denoiser failure,
//! 4 numerical failure, 1 anything else.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use base64::Engine;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::denoisers::{make_gmm_denoiser, Batch, Denoiser, DenoiserHandle};
use crate::error::{Error, Result};
use crate::formats::{
    convergence_table, moments_table, read_plpc, write_atomic, write_plpc, GmmDemoConfig, PlpcData, Table,
};
use crate::maxent::{default_support, fit_maxent, DEFAULT_GRID};
use crate::moments::{estimate_sigma, univariate_moments, MomentOptions};
use crate::oracle::{marginal_mixture, oracle_posterior_covariance, quadrature_central_moments};
use crate::pipeline::{
    count_modes, marginal_along, projection_range, region_mask, sweep_frames, total_variation, RegionSpec, SweepMode,
};
use crate::service::imaging::encode_png;
use crate::service::session::{
    resolve_sigma, resolve_source, CreateSessionRequest, DenoiserSpec, SigmaInfo, SigmaUnits, SourceSpec,
};
use crate::service::ServiceConfig;
use crate::spectra::{posterior_pcs, PcConfig, PrincipalComponentSet};

/// Relative height below which a local maximum is not counted as a mode.
pub const MODE_FLOOR: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "dpost", version, about = "Posterior moments, principal components and marginals from a denoiser")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scalar GMM problem: exact posterior vs the four-moment estimate.
    #[command(name = "demo-1d")]
    Demo1d(Demo1dArgs),
    /// Vector GMM problem: principal components and marginals vs the exact ones.
    #[command(name = "demo-gmm2d")]
    DemoGmm2d(DemoGmm2dArgs),
    /// Posterior principal components.
    Pcs(PcsArgs),
    /// Marginal density along one principal component.
    Marginal(MarginalArgs),
    /// Frames along one principal component.
    Sweep(SweepArgs),
    /// Noise level of an observation from a blind denoiser.
    EstimateSigma(EstimateSigmaArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Demo1dArgs {
    /// Problem file (prior, y, sigma).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the observation in the config.
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoGmm2dArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Units {
    #[default]
    Unit,
    Pixel,
}

/// Where the observation and denoiser come from.
///
/// `--input` is a problem file (`.json` with prior, y and sigma), a PNG
/// (needs `--denoiser` or `--gmm`), or with `--denoiser` a JSON array of
/// values.
#[derive(Clone, Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = Units::Unit)]
    pub sigma_units: Units,
    /// Base URL of a remote denoiser.
    #[arg(long)]
    pub denoiser: Option<String>,
    /// Per-pixel 1-D mixture prior for PNG inputs.
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
}

#[derive(Clone, Debug, Args)]
pub struct PcArgs {
    /// Pixel rectangle `x,y,w,h`.
    #[arg(long)]
    pub region: Option<RegionSpec>,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Always run all `k` iterations.
    #[arg(long)]
    pub no_early_stop: bool,
}

impl PcArgs {
    pub fn config(&self, shape: [usize; 3]) -> Result<PcConfig> {
        let mask = region_mask(shape, self.region, self.n)?;
        let cfg = PcConfig {
            n_components: self.n,
            iterations: self.k,
            approx_constant: self.c,
            seed: self.seed,
            mask: mask.iter().any(|b| !b).then_some(mask),
            convergence_threshold: if self.no_early_stop {
                None
            } else {
                PcConfig::default().convergence_threshold
            },
            ..PcConfig::default()
        };
        cfg.validate(shape.iter().product())?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PcsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pc: PcArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MarginalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pc: PcArgs,
    /// Use stored components instead of computing them.
    #[arg(long)]
    pub pcs: Option<PathBuf>,
    /// Component index, 0-based.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[default]
    Raw,
    SqrtLambda,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pc: PcArgs,
    #[arg(long)]
    pub pcs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Comma-separated, e.g. `--alphas=-1,0,1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub alphas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    pub mode: Mode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateSigmaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Also write the estimate and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub fixture_dir: Option<PathBuf>,
    #[arg(long)]
    pub persist_dir: Option<PathBuf>,
    #[arg(long)]
    pub job_budget_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written as `manifest.json` beside the outputs of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, with file paths made absolute.
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

const PATH_FLAGS: [&str; 6] = ["--input", "--config", "--gmm", "--pcs", "--out", "--manifest"];

fn absolute(p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        return p.to_string();
    }
    std::env::current_dir()
        .map(|d| d.join(path).to_string_lossy().into_owned())
        .unwrap_or_else(|_| p.to_string())
}

fn absolutize_args(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut expect_path = false;
    for a in args {
        if expect_path {
            out.push(absolute(a));
            expect_path = false;
            continue;
        }
        match a.split_once('=') {
            Some((flag, value)) if PATH_FLAGS.contains(&flag) => out.push(format!("{flag}={}", absolute(value))),
            _ => {
                expect_path = PATH_FLAGS.contains(&a.as_str());
                out.push(a.clone());
            }
        }
    }
    out
}

fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut res = Vec::with_capacity(args.len() + 2);
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            res.push(a.clone());
        }
    }
    res.push("--out".into());
    res.push(out);
    res
}

struct Recorder<'a> {
    args: &'a [String],
    out: PathBuf,
    outputs: Vec<String>,
}

impl<'a> Recorder<'a> {
    fn new(args: &'a [String], out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out)?;
        Ok(Recorder {
            args,
            out: out.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, bytes)
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.bytes(name, t.to_csv().as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(v)?;
        text.push(b'\n');
        self.bytes(name, &text)
    }

    fn plpc(&mut self, name: &str, data: &PlpcData) -> Result<()> {
        let p = self.path(name);
        write_plpc(&p, data)
    }

    fn finish(self, command: &str, config_paths: Vec<&Path>, seed: Option<u64>) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            args: absolutize_args(self.args),
            config_paths: config_paths
                .into_iter()
                .map(|p| PathBuf::from(absolute(&p.to_string_lossy())))
                .collect(),
            seed,
            output_dir: PathBuf::from(absolute(&self.out.to_string_lossy())),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs: self.outputs,
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        write_atomic(&self.out.join(MANIFEST_FILE), &text)
    }
}

/// Map an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Domain(_) | Error::Json(_) | Error::Io(_) => 2,
        e if e.is_remote() => 3,
        e if e.is_numerical() => 4,
        _ => 1,
    }
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, argv.get(1..).unwrap_or(&[])) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command. `args` is recorded in the manifest.
pub fn execute(cli: Cli, args: &[String]) -> Result<()> {
    match cli.command {
        Command::Demo1d(a) => {
            let mut cfg = GmmDemoConfig::load(&a.config)?;
            if let Some(y) = a.y {
                cfg.y = vec![y];
            }
            if let Some(s) = a.sigma {
                cfg.sigma = s;
            }
            cfg.validate()?;
            let mut rec = Recorder::new(args, &a.out)?;
            let s = demo_1d_into(&cfg, a.grid, &mut rec)?;
            println!(
                "tv={} modes_estimate={} modes_truth={} mu2={} (oracle {})",
                s.tv, s.modes_estimate, s.modes_truth, s.estimate[1], s.oracle[1]
            );
            rec.finish("demo-1d", vec![&a.config], None)
        }
        Command::DemoGmm2d(a) => {
            let mut cfg = GmmDemoConfig::load(&a.config)?;
            if let Some(s) = a.sigma {
                cfg.sigma = s;
            }
            cfg.validate()?;
            let pc = PcConfig {
                n_components: a.n,
                iterations: a.k,
                approx_constant: a.c,
                seed: a.seed,
                ..PcConfig::default()
            };
            let mut rec = Recorder::new(args, &a.out)?;
            let s = demo_gmm2d_into(&cfg, &pc, a.grid, &mut rec)?;
            for (i, m) in s.marginals.iter().enumerate() {
                println!(
                    "pc{i}: lambda={} oracle={} |cos|={} tv={} modes={}",
                    s.eigenvalues[i], s.oracle_eigenvalues[i], s.abs_cos[i], m.tv, m.modes_estimate
                );
            }
            println!("orthonormality_error={} iterations={}", s.orthonormality_error, s.iterations_run);
            rec.finish("demo-gmm2d", vec![&a.config], Some(a.seed))
        }
        Command::Pcs(a) => {
            let p = load_problem(&a.input)?;
            let cfg = a.pc.config(p.shape)?;
            let mut rec = Recorder::new(args, &a.out)?;
            let pcs = posterior_pcs(p.denoiser.as_ref(), &p.y, p.sigma.value, &cfg)?;
            write_pcs(&mut rec, &pcs)?;
            rec.json("sigma.json", &p.sigma)?;
            for (i, l) in pcs.eigenvalues.iter().enumerate() {
                println!("pc{i}: lambda={l}");
            }
            rec.finish("pcs", input_paths(&a.input), Some(a.pc.seed))
        }
        Command::Marginal(a) => {
            let p = load_problem(&a.input)?;
            let mut rec = Recorder::new(args, &a.out)?;
            let pcs = obtain_pcs(&p, &a.pc, a.pcs.as_deref())?;
            let (v, lambda) = pick(&pcs, a.index)?;
            let clip = p.clip.map(|(lo, hi)| projection_range(v, lo, hi));
            let stem = format!("marginal_pc{}", a.index);
            match marginal_along(p.denoiser.as_ref(), &p.y, p.sigma.value, v, lambda, a.grid, clip) {
                Ok(m) => {
                    rec.bytes(&format!("{stem}.csv"), m.density.to_csv().as_bytes())?;
                    rec.json(
                        &format!("{stem}.json"),
                        &serde_json::json!({
                            "pc_index": a.index,
                            "eigenvalue": lambda,
                            "moments": m.moments,
                            "skewness": m.moments.skewness(),
                            "kurtosis": m.moments.kurtosis(),
                            "density": m.density.sidecar_json(),
                        }),
                    )?;
                    println!(
                        "mean={} mu2={} skewness={} kurtosis={} fit_residual={}",
                        m.moments.mean,
                        m.moments.central[0],
                        m.moments.skewness(),
                        m.moments.kurtosis(),
                        m.density.fit_residual
                    );
                    rec.finish("marginal", input_paths(&a.input), Some(a.pc.seed))
                }
                Err(me) => {
                    rec.json(
                        &format!("{stem}.json"),
                        &serde_json::json!({"pc_index": a.index, "error": me.error.to_string(), "moments": me.moments}),
                    )?;
                    Err(me.error)
                }
            }
        }
        Command::Sweep(a) => {
            let p = load_problem(&a.input)?;
            let mut rec = Recorder::new(args, &a.out)?;
            let pcs = obtain_pcs(&p, &a.pc, a.pcs.as_deref())?;
            let (v, lambda) = pick(&pcs, a.index)?;
            let mean = p.denoiser.denoise_one(&p.y, p.sigma.value)?;
            let mode = match a.mode {
                Mode::Raw => SweepMode::Raw,
                Mode::SqrtLambda => SweepMode::SqrtLambda,
            };
            let frames = sweep_frames(&mean, v, lambda, &a.alphas, mode);
            let mut t = Table::new(&["frame", "alpha", "index", "value"]);
            for (k, (f, alpha)) in frames.iter().zip(&a.alphas).enumerate() {
                for (j, x) in f.iter().enumerate() {
                    t.push(vec![k as f64, *alpha, j as f64, *x]);
                }
                if p.is_image {
                    rec.bytes(&format!("frame_{k:03}.png"), &encode_png(p.shape, f)?)?;
                }
            }
            rec.table("frames.csv", &t)?;
            println!("wrote {} frames along pc{}", frames.len(), a.index);
            rec.finish("sweep", input_paths(&a.input), Some(a.pc.seed))
        }
        Command::EstimateSigma(a) => {
            let p = load_observation(&a.input)?;
            let s = estimate_sigma(p.denoiser.as_ref(), &p.y)?;
            println!("{s}");
            if let Some(out) = &a.out {
                let mut rec = Recorder::new(args, out)?;
                rec.json("sigma.json", &serde_json::json!({"sigma": s, "provenance": "estimated"}))?;
                rec.finish("estimate-sigma", input_paths(&a.input), None)?;
            }
            Ok(())
        }
        Command::Serve(a) => {
            let mut config = ServiceConfig::from_env()?;
            if let Some(p) = a.port {
                config.port = p;
            }
            if a.fixture_dir.is_some() {
                config.fixture_dir = a.fixture_dir;
            }
            if a.persist_dir.is_some() {
                config.persistence_dir = a.persist_dir;
            }
            if let Some(ms) = a.job_budget_ms {
                config.job_budget = std::time::Duration::from_millis(ms);
            }
            eprintln!("listening on 0.0.0.0:{}", config.port);
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(crate::service::serve(config))
        }
        Command::Replay(a) => {
            let manifest: RunManifest = serde_json::from_slice(&std::fs::read(&a.manifest)?)?;
            let args = match &a.out {
                Some(out) => replace_out(&manifest.args, Path::new(&absolute(&out.to_string_lossy()))),
                None => manifest.args.clone(),
            };
            let argv = std::iter::once("dpost".to_string()).chain(args.iter().cloned());
            let cli = Cli::try_parse_from(argv).map_err(|e| Error::validation(format!("manifest arguments: {e}")))?;
            if matches!(cli.command, Command::Replay(_) | Command::Serve(_)) {
                return Err(Error::validation("manifest does not record a replayable command"));
            }
            execute(cli, &args)
        }
    }
}

fn input_paths(a: &InputArgs) -> Vec<&Path> {
    std::iter::once(a.input.as_path()).chain(a.gmm.as_deref()).collect()
}

/// A resolved observation with its denoiser and noise level.
pub struct Problem {
    pub y: Vec<f64>,
    pub shape: [usize; 3],
    pub denoiser: DenoiserHandle,
    pub sigma: SigmaInfo,
    /// Value range of image inputs.
    pub clip: Option<(f64, f64)>,
    pub is_image: bool,
}

fn source_for(a: &InputArgs) -> Result<SourceSpec> {
    let ext = a
        .input
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::validation(format!("cannot read {}: {e}", p.display())));
    match ext.as_str() {
        "png" => {
            let denoiser = match (&a.denoiser, &a.gmm) {
                (Some(url), None) => DenoiserSpec::External {
                    url: url.clone(),
                    timeout_ms: Some(a.timeout_ms),
                    max_batch: None,
                },
                (None, Some(g)) => DenoiserSpec::PixelGmm {
                    prior: crate::denoisers::GmmPrior::load(g)
                        .map_err(|e| Error::validation(format!("{}: {e}", g.display())))?,
                },
                _ => return Err(Error::validation("a PNG input needs exactly one of --denoiser or --gmm")),
            };
            Ok(SourceSpec::Image {
                png_base64: base64::engine::general_purpose::STANDARD.encode(read(&a.input)?),
                denoiser,
            })
        }
        "json" => match &a.denoiser {
            Some(url) => {
                let y: Vec<f64> = serde_json::from_slice(&read(&a.input)?)
                    .map_err(|e| Error::validation(format!("{}: expected an array of numbers: {e}", a.input.display())))?;
                Ok(SourceSpec::External {
                    url: url.clone(),
                    y,
                    timeout_ms: Some(a.timeout_ms),
                    max_batch: None,
                })
            }
            // A problem file is resolved as a fixture of its own directory.
            None => {
                if !a.input.is_file() {
                    return Err(Error::validation(format!("cannot read {}", a.input.display())));
                }
                let name = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                Ok(SourceSpec::Fixture { name: name.to_string() })
            }
        },
        _ => Err(Error::validation(format!(
            "unsupported input {}; expected .png or .json",
            a.input.display()
        ))),
    }
}

fn resolve(a: &InputArgs, need_sigma: bool) -> Result<Problem> {
    let source = source_for(a)?;
    let fixture_dir = a.input.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let r = resolve_source(&source, Some(fixture_dir))?;
    let is_image = matches!(source, SourceSpec::Image { .. });
    let req = CreateSessionRequest {
        source,
        sigma: a.sigma,
        sigma_units: match a.sigma_units {
            Units::Unit => SigmaUnits::Unit,
            Units::Pixel => SigmaUnits::Pixel,
        },
    };
    let sigma = if need_sigma {
        resolve_sigma(&req, &r)?
    } else {
        SigmaInfo {
            value: f64::NAN,
            provenance: crate::service::session::SigmaProvenance::Estimated,
            supplied: None,
            rescale: None,
        }
    };
    Ok(Problem {
        y: r.y,
        shape: r.shape,
        denoiser: r.denoiser,
        sigma,
        clip: r.clip,
        is_image,
    })
}

/// Resolve `--input` and friends, including the noise level.
pub fn load_problem(a: &InputArgs) -> Result<Problem> {
    resolve(a, true)
}

fn load_observation(a: &InputArgs) -> Result<Problem> {
    resolve(a, false)
}

fn obtain_pcs(p: &Problem, pc: &PcArgs, stored: Option<&Path>) -> Result<PrincipalComponentSet> {
    match stored {
        Some(path) => {
            let data = read_plpc(path)?;
            if data.dim != p.y.len() {
                return Err(Error::validation(format!(
                    "{} has dimension {} but the input has {}",
                    path.display(),
                    data.dim,
                    p.y.len()
                )));
            }
            Ok(PrincipalComponentSet {
                vectors: data.vectors,
                eigenvalues: data.eigenvalues,
                convergence: Vec::new(),
                iterations_run: 0,
                redraws: Vec::new(),
                sigma: p.sigma.value,
            })
        }
        None => posterior_pcs(p.denoiser.as_ref(), &p.y, p.sigma.value, &pc.config(p.shape)?),
    }
}

fn pick(pcs: &PrincipalComponentSet, i: usize) -> Result<(&[f64], f64)> {
    if i >= pcs.len() {
        return Err(Error::validation(format!(
            "component {i} requested but only {} are available",
            pcs.len()
        )));
    }
    Ok((&pcs.vectors[i], pcs.eigenvalues[i]))
}

fn write_pcs(rec: &mut Recorder, pcs: &PrincipalComponentSet) -> Result<()> {
    rec.plpc("pcs.plpc", &PlpcData::from(pcs))?;
    let mut t = Table::new(&["index", "eigenvalue"]);
    for (i, l) in pcs.eigenvalues.iter().enumerate() {
        t.push(vec![i as f64, *l]);
    }
    rec.table("eigenvalues.csv", &t)?;
    rec.table("convergence.csv", &convergence_table(&pcs.convergence))?;
    rec.json(
        "pcs_meta.json",
        &serde_json::json!({
            "iterations_run": pcs.iterations_run,
            "redraws": pcs.redraws,
            "sigma": pcs.sigma,
        }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demo1dSummary {
    pub y: f64,
    pub sigma: f64,
    /// Total-variation distance between the estimate and the exact posterior.
    pub tv: f64,
    pub modes_estimate: usize,
    pub modes_truth: usize,
    /// `[μ₁, μ₂, μ₃, μ₄]` from the denoiser derivatives.
    pub estimate: [f64; 4],
    /// The same by quadrature of the exact posterior.
    pub oracle: [f64; 4],
    pub fit_residual: f64,
}

/// Run `demo-1d` into `out`.
pub fn demo_1d(cfg: &GmmDemoConfig, grid: usize, out: &Path) -> Result<Demo1dSummary> {
    let args = Vec::new();
    let mut rec = Recorder::new(&args, out)?;
    demo_1d_into(cfg, grid, &mut rec)
}

fn demo_1d_into(cfg: &GmmDemoConfig, grid: usize, rec: &mut Recorder) -> Result<Demo1dSummary> {
    cfg.validate()?;
    if cfg.prior.dim() != 1 {
        return Err(Error::validation("demo-1d needs a one-dimensional prior"));
    }
    let (y, sigma) = (cfg.y[0], cfg.sigma);
    let den = make_gmm_denoiser(cfg.prior.clone(), 4);
    let est = univariate_moments(&den, y, sigma, &MomentOptions::default())?;
    let oracle = quadrature_central_moments(&cfg.prior, sigma, &cfg.y, &[1.0], 4)?;
    let density = fit_maxent(est.mean, est.central, default_support(est.mean, est.central[0], None), grid)?;
    let truth_mix = marginal_mixture(&cfg.prior, sigma, &cfg.y, &[1.0])?;
    let p_est = density.density();
    let p_true: Vec<f64> = density.grid.iter().map(|x| truth_mix.density(*x)).collect();
    let tv = total_variation(&density.grid, &p_est, &p_true);

    let mut post = Table::new(&["x", "p_true", "p_maxent"]);
    for ((x, a), b) in density.grid.iter().zip(&p_true).zip(&p_est) {
        post.push(vec![*x, *a, *b]);
    }
    rec.table("posterior.csv", &post)?;

    // μ₁ over a range covering the noisy-observation marginal.
    let m = cfg.prior.mean()[0];
    let spread = (0..cfg.prior.n_components())
        .map(|l| {
            let d = cfg.prior.means()[l][0] - m;
            cfg.prior.weights()[l] * (d * d + cfg.prior.covariances()[l][(0, 0)])
        })
        .sum::<f64>()
        + sigma * sigma;
    let half = 4.0 * spread.sqrt();
    let ys: Vec<f64> = (0..401).map(|i| m - half + 2.0 * half * i as f64 / 400.0).collect();
    let mu1 = den.denoise(&Batch::new(1, ys.clone())?, sigma)?;
    let mut curve = Table::new(&["y", "mu1"]);
    for (a, b) in ys.iter().zip(mu1.as_slice()) {
        curve.push(vec![*a, *b]);
    }
    rec.table("posterior_mean.csv", &curve)?;
    rec.bytes("maxent.csv", density.to_csv().as_bytes())?;
    rec.table("moments.csv", &moments_table([(0, 0, &est)]))?;
    let mut om = Table::new(&["mu1", "mu2", "mu3", "mu4"]);
    let [o2, o3, o4] = oracle.central_234();
    om.push(vec![oracle.mean, o2, o3, o4]);
    rec.table("oracle_moments.csv", &om)?;

    let summary = Demo1dSummary {
        y,
        sigma,
        tv,
        modes_estimate: count_modes(&p_est, MODE_FLOOR),
        modes_truth: count_modes(&p_true, MODE_FLOOR),
        estimate: [est.mean, est.central[0], est.central[1], est.central[2]],
        oracle: [oracle.mean, o2, o3, o4],
        fit_residual: density.fit_residual,
    };
    rec.json("summary.json", &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub tv: f64,
    pub modes_estimate: usize,
    pub modes_truth: usize,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoGmm2dSummary {
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
    pub oracle_eigenvalues: Vec<f64>,
    /// `|cos|` between each component and the matching exact eigenvector.
    pub abs_cos: Vec<f64>,
    /// `max |VᵀV − I|`.
    pub orthonormality_error: f64,
    pub iterations_run: usize,
    pub marginals: Vec<MarginalSummary>,
}

/// Run `demo-gmm2d` into `out`.
pub fn demo_gmm2d(cfg: &GmmDemoConfig, pc: &PcConfig, grid: usize, out: &Path) -> Result<DemoGmm2dSummary> {
    let args = Vec::new();
    let mut rec = Recorder::new(&args, out)?;
    demo_gmm2d_into(cfg, pc, grid, &mut rec)
}

fn demo_gmm2d_into(cfg: &GmmDemoConfig, pc: &PcConfig, grid: usize, rec: &mut Recorder) -> Result<DemoGmm2dSummary> {
    cfg.validate()?;
    let sigma = cfg.sigma;
    let den: DenoiserHandle = Arc::new(make_gmm_denoiser(cfg.prior.clone(), 4));
    let pcs = posterior_pcs(den.as_ref(), &cfg.y, sigma, pc)?;
    let oracle = oracle_posterior_covariance(&cfg.prior, sigma, &cfg.y)?;
    let n = pcs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let abs_cos: Vec<f64> = (0..n).map(|i| dot(&pcs.vectors[i], &oracle.eigenvectors[i]).abs()).collect();
    let mut orth: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            orth = orth.max((dot(&pcs.vectors[i], &pcs.vectors[j]) - target).abs());
        }
    }
    write_pcs(rec, &pcs)?;
    let mut ev = Table::new(&["index", "eigenvalue", "oracle_eigenvalue", "abs_cos"]);
    for (i, c) in abs_cos.iter().enumerate() {
        ev.push(vec![i as f64, pcs.eigenvalues[i], oracle.eigenvalues[i], *c]);
    }
    rec.table("eigenvalues.csv", &ev)?;

    let mut marginals = Vec::with_capacity(n);
    let mut moment_rows = Vec::with_capacity(n);
    for i in 0..n {
        let v = &pcs.vectors[i];
        let m = marginal_along(den.as_ref(), &cfg.y, sigma, v, pcs.eigenvalues[i], grid, None).map_err(|e| e.error)?;
        let mix = marginal_mixture(&cfg.prior, sigma, &cfg.y, v)?;
        let p_est = m.density.density();
        let p_true: Vec<f64> = m.density.grid.iter().map(|x| mix.density(*x)).collect();
        let mut t = Table::new(&["x", "p_maxent", "p_true"]);
        for ((x, a), b) in m.density.grid.iter().zip(&p_est).zip(&p_true) {
            t.push(vec![*x, *a, *b]);
        }
        rec.table(&format!("marginal_pc{i}.csv"), &t)?;
        marginals.push(MarginalSummary {
            tv: total_variation(&m.density.grid, &p_est, &p_true),
            modes_estimate: count_modes(&p_est, MODE_FLOOR),
            modes_truth: count_modes(&p_true, MODE_FLOOR),
            fit_residual: m.density.fit_residual,
        });
        moment_rows.push(m.moments);
    }
    rec.table(
        "moments.csv",
        &moments_table(moment_rows.iter().enumerate().map(|(i, m)| (0, i, m))),
    )?;
    let summary = DemoGmm2dSummary {
        sigma,
        eigenvalues: pcs.eigenvalues.clone(),
        oracle_eigenvalues: oracle.eigenvalues[..n].to_vec(),
        abs_cos,
        orthonormality_error: orth,
        iterations_run: pcs.iterations_run,
        marginals,
    };
    rec.json("summary.json", &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_made_absolute() {
        let args: Vec<String> = ["pcs", "--input", "a.json", "--out=o", "--n", "2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let abs = absolutize_args(&args);
        assert!(Path::new(&abs[2]).is_absolute());
        assert!(abs[3].starts_with("--out=/"));
        assert_eq!(abs[5], "2");
    }

    #[test]
    fn out_is_replaced() {
        let args: Vec<String> = ["pcs", "--out", "a", "--n", "2"].iter().map(|s| s.to_string()).collect();
        assert_eq!(replace_out(&args, Path::new("/b")), ["pcs", "--n", "2", "--out", "/b"]);
    }

    #[test]
    fn defaults_match_the_documented_ones() {
        let cli = Cli::try_parse_from(["dpost", "pcs", "--input", "x.json", "--out", "o"]).unwrap();
        let Command::Pcs(a) = cli.command else { panic!() };
        assert_eq!((a.pc.n, a.pc.k, a.pc.c, a.pc.seed), (3, 50, 1e-5, 0));
    }

    #[test]
    fn alphas_accept_negative_values() {
        let cli = Cli::try_parse_from(["dpost", "sweep", "--input", "x.json", "--out", "o", "--alphas=-1,0,1"]).unwrap();
        let Command::Sweep(a) = cli.command else { panic!() };
        assert_eq!(a.alphas, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::validation("x")), 2);
        assert_eq!(exit_code(&Error::Connection("x".into())), 3);
        assert_eq!(exit_code(&Error::Fit("x".into())), 4);
    }
}
