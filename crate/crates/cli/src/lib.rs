//! Command-line workflows over `pathssl-core`.
//!
//! [`dispatch`] parses an argument vector, runs one subcommand and writes a single JSON
//! line to `stdout`. Diagnostics go to `stderr`. Exit codes: 0 success, 1 usage error,
//! 2 data error.

pub mod config;
pub mod format;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pathssl_core::augment::{self, CropParams, ViewPolicy};
use pathssl_core::posenc::{self, CsdConfig};
use pathssl_core::probe::{self, LabeledEmbeddings, ProbeConfig};
use pathssl_core::regularizers::{self, KernelConfig};
use pathssl_core::tiling::{self, SlideImage, STANDARD_MPPS};

pub use config::{ConfigError, RunConfig};
pub use format::FormatError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error(transparent)]
    Core(#[from] pathssl_core::Error),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "pathssl",
    version,
    about = "Tiling, view geometry, regularizers, position encodings and probes"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewModeArg {
    Crop,
    Ect,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PairsArg {
    GlobalGlobal,
    GlobalLocal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Koleo,
    Kde,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PosencModeArg {
    Csd,
    Lpm,
}

fn parse_pair<T: std::str::FromStr>(text: &str) -> Result<(T, T), String> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated values, got {text:?}"))?;
    let parse = |s: &str| s.trim().parse::<T>().map_err(|_| format!("cannot parse {s:?}"));
    Ok((parse(a)?, parse(b)?))
}

fn f64_pair(text: &str) -> Result<(f64, f64), String> {
    parse_pair(text)
}

fn usize_pair(text: &str) -> Result<(usize, usize), String> {
    parse_pair(text)
}

fn path_pair(text: &str) -> Result<(PathBuf, PathBuf), String> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| format!("expected embeddings,labels, got {text:?}"))?;
    Ok((PathBuf::from(a), PathBuf::from(b)))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut a PNG slide into tissue tiles and write a manifest.
    Tile {
        #[arg(long)]
        input: PathBuf,
        /// Microns per pixel of the input.
        #[arg(long)]
        mpp: f64,
        #[arg(long, default_value_t = 224)]
        size: u32,
        #[arg(long)]
        min_coverage: Option<f64>,
        /// One `x,y,size,mpp,coverage` line per accepted tile.
        #[arg(long)]
        manifest: PathBuf,
        /// Also write each accepted tile as `<x>_<y>.png`.
        #[arg(long)]
        tiles_dir: Option<PathBuf>,
        /// Threshold overrides (`hue`, `saturation`, `value`, `min_coverage`).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sample two views of a square PNG and write them out.
    AugmentPreview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "crop")]
        mode: ViewModeArg,
        #[arg(long, default_value_t = augment::GLOBAL_OUTPUT)]
        out: u32,
        #[arg(long, value_parser = f64_pair)]
        scale: Option<(f64, f64)>,
        #[arg(long, value_parser = f64_pair)]
        aspect: Option<(f64, f64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Monte Carlo mean IoU between paired views.
    IouSim {
        #[arg(long, value_enum)]
        mode: ViewModeArg,
        #[arg(long)]
        source: u32,
        #[arg(long, default_value_t = augment::GLOBAL_OUTPUT)]
        out: u32,
        #[arg(long, value_parser = f64_pair)]
        scale: Option<(f64, f64)>,
        #[arg(long, value_parser = f64_pair)]
        aspect: Option<(f64, f64)>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "global-global")]
        pairs: PairsArg,
    },
    /// Entropy estimate of an embedding file, after projecting rows onto the sphere.
    RegEval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = regularizers::DEFAULT_KAPPA)]
        kappa: f64,
        /// Write the gradient with respect to the normalized rows as an embedding file.
        #[arg(long)]
        grad: Option<PathBuf>,
    },
    /// Write a position-encoding grid as an `H x W x D` array file.
    Posenc {
        #[arg(long, value_enum)]
        mode: PosencModeArg,
        #[arg(long, value_parser = usize_pair)]
        grid: (usize, usize),
        #[arg(long)]
        mpp: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = posenc::DEFAULT_REFERENCE_MPP)]
        ref_mpp: f64,
        #[arg(long, default_value_t = posenc::DEFAULT_OMEGA)]
        omega: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear probe and report test accuracy.
    Probe {
        #[arg(long, value_parser = path_pair)]
        train: (PathBuf, PathBuf),
        #[arg(long, value_parser = path_pair)]
        test: (PathBuf, PathBuf),
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Hyperparameter overrides; flags win over the file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct TileReport {
    accepted: usize,
    candidates: u32,
    manifest: String,
}

#[derive(Serialize)]
struct ViewReport {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    out: u32,
    path: String,
}

#[derive(Serialize)]
struct PreviewReport {
    views: [ViewReport; 2],
    iou: f64,
}

#[derive(Serialize)]
struct IouReport {
    mean: f64,
    stderr: f64,
    trials: usize,
}

#[derive(Serialize)]
struct RegReport {
    value: f64,
    n: usize,
    dim: usize,
}

#[derive(Serialize)]
struct PosencReport {
    shape: [usize; 3],
    out: String,
}

#[derive(Serialize)]
struct ProbeReport {
    test_accuracy: f64,
    train_loss_final: f64,
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = String::from_utf8_lossy(&read(path)?).into_owned();
    RunConfig::parse(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

fn open_png(path: &Path) -> CliResult<image::RgbImage> {
    let img = image::open(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

fn save_png(img: &image::RgbImage, path: &Path) -> CliResult<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_labeled(paths: &(PathBuf, PathBuf)) -> CliResult<LabeledEmbeddings> {
    let (emb, lab) = paths;
    let (n, dim, values) = format::parse_embedding_payload(&read(emb)?).map_err(|source| CliError::Format {
        path: emb.clone(),
        source,
    })?;
    let text = String::from_utf8_lossy(&read(lab)?).into_owned();
    let labels = format::parse_labels(&text).map_err(|source| CliError::Format {
        path: lab.clone(),
        source,
    })?;
    if labels.len() != n {
        return Err(CliError::Data(format!(
            "{} has {n} rows but {} has {} labels",
            emb.display(),
            lab.display(),
            labels.len()
        )));
    }
    Ok(LabeledEmbeddings::new(
        values.into_iter().map(f64::from).collect(),
        labels,
        dim,
    )?)
}

fn view_policy(
    mode: ViewModeArg,
    source: u32,
    out: u32,
    scale: Option<(f64, f64)>,
    aspect: Option<(f64, f64)>,
) -> CliResult<ViewPolicy> {
    Ok(match mode {
        ViewModeArg::Crop => ViewPolicy::crop_resize(
            source,
            out,
            scale.unwrap_or(augment::DINO_GLOBAL_SCALE),
            aspect.unwrap_or(augment::DINO_ASPECT),
        )?,
        ViewModeArg::Ect => ViewPolicy::ect(
            source,
            out,
            scale.unwrap_or(augment::ECT_SCALE),
            aspect.unwrap_or(augment::ECT_ASPECT),
        )?,
    })
}

/// Local partner of a global policy: DINOv2 local ranges for crop-and-resize, the same
/// ranges at the local output size for ECT.
fn local_policy(global: &ViewPolicy, mode: ViewModeArg) -> CliResult<ViewPolicy> {
    Ok(match mode {
        ViewModeArg::Crop => ViewPolicy::crop_resize(
            global.source_size,
            augment::LOCAL_OUTPUT,
            augment::DINO_LOCAL_SCALE,
            global.aspect_range,
        )?,
        ViewModeArg::Ect => ViewPolicy::ect(
            global.source_size,
            augment::LOCAL_OUTPUT,
            global.scale_range,
            global.aspect_range,
        )?,
    })
}

fn view_report(p: &CropParams, path: &Path) -> ViewReport {
    ViewReport {
        x: p.x,
        y: p.y,
        w: p.w,
        h: p.h,
        out: p.out,
        path: path.display().to_string(),
    }
}

fn run(command: Command, stderr: &mut dyn Write) -> CliResult<String> {
    let json = match command {
        Command::Tile {
            input,
            mpp,
            size,
            min_coverage,
            manifest,
            tiles_dir,
            config,
        } => {
            let cfg = read_config(config.as_deref())?;
            let thresholds = cfg.hsv_thresholds()?;
            let min_coverage = min_coverage
                .or(cfg.min_coverage)
                .unwrap_or(tiling::DEFAULT_MIN_COVERAGE);
            let slide = SlideImage::new(open_png(&input)?, mpp)?;
            let candidates = (slide.width() / size) * (slide.height() / size);
            let tiles = tiling::extract_tiles(&slide, size, &thresholds, min_coverage)?;
            let mut text = String::new();
            for t in &tiles {
                text.push_str(&t.manifest_line());
                text.push('\n');
            }
            write(&manifest, text.as_bytes())?;
            if let Some(dir) = tiles_dir {
                create_dir(&dir)?;
                for t in &tiles {
                    save_png(&t.pixels, &dir.join(format!("{}_{}.png", t.origin.0, t.origin.1)))?;
                }
            }
            let _ = writeln!(stderr, "{} of {candidates} tiles accepted", tiles.len());
            serde_json::to_string(&TileReport {
                accepted: tiles.len(),
                candidates,
                manifest: manifest.display().to_string(),
            })
        }
        Command::AugmentPreview {
            input,
            mode,
            out,
            scale,
            aspect,
            seed,
            output_dir,
        } => {
            let img = open_png(&input)?;
            if img.width() != img.height() {
                return Err(CliError::Data(format!(
                    "{} is {}x{}; views are sampled from square images",
                    input.display(),
                    img.width(),
                    img.height()
                )));
            }
            let policy = view_policy(mode, img.width(), out, scale, aspect)?;
            let (a, b) = augment::sample_view_pair(&policy, seed)?;
            create_dir(&output_dir)?;
            let paths = [output_dir.join("view_a.png"), output_dir.join("view_b.png")];
            save_png(&augment::apply_crop(&img, &a)?, &paths[0])?;
            save_png(&augment::apply_crop(&img, &b)?, &paths[1])?;
            serde_json::to_string(&PreviewReport {
                views: [view_report(&a, &paths[0]), view_report(&b, &paths[1])],
                iou: augment::view_iou(&a, &b),
            })
        }
        Command::IouSim {
            mode,
            source,
            out,
            scale,
            aspect,
            trials,
            seed,
            pairs,
        } => {
            let global = view_policy(mode, source, out, scale, aspect)?;
            let est = match pairs {
                PairsArg::GlobalGlobal => augment::estimate_mean_iou(&global, trials, seed)?,
                PairsArg::GlobalLocal => {
                    augment::estimate_pair_iou(&global, &local_policy(&global, mode)?, trials, seed)?
                }
            };
            serde_json::to_string(&IouReport {
                mean: est.mean,
                stderr: est.stderr,
                trials: est.trials,
            })
        }
        Command::RegEval {
            input,
            estimator,
            kappa,
            grad,
        } => {
            let batch = format::parse_embedding_file(&read(&input)?).map_err(|source| CliError::Format {
                path: input.clone(),
                source,
            })?;
            let batch = regularizers::normalize_to_sphere(&batch)?;
            let cfg = KernelConfig::vmf(kappa)?;
            let value = match estimator {
                EstimatorArg::Koleo => regularizers::koleo_entropy(&batch)?,
                EstimatorArg::Kde => regularizers::kde_entropy(&batch, &cfg)?,
            };
            if let Some(path) = grad {
                let g = match estimator {
                    EstimatorArg::Koleo => regularizers::koleo_grad(&batch)?,
                    EstimatorArg::Kde => regularizers::kde_grad(&batch, &cfg)?,
                };
                let bytes =
                    format::write_embedding_rows(batch.n(), batch.dim(), &g).map_err(|source| CliError::Format {
                        path: path.clone(),
                        source,
                    })?;
                write(&path, &bytes)?;
            }
            serde_json::to_string(&RegReport {
                value,
                n: batch.n(),
                dim: batch.dim(),
            })
        }
        Command::Posenc {
            mode,
            grid: (h, w),
            mpp,
            dim,
            ref_mpp,
            omega,
            seed,
            out,
        } => {
            let values = match mode {
                PosencModeArg::Csd => {
                    let cfg = CsdConfig::new(dim, omega, ref_mpp)?;
                    posenc::csd_grid(h, w, mpp, &cfg)?.values
                }
                PosencModeArg::Lpm => {
                    let table = posenc::lpm_init(&STANDARD_MPPS, h, w, dim, seed, posenc::DEFAULT_LPM_INIT_STD)?;
                    posenc::lpm_lookup(&table, mpp)?.to_vec()
                }
            };
            let bytes = format::write_array_file(&[h as u32, w as u32, dim as u32], &values).map_err(|source| {
                CliError::Format {
                    path: out.clone(),
                    source,
                }
            })?;
            write(&out, &bytes)?;
            serde_json::to_string(&PosencReport {
                shape: [h, w, dim],
                out: out.display().to_string(),
            })
        }
        Command::Probe {
            train,
            test,
            iters,
            seed,
            config,
        } => {
            let file = read_config(config.as_deref())?;
            let mut cfg = file.probe_config(ProbeConfig::default());
            cfg.iterations = iters.unwrap_or(cfg.iterations);
            cfg.rng_seed = seed.unwrap_or(cfg.rng_seed);
            let train = read_labeled(&train)?;
            let test = read_labeled(&test)?;
            let fit = probe::train_linear_probe(&train, &cfg)?;
            let test_accuracy = probe::evaluate_accuracy(&fit.model, &test)?;
            let _ = writeln!(stderr, "trained {} iterations on {} rows", cfg.iterations, train.len());
            serde_json::to_string(&ProbeReport {
                test_accuracy,
                train_loss_final: fit.final_loss,
            })
        }
    };
    json.map_err(|e| CliError::Data(format!("cannot serialize result: {e}")))
}

/// Runs one subcommand. `argv[0]` is the program name.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match run(cli.command, stderr) {
        Ok(json) => {
            let _ = writeln!(stdout, "{json}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
