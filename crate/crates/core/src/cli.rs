//! The `coordflow` command line.
//!
//! Training settings come from three places, later ones winning: built-in
//! defaults, a TOML file given with `--config`, and individual flags.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::apps::{
    extract_trajectory, inpaint, render, save_segmentation, save_volume_frames, segment, stabilize, FrameGrid,
    SmoothingFilter,
};
use crate::codec::{bpp, inspect, pack, unpack, BITSTREAM_MAGIC};
use crate::error::{Error, Result};
use crate::media::{load_video, save_gray_frames};
use crate::model::{read_model, save_model, CoordFlowModel, MODEL_MAGIC};
use crate::trainer::{evaluate_psnr, write_metrics_csv, Ablation, Checkpoint, TrainConfig, Trainer};

#[derive(Parser, Debug)]
#[command(name = "coordflow", version, about = "Layered coordinate-network video codec")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (0 = all cores). `--threads 1` makes every command
    /// bit-reproducible.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to a video and write a compressed bitstream.
    Encode(EncodeArgs),
    /// Render frames from a bitstream or model file.
    Decode(DecodeArgs),
    /// PSNR of a bitstream or model against a reference video.
    Eval(EvalArgs),
    /// Render at a higher spatial and/or temporal resolution.
    Upsample(UpsampleArgs),
    /// Write the per-pixel layer segmentation.
    Segment(OutputArgs),
    /// Render a single layer without compositing.
    Inpaint(InpaintArgs),
    /// Render with temporally smoothed layer motion.
    Stabilize(StabilizeArgs),
    /// Describe a bitstream or model file.
    Info(InfoArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainFlags {
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Architecture preset: tiny, S, M or L [default: tiny].
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of layers [default: 2].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Variant: full, no_layers or no_layers_no_flow [default: full].
    #[arg(long)]
    pub ablation: Option<Ablation>,
    /// Training epochs [default: 53].
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Coordinates per step [default: 65536].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 0.0005].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Final learning rate of the cosine schedule [default: 0].
    #[arg(long)]
    pub min_lr: Option<f64>,
    /// Seed for initialization and sampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on every n-th pixel in x and y [default: 1].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Train on every n-th frame [default: 1].
    #[arg(long)]
    pub frame_stride: Option<usize>,
    /// Weight of the squared error term [default: 0.25].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Weight of the per-layer losses [default: 0.1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight-map Laplacian coefficient [default: 1].
    #[arg(long)]
    pub w_laplacian: Option<f32>,
    /// Weight-map edge coefficient [default: 1].
    #[arg(long)]
    pub w_canny: Option<f32>,
    /// Weight-map temporal-variance coefficient [default: 1].
    #[arg(long)]
    pub w_temporal: Option<f32>,
    /// Weight-map constant term [default: 0.5].
    #[arg(long)]
    pub w_bias: Option<f32>,
}

impl TrainFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str::<TrainConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.preset => cfg.preset);
        set!(self.layers => cfg.n_layers);
        set!(self.ablation => cfg.ablation);
        set!(self.epochs => cfg.epochs);
        set!(self.batch_size => cfg.batch_size);
        set!(self.lr => cfg.base_lr);
        set!(self.min_lr => cfg.min_lr);
        set!(self.seed => cfg.seed);
        set!(self.stride => cfg.stride);
        set!(self.frame_stride => cfg.frame_stride);
        set!(self.lambda => cfg.loss.lambda);
        set!(self.gamma => cfg.loss.gamma);
        set!(self.w_laplacian => cfg.weights.laplacian);
        set!(self.w_canny => cfg.weights.canny);
        set!(self.w_temporal => cfg.weights.temporal);
        set!(self.w_bias => cfg.weights.bias);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl clap::ValueEnum for Ablation {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::Full, Self::NoLayers, Self::NoLayersNoFlow]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Self::Full => "full",
            Self::NoLayers => "no_layers",
            Self::NoLayersNoFlow => "no_layers_no_flow",
        }))
    }
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Frame directory (PNG/PPM) or raw `.rgb` file with a `.meta` sidecar.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Bitstream to write.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Per-epoch metrics CSV [default: <output>.metrics.csv].
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Also save the unquantized model.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Save a resumable training checkpoint after every epoch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint written by `--checkpoint`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write the loss weight map as grayscale PNGs (scaled by its maximum).
    #[arg(long)]
    pub weight_map_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Bitstream or model file.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Directory for `frame_%06d.png`.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Spatial upscaling factor.
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    /// Number of frames, spread evenly over the clip [default: from header].
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Bitstream or model file.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Reference video.
    #[arg(short, long)]
    pub reference: PathBuf,
    /// Evaluate every n-th pixel in x and y.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Args, Debug)]
pub struct UpsampleArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Spatial factor.
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    /// Temporal factor: (T - 1) * k + 1 output frames.
    #[arg(long, default_value_t = 1)]
    pub time_scale: usize,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Layer to render.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FilterKind {
    Boxcar,
    Gaussian,
}

#[derive(Args, Debug)]
pub struct StabilizeArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Odd smoothing window in frames.
    #[arg(long, default_value_t = 9)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = FilterKind::Boxcar)]
    pub filter: FilterKind,
    /// Gaussian standard deviation in frames [default: window / 4].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Write each layer's raw trajectory to `<dir>/trajectory_<layer>.csv`.
    #[arg(long)]
    pub trajectory_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(short, long)]
    pub input: PathBuf,
}

/// Reads either a `CFV1` bitstream or a `CFMD` model file.
pub fn load_any_model(path: &Path) -> Result<CoordFlowModel> {
    let bytes = fs::read(path)?;
    match bytes.get(..4) {
        Some(m) if m == BITSTREAM_MAGIC => unpack(&bytes),
        Some(m) if m == MODEL_MAGIC => read_model(&bytes),
        _ => Err(Error::Format(format!(
            "{}: neither a bitstream nor a model file",
            path.display()
        ))),
    }
}

fn emit(json: bool, value: Value, text: impl FnOnce() -> String) {
    let mut out = std::io::stdout().lock();
    let _ = if json {
        writeln!(out, "{value}")
    } else {
        writeln!(out, "{}", text())
    };
}

fn cmd_encode(a: &EncodeArgs, json: bool) -> Result<()> {
    let cfg = a.train.resolve()?;
    let video = load_video(&a.input)?;
    log::info!(
        "encoding {}x{}x{} from {}",
        video.width(),
        video.height(),
        video.frames(),
        a.input.display()
    );
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(&video, cfg.clone(), Checkpoint::load(p)?)?,
        None => Trainer::new(&video, cfg.clone())?,
    };
    if let Some(dir) = &a.weight_map_dir {
        let wm = trainer.weight_map();
        let max = wm.max().max(f32::MIN_POSITIVE);
        let frames: Vec<Vec<f32>> = (0..wm.frames)
            .map(|t| wm.frame(t).iter().map(|w| w / max).collect())
            .collect();
        save_gray_frames(&frames, wm.width, wm.height, dir)?;
    }
    while trainer.epochs_done() < cfg.epochs {
        trainer.run_epoch()?;
        if let Some(p) = &a.checkpoint {
            trainer.checkpoint().save(p)?;
        }
    }
    let history = trainer.history().to_vec();
    let model = trainer.model().clone();

    let metrics = a.metrics.clone().unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".metrics.csv");
        PathBuf::from(s)
    });
    write_metrics_csv(&history, &metrics)?;
    if let Some(p) = &a.save_model {
        save_model(&model, p)?;
    }
    let bytes = pack(&model)?;
    fs::write(&a.output, &bytes)?;
    let decoded = unpack(&bytes)?;
    let raw_psnr = evaluate_psnr(&model, &video, 1)?;
    let psnr = evaluate_psnr(&decoded, &video, 1)?;
    let rate = bpp(bytes.len(), video.dims())?;
    emit(
        json,
        json!({
            "command": "encode",
            "output": a.output,
            "bytes": bytes.len(),
            "bpp": rate,
            "psnr": psnr,
            "psnr_unquantized": raw_psnr,
            "epochs": history.len(),
            "params": model.param_count(),
            "metrics": metrics,
        }),
        || {
            format!(
                "wrote {} ({} bytes, {rate:.4} bpp)\nPSNR {psnr:.2} dB after quantization ({raw_psnr:.2} dB before)",
                a.output.display(),
                bytes.len()
            )
        },
    );
    Ok(())
}

fn frame_grid(model: &CoordFlowModel, scale: usize, frames: Option<usize>) -> Result<FrameGrid> {
    let grid = FrameGrid::scaled(model, scale, 1)?;
    Ok(match frames {
        Some(0) => return Err(Error::InvalidArgument("--frames must be at least 1".into())),
        Some(n) => grid.with_times((0..n).map(|k| crate::model::normalize_coord(k as f64, n)).collect()),
        None => grid,
    })
}

fn written(json: bool, command: &str, dir: &Path, frames: usize, width: usize, height: usize) {
    emit(
        json,
        json!({"command": command, "output": dir, "frames": frames, "width": width, "height": height}),
        || format!("wrote {frames} frames of {width}x{height} to {}", dir.display()),
    );
}

fn cmd_decode(a: &DecodeArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    let out = render(&model, &frame_grid(&model, a.scale, a.frames)?)?;
    save_volume_frames(&out, &a.output)?;
    written(json, "decode", &a.output, out.frames(), out.width(), out.height());
    Ok(())
}

fn cmd_eval(a: &EvalArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    let video = load_video(&a.reference)?;
    let psnr = evaluate_psnr(&model, &video, a.stride)?;
    let size = fs::metadata(&a.input)?.len() as usize;
    let rate = bpp(size, video.dims())?;
    emit(
        json,
        json!({"command": "eval", "psnr": psnr, "bytes": size, "bpp": rate}),
        || format!("PSNR {psnr:.3} dB, {size} bytes, {rate:.4} bpp"),
    );
    Ok(())
}

fn cmd_upsample(a: &UpsampleArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    let out = render(&model, &FrameGrid::scaled(&model, a.scale, a.time_scale)?)?;
    save_volume_frames(&out, &a.output)?;
    written(json, "upsample", &a.output, out.frames(), out.width(), out.height());
    Ok(())
}

fn cmd_segment(a: &OutputArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    if model.num_layers() == 1 {
        log::warn!("single-layer model: the segmentation is constant");
        eprintln!("warning: single-layer model, the segmentation map is constant");
    }
    let map = segment(&model, &FrameGrid::training(&model))?;
    save_segmentation(&map, &a.output)?;
    let shares: Vec<f64> = (0..map.num_layers)
        .map(|l| map.labels.iter().filter(|&&v| v as usize == l).count() as f64 / map.labels.len() as f64)
        .collect();
    emit(
        json,
        json!({"command": "segment", "output": a.output, "layers": map.num_layers, "label_share": shares}),
        || {
            let s: Vec<String> = shares.iter().map(|v| format!("{:.1}%", 100.0 * v)).collect();
            format!(
                "wrote segmentation to {} (layer shares {})",
                a.output.display(),
                s.join(", ")
            )
        },
    );
    Ok(())
}

fn cmd_inpaint(a: &InpaintArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    let out = inpaint(&model, a.layer, &FrameGrid::training(&model))?;
    save_volume_frames(&out, &a.output)?;
    written(json, "inpaint", &a.output, out.frames(), out.width(), out.height());
    Ok(())
}

fn cmd_stabilize(a: &StabilizeArgs, json: bool) -> Result<()> {
    let model = load_any_model(&a.input)?;
    let grid = FrameGrid::training(&model);
    let filter = match a.filter {
        FilterKind::Boxcar => SmoothingFilter::Boxcar,
        FilterKind::Gaussian => SmoothingFilter::Gaussian {
            sigma: a.sigma.unwrap_or(a.window as f64 / 4.0),
        },
    };
    if let Some(dir) = &a.trajectory_dir {
        fs::create_dir_all(dir)?;
        for l in 0..model.num_layers() {
            extract_trajectory(&model, l, &grid.times)?.write_csv(dir.join(format!("trajectory_{l}.csv")))?;
        }
    }
    let out = stabilize(&model, a.window, filter, &grid)?;
    save_volume_frames(&out, &a.output)?;
    written(json, "stabilize", &a.output, out.frames(), out.width(), out.height());
    Ok(())
}

fn cmd_info(a: &InfoArgs, json: bool) -> Result<()> {
    let bytes = fs::read(&a.input)?;
    let model = load_any_model(&a.input)?;
    let stream = if bytes.starts_with(BITSTREAM_MAGIC) {
        Some(inspect(&bytes)?)
    } else {
        None
    };
    let (total, flow, color) = (model.param_count(), model.flow_param_count(), model.color_param_count());
    let share = color as f64 / total as f64;
    let rate = bpp(bytes.len(), model.dims)?;
    let flow_identity = model.layers.iter().all(|l| {
        (0..=4).all(|k| {
            l.flow_transform(-1.0 + 0.5 * k as f64)
                .is_ok_and(|t| t.is_identity(0.0))
        })
    });
    let mut value = json!({
        "command": "info",
        "kind": if stream.is_some() { "bitstream" } else { "model" },
        "preset": model.preset,
        "dims": model.dims,
        "layers": model.num_layers(),
        "flow_frozen": model.flow_frozen,
        "flow_identity": flow_identity,
        "params": total,
        "flow_params": flow,
        "color_params": color,
        "color_share": share,
        "bytes": bytes.len(),
        "bpp": rate,
    });
    if let Some(s) = &stream {
        value["raw_section_bytes"] = json!(s.raw_bytes);
        value["coded_section_bytes"] = json!(s.coded_bytes);
        value["version"] = json!(s.version);
    }
    emit(json, value, || {
        let d = model.dims;
        let mut s = format!(
            "{} ({}), preset {}, {} layer(s), fitted to {}x{}x{}\n",
            a.input.display(),
            if stream.is_some() { "bitstream" } else { "model" },
            model.preset,
            model.num_layers(),
            d.width,
            d.height,
            d.frames
        );
        s += &format!(
            "parameters: {total} total, {flow} flow, {color} color ({:.2}% color)\n",
            100.0 * share
        );
        s += &format!(
            "flow frozen: {}, flow at identity: {flow_identity}\n",
            model.flow_frozen
        );
        if let Some(st) = &stream {
            s += &format!(
                "raw flow section: {} bytes, coded color section: {} bytes\n",
                st.raw_bytes, st.coded_bytes
            );
        }
        s += &format!("{} bytes, {rate:.4} bpp", bytes.len());
        s
    });
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore "already initialized" so repeated in-process runs work.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Encode(a) => cmd_encode(a, cli.json),
        Command::Decode(a) => cmd_decode(a, cli.json),
        Command::Eval(a) => cmd_eval(a, cli.json),
        Command::Upsample(a) => cmd_upsample(a, cli.json),
        Command::Segment(a) => cmd_segment(a, cli.json),
        Command::Inpaint(a) => cmd_inpaint(a, cli.json),
        Command::Stabilize(a) => cmd_stabilize(a, cli.json),
        Command::Info(a) => cmd_info(a, cli.json),
    }
}

/// Parses `args`, runs the command and maps errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
