use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::CliError;

/// Deformable splat capture, per-frame mesh extraction and blendshape tools.
#[derive(Parser, Debug)]
#[command(name = "blendcap", version)]
struct Cli {
    /// Worker threads for inner parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic oracle clip as a frame grid with ground truth.
    Synth(SynthArgs),
    /// Fit a deformable splat field to a frame grid.
    Fit(FitArgs),
    /// Extract per-frame meshes from a fitted field.
    Extract(ExtractArgs),
    /// Build a PCA blendshape model from registered meshes.
    BuildModel(BuildModelArgs),
    /// Fit model coefficients to a captured mesh and optional image.
    FitCapture(FitCaptureArgs),
    /// Drive the model from a 2D landmark trajectory.
    Retarget(RetargetArgs),
    /// Score extracted meshes and renders against oracle ground truth.
    Eval(EvalArgs),
    /// Write the browser viewer document and trajectory.
    ExportViewer(ExportViewerArgs),
    /// Run the paired ablations and report per-seed deltas.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// JSON file with the command's configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
    /// sphere_face or blob_creature.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    warp_sigma: Option<f64>,
    /// Multiplicative per-frame texture noise range.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LO", "HI"])]
    texture_noise: Option<Vec<f64>>,
    /// static, expressions, yaw:<degrees> or random:<seed>.
    #[arg(long)]
    script: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Canonical mesh (default: `character.ply` in the grid directory).
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_view_conditioning: bool,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    per_gaussian: bool,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BuildModelArgs {
    /// Mesh files, or directories whose .ply/.obj files are read in name order.
    #[arg(long, num_args = 1.., required = true)]
    meshes: Vec<PathBuf>,
    #[arg(long)]
    components: Option<usize>,
    /// Landmark annotation JSON, lifted onto the first mesh.
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitCaptureArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: PathBuf,
    /// Captured mesh registered to the model topology.
    #[arg(long)]
    capture: PathBuf,
    /// RGB image of the capture, composited over white.
    #[arg(long, requires = "camera")]
    image: Option<PathBuf>,
    /// Camera JSON: a single camera or an array indexed by `--view`.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long)]
    lambda_rgb: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RetargetArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: PathBuf,
    /// Per-frame source landmarks: `frame, x0, y0, …, x19, y19`; frame 0 is neutral.
    #[arg(long)]
    source: PathBuf,
    /// Frontal camera JSON: a single camera or an array indexed by `--view`.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long)]
    arap_weight: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Grid directory with ground truth under `gt/`.
    #[arg(long)]
    grid: PathBuf,
    /// Output directory of `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExportViewerArgs {
    #[arg(long)]
    model: PathBuf,
    /// Basis rows to ship (default 16).
    #[arg(long)]
    components: Option<usize>,
    /// Coefficient CSV from `retarget` to include as a playback trajectory.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// First seed; runs use consecutive seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    runs: u64,
    #[arg(long)]
    warp_sigma: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LO", "HI"])]
    texture_noise: Option<Vec<f64>>,
    /// Run a single comparison: view_conditioning, refine or lbs.
    #[arg(long)]
    only: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("T2B_LOG", "info")).format_timestamp(None).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Fit(a) => commands::fit(a),
        Command::Extract(a) => commands::extract(a),
        Command::BuildModel(a) => commands::build_model(a),
        Command::FitCapture(a) => commands::fit_capture(a),
        Command::Retarget(a) => commands::retarget(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExportViewer(a) => commands::export_viewer(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<blendcap_core::Error> for CliError {
    fn from(e: blendcap_core::Error) -> Self {
        CliError::Core(e)
    }
}
