mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use bevgeom::bench::Method;
use bevgeom::synth::{DepthMode, Precision};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "bevgeom",
    version,
    about = "BEV feature transforms, in-box depth labels and loss evaluation"
)]
struct Cli {
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true, env = "BEVGEOM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded scene plus per-camera feature and score tensors.
    Synth(SynthArgs),
    /// Run a feature transform over a synthesized scene.
    Transform(TransformArgs),
    /// Build in-box depth labels for one camera.
    Label(LabelArgs),
    /// Evaluate a depth loss on logits against a label volume.
    Loss(LossArgs),
    /// Time the transforms and report allocation accounting.
    Bench(BenchArgs),
    /// Render a BEV tensor as a grayscale PGM heatmap.
    Render(RenderArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Precision {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Precision::F32,
            DtypeArg::F64 => Precision::F64,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON parameter file; omitted fields take their defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// uniform_positive, softmax or geometry_aware
    #[arg(long)]
    depth_mode: Option<String>,
    #[arg(long, value_enum)]
    dtype: Option<DtypeArg>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Scene JSON written by `synth`.
    #[arg(long)]
    scene: PathBuf,
    /// Directory holding `cam{k}_image.bevt` and `cam{k}_depth.bevt`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// BEV cells per side.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Half width of the square BEV grid in meters.
    #[arg(long, default_value_t = 40.0)]
    half_extent: f64,
    /// Reference height of BEV cells for rc and oracle.
    #[arg(long, default_value_t = 0.0)]
    z_ref: f64,
    /// Number of height cells (voxel only).
    #[arg(long)]
    heights: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [-1.0, 3.0], allow_negative_numbers = true)]
    z_range: Vec<f64>,
    /// Average overlapping cameras instead of summing them.
    #[arg(long)]
    mean: bool,
    /// Write the radial features of camera `--cam` instead of the BEV grid.
    #[arg(long)]
    radial: bool,
    #[arg(long, default_value_t = 0)]
    cam: usize,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    dtype: DtypeArg,
    #[arg(long)]
    out: PathBuf,
    /// Report path (default: `<out>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    cam: usize,
    /// Supervise background pixels with the surface depth.
    #[arg(long)]
    use_lidar: bool,
    /// Ignore positives occluded by a nearer box.
    #[arg(long)]
    oa: bool,
    /// Ignore positives whose instance mask disagrees.
    #[arg(long)]
    ob: bool,
    /// Ignore background bins behind the surface.
    #[arg(long)]
    oc: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LossKind {
    Cai,
    Ce,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long)]
    labels: PathBuf,
    /// `[D, H, W]` logits.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum, default_value_t = LossKind::Cai)]
    kind: LossKind,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Sum instead of averaging over supervised elements.
    #[arg(long)]
    sum: bool,
    /// Write the logit gradient here (cai only).
    #[arg(long)]
    grad_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// JSON benchmark config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    voxel_heights: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    dtype: Option<DtypeArg>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// `[C, X, Y]` BEV tensor.
    #[arg(long)]
    bev: PathBuf,
    /// `[X, Y]` tensor; nonzero cells are foreground.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_depth_mode(s: &str) -> bevgeom::Result<DepthMode> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Transform(a) => commands::transform(a),
        Command::Label(a) => commands::label(a),
        Command::Loss(a) => commands::loss(a),
        Command::Bench(a) => commands::bench(a),
        Command::Render(a) => commands::render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
