mod image;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stretchtomo::augment::{augment, AugmentSpec};
use stretchtomo::classic::{bp, fbp, ramlak_filter, FilterSpec};
use stretchtomo::config::{default_angles, parse_angles, simulate, ReconJobConfig, Representation};
use stretchtomo::eval::{run_sweep, SweepConfig};
use stretchtomo::io::{read_stack, read_tensor, read_volume, write_tensor, write_volume};
use stretchtomo::phantom::{make_phantom, PhantomSpec, PhantomStyle};
use stretchtomo::projector::{project, ProjectorSpec};
use stretchtomo::stretch::{as_sparse_operator, stretch, Direction, StretchSpec};
use stretchtomo::{Tensor, TiltStack};

const THREADS_ENV: &str = "STRETCHTOMO_THREADS";

#[derive(Parser)]
#[command(name = "stretchtomo", version, about = "Limited-angle tomography simulation and reconstruction")]
struct Cli {
    /// Worker threads (STRETCHTOMO_THREADS takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground-truth volume.
    Phantom(PhantomArgs),
    /// Forward-project a volume into a tilt stack.
    Project(ProjectArgs),
    /// Resample each view by the secant of its tilt.
    Stretch(StretchArgs),
    /// Ram-lak filter every stack row.
    Filter(FilterArgs),
    /// Backproject a stack.
    Bp(ReconArgs),
    /// Filtered backprojection.
    Fbp(ReconArgs),
    /// Add noise, misalign views and normalize each view.
    Augment(AugmentArgs),
    /// Project, augment and transform a volume into a network input.
    Simulate(SimulateArgs),
    /// Run an evaluation sweep and write CSV plus JSON metrics.
    Sweep(SweepArgs),
    /// Export a 2-D slice as an 8-bit grayscale PNG.
    Slice(SliceArgs),
}

#[derive(Args, Serialize)]
struct PhantomArgs {
    #[arg(long)]
    out: PathBuf,
    /// Depth,height,width.
    #[arg(long, default_value = "32,512,512", value_parser = parse_dims)]
    dims: [usize; 3],
    #[arg(long, value_enum, default_value_t = Style::Cells)]
    style: Style,
    /// Voronoi cells (cells) or Gaussians (blobs).
    #[arg(long, default_value_t = 40)]
    cells: usize,
    #[arg(long, default_value_t = 1.5)]
    membrane_width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Style {
    Cells,
    Blobs,
}

#[derive(Args, Serialize)]
struct ProjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `start:stop:count` (inclusive) or a comma list in degrees.
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    /// Job config whose projector settings are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_path_weighting: bool,
}

#[derive(Args, Serialize)]
struct StretchArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Dir::Magnify)]
    direction: Dir,
    /// Also write the operator as `row,col,weight` triplets.
    #[arg(long)]
    triplets: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Dir {
    Magnify,
    Compress,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Self {
        match d {
            Dir::Magnify => Direction::Magnify,
            Dir::Compress => Direction::Compress,
        }
    }
}

#[derive(Args, Serialize)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// FFT length; a power of two at least the row width.
    #[arg(long)]
    pad: Option<usize>,
}

#[derive(Args, Serialize)]
struct ReconArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Depth of the reconstructed volume.
    #[arg(long, default_value_t = 32)]
    depth: usize,
    #[arg(long)]
    no_path_weighting: bool,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Number of views to shift.
    #[arg(long, default_value_t = 0)]
    misalign: usize,
    #[arg(long, default_value_t = 3)]
    shift_range: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the applied shifts (defaults to `<out>.shifts.json`).
    #[arg(long)]
    shifts: Option<PathBuf>,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    #[arg(long)]
    representation: Option<Representation>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    misalign: Option<usize>,
    #[arg(long)]
    shift_range: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    direction: Option<Dir>,
    #[arg(long)]
    no_path_weighting: bool,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Metrics CSV; the JSON report goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SliceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    plane: Plane,
    /// Detector row for `xtheta`, view or depth index for `xy`, row for `xz`.
    #[arg(long, alias = "row", default_value_t = 0)]
    index: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Plane {
    Xtheta,
    Xy,
    Xz,
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split([',', 'x'])
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad dimension `{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        &[d, h, w] if d > 0 && h > 0 && w > 0 => Ok([d, h, w]),
        _ => Err(format!("expected three positive dims like 32,512,512, got `{s}`")),
    }
}

fn config_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    command: &'a str,
    args: &'a T,
}

fn write_record<T: Serialize>(out: &Path, command: &str, args: &T) -> Result<()> {
    write_json(&config_path(out), &Record { command, args })
}

fn distinct(input: &Path, out: &Path) -> Result<()> {
    if input == out {
        bail!("--out must differ from --in ({})", input.display());
    }
    Ok(())
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?),
        Err(_) => flag,
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn load_job(path: &Path) -> Result<ReconJobConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ReconJobConfig::from_json(&text)?)
}

/// Job settings for a volume of `dims`: the config file (if any) with flags applied on top.
fn resolve_job(
    config: Option<&Path>,
    angles: Option<&str>,
    dims: [usize; 3],
    no_path_weighting: bool,
) -> Result<ReconJobConfig> {
    let base = config.map(load_job).transpose()?;
    let angles = match (angles, &base) {
        (Some(a), _) => parse_angles(a)?,
        (None, Some(b)) => b.angles_deg.clone(),
        (None, None) => default_angles(),
    };
    let mut job = ReconJobConfig::new(angles, dims, Representation::Sinogram)?;
    if let Some(b) = base {
        job.representation = b.representation;
        job.augment = b.augment;
        job.filter = b.filter;
        job.seed = b.seed;
        job.io = b.io;
        job.projector.path_weighting = b.projector.path_weighting;
        job.stretch.direction = b.stretch.direction;
    }
    if no_path_weighting {
        job.projector.path_weighting = false;
    }
    Ok(job)
}

fn cmd_phantom(a: &PhantomArgs) -> Result<()> {
    let spec = PhantomSpec {
        dims: a.dims,
        style: match a.style {
            Style::Cells => PhantomStyle::Cells,
            Style::Blobs => PhantomStyle::Blobs,
        },
        cell_count: a.cells,
        membrane_width_px: a.membrane_width,
        rng_seed: a.seed,
    };
    write_volume(&make_phantom(&spec)?, &a.out)?;
    write_json(&config_path(&a.out), &serde_json::json!({ "command": "phantom", "phantom": spec }))
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let volume = read_volume(&a.input)?;
    let mut job = resolve_job(a.config.as_deref(), a.angles.as_deref(), volume.dims(), a.no_path_weighting)?;
    job.representation = Representation::Sinogram;
    job.io.input = Some(a.input.clone());
    job.io.output = Some(a.out.clone());
    let stack = project(&volume, &job.projector)?;
    write_tensor(&Tensor::Stack(stack), &a.out)?;
    write_json(&config_path(&a.out), &job)
}

fn cmd_stretch(a: &StretchArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let y = read_stack(&a.input)?;
    let spec = StretchSpec::new(y.geometry().clone()).with_direction(a.direction.into());
    write_tensor(&Tensor::Stack(stretch(&y, &spec)?), &a.out)?;
    if let Some(path) = &a.triplets {
        let op = as_sparse_operator(&spec, y.dims())?;
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        op.write_csv(std::io::BufWriter::new(file))?;
    }
    write_record(&a.out, "stretch", a)
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let y = read_stack(&a.input)?;
    let spec = FilterSpec { pad_length: a.pad, ..FilterSpec::default() };
    write_tensor(&Tensor::Stack(ramlak_filter(&y, &spec)?), &a.out)?;
    write_record(&a.out, "filter", a)
}

fn recon_spec(y: &TiltStack, a: &ReconArgs) -> Result<ProjectorSpec> {
    let [_, h, w] = y.dims();
    let spec = ProjectorSpec::new(y.geometry().angles_deg().to_vec(), [a.depth, h, w])?;
    Ok(spec.with_path_weighting(!a.no_path_weighting))
}

fn cmd_bp(a: &ReconArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let y = read_stack(&a.input)?;
    write_volume(&bp(&y, &recon_spec(&y, a)?)?, &a.out)?;
    write_record(&a.out, "bp", a)
}

fn cmd_fbp(a: &ReconArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let y = read_stack(&a.input)?;
    write_volume(&fbp(&y, &FilterSpec::default(), &recon_spec(&y, a)?)?, &a.out)?;
    write_record(&a.out, "fbp", a)
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    distinct(&a.input, &a.out)?;
    let y = read_stack(&a.input)?;
    let spec = AugmentSpec {
        noise_ratio: a.noise,
        n_misaligned: a.misalign,
        shift_range: a.shift_range,
        rng_seed: a.seed,
        per_view_normalize: !a.no_normalize,
        ..AugmentSpec::default()
    };
    let (out, log) = augment(&y, &spec)?;
    write_tensor(&Tensor::Stack(out), &a.out)?;
    let shifts = a.shifts.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".shifts.json");
        PathBuf::from(s)
    });
    write_json(&shifts, &log)?;
    write_json(&config_path(&a.out), &serde_json::json!({ "command": "augment", "augment": spec, "shifts": shifts }))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let base = a.config.as_deref().map(load_job).transpose()?;
    let input = a
        .input
        .clone()
        .or_else(|| base.as_ref().and_then(|b| b.io.input.clone()))
        .context("simulate needs --in (or io.input in --config)")?;
    let out = a
        .out
        .clone()
        .or_else(|| base.as_ref().and_then(|b| b.io.output.clone()))
        .context("simulate needs --out (or io.output in --config)")?;
    distinct(&input, &out)?;
    let volume = read_volume(&input)?;
    let mut job = resolve_job(a.config.as_deref(), a.angles.as_deref(), volume.dims(), a.no_path_weighting)?;
    if base.is_none() {
        job.representation = Representation::Stretch;
    }
    if let Some(r) = a.representation {
        job.representation = r;
    }
    if let Some(v) = a.noise {
        job.augment.noise_ratio = v;
    }
    if let Some(v) = a.misalign {
        job.augment.n_misaligned = v;
    }
    if let Some(v) = a.shift_range {
        job.augment.shift_range = v;
    }
    if let Some(v) = a.seed {
        job.seed = v;
        job.augment.rng_seed = v;
    }
    if let Some(d) = a.direction {
        job.stretch.direction = d.into();
    }
    job.io.input = Some(input);
    job.io.output = Some(out.clone());
    let sim = simulate(&volume, &job)?;
    write_tensor(&sim.input, &out)?;
    let mut shifts = out.as_os_str().to_owned();
    shifts.push(".shifts.json");
    write_json(Path::new(&shifts), &sim.shifts)?;
    write_json(&config_path(&out), &job)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = SweepConfig::from_json(&text)?;
    let report = run_sweep(&cfg)?;
    std::fs::write(&a.out, report.to_csv()).with_context(|| format!("writing {}", a.out.display()))?;
    let json = a.out.with_extension("json");
    std::fs::write(&json, report.to_json()).with_context(|| format!("writing {}", json.display()))?;
    write_json(&config_path(&a.out), &cfg)
}

fn cmd_slice(a: &SliceArgs) -> Result<()> {
    let tensor = read_tensor(&a.input)?;
    let [d0, d1, d2] = tensor.dims();
    let data = tensor.data();
    let check = |n: usize, what: &str| -> Result<()> {
        if a.index >= n {
            bail!("{what} index {} out of range 0..{n}", a.index);
        }
        Ok(())
    };
    let (h, w, pixels): (usize, usize, Vec<f32>) = match (a.plane, &tensor) {
        (Plane::Xtheta, Tensor::Stack(_)) => {
            check(d1, "row")?;
            (d0, d2, (0..d0).flat_map(|k| data[(k * d1 + a.index) * d2..(k * d1 + a.index + 1) * d2].to_vec()).collect())
        }
        (Plane::Xtheta, Tensor::Volume(_)) => bail!("xtheta slices need a tilt stack; {} is a volume", a.input.display()),
        (Plane::Xy, _) => {
            check(d0, "view/depth")?;
            (d1, d2, data[a.index * d1 * d2..(a.index + 1) * d1 * d2].to_vec())
        }
        (Plane::Xz, _) => {
            check(d1, "row")?;
            (d0, d2, (0..d0).flat_map(|z| data[(z * d1 + a.index) * d2..(z * d1 + a.index + 1) * d2].to_vec()).collect())
        }
    };
    image::write_gray_png(&a.out, w, h, &pixels)
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Project(a) => cmd_project(a),
        Command::Stretch(a) => cmd_stretch(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Bp(a) => cmd_bp(a),
        Command::Fbp(a) => cmd_fbp(a),
        Command::Augment(a) => cmd_augment(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Slice(a) => cmd_slice(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("stretchtomo: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("stretchtomo: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
