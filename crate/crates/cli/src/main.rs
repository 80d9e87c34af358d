//! Command line front end: noise synthesis, training-set construction,
//! training, denoising, evaluation, and benchmarking.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, malformed
//! parameters), 2 on data errors (unreadable files, corrupt models,
//! pipeline failures). Every parameter is also loadable from a flat
//! `key=value` config file via `--config`; explicit flags override it.

mod config;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::{resolve, resolve_required, CliError, FileConfig};
use mesh_denoise::filter::Sigma1Mode;
use mesh_denoise::io::{load_mesh, save_mesh, MeshFormat};
use mesh_denoise::mesh::Mesh;
use mesh_denoise::metrics::{export_error_colormap, normal_angle_alpha, one_sided_distance, MetricsError};
use mesh_denoise::model::{load_model, load_training_set, save_model, save_training_set, NetworkKind};
use mesh_denoise::neural::ae::DEFAULT_AE_WIDTHS;
use mesh_denoise::neural::cvae::NetworkShape;
use mesh_denoise::neural::TrainConfig;
use mesh_denoise::noise::{add_gaussian_noise, NoiseSpec};
use mesh_denoise::pipeline::{
    benchmark, build_training_set, denoise_mesh, train_model, train_model_ae, BenchmarkOptions,
    DenoiseConfig, Threads, TrainingSetOptions, REFERENCE_100K_FACES_SECONDS,
};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Worker-count argument: `all` or a positive integer.
#[derive(Debug, Clone, Copy)]
struct ThreadsArg(Threads);

impl FromStr for ThreadsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self(Threads::All));
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Self(Threads::Count(n))),
            _ => Err(format!("expected \"all\" or a positive integer, got {s:?}")),
        }
    }
}

/// Spatial-scale convention: `mean-squared` or `mean`.
#[derive(Debug, Clone, Copy)]
struct Sigma1ModeArg(Sigma1Mode);

impl FromStr for Sigma1ModeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean-squared" => Ok(Self(Sigma1Mode::MeanSquaredDistance)),
            "mean" => Ok(Self(Sigma1Mode::MeanDistance)),
            _ => Err(format!("expected \"mean-squared\" or \"mean\", got {s:?}")),
        }
    }
}

/// Network architecture: `cvae` or `ae`.
#[derive(Debug, Clone, Copy)]
enum ArchArg {
    Cvae,
    Ae,
}

impl FromStr for ArchArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cvae" => Ok(Self::Cvae),
            "ae" => Ok(Self::Ae),
            _ => Err(format!("expected \"cvae\" or \"ae\", got {s:?}")),
        }
    }
}

/// Comma-separated positive thread counts, e.g. `1,2,4,8`.
#[derive(Debug, Clone)]
struct ThreadListArg(Vec<usize>);

impl FromStr for ThreadListArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let counts = s
            .split(',')
            .map(|part| match part.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("expected a positive integer, got {part:?}")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if counts.is_empty() {
            return Err("expected at least one thread count".into());
        }
        Ok(Self(counts))
    }
}

/// Exactly five comma-separated hidden-layer widths.
#[derive(Debug, Clone, Copy)]
struct WidthsArg([usize; 5]);

impl FromStr for WidthsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let widths = s
            .split(',')
            .map(|part| match part.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("expected a positive integer, got {part:?}")),
            })
            .collect::<Result<Vec<_>, String>>()?;
        let widths: [usize; 5] = widths
            .try_into()
            .map_err(|v: Vec<usize>| format!("expected 5 widths, got {}", v.len()))?;
        Ok(Self(widths))
    }
}

#[derive(Parser)]
#[command(
    name = "mesh-denoise",
    version,
    about = "Learning-based triangle mesh denoising",
    propagate_version = true
)]
struct Cli {
    /// Read parameter defaults from a key=value file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Displace every vertex along its normal by seeded Gaussian noise.
    AddNoise(AddNoiseArgs),
    /// Corrupt clean meshes and build a descriptor training set.
    BuildTrainset(BuildTrainsetArgs),
    /// Train a model on a training set and save the bundle.
    Train(TrainArgs),
    /// Denoise a mesh with a trained model.
    Denoise(DenoiseArgs),
    /// Compare a reconstructed mesh against a reference.
    Eval(EvalArgs),
    /// Time the denoising stages across thread counts.
    Bench(BenchArgs),
}

#[derive(Args)]
struct AddNoiseArgs {
    /// Clean input mesh (.obj or .off).
    #[arg(long = "in", value_name = "MESH")]
    input: Option<PathBuf>,
    /// Noisy output mesh; format follows the extension.
    #[arg(long, value_name = "MESH")]
    out: Option<PathBuf>,
    /// Constant offset along the normal, in mean-edge-length units.
    #[arg(long)]
    mu: Option<f64>,
    /// Standard deviation, in mean-edge-length units.
    #[arg(long)]
    beta: Option<f64>,
    /// Seed of the displacement stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BuildTrainsetArgs {
    /// Clean input mesh; repeat for a corpus (config key: comma-separated).
    #[arg(long = "in", value_name = "MESH")]
    input: Vec<PathBuf>,
    /// Output training-set file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Noise offset applied to each mesh.
    #[arg(long)]
    mu: Option<f64>,
    /// Noise spread applied to each mesh.
    #[arg(long)]
    beta: Option<f64>,
    /// Base noise seed; per-mesh seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Patch size n; descriptors have 3*(n+1) values.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Number of k-means clusters K.
    #[arg(long)]
    clusters: Option<usize>,
    /// Seed of the k-means fit.
    #[arg(long)]
    cluster_seed: Option<u64>,
    /// Worker count: "all" or a positive integer.
    #[arg(long)]
    threads: Option<ThreadsArg>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training set produced by build-trainset.
    #[arg(long, value_name = "FILE")]
    trainset: Option<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Architecture: "cvae" or "ae".
    #[arg(long)]
    arch: Option<ArchArg>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial Adam step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Learning-rate decay per epoch.
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Dropout keep probability in (0, 1].
    #[arg(long)]
    keep_ratio: Option<f64>,
    /// Holdout fraction in [0, 1).
    #[arg(long)]
    holdout: Option<f64>,
    /// Training seed (weights, shuffling, sampling).
    #[arg(long)]
    seed: Option<u64>,
    /// Width of the CVAE hidden layers.
    #[arg(long)]
    hidden: Option<usize>,
    /// CVAE latent dimension.
    #[arg(long)]
    latent: Option<usize>,
    /// The five AE hidden widths, comma-separated (arch "ae" only).
    #[arg(long)]
    ae_widths: Option<WidthsArg>,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Noisy input mesh.
    #[arg(long = "in", value_name = "MESH")]
    input: Option<PathBuf>,
    /// Trained model bundle.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Denoised output mesh; format follows the extension.
    #[arg(long, value_name = "MESH")]
    out: Option<PathBuf>,
    /// Bilateral iterations; defaults to the model's snapshot.
    #[arg(long)]
    bilateral_iterations: Option<usize>,
    /// Vertex-update iterations; defaults to the model's snapshot.
    #[arg(long)]
    vertex_iterations: Option<usize>,
    /// Bilateral range scale; defaults to the model's snapshot.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Bilateral spatial-scale convention: "mean-squared" or "mean".
    #[arg(long)]
    sigma1_mode: Option<Sigma1ModeArg>,
    /// Worker count: "all" or a positive integer.
    #[arg(long)]
    threads: Option<ThreadsArg>,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstructed (denoised) mesh.
    #[arg(long, value_name = "MESH")]
    rec: Option<PathBuf>,
    /// Reference (ground-truth) mesh.
    #[arg(long = "ref", value_name = "MESH")]
    reference: Option<PathBuf>,
    /// Write a COFF error colormap of the reconstructed mesh here.
    #[arg(long, value_name = "FILE")]
    colormap: Option<PathBuf>,
    /// Write per-vertex distances as CSV here.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Noisy input mesh to denoise repeatedly.
    #[arg(long = "in", value_name = "MESH")]
    input: Option<PathBuf>,
    /// Trained model bundle.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Thread counts to measure, comma-separated.
    #[arg(long)]
    threads_list: Option<ThreadListArg>,
    /// Repetitions per thread count.
    #[arg(long)]
    repetitions: Option<usize>,
    /// CSV output file; omitted means CSV on stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Bilateral iterations; defaults to the model's snapshot.
    #[arg(long)]
    bilateral_iterations: Option<usize>,
    /// Vertex-update iterations; defaults to the model's snapshot.
    #[arg(long)]
    vertex_iterations: Option<usize>,
}

fn main() {
    env_logger::init();
    let code = match Cli::try_parse() {
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("error: {err}");
                err.exit_code()
            }
        },
        Err(err) => {
            // Help and version requests are not errors; everything else
            // is a usage problem. clap prints help to stdout and usage
            // errors to stderr on its own.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            code
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::AddNoise(args) => run_add_noise(args, &file),
        Command::BuildTrainset(args) => run_build_trainset(args, &file),
        Command::Train(args) => run_train(args, &file),
        Command::Denoise(args) => run_denoise(args, &file),
        Command::Eval(args) => run_eval(args, &file),
        Command::Bench(args) => run_bench(args, &file),
    }
}

// ---------------------------------------------------------------------
// File helpers

fn data_err(path: &Path, err: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {err}", path.display()))
}

fn mesh_format(path: &Path) -> Result<MeshFormat, CliError> {
    path.extension()
        .and_then(|e| e.to_str())
        .and_then(MeshFormat::from_extension)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "{}: unsupported mesh extension, use .obj or .off",
                path.display()
            ))
        })
}

fn read_mesh(path: &Path) -> Result<Mesh, CliError> {
    let format = mesh_format(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    load_mesh(&text, format).map_err(|e| data_err(path, e))
}

fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), CliError> {
    let format = mesh_format(path)?;
    std::fs::write(path, save_mesh(mesh, format)).map_err(|e| data_err(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| data_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| data_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| data_err(path, e))
}

// ---------------------------------------------------------------------
// Subcommands

fn run_add_noise(args: AddNoiseArgs, file: &FileConfig) -> Result<(), CliError> {
    let input = resolve_required(args.input, file, "in")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let spec = NoiseSpec {
        mu: resolve(args.mu, file, "mu", 0.0)?,
        beta: resolve(args.beta, file, "beta", 0.2)?,
        seed: resolve(args.seed, file, "seed", 0)?,
    };
    let mesh = read_mesh(&input)?;
    let noisy = add_gaussian_noise(&mesh, &spec).map_err(|e| CliError::Data(e.to_string()))?;
    write_mesh(&noisy, &out)?;
    println!("vertices={}", noisy.n_vertices());
    println!("faces={}", noisy.n_faces());
    println!("output={}", out.display());
    Ok(())
}

/// Inputs for build-trainset: repeated `--in` flags, or an `in=` config
/// entry with comma-separated paths.
fn resolve_inputs(flags: Vec<PathBuf>, file: &FileConfig) -> Result<Vec<PathBuf>, CliError> {
    if !flags.is_empty() {
        return Ok(flags);
    }
    if let Some(raw) = file.get("in") {
        let paths: Vec<PathBuf> = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect();
        if !paths.is_empty() {
            return Ok(paths);
        }
    }
    Err(CliError::Usage(
        "missing --in (or in= in the config file)".into(),
    ))
}

fn run_build_trainset(args: BuildTrainsetArgs, file: &FileConfig) -> Result<(), CliError> {
    let inputs = resolve_inputs(args.input, file)?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let defaults = TrainingSetOptions::default();
    let options = TrainingSetOptions {
        noise: NoiseSpec {
            mu: resolve(args.mu, file, "mu", 0.0)?,
            beta: resolve(args.beta, file, "beta", 0.2)?,
            seed: resolve(args.seed, file, "seed", 0)?,
        },
        patch_size: resolve(args.patch_size, file, "patch-size", defaults.patch_size)?,
        clusters: resolve(args.clusters, file, "clusters", defaults.clusters)?,
        cluster_seed: resolve(args.cluster_seed, file, "cluster-seed", defaults.cluster_seed)?,
        threads: resolve(args.threads, file, "threads", ThreadsArg(Threads::All))?.0,
        ..defaults
    };
    let meshes = inputs
        .iter()
        .map(|path| read_mesh(path))
        .collect::<Result<Vec<_>, _>>()?;
    let set =
        build_training_set(&meshes, &options).map_err(|e| CliError::Data(e.to_string()))?;
    write_bytes(&out, &save_training_set(&set))?;
    println!("meshes={}", meshes.len());
    println!("pairs={}", set.pairs.len());
    println!("clusters={}", set.cluster.k());
    println!("output={}", out.display());
    Ok(())
}

fn run_train(args: TrainArgs, file: &FileConfig) -> Result<(), CliError> {
    let trainset: PathBuf = resolve_required(args.trainset, file, "trainset")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;
    let arch = resolve(args.arch, file, "arch", ArchArg::Cvae)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs: resolve(args.epochs, file, "epochs", defaults.epochs)?,
        batch_size: resolve(args.batch_size, file, "batch-size", defaults.batch_size)?,
        learning_rate: resolve(args.learning_rate, file, "learning-rate", defaults.learning_rate)?,
        lr_decay: resolve(args.lr_decay, file, "lr-decay", defaults.lr_decay)?,
        keep_ratio: resolve(args.keep_ratio, file, "keep-ratio", defaults.keep_ratio)?,
        holdout_fraction: resolve(args.holdout, file, "holdout", defaults.holdout_fraction)?,
        seed: resolve(args.seed, file, "seed", defaults.seed)?,
        ..defaults
    };

    let set = load_training_set(&read_bytes(&trainset)?)
        .map_err(|e| data_err(&trainset, e))?;

    let (bundle, report) = match arch {
        ArchArg::Cvae => {
            let default_shape = NetworkShape::default();
            let hidden = resolve(args.hidden, file, "hidden", default_shape.encoder1)?;
            let latent = resolve(args.latent, file, "latent", default_shape.latent)?;
            let shape = NetworkShape {
                encoder1: hidden,
                encoder2: hidden,
                latent,
                decoder1: hidden,
                decoder2: hidden,
                ..default_shape
            };
            train_model(&set, &shape, &cfg).map_err(|e| CliError::Data(e.to_string()))?
        }
        ArchArg::Ae => {
            let widths = resolve(args.ae_widths, file, "ae-widths", WidthsArg(DEFAULT_AE_WIDTHS))?;
            train_model_ae(&set, widths.0, &cfg).map_err(|e| CliError::Data(e.to_string()))?
        }
    };

    write_bytes(&out, &save_model(&bundle))?;
    println!("pairs={}", set.pairs.len());
    println!(
        "architecture={}",
        match bundle.network {
            NetworkKind::Cvae(_) => "cvae",
            NetworkKind::Ae(_) => "ae",
        }
    );
    println!("epochs={}", report.epochs.len());
    if let Some(loss) = report.final_train_loss() {
        println!("final_train_loss={loss}");
    }
    if let Some(loss) = report.final_holdout_loss() {
        println!("final_holdout_loss={loss}");
    }
    println!("output={}", out.display());
    Ok(())
}

/// Runtime denoising config: structural parameters come from the model
/// bundle, tunable ones resolve flag > file > bundle snapshot.
fn runtime_config(
    snapshot: &DenoiseConfig,
    bilateral_iterations: Option<usize>,
    vertex_iterations: Option<usize>,
    sigma2: Option<f64>,
    sigma1_mode: Option<Sigma1ModeArg>,
    threads: Option<ThreadsArg>,
    file: &FileConfig,
) -> Result<DenoiseConfig, CliError> {
    Ok(DenoiseConfig {
        bilateral_iterations: resolve(
            bilateral_iterations,
            file,
            "bilateral-iterations",
            snapshot.bilateral_iterations,
        )?,
        vertex_update_iterations: resolve(
            vertex_iterations,
            file,
            "vertex-iterations",
            snapshot.vertex_update_iterations,
        )?,
        sigma2: resolve(sigma2, file, "sigma2", snapshot.sigma2)?,
        sigma1_mode: resolve(sigma1_mode, file, "sigma1-mode", Sigma1ModeArg(snapshot.sigma1_mode))?.0,
        threads: resolve(threads, file, "threads", ThreadsArg(Threads::All))?.0,
        ..*snapshot
    })
}

fn run_denoise(args: DenoiseArgs, file: &FileConfig) -> Result<(), CliError> {
    let input: PathBuf = resolve_required(args.input, file, "in")?;
    let model: PathBuf = resolve_required(args.model, file, "model")?;
    let out: PathBuf = resolve_required(args.out, file, "out")?;

    let bundle = load_model(&read_bytes(&model)?).map_err(|e| data_err(&model, e))?;
    let cfg = runtime_config(
        &bundle.config,
        args.bilateral_iterations,
        args.vertex_iterations,
        args.sigma2,
        args.sigma1_mode,
        args.threads,
        file,
    )?;
    let mesh = read_mesh(&input)?;
    let outcome =
        denoise_mesh(&mesh, &bundle, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    write_mesh(&outcome.mesh, &out)?;

    let t = &outcome.timings;
    println!("faces={}", mesh.n_faces());
    println!("skipped_faces={}", outcome.skipped_faces);
    println!("descriptor_seconds={}", t.descriptor_seconds);
    println!("inference_seconds={}", t.inference_seconds);
    println!("bilateral_seconds={}", t.bilateral_seconds);
    println!("vertex_update_seconds={}", t.vertex_update_seconds);
    println!("total_seconds={}", t.total_seconds());
    println!("output={}", out.display());
    Ok(())
}

fn run_eval(args: EvalArgs, file: &FileConfig) -> Result<(), CliError> {
    let rec_path: PathBuf = resolve_required(args.rec, file, "rec")?;
    let ref_path: PathBuf = resolve_required(args.reference, file, "ref")?;
    let rec = read_mesh(&rec_path)?;
    let reference = read_mesh(&ref_path)?;

    let distances =
        one_sided_distance(&rec, &reference).map_err(|e| CliError::Data(e.to_string()))?;
    println!("mean_one_sided_distance={}", distances.mean);
    println!("max_one_sided_distance={}", distances.max);

    // The angle metric needs matching connectivity; against a
    // differently meshed reference only the distance applies.
    match normal_angle_alpha(&rec, &reference) {
        Ok(alpha) => println!("alpha_mean_deg={}", alpha.mean_deg),
        Err(MetricsError::ConnectivityMismatch(why)) => {
            eprintln!("note: skipping alpha, meshes are not comparable face to face: {why}");
        }
        Err(e) => return Err(CliError::Data(e.to_string())),
    }

    if args.colormap.is_some() || args.csv.is_some() {
        let export = export_error_colormap(&rec, &distances.per_vertex)
            .map_err(|e| CliError::Data(e.to_string()))?;
        if let Some(path) = args.colormap {
            write_text(&path, &export.coff)?;
            println!("colormap={}", path.display());
        }
        if let Some(path) = args.csv {
            write_text(&path, &export.csv)?;
            println!("csv={}", path.display());
        }
    }
    Ok(())
}

fn run_bench(args: BenchArgs, file: &FileConfig) -> Result<(), CliError> {
    let input: PathBuf = resolve_required(args.input, file, "in")?;
    let model: PathBuf = resolve_required(args.model, file, "model")?;
    let bundle = load_model(&read_bytes(&model)?).map_err(|e| data_err(&model, e))?;
    let cfg = runtime_config(
        &bundle.config,
        args.bilateral_iterations,
        args.vertex_iterations,
        None,
        None,
        None,
        file,
    )?;
    let default_options = BenchmarkOptions::default();
    let options = BenchmarkOptions {
        thread_counts: resolve(
            args.threads_list,
            file,
            "threads-list",
            ThreadListArg(default_options.thread_counts),
        )?
        .0,
        repetitions: resolve(args.repetitions, file, "repetitions", default_options.repetitions)?,
    };

    let mesh = read_mesh(&input)?;
    let report =
        benchmark(&mesh, &bundle, &cfg, &options).map_err(|e| CliError::Data(e.to_string()))?;

    let mut summary = Vec::new();
    for &threads in &options.thread_counts {
        for stage in ["descriptor", "inference", "bilateral", "vertex_update", "total"] {
            if let Some(stats) = report.stage_stats(stage, threads) {
                summary.push(format!(
                    "stage={stage} threads={threads} min={} mean={} median={} max={}",
                    stats.min, stats.mean, stats.median, stats.max
                ));
            }
        }
    }
    let baseline = *options.thread_counts.iter().min().expect("non-empty");
    for &threads in &options.thread_counts {
        if threads != baseline {
            if let Some(ratio) = report.speedup("total", baseline, threads) {
                summary.push(format!("speedup_total_{baseline}_to_{threads}={ratio}"));
            }
        }
    }
    summary.push(format!(
        "identical_across_threads={}",
        report.identical_across_threads
    ));
    summary.push(format!(
        "reference_total_100k_faces_seconds={REFERENCE_100K_FACES_SECONDS}"
    ));

    // With CSV on stdout, the human-readable summary moves to stderr so
    // the CSV stays machine-readable.
    let csv = report.to_csv();
    let out = args.out.or_else(|| file.get("out").map(PathBuf::from));
    match out {
        Some(path) => {
            write_text(&path, &csv)?;
            println!("csv={}", path.display());
            for line in &summary {
                println!("{line}");
            }
        }
        None => {
            print!("{csv}");
            for line in &summary {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}
