use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use swlidar::clustering::cluster_pixels;
use swlidar::eval::{run_grid, write_cdf_files, write_cells_csv, write_summary_csv, GridSpec, GridTruth, Method};
use swlidar::forward::simulate;
use swlidar::io;
use swlidar::phantom;
use swlidar::pipeline::{reconstruct, reconstruct_baseline, Reconstruction};
use swlidar::reflectivity::DenoiseConfig;
use swlidar::{HyperParams, IrfBank64, LidarError, PriorKind, SceneCube, SimConfig};

/// Single-waveform multispectral lidar reconstruction.
///
/// Set SWLIDAR_THREADS to bound the worker thread count.
#[derive(Parser)]
#[command(name = "swlidar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a photon-count scene from truth profiles and IRFs.
    Simulate(SimulateArgs),
    /// Estimate weights, depth and reflectivity with a weight prior.
    Reconstruct(ReconstructArgs),
    /// Matched-filter depth and maximum-likelihood weights.
    Baseline(BaselineArgs),
    /// Run the (alpha, gamma, method, seed) grid on the phantom.
    Evaluate(EvaluateArgs),
    /// Write the pixel clusters used by the cluster-wise Dirichlet prior.
    Cluster(ClusterArgs),
}

#[derive(Args, Serialize)]
struct TruthArgs {
    /// IRF file (default: the bundled phantom IRFs).
    #[arg(long)]
    irf: Option<PathBuf>,
    /// Depth matrix (default: the bundled phantom).
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Directory with `<stem>_band<l>.txt` and `<stem>_background.txt`.
    #[arg(long)]
    truth_dir: Option<PathBuf>,
    #[arg(long, default_value = "truth")]
    truth_stem: String,
    /// Number of phantom bands (1 or 4) when no files are given.
    #[arg(long, default_value_t = 1)]
    bands: usize,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long)]
    alpha: f64,
    /// Background level as gamma * T.
    #[arg(long = "gammaT", alias = "gamma-t")]
    gamma_t: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output scene file (sparse text, or binary with --dense).
    #[arg(long)]
    out: PathBuf,
    /// Write binary counts plus a `.hdr` header sidecar.
    #[arg(long)]
    dense: bool,
}

#[derive(Args, Serialize)]
struct SceneArgs {
    /// Scene file; binary when a `--header` sidecar is given.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    header: Option<PathBuf>,
    #[arg(long)]
    irf: PathBuf,
}

#[derive(Args, Serialize)]
struct HyperArgs {
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.01)]
    kappa: f64,
    #[arg(long, default_value_t = 0.25)]
    theta: f64,
    #[arg(long, default_value_t = 1e-10)]
    d_eps: f64,
    #[arg(long, default_value_t = 5)]
    n_extra: usize,
    #[arg(long, default_value_t = 50)]
    burnin_cap: usize,
    #[arg(long, default_value_t = 7)]
    clusters: usize,
    #[arg(long, default_value_t = 3)]
    patch: usize,
    #[arg(long, default_value_t = 300)]
    gibbs_iters: usize,
    #[arg(long, default_value_t = 50)]
    gibbs_burnin: usize,
    /// TV weight of the count denoiser.
    #[arg(long, default_value_t = 1.0)]
    denoise_strength: f64,
}

impl HyperArgs {
    fn hyper(&self) -> HyperParams {
        HyperParams {
            lambda: self.lambda,
            epsilon: self.epsilon,
            kappa: self.kappa,
            theta: self.theta,
            d_eps: self.d_eps,
            n_extra: self.n_extra,
            burnin_cap: self.burnin_cap,
            clusters: self.clusters,
            patch: self.patch,
            gibbs_iters: self.gibbs_iters,
            gibbs_burnin: self.gibbs_burnin,
            ..HyperParams::default()
        }
    }

    fn denoise(&self) -> DenoiseConfig {
        DenoiseConfig { strength: self.denoise_strength, ..DenoiseConfig::default() }
    }
}

#[derive(Args, Serialize)]
struct ReconstructArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// tv, lap, w-dirichlet, g-dirichlet or c-dirichlet.
    #[arg(long, default_value = "c-dirichlet")]
    prior: String,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct BaselineArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 1.0)]
    denoise_strength: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    truth: TruthArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [25.0, 100.0])]
    alphas: Vec<f64>,
    /// Background levels as gamma * T.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 5.0])]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "tv,lap,w-dirichlet,g-dirichlet,c-dirichlet,xcorr")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    seeds: Vec<u64>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct ClusterArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    threads: usize,
    arguments: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    hyper: Option<HyperParams>,
}

fn write_manifest<T: Serialize>(
    path: &Path,
    command: &str,
    seed: Option<u64>,
    arguments: &T,
    hyper: Option<HyperParams>,
) -> swlidar::Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        threads: rayon::current_num_threads(),
        arguments,
        hyper,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| LidarError::io(path, e))
}

fn create_dir(dir: &Path) -> swlidar::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| LidarError::io(dir, e))
}

struct Truth {
    bank: IrfBank64,
    depth: swlidar::DepthField,
    reflectivity: swlidar::ReflectivityCube64,
}

fn load_truth(args: &TruthArgs) -> swlidar::Result<Truth> {
    if args.irf.is_none() && args.depth.is_none() && args.truth_dir.is_none() {
        let p = phantom::phantom::<f64>(args.bands)?;
        return Ok(Truth { bank: p.bank, depth: p.depth, reflectivity: p.truth });
    }
    let (Some(irf), Some(depth), Some(dir)) = (&args.irf, &args.depth, &args.truth_dir) else {
        return Err(LidarError::InvalidParameter("--irf, --depth and --truth-dir must be given together".into()));
    };
    let bank: IrfBank64 = io::read_irf(irf)?;
    let depth = io::read_depth(depth)?;
    let reflectivity = io::read_reflectivity(dir, &args.truth_stem, bank.bands())?;
    Ok(Truth { bank, depth, reflectivity })
}

fn load_scene(args: &SceneArgs) -> swlidar::Result<(SceneCube, IrfBank64)> {
    let bank: IrfBank64 = io::read_irf(&args.irf)?;
    let scene = match &args.header {
        Some(header) => io::read_scene_dense(&args.scene, header)?,
        None => io::read_scene(&args.scene)?,
    };
    if scene.t_len() != bank.t_len() {
        return Err(LidarError::SizeMismatch(format!(
            "scene has T = {} but the IRF file has T = {}",
            scene.t_len(),
            bank.t_len()
        )));
    }
    Ok((scene, bank))
}

fn write_reconstruction(dir: &Path, rec: &Reconstruction<f64>) -> swlidar::Result<()> {
    io::write_depth(&dir.join("depth.txt"), &rec.depth)?;
    io::write_weights(dir, "weights", &rec.weights)?;
    io::write_reflectivity(dir, "reflectivity", &rec.reflectivity)?;
    io::write_real_matrix(&dir.join("denoised_counts.txt"), rec.weights.dims(), &rec.denoised_counts)?;
    if let Some(est) = &rec.depth_marginals {
        io::write_real_matrix(&dir.join("depth_entropy.txt"), rec.weights.dims(), &est.entropy_map())?;
    }
    if let Some(sem) = &rec.sem {
        sem.write_trace_csv(&dir.join("trace.csv"))?;
    }
    if let Some(c) = &rec.clusters {
        io::write_labels(&dir.join("clusters.txt"), rec.weights.dims(), &c.labels)?;
    }
    Ok(())
}

fn run(cli: Cli) -> swlidar::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let truth = load_truth(&args.truth)?;
            let cfg = SimConfig { alpha: args.alpha, gamma_t: args.gamma_t, seed: args.seed };
            let scene = simulate(&cfg, &truth.depth, &truth.reflectivity, &truth.bank)?;
            if args.dense {
                io::write_scene_dense(&args.out, &sidecar(&args.out), &scene)?;
            } else {
                io::write_scene(&args.out, &scene)?;
            }
            let manifest = with_suffix(&args.out, ".manifest.json");
            write_manifest(&manifest, "simulate", Some(args.seed), &args, None)
        }
        Command::Reconstruct(args) => {
            let kind: PriorKind = args.prior.parse()?;
            let (scene, bank) = load_scene(&args.scene)?;
            let hyper = args.hyper.hyper();
            create_dir(&args.out_dir)?;
            let rec = reconstruct(&scene, &bank, kind, &hyper, &args.hyper.denoise(), args.seed)?;
            write_reconstruction(&args.out_dir, &rec)?;
            write_manifest(&args.out_dir.join("manifest.json"), "reconstruct", Some(args.seed), &args, Some(hyper))
        }
        Command::Baseline(args) => {
            let (scene, bank) = load_scene(&args.scene)?;
            let hyper = HyperParams::default();
            create_dir(&args.out_dir)?;
            let denoise = DenoiseConfig { strength: args.denoise_strength, ..DenoiseConfig::default() };
            let rec = reconstruct_baseline(&scene, &bank, &hyper, &denoise)?;
            write_reconstruction(&args.out_dir, &rec)?;
            write_manifest(&args.out_dir.join("manifest.json"), "baseline", None, &args, None)
        }
        Command::Evaluate(args) => {
            let truth = load_truth(&args.truth)?;
            let methods = args.methods.iter().map(|m| m.parse()).collect::<swlidar::Result<Vec<Method>>>()?;
            let spec = GridSpec { alphas: args.alphas.clone(), gamma_t: args.gammas.clone(), methods, seeds: args.seeds.clone() };
            let hyper = args.hyper.hyper();
            hyper.validate()?;
            create_dir(&args.out_dir)?;
            let grid_truth = GridTruth { depth: &truth.depth, reflectivity: &truth.reflectivity, bank: &truth.bank };
            let results = run_grid(&grid_truth, &spec, &hyper, &args.hyper.denoise());
            write_cells_csv(&args.out_dir.join("runs.csv"), &results.cells)?;
            write_summary_csv(&args.out_dir.join("summary.csv"), &results.summaries)?;
            write_cdf_files(&args.out_dir, &results.summaries)?;
            for c in &results.cells {
                if let Err(e) = &c.outcome {
                    eprintln!("cell alpha={} gammaT={} {} seed {} failed: {e}", c.alpha, c.gamma_t, c.method, c.seed);
                }
            }
            write_manifest(&args.out_dir.join("manifest.json"), "evaluate", None, &args, Some(hyper))
        }
        Command::Cluster(args) => {
            let (scene, bank) = load_scene(&args.scene)?;
            let hyper = args.hyper.hyper();
            hyper.validate()?;
            create_dir(&args.out_dir)?;
            let clusters = cluster_pixels(&scene, &bank, &hyper, args.seed)?;
            io::write_labels(&args.out_dir.join("clusters.txt"), scene.dims(), &clusters.labels)?;
            if clusters.degenerate {
                eprintln!("warning: fewer distinct patches than clusters; {} clusters formed", clusters.n_clusters);
            }
            write_manifest(&args.out_dir.join("manifest.json"), "cluster", Some(args.seed), &args, Some(hyper))
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn sidecar(path: &Path) -> PathBuf {
    with_suffix(path, ".hdr")
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("SWLIDAR_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().map_err(|_| format!("SWLIDAR_THREADS must be a positive integer, got '{value}'"))?;
    if n == 0 {
        return Err("SWLIDAR_THREADS must be a positive integer, got '0'".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn exit_code(err: &LidarError) -> u8 {
    if err.is_numerical() {
        4
    } else if matches!(err, LidarError::InvalidParameter(_)) {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
