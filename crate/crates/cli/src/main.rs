use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use craqreg_core::bundle::write_bundle;
use craqreg_core::eval::{evaluate_dataset, mae, me, pair_errors, ControlPointAnnotation, DatasetManifest};
use craqreg_core::{register, Error, ImageBuffer, Method, RegistrationConfig, ResizePolicy, Stage};
use craqreg_service::{default_config_path, serve, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "craqreg", version, about = "Multi-modal artwork image registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a moving image onto a reference image and write a result bundle.
    Register(RegisterArgs),
    /// Evaluate a dataset manifest and print success-rate tables.
    Evaluate(EvaluateArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    max_keypoints: Option<usize>,
    #[arg(long)]
    tau_kp: Option<f64>,
    /// ransac, lo-ransac or magsac-simplified
    #[arg(long)]
    estimator: Option<Method>,
    /// Inlier threshold in pixels.
    #[arg(long)]
    reproj_thresh: Option<f64>,
    /// same-width, height:<h> or none
    #[arg(long)]
    resize: Option<ResizePolicy>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    visualize_matches: bool,
}

impl ConfigArgs {
    fn build(&self) -> RegistrationConfig {
        let mut cfg = RegistrationConfig::default();
        if let Some(v) = self.patch_size {
            cfg.patch_size = v;
        }
        if let Some(v) = self.max_keypoints {
            cfg.n_max = v;
        }
        if let Some(v) = self.tau_kp {
            cfg.tau_kp = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator.method = v;
        }
        if let Some(v) = self.reproj_thresh {
            cfg.estimator.tau_reproj = v;
        }
        if let Some(v) = self.resize {
            cfg.resize_policy = v;
        }
        if let Some(v) = &self.backend {
            cfg.backend = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.estimator.seed = v;
        }
        cfg.visualize_matches = self.visualize_matches;
        cfg
    }
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    moving: PathBuf,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    /// Control-point annotation; prints ME/MAE of the result.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    thresholds_me: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5,6,7,8,9,10")]
    thresholds_mae: Vec<f64>,
    /// Directory for the CSV table and per-domain curves.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Registrations run concurrently.
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Largest accepted image in pixels.
    #[arg(long, default_value_t = 200_000_000)]
    max_pixels: u64,
}

/// Exit code for a failed command.
fn exit_code(e: &Error) -> u8 {
    match e.stage() {
        Some(Stage::Detection) => 3,
        Some(Stage::Matching) => 4,
        Some(Stage::Estimation | Stage::Warping) => 5,
        Some(Stage::Loading) | None => 2,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn run_register(args: &RegisterArgs) -> Result<(), Error> {
    let cfg = args.config.build();
    cfg.validate()?;
    let reference = ImageBuffer::open(&args.reference)?;
    let moving = ImageBuffer::open(&args.moving)?;
    let annotation = match &args.annotations {
        Some(path) => {
            let ann = ControlPointAnnotation::load(path)?;
            ann.check_bounds(
                (reference.width(), reference.height()),
                (moving.width(), moving.height()),
            )?;
            Some(ann)
        }
        None => None,
    };

    let out = register(&reference, &moving, &cfg)?;
    let manifest = write_bundle(&args.out, &reference, &out, &cfg)?;
    let t = &out.timings;
    log::info!(
        "timings ms: resize {:.0} detection {:.0} matching {:.0} estimation {:.0} warping {:.0} overlay {:.0}",
        t.resize_ms,
        t.detection_ms,
        t.matching_ms,
        t.estimation_ms,
        t.warping_ms,
        t.overlay_ms
    );
    let r = &manifest.report;
    println!(
        "{}: {} inliers of {} matches ({} / {} keypoints), {:.0} ms",
        r.method, r.inliers, r.matches, r.keypoints_ref, r.keypoints_mov, t.total_ms
    );
    println!("bundle written to {}", args.out.display());
    if let Some(ann) = annotation {
        let errs = pair_errors(&out.h_original, &ann)?;
        println!(
            "ME {:.3} px  MAE {:.3} px  ({} control points)",
            me(&errs)?,
            mae(&errs)?,
            errs.len()
        );
    }
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<(), Error> {
    let cfg = args.config.build();
    let manifest = DatasetManifest::load(&args.manifest)?;
    let started = Instant::now();
    let eval = evaluate_dataset(&manifest, &cfg, &args.thresholds_me, &args.thresholds_mae)?;
    for p in &eval.pairs {
        match &p.failure {
            Some(f) => log::warn!("{}: failed in {:?}: {}", p.pair_id, f.stage, f.message),
            None => log::info!("{}: ME {:.3} MAE {:.3}", p.pair_id, p.me, p.mae),
        }
    }
    print!("{}", eval.table.to_text());
    println!("{} pairs in {:.1} s", eval.pairs.len(), started.elapsed().as_secs_f64());
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("success_rates.csv");
        fs::write(&path, eval.table.to_csv()).map_err(|e| io_err(&path, e))?;
        let path = dir.join("pairs.json");
        let json = serde_json::to_vec_pretty(&eval.pairs).expect("pair results serialize");
        fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        for (name, csv) in eval.table.curve_csvs() {
            let path = dir.join(name);
            fs::write(&path, csv).map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}

fn run_serve(args: &ServeArgs) -> std::io::Result<()> {
    let cfg = ServiceConfig {
        config_path: Some(default_config_path()),
        max_pixels: args.max_pixels,
        parallelism: args.parallelism,
        ..Default::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let state = AppState::new(cfg);
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(args.host, args.port)).await?;
        log::info!("config file {}", state.config().path().map(|p| p.display().to_string()).unwrap_or_default());
        println!("listening on http://{}", listener.local_addr()?);
        serve(listener, state).await
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Register(a) => run_register(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Serve(a) => {
            return match run_serve(a) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
