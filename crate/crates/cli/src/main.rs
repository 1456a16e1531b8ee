use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use splatpose::bench::{
    default_base_poses, default_thresholds, generate_testset, run_benchmark, sweep_views, DeviationBin, Pipeline,
    PipelineSwitches, ReportFormat, Threshold,
};
use splatpose::coarse::{micro_batch_grad_check, train_coarse_with, CoarseEstimator, CoarseNet, CoarseNetConfig, TrainConfig};
use splatpose::correspond::MatcherConfig;
use splatpose::geom::{sample_sphere, PoseJson, SphericalConfig};
use splatpose::refine::{
    refine_pose, scale_pairs, train_scale_regressor, Matcher, RefineConfig, RefineContext, ScaleMode, ScaleRegressor,
    ScaleTrainConfig, CUE_SIZE,
};
use splatpose::render::{CameraIntrinsics, Image, Rasterizer, RenderOptions, DEFAULT_FOV_DEG};
use splatpose::scene::{generate_synthetic, load_ply, save_ply, scene_bounds, GaussianScene, SceneStyle};
use splatpose_nn::ParamStore;

const CONFIG_VERSION: u32 = 1;
const GRAD_TOL: f64 = 1e-4;

/// Every tunable of the pipeline. A config file only needs the keys it
/// changes; missing keys keep the defaults shown by `splatpose config`.
/// `seed` feeds every seeded stage and overwrites `train.seed`,
/// `scale_train.seed` and `refine.ransac.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    version: u32,
    seed: u64,
    /// Side length of rendered targets and benchmark images.
    image_size: usize,
    sampling: SphericalConfig,
    network: CoarseNetConfig,
    train: TrainConfig,
    scale_train: ScaleTrainConfig,
    refine: RefineConfig,
    matcher: MatcherConfig,
    switches: PipelineSwitches,
    thresholds: Vec<Threshold>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 7,
            image_size: 256,
            sampling: SphericalConfig::default(),
            network: CoarseNetConfig::desk(),
            train: TrainConfig::default(),
            scale_train: ScaleTrainConfig::default(),
            refine: RefineConfig::default(),
            matcher: MatcherConfig::default(),
            switches: PipelineSwitches::default(),
            thresholds: default_thresholds(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Domain(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let mut v = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
        let over: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
        merge(&mut v, over);
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    if cfg.version != CONFIG_VERSION {
        return Err(CliError::Usage(format!(
            "config: version {} unsupported (expected {CONFIG_VERSION})",
            cfg.version
        )));
    }
    Ok(cfg)
}

/// Pose estimation against a 3D Gaussian scene from a single image.
#[derive(Debug, Parser)]
#[command(name = "splatpose", version)]
struct Cli {
    /// JSON run config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized stage [default: 7].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the resolved run config here.
    #[arg(long, global = true)]
    emit_config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write a procedural scene as a 3DGS PLY.
    GenScene {
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// textured | clustered
        #[arg(long, default_value = "textured")]
        style: SceneStyle,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene from a pose JSON to PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the reference viewpoints as a JSON array of poses.
    SampleViews {
        #[arg(long)]
        n_views: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the coarse pose network.
    Train {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the translation-scale regressor on top of a trained network.
    TrainScale {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the pose of one image.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        image: PathBuf,
        /// coarse | full
        #[arg(long, default_value = "full")]
        stage: Stage,
        #[command(flatten)]
        switches: SwitchArgs,
    },
    /// Run the pipeline on a generated test set.
    Benchmark {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        switches: SwitchArgs,
        /// json | csv
        #[arg(long, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark once per reference-view count.
    SweepViews {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        switches: SwitchArgs,
        /// Comma-separated view counts.
        #[arg(long, value_delimiter = ',', default_value = "1,4,8,16")]
        views: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Central-difference check of the full coarse network.
    GradCheck,
    /// Print the default run config.
    Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Stage {
    Coarse,
    Full,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Scale regressor for `--scale-mode learned_regressor`.
    #[arg(long)]
    regressor: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SetArgs {
    /// Rotation bin in degrees, `lo:hi`.
    #[arg(long, default_value = "20:40")]
    bin: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
}

#[derive(Debug, Args)]
struct SwitchArgs {
    /// Average candidates uniformly instead of using predicted weights.
    #[arg(long)]
    no_wpm: bool,
    /// Skip matching and the epipolar solver.
    #[arg(long)]
    no_matcher: bool,
    /// coarse_pose | learned_regressor | render_depth | known=<magnitude>
    #[arg(long)]
    scale_mode: Option<String>,
    #[arg(long)]
    n_views: Option<usize>,
}

fn parse_scale_mode(s: &str) -> CliResult<ScaleMode> {
    if let Some(v) = s.strip_prefix("known=") {
        return v
            .parse()
            .map(ScaleMode::Known)
            .map_err(|_| CliError::Usage(format!("--scale-mode: bad magnitude {v:?}")));
    }
    serde_json::from_value(Value::String(s.into())).map_err(|_| CliError::Usage(format!("--scale-mode: unknown mode {s:?}")))
}

impl SwitchArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if self.no_wpm {
            cfg.switches.use_wpm = false;
        }
        if self.no_matcher {
            cfg.switches.use_matcher_solver = false;
        }
        if let Some(m) = &self.scale_mode {
            cfg.switches.scale_mode = parse_scale_mode(m)?;
        }
        if let Some(n) = self.n_views {
            cfg.switches.n_views = n;
        }
        Ok(())
    }
}

fn load_scene(path: &Path) -> anyhow::Result<GaussianScene> {
    load_ply(path).with_context(|| format!("scene {}", path.display()))
}

fn load_net(path: &Path) -> anyhow::Result<CoarseNet> {
    let (store, meta) = ParamStore::load(path).with_context(|| format!("params {}", path.display()))?;
    let cfg: CoarseNetConfig =
        serde_json::from_value(meta).with_context(|| format!("params {}: network config", path.display()))?;
    CoarseNet::from_params(cfg, store).with_context(|| format!("params {}", path.display()))
}

fn load_regressor(path: Option<&Path>, mode: ScaleMode) -> anyhow::Result<Option<ScaleRegressor>> {
    match (path, mode) {
        (Some(p), _) => Ok(Some(
            ScaleRegressor::load(p).with_context(|| format!("regressor {}", p.display()))?,
        )),
        (None, ScaleMode::LearnedRegressor) => Err(anyhow!("--scale-mode learned_regressor needs --regressor")),
        _ => Ok(None),
    }
}

fn write_json(out: Option<&Path>, v: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("write {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn testset_bin(set: &SetArgs, seed: u64) -> CliResult<DeviationBin> {
    let b: DeviationBin = set.bin.parse().map_err(|e| CliError::Usage(format!("--bin: {e}")))?;
    Ok(DeviationBin::new(b.rot_range[0], b.rot_range[1], set.n, seed))
}

#[derive(Serialize)]
struct FullEstimate {
    #[serde(rename = "T_coarse")]
    t_coarse: PoseJson,
    #[serde(rename = "T_fine")]
    t_fine: PoseJson,
    n_matches: usize,
    n_inliers: usize,
    scale_mode: ScaleMode,
    status: String,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    cfg.scale_train.seed = cfg.seed;
    cfg.refine.ransac.seed = cfg.seed;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Domain(e.into()))?;
    }

    match &cli.cmd {
        Cmd::Train { epochs, n_train, batch, lr, .. } => {
            cfg.train.n_epochs = epochs.unwrap_or(cfg.train.n_epochs);
            cfg.train.n_train = n_train.unwrap_or(cfg.train.n_train);
            cfg.train.batch = batch.unwrap_or(cfg.train.batch);
            cfg.train.lr = lr.unwrap_or(cfg.train.lr);
        }
        Cmd::TrainScale { n_pairs, epochs, .. } => {
            cfg.scale_train.n_pairs = n_pairs.unwrap_or(cfg.scale_train.n_pairs);
            cfg.scale_train.epochs = epochs.unwrap_or(cfg.scale_train.epochs);
        }
        Cmd::SampleViews { n_views, radius, .. } => {
            if let Some(n) = n_views {
                cfg.sampling = cfg.sampling.with_view_count(*n).map_err(|e| CliError::Usage(format!("--n-views: {e}")))?;
            }
            cfg.sampling.radius = radius.unwrap_or(cfg.sampling.radius);
        }
        Cmd::Render { size: Some(s), .. } => cfg.image_size = *s,
        Cmd::Estimate { switches, .. } | Cmd::Benchmark { switches, .. } | Cmd::SweepViews { switches, .. } => {
            switches.apply(&mut cfg)?
        }
        _ => {}
    }
    if let Some(p) = &cli.emit_config {
        write_json(Some(p), &cfg)?;
    }

    match cli.cmd {
        Cmd::Config => write_json(None, &cfg)?,
        Cmd::GenScene { n, style, out } => {
            let scene = generate_synthetic(cfg.seed, n, style).context("generate scene")?;
            save_ply(&scene, &out).with_context(|| format!("write {}", out.display()))?;
            log::info!("{} splats -> {}", scene.len(), out.display());
        }
        Cmd::Render { scene, pose, out, .. } => {
            let scene = load_scene(&scene)?;
            let text = std::fs::read_to_string(&pose).with_context(|| format!("pose {}", pose.display()))?;
            let pj: PoseJson = serde_json::from_str(&text).with_context(|| format!("pose {}", pose.display()))?;
            let k = CameraIntrinsics::square(cfg.image_size);
            let img = Rasterizer::new(RenderOptions::default())
                .render(&scene, &pj.to_w2c(), &k, [0.0; 3])
                .context("render")?;
            img.save_png(&out).with_context(|| format!("write {}", out.display()))?;
        }
        Cmd::SampleViews { out, .. } => {
            let poses = sample_sphere::<f64>(&cfg.sampling).context("sample views")?;
            let js: Vec<PoseJson> = poses.iter().map(PoseJson::from_w2c).collect();
            write_json(out.as_deref(), &js)?;
        }
        Cmd::Train { scene, out, .. } => {
            let scene = load_scene(&scene)?;
            let (net, report) = train_coarse_with(&scene, &cfg.sampling, cfg.network.clone(), &cfg.train, |step, loss| {
                if step % 100 == 0 {
                    log::info!("step {step} loss {loss:.3}");
                }
            })
            .context("train")?;
            let meta = serde_json::to_value(&net.config).map_err(anyhow::Error::from)?;
            net.params.save(&out, meta).with_context(|| format!("write {}", out.display()))?;
            let last = report.losses.iter().rev().take(50).sum::<f64>() / report.losses.len().clamp(1, 50) as f64;
            println!("{{\"steps\": {}, \"final_loss\": {last}}}", report.steps);
        }
        Cmd::TrainScale { scene, params, out, .. } => {
            let scene = load_scene(&scene)?;
            let net = load_net(&params)?;
            let base = sample_sphere::<f64>(&cfg.sampling).context("sample views")?;
            let pairs = scale_pairs(&scene, &base, CUE_SIZE, &cfg.scale_train, cfg.seed).context("scale pairs")?;
            let (reg, losses) = train_scale_regressor(&net, &pairs, &cfg.scale_train).context("train regressor")?;
            reg.save(&out).with_context(|| format!("write {}", out.display()))?;
            println!("{{\"epochs\": {}, \"final_loss\": {}}}", losses.len(), losses.last().copied().unwrap_or(f64::NAN));
        }
        Cmd::Estimate { model, image, stage, .. } => {
            let scene = load_scene(&model.scene)?;
            let mut est = CoarseEstimator::new(load_net(&model.params)?);
            est.use_wpm = cfg.switches.use_wpm;
            let regressor = load_regressor(model.regressor.as_deref(), cfg.switches.scale_mode)?;
            let target = Image::load_png(&image).with_context(|| format!("image {}", image.display()))?;
            let sampling = cfg.sampling.with_view_count(cfg.switches.n_views).context("sampling")?;
            let out = est.run_coarse(&target, &scene, &sampling).context("coarse stage")?;
            let coarse = if cfg.switches.use_wpm {
                out.pose
            } else {
                let n = out.candidates.poses.len();
                splatpose::coarse::fuse_poses(&splatpose::coarse::CandidateSet {
                    poses: out.candidates.poses,
                    weights: vec![1.0 / n as f64; n],
                })
                .context("fuse")?
            };
            if stage == Stage::Coarse {
                write_json(None, &PoseJson::from_w2c(&coarse))?;
                return Ok(());
            }
            let k = CameraIntrinsics::with_fov(target.width, target.height, DEFAULT_FOV_DEG);
            let rast = Rasterizer::new(RenderOptions::default());
            let ctx = RefineContext {
                scene: &scene,
                rasterizer: &rast,
                scene_center: scene_bounds(&scene).center.into(),
                regressor: regressor.as_ref().map(|r| (&est.net, r)),
            };
            let refine_cfg = RefineConfig {
                scale_mode: cfg.switches.scale_mode,
                ..cfg.refine
            };
            let (fine, d) = if cfg.switches.use_matcher_solver {
                let r = refine_pose(&coarse, &target, &k, &ctx, &Matcher::Classical(cfg.matcher), &refine_cfg)
                    .context("refine stage")?;
                (r.pose, Some(r.diagnostics))
            } else {
                (coarse, None)
            };
            write_json(
                None,
                &FullEstimate {
                    t_coarse: PoseJson::from_w2c(&coarse),
                    t_fine: PoseJson::from_w2c(&fine),
                    n_matches: d.as_ref().map_or(0, |d| d.n_matches),
                    n_inliers: d.as_ref().map_or(0, |d| d.n_inliers),
                    scale_mode: refine_cfg.scale_mode,
                    status: d.map_or("skipped".into(), |d| format!("{:?}", d.status)),
                },
            )?;
        }
        Cmd::Benchmark { model, set, format, out, .. } => {
            let bin = testset_bin(&set, cfg.seed)?;
            let scene = load_scene(&model.scene)?;
            let est = CoarseEstimator::new(load_net(&model.params)?);
            let regressor = load_regressor(model.regressor.as_deref(), cfg.switches.scale_mode)?;
            let base = default_base_poses().context("base poses")?;
            let testset = generate_testset(&scene, &base, &bin, &CameraIntrinsics::square(cfg.image_size))
                .context("test set")?;
            let p = Pipeline {
                scene: &scene,
                estimator: &est,
                sampling: cfg.sampling.clone(),
                refine: cfg.refine,
                matcher: cfg.matcher,
                regressor: regressor.as_ref(),
                oracle: None,
            };
            let report = run_benchmark(&p, &testset, &cfg.switches, &cfg.thresholds).context("benchmark")?;
            report.emit(&out, format).with_context(|| format!("write {}", out.display()))?;
            let a = &report.aggregates;
            println!(
                "{{\"n\": {}, \"median_rot_err\": {}, \"median_trans_err\": {}, \"not_worse_frac\": {}}}",
                a.n, a.median_rot_err, a.median_trans_err, a.not_worse_frac
            );
        }
        Cmd::SweepViews { model, set, views, out, .. } => {
            let bin = testset_bin(&set, cfg.seed)?;
            let scene = load_scene(&model.scene)?;
            let est = CoarseEstimator::new(load_net(&model.params)?);
            let regressor = load_regressor(model.regressor.as_deref(), cfg.switches.scale_mode)?;
            let base = default_base_poses().context("base poses")?;
            let testset = generate_testset(&scene, &base, &bin, &CameraIntrinsics::square(cfg.image_size))
                .context("test set")?;
            let p = Pipeline {
                scene: &scene,
                estimator: &est,
                sampling: cfg.sampling.clone(),
                refine: cfg.refine,
                matcher: cfg.matcher,
                regressor: regressor.as_ref(),
                oracle: None,
            };
            let runs = sweep_views(&p, &testset, &cfg.switches, &cfg.thresholds, &views).context("sweep")?;
            let rows: Vec<Value> = runs
                .iter()
                .map(|(n, r)| serde_json::json!({"n_views": n, "aggregates": r.aggregates}))
                .collect();
            write_json(Some(&out), &rows)?;
        }
        Cmd::GradCheck => {
            let r = micro_batch_grad_check(cfg.seed).context("grad check")?;
            println!("max_rel_err {:e} over {} coordinates", r.max_rel_err, r.n_checked);
            if !(r.max_rel_err < GRAD_TOL) {
                return Err(CliError::Domain(anyhow!("max relative error {:e} >= {GRAD_TOL:e}", r.max_rel_err)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help and version print to stdout and succeed
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
