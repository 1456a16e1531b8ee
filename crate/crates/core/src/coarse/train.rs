use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use splatpose_nn::{adam_step, AdamConfig, NnError, Tape, Tensor, Var};

use super::estimator::{render_small, render_source_views};
use super::fuse::{fuse_on_tape, pose_loss_on_tape};
use super::net::{patchify, pose_vector, CoarseNet, Graph};
use super::{CoarseError, CoarseNetConfig, TrainConfig};
use crate::geom::{perturb_pose, sample_perturbation, LossWeights, Pose, SphericalConfig};
use crate::render::{Image, Rasterizer};
use crate::scene::GaussianScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per optimizer step.
    pub losses: Vec<f64>,
    pub steps: usize,
    pub epochs: usize,
}

/// A target image (already patchified) with its ground-truth pose.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub pose: Pose<f64>,
}

/// Draws `n` target poses around the reference views and renders them.
pub fn sample_targets(
    scene: &GaussianScene,
    base: &[Pose<f64>],
    n: usize,
    angle_range: [f64; 2],
    offset_range: [f64; 2],
    size: usize,
    supersample: usize,
    seed: u64,
) -> Result<Vec<Sample>, CoarseError> {
    let rast = Rasterizer::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let b = base[rng.gen_range(0..base.len())];
            let (q, off, _) = sample_perturbation(&mut rng, angle_range, offset_range);
            let pose = perturb_pose(&b, &q, &off);
            let image = render_small(&rast, scene, &pose, size, supersample)?;
            Ok(Sample { image, pose })
        })
        .collect()
}

/// Mean over `targets` of `L(fused) + aux · mean_i L(candidate_i)`.
///
/// Source tokens, keys, values and queries are built once and shared by
/// every target in the batch.
pub(crate) fn batch_loss(
    g: &mut Graph,
    sources: &[(Tensor, Tensor)],
    targets: &[(Tensor, Pose<f64>)],
    w: &LossWeights,
    aux: f64,
) -> Result<Var, NnError> {
    let mut src = Vec::with_capacity(sources.len());
    for (patches, pose7) in sources {
        let tok = g.encode(patches.clone())?;
        let kv = g.project_kv(tok)?;
        let q = g.query(pose7.clone())?;
        src.push((q, kv));
    }
    let mut total: Option<Var> = None;
    for (patches, gt) in targets {
        let tok = g.encode(patches.clone())?;
        let t_kv = g.project_kv(tok)?;
        let mut cands = Vec::with_capacity(src.len());
        for &(q, s_kv) in &src {
            cands.push(g.candidate(q, t_kv, s_kv)?);
        }
        let (fq, ft, _) = fuse_on_tape(g.tape, &cands)?;
        let mut loss = pose_loss_on_tape(g.tape, fq, ft, gt, w)?;
        if aux > 0.0 {
            let mut acc: Option<Var> = None;
            for c in &cands {
                let l = pose_loss_on_tape(g.tape, c.quat, c.trans, gt, w)?;
                acc = Some(match acc {
                    None => l,
                    Some(a) => g.tape.add(a, l)?,
                });
            }
            let mean_aux = g.tape.scale(acc.expect("views"), aux / cands.len() as f64);
            loss = g.tape.add(loss, mean_aux)?;
        }
        total = Some(match total {
            None => loss,
            Some(t) => g.tape.add(t, loss)?,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(g.tape.scale(total, 1.0 / targets.len() as f64))
}

fn cosine_lr(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let f = cfg.lr_final_frac;
    let p = step as f64 / total.max(1) as f64;
    cfg.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}

/// Trains a fresh network for one scene.
///
/// Targets are perturbed copies of the reference poses, rendered once per
/// run; brightness jitter is redrawn for every use of a target.
pub fn train_coarse(
    scene: &GaussianScene,
    sampling: &SphericalConfig,
    net_config: CoarseNetConfig,
    cfg: &TrainConfig,
) -> Result<(CoarseNet, TrainReport), CoarseError> {
    train_coarse_with(scene, sampling, net_config, cfg, |_, _| {})
}

/// [`train_coarse`] with a `(step, loss)` callback after every update.
pub fn train_coarse_with(
    scene: &GaussianScene,
    sampling: &SphericalConfig,
    net_config: CoarseNetConfig,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<(CoarseNet, TrainReport), CoarseError> {
    if cfg.batch == 0 || cfg.n_train == 0 || cfg.supersample == 0 {
        return Err(CoarseError::Config("batch, n_train and supersample must be positive".into()));
    }
    let mut net = CoarseNet::new(net_config, cfg.seed)?;
    let size = net.config.image_size;
    let views = render_source_views(&Rasterizer::default(), scene, sampling, size, cfg.supersample)?;
    let sources: Vec<(Tensor, Tensor)> = views
        .images
        .iter()
        .zip(&views.poses)
        .map(|(img, p)| Ok((patchify(img, &net.config)?, pose_vector(p))))
        .collect::<Result<_, CoarseError>>()?;
    let pool = sample_targets(
        scene,
        &views.poses,
        cfg.n_train,
        cfg.angle_range,
        cfg.offset_range,
        size,
        cfg.supersample,
        cfg.seed.wrapping_add(1),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let steps_per_epoch = cfg.n_train.div_ceil(cfg.batch);
    let total = steps_per_epoch * cfg.n_epochs;
    let weights = LossWeights::default();
    let mut losses = Vec::with_capacity(total);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut tape = Tape::new();
    for epoch in 0..cfg.n_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let step = losses.len();
            let targets: Vec<(Tensor, Pose<f64>)> = chunk
                .iter()
                .map(|&i| {
                    let f = if cfg.jitter > 0.0 {
                        rng.gen_range(1.0 - cfg.jitter..=1.0 + cfg.jitter)
                    } else {
                        1.0
                    };
                    let img = pool[i].image.scaled_brightness(f);
                    Ok((patchify(&img, &net.config)?, pool[i].pose))
                })
                .collect::<Result<_, CoarseError>>()?;
            let subset: Vec<(Tensor, Tensor)> = if cfg.views_per_step > 0 && cfg.views_per_step < sources.len() {
                let mut pick = rand::seq::index::sample(&mut rng, sources.len(), cfg.views_per_step).into_vec();
                pick.sort_unstable();
                pick.into_iter().map(|i| sources[i].clone()).collect()
            } else {
                sources.clone()
            };
            tape.reset();
            let mut g = Graph::new(&mut tape, &net);
            let loss = batch_loss(&mut g, &subset, &targets, &weights, cfg.aux_weight)?;
            let bound = g.bound().to_vec();
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(CoarseError::Diverged { epoch, step });
            }
            tape.backward(loss)?;
            let mut grads = net.params.collect_grads(&tape, &bound);
            if cfg.clip_norm > 0.0 {
                let n = grads.global_norm();
                if n > cfg.clip_norm {
                    grads.scale(cfg.clip_norm / n);
                }
            }
            adam_step(&mut net.params, &grads, cosine_lr(cfg, step, total), AdamConfig::default())
                .map_err(|_| CoarseError::Diverged { epoch, step })?;
            losses.push(lv);
            on_step(step, lv);
        }
    }
    Ok((
        net,
        TrainReport {
            steps: losses.len(),
            epochs: cfg.n_epochs,
            losses,
        },
    ))
}

/// Central-difference check of the full training loss (encoder, attention,
/// both FFNs, head, weight predictor, fusion and pose loss) on a micro-batch
/// of two reference views and two 16×16 targets.
pub fn micro_batch_grad_check(seed: u64) -> Result<splatpose_nn::GradCheckReport, CoarseError> {
    let cfg = CoarseNetConfig {
        image_size: 16,
        patch_size: 8,
        embed_dim: 8,
        d_k: 8,
        ffn_hidden: 12,
        n_views: 2,
        pose_embed_dim: 8,
        wpm_hidden: 4,
    };
    let mut net = CoarseNet::new(cfg, seed)?;
    // perturb every tensor so no parameter sits at an init symmetry
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee);
    let mut tensors = net.params.tensors();
    for t in &mut tensors {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    net.params.set_tensors(&tensors)?;
    let scene = crate::scene::generate_synthetic(seed, 120, crate::scene::SceneStyle::Textured)
        .map_err(|e| CoarseError::Config(e.to_string()))?;
    let sampling = SphericalConfig {
        polar_angles: vec![30.0],
        azimuth_angles: vec![0.0, 120.0],
        ..SphericalConfig::default()
    };
    let views = render_source_views(&Rasterizer::default(), &scene, &sampling, 16, 2)?;
    let sources: Vec<(Tensor, Tensor)> = views
        .images
        .iter()
        .zip(&views.poses)
        .map(|(img, p)| Ok((patchify(img, &net.config)?, pose_vector(p))))
        .collect::<Result<_, CoarseError>>()?;
    let targets: Vec<(Tensor, Pose<f64>)> = sample_targets(&scene, &views.poses, 2, [10.0, 30.0], [-0.2, 0.2], 16, 2, seed)?
        .into_iter()
        .map(|s| Ok((patchify(&s.image, &net.config)?, s.pose)))
        .collect::<Result<_, CoarseError>>()?;
    let w = LossWeights::default();
    let f = |tape: &mut Tape, vars: &[Var]| {
        let mut g = Graph::with_vars(tape, &net, vars.to_vec());
        batch_loss(&mut g, &sources, &targets, &w, 0.5)
    };
    Ok(splatpose_nn::grad_check(f, &net.params.tensors(), 1e-6)?)
}
