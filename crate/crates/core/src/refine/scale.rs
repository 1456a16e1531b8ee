use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use splatpose_nn::{adam_step, AdamConfig, Init, ParamStore, Tape, Tensor};

use super::RefineError;
use crate::coarse::{encode_image, render_small, to_network_size, CoarseError, CoarseNet};
use crate::geom::{perturb_pose, sample_perturbation, Pose};
use crate::render::{CameraIntrinsics, Image, Rasterizer};
use crate::scene::GaussianScene;

/// Where the translation magnitude of the refinement step comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Chord `2 d sin(θ/2)` for the estimated rotation `θ` at the coarse
    /// camera's distance `d` from the scene center.
    CoarsePose,
    LearnedRegressor,
    /// Median over inliers of the scale that places rendered depth points
    /// on the target rays.
    RenderDepth,
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub magnitude: f64,
    pub source: ScaleMode,
}

/// Floor on any estimated magnitude.
pub const MIN_SCALE: f64 = 1e-6;

/// Everything the scale estimators may look at.
pub struct ScaleInputs<'a> {
    pub target: &'a Image,
    pub rendered: &'a Image,
    pub coarse: &'a Pose<f64>,
    pub scene_center: Vector3<f64>,
    pub delta_r: Matrix3<f64>,
    pub t_dir: Vector3<f64>,
    /// Inlier pixel pairs, `p` in `rendered`.
    pub pixels: &'a [(Vector2<f64>, Vector2<f64>)],
    pub k: &'a CameraIntrinsics,
    pub regressor: Option<(&'a CoarseNet, &'a ScaleRegressor)>,
}

pub fn estimate_scale(mode: ScaleMode, x: &ScaleInputs) -> Result<ScaleEstimate, RefineError> {
    let magnitude = match mode {
        ScaleMode::Known(s) => s,
        ScaleMode::CoarsePose => {
            let d = (x.coarse.center() - x.scene_center).norm();
            let theta = crate::geom::Quaternion::from_matrix(&x.delta_r).angle();
            2.0 * d * (0.5 * theta).sin()
        }
        ScaleMode::RenderDepth => depth_scale(x)?,
        ScaleMode::LearnedRegressor => {
            let (net, reg) = x.regressor.ok_or(RefineError::MissingRegressor)?;
            reg.predict(net, x.target, x.rendered)?
        }
    };
    if !magnitude.is_finite() {
        return Err(RefineError::ScaleFailed);
    }
    Ok(ScaleEstimate {
        magnitude: magnitude.max(MIN_SCALE),
        source: mode,
    })
}

fn depth_scale(x: &ScaleInputs) -> Result<f64, RefineError> {
    let depth = x.rendered.depth.as_ref().ok_or(RefineError::ScaleFailed)?;
    let t = x.t_dir.normalize();
    let mut s: Vec<f64> = Vec::with_capacity(x.pixels.len());
    for (p, q) in x.pixels {
        let (u, v) = (p.x.round() as usize, p.y.round() as usize);
        if u >= x.rendered.width || v >= x.rendered.height {
            continue;
        }
        let z = depth[v * x.rendered.width + u];
        if z <= 0.0 {
            continue;
        }
        let pn = x.k.normalize(p);
        let qn = x.k.normalize(q);
        let qh = Vector3::new(qn.x, qn.y, 1.0);
        let xp = x.delta_r * Vector3::new(pn.x, pn.y, 1.0) * z;
        // q × (R X + s t) = 0
        let a = qh.cross(&t);
        let b = qh.cross(&xp);
        let aa = a.dot(&a);
        if aa < 1e-12 {
            continue;
        }
        s.push(-a.dot(&b) / aa);
    }
    if s.is_empty() {
        return Err(RefineError::ScaleFailed);
    }
    s.sort_by(f64::total_cmp);
    Ok(s[s.len() / 2].max(0.0))
}

/// Change of `|t|` between two poses: distance between camera centers.
pub fn relative_magnitude(a: &Pose<f64>, b: &Pose<f64>) -> f64 {
    (a.center() - b.center()).norm()
}

/// Rescales a unit translation direction to `scale`.
pub fn scale_correct(t_dir: &Vector3<f64>, scale: &ScaleEstimate) -> Vector3<f64> {
    let n = t_dir.norm();
    if n < 1e-12 {
        return Vector3::zeros();
    }
    t_dir * (scale.magnitude / n)
}

/// MLP on frozen encoder features and motion cues of `(target, render)`
/// that regresses `log |Δt|`. Inputs are standardized with statistics
/// fitted on the training pairs.
#[derive(Debug, Clone)]
pub struct ScaleRegressor {
    pub params: ParamStore,
    pub in_dim: usize,
    pub hidden: usize,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleTrainConfig {
    pub n_pairs: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: usize,
    pub seed: u64,
    pub supersample: usize,
    /// Rotation of the render pose away from a reference view, degrees.
    pub render_angle: [f64; 2],
    /// Rotation between render and target, degrees.
    pub pair_angle: [f64; 2],
    pub pair_offset: [f64; 2],
}

impl Default for ScaleTrainConfig {
    fn default() -> Self {
        Self {
            n_pairs: 1500,
            epochs: 30,
            batch: 32,
            lr: 1e-3,
            hidden: 16,
            seed: 11,
            supersample: 4,
            render_angle: [0.0, 40.0],
            pair_angle: [0.0, 30.0],
            pair_offset: [-0.2, 0.2],
        }
    }
}

/// One training example for the regressor.
#[derive(Debug, Clone)]
pub struct ScalePair {
    pub target: Image,
    pub rendered: Image,
    pub magnitude: f64,
}

/// Render/target pairs with the spread of coarse errors: render poses near
/// the references, targets a random rigid step away.
pub fn scale_pairs(
    scene: &GaussianScene,
    base: &[Pose<f64>],
    size: usize,
    cfg: &ScaleTrainConfig,
    seed: u64,
) -> Result<Vec<ScalePair>, CoarseError> {
    let rast = Rasterizer::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.n_pairs)
        .map(|i| {
            let b = base[i % base.len()];
            let (q, off, _) = sample_perturbation(&mut rng, cfg.render_angle, cfg.pair_offset);
            let a = perturb_pose(&b, &q, &off);
            let (q2, off2, _) = sample_perturbation(&mut rng, cfg.pair_angle, cfg.pair_offset);
            let t = perturb_pose(&a, &q2, &off2);
            Ok(ScalePair {
                rendered: render_small(&rast, scene, &a, size, cfg.supersample)?,
                target: render_small(&rast, scene, &t, size, cfg.supersample)?,
                magnitude: relative_magnitude(&a, &t),
            })
        })
        .collect()
}

/// Number of motion cue features appended after the per-token encoder
/// differences.
pub const MOTION_CUES: usize = 38;

/// Input width of the regressor for an encoder with `tokens` tokens.
pub fn regressor_in_dim(tokens: usize) -> usize {
    tokens + MOTION_CUES
}

/// Side length the motion cues are computed at. Pair images must be a
/// multiple of it.
pub const CUE_SIZE: usize = 64;

// Per-token RMS difference of the encoded images plus motion cues.
fn features(net: &CoarseNet, target: &Image, rendered: &Image) -> Result<Vec<f64>, CoarseError> {
    let size = net.config.image_size;
    let t = encode_image(&to_network_size(target, size)?, net)?;
    let r = encode_image(&to_network_size(rendered, size)?, net)?;
    let (n, d) = (t.shape()[0], t.shape()[1]);
    let (td, rd) = (t.data(), r.data());
    let mut f = Vec::with_capacity(n + 40);
    for i in 0..n {
        let sq: f64 = (0..d).map(|j| (td[i * d + j] - rd[i * d + j]).powi(2)).sum();
        f.push((sq / d as f64).sqrt());
    }
    f.extend(motion_cues(&to_network_size(target, CUE_SIZE)?, &to_network_size(rendered, CUE_SIZE)?));
    debug_assert_eq!(f.len(), regressor_in_dim(n));
    Ok(f)
}

const MAX_SHIFT: i64 = 16;

fn rgb(img: &Image) -> Vec<[f64; 3]> {
    (0..img.height).flat_map(|y| (0..img.width).map(move |x| (x, y))).map(|(x, y)| img.pixel(x, y)).collect()
}

fn d2(p: [f64; 3], q: [f64; 3]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
}

// mean squared color difference between target(x) and rendered(x + d) over
// the overlap
fn shifted_msd(a: &[[f64; 3]], b: &[[f64; 3]], w: i64, h: i64, dx: i64, dy: i64) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for y in 0.max(-dy)..h.min(h - dy) {
        for x in 0.max(-dx)..w.min(w - dx) {
            acc += d2(a[(y * w + x) as usize], b[((y + dy) * w + x + dx) as usize]);
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        acc / n as f64
    }
}

/// Best global shift between the two images with a parabolic sub-pixel
/// offset, plus a 4x4 grid of mean absolute color differences.
fn motion_cues(target: &Image, rendered: &Image) -> Vec<f64> {
    let (w, h) = (target.width as i64, target.height as i64);
    let (a, b) = (rgb(target), rgb(rendered));
    let max = MAX_SHIFT.min(w / 2).min(h / 2);
    let mut best = (f64::INFINITY, 0i64, 0i64);
    for dy in -max..=max {
        for dx in -max..=max {
            let m = shifted_msd(&a, &b, w, h, dx, dy);
            if m < best.0 {
                best = (m, dx, dy);
            }
        }
    }
    let (m0, dx, dy) = best;
    let para = |lo: f64, hi: f64| {
        let den = lo - 2.0 * m0 + hi;
        if den > 1e-12 {
            (0.5 * (lo - hi) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let ox = para(shifted_msd(&a, &b, w, h, dx - 1, dy), shifted_msd(&a, &b, w, h, dx + 1, dy));
    let oy = para(shifted_msd(&a, &b, w, h, dx, dy - 1), shifted_msd(&a, &b, w, h, dx, dy + 1));
    let (sx, sy) = ((dx as f64 + ox) / w as f64, (dy as f64 + oy) / h as f64);
    let mut f = vec![sx, sy, sx.hypot(sy) * 4.0, m0.sqrt() * 4.0, shifted_msd(&a, &b, w, h, 0, 0).sqrt() * 4.0];
    // 4x4 block flow and its least-squares affine fit; the linear part
    // separates pan, zoom and roll, the residual carries parallax
    let (bw, bh) = (w / 4, h / 4);
    let lmax = (bw / 2).max(1);
    let mut flow = Vec::with_capacity(16);
    for by in 0..4 {
        for bx in 0..4 {
            let mut best = (f64::INFINITY, 0i64, 0i64);
            for dy in -lmax..=lmax {
                for dx in -lmax..=lmax {
                    let mut acc = 0.0;
                    let mut n = 0usize;
                    for y in (by * bh)..((by + 1) * bh) {
                        for x in (bx * bw)..((bx + 1) * bw) {
                            let (xs, ys) = (x + dx, y + dy);
                            if xs >= 0 && ys >= 0 && xs < w && ys < h {
                                acc += d2(a[(y * w + x) as usize], b[(ys * w + xs) as usize]);
                                n += 1;
                            }
                        }
                    }
                    let m = if n * 2 < (bw * bh) as usize { f64::INFINITY } else { acc / n as f64 };
                    // prefer the smaller shift on ties
                    if m < best.0 - 1e-12 || (m <= best.0 + 1e-12 && dx * dx + dy * dy < best.1 * best.1 + best.2 * best.2) {
                        best = (m, dx, dy);
                    }
                }
            }
            let (cx, cy) = ((bx as f64 - 1.5) / 4.0, (by as f64 - 1.5) / 4.0);
            flow.push((cx, cy, best.1 as f64 / w as f64, best.2 as f64 / h as f64));
        }
    }
    // block centers are symmetric, so the affine fit decouples
    let sxx: f64 = flow.iter().map(|v| v.0 * v.0).sum();
    let fit = |sel: fn(&(f64, f64, f64, f64)) -> f64| {
        let c = flow.iter().map(sel).sum::<f64>() / 16.0;
        let gx = flow.iter().map(|v| v.0 * sel(v)).sum::<f64>() / sxx;
        let gy = flow.iter().map(|v| v.1 * sel(v)).sum::<f64>() / sxx;
        (c, gx, gy)
    };
    let (u0, ux, uy) = fit(|v| v.2);
    let (v0, vx, vy) = fit(|v| v.3);
    let resid = (flow
        .iter()
        .map(|v| (v.2 - u0 - ux * v.0 - uy * v.1).powi(2) + (v.3 - v0 - vx * v.0 - vy * v.1).powi(2))
        .sum::<f64>()
        / 16.0)
        .sqrt();
    let mut mags: Vec<f64> = flow.iter().map(|v| v.2.hypot(v.3)).collect();
    mags.sort_by(f64::total_cmp);
    let (div, curl) = (ux + vy, vx - uy);
    f.extend([u0, v0, u0.hypot(v0), ux, uy, vx, vy, div.abs(), curl.abs(), resid, mags[8], mags[15]]);
    // silhouette moments: offsets move and resize the object, orbits do not
    let moments = |img: &[[f64; 3]]| {
        let (mut m0, mut mx, mut my) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let v = img[(y * w + x) as usize];
                let m = (v[0] + v[1] + v[2]).min(1.0);
                m0 += m;
                mx += m * x as f64;
                my += m * y as f64;
            }
        }
        let m0 = m0.max(1e-9);
        (m0 / (w * h) as f64, mx / m0 / w as f64, my / m0 / h as f64)
    };
    let (at, xt, yt) = moments(&a);
    let (ar, xr, yr) = moments(&b);
    let area = (at.max(1e-9) / ar.max(1e-9)).ln();
    f.extend([xt - xr, yt - yr, (xt - xr).hypot(yt - yr) * 4.0, area, area.abs()]);
    for gy in 0..4 {
        for gx in 0..4 {
            let mut acc = 0.0;
            let mut n = 0;
            for y in (gy * h / 4)..((gy + 1) * h / 4) {
                for x in (gx * w / 4)..((gx + 1) * w / 4) {
                    acc += d2(a[(y * w + x) as usize], b[(y * w + x) as usize]).sqrt();
                    n += 1;
                }
            }
            f.push(4.0 * acc / n.max(1) as f64);
        }
    }
    f
}

impl ScaleRegressor {
    pub fn new(in_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut params = ParamStore::new(seed);
        params.add("scale.w1", &[in_dim, hidden], Init::FanIn(in_dim));
        params.add("scale.b1", &[1, hidden], Init::Zeros);
        params.add("scale.w2", &[hidden, 1], Init::FanIn(hidden));
        params.add("scale.b2", &[1, 1], Init::Zeros);
        Self {
            params,
            in_dim,
            hidden,
            feat_mean: vec![0.0; in_dim],
            feat_std: vec![1.0; in_dim],
        }
    }

    fn standardize(&self, f: &mut [f64]) {
        for ((v, m), s) in f.iter_mut().zip(&self.feat_mean).zip(&self.feat_std) {
            *v = (*v - m) / s;
        }
    }

    fn forward(&self, tape: &mut Tape, x: Tensor) -> Result<(splatpose_nn::Var, Vec<splatpose_nn::Var>), RefineError> {
        let vars = self.params.bind(tape);
        let x = tape.constant(x);
        let h = tape.linear(x, vars[0], vars[1])?;
        let h = tape.relu(h);
        let y = tape.linear(h, vars[2], vars[3])?;
        Ok((y, vars))
    }

    pub fn predict(&self, net: &CoarseNet, target: &Image, rendered: &Image) -> Result<f64, RefineError> {
        let mut f = features(net, target, rendered)?;
        if f.len() != self.in_dim {
            return Err(RefineError::MissingRegressor);
        }
        self.standardize(&mut f);
        let mut tape = Tape::new();
        let (y, _) = self.forward(&mut tape, Tensor::new(&[1, f.len()], f)?)?;
        Ok(tape.value(y).item().exp().max(MIN_SCALE))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RefineError> {
        let meta = serde_json::json!({
            "kind": "scale_regressor",
            "in_dim": self.in_dim,
            "hidden": self.hidden,
            "feat_mean": self.feat_mean,
            "feat_std": self.feat_std,
        });
        Ok(self.params.save(path, meta)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RefineError> {
        let (params, meta) = ParamStore::load(path)?;
        let get = |k: &str| meta.get(k).and_then(|v| v.as_u64()).map(|v| v as usize);
        let vec = |k: &str| -> Option<Vec<f64>> { serde_json::from_value(meta.get(k)?.clone()).ok() };
        match (get("in_dim"), get("hidden"), vec("feat_mean"), vec("feat_std")) {
            (Some(in_dim), Some(hidden), Some(feat_mean), Some(feat_std))
                if params.len() == 4 && feat_mean.len() == in_dim && feat_std.len() == in_dim =>
            {
                Ok(Self { params, in_dim, hidden, feat_mean, feat_std })
            }
            _ => Err(RefineError::MissingRegressor),
        }
    }
}

/// Fits a regressor on `pairs` with squared error in log space. Returns the
/// model and the mean loss of every epoch.
pub fn train_scale_regressor(
    net: &CoarseNet,
    pairs: &[ScalePair],
    cfg: &ScaleTrainConfig,
) -> Result<(ScaleRegressor, Vec<f64>), RefineError> {
    if pairs.is_empty() || cfg.batch == 0 {
        return Err(RefineError::ScaleFailed);
    }
    let mut feats: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| features(net, &p.target, &p.rendered))
        .collect::<Result<_, _>>()?;
    let logs: Vec<f64> = pairs.iter().map(|p| p.magnitude.max(MIN_SCALE).ln()).collect();
    let in_dim = feats[0].len();
    let mut reg = ScaleRegressor::new(in_dim, cfg.hidden, cfg.seed);
    let n = feats.len() as f64;
    for j in 0..in_dim {
        let m = feats.iter().map(|f| f[j]).sum::<f64>() / n;
        let v = feats.iter().map(|f| (f[j] - m).powi(2)).sum::<f64>() / n;
        reg.feat_mean[j] = m;
        reg.feat_std[j] = v.sqrt().max(1e-6);
    }
    for f in feats.iter_mut() {
        reg.standardize(f);
    }
    // start at the mean log magnitude
    let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
    let b2 = reg.params.id("scale.b2")?;
    reg.params.get_mut(b2).data_mut()[0] = mean_log;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut tape = Tape::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut x = Vec::with_capacity(chunk.len() * in_dim);
            for &i in chunk {
                x.extend_from_slice(&feats[i]);
            }
            let y: Vec<f64> = chunk.iter().map(|&i| logs[i]).collect();
            tape.reset();
            let (pred, vars) = reg.forward(&mut tape, Tensor::new(&[chunk.len(), in_dim], x)?)?;
            let gt = tape.constant(Tensor::new(&[chunk.len(), 1], y)?);
            let d = tape.sub(pred, gt)?;
            let sq = tape.mul(d, d)?;
            let s = tape.sum(sq);
            let loss = tape.scale(s, 1.0 / chunk.len() as f64);
            acc += tape.value(loss).item() * chunk.len() as f64;
            tape.backward(loss)?;
            let grads = reg.params.collect_grads(&tape, &vars);
            adam_step(&mut reg.params, &grads, cfg.lr, AdamConfig::default())?;
        }
        epoch_losses.push(acc / pairs.len() as f64);
    }
    Ok((reg, epoch_losses))
}
