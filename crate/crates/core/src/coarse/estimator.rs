use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};

use splatpose_nn::{Axis, Tape, Tensor};

use super::fuse::{fuse_poses, pose_from_vars, softmax, CandidateSet};
use super::net::{patchify, pose_vector, CandidateVars, CoarseNet, Graph};
use super::CoarseError;
use crate::geom::{sample_sphere, Pose, SphericalConfig};
use crate::render::{CameraIntrinsics, Image, Rasterizer, RenderOptions};
use crate::scene::GaussianScene;

/// Rendered reference views at network resolution.
#[derive(Debug, Clone)]
pub struct SourceViews {
    pub poses: Vec<Pose<f64>>,
    pub images: Vec<Image>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    scene: u64,
    sampling: String,
    size: usize,
    supersample: usize,
}

/// Order-sensitive hash of every scene value.
pub fn scene_fingerprint(scene: &GaussianScene) -> u64 {
    let mut h = DefaultHasher::new();
    scene.len().hash(&mut h);
    for i in 0..scene.len() {
        for v in scene.means[i].iter().chain(&scene.log_scales[i]).chain(&scene.sh_dc[i]) {
            v.to_bits().hash(&mut h);
        }
        for v in scene.rotations[i].to_array() {
            v.to_bits().hash(&mut h);
        }
        scene.opacities[i].to_bits().hash(&mut h);
    }
    h.finish()
}

/// Renders `pose` at `size · supersample` pixels and box-filters to `size`.
pub fn render_small(
    rasterizer: &Rasterizer,
    scene: &GaussianScene,
    pose: &Pose<f64>,
    size: usize,
    supersample: usize,
) -> Result<Image, CoarseError> {
    let k = CameraIntrinsics::square(size * supersample);
    Ok(rasterizer.render(scene, pose, &k, [0.0; 3])?.downsample(supersample))
}

/// Box-filters `img` to the network input size when the ratio is integral.
pub fn to_network_size(img: &Image, size: usize) -> Result<Image, CoarseError> {
    if img.width == size && img.height == size {
        return Ok(img.clone());
    }
    if img.width == img.height && img.width % size == 0 {
        return Ok(img.downsample(img.width / size));
    }
    Err(CoarseError::ImageSize {
        expected: size,
        width: img.width,
        height: img.height,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseOutput {
    pub pose: Pose<f64>,
    pub candidates: CandidateSet,
}

/// Stage 1 runner: caches reference views per (scene, sampling) and
/// regresses a pose for each query without further rendering.
#[derive(Debug)]
pub struct CoarseEstimator {
    pub net: CoarseNet,
    /// Reference views are rendered this many times larger, then box-filtered.
    pub supersample: usize,
    /// With the weight predictor off, candidates are averaged uniformly.
    pub use_wpm: bool,
    rasterizer: Rasterizer,
    cache: Mutex<HashMap<CacheKey, Arc<SourceViews>>>,
}

impl CoarseEstimator {
    pub fn new(net: CoarseNet) -> Self {
        Self {
            net,
            supersample: 4,
            use_wpm: true,
            rasterizer: Rasterizer::new(RenderOptions::default()),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Renders performed so far (reference views only).
    pub fn render_count(&self) -> usize {
        self.rasterizer.render_count()
    }

    pub fn source_views(&self, scene: &GaussianScene, sampling: &SphericalConfig) -> Result<Arc<SourceViews>, CoarseError> {
        let key = CacheKey {
            scene: scene_fingerprint(scene),
            sampling: serde_json::to_string(sampling).expect("config serializes"),
            size: self.net.config.image_size,
            supersample: self.supersample,
        };
        if let Some(v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let views = Arc::new(render_source_views(
            &self.rasterizer,
            scene,
            sampling,
            self.net.config.image_size,
            self.supersample,
        )?);
        self.cache.lock().expect("cache lock").insert(key, Arc::clone(&views));
        Ok(views)
    }

    pub fn run_coarse(
        &self,
        target: &Image,
        scene: &GaussianScene,
        sampling: &SphericalConfig,
    ) -> Result<CoarseOutput, CoarseError> {
        let views = self.source_views(scene, sampling)?;
        self.run_with_views(target, &views)
    }

    pub fn run_with_views(&self, target: &Image, views: &SourceViews) -> Result<CoarseOutput, CoarseError> {
        let cfg = &self.net.config;
        let target = to_network_size(target, cfg.image_size)?;
        let mut tape = Tape::new();
        let mut g = Graph::new(&mut tape, &self.net);
        let t_tok = g.encode(patchify(&target, cfg)?)?;
        let t_kv = g.project_kv(t_tok)?;
        let mut cands: Vec<CandidateVars> = Vec::with_capacity(views.poses.len());
        for (img, pose) in views.images.iter().zip(&views.poses) {
            let s_tok = g.encode(patchify(img, cfg)?)?;
            let s_kv = g.project_kv(s_tok)?;
            let q = g.query(pose_vector(pose))?;
            cands.push(g.candidate(q, t_kv, s_kv)?);
        }
        let poses: Vec<Pose<f64>> = cands.iter().map(|c| pose_from_vars(g.tape, c.quat, c.trans)).collect();
        let weights = if self.use_wpm {
            let logits: Vec<f64> = cands.iter().map(|c| g.tape.value(c.logit).item()).collect();
            softmax(&logits)
        } else {
            vec![1.0 / poses.len() as f64; poses.len()]
        };
        if poses.iter().any(|p| !p.translation.iter().all(|v| v.is_finite()) || !p.rotation.w.is_finite()) {
            return Err(CoarseError::NonFinite("candidate pose".into()));
        }
        let candidates = CandidateSet { poses, weights };
        let pose = fuse_poses(&candidates)?;
        Ok(CoarseOutput { pose, candidates })
    }
}

pub fn render_source_views(
    rasterizer: &Rasterizer,
    scene: &GaussianScene,
    sampling: &SphericalConfig,
    size: usize,
    supersample: usize,
) -> Result<SourceViews, CoarseError> {
    let poses = sample_sphere::<f64>(sampling)?;
    let images = poses
        .iter()
        .map(|p| render_small(rasterizer, scene, p, size, supersample))
        .collect::<Result<_, _>>()?;
    Ok(SourceViews { poses, images })
}

/// Tokens of one image: `[tokens, d]`.
pub fn encode_image(img: &Image, net: &CoarseNet) -> Result<Tensor, CoarseError> {
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let v = g.encode(patchify(img, &net.config)?)?;
    Ok(tape.value(v).clone())
}

/// Keys and values over the row concatenation `[target; source]`.
pub fn build_kv(target_feats: &Tensor, source_feats: &Tensor, net: &CoarseNet) -> Result<(Tensor, Tensor), CoarseError> {
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let t = g.tape.constant(target_feats.clone());
    let s = g.tape.constant(source_feats.clone());
    let x = g.tape.concat_rows(&[t, s])?;
    let (k, v) = g.project_kv(x)?;
    Ok((tape.value(k).clone(), tape.value(v).clone()))
}

/// `[1, d_k]` query for a source pose.
pub fn pose_query(pose: &Pose<f64>, net: &CoarseNet) -> Result<Tensor, CoarseError> {
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let q = g.query(pose_vector(pose))?;
    Ok(tape.value(q).clone())
}

/// Candidate target pose from one source view, with its pooled features.
pub fn candidate_pose(
    target: &Image,
    source: &Image,
    source_pose: &Pose<f64>,
    net: &CoarseNet,
) -> Result<(Pose<f64>, Tensor), CoarseError> {
    let cfg = &net.config;
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let t = g.encode(patchify(target, cfg)?)?;
    let t_kv = g.project_kv(t)?;
    let s = g.encode(patchify(source, cfg)?)?;
    let s_kv = g.project_kv(s)?;
    let q = g.query(pose_vector(source_pose))?;
    let c = g.candidate(q, t_kv, s_kv)?;
    Ok((pose_from_vars(&tape, c.quat, c.trans), tape.value(c.pooled).clone()))
}

/// Weight logit for `[1, d]` pooled features.
pub fn predict_weight(pooled: &Tensor, net: &CoarseNet) -> Result<f64, CoarseError> {
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let p = g.tape.constant(pooled.clone());
    let l = g.weight_logit(p)?;
    Ok(tape.value(l).item())
}

/// Mean-pooled encoder tokens, `[1, d]`; used by the scale regressor.
pub fn pooled_tokens(img: &Image, net: &CoarseNet) -> Result<Vec<f64>, CoarseError> {
    let mut tape = Tape::new();
    let mut g = Graph::new(&mut tape, net);
    let v = g.encode(patchify(img, &net.config)?)?;
    let m = g.tape.mean(v, Axis::Rows)?;
    Ok(tape.value(m).data().to_vec())
}
