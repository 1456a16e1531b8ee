//! Stage 2: one render at the coarse pose, 2D–2D matches against the target,
//! relative pose from the essential matrix and a metric scale.

mod epipolar;
mod scale;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use epipolar::{
    decompose_essential, eight_point, project_to_essential, ransac_essential, refine_relative_pose, sampson_error,
    RansacConfig, RansacResult,
};
pub use scale::{
    estimate_scale, relative_magnitude, scale_correct, scale_pairs, train_scale_regressor, ScaleEstimate,
    ScaleInputs, ScaleMode, ScalePair, ScaleRegressor, ScaleTrainConfig, CUE_SIZE, MIN_SCALE, MOTION_CUES,
    regressor_in_dim,
};

use crate::coarse::CoarseNet;
use crate::correspond::{
    detect_and_describe, match_features, oracle_from_depth, refine_positions, CorrespondError, CorrespondenceSet, Features, MatcherConfig,
};
use crate::geom::{Pose, Quaternion};
use crate::render::{CameraIntrinsics, Image, Rasterizer};
use crate::scene::GaussianScene;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("degenerate minimal sample")]
    DegenerateSample,
    #[error("only {found} correspondences")]
    InsufficientMatches { found: usize },
    #[error("no RANSAC hypothesis could be fit")]
    RansacFailed,
    #[error("baseline too small to resolve the relative pose")]
    ZeroBaseline,
    #[error("scale estimate failed")]
    ScaleFailed,
    #[error("scale mode needs a trained regressor")]
    MissingRegressor,
    #[error(transparent)]
    Correspond(#[from] CorrespondError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Coarse(#[from] crate::coarse::CoarseError),
    #[error(transparent)]
    Nn(#[from] splatpose_nn::NnError),
}

/// How correspondences are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matcher {
    Classical(MatcherConfig),
    /// Depth-reprojected matches against a known target pose (testing only).
    Oracle { target_pose: Pose<f64>, n: usize, noise_px: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub ransac: RansacConfig,
    pub scale_mode: ScaleMode,
    /// Updates rotating more than this are rejected.
    pub max_update_deg: f64,
    pub min_inliers: usize,
    /// Minimum inlier fraction of the matches.
    pub min_inlier_ratio: f64,
    /// Width of the epipolar band for the guided second matching pass, in
    /// pixels; `0` disables it.
    pub guided_band_px: f64,
    /// Levenberg–Marquardt iterations polishing `(ΔR, t̂)` on the inliers.
    pub lm_iters: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            scale_mode: ScaleMode::RenderDepth,
            max_update_deg: 45.0,
            min_inliers: 15,
            min_inlier_ratio: 0.25,
            guided_band_px: 0.0,
            lm_iters: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineStatus {
    Refined,
    InsufficientMatches,
    RansacFailed,
    TooFewInliers,
    ZeroBaseline,
    ScaleFailed,
    UpdateTooLarge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineDiagnostics {
    pub status: RefineStatus,
    pub n_matches: usize,
    pub n_inliers: usize,
    pub ransac_iterations: usize,
    pub scale: Option<ScaleEstimate>,
    pub update_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutput {
    pub pose: Pose<f64>,
    pub diagnostics: RefineDiagnostics,
}

/// Scene-side inputs of a refinement.
pub struct RefineContext<'a> {
    pub scene: &'a GaussianScene,
    pub rasterizer: &'a Rasterizer,
    pub scene_center: Vector3<f64>,
    pub regressor: Option<(&'a CoarseNet, &'a ScaleRegressor)>,
}

/// Refines `coarse` against `target` with exactly one render.
///
/// `T_fine = ΔT ∘ T_coarse` where `ΔT` maps the coarse camera frame into the
/// target's. Any failure along the way keeps the coarse pose and records why.
pub fn refine_pose(
    coarse: &Pose<f64>,
    target: &Image,
    k: &CameraIntrinsics,
    ctx: &RefineContext,
    matcher: &Matcher,
    cfg: &RefineConfig,
) -> Result<RefineOutput, RefineError> {
    let rendered = ctx.rasterizer.render(ctx.scene, coarse, k, [0.0; 3])?;
    let mut diag = RefineDiagnostics {
        status: RefineStatus::Refined,
        n_matches: 0,
        n_inliers: 0,
        ransac_iterations: 0,
        scale: None,
        update_deg: None,
    };
    let keep = |mut d: RefineDiagnostics, s: RefineStatus| {
        d.status = s;
        Ok(RefineOutput { pose: *coarse, diagnostics: d })
    };
    let mut features: Option<(Features, Features)> = None;
    let mut matches: CorrespondenceSet = match matcher {
        Matcher::Classical(mc) => {
            let fa = detect_and_describe(&rendered, mc);
            let fb = detect_and_describe(target, mc);
            let mut m = match_features(&fa, &fb, mc, |_, _| true);
            if mc.refine_radius > 0 {
                m = refine_positions(&rendered, target, &m, mc.patch_size / 2, mc.refine_radius);
            }
            if m.len() < mc.min_matches.max(8) {
                diag.n_matches = m.len();
                return keep(diag, RefineStatus::InsufficientMatches);
            }
            features = Some((fa, fb));
            m
        }
        Matcher::Oracle { target_pose, n, noise_px, seed } => {
            oracle_from_depth(&rendered, coarse, target_pose, k, *n, *noise_px, *seed)?
        }
    };
    diag.n_matches = matches.len();
    if matches.len() < 8 {
        return keep(diag, RefineStatus::InsufficientMatches);
    }
    let sigma = cfg.ransac.sigma_px / k.fx;
    let normalize = |m: &CorrespondenceSet| -> Vec<(Vector2<f64>, Vector2<f64>)> {
        m.pairs.iter().map(|(p, q)| (k.normalize(p), k.normalize(q))).collect()
    };
    let mut normalized = normalize(&matches);
    let mut ransac = match ransac_essential(&normalized, sigma * sigma, &cfg.ransac) {
        Ok(r) => r,
        Err(RefineError::RansacFailed | RefineError::InsufficientMatches { .. }) => {
            return keep(diag, RefineStatus::RansacFailed)
        }
        Err(e) => return Err(e),
    };
    // second pass: re-match inside the epipolar band of the first estimate
    if let (Some((fa, fb)), Matcher::Classical(mc)) = (&features, matcher) {
        if cfg.guided_band_px > 0.0 {
            let band = cfg.guided_band_px / k.fx;
            let e = ransac.e;
            let mut guided = match_features(fa, fb, mc, |a, b| {
                let p = k.normalize(&Vector2::new(a.x, a.y));
                let q = k.normalize(&Vector2::new(b.x, b.y));
                sampson_error(&e, &p, &q) < band * band
            });
            if mc.refine_radius > 0 {
                guided = refine_positions(&rendered, target, &guided, mc.patch_size / 2, mc.refine_radius);
            }
            if guided.len() >= 8 {
                let g_norm = normalize(&guided);
                if let Ok(r) = ransac_essential(&g_norm, sigma * sigma, &cfg.ransac) {
                    if r.n_inliers > ransac.n_inliers {
                        matches = guided;
                        normalized = g_norm;
                        ransac = r;
                    }
                }
            }
        }
    }
    diag.n_matches = matches.len();
    diag.n_inliers = ransac.n_inliers;
    diag.ransac_iterations = ransac.iterations;
    if ransac.n_inliers < cfg.min_inliers.max(8)
        || (ransac.n_inliers as f64) < cfg.min_inlier_ratio * matches.len() as f64
    {
        return keep(diag, RefineStatus::TooFewInliers);
    }
    let inl_norm: Vec<_> = normalized.iter().zip(&ransac.inliers).filter(|x| *x.1).map(|x| *x.0).collect();
    let inl_px: Vec<_> = matches.pairs.iter().zip(&ransac.inliers).filter(|x| *x.1).map(|x| *x.0).collect();
    let (dr, t_dir) = match decompose_essential(&ransac.e, &inl_norm) {
        Ok(x) => x,
        Err(RefineError::ZeroBaseline) => return keep(diag, RefineStatus::ZeroBaseline),
        Err(e) => return Err(e),
    };
    let (dr, t_dir) = if cfg.lm_iters > 0 {
        refine_relative_pose(&dr, &t_dir, &inl_norm, cfg.lm_iters)
    } else {
        (dr, t_dir)
    };
    let dq = Quaternion::from_matrix(&dr).canonical();
    let update = dq.angle().to_degrees();
    diag.update_deg = Some(update);
    if update > cfg.max_update_deg {
        return keep(diag, RefineStatus::UpdateTooLarge);
    }
    let inputs = ScaleInputs {
        target,
        rendered: &rendered,
        coarse,
        scene_center: ctx.scene_center,
        delta_r: dr,
        t_dir,
        pixels: &inl_px,
        k,
        regressor: ctx.regressor,
    };
    let scale = match estimate_scale(cfg.scale_mode, &inputs) {
        Ok(s) => s,
        Err(RefineError::ScaleFailed) => return keep(diag, RefineStatus::ScaleFailed),
        Err(e) => return Err(e),
    };
    diag.scale = Some(scale);
    let delta = Pose::new(dq, scale_correct(&t_dir, &scale));
    Ok(RefineOutput {
        pose: delta.compose(coarse),
        diagnostics: diag,
    })
}
