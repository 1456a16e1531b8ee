//! Perturbed-pose test sets, success rates, ablation switches and reports.

mod report;

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{aggregate, Aggregates, ReportFormat, SuccessRate};

use crate::coarse::{fuse_poses, CandidateSet, CoarseEstimator};
use crate::correspond::MatcherConfig;
use crate::geom::{perturb_pose, rotation_error_deg, sample_perturbation, sample_sphere, Pose, SphericalConfig};
use crate::refine::{refine_pose, Matcher, RefineConfig, RefineContext, RefineDiagnostics, ScaleMode, ScaleRegressor};
use crate::render::{CameraIntrinsics, Image, Rasterizer, RenderOptions};
use crate::scene::{scene_bounds, GaussianScene};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bin: {0}")]
    Bin(String),
    #[error("could not render a non-empty target after {0} attempts")]
    Unrenderable(usize),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error(transparent)]
    Coarse(#[from] crate::coarse::CoarseError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Relative rotation magnitude range (degrees) and per-axis center offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationBin {
    pub rot_range: [f64; 2],
    pub trans_offset_range: [f64; 2],
    pub n_samples: usize,
    pub seed: u64,
}

impl DeviationBin {
    pub fn new(lo: f64, hi: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            rot_range: [lo, hi],
            trans_offset_range: [-0.2, 0.2],
            n_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let [lo, hi] = self.rot_range;
        if !(0.0 <= lo && lo <= hi && hi <= 180.0) {
            return Err(BenchError::Bin(format!("rotation range [{lo}, {hi}]")));
        }
        let [a, b] = self.trans_offset_range;
        if !(a <= b) || !a.is_finite() || !b.is_finite() {
            return Err(BenchError::Bin(format!("offset range [{a}, {b}]")));
        }
        Ok(())
    }
}

impl std::str::FromStr for DeviationBin {
    type Err = BenchError;

    /// `"20:40"` with 100 samples and seed 0.
    fn from_str(s: &str) -> Result<Self, BenchError> {
        let (a, b) = s.split_once(':').ok_or_else(|| BenchError::Bin(s.into()))?;
        let p = |x: &str| x.trim().parse::<f64>().map_err(|_| BenchError::Bin(s.into()));
        let bin = Self::new(p(a)?, p(b)?, 100, 0);
        bin.validate()?;
        Ok(bin)
    }
}

#[derive(Debug, Clone)]
pub struct TestSample {
    pub image: Image,
    pub pose: Pose<f64>,
    pub base_index: usize,
    pub angle_deg: f64,
    pub offset: Vector3<f64>,
}

/// Attempts per sample before giving up on an empty render.
const MAX_RESAMPLE: usize = 50;

/// Perturbs seeded-random base poses and renders the targets with `k`.
///
/// Draws whose render covers no pixel are redrawn.
pub fn generate_testset(
    scene: &GaussianScene,
    base_poses: &[Pose<f64>],
    bin: &DeviationBin,
    k: &CameraIntrinsics,
) -> Result<Vec<TestSample>, BenchError> {
    bin.validate()?;
    if base_poses.is_empty() {
        return Err(BenchError::Bin("no base poses".into()));
    }
    let rast = Rasterizer::new(RenderOptions::default());
    let mut rng = ChaCha8Rng::seed_from_u64(bin.seed);
    let mut out = Vec::with_capacity(bin.n_samples);
    for i in 0..bin.n_samples {
        let mut attempt = 0;
        loop {
            let base_index = rng.gen_range(0..base_poses.len());
            let (q, offset, angle_deg) = sample_perturbation(&mut rng, bin.rot_range, bin.trans_offset_range);
            let pose = perturb_pose(&base_poses[base_index], &q, &offset);
            let image = rast.render(scene, &pose, k, [0.0; 3])?;
            let covered = image.depth.as_ref().is_some_and(|d| d.iter().any(|&z| z > 0.0));
            if covered {
                out.push(TestSample {
                    image,
                    pose,
                    base_index,
                    angle_deg,
                    offset,
                });
                break;
            }
            attempt += 1;
            log::warn!("test sample {i}: empty render, redrawing ({attempt})");
            if attempt >= MAX_RESAMPLE {
                return Err(BenchError::Unrenderable(attempt));
            }
        }
    }
    Ok(out)
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSwitches {
    pub use_wpm: bool,
    pub scale_mode: ScaleMode,
    pub use_matcher_solver: bool,
    pub n_views: usize,
}

impl Default for PipelineSwitches {
    fn default() -> Self {
        Self {
            use_wpm: true,
            scale_mode: ScaleMode::RenderDepth,
            use_matcher_solver: true,
            n_views: 16,
        }
    }
}

/// Success thresholds: rotation in degrees, camera position in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub rot_deg: f64,
    pub trans: f64,
}

pub fn default_thresholds() -> Vec<Threshold> {
    vec![
        Threshold { rot_deg: 5.0, trans: 0.05 },
        Threshold { rot_deg: 15.0, trans: 0.5 },
    ]
}

/// A trained scene model plus the settings shared by every query.
pub struct Pipeline<'a> {
    pub scene: &'a GaussianScene,
    pub estimator: &'a CoarseEstimator,
    pub sampling: SphericalConfig,
    pub refine: RefineConfig,
    pub matcher: MatcherConfig,
    pub regressor: Option<&'a ScaleRegressor>,
    /// Replace the matcher by `(n, noise_px)` depth-oracle matches.
    pub oracle: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub gt: Pose<f64>,
    pub coarse: Pose<f64>,
    pub fine: Pose<f64>,
    pub coarse_rot_err: f64,
    pub coarse_trans_err: f64,
    pub rot_err: f64,
    pub trans_err: f64,
    pub coarse_ms: f64,
    pub refine_ms: f64,
    pub diagnostics: Option<RefineDiagnostics>,
    /// Set when a stage failed; the sample then counts as unsuccessful.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub switches: PipelineSwitches,
    pub thresholds: Vec<Threshold>,
    pub sampling: SphericalConfig,
    pub refine: RefineConfig,
    pub matcher: MatcherConfig,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ConfigSnapshot,
    pub records: Vec<SampleRecord>,
    pub aggregates: Aggregates,
}

impl BenchmarkReport {
    /// Copy with all wall-clock fields zeroed, for bit-exact comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for rec in &mut r.records {
            rec.coarse_ms = 0.0;
            rec.refine_ms = 0.0;
        }
        r.aggregates.mean_coarse_ms = 0.0;
        r.aggregates.mean_refine_ms = 0.0;
        r
    }

    pub fn emit(&self, path: impl AsRef<Path>, format: ReportFormat) -> Result<(), BenchError> {
        report::emit_report(self, path.as_ref(), format)
    }
}

/// Camera position error.
pub fn position_error(pred: &Pose<f64>, gt: &Pose<f64>) -> f64 {
    (pred.center() - gt.center()).norm()
}

fn failed_record(index: usize, gt: &Pose<f64>, msg: String) -> SampleRecord {
    SampleRecord {
        index,
        gt: *gt,
        coarse: Pose::identity(),
        fine: Pose::identity(),
        coarse_rot_err: 180.0,
        coarse_trans_err: f64::MAX,
        rot_err: 180.0,
        trans_err: f64::MAX,
        coarse_ms: 0.0,
        refine_ms: 0.0,
        diagnostics: None,
        error: Some(msg),
    }
}

/// Runs Stage 1 and, if switched on, Stage 2 on every sample. Per-sample
/// failures are recorded, never propagated.
pub fn run_benchmark(
    pipeline: &Pipeline,
    testset: &[TestSample],
    switches: &PipelineSwitches,
    thresholds: &[Threshold],
) -> Result<BenchmarkReport, BenchError> {
    let sampling = pipeline.sampling.with_view_count(switches.n_views)?;
    let views = pipeline.estimator.source_views(pipeline.scene, &sampling)?;
    let rast = Rasterizer::new(RenderOptions::default());
    let bounds = scene_bounds(pipeline.scene);
    let regressor = pipeline.regressor.map(|r| (&pipeline.estimator.net, r));
    let ctx = RefineContext {
        scene: pipeline.scene,
        rasterizer: &rast,
        scene_center: Vector3::from(bounds.center),
        regressor,
    };
    let refine_cfg = RefineConfig {
        scale_mode: switches.scale_mode,
        ..pipeline.refine
    };
    let mut records = Vec::with_capacity(testset.len());
    for (index, s) in testset.iter().enumerate() {
        let t0 = Instant::now();
        let coarse = match pipeline.estimator.run_with_views(&s.image, &views) {
            Ok(out) if switches.use_wpm => Ok(out.pose),
            Ok(out) => {
                let n = out.candidates.poses.len();
                fuse_poses(&CandidateSet {
                    poses: out.candidates.poses,
                    weights: vec![1.0 / n as f64; n],
                })
            }
            Err(e) => Err(e),
        };
        let coarse_ms = t0.elapsed().as_secs_f64() * 1e3;
        let coarse = match coarse {
            Ok(p) => p,
            Err(e) => {
                records.push(failed_record(index, &s.pose, e.to_string()));
                continue;
            }
        };
        let t1 = Instant::now();
        let (fine, diagnostics, error) = if switches.use_matcher_solver {
            let k = CameraIntrinsics::square(s.image.width);
            let matcher = match pipeline.oracle {
                Some((n, noise_px)) => Matcher::Oracle {
                    target_pose: s.pose,
                    n,
                    noise_px,
                    seed: index as u64,
                },
                None => Matcher::Classical(pipeline.matcher),
            };
            match refine_pose(&coarse, &s.image, &k, &ctx, &matcher, &refine_cfg) {
                Ok(out) => (out.pose, Some(out.diagnostics), None),
                Err(e) => (coarse, None, Some(e.to_string())),
            }
        } else {
            (coarse, None, None)
        };
        let refine_ms = if switches.use_matcher_solver {
            t1.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        records.push(SampleRecord {
            index,
            gt: s.pose,
            coarse,
            fine,
            coarse_rot_err: rotation_error_deg(&coarse.rotation, &s.pose.rotation),
            coarse_trans_err: position_error(&coarse, &s.pose),
            rot_err: rotation_error_deg(&fine.rotation, &s.pose.rotation),
            trans_err: position_error(&fine, &s.pose),
            coarse_ms,
            refine_ms,
            diagnostics,
            error,
        });
    }
    let aggregates = aggregate(&records, thresholds);
    Ok(BenchmarkReport {
        config: ConfigSnapshot {
            switches: *switches,
            thresholds: thresholds.to_vec(),
            sampling,
            refine: refine_cfg,
            matcher: pipeline.matcher,
            n_samples: testset.len(),
        },
        records,
        aggregates,
    })
}

/// One benchmark per reference-view count.
pub fn sweep_views(
    pipeline: &Pipeline,
    testset: &[TestSample],
    switches: &PipelineSwitches,
    thresholds: &[Threshold],
    view_counts: &[usize],
) -> Result<Vec<(usize, BenchmarkReport)>, BenchError> {
    view_counts
        .iter()
        .map(|&n| {
            let sw = PipelineSwitches { n_views: n, ..*switches };
            Ok((n, run_benchmark(pipeline, testset, &sw, thresholds)?))
        })
        .collect()
}

/// Base poses of the default 16-view sphere.
pub fn default_base_poses() -> Result<Vec<Pose<f64>>, BenchError> {
    Ok(sample_sphere(&SphericalConfig::default())?)
}

#[cfg(test)]
mod tests;
