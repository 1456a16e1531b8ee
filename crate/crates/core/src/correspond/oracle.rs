use nalgebra::{Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{CorrespondError, CorrespondenceSet};
use crate::geom::Pose;
use crate::render::{CameraIntrinsics, Image, Rasterizer};
use crate::scene::GaussianScene;

/// Ground-truth matches from a rendered depth map.
///
/// Covered pixels of `rendered` (taken at `pose_a`) are back-projected with
/// their depth and reprojected into a camera at `pose_b`. Points that land
/// behind it or outside the frame are skipped. `noise_px` adds isotropic
/// Gaussian noise to the target-side coordinates.
pub fn oracle_from_depth(
    rendered: &Image,
    pose_a: &Pose<f64>,
    pose_b: &Pose<f64>,
    k: &CameraIntrinsics,
    n: usize,
    noise_px: f64,
    seed: u64,
) -> Result<CorrespondenceSet, CorrespondError> {
    let depth = rendered.depth.as_ref().ok_or(CorrespondError::MissingDepth)?;
    let covered: Vec<usize> = (0..depth.len()).filter(|&i| depth[i] > 0.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_px.max(0.0)).expect("finite sigma");
    let a_to_b = pose_b.compose(&pose_a.inverse());
    let order = sample(&mut rng, covered.len(), covered.len());
    let mut set = CorrespondenceSet::default();
    for j in order.iter() {
        if set.len() >= n {
            break;
        }
        let i = covered[j];
        let p = Vector2::new((i % rendered.width) as f64, (i / rendered.width) as f64);
        let ray = k.normalize(&p);
        let xa = Vector3::new(ray.x, ray.y, 1.0) * depth[i];
        let xb = a_to_b.transform_point(&xa);
        if xb.z <= 1e-6 {
            continue;
        }
        let mut q = k.denormalize(&Vector2::new(xb.x / xb.z, xb.y / xb.z));
        if noise_px > 0.0 {
            q += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        }
        let inside = q.x >= 0.0 && q.y >= 0.0 && q.x <= (k.width - 1) as f64 && q.y <= (k.height - 1) as f64;
        if !inside {
            continue;
        }
        set.pairs.push((p, q));
        set.scores.push(1.0);
    }
    Ok(set)
}

/// Renders `pose_a` and calls [`oracle_from_depth`].
#[allow(clippy::too_many_arguments)]
pub fn oracle_matches(
    scene: &GaussianScene,
    rasterizer: &Rasterizer,
    pose_a: &Pose<f64>,
    pose_b: &Pose<f64>,
    k: &CameraIntrinsics,
    n: usize,
    noise_px: f64,
    seed: u64,
) -> Result<CorrespondenceSet, CorrespondError> {
    let img = rasterizer.render(scene, pose_a, k, [0.0; 3])?;
    oracle_from_depth(&img, pose_a, pose_b, k, n, noise_px, seed)
}
