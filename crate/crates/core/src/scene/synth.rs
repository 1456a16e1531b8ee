use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::{rgb_to_sh_dc, GaussianScene, SceneError};
use crate::geom::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStyle {
    /// Noisy sphere and box shells, color varying smoothly with direction.
    Textured,
    /// A handful of blobs with one hue each.
    Clustered,
}

impl std::str::FromStr for SceneStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "textured" => Ok(Self::Textured),
            "clustered" => Ok(Self::Clustered),
            _ => Err(format!("unknown scene style '{s}' (textured|clustered)")),
        }
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    Quaternion::new(n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng)).normalized()
}

fn clamp_to_ball(p: Vector3<f64>, r: f64) -> Vector3<f64> {
    let n = p.norm();
    if n > r {
        p * (r / n)
    } else {
        p
    }
}

/// Seeded procedural scene with all means inside the unit ball.
///
/// The color of a `Textured` splat is a function of its direction from the
/// origin plus a small per-splat hue jitter, so no rotation of the scene
/// maps it onto itself.
pub fn generate_synthetic(seed: u64, n_splats: usize, style: SceneStyle) -> Result<GaussianScene, SceneError> {
    if n_splats == 0 {
        return Err(SceneError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce2e);
    let mut scene = GaussianScene::default();
    match style {
        SceneStyle::Textured => {
            let hue0: f64 = rng.gen();
            for _ in 0..n_splats {
                let p = if rng.gen_bool(0.6) {
                    let d: [f64; 3] = UnitSphere.sample(&mut rng);
                    Vector3::from(d) * (0.8 + 0.03 * rng.gen_range(-1.0..1.0))
                } else {
                    let axis = rng.gen_range(0..3);
                    let mut p = Vector3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
                    p[axis] = if rng.gen_bool(0.5) { 0.5 } else { -0.5 };
                    p + Vector3::from_fn(|_, _| 0.02 * rng.gen_range(-1.0..1.0))
                };
                let p = clamp_to_ball(p, 0.98);
                let az = p.z.atan2(p.x) / (2.0 * PI);
                let el = (p.y / p.norm().max(1e-9)).clamp(-1.0, 1.0);
                let hue = hue0 + az + 0.25 * el + 0.05 * rng.gen_range(-1.0..1.0);
                let sat = 0.55 + 0.4 * (0.5 + 0.5 * (3.0 * el).sin());
                let val = 0.45 + 0.5 * rng.gen::<f64>().powf(0.5);
                let a = rng.gen_range(0.06f64..0.12);
                let log_scale = [a.ln(), (a * rng.gen_range(0.5..1.0)).ln(), (0.3 * a).ln()];
                scene.push(
                    [p.x, p.y, p.z],
                    log_scale,
                    random_rotation(&mut rng),
                    rng.gen_range(0.6..0.95),
                    rgb_to_sh_dc(hsv(hue, sat, val)),
                );
            }
        }
        SceneStyle::Clustered => {
            let k = 6.min(n_splats).max(1);
            let centers: Vec<(Vector3<f64>, f64)> = (0..k)
                .map(|_| {
                    let d: [f64; 3] = UnitSphere.sample(&mut rng);
                    (Vector3::from(d) * rng.gen_range(0.2..0.7), rng.gen())
                })
                .collect();
            let spread = Normal::new(0.0, 0.12).unwrap();
            for i in 0..n_splats {
                let (c, hue) = centers[i % k];
                let p = clamp_to_ball(c + Vector3::from_fn(|_, _| spread.sample(&mut rng)), 0.98);
                let a = rng.gen_range(0.04f64..0.09);
                let log_scale = [a.ln(), (a * rng.gen_range(0.5..1.0)).ln(), (a * rng.gen_range(0.3..1.0)).ln()];
                let col = hsv(hue + 0.04 * rng.gen_range(-1.0..1.0), 0.8, rng.gen_range(0.6..1.0));
                scene.push(
                    [p.x, p.y, p.z],
                    log_scale,
                    random_rotation(&mut rng),
                    rng.gen_range(0.5..0.95),
                    rgb_to_sh_dc(col),
                );
            }
        }
    }
    Ok(scene)
}
