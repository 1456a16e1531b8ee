use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eval_sh, project_splat, CameraIntrinsics, Image, RenderError};
use crate::geom::Pose;
use crate::scene::GaussianScene;

/// Squared Mahalanobis radius of the contribution window (3σ).
const WINDOW: f64 = 9.0;
/// Compositing stops once transmittance drops below this.
pub const T_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    /// Spherical-harmonic degree used for color (0 ignores `f_rest`).
    pub sh_degree: u8,
    pub tile_size: usize,
    /// Composite tiles on the rayon pool instead of the calling thread.
    pub parallel: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            sh_degree: 0,
            tile_size: 16,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Splat2d {
    center: [f64; 2],
    /// Inverse covariance `[a, b, c]` of `[[a, b], [b, c]]`.
    conic: [f64; 3],
    /// Inclusive pixel bounding box `[x0, y0, x1, y1]`.
    bbox: [i64; 4],
    depth: f64,
    color: [f64; 3],
    opacity: f64,
}

/// Forward splatting rasterizer that counts the renders it performs.
#[derive(Debug, Default)]
pub struct Rasterizer {
    pub options: RenderOptions,
    renders: AtomicUsize,
}

impl Rasterizer {
    pub fn new(options: RenderOptions) -> Self {
        Self {
            options,
            renders: AtomicUsize::new(0),
        }
    }

    pub fn render_count(&self) -> usize {
        self.renders.load(Ordering::SeqCst)
    }

    pub fn reset_count(&self) {
        self.renders.store(0, Ordering::SeqCst);
    }

    pub fn render(
        &self,
        scene: &GaussianScene,
        pose: &Pose<f64>,
        k: &CameraIntrinsics,
        background: [f64; 3],
    ) -> Result<Image, RenderError> {
        k.validate()?;
        if self.options.tile_size == 0 {
            return Err(RenderError::InvalidOptions("tile_size must be positive"));
        }
        self.renders.fetch_add(1, Ordering::SeqCst);
        let splats = self.project_all(scene, pose, k);
        Ok(self.composite(&splats, k, background))
    }

    /// Projects every splat and returns the survivors sorted front to back,
    /// ties broken by splat index.
    fn project_all(&self, scene: &GaussianScene, pose: &Pose<f64>, k: &CameraIntrinsics) -> Vec<Splat2d> {
        let cam_center = pose.center();
        let sh_degree = self.options.sh_degree;
        let one = |i: usize| -> Option<(usize, Splat2d)> {
            let mean = scene.mean(i);
            let proj = project_splat(&mean, &scene.scale(i), &scene.rotations[i], pose, k)?;
            let cov = proj.cov2d;
            let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)];
            let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
            let (cx, cy) = (proj.center_px.x, proj.center_px.y);
            let (rx, ry) = (3.0 * cov[(0, 0)].sqrt(), 3.0 * cov[(1, 1)].sqrt());
            let bbox = [
                ((cx - rx).ceil() as i64).max(0),
                ((cy - ry).ceil() as i64).max(0),
                ((cx + rx).floor() as i64).min(k.width as i64 - 1),
                ((cy + ry).floor() as i64).min(k.height as i64 - 1),
            ];
            if bbox[0] > bbox[2] || bbox[1] > bbox[3] {
                return None;
            }
            let color = match (&scene.sh_rest, sh_degree) {
                (Some(rest), d) if d > 0 => {
                    let dir: Vector3<f64> = (mean - cam_center).normalize();
                    eval_sh(d, &scene.sh_dc[i], &rest[i], &dir)
                }
                _ => scene.base_color(i),
            };
            Some((
                i,
                Splat2d {
                    center: [cx, cy],
                    conic,
                    bbox,
                    depth: proj.depth,
                    color: color.map(|c| c.clamp(0.0, 1.0)),
                    opacity: scene.opacities[i],
                },
            ))
        };
        let mut out: Vec<(usize, Splat2d)> = if self.options.parallel {
            (0..scene.len()).into_par_iter().filter_map(one).collect()
        } else {
            (0..scene.len()).filter_map(one).collect()
        };
        out.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(_, s)| s).collect()
    }

    fn composite(&self, splats: &[Splat2d], k: &CameraIntrinsics, bg: [f64; 3]) -> Image {
        let ts = self.options.tile_size;
        let (w, h) = (k.width, k.height);
        let tiles_x = w.div_ceil(ts);
        let tiles_y = h.div_ceil(ts);
        let tile = |t: usize| -> (usize, Vec<([f64; 3], f64)>) {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let x0 = tx * ts;
            let y0 = ty * ts;
            let x1 = (x0 + ts).min(w) - 1;
            let y1 = (y0 + ts).min(h) - 1;
            let list: Vec<&Splat2d> = splats
                .iter()
                .filter(|s| {
                    s.bbox[0] <= x1 as i64 && s.bbox[2] >= x0 as i64 && s.bbox[1] <= y1 as i64 && s.bbox[3] >= y0 as i64
                })
                .collect();
            let mut px = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    px.push(shade(&list, x as f64, y as f64, bg));
                }
            }
            (t, px)
        };
        let n_tiles = tiles_x * tiles_y;
        let tiles: Vec<(usize, Vec<([f64; 3], f64)>)> = if self.options.parallel {
            (0..n_tiles).into_par_iter().map(tile).collect()
        } else {
            (0..n_tiles).map(tile).collect()
        };
        let mut img = Image::filled(w, h, bg);
        let mut depth = vec![0.0; w * h];
        for (t, px) in tiles {
            let (x0, y0) = ((t % tiles_x) * ts, (t / tiles_x) * ts);
            let tw = (x0 + ts).min(w) - x0;
            for (j, (c, d)) in px.into_iter().enumerate() {
                let i = (y0 + j / tw) * w + x0 + j % tw;
                img.rgb[i] = c;
                depth[i] = d;
            }
        }
        img.depth = Some(depth);
        img
    }
}

/// Front-to-back compositing of one pixel.
fn shade(list: &[&Splat2d], x: f64, y: f64, bg: [f64; 3]) -> ([f64; 3], f64) {
    let mut t = 1.0;
    let mut c = [0.0; 3];
    let mut best = (0.0, 0.0);
    for s in list {
        let dx = x - s.center[0];
        let dy = y - s.center[1];
        let m = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
        if m > WINDOW {
            continue;
        }
        let alpha = s.opacity * (-0.5 * m).exp();
        let wgt = alpha * t;
        for k in 0..3 {
            c[k] += wgt * s.color[k];
        }
        if wgt > best.0 {
            best = (wgt, s.depth);
        }
        t *= 1.0 - alpha;
        if t < T_MIN {
            break;
        }
    }
    for k in 0..3 {
        c[k] = (c[k] + t * bg[k]).clamp(0.0, 1.0);
    }
    (c, best.1)
}

/// One-off render with default options.
pub fn render(
    scene: &GaussianScene,
    pose: &Pose<f64>,
    k: &CameraIntrinsics,
    background: [f64; 3],
) -> Result<Image, RenderError> {
    Rasterizer::default().render(scene, pose, k, background)
}
