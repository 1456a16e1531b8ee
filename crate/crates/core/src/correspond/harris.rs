use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{CorrespondError, CorrespondenceSet};
use crate::render::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatcherConfig {
    pub max_keypoints: usize,
    pub nms_radius: usize,
    /// Odd side length of the descriptor patch.
    pub patch_size: usize,
    /// Lowe ratio on descriptor distances.
    pub ratio: f64,
    pub harris_k: f64,
    /// Responses below this fraction of the image maximum are dropped.
    pub rel_threshold: f64,
    pub min_matches: usize,
    /// Search radius in pixels of the NCC position refinement applied to
    /// each match; `0` keeps the detector positions.
    pub refine_radius: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            nms_radius: 5,
            patch_size: 11,
            ratio: 0.8,
            harris_k: 0.04,
            rel_threshold: 1e-3,
            min_matches: 8,
            refine_radius: 2,
        }
    }
}

/// Corner with sub-pixel position; `px, py` is the integer peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub px: usize,
    pub py: usize,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    /// Unit-norm, zero-mean patch descriptors, one per keypoint.
    pub descriptors: Vec<Vec<f64>>,
}

/// Harris corner response of the color structure tensor (summed over RGB).
///
/// Sobel gradients, tensor smoothed by a 5×5 binomial window.
pub fn harris_response(img: &Image, k: f64) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for c in 0..3 {
        let at = |x: isize, y: isize| -> f64 {
            let xc = x.clamp(0, w as isize - 1) as usize;
            let yc = y.clamp(0, h as isize - 1) as usize;
            img.rgb[yc * w + xc][c]
        };
        for y in 0..h as isize {
            for x in 0..w as isize {
                let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                let i = y as usize * w + x as usize;
                ixx[i] += gx * gx;
                iyy[i] += gy * gy;
                ixy[i] += gx * gy;
            }
        }
    }
    let smooth = |src: &[f64]| -> Vec<f64> {
        const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mut tmp = vec![0.0; w * h];
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (j, kv) in K.iter().enumerate() {
                    let xx = (x as isize + j as isize - 2).clamp(0, w as isize - 1) as usize;
                    s += kv * src[y * w + xx];
                }
                tmp[y * w + x] = s / 16.0;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (j, kv) in K.iter().enumerate() {
                    let yy = (y as isize + j as isize - 2).clamp(0, h as isize - 1) as usize;
                    s += kv * tmp[yy * w + x];
                }
                out[y * w + x] = s / 16.0;
            }
        }
        out
    };
    let (sxx, syy, sxy) = (smooth(&ixx), smooth(&iyy), smooth(&ixy));
    (0..w * h)
        .map(|i| sxx[i] * syy[i] - sxy[i] * sxy[i] - k * (sxx[i] + syy[i]).powi(2))
        .collect()
}

/// Harris keypoints with radius NMS and mean-subtracted, L2-normalized
/// RGB patches. Keypoints closer than half a patch to the border are
/// skipped.
pub fn detect_and_describe(img: &Image, cfg: &MatcherConfig) -> Features {
    let (w, h) = (img.width, img.height);
    let half = cfg.patch_size / 2;
    let border = half.max(1);
    if w <= 2 * border || h <= 2 * border {
        return Features::default();
    }
    let resp = harris_response(img, cfg.harris_k);
    let max = resp.iter().copied().fold(0.0, f64::max);
    if !(max > 1e-12) {
        return Features::default();
    }
    let thr = (cfg.rel_threshold * max).max(1e-12);
    let r = cfg.nms_radius as isize;
    let mut kps = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let v = resp[y * w + x];
            if v <= thr {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    let o = resp[yy as usize * w + xx as usize];
                    // ties go to the earlier pixel in raster order
                    let earlier = (yy, xx) < (y as isize, x as isize);
                    if o > v || (o == v && earlier) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                // parabola through the peak and its neighbours
                let off = |m: f64, p: f64| {
                    let den = m - 2.0 * v + p;
                    if den < 0.0 {
                        (0.5 * (m - p) / den).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    }
                };
                let dx = off(resp[y * w + x - 1], resp[y * w + x + 1]);
                let dy = off(resp[(y - 1) * w + x], resp[(y + 1) * w + x]);
                kps.push(Keypoint {
                    x: x as f64 + dx,
                    y: y as f64 + dy,
                    px: x,
                    py: y,
                    response: v,
                });
            }
        }
    }
    kps.sort_by(|a, b| b.response.total_cmp(&a.response).then((a.py, a.px).cmp(&(b.py, b.px))));
    let mut out = Features::default();
    for kp in kps {
        if out.keypoints.len() >= cfg.max_keypoints {
            break;
        }
        let mut d = Vec::with_capacity(3 * cfg.patch_size * cfg.patch_size);
        for yy in kp.py - half..=kp.py + half {
            for xx in kp.px - half..=kp.px + half {
                d.extend_from_slice(&img.rgb[yy * w + xx]);
            }
        }
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter_mut().for_each(|v| *v -= mean);
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < 1e-9 {
            continue;
        }
        d.iter_mut().for_each(|v| *v /= n);
        out.keypoints.push(kp);
        out.descriptors.push(d);
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best and second-best descriptor distance from each row of `a` into `b`.
fn nearest(a: &[Vec<f64>], b: &[Vec<f64>], allow: impl Fn(usize, usize) -> bool) -> Vec<(usize, f64, f64)> {
    a.iter()
        .enumerate()
        .map(|(i, da)| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (j, db) in b.iter().enumerate() {
                if !allow(i, j) {
                    continue;
                }
                let d = (2.0 - 2.0 * dot(da, db)).max(0.0).sqrt();
                if d < best.1 {
                    second = best.1;
                    best = (j, d);
                } else if d < second {
                    second = d;
                }
            }
            (best.0, best.1, second)
        })
        .collect()
}

/// Mutual nearest neighbours that pass the ratio test in both directions.
///
/// `p` lies in `rendered`, `q` in `target`; pairs come out in the order of
/// the rendered image's keypoints.
pub fn match_images(rendered: &Image, target: &Image, cfg: &MatcherConfig) -> Result<CorrespondenceSet, CorrespondError> {
    let fa = detect_and_describe(rendered, cfg);
    let fb = detect_and_describe(target, cfg);
    let mut set = match_features(&fa, &fb, cfg, |_, _| true);
    if cfg.refine_radius > 0 {
        set = refine_positions(rendered, target, &set, cfg.patch_size / 2, cfg.refine_radius);
    }
    if set.len() < cfg.min_matches {
        return Err(CorrespondError::InsufficientMatches {
            found: set.len(),
            needed: cfg.min_matches,
        });
    }
    Ok(set)
}

/// Mutual ratio-test matching restricted to keypoint pairs accepted by
/// `allow` (for instance an epipolar band). Never fails; may be empty.
pub fn match_features(
    fa: &Features,
    fb: &Features,
    cfg: &MatcherConfig,
    allow: impl Fn(&Keypoint, &Keypoint) -> bool,
) -> CorrespondenceSet {
    let ab = nearest(&fa.descriptors, &fb.descriptors, |i, j| allow(&fa.keypoints[i], &fb.keypoints[j]));
    let ba = nearest(&fb.descriptors, &fa.descriptors, |j, i| allow(&fa.keypoints[i], &fb.keypoints[j]));
    let mut set = CorrespondenceSet::default();
    for (i, &(j, d1, d2)) in ab.iter().enumerate() {
        if j == usize::MAX || ba[j].0 != i {
            continue;
        }
        let (_, e1, e2) = ba[j];
        if d1 >= cfg.ratio * d2 || e1 >= cfg.ratio * e2 {
            continue;
        }
        let (ka, kb) = (fa.keypoints[i], fb.keypoints[j]);
        set.pairs.push((Vector2::new(ka.x, ka.y), Vector2::new(kb.x, kb.y)));
        set.scores.push((0.5 + 0.5 * dot(&fa.descriptors[i], &fb.descriptors[j])).clamp(0.0, 1.0));
    }
    set
}

fn patch(img: &Image, cx: isize, cy: isize, half: isize) -> Option<Vec<f64>> {
    if cx < half || cy < half || cx + half >= img.width as isize || cy + half >= img.height as isize {
        return None;
    }
    let mut d = Vec::with_capacity((3 * (2 * half + 1) * (2 * half + 1)) as usize);
    for y in cy - half..=cy + half {
        for x in cx - half..=cx + half {
            d.extend_from_slice(&img.rgb[y as usize * img.width + x as usize]);
        }
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    d.iter_mut().for_each(|v| *v -= mean);
    let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-9 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= n);
    Some(d)
}

/// Re-anchors every match at the integer pixel nearest `p` and moves `q` to
/// the sub-pixel NCC peak of that patch within `radius` pixels.
///
/// Matches whose peak sits on the search border are dropped.
pub fn refine_positions(
    rendered: &Image,
    target: &Image,
    set: &CorrespondenceSet,
    half: usize,
    radius: usize,
) -> CorrespondenceSet {
    let (h, r) = (half as isize, radius as isize);
    let mut out = CorrespondenceSet::default();
    for ((p, q), score) in set.pairs.iter().zip(&set.scores) {
        let (px, py) = (p.x.round() as isize, p.y.round() as isize);
        let Some(tpl) = patch(rendered, px, py, h) else { continue };
        let (qx, qy) = (q.x.round() as isize, q.y.round() as isize);
        let side = (2 * r + 1) as usize;
        let mut ncc = vec![f64::NEG_INFINITY; side * side];
        for dy in -r..=r {
            for dx in -r..=r {
                if let Some(c) = patch(target, qx + dx, qy + dy, h) {
                    ncc[(dy + r) as usize * side + (dx + r) as usize] = dot(&tpl, &c);
                }
            }
        }
        let (best, &v) = ncc
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty window");
        let (bx, by) = ((best % side) as isize, (best / side) as isize);
        if bx == 0 || by == 0 || bx == 2 * r || by == 2 * r || !v.is_finite() {
            continue;
        }
        let at = |x: isize, y: isize| ncc[y as usize * side + x as usize];
        let off = |m: f64, c: f64, p: f64| {
            let den = m - 2.0 * c + p;
            if den < 0.0 {
                (0.5 * (m - p) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        };
        let sx = off(at(bx - 1, by), v, at(bx + 1, by));
        let sy = off(at(bx, by - 1), v, at(bx, by + 1));
        out.pairs.push((
            Vector2::new(px as f64, py as f64),
            Vector2::new((qx + bx - r) as f64 + sx, (qy + by - r) as f64 + sy),
        ));
        out.scores.push(*score);
    }
    out
}
