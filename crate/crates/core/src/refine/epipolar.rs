use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RefineError;

fn h(p: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// First-order geometric error of `q^T E p = 0` in normalized image
/// coordinates (a squared distance). A zero gradient gives `+inf`.
pub fn sampson_error(e: &Matrix3<f64>, p: &Vector2<f64>, q: &Vector2<f64>) -> f64 {
    let (ph, qh) = (h(p), h(q));
    let ep = e * ph;
    let etq = e.transpose() * qh;
    let num = qh.dot(&ep);
    let den = ep.x * ep.x + ep.y * ep.y + etq.x * etq.x + etq.y * etq.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    num * num / den
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn hartley(pts: impl Iterator<Item = Vector2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = pts.clone().count() as f64;
    let c = pts.clone().fold(Vector2::zeros(), |a, p| a + p) / n;
    let d = pts.map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(d > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / d;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

/// Closest essential matrix: singular values `(1, 1, 0)`.
pub fn project_to_essential(e: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = e.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * vt
}

fn rank_two(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut svd = m.svd(true, true);
    let i = svd.singular_values.imin();
    svd.singular_values[i] = 0.0;
    svd.recompose().expect("u and v_t")
}

/// Normalized eight-point estimate from `n >= 8` normalized pairs.
///
/// Fails with [`RefineError::DegenerateSample`] when the design matrix has
/// rank below eight (coincident points, planar or collinear configurations).
pub fn eight_point(pairs: &[(Vector2<f64>, Vector2<f64>)]) -> Result<Matrix3<f64>, RefineError> {
    if pairs.len() < 8 {
        return Err(RefineError::DegenerateSample);
    }
    let tp = hartley(pairs.iter().map(|x| x.0)).ok_or(RefineError::DegenerateSample)?;
    let tq = hartley(pairs.iter().map(|x| x.1)).ok_or(RefineError::DegenerateSample)?;
    let rows = pairs.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in pairs.iter().enumerate() {
        let p = tp * h(p);
        let q = tq * h(q);
        for r in 0..3 {
            for c in 0..3 {
                a[(i, 3 * r + c)] = q[r] * p[c];
            }
        }
    }
    let svd = a.svd(false, true);
    let mut order: Vec<usize> = (0..9).collect();
    let s = &svd.singular_values;
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if !(s[order[7]] > 1e-8 * s[order[0]]) {
        return Err(RefineError::DegenerateSample);
    }
    let vt = svd.v_t.expect("v_t");
    let en = Matrix3::from_fn(|r, c| vt[(order[8], 3 * r + c)]);
    let e = tq.transpose() * rank_two(&en) * tp;
    let e = project_to_essential(&e);
    if !e.iter().all(|v| v.is_finite()) {
        return Err(RefineError::DegenerateSample);
    }
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    /// Inlier threshold in pixels; the Sampson error is compared with
    /// `(sigma_px / fx)^2`.
    pub sigma_px: f64,
    pub max_iters: usize,
    pub min_iters: usize,
    /// Target probability of drawing one all-inlier sample; `1` disables the
    /// adaptive stop.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            sigma_px: 2.0,
            max_iters: 2000,
            min_iters: 50,
            confidence: 0.999,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub e: Matrix3<f64>,
    pub inliers: Vec<bool>,
    pub n_inliers: usize,
    pub iterations: usize,
}

fn score(e: &Matrix3<f64>, pairs: &[(Vector2<f64>, Vector2<f64>)], thr: f64) -> (usize, Vec<bool>) {
    let mask: Vec<bool> = pairs.iter().map(|(p, q)| sampson_error(e, p, q) < thr).collect();
    (mask.iter().filter(|&&b| b).count(), mask)
}

fn needed_iters(inlier_frac: f64, confidence: f64, cap: usize) -> usize {
    if confidence >= 1.0 {
        return cap;
    }
    let w8 = inlier_frac.powi(8);
    if w8 >= 1.0 {
        return 0;
    }
    if w8 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w8).ln();
    if n.is_finite() {
        (n.ceil() as usize).min(cap)
    } else {
        cap
    }
}

/// Essential matrix by RANSAC over normalized pairs.
///
/// Hypotheses are scored by inlier count with `threshold` on the Sampson
/// error; the first hypothesis reaching the best count wins. The winner is
/// refit on its inliers and the refit kept if it scores at least as well.
pub fn ransac_essential(
    pairs: &[(Vector2<f64>, Vector2<f64>)],
    threshold: f64,
    cfg: &RansacConfig,
) -> Result<RansacResult, RefineError> {
    if pairs.len() < 8 {
        return Err(RefineError::InsufficientMatches { found: pairs.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Matrix3<f64>)> = None;
    let mut limit = cfg.max_iters;
    let mut it = 0;
    let mut sample_buf = Vec::with_capacity(8);
    while it < limit.max(cfg.min_iters.min(cfg.max_iters)) {
        it += 1;
        sample_buf.clear();
        sample_buf.extend(sample(&mut rng, pairs.len(), 8).iter().map(|i| pairs[i]));
        let Ok(e) = eight_point(&sample_buf) else { continue };
        let (n, _) = score(&e, pairs, threshold);
        if best.as_ref().map_or(true, |b| n > b.0) {
            best = Some((n, e));
            limit = needed_iters(n as f64 / pairs.len() as f64, cfg.confidence, cfg.max_iters);
        }
    }
    let (mut n_best, mut e_best) = best.ok_or(RefineError::RansacFailed)?;
    for _ in 0..2 {
        let (_, mask) = score(&e_best, pairs, threshold);
        let inl: Vec<_> = pairs.iter().zip(&mask).filter(|x| *x.1).map(|x| *x.0).collect();
        let Ok(e) = eight_point(&inl) else { break };
        let (n, _) = score(&e, pairs, threshold);
        if n < n_best {
            break;
        }
        n_best = n;
        e_best = e;
    }
    let (n_inliers, inliers) = score(&e_best, pairs, threshold);
    Ok(RansacResult {
        e: e_best,
        inliers,
        n_inliers,
        iterations: it,
    })
}

/// Depths `(λp, λq)` with `λq q = λp R p + t` in the least-squares sense.
fn triangulate_depths(r: &Matrix3<f64>, t: &Vector3<f64>, p: &Vector2<f64>, q: &Vector2<f64>) -> Option<(f64, f64)> {
    let a = r * h(p);
    let b = -h(q);
    // minimise |λp a + λq b + t|
    let (aa, ab, bb) = (a.dot(&a), a.dot(&b), b.dot(&b));
    let det = aa * bb - ab * ab;
    if det.abs() < 1e-12 * aa * bb {
        return None;
    }
    let (at, bt) = (a.dot(t), b.dot(t));
    let lp = (-at * bb + bt * ab) / det;
    let lq = (-bt * aa + at * ab) / det;
    Some((lp, lq))
}

/// Splits `E` into the `(R, t̂)` with `x_q = R x_p + t` that puts the most
/// inliers in front of both cameras.
///
/// Returns [`RefineError::ZeroBaseline`] when fewer than half the inliers
/// support the winner or two candidates tie.
pub fn decompose_essential(
    e: &Matrix3<f64>,
    pairs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<(Matrix3<f64>, Vector3<f64>), RefineError> {
    let svd = e.svd(true, true);
    let mut u = svd.u.expect("u");
    let mut vt = svd.v_t.expect("v_t");
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t: Vector3<f64> = u.column(2).into();
    let cands = [
        (u * w * vt, t),
        (u * w * vt, -t),
        (u * w.transpose() * vt, t),
        (u * w.transpose() * vt, -t),
    ];
    let mut counts: Vec<(usize, usize)> = cands
        .iter()
        .enumerate()
        .map(|(i, (r, t))| {
            let c = pairs
                .iter()
                .filter(|(p, q)| matches!(triangulate_depths(r, t, p, q), Some((a, b)) if a > 0.0 && b > 0.0))
                .count();
            (c, i)
        })
        .collect();
    counts.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let (best, idx) = counts[0];
    if best == 0 || best == counts[1].0 || 2 * best < pairs.len() {
        return Err(RefineError::ZeroBaseline);
    }
    Ok(cands[idx])
}

fn sampson_residual(e: &Matrix3<f64>, p: &Vector2<f64>, q: &Vector2<f64>) -> f64 {
    let (ph, qh) = (h(p), h(q));
    let ep = e * ph;
    let etq = e.transpose() * qh;
    let den = (ep.x * ep.x + ep.y * ep.y + etq.x * etq.x + etq.y * etq.y).max(1e-300);
    qh.dot(&ep) / den.sqrt()
}

/// Levenberg–Marquardt on the signed Sampson residuals over the five-dof
/// manifold of `(R, t̂)`, starting from a decomposed essential matrix.
pub fn refine_relative_pose(
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    pairs: &[(Vector2<f64>, Vector2<f64>)],
    iters: usize,
) -> (Matrix3<f64>, Vector3<f64>) {
    use nalgebra::{Matrix5, Rotation3, Vector5};
    let apply = |r: &Matrix3<f64>, t: &Vector3<f64>, d: &Vector5<f64>| {
        let rot = Rotation3::new(Vector3::new(d[0], d[1], d[2])).into_inner() * r;
        // tangent basis of the unit sphere at t
        let a = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let b1 = t.cross(&a).normalize();
        let b2 = t.cross(&b1);
        let tn = (t + b1 * d[3] + b2 * d[4]).normalize();
        (rot, tn)
    };
    let residuals = |r: &Matrix3<f64>, t: &Vector3<f64>| -> Vec<f64> {
        let e = t.cross_matrix() * r;
        pairs.iter().map(|(p, q)| sampson_residual(&e, p, q)).collect()
    };
    let cost = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (mut r, mut t) = (*r, t.normalize());
    let mut res = residuals(&r, &t);
    let mut c = cost(&res);
    let mut lambda = 1e-3;
    const EPS: f64 = 1e-7;
    for _ in 0..iters {
        let mut jtj = Matrix5::<f64>::zeros();
        let mut jtr = Vector5::<f64>::zeros();
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|k| {
                let mut d = Vector5::zeros();
                d[k] = EPS;
                let (rp, tp) = apply(&r, &t, &d);
                let (rm, tm) = apply(&r, &t, &(-d));
                let (a, b) = (residuals(&rp, &tp), residuals(&rm, &tm));
                a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * EPS)).collect()
            })
            .collect();
        for i in 0..res.len() {
            for a in 0..5 {
                jtr[a] += cols[a][i] * res[i];
                for b in 0..5 {
                    jtj[(a, b)] += cols[a][i] * cols[b][i];
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut m = jtj;
            for k in 0..5 {
                m[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = m.lu().solve(&(-jtr)) else { break };
            let (rn, tn) = apply(&r, &t, &step);
            let rn_res = residuals(&rn, &tn);
            let cn = cost(&rn_res);
            if cn < c {
                (r, t, res, c) = (rn, tn, rn_res, cn);
                lambda = (lambda * 0.3).max(1e-9);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // re-orthonormalize
    let q = crate::geom::Quaternion::from_matrix(&r).normalized();
    (q.to_matrix(), t)
}
