use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use splatpose_nn::{Axis, NnError, Tape, Tensor, Var};

use super::{net::CandidateVars, CoarseError};
use crate::geom::{LossWeights, Pose, Quaternion};

/// Per-view candidate poses and their softmax weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub poses: Vec<Pose<f64>>,
    pub weights: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(w: &[f64]) -> usize {
    // first index wins ties
    let mut best = 0;
    for (i, &v) in w.iter().enumerate() {
        if v > w[best] {
            best = i;
        }
    }
    best
}

/// Weighted pose average.
///
/// Translations are averaged directly. Quaternions are sign-aligned with
/// the highest-weight candidate, summed with their weights and normalized;
/// a vanishing sum falls back to the highest-weight rotation.
pub fn fuse_poses(set: &CandidateSet) -> Result<Pose<f64>, CoarseError> {
    let n = set.poses.len();
    if n == 0 || set.weights.len() != n {
        return Err(CoarseError::Candidates(format!(
            "{} poses with {} weights",
            n,
            set.weights.len()
        )));
    }
    if set.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(CoarseError::Candidates("weights must be finite and non-negative".into()));
    }
    let best = argmax(&set.weights);
    let anchor = set.poses[best].rotation;
    let mut t = Vector3::zeros();
    let mut q = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for (p, &w) in set.poses.iter().zip(&set.weights) {
        t += p.translation * w;
        let r = if p.rotation.dot(&anchor) < 0.0 { p.rotation.neg() } else { p.rotation };
        q = Quaternion::new(q.w + w * r.w, q.x + w * r.x, q.y + w * r.y, q.z + w * r.z);
    }
    let rotation = if q.norm() > 1e-12 { q.normalized() } else { anchor.normalized() };
    Ok(Pose {
        rotation,
        translation: t,
    })
}

/// Differentiable fusion of candidate branches: returns `(quat, trans, weights)`.
pub(crate) fn fuse_on_tape(tape: &mut Tape, cands: &[CandidateVars]) -> Result<(Var, Var, Var), NnError> {
    let logits: Vec<Var> = cands.iter().map(|c| c.logit).collect();
    let col = tape.concat_rows(&logits)?;
    let w_col = tape.softmax(col, Axis::Rows)?;
    let w = tape.transpose(w_col)?;
    let wv = tape.value(w).data().to_vec();
    let best = argmax(&wv);
    let anchor = tape.value(cands[best].quat).data().to_vec();
    let mut q_sum = None;
    let mut t_sum = None;
    for (i, c) in cands.iter().enumerate() {
        let wi = tape.slice_cols(w, i, 1)?;
        let qd = tape.value(c.quat).data();
        let dot: f64 = qd.iter().zip(&anchor).map(|(a, b)| a * b).sum();
        let qa = if dot < 0.0 { tape.scale(c.quat, -1.0) } else { c.quat };
        let qw = tape.mul_scalar(qa, wi)?;
        let tw = tape.mul_scalar(c.trans, wi)?;
        q_sum = Some(match q_sum {
            None => qw,
            Some(s) => tape.add(s, qw)?,
        });
        t_sum = Some(match t_sum {
            None => tw,
            Some(s) => tape.add(s, tw)?,
        });
    }
    let q_sum = q_sum.expect("at least one candidate");
    let n = tape.norm(q_sum);
    let q = tape.div_scalar(q_sum, n)?;
    Ok((q, t_sum.expect("at least one candidate"), w))
}

/// `λ_r · rotation error (deg) + λ_t · translation error` on the tape.
pub(crate) fn pose_loss_on_tape(
    tape: &mut Tape,
    quat: Var,
    trans: Var,
    gt: &Pose<f64>,
    w: &LossWeights,
) -> Result<Var, NnError> {
    let g = gt.rotation.normalized();
    let gq = tape.constant(Tensor::row(&[g.w, g.x, g.y, g.z]));
    let gt_t = tape.constant(Tensor::row(&[gt.translation.x, gt.translation.y, gt.translation.z]));
    let prod = tape.mul(quat, gq)?;
    let dot = tape.sum(prod);
    let adot = tape.abs(dot);
    let ang = tape.acos(adot);
    let rot = tape.scale(ang, w.lambda_r * 360.0 / std::f64::consts::PI);
    let diff = tape.sub(trans, gt_t)?;
    let dist = tape.norm(diff);
    let tr = tape.scale(dist, w.lambda_t);
    tape.add(rot, tr)
}

pub(crate) fn pose_from_vars(tape: &Tape, quat: Var, trans: Var) -> Pose<f64> {
    let q = tape.value(quat).data();
    let t = tape.value(trans).data();
    Pose::new(Quaternion::new(q[0], q[1], q[2], q[3]), Vector3::new(t[0], t[1], t[2]))
}
