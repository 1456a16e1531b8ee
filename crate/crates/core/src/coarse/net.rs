use splatpose_nn::{Axis, Init, NnError, ParamId, ParamStore, Tape, Tensor, Var};

use super::{CoarseError, CoarseNetConfig};
use crate::geom::Pose;
use crate::render::Image;

/// Parameter handles of the coarse network, in registration order.
#[derive(Debug, Clone)]
pub(crate) struct Ids {
    patch_w: ParamId,
    patch_b: ParamId,
    pos: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    q_w1: ParamId,
    q_b1: ParamId,
    q_w2: ParamId,
    q_b2: ParamId,
    f1: [ParamId; 4],
    f2: [ParamId; 4],
    head_w: ParamId,
    head_b: ParamId,
    g_w1: ParamId,
    g_b1: ParamId,
    g_w2: ParamId,
    g_b2: ParamId,
}

/// Pose regression network with its parameters.
#[derive(Debug, Clone)]
pub struct CoarseNet {
    pub config: CoarseNetConfig,
    pub params: ParamStore,
    pub(crate) ids: Ids,
}

/// Initial head bias: identity rotation at the default sampling distance.
const HEAD_BIAS: [f64; 7] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0];

fn ffn(store: &mut ParamStore, name: &str, d: usize, h: usize) -> [ParamId; 4] {
    [
        store.add(&format!("{name}.w1"), &[d, h], Init::FanIn(d)),
        store.add(&format!("{name}.b1"), &[1, h], Init::Zeros),
        store.add(&format!("{name}.w2"), &[h, d], Init::FanIn(h)),
        store.add(&format!("{name}.b2"), &[1, d], Init::Zeros),
    ]
}

impl CoarseNet {
    pub fn new(config: CoarseNetConfig, seed: u64) -> Result<Self, CoarseError> {
        config.validate()?;
        let c = &config;
        let (d, dk, h) = (c.embed_dim, c.d_k, c.ffn_hidden);
        let mut s = ParamStore::new(seed);
        let ids = Ids {
            patch_w: s.add("enc.patch_w", &[c.patch_dim(), d], Init::FanIn(c.patch_dim())),
            patch_b: s.add("enc.patch_b", &[1, d], Init::Zeros),
            pos: s.add("enc.pos", &[c.tokens(), d], Init::Uniform(0.1)),
            wk: s.add("kv.wk", &[d, dk], Init::FanIn(d)),
            bk: s.add("kv.bk", &[1, dk], Init::Zeros),
            wv: s.add("kv.wv", &[d, d], Init::FanIn(d)),
            bv: s.add("kv.bv", &[1, d], Init::Zeros),
            q_w1: s.add("query.w1", &[7, c.pose_embed_dim], Init::FanIn(7)),
            q_b1: s.add("query.b1", &[1, c.pose_embed_dim], Init::Zeros),
            q_w2: s.add("query.w2", &[c.pose_embed_dim, dk], Init::FanIn(c.pose_embed_dim)),
            q_b2: s.add("query.b2", &[1, dk], Init::Zeros),
            f1: ffn(&mut s, "ffn1", d, h),
            f2: ffn(&mut s, "ffn2", d, h),
            head_w: s.add("head.w", &[d, 7], Init::Uniform(1e-2 / (d as f64).sqrt())),
            head_b: s.add("head.b", &[1, 7], Init::Zeros),
            g_w1: s.add("wpm.w1", &[d, c.wpm_hidden], Init::FanIn(d)),
            g_b1: s.add("wpm.b1", &[1, c.wpm_hidden], Init::Zeros),
            g_w2: s.add("wpm.w2", &[c.wpm_hidden, 1], Init::FanIn(c.wpm_hidden)),
            g_b2: s.add("wpm.b2", &[1, 1], Init::Zeros),
        };
        s.get_mut(ids.head_b).data_mut().copy_from_slice(&HEAD_BIAS);
        Ok(Self { config, params: s, ids })
    }

    /// Rebuilds handles around loaded parameters, checking names and shapes.
    pub fn from_params(config: CoarseNetConfig, params: ParamStore) -> Result<Self, CoarseError> {
        let fresh = Self::new(config, 0)?;
        if params.len() != fresh.params.len() {
            return Err(CoarseError::Config(format!(
                "parameter file holds {} tensors, network expects {}",
                params.len(),
                fresh.params.len()
            )));
        }
        for i in 0..params.len() {
            let id = ParamId(i);
            let (a, b) = (params.get(id), fresh.params.get(id));
            if params.name(id) != fresh.params.name(id) || a.shape() != b.shape() {
                return Err(CoarseError::Config(format!(
                    "parameter {} ({:?}) does not match expected {} ({:?})",
                    params.name(id),
                    a.shape(),
                    fresh.params.name(id),
                    b.shape()
                )));
            }
        }
        Ok(Self {
            config: fresh.config,
            params,
            ids: fresh.ids,
        })
    }
}

/// Flattens an image into `[tokens, 3·p²]` patches, centered at zero.
pub fn patchify(img: &Image, cfg: &CoarseNetConfig) -> Result<Tensor, CoarseError> {
    if img.width != cfg.image_size || img.height != cfg.image_size {
        return Err(CoarseError::ImageSize {
            expected: cfg.image_size,
            width: img.width,
            height: img.height,
        });
    }
    let p = cfg.patch_size;
    let g = cfg.image_size / p;
    let mut data = Vec::with_capacity(cfg.tokens() * cfg.patch_dim());
    for gy in 0..g {
        for gx in 0..g {
            for y in 0..p {
                for x in 0..p {
                    let px = img.pixel(gx * p + x, gy * p + y);
                    data.extend(px.iter().map(|c| c - 0.5));
                }
            }
        }
    }
    Ok(Tensor::new(&[cfg.tokens(), cfg.patch_dim()], data)?)
}

/// Canonical `[1, 7]` pose input: quaternion with `w ≥ 0`, then translation.
pub fn pose_vector(pose: &Pose<f64>) -> Tensor {
    let q = pose.rotation.canonical();
    let t = pose.translation;
    Tensor::row(&[q.w, q.x, q.y, q.z, t.x, t.y, t.z])
}

/// The network's parameters pushed onto one tape.
pub(crate) struct Graph<'a> {
    pub tape: &'a mut Tape,
    vars: Vec<Var>,
    ids: &'a Ids,
}

/// Outputs of one candidate branch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CandidateVars {
    /// `[1, 4]` unit quaternion with `w ≥ 0`.
    pub quat: Var,
    /// `[1, 3]`.
    pub trans: Var,
    /// `[1, d]` mean-pooled features.
    pub pooled: Var,
    /// `[1, 1]` weight logit.
    pub logit: Var,
}

impl<'a> Graph<'a> {
    pub fn new(tape: &'a mut Tape, net: &'a CoarseNet) -> Self {
        let vars = net.params.bind(tape);
        Self {
            tape,
            vars,
            ids: &net.ids,
        }
    }

    pub fn bound(&self) -> &[Var] {
        &self.vars
    }

    /// Uses caller-provided vars (e.g. from a gradient checker) for the parameters.
    pub fn with_vars(tape: &'a mut Tape, net: &'a CoarseNet, vars: Vec<Var>) -> Self {
        Self {
            tape,
            vars,
            ids: &net.ids,
        }
    }

    fn v(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// `patches → linear → layer norm`, plus the learned position embedding.
    pub fn encode(&mut self, patches: Tensor) -> Result<Var, NnError> {
        let x = self.tape.constant(patches);
        let e = self.tape.linear(x, self.v(self.ids.patch_w), self.v(self.ids.patch_b))?;
        let n = self.tape.layer_norm(e)?;
        self.tape.add(n, self.v(self.ids.pos))
    }

    /// Key and value projections of one token set.
    pub fn project_kv(&mut self, tokens: Var) -> Result<(Var, Var), NnError> {
        let k = self.tape.linear(tokens, self.v(self.ids.wk), self.v(self.ids.bk))?;
        let v = self.tape.linear(tokens, self.v(self.ids.wv), self.v(self.ids.bv))?;
        Ok((k, v))
    }

    pub fn query(&mut self, pose7: Tensor) -> Result<Var, NnError> {
        let x = self.tape.constant(pose7);
        let h = self.tape.linear(x, self.v(self.ids.q_w1), self.v(self.ids.q_b1))?;
        let h = self.tape.relu(h);
        self.tape.linear(h, self.v(self.ids.q_w2), self.v(self.ids.q_b2))
    }

    fn ffn(&mut self, x: Var, ids: [ParamId; 4]) -> Result<Var, NnError> {
        let h = self.tape.linear(x, self.v(ids[0]), self.v(ids[1]))?;
        let h = self.tape.relu(h);
        self.tape.linear(h, self.v(ids[2]), self.v(ids[3]))
    }

    /// One candidate from the query and the target/source key-value rows.
    ///
    /// `K` and `V` are the row concatenations `[target; source]`.
    pub fn candidate(&mut self, q: Var, target_kv: (Var, Var), source_kv: (Var, Var)) -> Result<CandidateVars, NnError> {
        let k = self.tape.concat_rows(&[target_kv.0, source_kv.0])?;
        let v = self.tape.concat_rows(&[target_kv.1, source_kv.1])?;
        let a = self.tape.attention(q, k, v)?;
        let f1 = self.ffn(a, self.ids.f1)?;
        let v1 = self.tape.add_row(v, f1)?;
        let v2 = self.ffn(v1, self.ids.f2)?;
        let pooled = self.tape.mean(v2, Axis::Rows)?;
        let out = self.tape.linear(pooled, self.v(self.ids.head_w), self.v(self.ids.head_b))?;
        let raw_q = self.tape.slice_cols(out, 0, 4)?;
        let trans = self.tape.slice_cols(out, 4, 3)?;
        let n = self.tape.norm(raw_q);
        let unit = self.tape.div_scalar(raw_q, n)?;
        let quat = if self.tape.value(unit).data()[0] < 0.0 {
            self.tape.scale(unit, -1.0)
        } else {
            unit
        };
        let logit = self.weight_logit(pooled)?;
        Ok(CandidateVars {
            quat,
            trans,
            pooled,
            logit,
        })
    }

    /// Weight predictor: MLP from pooled features to one logit.
    pub fn weight_logit(&mut self, pooled: Var) -> Result<Var, NnError> {
        let h = self.tape.linear(pooled, self.v(self.ids.g_w1), self.v(self.ids.g_b1))?;
        let h = self.tape.relu(h);
        self.tape.linear(h, self.v(self.ids.g_w2), self.v(self.ids.g_b2))
    }
}
