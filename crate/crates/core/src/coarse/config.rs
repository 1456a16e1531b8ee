use serde::{Deserialize, Serialize};

use super::CoarseError;

/// Shape of the pose regression network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseNetConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub d_k: usize,
    pub ffn_hidden: usize,
    pub n_views: usize,
    pub pose_embed_dim: usize,
    /// Hidden width of the weight predictor.
    pub wpm_hidden: usize,
}

impl Default for CoarseNetConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            embed_dim: 128,
            d_k: 128,
            ffn_hidden: 256,
            n_views: 16,
            pose_embed_dim: 128,
            wpm_hidden: 64,
        }
    }
}

impl CoarseNetConfig {
    /// Reduced widths that train in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            embed_dim: 64,
            d_k: 64,
            ffn_hidden: 128,
            n_views: 16,
            pose_embed_dim: 64,
            wpm_hidden: 32,
        }
    }

    pub fn tokens(&self) -> usize {
        let g = self.image_size / self.patch_size;
        g * g
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<(), CoarseError> {
        let dims = [
            self.image_size,
            self.patch_size,
            self.embed_dim,
            self.d_k,
            self.ffn_hidden,
            self.n_views,
            self.pose_embed_dim,
            self.wpm_hidden,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(CoarseError::Config("all network dimensions must be positive".into()));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(CoarseError::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Passes over the training pool.
    pub n_epochs: usize,
    /// Rendered training targets, drawn once per run.
    pub n_train: usize,
    pub batch: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` (cosine decay).
    pub lr_final_frac: f64,
    pub seed: u64,
    /// Brightness jitter amplitude on target images (`0.2` = ±20%).
    pub jitter: f64,
    /// Perturbation angles of training targets around the reference views.
    pub angle_range: [f64; 2],
    pub offset_range: [f64; 2],
    /// Targets are rendered this many times larger, then box-filtered.
    pub supersample: usize,
    /// Weight of the mean per-candidate loss next to the fused-pose loss.
    pub aux_weight: f64,
    /// Global gradient norm clip; `0` disables.
    pub clip_norm: f64,
    /// Reference views drawn per step (`0` uses all of them).
    pub views_per_step: usize,
}

/// The defaults are the seeded desk reference run: about five minutes on one
/// core for [`CoarseNetConfig::desk`] and 16 reference views.
impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_epochs: 3,
            n_train: 20000,
            batch: 16,
            lr: 3e-3,
            lr_final_frac: 0.05,
            seed: 7,
            jitter: 0.2,
            angle_range: [0.0, 50.0],
            offset_range: [-0.2, 0.2],
            supersample: 4,
            aux_weight: 0.5,
            clip_norm: 5.0,
            views_per_step: 4,
        }
    }
}
