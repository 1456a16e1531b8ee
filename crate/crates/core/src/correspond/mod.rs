//! 2D–2D correspondences between a render and a target image.

mod harris;
mod oracle;

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use harris::{
    detect_and_describe, harris_response, match_features, match_images, refine_positions, Features, Keypoint, MatcherConfig,
};
pub use oracle::{oracle_from_depth, oracle_matches};

#[derive(Debug, Error)]
pub enum CorrespondError {
    #[error("only {found} matches, need at least {needed}")]
    InsufficientMatches { found: usize, needed: usize },
    #[error("image has no depth channel")]
    MissingDepth,
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Matched pixels: `p` in the rendered image, `q` in the target image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Vector2<f64>, Vector2<f64>)>,
    /// Match confidence in `[0, 1]`.
    pub scores: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same matches with the roles of the two images exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(p, q)| (q, p)).collect(),
            scores: self.scores.clone(),
        }
    }

    /// Writes `p_x,p_y,q_x,q_y,score` rows with a header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), CorrespondError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["p_x", "p_y", "q_x", "q_y", "score"])?;
        for ((p, q), s) in self.pairs.iter().zip(&self.scores) {
            w.write_record(&[p.x, p.y, q.x, q.y, *s].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, CorrespondError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut out = Self::default();
        for rec in r.deserialize() {
            let (px, py, qx, qy, s): (f64, f64, f64, f64, f64) = rec?;
            out.pairs.push((Vector2::new(px, py), Vector2::new(qx, qy)));
            out.scores.push(s);
        }
        Ok(out)
    }
}
