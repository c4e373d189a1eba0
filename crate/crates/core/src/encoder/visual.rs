//! Visual feature maps and the backbones that produce them.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, ParamStore, Tape, Var};
use crate::corpus::ReportCase;
use crate::error::{AtagError, Result};
use crate::nn::{init_linear, linear};

/// Row-major `(height · width) × dim` grid of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFeatureMap {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl VisualFeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let map = Self {
            height,
            width,
            dim,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn from_mat(height: usize, width: usize, m: &Mat) -> Result<Self> {
        if m.nrows() != height * width {
            return Err(AtagError::Shape(format!(
                "{} feature rows for a {height}x{width} grid",
                m.nrows()
            )));
        }
        Self::new(height, width, m.ncols(), m.iter().copied().collect())
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions() == 0 || self.dim == 0 {
            return Err(AtagError::Shape("feature map must have at least one position and one channel".into()));
        }
        if self.dim % 2 != 0 {
            return Err(AtagError::Shape(format!("feature dim {} is not even", self.dim)));
        }
        if self.data.len() != self.positions() * self.dim {
            return Err(AtagError::Shape(format!(
                "{} values for a {}x{}x{} feature map",
                self.data.len(),
                self.height,
                self.width,
                self.dim
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(AtagError::Numeric("visual feature map".into()));
        }
        Ok(())
    }

    pub fn to_mat(&self) -> Mat {
        Array2::from_shape_vec((self.positions(), self.dim), self.data.clone()).expect("validated shape")
    }
}

/// Grayscale image with intensities in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

/// Anything that turns a case into `(H·W) × 2D` features on a tape.
pub trait VisualBackbone {
    fn features(&self, tape: &Tape, params: &ParamStore, case: &ReportCase) -> Result<Var>;
}

/// Uses the features stored with each case.
#[derive(Debug, Clone, Copy, Default)]
pub struct Precomputed;

impl VisualBackbone for Precomputed {
    fn features(&self, tape: &Tape, _params: &ParamStore, case: &ReportCase) -> Result<Var> {
        let f = case.features.as_ref().ok_or_else(|| {
            AtagError::Precondition(format!("case `{}` carries no precomputed features", case.case_id))
        })?;
        f.validate()?;
        Ok(tape.constant(f.to_mat()))
    }
}

/// Loads a `case_id → feature map` table from a JSON object file and attaches
/// the maps to matching cases.
pub fn attach_precomputed(cases: &mut [ReportCase], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
    let table: BTreeMap<String, VisualFeatureMap> = serde_json::from_str(&text)?;
    let mut attached = 0;
    for case in cases.iter_mut() {
        if let Some(f) = table.get(&case.case_id) {
            f.validate()?;
            case.features = Some(f.clone());
            attached += 1;
        }
    }
    Ok(attached)
}

/// Three stride-2, 2×2 convolution blocks with tanh activations. An image of
/// `8H × 8W` pixels becomes an `H × W` grid of `out_dim` features.
#[derive(Debug, Clone)]
pub struct StubBackbone {
    pub channels: [usize; 4],
}

impl StubBackbone {
    pub const PREFIX: &'static str = "backbone";

    pub fn new(out_dim: usize) -> Self {
        Self {
            channels: [1, 8, 16, out_dim],
        }
    }

    pub fn init(&self, params: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for b in 0..3 {
            init_linear(
                params,
                rng,
                &format!("{}.conv{b}", Self::PREFIX),
                4 * self.channels[b],
                self.channels[b + 1],
            );
        }
    }

    /// Row-major indices that gather each 2×2 patch of an `h × w × c` map
    /// into one row of width `4c`.
    fn patch_indices(h: usize, w: usize, c: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(h * w * c);
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let pos = (2 * i + di) * w + (2 * j + dj);
                    idx.extend((0..c).map(|k| pos * c + k));
                }
            }
        }
        idx
    }

    pub fn forward(&self, tape: &Tape, params: &ParamStore, image: &GrayImage) -> Result<Var> {
        let (mut h, mut w) = (image.height, image.width);
        if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 || image.pixels.len() != h * w {
            return Err(AtagError::Shape(format!(
                "stub backbone needs a non-empty image with sides divisible by 8, got {h}x{w}"
            )));
        }
        if image.pixels.iter().any(|p| !p.is_finite()) {
            return Err(AtagError::Numeric("image pixels".into()));
        }
        let mut x = tape.constant(Array2::from_shape_vec((h * w, 1), image.pixels.clone()).expect("checked"));
        for b in 0..3 {
            let c = self.channels[b];
            let patches = tape.gather(x, ((h / 2) * (w / 2), 4 * c), Self::patch_indices(h, w, c));
            x = tape.tanh(linear(tape, params, &format!("{}.conv{b}", Self::PREFIX), patches));
            h /= 2;
            w /= 2;
        }
        Ok(x)
    }
}

impl VisualBackbone for StubBackbone {
    fn features(&self, tape: &Tape, params: &ParamStore, case: &ReportCase) -> Result<Var> {
        let image = case
            .image
            .as_ref()
            .ok_or_else(|| AtagError::Precondition(format!("case `{}` carries no image", case.case_id)))?;
        self.forward(tape, params, image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn validation() {
        assert!(VisualFeatureMap::new(2, 2, 2, vec![0.0; 8]).is_ok());
        assert!(VisualFeatureMap::new(2, 2, 3, vec![0.0; 12]).is_err());
        assert!(VisualFeatureMap::new(2, 2, 2, vec![0.0; 7]).is_err());
        assert!(matches!(
            VisualFeatureMap::new(1, 1, 2, vec![0.0, f64::NAN]),
            Err(AtagError::Numeric(_))
        ));
    }

    #[test]
    fn stub_output_shape() {
        let mut params = ParamStore::new();
        let bb = StubBackbone::new(6);
        bb.init(&mut params, &mut ChaCha8Rng::seed_from_u64(0));
        let image = GrayImage {
            height: 32,
            width: 16,
            pixels: (0..512).map(|i| (i as f64 * 0.01).sin()).collect(),
        };
        let tape = Tape::new();
        let f = bb.forward(&tape, &params, &image).unwrap();
        assert_eq!(tape.shape(f), (8, 6));
    }

    #[test]
    fn patches_follow_row_major_blocks() {
        // 2x4 single-channel map: two patches
        assert_eq!(StubBackbone::patch_indices(2, 4, 1), vec![0, 1, 4, 5, 2, 3, 6, 7]);
    }
}
