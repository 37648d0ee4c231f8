use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ImageBatch, Provenance};
use crate::autodiff::Matrix;
use crate::error::{CdganError, Result};
use crate::rng::Rng;

/// Sub-samples per pixel edge for anti-aliasing.
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Disc,
    Cross,
}

impl ShapeKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "square" => Some(ShapeKind::Square),
            "disc" => Some(ShapeKind::Disc),
            "cross" => Some(ShapeKind::Cross),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Disc => "disc",
            ShapeKind::Cross => "cross",
        }
    }

    /// Whether the offset `(u, v)` from the center lies inside a shape of radius `r`.
    /// Extents are tuned so the three shapes cover comparable areas.
    fn contains(self, u: f64, v: f64, r: f64) -> bool {
        match self {
            ShapeKind::Square => u.abs() <= 0.85 * r && v.abs() <= 0.85 * r,
            ShapeKind::Disc => u * u + v * v <= r * r,
            ShapeKind::Cross => {
                let t = 0.35 * r;
                (u.abs() <= r && v.abs() <= t) || (u.abs() <= t && v.abs() <= r)
            }
        }
    }
}

/// Generation parameters; also the manifest written beside exported datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeConfig {
    pub classes: Vec<ShapeKind>,
    pub n_per_class: usize,
    pub height: usize,
    pub width: usize,
    /// Shape radius as a fraction of half the shorter canvas side.
    pub scale_range: (f64, f64),
    /// Center offset in pixels, drawn independently for x and y.
    pub jitter_range: (f64, f64),
    pub seed: u64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            classes: vec![ShapeKind::Square, ShapeKind::Disc, ShapeKind::Cross],
            n_per_class: 300,
            height: 16,
            width: 16,
            scale_range: (0.6, 0.8),
            jitter_range: (-1.0, 1.0),
            seed: 0,
        }
    }
}

impl ShapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(CdganError::validation(format!(
                "canvas must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.classes.is_empty() || self.n_per_class == 0 {
            return Err(CdganError::validation("need at least one class and one image per class"));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(CdganError::validation(format!("scale range ({lo}, {hi}) must lie in (0, 1]")));
        }
        let (jlo, jhi) = self.jitter_range;
        if !(jlo <= jhi) || !jlo.is_finite() || !jhi.is_finite() {
            return Err(CdganError::validation(format!("jitter range ({jlo}, {jhi}) is invalid")));
        }
        let half = self.height.min(self.width) as f64 / 2.0;
        let reach = hi * half + jlo.abs().max(jhi.abs());
        if reach > half {
            return Err(CdganError::validation(format!(
                "shape would exceed the canvas: radius {:.2} plus jitter {:.2} > {half}",
                hi * half,
                jlo.abs().max(jhi.abs())
            )));
        }
        Ok(())
    }
}

fn render(kind: ShapeKind, h: usize, w: usize, cx: f64, cy: f64, r: f64, out: &mut [f32]) {
    let step = 1.0 / SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) * step;
                    let py = y as f64 + (sy as f64 + 0.5) * step;
                    hits += usize::from(kind.contains(px - cx, py - cy, r));
                }
            }
            out[y * w + x] = (2.0 * hits as f64 / total - 1.0) as f32;
        }
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// One white shape per image on a black canvas, `n_per_class` images per class
/// in class order. The label is the shape's position in `cfg.classes`.
pub fn gen_shapes(cfg: &ShapeConfig, rng: &mut Rng) -> Result<ImageBatch> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let n = cfg.n_per_class * cfg.classes.len();
    let half = h.min(w) as f64 / 2.0;
    let mut images = Matrix::zeros(n, h * w);
    let mut labels = Vec::with_capacity(n);
    for (c, &kind) in cfg.classes.iter().enumerate() {
        for _ in 0..cfg.n_per_class {
            let r = uniform(rng, cfg.scale_range) * half;
            let cx = w as f64 / 2.0 + uniform(rng, cfg.jitter_range);
            let cy = h as f64 / 2.0 + uniform(rng, cfg.jitter_range);
            let i = labels.len();
            render(kind, h, w, cx, cy, r, &mut images.as_mut_slice()[i * h * w..(i + 1) * h * w]);
            labels.push(c);
        }
    }
    Ok(ImageBatch {
        images,
        labels: Some(labels),
        height: h,
        width: w,
        provenance: Provenance::Synthetic,
    })
}

pub fn write_manifest(cfg: &ShapeConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(cfg)?;
    fs::write(path, text).map_err(|e| CdganError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn pixels_in_range_and_classes_balanced() {
        let cfg = ShapeConfig { n_per_class: 20, ..Default::default() };
        let b = gen_shapes(&cfg, &mut seeded(1)).unwrap();
        assert!(b.images.as_slice().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let labels = b.labels.unwrap();
        for c in 0..3 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 20);
        }
        // every image has both background and foreground
        for i in 0..b.images.rows() {
            let row = b.images.row(i);
            assert!(row.contains(&-1.0) && row.contains(&1.0));
        }
    }

    #[test]
    fn fixed_factors_repeat_images() {
        let cfg = ShapeConfig {
            n_per_class: 4,
            scale_range: (0.6, 0.6),
            jitter_range: (0.0, 0.0),
            ..Default::default()
        };
        let b = gen_shapes(&cfg, &mut seeded(2)).unwrap();
        for c in 0..3 {
            let first = b.images.row(c * 4);
            for i in 1..4 {
                assert_eq!(b.images.row(c * 4 + i), first);
            }
        }
        assert_ne!(b.images.row(0), b.images.row(4));
        assert_ne!(b.images.row(4), b.images.row(8));
    }

    #[test]
    fn seed_determinism() {
        let cfg = ShapeConfig { n_per_class: 5, ..Default::default() };
        assert_eq!(gen_shapes(&cfg, &mut seeded(3)).unwrap(), gen_shapes(&cfg, &mut seeded(3)).unwrap());
    }

    #[test]
    fn oversized_shapes_are_rejected() {
        let cfg = ShapeConfig {
            scale_range: (0.9, 1.0),
            jitter_range: (-2.0, 2.0),
            ..Default::default()
        };
        assert!(matches!(gen_shapes(&cfg, &mut seeded(0)), Err(CdganError::Validation(_))));
        let tiny = ShapeConfig { height: 6, width: 6, ..Default::default() };
        assert!(gen_shapes(&tiny, &mut seeded(0)).is_err());
    }
}
