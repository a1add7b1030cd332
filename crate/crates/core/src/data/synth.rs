//! Synthetic scene generator: bright axis-aligned rectangles ("billboards")
//! over a textured background, with the exact rendered footprint as the mask.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};

/// Synthetic dataset parameters. Defaults produce scenes in model space so
/// the loader's resize step is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    /// `(height, width)` of generated scenes.
    pub image_size: (usize, usize),
    /// Inclusive range of rectangles per scene.
    pub rect_count_range: (usize, usize),
    /// Each rectangle's pixel-area fraction of the scene, inclusive bounds.
    pub rect_area_fraction: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 100,
            image_size: (200, 200),
            rect_count_range: (1, 3),
            rect_area_fraction: (0.02, 0.25),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("synth count must be >= 1".into()));
        }
        let (h, w) = self.image_size;
        if h < 8 || w < 8 {
            return Err(Error::Config(format!("image size {h}x{w} too small")));
        }
        let (lo, hi) = self.rect_count_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "rect count range [{lo}, {hi}] invalid"
            )));
        }
        let (fmin, fmax) = self.rect_area_fraction;
        if !(fmin > 0.0 && fmin <= fmax && fmax < 1.0) {
            return Err(Error::Config(format!(
                "rect area fraction [{fmin}, {fmax}] outside (0, 1)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct RectPx {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl RectPx {
    #[cfg(test)]
    fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }
}

/// Writes `count` image/mask PNG pairs under `out_dir/images` and
/// `out_dir/masks`, plus a `manifest.csv`, and returns the manifest.
/// Output bytes are a pure function of the config.
pub fn generate_synthetic(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    for dir in [out_dir, &images_dir, &masks_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut entries = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let (img, mask, _) = render_scene(&mut rng, config);
        let img_rel = format!("images/img_{i:05}.png");
        let mask_rel = format!("masks/mask_{i:05}.png");
        let img_path = out_dir.join(&img_rel);
        let mask_path = out_dir.join(&mask_rel);
        img.save(&img_path).map_err(|e| Error::image(&img_path, e))?;
        mask.save(&mask_path).map_err(|e| Error::image(&mask_path, e))?;
        entries.push(ManifestEntry {
            image: img_rel,
            mask: mask_rel,
        });
    }

    let manifest = DatasetManifest::from_entries("synthetic", out_dir, entries)?;
    manifest.write(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Renders one scene and its ground-truth mask from a single rasterization,
/// so the mask equals the rendered rectangle footprint pixel-for-pixel.
pub(crate) fn render_scene(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
) -> (RgbImage, GrayImage, Vec<RectPx>) {
    let (h, w) = config.image_size;
    let (w32, h32) = (w as u32, h as u32);

    // textured background: smooth two-color gradient plus per-pixel noise
    let c0: [i32; 3] = [rng.gen_range(20..120), rng.gen_range(20..120), rng.gen_range(20..120)];
    let c1: [i32; 3] = [rng.gen_range(20..120), rng.gen_range(20..120), rng.gen_range(20..120)];
    let horizontal: bool = rng.gen();
    let mut img = RgbImage::new(w32, h32);
    for y in 0..h32 {
        for x in 0..w32 {
            let t = if horizontal {
                x as f64 / (w32 - 1).max(1) as f64
            } else {
                y as f64 / (h32 - 1).max(1) as f64
            };
            let noise: i32 = rng.gen_range(-12..=12);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = c0[c] as f64 + (c1[c] - c0[c]) as f64 * t;
                px[c] = (v as i32 + noise).clamp(0, 255) as u8;
            }
            img.put_pixel(x, y, Rgb(px));
        }
    }

    let total = (w * h) as f64;
    let min_px = (config.rect_area_fraction.0 * total).ceil() as u32;
    let max_px = (config.rect_area_fraction.1 * total).floor() as u32;
    let n_rects = rng.gen_range(config.rect_count_range.0..=config.rect_count_range.1);

    let mut rects = Vec::with_capacity(n_rects);
    let mut mask = GrayImage::new(w32, h32);
    for _ in 0..n_rects {
        let (rw, rh) = rect_dims(rng, min_px, max_px, w32, h32);
        let x = rng.gen_range(0..=w32 - rw);
        let y = rng.gen_range(0..=h32 - rh);
        let rect = RectPx { x, y, w: rw, h: rh };

        let fill: [u8; 3] = [
            rng.gen_range(170..=255),
            rng.gen_range(170..=255),
            rng.gen_range(170..=255),
        ];
        let border: [u8; 3] = [
            rng.gen_range(30..=120),
            rng.gen_range(30..=120),
            rng.gen_range(30..=120),
        ];
        let border_px = if rw >= 8 && rh >= 8 { 2 } else { 0 };
        for py in y..y + rh {
            for px_ in x..x + rw {
                let on_border = border_px > 0
                    && (px_ < x + border_px
                        || px_ >= x + rw - border_px
                        || py < y + border_px
                        || py >= y + rh - border_px);
                let base = if on_border { border } else { fill };
                let noise: i32 = rng.gen_range(-8..=8);
                let mut out = [0u8; 3];
                for c in 0..3 {
                    out[c] = (base[c] as i32 + noise).clamp(0, 255) as u8;
                }
                img.put_pixel(px_, py, Rgb(out));
                mask.put_pixel(px_, py, Luma([255]));
            }
        }
        rects.push(rect);
    }

    (img, mask, rects)
}

/// Rectangle dimensions whose pixel area lands inside `[min_px, max_px]`
/// after integer rounding.
fn rect_dims(rng: &mut ChaCha8Rng, min_px: u32, max_px: u32, max_w: u32, max_h: u32) -> (u32, u32) {
    for _ in 0..64 {
        let target = rng.gen_range(min_px..=max_px) as f64;
        let aspect = rng.gen_range(0.5..2.0);
        let w = ((target * aspect).sqrt().round() as u32).clamp(1, max_w);
        let h = ((target / w as f64).round() as u32).clamp(1, max_h);
        if (min_px..=max_px).contains(&(w * h)) {
            return (w, h);
        }
    }
    // square fallback; always representable for sane configs
    let w = ((min_px as f64).sqrt().ceil() as u32).clamp(1, max_w);
    let h = (min_px.div_ceil(w)).clamp(1, max_h);
    (w, h)
}
