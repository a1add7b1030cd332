//! Dataset manifests and image/mask ingestion.
//!
//! A manifest is a CSV with header `image,mask`, one pair per row; relative
//! paths resolve against the manifest's directory. Images are decoded from
//! PNG (any size), bilinearly resized to model space, and scaled to `[0,1]`;
//! masks are nearest-neighbor resized and binarized at 8-bit luminance 128.

mod synth;

pub use synth::{generate_synthetic, SynthConfig};

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default model-space size `(height, width)` samples are resized to.
pub const MODEL_INPUT: (usize, usize) = (200, 200);

/// Mask pixels with luminance at or above this value binarize to 1.
pub const MASK_LUMA_THRESHOLD: u8 = 128;

/// One training/evaluation pair in model space.
#[derive(Debug, Clone)]
pub struct SamplePair<S> {
    /// RGB image, shape `[3, H, W]`, values in `[0, 1]`.
    pub image: Tensor<S>,
    /// Ground-truth mask, shape `[1, H, W]`, values in `{0, 1}`.
    pub mask: BinaryMask<S>,
    /// Identifier derived from the image file stem.
    pub source_id: String,
}

/// One manifest row, stored exactly as written in the CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: String,
    pub mask: String,
}

/// File-backed index of a dataset split.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    split_name: String,
    base_dir: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest in memory, rejecting duplicate image paths.
    pub fn from_entries(
        split_name: impl Into<String>,
        base_dir: impl Into<PathBuf>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self> {
        let base_dir = base_dir.into();
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image.clone()) {
                return Err(Error::Manifest {
                    path: base_dir.clone(),
                    detail: format!("duplicate image path `{}`", e.image),
                });
            }
        }
        Ok(DatasetManifest {
            split_name: split_name.into(),
            base_dir,
            entries,
        })
    }

    /// Reads and validates a manifest CSV: header `image,mask`, at least one
    /// row, no duplicate image paths, and every referenced file present.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
        let headers = reader.headers().map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "image" || &headers[1] != "mask" {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("expected header `image,mask`, got {headers:?}"),
            });
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    detail: format!("row {} does not have 2 fields", entries.len() + 2),
                });
            }
            entries.push(ManifestEntry {
                image: record[0].to_string(),
                mask: record[1].to_string(),
            });
        }
        if entries.is_empty() {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                detail: "manifest has no entries".into(),
            });
        }
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let split_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        let manifest = DatasetManifest::from_entries(split_name, base_dir, entries)?;
        for i in 0..manifest.len() {
            let (img, mask) = manifest.resolved(i);
            for p in [&img, &mask] {
                if !p.exists() {
                    return Err(Error::Manifest {
                        path: path.to_path_buf(),
                        detail: format!("referenced file `{}` does not exist", p.display()),
                    });
                }
            }
        }
        Ok(manifest)
    }

    /// Writes the entries back out, verbatim, as `image,mask` CSV.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let emit = |e: csv::Error| Error::Manifest {
            path: path.to_path_buf(),
            detail: e.to_string(),
        };
        writer.write_record(["image", "mask"]).map_err(emit)?;
        for e in &self.entries {
            writer
                .write_record([e.image.as_str(), e.mask.as_str()])
                .map_err(emit)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn split_name(&self) -> &str {
        &self.split_name
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Absolute (or base-joined) paths of entry `i`.
    pub fn resolved(&self, i: usize) -> (PathBuf, PathBuf) {
        (self.resolve(&self.entries[i].image), self.resolve(&self.entries[i].mask))
    }

    fn resolve(&self, raw: &str) -> PathBuf {
        let p = Path::new(raw);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads entry `i` at the default model-space size.
    pub fn load_sample<S: Scalar>(&self, i: usize) -> Result<SamplePair<S>> {
        self.load_sample_to(i, MODEL_INPUT)
    }

    pub fn load_sample_to<S: Scalar>(&self, i: usize, size: (usize, usize)) -> Result<SamplePair<S>> {
        let (img, mask) = self.resolved(i);
        load_sample_to(&img, &mask, size)
    }

    /// New manifest over a sub-range of entries; used to carve train/eval
    /// splits out of one generated set.
    pub fn subset(&self, range: std::ops::Range<usize>, split_name: impl Into<String>) -> Result<Self> {
        DatasetManifest::from_entries(
            split_name,
            self.base_dir.clone(),
            self.entries[range].to_vec(),
        )
    }
}

/// Loads one image/mask pair at the default model-space size.
pub fn load_sample<S: Scalar>(image_path: &Path, mask_path: &Path) -> Result<SamplePair<S>> {
    load_sample_to(image_path, mask_path, MODEL_INPUT)
}

/// Loads one image/mask pair resized to `size` = `(height, width)`.
///
/// Pairs whose raw dimensions disagree are allowed (each side is resized
/// independently) but logged as a warning.
pub fn load_sample_to<S: Scalar>(
    image_path: &Path,
    mask_path: &Path,
    size: (usize, usize),
) -> Result<SamplePair<S>> {
    let img = image::open(image_path).map_err(|e| Error::image(image_path, e))?;
    let mask_img = image::open(mask_path).map_err(|e| Error::image(mask_path, e))?;
    if img.width() != mask_img.width() || img.height() != mask_img.height() {
        log::warn!(
            "image {} is {}x{} but mask {} is {}x{}; resizing each independently",
            image_path.display(),
            img.width(),
            img.height(),
            mask_path.display(),
            mask_img.width(),
            mask_img.height()
        );
    }

    let image = image_to_tensor(&img, size);
    let mask = mask_to_binary(&mask_img, size)?;
    let source_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sample".into());
    Ok(SamplePair {
        image,
        mask,
        source_id,
    })
}

/// Loads a standalone RGB image into model space (no mask required).
pub fn load_image_to<S: Scalar>(image_path: &Path, size: (usize, usize)) -> Result<Tensor<S>> {
    let img = image::open(image_path).map_err(|e| Error::image(image_path, e))?;
    Ok(image_to_tensor(&img, size))
}

fn image_to_tensor<S: Scalar>(img: &image::DynamicImage, size: (usize, usize)) -> Tensor<S> {
    let (h, w) = size;
    let rgb = img.to_rgb8();
    let rgb = if (rgb.width(), rgb.height()) == (w as u32, h as u32) {
        rgb
    } else {
        image::imageops::resize(&rgb, w as u32, h as u32, FilterType::Triangle)
    };
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let px = rgb.get_pixel(x as u32, y as u32)[c];
                data.push(S::from_f64_c(px as f64 / 255.0));
            }
        }
    }
    Tensor::new(vec![3, h, w], data).expect("image tensor shape")
}

fn mask_to_binary<S: Scalar>(
    img: &image::DynamicImage,
    size: (usize, usize),
) -> Result<BinaryMask<S>> {
    let (h, w) = size;
    let luma = img.to_luma8();
    let luma = if (luma.width(), luma.height()) == (w as u32, h as u32) {
        luma
    } else {
        image::imageops::resize(&luma, w as u32, h as u32, FilterType::Nearest)
    };
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let on = luma.get_pixel(x as u32, y as u32)[0] >= MASK_LUMA_THRESHOLD;
            data.push(if on { S::one() } else { S::zero() });
        }
    }
    BinaryMask::new(Tensor::new(vec![1, h, w], data)?)
}
