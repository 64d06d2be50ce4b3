//! Image ingestion and synthetic dataset generation.
//!
//! Real data comes from a directory tree with `positive/` and `negative/`
//! subfolders of PNG/JPEG files. Every image is converted to grayscale
//! (BT.601 luma), bilinearly resized to 120x120 and scaled to `[0, 1]`.
//!
//! The synthetic generator produces a desk-scale stand-in task with the
//! same visual structure: smooth low-frequency backgrounds for the negative
//! class, plus localized high-frequency texture patches for the positive
//! class.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use ndarray::Array2;
use std::path::{Path, PathBuf};

/// Ingestion target geometry.
pub const IMAGE_SIZE: usize = 120;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleSource {
    File(PathBuf),
    Synthetic { index: usize },
}

/// One 120x120 grayscale image in `[0, 1]` with a binary label
/// (0 = negative, 1 = positive).
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Array2<f64>,
    pub label: usize,
    pub source: SampleSource,
}

/// Dataset provenance, recorded in experiment manifests.
#[derive(Debug, Clone, serde::Serialize)]
pub enum Provenance {
    Directory { root: String, skipped_files: usize },
    Synthetic { n_per_class: usize, seed: u64, difficulty: f64 },
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Count per label: `class_counts[0]` negatives, `class_counts[1]` positives.
    pub class_counts: [usize; 2],
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Write every sample as an 8-bit PNG for inspection.
    pub fn dump_png(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, s) in self.samples.iter().enumerate() {
            let (h, w) = s.image.dim();
            let mut img = image::GrayImage::new(w as u32, h as u32);
            for ((y, x), v) in s.image.indexed_iter() {
                img.put_pixel(x as u32, y as u32, image::Luma([(v * 255.0).round() as u8]));
            }
            let path = dir.join(format!("class{}_{:04}.png", s.label, i));
            img.save(&path).map_err(|e| Error::data(e.to_string()))?;
        }
        Ok(())
    }
}

/// Bilinear resize with corner-aligned sampling. Output values stay inside
/// the input range; an identity-size resize copies the input.
pub fn resize_bilinear(image: &Array2<f64>, out_h: usize, out_w: usize) -> Result<Array2<f64>> {
    let (h, w) = image.dim();
    if h < 2 || w < 2 {
        return Err(Error::dim(format!("resize_bilinear: input {h}x{w} is degenerate")));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize_bilinear: output dimensions must be positive"));
    }
    let scale = |out: usize, inp: usize| -> f64 {
        if out > 1 {
            (inp - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        }
    };
    let sy = scale(out_h, h);
    let sx = scale(out_w, w);
    let mut out = Array2::zeros((out_h, out_w));
    for oy in 0..out_h {
        let fy = oy as f64 * sy;
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ox as f64 * sx;
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = image[[y0, x0]] * (1.0 - tx) + image[[y0, x1]] * tx;
            let bot = image[[y1, x0]] * (1.0 - tx) + image[[y1, x1]] * tx;
            out[[oy, ox]] = top * (1.0 - ty) + bot * ty;
        }
    }
    Ok(out)
}

/// BT.601 luma from 8-bit RGB, scaled to `[0, 1]`.
fn luma(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn ingest_file(path: &Path) -> Result<Array2<f64>> {
    let img = image::open(path).map_err(|e| Error::data(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if w < 2 || h < 2 {
        return Err(Error::data(format!("{}: image too small", path.display())));
    }
    let gray = Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        let p = rgb.get_pixel(x as u32, y as u32);
        luma(p[0], p[1], p[2])
    });
    resize_bilinear(&gray, IMAGE_SIZE, IMAGE_SIZE)
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
    )
}

/// Load a labeled dataset from `root/positive` and `root/negative`.
///
/// Files are ingested in lexicographic path order; undecodable files are
/// skipped with a warning and counted in the provenance record.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut entries: Vec<(PathBuf, usize)> = Vec::new();
    for (sub, label) in [("negative", 0usize), ("positive", 1usize)] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            return Err(Error::data(format!(
                "dataset root {} is missing the `{sub}/` subfolder",
                root.display()
            )));
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_file() && is_image_file(&path) {
                entries.push((path, label));
            }
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));

    let mut samples = Vec::with_capacity(entries.len());
    let mut class_counts = [0usize; 2];
    let mut skipped = 0usize;
    for (path, label) in entries {
        match ingest_file(&path) {
            Ok(image) => {
                class_counts[label] += 1;
                samples.push(Sample { image, label, source: SampleSource::File(path) });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    Ok(Dataset {
        samples,
        class_counts,
        provenance: Provenance::Directory {
            root: root.display().to_string(),
            skipped_files: skipped,
        },
    })
}

/// Smooth background of a few random Gaussian bumps around mid-gray.
fn background(rng: &mut SplitMix64) -> Array2<f64> {
    let n = IMAGE_SIZE;
    let bumps = 3 + rng.next_index(3);
    let params: Vec<(f64, f64, f64, f64)> = (0..bumps)
        .map(|_| {
            let cy = rng.next_f64() * n as f64;
            let cx = rng.next_f64() * n as f64;
            let sigma = 18.0 + rng.next_f64() * 27.0;
            let amp = (rng.next_f64() - 0.5) * 0.5;
            (cy, cx, sigma, amp)
        })
        .collect();
    Array2::from_shape_fn((n, n), |(y, x)| {
        let mut v = 0.45;
        for &(cy, cx, sigma, amp) in &params {
            let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
            v += amp * (-d2 / (2.0 * sigma * sigma)).exp();
        }
        v
    })
}

/// Add localized windowed-grating "opacity" patches in place. Count, size
/// and contrast all shrink as `difficulty` grows.
fn add_patches(image: &mut Array2<f64>, rng: &mut SplitMix64, difficulty: f64) {
    let n = IMAGE_SIZE as f64;
    let contrast = 0.70 * (1.0 - difficulty) + 0.08 * difficulty;
    let base_count = (4.0 - 3.0 * difficulty).round() as usize;
    let count = base_count + rng.next_index(2);
    for _ in 0..count {
        let r_lo = 12.0 - 4.0 * difficulty;
        let r_span = 8.0 - 4.0 * difficulty;
        let radius = r_lo + rng.next_f64() * r_span;
        let cy = radius + rng.next_f64() * (n - 2.0 * radius);
        let cx = radius + rng.next_f64() * (n - 2.0 * radius);
        let theta = rng.next_f64() * std::f64::consts::PI;
        let freq = 0.18 + rng.next_f64() * 0.12;
        let phase = rng.next_f64() * std::f64::consts::TAU;
        let (sin_t, cos_t) = theta.sin_cos();
        let half_width = radius / 1.6;
        for ((y, x), v) in image.indexed_iter_mut() {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let d2 = dy * dy + dx * dx;
            if d2 > (3.0 * radius).powi(2) {
                continue;
            }
            let window = (-d2 / (2.0 * half_width * half_width)).exp();
            let u = dx * cos_t + dy * sin_t;
            let grating = (std::f64::consts::TAU * freq * u + phase).sin();
            *v += window * contrast * (0.4 + 0.6 * grating);
        }
    }
}

/// Generate `2 * n_per_class` samples (negatives first, then positives).
///
/// `difficulty` in `[0, 1]` scales the opacity patches down (fewer, smaller,
/// fainter): 0 is the easiest setting, 1 leaves them barely above the
/// background.
pub fn synthesize_dataset(n_per_class: usize, seed: u64, difficulty: f64) -> Result<Dataset> {
    if n_per_class < 2 {
        return Err(Error::config("synthesize_dataset: need at least 2 samples per class"));
    }
    let difficulty = difficulty.clamp(0.0, 1.0);
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for label in 0..2usize {
        for i in 0..n_per_class {
            let index = label * n_per_class + i;
            let mut rng = SplitMix64::new(derive_seed(seed, index as u64));
            let mut image = background(&mut rng);
            if label == 1 {
                add_patches(&mut image, &mut rng, difficulty);
            }
            image.mapv_inplace(|v| v.clamp(0.0, 1.0));
            samples.push(Sample {
                image,
                label,
                source: SampleSource::Synthetic { index },
            });
        }
    }
    Ok(Dataset {
        samples,
        class_counts: [n_per_class, n_per_class],
        provenance: Provenance::Synthetic { n_per_class, seed, difficulty },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = Array2::from_elem((6, 9), 0.37);
        let out = resize_bilinear(&img, 120, 120).unwrap();
        assert!(out.iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn resize_at_native_size_is_identity() {
        let mut rng = SplitMix64::new(3);
        let img = Array2::from_shape_fn((17, 23), |_| rng.next_f64());
        let out = resize_bilinear(&img, 17, 23).unwrap();
        assert!(img.iter().zip(out.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn resize_ramp_matches_hand_computed_interpolation() {
        // 2x2 [[0,1],[0,1]] widened to 2x4: columns sample at x = 0, 1/3, 2/3, 1.
        let img = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 2, 4).unwrap();
        for row in 0..2 {
            for (col, expect) in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].iter().enumerate() {
                assert!((out[[row, col]] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_preserves_range() {
        let mut rng = SplitMix64::new(8);
        let img = Array2::from_shape_fn((13, 11), |_| rng.next_f64() * 4.0 - 2.0);
        let (lo, hi) = img.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let out = resize_bilinear(&img, 40, 28).unwrap();
        assert!(out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn resize_rejects_degenerate_input() {
        let img = Array2::zeros((1, 5));
        assert!(resize_bilinear(&img, 10, 10).is_err());
    }

    #[test]
    fn synthesize_is_deterministic() {
        let a = synthesize_dataset(4, 9, 0.3).unwrap();
        let b = synthesize_dataset(4, 9, 0.3).unwrap();
        for (sa, sb) in a.samples.iter().zip(b.samples.iter()) {
            assert_eq!(sa.label, sb.label);
            assert!(sa
                .image
                .iter()
                .zip(sb.image.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn synthesize_counts_and_range() {
        let d = synthesize_dataset(50, 1, 0.0).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.class_counts, [50, 50]);
        for s in &d.samples {
            assert_eq!(s.image.dim(), (IMAGE_SIZE, IMAGE_SIZE));
            assert!(s.image.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()));
        }
    }

    #[test]
    fn synthesize_rejects_tiny_class() {
        assert!(synthesize_dataset(1, 0, 0.0).is_err());
    }

    #[test]
    fn load_dataset_from_directory_tree() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("positive")).unwrap();
        std::fs::create_dir(dir.path().join("negative")).unwrap();
        // Three decodable negatives, one undecodable file to skip.
        for i in 0..3 {
            let img = image::GrayImage::from_pixel(8, 8, image::Luma([(40 * i) as u8]));
            img.save(dir.path().join(format!("negative/n{i}.png"))).unwrap();
        }
        std::fs::write(dir.path().join("negative/broken.png"), b"not a png").unwrap();
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.class_counts, [3, 0]);
        assert_eq!(d.len(), 3);
        match &d.provenance {
            Provenance::Directory { skipped_files, .. } => assert_eq!(*skipped_files, 1),
            _ => panic!("wrong provenance"),
        }
        for s in &d.samples {
            assert_eq!(s.image.dim(), (IMAGE_SIZE, IMAGE_SIZE));
        }
    }

    #[test]
    fn load_dataset_requires_subfolders() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("positive")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn grayscale_input_round_trips_through_luma() {
        // Equal RGB channels: luma weights sum to 1, so the value survives.
        let g = 173u8;
        let v = luma(g, g, g);
        assert!((v - g as f64 / 255.0).abs() < 1e-12);
    }
}
