//! Single-pixel-camera style demo on a grayscale image.
//!
//! The image is center-cropped to power-of-two sides, projected on the
//! separable 2D DCT and hard-thresholded to its `S` largest coefficients.
//! That thresholded image is the ground truth: it is exactly sparse, so a
//! successful decode reproduces it, and its distance to the original is the
//! best error any `S`-term approximation in this basis can reach.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, write_json_file, TimingSummary};
use crate::engine::{normalized_mse, reconstruct_parallel};
use crate::error::{Error, Result};
use crate::matrix::{Basis, KroneckerBasis};
use crate::permutation::balanced_oracle;
use crate::sensing::{build_measurement_matrix_with, encode, BlockDiagonalSensing, SensingBlock};
use crate::solver::{BasisPursuitConfig, SolveStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    /// Segments `M`; must divide both the pixel count and `measurements`.
    pub segments: usize,
    /// Total measurement count `K`.
    pub measurements: usize,
    /// DCT coefficients kept in the ground truth.
    pub kept: usize,
    pub seed: u64,
    /// Longest side after cropping; rounded down to a power of two.
    pub max_side: usize,
    pub workers: usize,
    pub solver: BasisPursuitConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            segments: 16,
            measurements: 1536,
            kept: 256,
            seed: 2016,
            max_side: 64,
            workers: 1,
            solver: BasisPursuitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub height: usize,
    pub width: usize,
    pub segments: usize,
    pub measurements: usize,
    pub kept: usize,
    pub seed: u64,
    /// Reconstruction against the thresholded ground truth.
    pub mse_vs_truth: f64,
    /// Reconstruction against the cropped original.
    pub mse_vs_original: f64,
    /// Thresholded ground truth against the cropped original.
    pub threshold_floor: f64,
    pub segment_status: Vec<SolveStatus>,
    pub timing: TimingSummary,
    pub image_out: Option<PathBuf>,
}

fn floor_pow2(v: usize) -> usize {
    if v == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - v.leading_zeros())
    }
}

/// Center crop of a row-major image to power-of-two sides of at most
/// `max_side`.
pub fn center_crop(pixels: &[f64], height: usize, width: usize, max_side: usize) -> Result<(Vec<f64>, usize, usize)> {
    if pixels.len() != height * width {
        return Err(Error::InvalidArgument(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let h = floor_pow2(height.min(max_side));
    let w = floor_pow2(width.min(max_side));
    if h == 0 || w == 0 {
        return Err(Error::Empty("image after cropping"));
    }
    let (top, left) = ((height - h) / 2, (width - w) / 2);
    let mut out = Vec::with_capacity(h * w);
    for r in top..top + h {
        out.extend_from_slice(&pixels[r * width + left..r * width + left + w]);
    }
    Ok((out, h, w))
}

/// Keeps the `s` largest-magnitude entries (ties by index), zeroing the rest.
pub fn hard_threshold(theta: &[f64], s: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; theta.len()];
    for &i in order.iter().take(s) {
        out[i] = theta[i];
    }
    out
}

/// Runs the demo on an in-memory image with values in `[0, 1]`. Returns the
/// report and the reconstructed pixels of the cropped image.
pub fn demo_from_pixels(
    pixels: &[f64],
    height: usize,
    width: usize,
    cfg: &DemoConfig,
) -> Result<(DemoReport, Vec<f64>, usize, usize)> {
    let (x, h, w) = center_crop(pixels, height, width, cfg.max_side)?;
    let n = h * w;
    let m = cfg.segments;
    if m == 0 || n % m != 0 || cfg.measurements % m != 0 || cfg.measurements == 0 {
        return Err(Error::Config(format!(
            "{m} segments must divide both {n} pixels and K = {}",
            cfg.measurements
        )));
    }
    if cfg.kept == 0 || cfg.kept > n {
        return Err(Error::Config(format!("kept must lie in 1..={n}")));
    }
    if cfg.workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }

    let psi = KroneckerBasis::dct_2d(h, w)?;
    let theta = hard_threshold(&psi.analyze(&x)?, cfg.kept);
    let truth = psi.synthesize(&theta)?;
    let support: Vec<usize> = (0..n).filter(|&i| theta[i] != 0.0).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[n as u64, m as u64]));
    let a0 = SensingBlock::gaussian(cfg.measurements / m, n / m, &mut rng)?;
    let sensing = BlockDiagonalSensing::repeated(a0, m)?.with_seed(Some(cfg.seed));
    let p = balanced_oracle(&support, n, m, &mut rng)?;
    let phi = build_measurement_matrix_with(&sensing, Some(&p), &psi)?;
    let y = encode(&phi, &truth)?;

    let report = reconstruct_parallel(&sensing, &y, Some(&p), Some(&psi), &cfg.solver, cfg.workers)?;
    let x_hat = report.x_hat.clone().expect("basis was supplied").into_inner();
    let demo = DemoReport {
        height: h,
        width: w,
        segments: m,
        measurements: cfg.measurements,
        kept: cfg.kept,
        seed: cfg.seed,
        mse_vs_truth: normalized_mse(&truth, &x_hat)?,
        mse_vs_original: normalized_mse(&x, &x_hat)?,
        threshold_floor: normalized_mse(&x, &truth)?,
        segment_status: report.per_segment_status.clone(),
        timing: TimingSummary {
            t_total: report.t_total,
            t_average: report.t_average,
            t_worst: report.t_worst,
            t_wall: report.t_wall,
        },
        image_out: None,
    };
    Ok((demo, x_hat, h, w))
}

pub fn load_grayscale(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
    Ok((pixels, h as usize, w as usize))
}

pub fn save_grayscale(path: &Path, pixels: &[f64], height: usize, width: usize) -> Result<()> {
    let img = GrayImage::from_fn(width as u32, height as u32, |c, r| {
        let v = pixels[r as usize * width + c as usize];
        Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    img.save(path)?;
    Ok(())
}

/// Reads `image_path`, runs the demo and writes `reconstruction.png` and
/// `report.json` into `out_dir`.
pub fn demo_image(image_path: &Path, cfg: &DemoConfig, out_dir: &Path) -> Result<DemoReport> {
    let (pixels, h, w) = load_grayscale(image_path)?;
    let (mut report, x_hat, ch, cw) = demo_from_pixels(&pixels, h, w, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let png = out_dir.join("reconstruction.png");
    save_grayscale(&png, &x_hat, ch, cw)?;
    report.image_out = Some(png);
    write_json_file(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Deterministic 64x64 test scene: smooth shading, a bright disc and a dark
/// bar. Compressible in the DCT but not sparse.
pub fn synthetic_scene(height: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let (y, x) = (r as f64 / height as f64, c as f64 / width as f64);
            let mut v = 0.35 + 0.25 * (3.0 * x).sin() * (2.0 * y).cos() + 0.15 * y;
            if (x - 0.6).powi(2) + (y - 0.4).powi(2) < 0.04 {
                v += 0.3;
            }
            if (0.15..0.25).contains(&x) && y > 0.3 {
                v -= 0.25;
            }
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}
