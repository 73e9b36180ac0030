//! Upright SIFT-style gradient histogram descriptor and its exact
//! quarter-turn steerer.
//!
//! Layout: a 16x16 sample grid around the keypoint at integer offsets
//! `{−8..−1, 1..8}` (symmetric under quarter turns), split into 4x4
//! subregions indexed row-major from the top-left, each holding an 8-bin
//! histogram of gradient orientations weighted by gradient magnitude. Entry
//! `(row * 4 + col) * 8 + bin` of the 128-vector holds that bin. Bin 0 covers
//! `[−22.5°, 22.5°)` measured anticlockwise from the x axis (y up).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::group_reps::Steerer;
use crate::image::GrayImage;
use crate::keypoints::{gradients, KeypointSet};

pub const PATCH: usize = 16;
pub const GRID: usize = 4;
pub const BINS: usize = 8;
pub const DIM: usize = GRID * GRID * BINS;

/// Sample offsets along one axis, ascending.
const OFFSETS: [i64; PATCH] = [-8, -7, -6, -5, -4, -3, -2, -1, 1, 2, 3, 4, 5, 6, 7, 8];
/// tan(22.5°)
const TAN_HALF_BIN: f64 = 0.414_213_562_373_095_1;

/// `D × N` descriptions, one column per keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    data: DMatrix<f64>,
    normalized: bool,
    degenerate: Vec<bool>,
}

impl DescriptorMatrix {
    /// Wrap raw data; `normalized` is set when every column has unit norm
    /// within 1e−9.
    pub fn new(data: DMatrix<f64>) -> Self {
        let normalized = data.column_iter().all(|c| (c.norm() - 1.0).abs() <= 1e-9);
        let n = data.ncols();
        Self {
            data,
            normalized,
            degenerate: vec![false; n],
        }
    }

    /// ℓ2-normalize every column. Zero columns are an error.
    pub fn normalized(data: DMatrix<f64>) -> Result<Self> {
        let mut data = data;
        for (i, mut col) in data.column_iter_mut().enumerate() {
            let n = col.norm();
            if n <= 0.0 || !n.is_finite() {
                return Err(Error::InvalidInput(format!("description column {i} has zero norm")));
            }
            col /= n;
        }
        let n = data.ncols();
        Ok(Self {
            data,
            normalized: true,
            degenerate: vec![false; n],
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Columns that were replaced by the uniform vector because the patch had
    /// no gradient.
    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    /// The first `n` columns.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            data: self.data.columns(0, n).clone_owned(),
            normalized: self.normalized,
            degenerate: self.degenerate[..n].to_vec(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        Self {
            data: self.data.select_columns(idx.iter()),
            normalized: self.normalized,
            degenerate: idx.iter().map(|&i| self.degenerate[i]).collect(),
        }
    }
}

/// Orientation bin of a nonzero gradient, computed by exact quarter-turn
/// reduction so that rotating the gradient by 90° shifts the bin by exactly 2.
fn orientation_bin(gx: f64, gy: f64) -> usize {
    // rotate clockwise by quarter turns until the vector lies in [−45°, 45°)
    let (mut u, mut v) = (gx, gy);
    let mut q = 0;
    while !(u > 0.0 && -u <= v && v < u) {
        let (nu, nv) = (v, -u);
        u = nu;
        v = nv;
        q += 1;
        debug_assert!(q < 4);
    }
    let offset: i64 = if v < -TAN_HALF_BIN * u {
        -1
    } else if v < TAN_HALF_BIN * u {
        0
    } else {
        1
    };
    (2 * q as i64 + offset).rem_euclid(BINS as i64) as usize
}

/// Unnormalized histograms, one column per keypoint.
pub fn describe_raw(img: &GrayImage, kps: &KeypointSet) -> Result<DMatrix<f64>> {
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = gradients(img);
    let mut out = DMatrix::<f64>::zeros(DIM, kps.len());
    for (k, (x, y)) in kps.iter().enumerate() {
        for (iy, &oy) in OFFSETS.iter().rev().enumerate() {
            let sub_row = iy / GRID;
            for (ix, &ox) in OFFSETS.iter().enumerate() {
                let sub_col = ix / GRID;
                let (pc, pr) = img.to_pixel(x + ox as f64, y + oy as f64);
                let (c, r) = (pc.round(), pr.round());
                if c < 0.0 || r < 0.0 || c > (w - 1) as f64 || r > (h - 1) as f64 {
                    return Err(Error::InvalidInput(format!(
                        "keypoint {k} at ({x:.2}, {y:.2}) is too close to the border for a {PATCH}x{PATCH} patch"
                    )));
                }
                let i = r as usize * w + c as usize;
                let (dx, dy) = (gx[i], gy[i]);
                let mag = (dx * dx + dy * dy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let bin = orientation_bin(dx, dy);
                out[((sub_row * GRID + sub_col) * BINS + bin, k)] += mag;
            }
        }
    }
    Ok(out)
}

/// Upright SIFT-style descriptions with unit-norm columns. A patch without
/// any gradient yields the uniform unit vector and is flagged as degenerate.
pub fn describe(img: &GrayImage, kps: &KeypointSet) -> Result<DescriptorMatrix> {
    let mut data = describe_raw(img, kps)?;
    let mut degenerate = vec![false; kps.len()];
    let uniform = 1.0 / (DIM as f64).sqrt();
    for (i, mut col) in data.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 {
            col.fill(uniform);
            degenerate[i] = true;
            log::warn!("keypoint {i}: degenerate patch without gradients");
        } else {
            col /= n;
        }
    }
    Ok(DescriptorMatrix {
        data,
        normalized: true,
        degenerate,
    })
}

/// Index into the 128-vector.
pub fn descriptor_index(row: usize, col: usize, bin: usize) -> usize {
    (row * GRID + col) * BINS + bin
}

/// The exact steerer of [`describe`] under an anticlockwise quarter turn:
/// subregion `(r, c)` moves to `(3 − c, r)` and every orientation bin shifts
/// by two.
pub fn upsift_steerer() -> Steerer {
    let mut p = DMatrix::<f64>::zeros(DIM, DIM);
    for r in 0..GRID {
        for c in 0..GRID {
            for b in 0..BINS {
                let src = descriptor_index(r, c, b);
                let dst = descriptor_index(GRID - 1 - c, r, (b + 2) % BINS);
                p[(dst, src)] = 1.0;
            }
        }
    }
    Steerer::new(p, 4).expect("permutation matrix is a valid steerer")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_reps::{steerer_power, verify_representation, PlanarRotation};
    use crate::image::{noise_image, rotate_image_quarter};
    use crate::keypoints::{detect_keypoints, rotate_keypoints};

    #[test]
    fn bins_shift_by_two_under_quarter_turn() {
        let samples = [(1.0, 0.0), (1.0, 0.3), (0.2, 1.0), (-3.0, -1e-9), (0.5, -0.5), (1.0, 0.41421356)];
        for &(x, y) in &samples {
            let b = orientation_bin(x, y);
            assert_eq!(orientation_bin(-y, x), (b + 2) % 8);
            let angle = y.atan2(x).to_degrees();
            let expected = (((angle + 22.5) / 45.0).floor() as i64).rem_euclid(8) as usize;
            if ((angle + 22.5) / 45.0).fract().abs() > 1e-6 {
                assert_eq!(b, expected, "({x}, {y}) at {angle}°");
            }
        }
    }

    #[test]
    fn dimension_is_128() {
        assert_eq!(DIM, 128);
        let img = noise_image(32, 1);
        let kps = KeypointSet::from_points(&[(0.5, 0.5)]);
        assert_eq!(describe(&img, &kps).unwrap().dim(), 128);
    }

    #[test]
    fn constant_patch_is_degenerate() {
        let img = GrayImage::filled(32, 32, 0.4).unwrap();
        let kps = KeypointSet::from_points(&[(0.5, -0.5)]);
        let d = describe(&img, &kps).unwrap();
        assert_eq!(d.degenerate(), &[true]);
        assert!((d.data().column(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertical_step_edge_fills_horizontal_bins() {
        // dark left half, bright right half: gradient points along +x
        let n = 32;
        let px: Vec<f64> = (0..n * n).map(|i| if i % n >= n / 2 { 1.0 } else { 0.0 }).collect();
        let img = GrayImage::new(n, n, px).unwrap();
        let kps = KeypointSet::from_points(&[img.to_centered(15.0, 15.0)]);
        let raw = describe_raw(&img, &kps).unwrap();
        // reference: only columns 15 and 16 have gradient 0.5, both in bin 0
        let mut expected = DMatrix::<f64>::zeros(DIM, 1);
        for (iy, _) in OFFSETS.iter().rev().enumerate() {
            for (ix, &ox) in OFFSETS.iter().enumerate() {
                let c = 15 + ox;
                if c == 15 || c == 16 {
                    expected[(descriptor_index(iy / 4, ix / 4, 0), 0)] += 0.5;
                }
            }
        }
        assert_eq!(raw, expected);
        let total: f64 = raw.iter().sum();
        let horizontal: f64 = (0..16).map(|s| raw[(s * 8, 0)] + raw[(s * 8 + 4, 0)]).sum();
        assert_eq!(total, horizontal);
    }

    #[test]
    fn border_keypoints_are_rejected() {
        let img = noise_image(32, 2);
        let kps = KeypointSet::from_points(&[img.to_centered(7.0, 16.0)]);
        assert!(describe(&img, &kps).is_err());
        let kps = KeypointSet::from_points(&[img.to_centered(8.0, 8.0)]);
        assert!(describe(&img, &kps).is_ok());
    }

    #[test]
    fn steerer_is_order_four_permutation() {
        let p = upsift_steerer();
        assert_eq!(verify_representation(&p), 0.0);
        for col in p.matrix().column_iter() {
            assert_eq!(col.iter().filter(|v| **v == 1.0).count(), 1);
        }
    }

    #[test]
    fn exact_equivariance_on_noise() {
        let img = noise_image(48, 5);
        let kps = detect_keypoints(&img, 50);
        let base = describe(&img, &kps).unwrap();
        let p = upsift_steerer();
        for k in 0..4 {
            let rot = rotate_image_quarter(&img, k).unwrap();
            let rkps = rotate_keypoints(&kps, &PlanarRotation::quarter(k));
            let d = describe(&rot, &rkps).unwrap();
            let steered = steerer_power(&p, k) * base.data();
            let diff = (d.data() - steered).amax();
            assert!(diff <= 1e-12, "k={k}: {diff}");
        }
    }
}
