//! Keypoint sets in centered image coordinates and a Harris corner detector.
//!
//! Coordinates use the image centre as origin, x to the right and y upward,
//! so that a quarter turn of the image acts on keypoints by `R₉₀`.

use nalgebra::Matrix2xX;

use crate::group_reps::PlanarRotation;
use crate::image::GrayImage;

/// Minimum distance (pixels) between a detected keypoint and the border.
pub const BORDER: usize = 8;
const HARRIS_K: f64 = 0.04;
const WINDOW_RADIUS: usize = 2;
const NMS_RADIUS: usize = 2;
const MIN_RESPONSE: f64 = 1e-10;
/// Fixed-point scale for the structure-tensor sums.
const FIXED_SCALE: f64 = (1u64 << 60) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    coords: Matrix2xX<f64>,
}

impl KeypointSet {
    pub fn new(coords: Matrix2xX<f64>) -> Self {
        Self { coords }
    }

    pub fn from_points(points: &[(f64, f64)]) -> Self {
        let mut coords = Matrix2xX::zeros(points.len());
        for (i, &(x, y)) in points.iter().enumerate() {
            coords[(0, i)] = x;
            coords[(1, i)] = y;
        }
        Self { coords }
    }

    pub fn empty() -> Self {
        Self {
            coords: Matrix2xX::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self) -> &Matrix2xX<f64> {
        &self.coords
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.coords[(0, i)], self.coords[(1, i)])
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Keep only the keypoints at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let pts: Vec<(f64, f64)> = indices.iter().map(|&i| self.point(i)).collect();
        Self::from_points(&pts)
    }
}

/// Apply a planar rotation about the image centre.
pub fn rotate_keypoints(kps: &KeypointSet, rot: &PlanarRotation) -> KeypointSet {
    KeypointSet {
        coords: rot.matrix() * &kps.coords,
    }
}

/// Central-difference gradients with replicated borders; `gy` points up.
pub(crate) fn gradients(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let left = img.get(r, c.saturating_sub(1));
            let right = img.get(r, (c + 1).min(w - 1));
            let up = img.get(r.saturating_sub(1), c);
            let down = img.get((r + 1).min(h - 1), c);
            gx[r * w + c] = (right - left) / 2.0;
            gy[r * w + c] = (up - down) / 2.0;
        }
    }
    (gx, gy)
}

fn to_fixed(v: f64) -> i128 {
    (v * FIXED_SCALE).round() as i128
}

/// Harris corner response `det(S) − k·tr(S)²` with `S` the structure tensor
/// summed over a 5x5 window. Window sums are exact fixed-point integers so the
/// response map permutes bit-exactly under quarter turns.
pub fn harris_response(img: &GrayImage) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = gradients(img);
    let xx: Vec<i128> = gx.iter().map(|g| to_fixed(g * g)).collect();
    let yy: Vec<i128> = gy.iter().map(|g| to_fixed(g * g)).collect();
    let xy: Vec<i128> = gx.iter().zip(&gy).map(|(a, b)| to_fixed(a * b)).collect();

    let mut response = vec![0.0; w * h];
    let rad = WINDOW_RADIUS;
    for r in rad..h.saturating_sub(rad) {
        for c in rad..w.saturating_sub(rad) {
            let (mut sxx, mut syy, mut sxy) = (0i128, 0i128, 0i128);
            for rr in r - rad..=r + rad {
                for cc in c - rad..=c + rad {
                    let i = rr * w + cc;
                    sxx += xx[i];
                    syy += yy[i];
                    sxy += xy[i];
                }
            }
            let (a, b, d) = (
                sxx as f64 / FIXED_SCALE,
                syy as f64 / FIXED_SCALE,
                sxy as f64 / FIXED_SCALE,
            );
            let trace = a + b;
            response[r * w + c] = a * b - d * d - HARRIS_K * trace * trace;
        }
    }
    response
}

/// Harris corners with 5x5 non-maximum suppression, at least [`BORDER`]
/// pixels from the border, strongest first. Ties are broken by row, then
/// column, descending.
pub fn detect_keypoints(img: &GrayImage, max_n: usize) -> KeypointSet {
    let (w, h) = (img.width(), img.height());
    if w < 2 * BORDER || h < 2 * BORDER {
        return KeypointSet::empty();
    }
    let response = harris_response(img);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for r in BORDER..h - BORDER {
        for c in BORDER..w - BORDER {
            let v = response[r * w + c];
            if v <= MIN_RESPONSE {
                continue;
            }
            let mut is_max = true;
            'win: for rr in r.saturating_sub(NMS_RADIUS)..=(r + NMS_RADIUS).min(h - 1) {
                for cc in c.saturating_sub(NMS_RADIUS)..=(c + NMS_RADIUS).min(w - 1) {
                    if response[rr * w + cc] > v {
                        is_max = false;
                        break 'win;
                    }
                }
            }
            if is_max {
                candidates.push((v, r, c));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)));
    candidates.truncate(max_n);
    let pts: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&(_, r, c)| img.to_centered(c as f64, r as f64))
        .collect();
    KeypointSet::from_points(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{noise_image, rotate_image_quarter, synthetic_texture};

    #[test]
    fn rotate_examples() {
        let kps = KeypointSet::from_points(&[(1.0, 0.0), (3.5, -2.0)]);
        assert_eq!(rotate_keypoints(&kps, &PlanarRotation::new(0.0)), kps);
        let r = rotate_keypoints(&kps, &PlanarRotation::quarter(1));
        assert_eq!(r.point(0), (0.0, 1.0));
        let mut cur = kps.clone();
        for _ in 0..4 {
            cur = rotate_keypoints(&cur, &PlanarRotation::new(std::f64::consts::FRAC_PI_2));
        }
        assert!((cur.coords() - kps.coords()).norm() < 1e-12);
    }

    #[test]
    fn constant_image_has_no_keypoints() {
        let img = GrayImage::filled(32, 32, 0.3).unwrap();
        assert!(detect_keypoints(&img, 100).is_empty());
    }

    #[test]
    fn bright_square_is_detected() {
        let mut px = vec![0.0; 32 * 32];
        for r in 15..17 {
            for c in 15..17 {
                px[r * 32 + c] = 1.0;
            }
        }
        let img = GrayImage::new(32, 32, px).unwrap();
        let kps = detect_keypoints(&img, 10);
        assert!(!kps.is_empty());
        let (sx, sy) = img.to_centered(15.5, 15.5);
        let nearest = kps.iter().map(|(x, y)| (x - sx).hypot(y - sy)).fold(f64::MAX, f64::min);
        assert!(nearest <= 2.0, "nearest keypoint {nearest} px away");
    }

    #[test]
    fn keypoints_respect_border() {
        let img = noise_image(40, 1);
        let kps = detect_keypoints(&img, 1000);
        assert!(!kps.is_empty());
        for (x, y) in kps.iter() {
            let (c, r) = img.to_pixel(x, y);
            assert!(c >= 8.0 && r >= 8.0 && c <= 31.0 && r <= 31.0);
        }
    }

    #[test]
    fn response_permutes_exactly_under_quarter_turns() {
        let img = synthetic_texture(48, 11);
        let base = harris_response(&img);
        let rot = rotate_image_quarter(&img, 1).unwrap();
        let turned = harris_response(&rot);
        let base_img = GrayImage::new(48, 48, base.iter().map(|v| v.abs().min(1.0)).collect()).unwrap();
        let expect = rotate_image_quarter(&base_img, 1).unwrap();
        for (a, b) in turned.iter().map(|v| v.abs().min(1.0)).zip(expect.pixels()) {
            assert_eq!(a, *b);
        }
    }
}
