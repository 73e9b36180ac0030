//! Grayscale images, exact quarter-turn and bilinear continuous rotations,
//! and procedural test textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group_reps::PlanarRotation;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Centre of the pixel grid, `((W−1)/2, (H−1)/2)`, in pixel units.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Centered coordinates (x right, y up) to fractional (col, row).
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = self.center();
        (x + cx, cy - y)
    }

    /// Fractional (col, row) to centered coordinates.
    pub fn to_centered(&self, col: f64, row: f64) -> (f64, f64) {
        let (cx, cy) = self.center();
        (col - cx, cy - row)
    }
}

/// Rotate anticlockwise by `k` quarter turns as a pure pixel permutation.
pub fn rotate_image_quarter(img: &GrayImage, k: i64) -> Result<GrayImage> {
    let k = k.rem_euclid(4);
    if k % 2 == 1 && !img.is_square() {
        return Err(Error::InvalidInput("odd quarter turns need a square image".into()));
    }
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = match k {
                0 => img.get(r, c),
                1 => img.get(c, w - 1 - r),
                2 => img.get(h - 1 - r, w - 1 - c),
                _ => img.get(h - 1 - c, r),
            };
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels: out,
    })
}

/// Rotate anticlockwise by `angle` about the image centre with bilinear
/// interpolation. Pixels whose preimage leaves the source are set to 0.
pub fn rotate_image_continuous(img: &GrayImage, angle: f64) -> Result<GrayImage> {
    if !img.is_square() {
        return Err(Error::InvalidInput("continuous rotation needs a square image".into()));
    }
    if !angle.is_finite() {
        return Err(Error::InvalidInput("angle must be finite".into()));
    }
    let inverse = PlanarRotation::new(-angle);
    let (w, h) = (img.width, img.height);
    let max_c = (w - 1) as f64;
    let max_r = (h - 1) as f64;
    let snap = |v: f64, hi: f64| {
        if v < 0.0 && v > -1e-9 {
            0.0
        } else if v > hi && v < hi + 1e-9 {
            hi
        } else {
            v
        }
    };
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (x, y) = img.to_centered(c as f64, r as f64);
            let (xs, ys) = inverse.apply(x, y);
            let (sc, sr) = img.to_pixel(xs, ys);
            let (sc, sr) = (snap(sc, max_c), snap(sr, max_r));
            if sc < 0.0 || sr < 0.0 || sc > max_c || sr > max_r {
                continue;
            }
            let c0 = (sc.floor() as usize).min(w - 1);
            let r0 = (sr.floor() as usize).min(h - 1);
            let fc = sc - c0 as f64;
            let fr = sr - r0 as f64;
            let c1 = (c0 + 1).min(w - 1);
            let r1 = (r0 + 1).min(h - 1);
            let top = img.get(r0, c0) * (1.0 - fc) + img.get(r0, c1) * fc;
            let bottom = img.get(r1, c0) * (1.0 - fc) + img.get(r1, c1) * fc;
            out[r * w + c] = (top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0);
        }
    }
    Ok(GrayImage {
        width: w,
        height: h,
        pixels: out,
    })
}

/// Quantize to the 8-bit grid `k / 255` so the image survives a PGM round trip.
pub fn quantize_u8(img: &GrayImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|v| (v * 255.0).round() / 255.0).collect(),
    }
}

/// Uniform i.i.d. noise on the 8-bit grid.
pub fn noise_image(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..size * size).map(|_| rng.gen_range(0u8..=255) as f64 / 255.0).collect();
    GrayImage {
        width: size,
        height: size,
        pixels,
    }
}

/// Procedural texture: multi-octave value noise overlaid with random
/// rectangles and straight edges, quantized to 8 bits.
pub fn synthetic_texture(size: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e47_u64);
    let mut acc = vec![0.0; size * size];

    let mut amplitude = 0.5;
    for cell in [32usize, 16, 8, 4] {
        let cells = size / cell + 2;
        let lattice: Vec<f64> = (0..cells * cells).map(|_| rng.gen::<f64>()).collect();
        for r in 0..size {
            let gy = r as f64 / cell as f64;
            let (y0, ty) = (gy.floor() as usize, smoothstep(gy.fract()));
            for c in 0..size {
                let gx = c as f64 / cell as f64;
                let (x0, tx) = (gx.floor() as usize, smoothstep(gx.fract()));
                let l = |yy: usize, xx: usize| lattice[yy * cells + xx];
                let top = l(y0, x0) * (1.0 - tx) + l(y0, x0 + 1) * tx;
                let bot = l(y0 + 1, x0) * (1.0 - tx) + l(y0 + 1, x0 + 1) * tx;
                acc[r * size + c] += amplitude * (top * (1.0 - ty) + bot * ty);
            }
        }
        amplitude *= 0.6;
    }
    let max = acc.iter().cloned().fold(f64::MIN, f64::max);
    let min = acc.iter().cloned().fold(f64::MAX, f64::min);
    let span = (max - min).max(1e-12);
    for v in acc.iter_mut() {
        *v = 0.15 + 0.5 * (*v - min) / span;
    }

    let rects = 6 + size / 16;
    for _ in 0..rects {
        let w = rng.gen_range(size / 16..size / 4).max(2);
        let h = rng.gen_range(size / 16..size / 4).max(2);
        let x0 = rng.gen_range(0..size - w);
        let y0 = rng.gen_range(0..size - h);
        let value: f64 = rng.gen();
        let alpha = rng.gen_range(0.5..1.0);
        for r in y0..y0 + h {
            for c in x0..x0 + w {
                let p = &mut acc[r * size + c];
                *p = (1.0 - alpha) * *p + alpha * value;
            }
        }
    }

    let edges = 3 + size / 32;
    for _ in 0..edges {
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let (nx, ny) = (theta.cos(), theta.sin());
        let offset = rng.gen_range(-0.4..0.4) * size as f64;
        let delta = rng.gen_range(-0.25..0.25);
        let half = size as f64 / 2.0;
        for r in 0..size {
            for c in 0..size {
                let d = (c as f64 - half) * nx + (r as f64 - half) * ny - offset;
                if d > 0.0 {
                    acc[r * size + c] += delta;
                }
            }
        }
    }

    let img = GrayImage {
        width: size,
        height: size,
        pixels: acc.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    };
    quantize_u8(&img)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}
