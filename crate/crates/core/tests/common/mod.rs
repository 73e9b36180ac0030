#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use steerers::image::GrayImage;
use steerers::io::read_pgm;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn unit_columns(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in m.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    m
}

/// Haar-distributed orthogonal matrix from the sign-fixed QR of a Gaussian.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let qr = gaussian(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            let mut c = q.column_mut(j);
            c.neg_mut();
        }
    }
    q
}

/// Orthogonal polar factor by the Newton iteration `X ← (X + X⁻ᵀ)/2`.
pub fn newton_polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = m.clone();
    for _ in 0..100 {
        let inv_t = x.clone().try_inverse().expect("nonsingular iterate").transpose();
        let next = (&x + inv_t) * 0.5;
        let delta = (&next - &x).norm();
        x = next;
        if delta < 1e-14 * (x.nrows() as f64).sqrt() {
            break;
        }
    }
    x
}

/// Repeated multiplication, without squaring.
pub fn naive_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

pub fn bundled_textures() -> Vec<(String, GrayImage)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/textures");
    (0..10)
        .map(|i| {
            let name = format!("texture_{i:02}.pgm");
            let img = read_pgm(&dir.join(&name)).expect("bundled texture");
            (name, img)
        })
        .collect()
}
