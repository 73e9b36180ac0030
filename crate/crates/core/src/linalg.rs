//! Dense linear algebra used by the steerer machinery: a real Schur solver,
//! the matrix exponential and logarithm, and extraction of real invariant
//! subspaces for clusters of eigenvalues.
//!
//! The Schur solver is a Hessenberg reduction followed by Francis double-shift
//! QR iterations with Wilkinson's and MATLAB's exceptional shifts, derived from
//! the EISPACK `orthes`/`hqr2` procedures. The exceptional shifts matter here:
//! cyclic permutation matrices, which are exactly the steerers we care about,
//! stall the plain double-shift iteration.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real Schur decomposition `A = Z T Zᵀ` with `T` quasi upper triangular.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub t: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Sizes (1 or 2) of the diagonal blocks of `t`, top to bottom.
    pub blocks: Vec<usize>,
}

impl RealSchur {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput(format!(
                "Schur decomposition needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = a.nrows();
        if n == 0 {
            return Ok(Self {
                t: DMatrix::zeros(0, 0),
                z: DMatrix::zeros(0, 0),
                blocks: Vec::new(),
            });
        }
        let mut h = a.clone();
        let mut v = DMatrix::identity(n, n);
        orthes(&mut h, &mut v);
        let blocks = hqr(&mut h, &mut v)?;

        // Clear everything below the block structure.
        let mut start = 0;
        for &size in &blocks {
            for r in (start + size)..n {
                for c in start..(start + size) {
                    h[(r, c)] = 0.0;
                }
            }
            start += size;
        }
        Ok(Self { t: h, z: v, blocks })
    }

    /// Eigenvalues read off the diagonal blocks, in block order.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.t.nrows());
        let mut i = 0;
        for &size in &self.blocks {
            if size == 1 {
                out.push(Complex64::new(self.t[(i, i)], 0.0));
            } else {
                let (l1, l2) = block_eigenvalues(
                    self.t[(i, i)],
                    self.t[(i, i + 1)],
                    self.t[(i + 1, i)],
                    self.t[(i + 1, i + 1)],
                );
                out.push(l1);
                out.push(l2);
            }
            i += size;
        }
        out
    }
}

fn block_eigenvalues(a: f64, b: f64, c: f64, d: f64) -> (Complex64, Complex64) {
    let p = 0.5 * (a - d);
    let disc = p * p + b * c;
    let mid = 0.5 * (a + d);
    if disc >= 0.0 {
        let s = disc.sqrt();
        (Complex64::new(mid + s, 0.0), Complex64::new(mid - s, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex64::new(mid, s), Complex64::new(mid, -s))
    }
}

/// Householder reduction to upper Hessenberg form, accumulating the
/// orthogonal similarity in `v`.
fn orthes(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];

    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    for m in (1..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * v[(i, j)];
            }
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                v[(i, j)] += g * ort[i];
            }
        }
    }

    for c in 0..n {
        for r in (c + 2)..n {
            h[(r, c)] = 0.0;
        }
    }
}

/// Francis double-shift QR on a Hessenberg matrix. Returns the diagonal block
/// sizes of the resulting quasi-triangular form.
fn hqr(h: &mut DMatrix<f64>, v: &mut DMatrix<f64>) -> Result<Vec<usize>> {
    let nn = h.nrows() as isize;
    let eps = f64::EPSILON;
    let max_iter = 100 * nn as usize + 1000;
    let mut total_iter = 0usize;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y): (f64, f64, f64);
    // Blocks are found bottom-up.
    let mut blocks_rev: Vec<usize> = Vec::new();

    macro_rules! at {
        ($i:expr, $j:expr) => {
            h[(($i) as usize, ($j) as usize)]
        };
    }

    let mut norm = 0.0;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += at!(i, j).abs();
        }
    }

    let mut n = nn - 1;
    let mut iter = 0;
    while n >= 0 {
        // Look for a single small subdiagonal element.
        let mut l = n;
        while l > 0 {
            s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
            if s == 0.0 {
                s = norm;
            }
            if at!(l, l - 1).abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            at!(n, n) += exshift;
            blocks_rev.push(1);
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = at!(n, n - 1) * at!(n - 1, n);
            p = (at!(n - 1, n - 1) - at!(n, n)) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            at!(n, n) += exshift;
            at!(n - 1, n - 1) += exshift;

            if q >= 0.0 {
                // Real pair: triangularize the block with a rotation.
                z = if p >= 0.0 { p + z } else { p - z };
                x = at!(n, n - 1);
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (n - 1)..nn {
                    z = at!(n - 1, j);
                    at!(n - 1, j) = q * z + p * at!(n, j);
                    at!(n, j) = q * at!(n, j) - p * z;
                }
                for i in 0..=n {
                    z = at!(i, n - 1);
                    at!(i, n - 1) = q * z + p * at!(i, n);
                    at!(i, n) = q * at!(i, n) - p * z;
                }
                for i in 0..nn {
                    let (iu, n1, n0) = (i as usize, (n - 1) as usize, n as usize);
                    z = v[(iu, n1)];
                    v[(iu, n1)] = q * z + p * v[(iu, n0)];
                    v[(iu, n0)] = q * v[(iu, n0)] - p * z;
                }
                at!(n, n - 1) = 0.0;
                blocks_rev.push(1);
                blocks_rev.push(1);
            } else {
                blocks_rev.push(2);
            }
            n -= 2;
            iter = 0;
        } else {
            x = at!(n, n);
            y = 0.0;
            w = 0.0;
            if l < n {
                y = at!(n - 1, n - 1);
                w = at!(n, n - 1) * at!(n - 1, n);
            }

            // Wilkinson's ad hoc shift.
            if iter == 10 {
                exshift += x;
                for i in 0..=n {
                    at!(i, i) -= x;
                }
                s = at!(n, n - 1).abs() + at!(n - 1, n - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }

            // MATLAB's ad hoc shift.
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in 0..=n {
                        at!(i, i) -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }

            iter += 1;
            total_iter += 1;
            if total_iter > max_iter {
                return Err(Error::NoConvergence(format!(
                    "real Schur iteration exceeded {max_iter} steps"
                )));
            }

            // Look for two consecutive small subdiagonal elements.
            let mut m = n - 2;
            loop {
                z = at!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / at!(m + 1, m) + at!(m, m + 1);
                q = at!(m + 1, m + 1) - z - r - s;
                r = at!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if at!(m, m - 1).abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                at!(i, i - 2) = 0.0;
                if i > m + 2 {
                    at!(i, i - 3) = 0.0;
                }
            }

            // Double QR step on rows l..=n and columns m..=n.
            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = at!(k, k - 1);
                    q = at!(k + 1, k - 1);
                    r = if notlast { at!(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        at!(k, k - 1) = -s * x;
                    } else if l != m {
                        at!(k, k - 1) = -at!(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = at!(k, j) + q * at!(k + 1, j);
                        if notlast {
                            p += r * at!(k + 2, j);
                            at!(k + 2, j) -= p * z;
                        }
                        at!(k, j) -= p * x;
                        at!(k + 1, j) -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * at!(i, k) + y * at!(i, k + 1);
                        if notlast {
                            p += z * at!(i, k + 2);
                            at!(i, k + 2) -= p * r;
                        }
                        at!(i, k) -= p;
                        at!(i, k + 1) -= p * q;
                    }
                    for i in 0..nn as usize {
                        let ku = k as usize;
                        p = x * v[(i, ku)] + y * v[(i, ku + 1)];
                        if notlast {
                            p += z * v[(i, ku + 2)];
                            v[(i, ku + 2)] -= p * r;
                        }
                        v[(i, ku)] -= p;
                        v[(i, ku + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    blocks_rev.reverse();
    Ok(blocks_rev)
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn solve(lhs: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    lhs.lu()
        .solve(rhs)
        .ok_or_else(|| Error::NoConvergence("singular linear system".into()))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidInput("expm needs a square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("expm input has non-finite entries".into()));
    }
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u_inner = u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let mut r = solve(&v - &u, &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Principal square root of a real quasi upper triangular matrix with the
/// given diagonal block layout. Every real eigenvalue must be positive.
fn sqrtm_quasi_triangular(t: &DMatrix<f64>, blocks: &[usize]) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let starts: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, &s| {
            let st = *acc;
            *acc += s;
            Some(st)
        })
        .collect();
    let mut u = DMatrix::<f64>::zeros(n, n);

    for (bi, &st) in starts.iter().enumerate() {
        if blocks[bi] == 1 {
            let v = t[(st, st)];
            if v <= 0.0 {
                return Err(Error::LogmFailed(format!(
                    "real eigenvalue {v:.3e} on the closed negative axis"
                )));
            }
            u[(st, st)] = v.sqrt();
        } else {
            let (l1, _) = block_eigenvalues(
                t[(st, st)],
                t[(st, st + 1)],
                t[(st + 1, st)],
                t[(st + 1, st + 1)],
            );
            let theta = l1.re;
            let alpha = ((theta + l1.norm()) / 2.0).sqrt();
            if alpha == 0.0 {
                return Err(Error::LogmFailed("block square root is singular".into()));
            }
            for r in 0..2 {
                for c in 0..2 {
                    let mut val = t[(st + r, st + c)] / (2.0 * alpha);
                    if r == c {
                        val += alpha - theta / (2.0 * alpha);
                    }
                    u[(st + r, st + c)] = val;
                }
            }
        }
    }

    // Off-diagonal blocks, column by column, bottom-up within each column.
    for j in 0..blocks.len() {
        let (sj, qj) = (starts[j], blocks[j]);
        for i in (0..j).rev() {
            let (si, pi) = (starts[i], blocks[i]);
            let mut rhs = t.view((si, sj), (pi, qj)).clone_owned();
            for k in (i + 1)..j {
                let (sk, qk) = (starts[k], blocks[k]);
                rhs -= u.view((si, sk), (pi, qk)) * u.view((sk, sj), (qk, qj));
            }
            // U_ii X + X U_jj = rhs, solved through the Kronecker form.
            let uii = u.view((si, si), (pi, pi)).clone_owned();
            let ujj = u.view((sj, sj), (qj, qj)).clone_owned();
            let dim = pi * qj;
            let mut kron = DMatrix::<f64>::zeros(dim, dim);
            for c in 0..qj {
                for r in 0..pi {
                    let row = c * pi + r;
                    for r2 in 0..pi {
                        kron[(row, c * pi + r2)] += uii[(r, r2)];
                    }
                    for c2 in 0..qj {
                        kron[(row, c2 * pi + r)] += ujj[(c2, c)];
                    }
                }
            }
            let vec_rhs = DMatrix::from_column_slice(dim, 1, rhs.as_slice());
            let x = solve(kron, &vec_rhs)?;
            for c in 0..qj {
                for r in 0..pi {
                    u[(si + r, sj + c)] = x[(c * pi + r, 0)];
                }
            }
        }
    }
    Ok(u)
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 1..=m {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out
}

/// Principal real matrix logarithm by inverse scaling and squaring on the
/// real Schur form: repeated square roots bring `T` close to the identity,
/// then `log(I + X)` is evaluated with an 8-point Gauss-Legendre rule, which
/// is the diagonal Padé approximant in partial-fraction form.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let schur = RealSchur::new(a)?;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    for ev in schur.eigenvalues() {
        if ev.im == 0.0 && ev.re <= 0.0 {
            return Err(Error::LogmFailed(format!(
                "eigenvalue {:.3e} on the closed negative real axis has no real logarithm",
                ev.re
            )));
        }
    }
    let mut t = schur.t.clone();
    let mut squarings = 0;
    while norm1(&(&t - &ident)) > 0.25 {
        t = sqrtm_quasi_triangular(&t, &schur.blocks)?;
        squarings += 1;
        if squarings > 64 {
            return Err(Error::LogmFailed("square root iteration did not approach identity".into()));
        }
    }
    let x = &t - &ident;
    let mut log = DMatrix::<f64>::zeros(n, n);
    for (node, weight) in gauss_legendre_unit(8) {
        let lhs = &ident + &x * node;
        log += solve(lhs, &x)? * weight;
    }
    log *= 2f64.powi(squarings);
    Ok(&schur.z * log * schur.z.transpose())
}

/// Eigenvalues of a square matrix through the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    Ok(RealSchur::new(a)?.eigenvalues())
}

/// A group of (numerically) equal eigenvalues with a real basis of the
/// associated invariant subspace.
///
/// For a real eigenvalue the basis has `multiplicity` columns. For a complex
/// pair `a ± ib` (stored with `b > 0`) it has `2 * multiplicity` columns laid
/// out as pairs `(e1, e2)` with `M e1 = a e1 + b e2` and `M e2 = -b e1 + a e2`,
/// i.e. the matrix acts on each pair by `[[a, -b], [b, a]]`.
#[derive(Debug, Clone)]
pub struct EigenCluster {
    pub value: Complex64,
    pub multiplicity: usize,
    pub basis: DMatrix<f64>,
}

impl EigenCluster {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }

    /// Number of real dimensions spanned by the cluster.
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }
}

/// Group eigenvalues that agree within `tol` and compute a real invariant
/// subspace basis for each group from the null space of `M - aI` (real) or
/// `(M - aI)^2 + b^2 I` (complex pair).
pub fn eigen_clusters(m: &DMatrix<f64>, eigenvalues: &[Complex64], tol: f64) -> Result<Vec<EigenCluster>> {
    let n = m.nrows();
    let mut members: Vec<(Complex64, usize)> = Vec::new();
    let mut sorted: Vec<Complex64> = eigenvalues
        .iter()
        .filter_map(|ev| {
            if ev.im.abs() <= tol {
                Some(Complex64::new(ev.re, 0.0))
            } else if ev.im > 0.0 {
                Some(*ev)
            } else {
                None
            }
        })
        .collect();
    sorted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for ev in sorted {
        let found = members
            .iter_mut()
            .find(|(c, _)| (c.im == 0.0) == (ev.im == 0.0) && (*c - ev).norm() <= tol);
        match found {
            Some((c, count)) => {
                // running centroid
                *c = (*c * (*count as f64) + ev) / (*count as f64 + 1.0);
                *count += 1;
            }
            None => members.push((ev, 1)),
        }
    }

    let ident = DMatrix::<f64>::identity(n, n);
    let mut out = Vec::with_capacity(members.len());
    for (value, multiplicity) in members {
        if value.im == 0.0 {
            let k = m - &ident * value.re;
            let basis = null_space(&k, multiplicity)?;
            out.push(EigenCluster {
                value,
                multiplicity,
                basis,
            });
        } else {
            let shifted = m - &ident * value.re;
            let k = &shifted * &shifted + &ident * (value.im * value.im);
            let w = null_space(&k, 2 * multiplicity)?;
            let basis = canonical_pairs(m, &w, value, multiplicity);
            out.push(EigenCluster {
                value,
                multiplicity,
                basis,
            });
        }
    }
    Ok(out)
}

/// Right singular vectors belonging to the `dim` smallest singular values.
fn null_space(k: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    let n = k.ncols();
    let svd = k.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NoConvergence("SVD did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut basis = DMatrix::<f64>::zeros(n, dim);
    for (col, &idx) in order.iter().take(dim).enumerate() {
        for r in 0..n {
            basis[(r, col)] = v_t[(idx, r)];
        }
    }
    Ok(basis)
}

/// Build pairs `(e1, J e1)` spanning the invariant subspace `w`, where
/// `J = (M - a) / b` restricted to the subspace squares to `-I`.
fn canonical_pairs(m: &DMatrix<f64>, w: &DMatrix<f64>, value: Complex64, pairs: usize) -> DMatrix<f64> {
    let dim = w.ncols();
    // Restriction of M to the subspace in the coordinates of w.
    let restricted = w.transpose() * m * w;
    let j = (restricted - DMatrix::<f64>::identity(dim, dim) * value.re) / value.im;

    let mut chosen: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut ortho: Vec<nalgebra::DVector<f64>> = Vec::new();
    for _ in 0..pairs {
        let mut best: Option<nalgebra::DVector<f64>> = None;
        let mut best_norm = -1.0;
        for c in 0..dim {
            let mut cand = nalgebra::DVector::<f64>::zeros(dim);
            cand[c] = 1.0;
            for q in &ortho {
                let proj = q.dot(&cand);
                cand -= q * proj;
            }
            let nrm = cand.norm();
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand);
            }
        }
        let e1 = best.expect("subspace dimension is positive") / best_norm;
        let e2 = &j * &e1;
        for v in [&e1, &e2] {
            let mut q = v.clone();
            for o in &ortho {
                let proj = o.dot(&q);
                q -= o * proj;
            }
            let nrm = q.norm();
            if nrm > 1e-300 {
                ortho.push(q / nrm);
            }
        }
        chosen.push(e1);
        chosen.push(e2);
    }
    let mut coords = DMatrix::<f64>::zeros(dim, 2 * pairs);
    for (c, v) in chosen.iter().enumerate() {
        coords.set_column(c, v);
    }
    w * coords
}

/// Orthonormal basis for the column space of `a` from a column-pivoted
/// Householder QR, keeping the leading columns whose `|R_ii|` exceeds
/// `rel_tol` times `|R_00|`.
pub fn orthonormal_range(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| lead > 0.0 && r[(i, i)].abs() > rel_tol * lead)
        .count();
    qr.q().columns(0, rank).into_owned()
}

/// Frobenius norm of `a - I`.
pub fn identity_defect(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (a - DMatrix::<f64>::identity(n, n)).norm()
}

/// Nearest orthogonal matrix `U Vᵀ` to `m` in Frobenius norm, with the
/// numerical rank of `m`.
pub fn procrustes(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, usize)> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::NoConvergence("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NoConvergence("SVD did not produce Vᵀ".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    Ok((u * v_t, rank))
}
