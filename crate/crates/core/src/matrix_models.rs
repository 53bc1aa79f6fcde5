//! Haar sampling, the matrix model `V* X V + U* Y U`, eigensystems, resolvent
//! diagonals and eigenvector overlaps.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Measure;
use crate::rng::{complex_normal, normal};

pub type CMat = Mat<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Symmetry class: 1 for real symmetric / orthogonal, 2 for Hermitian / unitary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    One,
    Two,
}

impl Beta {
    pub fn value(self) -> f64 {
        match self {
            Beta::One => 1.0,
            Beta::Two => 2.0,
        }
    }
}

impl TryFrom<u8> for Beta {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Beta::One),
            2 => Ok(Beta::Two),
            _ => Err(format!("beta must be 1 or 2, got {v}")),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        match b {
            Beta::One => 1,
            Beta::Two => 2,
        }
    }
}

/// Source of a diagonal spectrum: a measure atomized by quantiles, or explicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpectrumSpec {
    Quantiles(Measure),
    Values(Vec<f64>),
}

impl SpectrumSpec {
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            SpectrumSpec::Quantiles(m) => Ok(m.quantiles(n)),
            SpectrumSpec::Values(v) if v.len() == n => {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                Ok(v)
            }
            SpectrumSpec::Values(v) => Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            }),
        }
    }

    /// Limiting measure for this spectrum (the empirical one for explicit values).
    pub fn measure(&self) -> Result<Measure> {
        match self {
            SpectrumSpec::Quantiles(m) => Ok(m.clone()),
            SpectrumSpec::Values(v) => Measure::uniform_atoms(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: usize,
    pub beta: Beta,
    pub x: SpectrumSpec,
    pub y: SpectrumSpec,
    /// Scale of the Gaussian perturbation that splits the spectrum of `X`.
    pub epsilon_reg: f64,
    /// Short-range window exponent: pairs with `|alpha - beta| < N^a` are short range.
    pub a: f64,
    /// Time horizon exponent, `T = N^(-1+b)`.
    pub b: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(n: usize, beta: Beta, x: SpectrumSpec, y: SpectrumSpec) -> Self {
        Self {
            n,
            beta,
            x,
            y,
            epsilon_reg: 1e-8,
            a: 0.2,
            b: 0.002,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("N must be >= 2, got {}", self.n)));
        }
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::InvalidArgument(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b <= self.a / 100.0 + 1e-15) {
            return Err(Error::InvalidArgument(format!(
                "b must lie in (0, a/100], got b = {} with a = {}",
                self.b, self.a
            )));
        }
        if !(self.epsilon_reg >= 0.0) {
            return Err(Error::InvalidArgument("epsilon_reg must be >= 0".into()));
        }
        Ok(())
    }

    /// `T = N^(-1+b)`.
    pub fn horizon(&self) -> f64 {
        (self.n as f64).powf(-1.0 + self.b)
    }
}

/// Largest `|alpha - beta|` still counted as short range, i.e. `ceil(N^a) - 1`.
pub fn short_range_radius(n: usize, a: f64) -> usize {
    let w = (n as f64).powf(a).ceil() as usize;
    w.saturating_sub(1).min(n.saturating_sub(1))
}

pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { Complex64::new(values[i], 0.0) } else { ZERO })
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// `max |A_ij - conj(A_ji)|`.
pub fn hermitian_defect(m: MatRef<'_, Complex64>) -> f64 {
    let n = m.nrows();
    let mut d = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

pub fn max_abs(m: MatRef<'_, Complex64>) -> f64 {
    let mut d = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            d = d.max(m[(i, j)].norm());
        }
    }
    d
}

/// `max |U* U - I|`.
pub fn unitarity_defect(u: MatRef<'_, Complex64>) -> f64 {
    let g = u.adjoint() * u;
    let n = g.nrows();
    let mut d = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { ONE } else { ZERO };
            d = d.max((g[(i, j)] - target).norm());
        }
    }
    d
}

/// Replaces `m` by `(m + m*) / 2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
        m[(j, j)] = Complex64::new(m[(j, j)].re, 0.0);
    }
}

/// `Q diag(R_ii / |R_ii|)` from a QR factorization of `g`; the phase fix makes
/// the factorization unique, so Ginibre input gives an exactly Haar `Q`.
pub fn qr_unitary_factor(g: MatRef<'_, Complex64>) -> Result<CMat> {
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let n = q.ncols();
    for j in 0..n {
        let rjj = r[(j, j)];
        let mag = rjj.norm();
        if !(mag > 1e-300) || !mag.is_finite() {
            return Err(Error::Retraction(format!("rank loss at column {j}")));
        }
        let phase = rjj / mag;
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

/// Haar unitary (`beta = 2`) or orthogonal (`beta = 1`) matrix.
pub fn sample_haar(n: usize, beta: Beta, rng: &mut impl Rng) -> CMat {
    let g = match beta {
        Beta::Two => Mat::from_fn(n, n, |_, _| complex_normal(rng, 1.0)),
        Beta::One => Mat::from_fn(n, n, |_, _| Complex64::new(normal(rng), 0.0)),
    };
    qr_unitary_factor(g.as_ref()).expect("Ginibre matrices have full rank almost surely")
}

/// GUE with density `exp(-(N/2) sum |q_ij|^2)` (`beta = 2`), or GOE with
/// diagonal variance `2/N` and off-diagonal variance `1/N` (`beta = 1`).
/// Both have semicircle(1) limiting spectrum.
pub fn wigner(n: usize, beta: Beta, rng: &mut impl Rng) -> CMat {
    let nf = n as f64;
    let mut q = Mat::zeros(n, n);
    for j in 0..n {
        let d = match beta {
            Beta::Two => normal(rng) / nf.sqrt(),
            Beta::One => normal(rng) * (2.0 / nf).sqrt(),
        };
        q[(j, j)] = Complex64::new(d, 0.0);
        for i in 0..j {
            let v = match beta {
                Beta::Two => complex_normal(rng, 1.0 / nf),
                Beta::One => Complex64::new(normal(rng) / nf.sqrt(), 0.0),
            };
            q[(i, j)] = v;
            q[(j, i)] = v.conj();
        }
    }
    q
}

/// `diag(x) + epsilon Q` with `Q` from [`wigner`]; exactly diagonal when `epsilon = 0`.
pub fn regularize(x: &[f64], epsilon: f64, beta: Beta, rng: &mut impl Rng) -> CMat {
    let mut m = diag(x);
    if epsilon > 0.0 {
        let q = wigner(x.len(), beta, rng);
        m += epsilon * q;
    }
    m
}

fn check_square(m: MatRef<'_, Complex64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// `V* X V + U* Y U`, made exactly Hermitian.
pub fn assemble_h(
    x: MatRef<'_, Complex64>,
    y: MatRef<'_, Complex64>,
    v: MatRef<'_, Complex64>,
    u: MatRef<'_, Complex64>,
) -> Result<CMat> {
    let n = x.nrows();
    for m in [x, y, v, u] {
        check_square(m, n)?;
    }
    let mut h = v.adjoint() * (x * v) + u.adjoint() * (y * u);
    hermitize(&mut h);
    Ok(h)
}

/// `V* X V + U* Y U + (T - t) diag(hat_y)`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_tilde_h(
    x: MatRef<'_, Complex64>,
    y: MatRef<'_, Complex64>,
    v: MatRef<'_, Complex64>,
    u: MatRef<'_, Complex64>,
    t: f64,
    horizon: f64,
    hat_y: &[f64],
) -> Result<CMat> {
    let mut h = assemble_h(x, y, v, u)?;
    if hat_y.len() != h.nrows() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            found: hat_y.len(),
        });
    }
    let s = horizon - t;
    for (i, &yh) in hat_y.iter().enumerate() {
        h[(i, i)] += Complex64::new(s * yh, 0.0);
    }
    Ok(h)
}

/// Sorted eigenvalues and orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `Q diag(values) Q*`.
    pub fn reconstruct(&self) -> CMat {
        let q = &self.vectors;
        let scaled = q * diag(&self.values);
        scaled * q.adjoint()
    }

    /// Row `i` of the resolvent `(H - z)^{-1}`.
    pub fn green_row(&self, z: Complex64, i: usize) -> Result<Vec<Complex64>> {
        if !(z.im > 0.0) {
            return Err(Error::OffUpperHalfPlane(z.im));
        }
        let n = self.len();
        let q = &self.vectors;
        let r: Vec<Complex64> = self.values.iter().map(|&l| (l - z).inv()).collect();
        Ok((0..n)
            .map(|k| (0..n).map(|l| q[(i, l)] * r[l] * q[(k, l)].conj()).sum())
            .collect())
    }
}

/// Eigen-decomposition of a Hermitian matrix. Each eigenvector is rotated so
/// that its first entry of magnitude above 1e-12 is real and positive.
pub fn eigh(m: MatRef<'_, Complex64>) -> Result<EigenSystem> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    let defect = hermitian_defect(m);
    if defect > 1e-10 * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigensolver)?;
    let s = evd.S();
    let mut values: Vec<f64> = (0..n).map(|k| s[k].re).collect();
    let mut vectors = evd.U().to_owned();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver);
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let v = vectors.clone();
        vectors = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
        values = order.iter().map(|&k| values[k]).collect();
    }
    fix_phases(&mut vectors);
    Ok(EigenSystem { values, vectors })
}

/// Eigenvalues only.
pub fn eigvalsh(m: MatRef<'_, Complex64>) -> Result<Vec<f64>> {
    let defect = hermitian_defect(m);
    if defect > 1e-10 * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let mut v = m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigensolver)?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn fix_phases(q: &mut CMat) {
    for j in 0..q.ncols() {
        let Some(i) = (0..q.nrows()).find(|&i| q[(i, j)].norm() > 1e-12) else {
            continue;
        };
        let p = q[(i, j)];
        let phase = p.conj() / p.norm();
        for r in 0..q.nrows() {
            q[(r, j)] *= phase;
        }
        q[(i, j)] = Complex64::new(q[(i, j)].re, 0.0);
    }
}

/// Resolvent diagonal `G_ii = sum_k |a_ik|^2 / (lambda_k - z)`.
pub fn green_diag(es: &EigenSystem, z: Complex64) -> Result<Vec<Complex64>> {
    if !(z.im > 0.0) {
        return Err(Error::OffUpperHalfPlane(z.im));
    }
    let n = es.len();
    let r: Vec<Complex64> = es.values.iter().map(|&l| (l - z).inv()).collect();
    let q = &es.vectors;
    Ok((0..n)
        .map(|i| (0..n).map(|k| q[(i, k)].norm_sqr() * r[k]).sum())
        .collect())
}

/// Rotated eigenvectors `w_k = U a_k` and the short-range overlaps
/// `gamma_ij = sum_{|alpha-beta| < N^a} |w_alpha,i|^2 |w_beta,j|^2`.
#[derive(Clone, Debug)]
pub struct OverlapTable {
    pub w: CMat,
    /// Row-major `N x N`.
    pub gamma: Vec<f64>,
    pub a: f64,
    pub n: usize,
}

impl OverlapTable {
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.n + j]
    }

    /// Rows `(i, j, gamma_ij)` for entries above `threshold`.
    pub fn to_csv(&self, threshold: f64) -> String {
        let mut s = String::from("i,j,gamma\n");
        for i in 0..self.n {
            for j in 0..self.n {
                let g = self.gamma(i, j);
                if g > threshold {
                    s.push_str(&format!("{i},{j},{g:e}\n"));
                }
            }
        }
        s
    }
}

/// `w = U A` where the columns of `A` are eigenvectors.
pub fn rotate(u: MatRef<'_, Complex64>, es: &EigenSystem) -> Result<CMat> {
    check_square(u, es.len())?;
    Ok(u * &es.vectors)
}

/// `gamma_ij` from squared moduli `p[alpha][k] = |w_alpha,k|^2` (column-major `N x N`).
pub(crate) fn short_range_gamma(w: MatRef<'_, Complex64>, a: f64) -> Vec<f64> {
    let n = w.nrows();
    let r = short_range_radius(n, a);
    let p = Mat::<f64>::from_fn(n, n, |i, j| w[(i, j)].norm_sqr());
    // banded[alpha][j] = sum_{|alpha-beta| <= r} p[beta][j], via prefix sums
    let mut banded = Mat::<f64>::zeros(n, n);
    let mut prefix = vec![0.0; n + 1];
    for j in 0..n {
        for b in 0..n {
            prefix[b + 1] = prefix[b] + p[(b, j)];
        }
        for alpha in 0..n {
            let lo = alpha.saturating_sub(r);
            let hi = (alpha + r).min(n - 1);
            banded[(alpha, j)] = prefix[hi + 1] - prefix[lo];
        }
    }
    let g = p.transpose() * &banded;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    out
}

pub fn overlaps(u: MatRef<'_, Complex64>, es: &EigenSystem, a: f64) -> Result<OverlapTable> {
    let w = rotate(u, es)?;
    let gamma = short_range_gamma(w.as_ref(), a);
    Ok(OverlapTable {
        n: es.len(),
        w,
        gamma,
        a,
    })
}

/// `index,eigenvalue` rows.
pub fn spectrum_csv(values: &[f64]) -> String {
    let mut s = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    s
}

/// Largest singular value by power iteration on `M* M`.
pub fn operator_norm(m: MatRef<'_, Complex64>, iterations: usize) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    // deterministic, generic start vector
    let mut x = Mat::<Complex64>::from_fn(n, 1, |i, _| Complex64::new(1.0 + 0.01 * i as f64, 0.1 * (i as f64).sin()));
    let mut est = 0.0;
    for _ in 0..iterations {
        let nx = x.norm_l2();
        if nx == 0.0 {
            return 0.0;
        }
        x = x * faer::Scale(Complex64::new(1.0 / nx, 0.0));
        let y = m * &x;
        est = y.norm_l2();
        x = m.adjoint() * y;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn haar_is_unitary() {
        let mut rng = stream(1, "haar", 0);
        for beta in [Beta::One, Beta::Two] {
            for n in [1, 5, 40] {
                let u = sample_haar(n, beta, &mut rng);
                assert!(unitarity_defect(u.as_ref()) <= 1e-10);
                if beta == Beta::One {
                    assert!(max_abs_imag(&u) == 0.0);
                }
            }
        }
    }

    fn max_abs_imag(m: &CMat) -> f64 {
        let mut d = 0.0f64;
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                d = d.max(m[(i, j)].im.abs());
            }
        }
        d
    }

    #[test]
    fn haar_phase_is_uniform() {
        let mut rng = stream(2, "haar-phase", 0);
        let mut args: Vec<f64> = (0..10_000)
            .map(|_| {
                let u = sample_haar(1, Beta::Two, &mut rng);
                assert_abs_diff_eq!(u[(0, 0)].norm(), 1.0, epsilon = 1e-12);
                u[(0, 0)].arg()
            })
            .collect();
        args.sort_by(f64::total_cmp);
        let n = args.len() as f64;
        let ks = args
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let f = (a + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
                (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "{ks}");
    }

    #[test]
    fn haar_trace_second_moment() {
        let mut rng = stream(3, "haar-trace", 0);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|_| {
                let u = sample_haar(20, Beta::Two, &mut rng);
                let tr: Complex64 = (0..20).map(|i| u[(i, i)]).sum();
                tr.norm_sqr()
            })
            .sum::<f64>()
            / trials as f64;
        assert!((0.9..=1.1).contains(&mean), "{mean}");
    }

    #[test]
    fn regularize_without_noise_is_diagonal() {
        let mut rng = stream(4, "reg", 0);
        let x = [0.3, -1.0, 2.0];
        let m = regularize(&x, 0.0, Beta::Two, &mut rng);
        assert_eq!(max_abs((&m - diag(&x)).as_ref()), 0.0);
    }

    #[test]
    fn regularize_respects_weyl() {
        let mut rng = stream(5, "reg", 0);
        let x = [0.0, 0.0, 1.0, 1.0, 1.0, 2.0];
        for beta in [Beta::One, Beta::Two] {
            for _ in 0..20 {
                let mut r2 = rng.clone();
                let m = regularize(&x, 1e-3, beta, &mut rng);
                let q = wigner(x.len(), beta, &mut r2);
                let qn = eigvalsh(q.as_ref()).unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let ev = eigvalsh(m.as_ref()).unwrap();
                for (a, b) in ev.iter().zip(x.iter()) {
                    assert!((a - b).abs() <= 1e-3 * qn + 1e-14);
                }
            }
        }
    }

    #[test]
    fn regularized_spectra_are_simple() {
        let mut rng = stream(6, "reg", 0);
        for beta in [Beta::One, Beta::Two] {
            for _ in 0..1000 {
                let m = regularize(&[0.0; 10], 1e-8, beta, &mut rng);
                let ev = eigvalsh(m.as_ref()).unwrap();
                assert!(ev.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn assemble_with_zero_x_and_identity_u() {
        let y = diag(&[1.0, -2.0, 0.5]);
        let x = diag(&[0.0; 3]);
        let i = identity(3);
        let mut rng = stream(7, "asm", 0);
        let v = sample_haar(3, Beta::Two, &mut rng);
        let h = assemble_h(x.as_ref(), y.as_ref(), v.as_ref(), i.as_ref()).unwrap();
        assert!(max_abs((&h - &y).as_ref()) <= 1e-15);
    }

    #[test]
    fn assemble_rejects_mismatch() {
        let a = identity(3);
        let b = identity(4);
        assert!(matches!(
            assemble_h(a.as_ref(), b.as_ref(), a.as_ref(), a.as_ref()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn assembled_norm_is_subadditive() {
        let mut rng = stream(8, "asm", 0);
        let x: Vec<f64> = (0..30).map(|k| (k as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..30).map(|k| (k as f64 * 0.11).cos() * 2.0).collect();
        let v = sample_haar(30, Beta::Two, &mut rng);
        let u = sample_haar(30, Beta::Two, &mut rng);
        let h = assemble_h(diag(&x).as_ref(), diag(&y).as_ref(), v.as_ref(), u.as_ref()).unwrap();
        assert!(hermitian_defect(h.as_ref()) <= 1e-12);
        let ev = eigvalsh(h.as_ref()).unwrap();
        let nx = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ny = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(ev.iter().all(|l| l.abs() <= nx + ny + 1e-12));
    }

    #[test]
    fn tilde_h_matches_h_at_horizon() {
        let mut rng = stream(9, "asm", 0);
        let x = diag(&[0.1, 0.2, 0.3, 0.4]);
        let y = diag(&[1.0, 0.0, -1.0, 0.5]);
        let v = sample_haar(4, Beta::Two, &mut rng);
        let u = sample_haar(4, Beta::Two, &mut rng);
        let h = assemble_h(x.as_ref(), y.as_ref(), v.as_ref(), u.as_ref()).unwrap();
        let ht = assemble_tilde_h(x.as_ref(), y.as_ref(), v.as_ref(), u.as_ref(), 0.5, 0.5, &[3.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(max_abs((&h - &ht).as_ref()), 0.0);
    }

    #[test]
    fn eigh_of_diagonal() {
        let es = eigh(diag(&[3.0, 1.0, 2.0]).as_ref()).unwrap();
        assert_eq!(es.values, vec![1.0, 2.0, 3.0]);
        let perm = [1usize, 2, 0];
        for (k, &row) in perm.iter().enumerate() {
            assert_abs_diff_eq!(es.vectors[(row, k)].re, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eigh_of_swap() {
        let mut m = Mat::zeros(2, 2);
        m[(0, 1)] = ONE;
        m[(1, 0)] = ONE;
        let es = eigh(m.as_ref()).unwrap();
        assert_abs_diff_eq!(es.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(es.values[1], 1.0, epsilon = 1e-14);
        let s = 0.5f64.sqrt();
        assert!((es.vectors[(0, 0)] - Complex64::new(s, 0.0)).norm() < 1e-14);
        assert!((es.vectors[(1, 0)] - Complex64::new(-s, 0.0)).norm() < 1e-14);
        assert!((es.vectors[(0, 1)] - Complex64::new(s, 0.0)).norm() < 1e-14);
        assert!((es.vectors[(1, 1)] - Complex64::new(s, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_and_is_orthonormal() {
        let mut rng = stream(10, "eigh", 0);
        let a = wigner(50, Beta::Two, &mut rng);
        let es = eigh(a.as_ref()).unwrap();
        let err = max_abs((&a - es.reconstruct()).as_ref());
        assert!(err <= 1e-9 * max_abs(a.as_ref()));
        assert!(unitarity_defect(es.vectors.as_ref()) <= 1e-10);
        for j in 0..50 {
            let first = (0..50).find(|&i| es.vectors[(i, j)].norm() > 1e-12).unwrap();
            assert!(es.vectors[(first, j)].re > 0.0 && es.vectors[(first, j)].im == 0.0);
        }
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = identity(2);
        m[(0, 1)] = ONE;
        assert!(matches!(eigh(m.as_ref()), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn green_of_zero_matrix() {
        let es = eigh(Mat::zeros(4, 4).as_ref()).unwrap();
        for g in green_diag(&es, Complex64::new(0.0, 1.0)).unwrap() {
            assert!((g - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        }
        assert!(green_diag(&es, Complex64::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn green_of_diagonal_and_trace_identity() {
        let y = [0.5, -1.0, 2.0];
        let z = Complex64::new(0.2, 0.3);
        let es = eigh(diag(&y).as_ref()).unwrap();
        let g = green_diag(&es, z).unwrap();
        for (gi, &yi) in g.iter().zip(&y) {
            assert!((gi - (yi - z).inv()).norm() < 1e-14);
        }
        let mut rng = stream(11, "green", 0);
        let a = wigner(40, Beta::Two, &mut rng);
        let es = eigh(a.as_ref()).unwrap();
        let g = green_diag(&es, z).unwrap();
        let tr: Complex64 = g.iter().sum();
        let want: Complex64 = es.values.iter().map(|&l| (l - z).inv()).sum();
        assert!((tr - want).norm() <= 1e-10);
        let c = 1.0 / (es.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) + z.norm()).powi(2);
        assert!(g.iter().all(|gi| gi.im >= c * z.im));
    }

    #[test]
    fn ward_identity() {
        let mut rng = stream(12, "ward", 0);
        let a = wigner(30, Beta::Two, &mut rng);
        let es = eigh(a.as_ref()).unwrap();
        let z = Complex64::new(0.1, 0.05);
        let g = green_diag(&es, z).unwrap();
        for i in [0, 7, 29] {
            let row = es.green_row(z, i).unwrap();
            let s: f64 = row.iter().map(|x| x.norm_sqr()).sum();
            assert!((s - g[i].im / z.im).abs() <= 1e-8 * s, "{s} vs {}", g[i].im / z.im);
        }
    }

    #[test]
    fn overlaps_of_identity_and_diagonal() {
        let n = 16;
        let a = 0.5; // N^a = 4
        let x: Vec<f64> = (0..n).map(|k| ((k * 7) % n) as f64).collect();
        let es = eigh(diag(&x).as_ref()).unwrap();
        // eigenvalue k sits at coordinate pi(k)
        let pi: Vec<usize> = (0..n).map(|k| (0..n).find(|&r| es.vectors[(r, k)].norm() > 0.5).unwrap()).collect();
        let t = overlaps(identity(n).as_ref(), &es, a).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if pi[i].abs_diff(pi[j]) < 4 { 1.0 } else { 0.0 };
                assert_eq!(t.gamma(i, j), want, "({i},{j})");
            }
        }
    }

    #[test]
    fn overlap_columns_are_normalized_and_gamma_bounded() {
        let mut rng = stream(13, "ovl", 0);
        let n = 60;
        let u = sample_haar(n, Beta::Two, &mut rng);
        let es = eigh(wigner(n, Beta::Two, &mut rng).as_ref()).unwrap();
        let t = overlaps(u.as_ref(), &es, 0.3).unwrap();
        for k in 0..n {
            let s: f64 = (0..n).map(|a| t.w[(a, k)].norm_sqr()).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
        for i in 0..n {
            for j in 0..n {
                let g = t.gamma(i, j);
                assert!((0.0..=1.0 + 1e-12).contains(&g));
                assert_eq!(g, t.gamma(j, i));
            }
        }
    }

    #[test]
    fn short_range_radius_matches_strict_window() {
        assert_eq!(short_range_radius(16, 0.5), 3);
        assert_eq!(short_range_radius(100, 0.2), 2); // 100^0.2 = 2.51
        assert_eq!(short_range_radius(10, 1.0), 9);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let d = diag(&[0.5, -3.0, 2.0]);
        assert_abs_diff_eq!(operator_norm(d.as_ref(), 200), 3.0, epsilon = 1e-8);
    }

    #[test]
    fn beta_round_trips_through_integers() {
        assert_eq!(Beta::try_from(1u8).unwrap(), Beta::One);
        assert!(Beta::try_from(3u8).is_err());
        assert_eq!(serde_json::to_string(&Beta::Two).unwrap(), "2");
    }
}
