//! Local statistics of spectra: unfolded gaps against the Wigner surmise,
//! two-point correlations, local-law errors, rigidity and min-gap tails.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_models::{green_diag, Beta, EigenSystem};
use crate::subordination::SubordinationSolution;

/// `floor(N^0.3)`, the default number of eigenvalues per gap window.
pub fn default_window(n: usize) -> usize {
    ((n as f64).powf(0.3).floor() as usize).max(2)
}

/// Normalized gaps `N rho(E) (lambda_{i+1} - lambda_i)` among the `window_k`
/// eigenvalues nearest `E`, pooled over spectra (each ascending).
pub fn unfold_gaps(spectra: &[Vec<f64>], rho_e: f64, e: f64, window_k: usize) -> Result<Vec<f64>> {
    if !(rho_e > 0.0) || !rho_e.is_finite() {
        return Err(Error::InvalidArgument(format!("density at E must be positive, got {rho_e}")));
    }
    if window_k < 2 {
        return Err(Error::EmptyWindow(format!("window of {window_k} eigenvalues has no gaps")));
    }
    let mut out = Vec::with_capacity(spectra.len() * (window_k - 1));
    for s in spectra {
        let n = s.len();
        if n < window_k {
            return Err(Error::EmptyWindow(format!("spectrum of {n} levels, window {window_k}")));
        }
        let lo = nearest_window(s, e, window_k);
        let scale = n as f64 * rho_e;
        out.extend(s[lo..lo + window_k].windows(2).map(|w| scale * (w[1] - w[0])));
    }
    if out.is_empty() {
        return Err(Error::EmptyWindow("no spectra".into()));
    }
    Ok(out)
}

/// Start of the `k` consecutive entries of ascending `s` nearest `e`.
fn nearest_window(s: &[f64], e: f64, k: usize) -> usize {
    let n = s.len();
    let mut lo = s.partition_point(|&x| x < e).saturating_sub(k).min(n - k);
    // slide right while that brings the window closer to e
    while lo + k < n && (s[lo + k] - e).abs() < (e - s[lo]).abs() {
        lo += 1;
    }
    lo
}

/// Wigner surmise density, unit mean spacing.
pub fn reference_spacing_density(beta: Beta, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    match beta {
        Beta::One => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
        Beta::Two => 32.0 / (PI * PI) * s * s * (-4.0 * s * s / PI).exp(),
    }
}

/// Wigner surmise distribution function.
pub fn reference_spacing_cdf(beta: Beta, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    match beta {
        Beta::One => -(-0.25 * PI * s * s).exp_m1(),
        Beta::Two => {
            let v = libm::erf(2.0 * s / PI.sqrt()) - 4.0 * s / PI * (-4.0 * s * s / PI).exp();
            v.clamp(0.0, 1.0)
        }
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against a continuous or
/// right-continuous `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return 1.0;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < s.len() {
        // ties: the empirical CDF jumps by the full multiplicity at once
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    d.clamp(0.0, 1.0)
}

/// Sup distance between two empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Width of a correlation bin in unfolded units.
pub const CORRELATION_BIN: f64 = 0.25;
/// Bins cover pair differences in `[-CORRELATION_RANGE, CORRELATION_RANGE]`.
pub const CORRELATION_RANGE: f64 = 5.0;
const MIN_PAIRS: usize = 100;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    /// `(center, value)`; a Poisson process gives 1 everywhere.
    pub bins: Vec<(f64, f64)>,
    pub pairs: usize,
    pub trials: usize,
    /// Fewer than 100 pairs fell in range.
    pub insufficient: bool,
}

impl CorrelationEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("center,value\n");
        for (c, v) in &self.bins {
            s.push_str(&format!("{c},{v:e}\n"));
        }
        s
    }
}

/// Two-point function of `alpha = N rho(E) (lambda - E)` over levels with
/// `|alpha| <= half_width`. Bins are centered on multiples of 0.25 and each is
/// divided by `trials (2 L - |d|) delta`, the pair count of a unit-density
/// Poisson process.
pub fn correlation_estimate(spectra: &[Vec<f64>], e: f64, rho_e: f64, half_width: f64) -> Result<CorrelationEstimate> {
    if !(rho_e > 0.0) {
        return Err(Error::InvalidArgument(format!("density at E must be positive, got {rho_e}")));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidArgument("half width must be positive".into()));
    }
    let nb = (CORRELATION_RANGE / CORRELATION_BIN).round() as i64;
    let mut counts = vec![0usize; (2 * nb + 1) as usize];
    let mut pairs = 0;
    for s in spectra {
        let scale = s.len() as f64 * rho_e;
        let alphas: Vec<f64> = s
            .iter()
            .map(|&l| scale * (l - e))
            .filter(|a| a.abs() <= half_width)
            .collect();
        for (i, &ai) in alphas.iter().enumerate() {
            for (j, &aj) in alphas.iter().enumerate() {
                if i == j {
                    continue;
                }
                let k = ((ai - aj) / CORRELATION_BIN).round() as i64;
                if k.abs() <= nb {
                    counts[(k + nb) as usize] += 1;
                    pairs += 1;
                }
            }
        }
    }
    let trials = spectra.len().max(1) as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let d = (idx as i64 - nb) as f64 * CORRELATION_BIN;
            let room = (2.0 * half_width - d.abs()).max(0.0);
            let v = if room > 0.0 { c as f64 / (trials * room * CORRELATION_BIN) } else { 0.0 };
            (d, v)
        })
        .collect();
    Ok(CorrelationEstimate {
        bins,
        pairs,
        trials: spectra.len(),
        insufficient: pairs < MIN_PAIRS,
    })
}

/// `1 - (sin(pi a) / (pi a))^2`, the sine-kernel pair correlation.
pub fn sine_kernel_correlation(a: f64) -> f64 {
    if a.abs() < 1e-8 {
        return (PI * a).powi(2) / 3.0;
    }
    let s = (PI * a).sin() / (PI * a);
    1.0 - s * s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalLawPoint {
    pub e: f64,
    pub eta: f64,
    pub sup_error: f64,
    /// `sup_error * sqrt(N eta)`.
    pub normalized: f64,
    pub argmax: usize,
    /// False when the subordination solve failed; the error fields are then NaN.
    pub valid: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub n: usize,
    pub points: Vec<LocalLawPoint>,
}

impl LocalLawReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("E,eta,sup_error,normalized,argmax,valid\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                p.e, p.eta, p.sup_error, p.normalized, p.argmax, p.valid
            ));
        }
        s
    }

    pub fn max_normalized(&self) -> f64 {
        self.points.iter().filter(|p| p.valid).map(|p| p.normalized).fold(0.0, f64::max)
    }
}

/// `sup_i |G_ii(z) - 1/(-z + y_i + w1(z))|` over a grid of `(E, eta)`.
///
/// `es` must have its eigenvectors expressed in the basis where the `Y` term is
/// diagonal, and `y_eff` holds that diagonal (including any `(T - t) hat y`
/// shift). `w1` supplies the subordination solution at each `z`.
pub fn local_law_report<F>(es: &EigenSystem, y_eff: &[f64], grid: &[(f64, f64)], mut w1: F) -> Result<LocalLawReport>
where
    F: FnMut(Complex64) -> Result<SubordinationSolution>,
{
    let n = es.len();
    if y_eff.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y_eff.len(),
        });
    }
    let mut points = Vec::with_capacity(grid.len());
    for &(e, eta) in grid {
        let z = Complex64::new(e, eta);
        let g = green_diag(es, z)?;
        let sol = match w1(z) {
            Ok(s) if s.converged => s,
            _ => {
                points.push(LocalLawPoint {
                    e,
                    eta,
                    sup_error: f64::NAN,
                    normalized: f64::NAN,
                    argmax: 0,
                    valid: false,
                });
                continue;
            }
        };
        let (mut sup, mut arg) = (0.0f64, 0);
        for i in 0..n {
            let pred = (-z + y_eff[i] + sol.w1).inv();
            let err = (g[i] - pred).norm();
            if err > sup {
                sup = err;
                arg = i;
            }
        }
        points.push(LocalLawPoint {
            e,
            eta,
            sup_error: sup,
            normalized: sup * (n as f64 * eta).sqrt(),
            argmax: arg,
            valid: true,
        });
    }
    Ok(LocalLawReport { n, points })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityReport {
    pub max: f64,
    pub argmax: usize,
    pub median: f64,
    /// `(index, |lambda_i - gamma_i|)` over the index set.
    pub profile: Vec<(usize, f64)>,
}

/// Deviation of `eigs` from classical locations `gamma` over `indices`.
pub fn rigidity_report(eigs: &[f64], gamma: &[f64], indices: &[usize]) -> Result<RigidityReport> {
    if eigs.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            found: eigs.len(),
        });
    }
    if indices.is_empty() {
        return Err(Error::EmptyWindow("no indices".into()));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= eigs.len()) {
        return Err(Error::InvalidArgument(format!("index {i} out of range")));
    }
    let profile: Vec<(usize, f64)> = indices.iter().map(|&i| (i, (eigs[i] - gamma[i]).abs())).collect();
    let (argmax, max) = profile.iter().fold((indices[0], 0.0f64), |acc, &(i, d)| if d > acc.1 { (i, d) } else { acc });
    let median = median(&profile.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(RigidityReport {
        max,
        argmax,
        median,
        profile,
    })
}

/// Indices `floor(N (1 - frac) / 2) .. ` covering the middle `frac` of `0..n`.
pub fn middle_indices(n: usize, frac: f64) -> Vec<usize> {
    let skip = ((n as f64) * (1.0 - frac) / 2.0).floor() as usize;
    (skip..n.saturating_sub(skip)).collect()
}

/// `{ i : gamma_i in [lo + kappa, hi - kappa] }` with `kappa = kappa_frac (hi - lo)`.
pub fn bulk_indices(gamma: &[f64], support: (f64, f64), kappa_frac: f64) -> Vec<usize> {
    let kappa = kappa_frac * (support.1 - support.0);
    let (lo, hi) = (support.0 + kappa, support.1 - kappa);
    (0..gamma.len()).filter(|&i| gamma[i] >= lo && gamma[i] <= hi).collect()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Smallest gap of an ascending spectrum.
pub fn min_spacing(s: &[f64]) -> f64 {
    s.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Tail points kept by the fit: at least this many trials below `delta`.
pub const MIN_TAIL_COUNT: usize = 10;
/// ... and at most this empirical probability.
pub const MAX_TAIL_PROBABILITY: f64 = 0.1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinGapFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// `(delta, P[min gap <= delta], used in fit)`.
    pub tail: Vec<(f64, f64, bool)>,
    pub trials: usize,
}

impl MinGapFit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,probability,used\n");
        for (d, p, u) in &self.tail {
            s.push_str(&format!("{d:e},{p:e},{u}\n"));
        }
        s
    }
}

/// Least-squares slope of `log P[min gap <= delta]` against `log delta`, over
/// the deltas with at least 10 hits and probability at most 0.1.
pub fn min_gap_statistics(min_gaps: &[f64], deltas: &[f64]) -> Result<MinGapFit> {
    if min_gaps.is_empty() {
        return Err(Error::EmptyWindow("no trials".into()));
    }
    let mut g = min_gaps.to_vec();
    g.sort_by(f64::total_cmp);
    let n = g.len() as f64;
    let mut tail = Vec::with_capacity(deltas.len());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &d in deltas {
        let count = g.partition_point(|&x| x <= d);
        let p = count as f64 / n;
        let used = d > 0.0 && count >= MIN_TAIL_COUNT && p <= MAX_TAIL_PROBABILITY;
        if used {
            xs.push(d.ln());
            ys.push(p.ln());
        }
        tail.push((d, p, used));
    }
    if xs.len() < 3 {
        return Err(Error::EmptyWindow(format!("only {} resolvable tail points", xs.len())));
    }
    let (slope, intercept, stderr) = linear_fit(&xs, &ys);
    Ok(MinGapFit {
        slope,
        stderr,
        intercept,
        tail,
        trials: min_gaps.len(),
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, stderr(a))`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let se = if xs.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (a, b, se)
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n.max(2) - 1) as f64).exp())
        .collect()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub n: usize,
    pub beta: u8,
    pub trials: usize,
    pub master_seed: u64,
    /// `(experiment tag, trial)` pairs of the per-trial streams.
    pub streams: Vec<(String, u32)>,
}

/// Pooled statistics of one ensemble; blocks are absent when not computed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StatisticsReport {
    pub metadata: ReportMetadata,
    pub gap_ks: Option<f64>,
    pub gap_count: usize,
    pub correlation_bins: Vec<(f64, f64)>,
    pub local_law: Option<LocalLawReport>,
    pub rigidity_max: Option<f64>,
    pub gamma_max_bulk: Option<f64>,
    pub min_gap_exponent: Option<(f64, f64)>,
}

impl StatisticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::semicircle_density;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn picket_fence_unfolds_to_one() {
        let n = 100;
        let rho = 0.5;
        let s: Vec<f64> = (0..n).map(|k| k as f64 / (n as f64 * rho)).collect();
        let g = unfold_gaps(&[s], rho, 1.0, 6).unwrap();
        assert_eq!(g.len(), 5);
        for v in g {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_density_doubles_samples() {
        let s = vec![vec![0.0, 0.3, 0.35, 0.9, 1.0, 1.7]];
        let a = unfold_gaps(&s, 0.4, 0.5, 4).unwrap();
        let b = unfold_gaps(&s, 0.8, 0.5, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn window_is_the_nearest_levels() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(nearest_window(&s, 3.1, 3), 2);
        assert_eq!(nearest_window(&s, -10.0, 3), 0);
        assert_eq!(nearest_window(&s, 10.0, 3), 4);
        assert_eq!(nearest_window(&s, 5.6, 2), 5);
    }

    #[test]
    fn unfold_errors() {
        assert!(unfold_gaps(&[vec![0.0, 1.0]], 0.0, 0.0, 2).is_err());
        assert!(matches!(unfold_gaps(&[vec![0.0, 1.0]], 1.0, 0.0, 3), Err(Error::EmptyWindow(_))));
        assert!(unfold_gaps(&[], 1.0, 0.0, 3).is_err());
    }

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // composite Simpson
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn surmise_has_unit_mass_and_mean() {
        for beta in [Beta::One, Beta::Two] {
            let mass = integrate(|s| reference_spacing_density(beta, s), 0.0, 12.0, 20000);
            let mean = integrate(|s| s * reference_spacing_density(beta, s), 0.0, 12.0, 20000);
            assert!((mass - 1.0).abs() < 1e-10, "{mass}");
            assert!((mean - 1.0).abs() < 1e-10, "{mean}");
            assert_eq!(reference_spacing_density(beta, 0.0), 0.0);
            assert_eq!(reference_spacing_cdf(beta, 0.0), 0.0);
            assert!((reference_spacing_cdf(beta, 50.0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn surmise_cdf_integrates_density() {
        for beta in [Beta::One, Beta::Two] {
            for s in [0.1, 0.5, 1.0, 2.3] {
                let q = integrate(|x| reference_spacing_density(beta, x), 0.0, s, 4000);
                assert!((q - reference_spacing_cdf(beta, s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ks_of_exact_quantiles_is_at_most_one_over_n() {
        let n = 200;
        let samples: Vec<f64> = (1..=n).map(|k| k as f64 / n as f64).collect();
        let d = ks_distance(&samples, |x| x.clamp(0.0, 1.0));
        assert!(d <= 1.0 / n as f64 + 1e-15);
    }

    #[test]
    fn ks_uniform_within_dkw_band() {
        let mut rng = stream(5, "ks", 0);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance(&s, |x| x.clamp(0.0, 1.0)) <= 0.02);
    }

    #[test]
    fn ks_constant_samples_is_max_jump() {
        let d = ks_distance(&[0.3; 50], |x| x.clamp(0.0, 1.0));
        assert!((d - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_sample_ks_basics() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]), 1.0);
        assert!((ks_two_sample(&[0.0, 2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn poisson_levels_have_flat_correlation() {
        let mut rng = stream(9, "poisson", 0);
        let trials = 100;
        let n = 100;
        // unit-density Poisson points in [-50, 50): N rho = 1 with rho = 1/n
        let spectra: Vec<Vec<f64>> = (0..trials)
            .map(|_| {
                let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 100.0 - 50.0).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        let est = correlation_estimate(&spectra, 0.0, 1.0 / n as f64, 20.0).unwrap();
        assert!(!est.insufficient);
        for (c, v) in &est.bins {
            assert!((v - 1.0).abs() < 0.1, "bin {c}: {v}");
        }
    }

    #[test]
    fn picket_fence_correlation_spikes_at_integers() {
        let n = 40;
        let s: Vec<f64> = (0..n).map(|k| k as f64 - 20.0).collect();
        // N rho = 1
        let est = correlation_estimate(&[s], 0.0, 1.0 / n as f64, 10.0).unwrap();
        for (c, v) in &est.bins {
            let integral = c.fract().abs() < 1e-12;
            if integral && *c != 0.0 {
                assert!(*v > 3.0, "{c}: {v}");
            } else {
                assert_eq!(*v, 0.0, "{c}");
            }
        }
    }

    #[test]
    fn sparse_correlation_is_flagged() {
        let est = correlation_estimate(&[vec![0.0, 0.001]], 0.0, 1.0, 5.0).unwrap();
        assert!(est.insufficient);
        assert_eq!(est.pairs, 2);
    }

    #[test]
    fn local_law_vanishes_for_diagonal_model() {
        // X = 0: H = Y is diagonal, G_ii = 1/(y_i - z), w1 = 0
        let y = [-1.0, -0.2, 0.4, 1.5];
        let es = crate::matrix_models::eigh(crate::matrix_models::diag(&y).as_ref()).unwrap();
        let report = local_law_report(&es, &y, &[(0.0, 0.1), (0.5, 1.0)], |z| {
            Ok(SubordinationSolution {
                z,
                m: Complex64::new(0.0, 0.0),
                w1: Complex64::new(0.0, 0.0),
                w2: Complex64::new(0.0, 0.0),
                residual: 0.0,
                iterations: 0,
                converged: true,
            })
        })
        .unwrap();
        for p in &report.points {
            assert!(p.valid && p.sup_error < 1e-14);
        }
    }

    #[test]
    fn local_law_marks_failed_points() {
        let y = [0.0, 1.0];
        let es = crate::matrix_models::eigh(crate::matrix_models::diag(&y).as_ref()).unwrap();
        let r = local_law_report(&es, &y, &[(0.0, 0.1)], |_| Err(Error::Eigensolver)).unwrap();
        assert!(!r.points[0].valid);
        assert!(r.points[0].sup_error.is_nan());
    }

    #[test]
    fn rigidity_of_exact_locations_is_zero() {
        let g = vec![0.0, 1.0, 2.0, 3.0];
        let r = rigidity_report(&g, &g, &[1, 2]).unwrap();
        assert_eq!(r.max, 0.0);
        assert_eq!(r.profile.len(), 2);
        assert!(rigidity_report(&g, &g[..3], &[0]).is_err());
        assert!(rigidity_report(&g, &g, &[]).is_err());
    }

    #[test]
    fn middle_and_bulk_sets() {
        assert_eq!(middle_indices(10, 0.6), vec![2, 3, 4, 5, 6, 7]);
        let gamma: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        assert_eq!(bulk_indices(&gamma, (0.0, 1.0), 0.25), vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn min_gap_slope_for_independent_levels() {
        // order-statistics oracle: P[min gap <= d] ~ N (N-1) d for small d
        let mut rng = stream(11, "iid-gaps", 0);
        let n = 10;
        let gaps: Vec<f64> = (0..20_000)
            .map(|_| {
                let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                v.sort_by(f64::total_cmp);
                min_spacing(&v)
            })
            .collect();
        let fit = min_gap_statistics(&gaps, &log_grid(1e-6, 1e-1, 40)).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.3, "{}", fit.slope);
    }

    #[test]
    fn min_gap_needs_resolvable_tail() {
        assert!(min_gap_statistics(&[1.0; 5], &[0.5, 0.6]).is_err());
        assert!(min_gap_statistics(&[], &[0.5]).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (a, b, se) = linear_fit(&xs, &ys);
        assert!((a - 2.5).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn sine_kernel_limits() {
        assert!(sine_kernel_correlation(0.0).abs() < 1e-15);
        assert!((sine_kernel_correlation(1.0) - 1.0).abs() < 1e-15);
        assert!((sine_kernel_correlation(1e-9) - sine_kernel_correlation(1e-7)).abs() < 1e-12);
    }

    #[test]
    fn semicircle_density_at_origin() {
        assert!((semicircle_density(1.0, 0.0) - 1.0 / PI).abs() < 1e-15);
    }
}
