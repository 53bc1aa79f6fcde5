//! Weighted Brownian motion on the unitary group,
//! `dU = i dW U - (1/2) A U dt`, and the Hermitian noise it induces.
//!
//! `W` is Hermitian with independent entries, `E |dW_ab|^2 = sigma2_ab dt / N`,
//! where `sigma2_ab = |y_a - y_b|^-2` for long-range pairs `|a - b| >= N^a_exp`
//! and zero otherwise. For `beta = 1` the increment is `dW = -i S` with `S` real
//! antisymmetric, so the generator `i dW = S` keeps `U` orthogonal.

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_models::{identity, operator_norm, qr_unitary_factor, short_range_radius, unitarity_defect, Beta, CMat};
use crate::rng::{complex_normal, normal, SimRng};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightTable {
    pub n: usize,
    /// Row-major `N x N`.
    pub sigma2: Vec<f64>,
    pub window_a: f64,
    /// Largest `|a - b|` that counts as short range.
    pub radius: usize,
    pub drift: Vec<f64>,
    pub hat_y: Vec<f64>,
    /// Long-range pairs whose weight hit the `N^2` cap.
    pub capped: usize,
}

impl WeightTable {
    pub fn sigma2(&self, a: usize, b: usize) -> f64 {
        self.sigma2[a * self.n + b]
    }

    pub fn is_long_range(&self, a: usize, b: usize) -> bool {
        a.abs_diff(b) > self.radius
    }

    pub fn max_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn hat_y_norm(&self) -> f64 {
        self.hat_y.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// `tr A`, the growth rate of `E ||W(t)||_F^2`.
    pub fn trace_drift(&self) -> f64 {
        self.drift.iter().sum()
    }
}

/// Weights, drift `A_aa = N^-1 sum_b sigma2_ab` and `hat y_a = N^-1 sum_c sigma2_ac (y_c - y_a)`.
pub fn build_weights(y: &[f64], a: f64) -> Result<WeightTable> {
    let n = y.len();
    if n < 2 {
        return Err(Error::InvalidArgument("weights need N >= 2".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite y".into()));
    }
    let radius = if a >= 1.0 { n - 1 } else { short_range_radius(n, a) };
    let nf = n as f64;
    let cap = nf * nf;
    let mut sigma2 = vec![0.0; n * n];
    let mut capped = 0;
    for i in 0..n {
        for j in (i + radius + 1)..n {
            let d = y[i] - y[j];
            let mut s = 1.0 / (d * d);
            if !(s <= cap) {
                s = cap;
                capped += 1;
            }
            sigma2[i * n + j] = s;
            sigma2[j * n + i] = s;
        }
    }
    if capped > 0 {
        log::warn!("{capped} long-range pairs with |y_a - y_b| < 1/N; weights capped at N^2");
    }
    let drift = (0..n).map(|i| sigma2[i * n..(i + 1) * n].iter().sum::<f64>() / nf).collect();
    let hat_y = (0..n)
        .map(|i| (0..n).map(|c| sigma2[i * n + c] * (y[c] - y[i])).sum::<f64>() / nf)
        .collect();
    Ok(WeightTable {
        n,
        sigma2,
        window_a: a,
        radius,
        drift,
        hat_y,
        capped,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retraction {
    #[default]
    Qr,
    Polar,
}

/// Projects a near-unitary matrix back onto the group.
pub fn retract(m: MatRef<'_, Complex64>, kind: Retraction) -> Result<CMat> {
    match kind {
        Retraction::Qr => qr_unitary_factor(m),
        Retraction::Polar => {
            let svd = m.svd().map_err(|_| Error::Retraction("svd failed".into()))?;
            let s = svd.S();
            if (0..m.ncols()).any(|k| !(s[k].re > 1e-12)) {
                return Err(Error::Retraction("rank loss".into()));
            }
            Ok(svd.U() * svd.V().adjoint())
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionState {
    pub u: CMat,
    pub t: f64,
    pub rng: SimRng,
    pub unitarity_defect: f64,
}

impl DiffusionState {
    pub fn identity(n: usize, rng: SimRng) -> Self {
        Self {
            u: identity(n),
            t: 0.0,
            rng,
            unitarity_defect: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UnitaryDiffusion {
    pub weights: WeightTable,
    pub beta: Beta,
    pub retraction: Retraction,
}

impl UnitaryDiffusion {
    pub fn new(y: &[f64], a: f64, beta: Beta) -> Result<Self> {
        Ok(Self {
            weights: build_weights(y, a)?,
            beta,
            retraction: Retraction::Qr,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.n
    }

    /// Increment `dW` over a step of length `h`.
    pub fn draw_dw(&self, h: f64, rng: &mut impl Rng) -> CMat {
        let n = self.n();
        let nf = n as f64;
        let mut dw = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + self.weights.radius + 1)..n {
                let var = h * self.weights.sigma2(i, j) / nf;
                let v = match self.beta {
                    Beta::Two => complex_normal(rng, var),
                    Beta::One => Complex64::new(0.0, -var.sqrt() * normal(rng)),
                };
                dw[(i, j)] = v;
                dw[(j, i)] = v.conj();
            }
        }
        dw
    }

    /// One Euler-Maruyama step from `u` with the given increment, then retraction.
    pub fn advance(&self, u: &CMat, dw: &CMat, h: f64) -> Result<CMat> {
        let n = self.n();
        let i = Complex64::new(0.0, 1.0);
        let mut next = dw * u;
        for c in 0..n {
            for r in 0..n {
                let damp = 1.0 - 0.5 * self.weights.drift[r] * h;
                next[(r, c)] = i * next[(r, c)] + damp * u[(r, c)];
            }
        }
        retract(next.as_ref(), self.retraction)
    }

    /// Advances `state` by `h`; returns the increment `dW` used.
    pub fn step(&self, state: &mut DiffusionState, h: f64) -> Result<CMat> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
        }
        let dw = self.draw_dw(h, &mut state.rng);
        state.u = self.advance(&state.u, &dw, h)?;
        state.t += h;
        state.unitarity_defect = unitarity_defect(state.u.as_ref());
        Ok(dw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub unitarity_defect: f64,
    pub norm_u_minus_i: f64,
    /// Frobenius norm of `W(t)`.
    pub norm_m: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_u: CMat,
    pub sup_norm_u_minus_i: f64,
    pub max_unitarity_defect: f64,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "t,unitarity_defect,norm_U_minus_I,norm_M";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            s.push_str(&format!("{:e},{:e},{:e},{:e}\n", p.t, p.unitarity_defect, p.norm_u_minus_i, p.norm_m));
        }
        s
    }
}

/// Power-iteration count used for `||U - I||`.
pub const NORM_ITERATIONS: usize = 20;

fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

/// Integrates `U` from the identity over `[0, horizon]` in `steps` steps.
pub fn trajectory(diff: &UnitaryDiffusion, horizon: f64, steps: usize, rng: SimRng) -> Result<Trajectory> {
    let n = diff.n();
    let mut state = DiffusionState::identity(n, rng);
    let mut points = vec![TrajectoryPoint {
        t: 0.0,
        unitarity_defect: 0.0,
        norm_u_minus_i: 0.0,
        norm_m: 0.0,
    }];
    if horizon == 0.0 {
        return Ok(Trajectory {
            points,
            final_u: state.u,
            sup_norm_u_minus_i: 0.0,
            max_unitarity_defect: 0.0,
        });
    }
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument("need steps >= 1 and horizon >= 0".into()));
    }
    let h = horizon / steps as f64;
    let eye = identity(n);
    let mut m = Mat::<Complex64>::zeros(n, n);
    let mut sup = 0.0f64;
    let mut worst = 0.0f64;
    for k in 1..=steps {
        let dw = diff.step(&mut state, h)?;
        m += &dw;
        state.t = k as f64 * h;
        let dev = operator_norm((&state.u - &eye).as_ref(), NORM_ITERATIONS);
        sup = sup.max(dev);
        worst = worst.max(state.unitarity_defect);
        points.push(TrajectoryPoint {
            t: state.t,
            unitarity_defect: state.unitarity_defect,
            norm_u_minus_i: dev,
            norm_m: frobenius(&m),
        });
    }
    Ok(Trajectory {
        points,
        final_u: state.u,
        sup_norm_u_minus_i: sup,
        max_unitarity_defect: worst,
    })
}

/// Hermitian Brownian increment `dB` over a step `h`: long-range entries are
/// `i sqrt(N) (y_a - y_b) dW_ab`, short-range entries (and the diagonal) are fresh.
/// Off-diagonal entries have `E |dB_ab|^2 = h`; the diagonal has variance `h`
/// for `beta = 2` and `2h` for `beta = 1`.
pub fn hermitian_noise(dw: &CMat, y: &[f64], radius: usize, beta: Beta, h: f64, rng: &mut impl Rng) -> Result<CMat> {
    let n = y.len();
    if dw.nrows() != n || dw.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dw.nrows(),
        });
    }
    let sn = (n as f64).sqrt();
    let i_unit = Complex64::new(0.0, 1.0);
    let mut db = Mat::zeros(n, n);
    for a in 0..n {
        let d = match beta {
            Beta::Two => h.sqrt() * normal(rng),
            Beta::One => (2.0 * h).sqrt() * normal(rng),
        };
        db[(a, a)] = Complex64::new(d, 0.0);
        for b in (a + 1)..n {
            let v = if b - a > radius {
                i_unit * sn * (y[a] - y[b]) * dw[(a, b)]
            } else {
                match beta {
                    Beta::Two => complex_normal(rng, h),
                    Beta::One => Complex64::new(h.sqrt() * normal(rng), 0.0),
                }
            };
            db[(a, b)] = v;
            db[(b, a)] = v.conj();
        }
    }
    Ok(db)
}

/// `diag(Q* dB Q)` for a unitary basis `Q`: `<q_i, dB q_i>`.
pub fn rotated_diagonal(db: &CMat, basis: MatRef<'_, Complex64>) -> Vec<f64> {
    let n = basis.ncols();
    let dq = db * basis;
    (0..n)
        .map(|i| (0..basis.nrows()).map(|a| (basis[(a, i)].conj() * dq[(a, i)]).re).sum())
        .collect()
}

/// `N^{-1/2} sum_{|a-b| <= radius} conj(w_ai) dB_ab w_bi`, the short-range martingale increment.
pub fn short_range_increment(db: &CMat, w: MatRef<'_, Complex64>, radius: usize) -> Vec<f64> {
    let n = w.nrows();
    let sn = (n as f64).sqrt();
    (0..w.ncols())
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..n {
                let lo = a.saturating_sub(radius);
                let hi = (a + radius).min(n - 1);
                let mut inner = Complex64::new(0.0, 0.0);
                for b in lo..=hi {
                    inner += db[(a, b)] * w[(b, i)];
                }
                acc += w[(a, i)].conj() * inner;
            }
            acc.re / sn
        })
        .collect()
}

/// `Z_i = <a_i, (U* hatY U - hatY) a_i>` for eigenvector columns `a` and `w = U a`.
pub fn hat_y_drift(hat_y: &[f64], a: MatRef<'_, Complex64>, w: MatRef<'_, Complex64>) -> Vec<f64> {
    let n = a.nrows();
    (0..a.ncols())
        .map(|i| (0..n).map(|r| hat_y[r] * (w[(r, i)].norm_sqr() - a[(r, i)].norm_sqr())).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_models::max_abs;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;

    fn spaced(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / n as f64).collect()
    }

    #[test]
    fn full_window_has_no_long_range() {
        let w = build_weights(&spaced(20), 1.0).unwrap();
        assert!(w.sigma2.iter().all(|&s| s == 0.0));
        assert!(w.drift.iter().all(|&a| a == 0.0));
        assert!(w.hat_y.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn drift_by_direct_summation() {
        let n = 100;
        let w = build_weights(&spaced(n), 0.2).unwrap();
        let alpha = 50usize;
        let nf = n as f64;
        let window = nf.powf(0.2);
        let mut want = 0.0;
        for beta in 0..n {
            let d = alpha.abs_diff(beta) as f64;
            if d >= window {
                want += nf * nf / (d * d);
            }
        }
        want /= nf;
        assert!((w.drift[alpha] - want).abs() <= 1e-9 * want);
        assert!(w.max_drift() <= 10.0 * nf.powf(0.8));
    }

    #[test]
    fn symmetric_spectrum_has_zero_hat_y_at_center() {
        let y: Vec<f64> = (0..21).map(|k| (k as f64 - 10.0) / 21.0).collect();
        let w = build_weights(&y, 0.3).unwrap();
        assert_abs_diff_eq!(w.hat_y[10], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn coincident_levels_are_capped() {
        let y = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let w = build_weights(&y, 0.2).unwrap();
        assert!(w.capped > 0);
        assert!(w.sigma2.iter().all(|&s| s <= 100.0));
    }

    #[test]
    fn zero_weights_freeze_u() {
        let diff = UnitaryDiffusion::new(&spaced(10), 1.0, Beta::Two).unwrap();
        let tr = trajectory(&diff, 0.1, 50, stream(1, "freeze", 0)).unwrap();
        assert!(max_abs((&tr.final_u - identity(10)).as_ref()) <= 1e-14);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let diff = UnitaryDiffusion::new(&spaced(10), 0.2, Beta::Two).unwrap();
        let tr = trajectory(&diff, 0.0, 10, stream(1, "zero", 0)).unwrap();
        assert_eq!(tr.points.len(), 1);
        assert_eq!(tr.sup_norm_u_minus_i, 0.0);
    }

    #[test]
    fn unitarity_is_maintained() {
        for beta in [Beta::One, Beta::Two] {
            let diff = UnitaryDiffusion::new(&spaced(12), 0.2, beta).unwrap();
            let tr = trajectory(&diff, 0.5, 1000, stream(2, "unit", 0)).unwrap();
            assert!(tr.max_unitarity_defect <= 1e-8);
            if beta == Beta::One {
                for j in 0..12 {
                    for i in 0..12 {
                        assert_eq!(tr.final_u[(i, j)].im, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn polar_and_qr_agree_to_first_order() {
        let diff = UnitaryDiffusion::new(&spaced(8), 0.2, Beta::Two).unwrap();
        let mut rng = stream(3, "retr", 0);
        let h = 1e-6;
        let dw = diff.draw_dw(h, &mut rng);
        let u0 = identity(8);
        let a = diff.advance(&u0, &dw, h).unwrap();
        let polar = UnitaryDiffusion {
            retraction: Retraction::Polar,
            ..diff.clone()
        };
        let b = polar.advance(&u0, &dw, h).unwrap();
        assert!(max_abs((&a - &b).as_ref()) <= 1e-4);
        assert!(unitarity_defect(b.as_ref()) <= 1e-12);
    }

    #[test]
    fn ito_isometry_for_w() {
        let n = 20;
        let diff = UnitaryDiffusion::new(&spaced(n), 0.2, Beta::Two).unwrap();
        let h = 1e-3;
        let trials = 10_000;
        let mut rng = stream(4, "ito", 0);
        let mean: f64 = (0..trials)
            .map(|_| {
                let dw = diff.draw_dw(h, &mut rng);
                dw.norm_l2().powi(2)
            })
            .sum::<f64>()
            / trials as f64;
        let want = h * diff.weights.trace_drift();
        assert!((mean / want - 1.0).abs() < 0.2, "{mean} vs {want}");
    }

    #[test]
    fn noise_is_hermitian_with_unit_rate() {
        let n = 12;
        let y = spaced(n);
        let diff = UnitaryDiffusion::new(&y, 0.3, Beta::Two).unwrap();
        let h = 0.01;
        let mut rng = stream(5, "noise", 0);
        let draws = 100_000 / (n * (n - 1) / 2) + 1;
        let (mut long, mut short, mut nl, mut ns) = (0.0, 0.0, 0usize, 0usize);
        for _ in 0..draws {
            let dw = diff.draw_dw(h, &mut rng);
            let db = hermitian_noise(&dw, &y, diff.weights.radius, Beta::Two, h, &mut rng).unwrap();
            assert_eq!(crate::matrix_models::hermitian_defect(db.as_ref()), 0.0);
            for a in 0..n {
                for b in (a + 1)..n {
                    if diff.weights.is_long_range(a, b) {
                        long += db[(a, b)].norm_sqr();
                        nl += 1;
                    } else {
                        short += db[(a, b)].norm_sqr();
                        ns += 1;
                    }
                }
            }
        }
        let (long, short) = (long / nl as f64, short / ns as f64);
        assert!((long / h - 1.0).abs() < 0.03, "long {long}");
        assert!((short / h - 1.0).abs() < 0.03, "short {short}");
    }

    #[test]
    fn rotated_diagonal_with_identity_is_diagonal() {
        let n = 6;
        let y = spaced(n);
        let diff = UnitaryDiffusion::new(&y, 0.3, Beta::Two).unwrap();
        let mut rng = stream(6, "diag", 0);
        let dw = diff.draw_dw(0.1, &mut rng);
        let db = hermitian_noise(&dw, &y, diff.weights.radius, Beta::Two, 0.1, &mut rng).unwrap();
        let d = rotated_diagonal(&db, identity(n).as_ref());
        for a in 0..n {
            assert_eq!(d[a], db[(a, a)].re);
        }
    }

    #[test]
    fn hat_y_term_vanishes_at_identity() {
        let n = 5;
        let a = identity(n);
        let z = hat_y_drift(&[1.0, 2.0, 3.0, 4.0, 5.0], a.as_ref(), a.as_ref());
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hat_y_perturbation_is_controlled_by_drift() {
        let n = 40;
        let y: Vec<f64> = (0..n).map(|k| 2.0 * (k as f64 / n as f64) - 1.0).collect();
        let diff = UnitaryDiffusion::new(&y, 0.2, Beta::Two).unwrap();
        let tr = trajectory(&diff, 0.05, 100, stream(7, "haty", 0)).unwrap();
        let u = &tr.final_u;
        let hy = crate::matrix_models::diag(&diff.weights.hat_y);
        let conj = u * &hy * u.adjoint();
        let lhs = operator_norm((&conj - &hy).as_ref(), 200);
        let dev = operator_norm((u - identity(n)).as_ref(), 200);
        assert!(lhs <= 2.0 * diff.weights.hat_y_norm() * dev * (1.0 + 1e-6));
    }
}
