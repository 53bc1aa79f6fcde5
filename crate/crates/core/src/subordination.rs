//! Subordination equations for `mu_1 ⊞ mu_2` and the semicircle flow.
//!
//! The pair `(w1, w2)` solves `-w2 = mhat_2(z - w1)`, `-w1 = mhat_1(z - w2)` with
//! `mhat(zeta) = -zeta - 1/m(zeta)`; then `m = m_2(z - w1) = m_1(z - w2)` and
//! `1/m = w1 + w2 - z`. The solver runs Newton on the rewritten pair with a
//! backtracking line search that keeps `Im w <= 0`, falls back to a damped
//! fixed-point step whenever Newton fails to reduce the defect, and reaches
//! small `Im z` by continuation from `Im z = 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{inversion_from_density, Inversion, Measure};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Smaller `Im z` is raised to this value.
    pub eta_min: f64,
    /// Weight of the new iterate in a fixed-point step.
    pub damping: f64,
    /// Continuation starts here when `Im z` is smaller.
    pub eta_start: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 50_000,
            eta_min: 1e-8,
            damping: 0.5,
            eta_start: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubordinationSolution {
    pub z: Complex64,
    pub m: Complex64,
    pub w1: Complex64,
    pub w2: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SubordinationSolution {
    /// `E, eta, Re m, Im m, Re w1, Im w1, Re w2, Im w2, residual, iterations`.
    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.z.re,
            self.z.im,
            self.m.re,
            self.m.im,
            self.w1.re,
            self.w1.im,
            self.w2.re,
            self.w2.im,
            self.residual,
            self.iterations
        )
    }

    pub const CSV_HEADER: &'static str = "E,eta,re_m,im_m,re_w1,im_w1,re_w2,im_w2,residual,iterations";
}

/// Transform of one input measure together with its hat transform.
struct Hat<'a> {
    measure: &'a Measure,
    atom: Option<f64>,
}

struct HatValue {
    m: Complex64,
    hat: Complex64,
    dhat: Complex64,
}

impl<'a> Hat<'a> {
    fn new(measure: &'a Measure) -> Self {
        Self {
            measure,
            atom: measure.single_atom(),
        }
    }

    fn eval(&self, zeta: Complex64) -> HatValue {
        match self.atom {
            // 1/m = c - zeta, so mhat = -c identically
            Some(c) => HatValue {
                m: (c - zeta).inv(),
                hat: Complex64::new(-c, 0.0),
                dhat: Complex64::new(0.0, 0.0),
            },
            None => {
                let (m, dm) = self.measure.stieltjes_unchecked(zeta);
                let inv = m.inv();
                HatValue {
                    m,
                    hat: -zeta - inv,
                    dhat: -1.0 + dm * inv * inv,
                }
            }
        }
    }
}

struct Defect {
    g1: Complex64,
    g2: Complex64,
    d1: Complex64,
    d2: Complex64,
    m: Complex64,
    residual: f64,
    merit: f64,
    hat1: Complex64,
    hat2: Complex64,
}

fn defect(h1: &Hat, h2: &Hat, z: Complex64, w1: Complex64, w2: Complex64) -> Defect {
    let v1 = h1.eval(z - w2);
    let v2 = h2.eval(z - w1);
    let g1 = w1 + v1.hat;
    let g2 = w2 + v2.hat;
    let m = v2.m;
    // defects of m = m_2(z-w1) = m_1(z-w2), 1/m = w1 + w2 - z
    let residual = (v1.m - m).norm().max((m.inv() - (w1 + w2 - z)).norm());
    Defect {
        g1,
        g2,
        d1: v1.dhat,
        d2: v2.dhat,
        m,
        residual: if residual.is_finite() { residual } else { f64::INFINITY },
        merit: g1.norm_sqr() + g2.norm_sqr(),
        hat1: v1.hat,
        hat2: v2.hat,
    }
}

fn lower(w: Complex64) -> Complex64 {
    Complex64::new(w.re, w.im.min(0.0))
}

fn solve_from(
    h1: &Hat,
    h2: &Hat,
    z: Complex64,
    start: (Complex64, Complex64),
    cfg: &SolverConfig,
    max_iter: usize,
) -> SubordinationSolution {
    let (mut w1, mut w2) = (lower(start.0), lower(start.1));
    let mut d = defect(h1, h2, z, w1, w2);
    let mut iterations = 0;
    while iterations < max_iter && !(d.residual <= cfg.tol) {
        iterations += 1;
        let det = 1.0 - d.d1 * d.d2;
        let mut accepted = false;
        if det.norm() > 1e-300 {
            let s1 = -(d.g1 + d.d1 * d.g2) / det;
            let s2 = -d.g2 + d.d2 * s1;
            let mut lambda = 1.0;
            for _ in 0..40 {
                let n1 = lower(w1 + lambda * s1);
                let n2 = lower(w2 + lambda * s2);
                let nd = defect(h1, h2, z, n1, n2);
                if nd.merit < d.merit || nd.residual <= cfg.tol {
                    w1 = n1;
                    w2 = n2;
                    d = nd;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if !accepted {
            let a = cfg.damping;
            let n1 = (1.0 - a) * w1 - a * d.hat1;
            let n2 = (1.0 - a) * w2 - a * d.hat2;
            let nd = defect(h1, h2, z, n1, n2);
            if n1 == w1 && n2 == w2 {
                break;
            }
            w1 = n1;
            w2 = n2;
            d = nd;
        }
    }
    SubordinationSolution {
        z,
        m: d.m,
        w1,
        w2,
        residual: d.residual,
        iterations,
        converged: d.residual <= cfg.tol,
    }
}

fn clamp_eta(z: Complex64, cfg: &SolverConfig) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::OffUpperHalfPlane(z.im));
    }
    if z.im < cfg.eta_min {
        log::debug!("Im z = {:e} raised to {:e}", z.im, cfg.eta_min);
        return Ok(Complex64::new(z.re, cfg.eta_min));
    }
    Ok(z)
}

fn initial_guess(m1: &Measure, m2: &Measure) -> (Complex64, Complex64) {
    (Complex64::new(m1.mean(), 0.0), Complex64::new(m2.mean(), 0.0))
}

/// Continuation in `eta` from `cfg.eta_start` down to `Im z` at fixed `Re z`.
fn solve_continued(h1: &Hat, h2: &Hat, z: Complex64, start: (Complex64, Complex64), cfg: &SolverConfig) -> SubordinationSolution {
    let mut w = start;
    let mut used = 0;
    let mut eta = cfg.eta_start.max(z.im);
    loop {
        let target = if eta * 0.5 <= z.im { z.im } else { eta };
        let zz = Complex64::new(z.re, target);
        let budget = cfg.max_iter.saturating_sub(used).max(1);
        let sol = solve_from(h1, h2, zz, w, cfg, budget);
        used += sol.iterations;
        if target == z.im {
            return SubordinationSolution {
                iterations: used,
                ..sol
            };
        }
        w = (sol.w1, sol.w2);
        eta *= 0.5;
    }
}

/// Solves the subordination system at `z`. Non-convergence is reported through
/// `converged = false` with the best iterate; only `Im z <= 0` is an error.
pub fn solve_pointwise(m1: &Measure, m2: &Measure, z: Complex64, cfg: &SolverConfig) -> Result<SubordinationSolution> {
    let z = clamp_eta(z, cfg)?;
    let (h1, h2) = (Hat::new(m1), Hat::new(m2));
    Ok(solve_continued(&h1, &h2, z, initial_guess(m1, m2), cfg))
}

/// Warm-started solve at `z` from a nearby solution, falling back to a full
/// continuation when the warm start does not converge.
pub fn solve_near(
    m1: &Measure,
    m2: &Measure,
    z: Complex64,
    near: &SubordinationSolution,
    cfg: &SolverConfig,
) -> Result<SubordinationSolution> {
    let z = clamp_eta(z, cfg)?;
    let (h1, h2) = (Hat::new(m1), Hat::new(m2));
    let warm = solve_from(&h1, &h2, z, (near.w1, near.w2), cfg, 200.min(cfg.max_iter));
    if warm.converged {
        return Ok(warm);
    }
    let cold = solve_continued(&h1, &h2, z, initial_guess(m1, m2), cfg);
    Ok(SubordinationSolution {
        iterations: cold.iterations + warm.iterations,
        ..cold
    })
}

/// For every `E`, walks down `eta_path` warm-starting each level from the
/// previous one; returns the solutions at the last `eta`.
pub fn solve_curve(
    m1: &Measure,
    m2: &Measure,
    e_grid: &[f64],
    eta_path: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SubordinationSolution>> {
    if eta_path.is_empty() || eta_path[0] < 1.0 {
        return Err(Error::InvalidArgument("eta path must start at >= 1".into()));
    }
    if eta_path.iter().any(|&e| !(e > 0.0)) || eta_path.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eta path must be positive and strictly decreasing".into()));
    }
    let (h1, h2) = (Hat::new(m1), Hat::new(m2));
    let start = initial_guess(m1, m2);
    let out = par::map(e_grid, |&e| {
        let mut w = start;
        let mut used = 0;
        let mut last = None;
        for &eta in eta_path {
            let z = clamp_eta(Complex64::new(e, eta), cfg).expect("eta checked positive");
            let budget = cfg.max_iter.saturating_sub(used).max(1);
            let sol = solve_from(&h1, &h2, z, w, cfg, budget);
            used += sol.iterations;
            w = (sol.w1, sol.w2);
            last = Some(SubordinationSolution { iterations: used, ..sol });
        }
        last.expect("non-empty path")
    });
    Ok(out)
}

/// Solutions along `E` at a fixed `eta`, sweeping left to right in chunks so
/// each point warm-starts from its neighbour.
pub fn solve_line(
    m1: &Measure,
    m2: &Measure,
    e_grid: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<Vec<SubordinationSolution>> {
    if !(eta > 0.0) {
        return Err(Error::OffUpperHalfPlane(eta));
    }
    const CHUNK: usize = 64;
    let chunks: Vec<&[f64]> = e_grid.chunks(CHUNK).collect();
    let parts = par::map(&chunks, |chunk| -> Result<Vec<SubordinationSolution>> {
        let mut out: Vec<SubordinationSolution> = Vec::with_capacity(chunk.len());
        for &e in chunk.iter() {
            let z = Complex64::new(e, eta);
            let sol = match out.last() {
                Some(prev) => solve_near(m1, m2, z, prev, cfg)?,
                None => solve_pointwise(m1, m2, z, cfg)?,
            };
            out.push(sol);
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(e_grid.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(all)
}

/// Default `Im z` used to read a density off the subordination solution.
pub const DENSITY_ETA: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FreeConvolution {
    pub inversion: Inversion,
    pub solutions: Vec<SubordinationSolution>,
}

impl FreeConvolution {
    pub fn density(&self) -> &Measure {
        &self.inversion.measure
    }

    pub fn converged_fraction(&self) -> f64 {
        let n = self.solutions.iter().filter(|s| s.converged).count();
        n as f64 / self.solutions.len().max(1) as f64
    }
}

/// Density of `mu_1 ⊞ mu_2` on `grid`, read off at `Im z = DENSITY_ETA`.
pub fn free_convolution(m1: &Measure, m2: &Measure, grid: &[f64], cfg: &SolverConfig) -> Result<FreeConvolution> {
    free_convolution_at(m1, m2, grid, DENSITY_ETA, cfg)
}

pub fn free_convolution_at(
    m1: &Measure,
    m2: &Measure,
    grid: &[f64],
    eta: f64,
    cfg: &SolverConfig,
) -> Result<FreeConvolution> {
    let solutions = solve_line(m1, m2, grid, eta, cfg)?;
    let bad = solutions.iter().filter(|s| !s.converged).count();
    if bad > 0 {
        log::warn!("{bad} of {} grid points did not converge", solutions.len());
    }
    let density = solutions.iter().map(|s| (s.m.im / PI).max(0.0)).collect();
    let inversion = inversion_from_density(grid, density)?;
    Ok(FreeConvolution { inversion, solutions })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityDiagnostics {
    pub a: Complex64,
    pub b: Complex64,
    pub one_minus_ab: f64,
    pub r1: Complex64,
    pub r2: Complex64,
}

/// Coefficients `a = mhat_2'(z - w1)` and `b = mhat_1'(z - w2)` of the
/// linearized system at a single solution; `r1 = r2 = 0`.
pub fn stability_diagnostics(sol: &SubordinationSolution, m1: &Measure, m2: &Measure) -> StabilityDiagnostics {
    let a = Hat::new(m2).eval(sol.z - sol.w1).dhat;
    let b = Hat::new(m1).eval(sol.z - sol.w2).dhat;
    let zero = Complex64::new(0.0, 0.0);
    StabilityDiagnostics {
        a,
        b,
        one_minus_ab: (1.0 - a * b).norm(),
        r1: zero,
        r2: zero,
    }
}

/// Coefficients comparing the limiting solution `limit` (measures `m1`, `m2`)
/// with the finite-N solution `finite` (measures `m1n`, `m2n`) at the same `z`.
/// They satisfy `w2 - fw2 = a (w1 - fw1) + r1` and `w1 - fw1 = b (w2 - fw2) + r2`.
pub fn stability_diagnostics_pair(
    limit: &SubordinationSolution,
    finite: &SubordinationSolution,
    m1: &Measure,
    m2: &Measure,
    m1n: &Measure,
    m2n: &Measure,
) -> StabilityDiagnostics {
    let z = limit.z;
    let quotient = |h: &Hat, zeta: Complex64, zeta_f: Complex64| {
        let (v, vf) = (h.eval(zeta), h.eval(zeta_f));
        if (zeta - zeta_f).norm() < 1e-9 * (1.0 + zeta.norm()) {
            0.5 * (v.dhat + vf.dhat)
        } else {
            (v.hat - vf.hat) / (zeta - zeta_f)
        }
    };
    let (h1, h2) = (Hat::new(m1), Hat::new(m2));
    let a = quotient(&h2, z - limit.w1, z - finite.w1);
    let b = quotient(&h1, z - limit.w2, z - finite.w2);
    let r1 = (m2.stieltjes_unchecked(z - finite.w1).0).inv() - (m2n.stieltjes_unchecked(z - finite.w1).0).inv();
    let r2 = (m1.stieltjes_unchecked(z - finite.w2).0).inv() - (m1n.stieltjes_unchecked(z - finite.w2).0).inv();
    StabilityDiagnostics {
        a,
        b,
        one_minus_ab: (1.0 - a * b).norm(),
        r1,
        r2,
    }
}

/// Result of solving `m_t(z) = m_0(z + t m_t(z))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub m: Complex64,
    /// `z + t m`, the point where `m_0` is evaluated.
    pub w: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn flow_newton<F>(m0: &F, t: f64, z: Complex64, w_start: Complex64, cfg: &SolverConfig, max_iter: usize) -> FlowSolution
where
    F: Fn(Complex64) -> Complex64,
{
    let project = |w: Complex64| Complex64::new(w.re, w.im.max(z.im));
    let mut w = project(w_start);
    let mut mw = m0(w);
    let mut f = w - z - t * mw;
    let mut iterations = 0;
    let residual = |f: Complex64| (f / t).norm();
    while iterations < max_iter && !(residual(f) <= cfg.tol) {
        iterations += 1;
        let h = 1e-3 * w.im;
        let dm = (m0(w + h) - m0(w - h)) / (2.0 * h);
        let step = -f / (1.0 - t * dm);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let wn = project(w + lambda * step);
            let mn = m0(wn);
            let fnew = wn - z - t * mn;
            if fnew.norm() < f.norm() {
                w = wn;
                mw = mn;
                f = fnew;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            let wn = project(z + t * mw);
            if wn == w {
                break;
            }
            w = wn;
            mw = m0(w);
            f = w - z - t * mw;
        }
    }
    // m_t = m_0(w) is exact at w; the defect is how far w sits from z + t m_t
    let res = residual(f);
    FlowSolution {
        m: mw,
        w,
        residual: res,
        iterations,
        converged: res <= cfg.tol,
    }
}

/// Free convolution of the transform `m0` with the semicircle law of variance `t`.
pub fn semicircle_flow<F>(m0: F, t: f64, z: Complex64, cfg: &SolverConfig) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let sol = semicircle_flow_solve(&m0, t, z, None, cfg)?;
    if !sol.converged {
        return Err(Error::NoConvergence {
            what: "semicircle flow",
            residual: sol.residual,
        });
    }
    Ok(sol.m)
}

/// As [`semicircle_flow`], returning the full solution; `warm` is a nearby `w`.
pub fn semicircle_flow_solve<F>(m0: &F, t: f64, z: Complex64, warm: Option<Complex64>, cfg: &SolverConfig) -> Result<FlowSolution>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("flow time must be >= 0, got {t}")));
    }
    let z = clamp_eta(z, cfg)?;
    if t == 0.0 {
        return Ok(FlowSolution {
            m: m0(z),
            w: z,
            residual: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    if let Some(w) = warm {
        let sol = flow_newton(m0, t, z, w, cfg, 100.min(cfg.max_iter));
        if sol.converged {
            return Ok(sol);
        }
    }
    // far from the axis the map w -> z + t m0(w) is a contraction
    let top = z.im.max(cfg.eta_start * (1.0 + t));
    let mut eta = top;
    let mut zz = Complex64::new(z.re, eta);
    let mut w = zz + t * m0(zz);
    let mut used = 0;
    loop {
        let target = if eta * 0.5 <= z.im { z.im } else { eta };
        zz = Complex64::new(z.re, target);
        let budget = cfg.max_iter.saturating_sub(used).max(1);
        let sol = flow_newton(m0, t, zz, w, cfg, budget);
        used += sol.iterations;
        if target == z.im {
            return Ok(FlowSolution { iterations: used, ..sol });
        }
        w = sol.w;
        eta *= 0.5;
    }
}

/// Classical locations: the `N`-quantiles of `density`.
pub fn classical_locations(density: &Measure, n: usize) -> Vec<f64> {
    density.quantiles(n)
}

/// Evolves classical locations `gamma` of `m0` to time `t` by explicit Euler on
/// `d gamma_i / dt = -Re m_s(gamma_i)`, with `m_s` the semicircle flow of `m0`
/// evaluated at `gamma_i + i eta`.
pub fn evolve_classical_locations<F>(
    m0: F,
    gamma: &[f64],
    t: f64,
    steps: usize,
    eta: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    if steps == 0 || !(t >= 0.0) {
        return Err(Error::InvalidArgument("need steps >= 1 and t >= 0".into()));
    }
    let dt = t / steps as f64;
    let idx: Vec<usize> = (0..gamma.len()).collect();
    let out = par::map(&idx, |&i| -> Result<f64> {
        let mut g = gamma[i];
        let mut warm = None;
        for k in 0..steps {
            let s = k as f64 * dt;
            let sol = semicircle_flow_solve(&m0, s, Complex64::new(g, eta), warm, cfg)?;
            warm = Some(sol.w);
            g -= dt * sol.m.re;
        }
        Ok(g)
    });
    out.into_iter().collect()
}
