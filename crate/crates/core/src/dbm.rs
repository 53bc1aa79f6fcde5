//! Dyson Brownian motion, its perturbed variant, and the coupling between the
//! eigenvalues of the diffused matrix model and a clean DBM driven by the same noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_models::{assemble_tilde_h, diag, eigh, regularize, sample_haar, short_range_gamma, Beta, CMat, EnsembleConfig, EigenSystem};
use crate::rng::{normal, SimRng};
use crate::unitary_diffusion::{hat_y_drift, hermitian_noise, rotated_diagonal, short_range_increment, UnitaryDiffusion};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbmState {
    pub lambda: Vec<f64>,
    pub t: f64,
    pub beta: Beta,
}

impl DbmState {
    pub fn new(mut lambda: Vec<f64>, beta: Beta) -> Self {
        lambda.sort_by(f64::total_cmp);
        Self { lambda, t: 0.0, beta }
    }
}

/// Smallest neighbour gap and the index of its lower end (`(inf, 0)` for `N < 2`).
pub fn min_gap(lambda: &[f64]) -> (f64, usize) {
    lambda
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[1] - w[0], i))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardPolicy {
    /// Steps starting from a configuration with a gap below this are subdivided.
    pub guard: f64,
    pub max_halvings: u32,
}

impl GuardPolicy {
    /// `delta_guard = 1e-3 / N`, up to 10 halvings.
    pub fn for_size(n: usize) -> Self {
        Self {
            guard: 1e-3 / n.max(1) as f64,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub substeps: usize,
    pub deepest: u32,
    /// Time spent starting from a gap below the guard.
    pub guarded_time: f64,
}

impl StepReport {
    pub fn triggered(&self) -> bool {
        self.deepest > 0
    }
}

/// Optional perturbation terms of the eigenvalue SDE.
#[derive(Clone, Copy)]
pub struct Perturbation<'a> {
    /// `N x N` row-major overlaps `gamma_ij`.
    pub gamma: &'a [f64],
    pub dm_short: &'a [f64],
    pub z: &'a [f64],
}

fn euler(lambda: &[f64], beta: Beta, db: &[f64], scale: f64, h: f64, p: Option<&Perturbation>) -> Vec<f64> {
    let n = lambda.len();
    let sn = (n as f64).sqrt();
    let c = beta.value() / (2.0 * n as f64);
    (0..n)
        .map(|i| {
            let li = lambda[i];
            let mut drift = 0.0;
            match p {
                None => {
                    for (j, &lj) in lambda.iter().enumerate() {
                        if j != i {
                            drift += 1.0 / (li - lj);
                        }
                    }
                }
                Some(p) => {
                    let row = &p.gamma[i * n..(i + 1) * n];
                    for (j, &lj) in lambda.iter().enumerate() {
                        if j != i {
                            drift += (1.0 - row[j]) / (li - lj);
                        }
                    }
                }
            }
            let mut next = li + scale * db[i] / sn;
            if let Some(p) = p {
                next -= scale * p.dm_short[i];
            }
            next += c * drift * h;
            if let Some(p) = p {
                next += p.z[i] * h;
            }
            next
        })
        .collect()
}

fn strictly_ascending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite())
}

#[allow(clippy::too_many_arguments)]
fn guarded(
    lambda: &[f64],
    beta: Beta,
    db: &[f64],
    scale: f64,
    h: f64,
    p: Option<&Perturbation>,
    policy: &GuardPolicy,
    level: u32,
    report: &mut StepReport,
) -> Result<Vec<f64>> {
    let (gap, idx) = min_gap(lambda);
    let below = gap < policy.guard;
    let next = euler(lambda, beta, db, scale, h, p);
    let ok = strictly_ascending(&next);
    if (ok && !below) || (ok && level >= policy.max_halvings) {
        report.substeps += 1;
        report.deepest = report.deepest.max(level);
        if below {
            report.guarded_time += h;
        }
        return Ok(next);
    }
    if level >= policy.max_halvings {
        let (g, i) = min_gap(&next);
        return Err(Error::Collision {
            index: if g.is_finite() { i } else { idx },
            halvings: level,
            gap: g,
        });
    }
    // split the increment evenly: each half carries half of the noise
    let half = 0.5 * scale;
    let mid = guarded(lambda, beta, db, half, 0.5 * h, p, policy, level + 1, report)?;
    guarded(&mid, beta, db, half, 0.5 * h, p, policy, level + 1, report)
}

fn check_inputs(state: &DbmState, db: &[f64], h: f64) -> Result<()> {
    if db.len() != state.lambda.len() {
        return Err(Error::DimensionMismatch {
            expected: state.lambda.len(),
            found: db.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    Ok(())
}

/// `d mu_i = dB_i / sqrt(N) + (beta / 2N) sum_{j != i} dt / (mu_i - mu_j)`, one
/// Euler step with the min-gap guard.
pub fn dbm_step(state: &DbmState, db: &[f64], h: f64, policy: &GuardPolicy) -> Result<(DbmState, StepReport)> {
    check_inputs(state, db, h)?;
    let mut report = StepReport::default();
    let lambda = guarded(&state.lambda, state.beta, db, 1.0, h, None, policy, 0, &mut report)?;
    Ok((
        DbmState {
            lambda,
            t: state.t + h,
            beta: state.beta,
        },
        report,
    ))
}

/// `d lambda_i = dB_i / sqrt(N) - dM_i + (beta / 2N) sum_{j != i} (1 - gamma_ij) dt / (lambda_i - lambda_j) + Z_i dt`.
pub fn perturbed_dbm_step(
    state: &DbmState,
    db: &[f64],
    p: &Perturbation,
    h: f64,
    policy: &GuardPolicy,
) -> Result<(DbmState, StepReport)> {
    check_inputs(state, db, h)?;
    let n = state.lambda.len();
    if p.gamma.len() != n * n || p.dm_short.len() != n || p.z.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.dm_short.len(),
        });
    }
    let mut report = StepReport::default();
    let lambda = guarded(&state.lambda, state.beta, db, 1.0, h, Some(p), policy, 0, &mut report)?;
    Ok((
        DbmState {
            lambda,
            t: state.t + h,
            beta: state.beta,
        },
        report,
    ))
}

/// Standard eigenvalue noise `dB_i` over a step `h` (variance `h`).
pub fn standard_noise(n: usize, h: f64, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| h.sqrt() * normal(rng)).collect()
}

/// Where the perturbed process comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoupleMode {
    /// Perturbed SDE with `gamma_ij = level * 1{|i - j| < N^a}`, `Z = 0`, `dM = 0`.
    Synthetic { level: f64 },
    /// Eigenvalues of the diffused matrix model, recomputed every step.
    Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupleConfig {
    pub ensemble: EnsembleConfig,
    pub mode: CoupleMode,
    pub steps: usize,
    /// When set, the clean noise is damped by `(1 + N^-c2)^(-1/2)`.
    pub noise_damping_c2: Option<f64>,
}

impl CoupleConfig {
    pub fn new(ensemble: EnsembleConfig, mode: CoupleMode) -> Self {
        Self {
            ensemble,
            mode,
            steps: 200,
            noise_damping_c2: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoupledPaths {
    pub times: Vec<f64>,
    pub lambda_path: Vec<Vec<f64>>,
    pub mu_path: Vec<Vec<f64>>,
    /// `(t, sup_{i in bulk} |lambda_i - mu_i|)`.
    pub sup_diff: Vec<(f64, f64)>,
    pub min_gap_lambda: Vec<f64>,
    pub min_gap_mu: Vec<f64>,
    pub bulk: Vec<usize>,
    pub guarded_time_mu: f64,
}

impl CoupledPaths {
    pub const CSV_HEADER: &'static str = "t,sup_diff,min_gap_lambda,min_gap_mu";

    pub fn final_sup_diff(&self) -> f64 {
        self.sup_diff.last().map_or(0.0, |p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for k in 0..self.times.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                self.times[k], self.sup_diff[k].1, self.min_gap_lambda[k], self.min_gap_mu[k]
            ));
        }
        s
    }
}

fn sup_over(bulk: &[usize], a: &[f64], b: &[f64]) -> f64 {
    bulk.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// The deterministic pieces of one trial: spectra, fixed matrices, diffusion.
pub struct MatrixModel {
    pub x: CMat,
    pub y: CMat,
    pub y_values: Vec<f64>,
    pub v: CMat,
    pub diffusion: UnitaryDiffusion,
    pub horizon: f64,
}

impl MatrixModel {
    /// Draws `V` and the regularized `X` from `rng`.
    pub fn sample(cfg: &EnsembleConfig, rng: &mut SimRng) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let x_values = cfg.x.values(n)?;
        let y_values = cfg.y.values(n)?;
        let x = regularize(&x_values, cfg.epsilon_reg, cfg.beta, rng);
        let v = sample_haar(n, cfg.beta, rng);
        let diffusion = UnitaryDiffusion::new(&y_values, cfg.a, cfg.beta)?;
        Ok(Self {
            x,
            y: diag(&y_values),
            y_values,
            v,
            diffusion,
            horizon: cfg.horizon(),
        })
    }

    pub fn tilde_h(&self, u: &CMat, t: f64) -> Result<CMat> {
        assemble_tilde_h(
            self.x.as_ref(),
            self.y.as_ref(),
            self.v.as_ref(),
            u.as_ref(),
            t,
            self.horizon,
            &self.diffusion.weights.hat_y,
        )
    }
}

/// Everything the eigenvalue SDE needs at one instant of the matrix model.
pub struct SdeInputs {
    pub db: CMat,
    pub dw: CMat,
    /// `<w_i, dB w_i>`, the shared eigenvalue noise.
    pub noise: Vec<f64>,
    pub dm_short: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

/// Draws the step noise and evaluates the coefficients of the eigenvalue SDE at `(U, es)`.
pub fn sde_inputs(model: &MatrixModel, u: &CMat, es: &EigenSystem, h: f64, rng: &mut SimRng) -> Result<SdeInputs> {
    let diff = &model.diffusion;
    let w = u * &es.vectors;
    let dw = diff.draw_dw(h, rng);
    let db = hermitian_noise(&dw, &model.y_values, diff.weights.radius, diff.beta, h, rng)?;
    let noise = rotated_diagonal(&db, w.as_ref());
    let dm_short = short_range_increment(&db, w.as_ref(), diff.weights.radius);
    let gamma = short_range_gamma(w.as_ref(), diff.weights.window_a);
    let z = hat_y_drift(&diff.weights.hat_y, es.vectors.as_ref(), w.as_ref());
    Ok(SdeInputs {
        db,
        dw,
        noise,
        dm_short,
        gamma,
        z,
    })
}

/// Clean-DBM time scale: the noise `<w, dB w>` has variance `2h/beta`, which
/// is standard noise for the DBM clock run at `2h/beta`.
fn clean_clock(beta: Beta, h: f64) -> f64 {
    match beta {
        Beta::Two => h,
        Beta::One => 2.0 * h,
    }
}

/// Runs one coupled trial on `[0, T]` and records `sup_{i in bulk} |lambda_i - mu_i|`.
pub fn couple_run(cfg: &CoupleConfig, bulk: &[usize], rng: &mut SimRng) -> Result<CoupledPaths> {
    let ens = &cfg.ensemble;
    let n = ens.n;
    if cfg.steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if bulk.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("bulk index out of range".into()));
    }
    let model = MatrixModel::sample(ens, rng)?;
    let horizon = model.horizon;
    let h = horizon / cfg.steps as f64;
    let policy = GuardPolicy::for_size(n);
    let damping = cfg
        .noise_damping_c2
        .map_or(1.0, |c2| (1.0 + (n as f64).powf(-c2)).powf(-0.5));

    let mut u = crate::matrix_models::identity(n);
    let mut es = eigh(model.tilde_h(&u, 0.0)?.as_ref())?;
    let mut lambda = DbmState::new(es.values.clone(), ens.beta);
    let mut mu = lambda.clone();

    let mut out = CoupledPaths {
        times: vec![0.0],
        lambda_path: vec![lambda.lambda.clone()],
        mu_path: vec![mu.lambda.clone()],
        sup_diff: vec![(0.0, 0.0)],
        min_gap_lambda: vec![min_gap(&lambda.lambda).0],
        min_gap_mu: vec![min_gap(&mu.lambda).0],
        bulk: bulk.to_vec(),
        guarded_time_mu: 0.0,
    };

    let synthetic_gamma = match &cfg.mode {
        CoupleMode::Synthetic { level } => {
            let r = crate::matrix_models::short_range_radius(n, ens.a);
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    if i.abs_diff(j) <= r {
                        g[i * n + j] = *level;
                    }
                }
            }
            Some(g)
        }
        CoupleMode::Matrix => None,
    };
    let zeros = vec![0.0; n];

    for k in 1..=cfg.steps {
        let t = k as f64 * h;
        match &synthetic_gamma {
            Some(gamma) => {
                let db = standard_noise(n, h, rng);
                let p = Perturbation {
                    gamma,
                    dm_short: &zeros,
                    z: &zeros,
                };
                lambda = perturbed_dbm_step(&lambda, &db, &p, h, &policy)?.0;
                let damped: Vec<f64> = db.iter().map(|v| v * damping).collect();
                let (next, rep) = dbm_step(&mu, &damped, h, &policy)?;
                out.guarded_time_mu += rep.guarded_time;
                mu = next;
            }
            None => {
                let inputs = sde_inputs(&model, &u, &es, h, rng)?;
                let damped: Vec<f64> = inputs.noise.iter().map(|v| v * damping).collect();
                let (next, rep) = dbm_step(&mu, &damped, clean_clock(ens.beta, h), &policy)?;
                out.guarded_time_mu += rep.guarded_time;
                mu = DbmState { t, ..next };
                u = model.diffusion.advance(&u, &inputs.dw, h)?;
                es = eigh(model.tilde_h(&u, t)?.as_ref())?;
                lambda = DbmState {
                    lambda: es.values.clone(),
                    t,
                    beta: ens.beta,
                };
            }
        }
        out.times.push(t);
        out.sup_diff.push((t, sup_over(bulk, &lambda.lambda, &mu.lambda)));
        out.min_gap_lambda.push(min_gap(&lambda.lambda).0);
        out.min_gap_mu.push(min_gap(&mu.lambda).0);
        out.lambda_path.push(lambda.lambda.clone());
        out.mu_path.push(mu.lambda.clone());
    }
    Ok(out)
}

/// One-step comparison between rediagonalization and the eigenvalue SDE:
/// returns `max_i |lambda_i(t+h) - prediction_i|` for the step from `(U, es)`.
pub fn one_step_consistency(model: &MatrixModel, u: &CMat, t: f64, h: f64, rng: &mut SimRng) -> Result<f64> {
    let es = eigh(model.tilde_h(u, t)?.as_ref())?;
    let inputs = sde_inputs(model, u, &es, h, rng)?;
    // The long-range part of the noise is what actually moves H; the SDE
    // writes it as the full noise minus the short-range martingale.
    let p = Perturbation {
        gamma: &inputs.gamma,
        dm_short: &inputs.dm_short,
        z: &inputs.z,
    };
    let state = DbmState {
        lambda: es.values.clone(),
        t,
        beta: model.diffusion.beta,
    };
    // in the matrix normalization the repulsion is 1/N for either symmetry class
    let predicted = euler(&state.lambda, Beta::Two, &inputs.noise, 1.0, h, Some(&p));
    let u_next = model.diffusion.advance(u, &inputs.dw, h)?;
    let actual = eigh(model.tilde_h(&u_next, t + h)?.as_ref())?.values;
    Ok(actual.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Largest bulk overlap `max_{i, j in bulk} gamma_ij` for a table.
pub fn bulk_gamma_max(gamma: &[f64], n: usize, bulk: &[usize]) -> f64 {
    let mut m = 0.0f64;
    for &i in bulk {
        for &j in bulk {
            m = m.max(gamma[i * n + j]);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn policy() -> GuardPolicy {
        GuardPolicy::for_size(100)
    }

    #[test]
    fn single_particle_is_brownian() {
        let s = DbmState::new(vec![0.3], Beta::Two);
        let (next, _) = dbm_step(&s, &[0.5], 0.01, &policy()).unwrap();
        assert_eq!(next.lambda, vec![0.3 + 0.5]);
    }

    #[test]
    fn two_particles_repel() {
        // g' = g + 2 h (beta/2N) (2/g) at beta = 2, N = 2
        let g = 0.5;
        let h = 1e-3;
        let s = DbmState::new(vec![0.0, g], Beta::Two);
        let (next, rep) = dbm_step(&s, &[0.0, 0.0], h, &policy()).unwrap();
        let g1 = next.lambda[1] - next.lambda[0];
        assert!((g1 - (g + 2.0 * h / (2.0 * g))).abs() < 1e-15);
        assert!(g1 > g);
        assert!(!rep.triggered());
    }

    #[test]
    fn unperturbed_step_is_bit_identical() {
        let mut rng = stream(1, "bits", 0);
        let n = 30;
        let lam: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let s = DbmState::new(lam, Beta::Two);
        let db = standard_noise(n, 1e-4, &mut rng);
        let gamma = vec![0.0; n * n];
        let zeros = vec![0.0; n];
        let p = Perturbation {
            gamma: &gamma,
            dm_short: &zeros,
            z: &zeros,
        };
        let a = dbm_step(&s, &db, 1e-4, &policy()).unwrap().0;
        let b = perturbed_dbm_step(&s, &db, &p, 1e-4, &policy()).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn constant_gamma_scales_the_drift() {
        let n = 10;
        let lam: Vec<f64> = (0..n).map(|k| (k as f64).powf(1.3)).collect();
        let s = DbmState::new(lam.clone(), Beta::Two);
        let zeros = vec![0.0; n];
        let c = 0.3;
        let gamma = vec![c; n * n];
        let p = Perturbation {
            gamma: &gamma,
            dm_short: &zeros,
            z: &zeros,
        };
        let h = 1e-3;
        let clean = dbm_step(&s, &zeros, h, &policy()).unwrap().0;
        let pert = perturbed_dbm_step(&s, &zeros, &p, h, &policy()).unwrap().0;
        for i in 0..n {
            let dc = clean.lambda[i] - lam[i];
            let dp = pert.lambda[i] - lam[i];
            assert!((dp - (1.0 - c) * dc).abs() <= 1e-9 * dc.abs().max(1e-12));
        }
    }

    #[test]
    fn guard_never_triggers_for_separated_start() {
        let n = 20;
        let mut s = DbmState::new((0..n).map(|k| k as f64).collect(), Beta::Two);
        let zeros = vec![0.0; n];
        for _ in 0..100 {
            let (next, rep) = dbm_step(&s, &zeros, 1e-3, &GuardPolicy::for_size(n)).unwrap();
            assert!(!rep.triggered());
            s = next;
        }
    }

    #[test]
    fn guard_triggers_on_close_pair() {
        let p = GuardPolicy::for_size(10);
        let s = DbmState::new(vec![0.0, p.guard / 2.0, 1.0], Beta::Two);
        let (_, rep) = dbm_step(&s, &[0.0; 3], 1e-6, &p).unwrap();
        assert!(rep.triggered());
        assert!(rep.guarded_time > 0.0);
        let (g, i) = min_gap(&s.lambda);
        assert_eq!(i, 0);
        assert!(g < p.guard);
    }

    #[test]
    fn collision_is_reported() {
        let p = GuardPolicy {
            guard: 1e-4,
            max_halvings: 3,
        };
        let s = DbmState::new(vec![0.0, 1.0], Beta::Two);
        // noise forces the pair to cross however it is split
        let err = dbm_step(&s, &[100.0, -100.0], 1e-12, &p).unwrap_err();
        assert!(matches!(err, Error::Collision { halvings: 3, .. }));
    }

    #[test]
    fn dimension_checks() {
        let s = DbmState::new(vec![0.0, 1.0], Beta::Two);
        assert!(dbm_step(&s, &[0.0], 0.1, &policy()).is_err());
        assert!(dbm_step(&s, &[0.0, 0.0], 0.0, &policy()).is_err());
    }
}
