//! Monte Carlo drivers shared by the CLI and the acceptance suite.
//!
//! Every trial draws from its own stream `rng::stream(seed, tag, trial)`, so
//! results are independent of thread count and trial order.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::AcceptConfig;
use crate::dbm::{couple_run, CoupleConfig, CoupleMode, CoupledPaths};
use crate::error::{Error, Result};
use crate::matrix_models::{
    assemble_h, diag, eigh, eigvalsh, identity, overlaps, regularize, sample_haar, wigner, Beta, EigenSystem,
    EnsembleConfig, SpectrumSpec,
};
use crate::measures::{semicircle_density, Measure, SUPPORT_TOL};
use crate::par;
use crate::rng::{stream, SimRng};
use crate::spectral_stats::{
    bulk_indices, default_window, ks_distance, local_law_report, log_grid, median, middle_indices, min_gap_statistics,
    min_spacing, reference_spacing_cdf, rigidity_report, unfold_gaps, MinGapFit,
};
use crate::subordination::{classical_locations, free_convolution, solve_pointwise, SolverConfig};
use crate::unitary_diffusion::{trajectory, UnitaryDiffusion};

/// Eigenvalues of `H = V* X V + U* Y U` at `t = 0`, one sorted vector per trial.
pub fn h_spectra(ens: &EnsembleConfig, trials: usize, seed: u64, tag: &str) -> Result<Vec<Vec<f64>>> {
    ens.validate()?;
    let x = ens.x.values(ens.n)?;
    let y = ens.y.values(ens.n)?;
    let idx: Vec<u32> = (0..trials as u32).collect();
    par::map(&idx, |&k| {
        let mut rng = stream(seed, tag, k);
        let h = sample_h(&x, &y, ens, true, &mut rng)?;
        eigvalsh(h.as_ref())
    })
    .into_iter()
    .collect()
}

/// One draw of `H`; with `rotate_y = false` the `Y` term stays diagonal (`U = I`).
fn sample_h(x: &[f64], y: &[f64], ens: &EnsembleConfig, rotate_y: bool, rng: &mut SimRng) -> Result<crate::matrix_models::CMat> {
    let n = x.len();
    let xm = regularize(x, ens.epsilon_reg, ens.beta, rng);
    let v = sample_haar(n, ens.beta, rng);
    let u = if rotate_y { sample_haar(n, ens.beta, rng) } else { identity(n) };
    assemble_h(xm.as_ref(), diag(y).as_ref(), v.as_ref(), u.as_ref())
}

/// Eigensystem of `V* X V + Y` (so eigenvectors live in the basis where `Y` is diagonal).
pub fn h_eigensystem(ens: &EnsembleConfig, rng: &mut SimRng) -> Result<EigenSystem> {
    let x = ens.x.values(ens.n)?;
    let y = ens.y.values(ens.n)?;
    let h = sample_h(&x, &y, ens, false, rng)?;
    eigh(h.as_ref())
}

/// GUE (`beta = 2`) or GOE (`beta = 1`) spectra with semicircle(1) limit.
pub fn wigner_spectra(n: usize, beta: Beta, trials: usize, seed: u64, tag: &str) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<u32> = (0..trials as u32).collect();
    par::map(&idx, |&k| {
        let mut rng = stream(seed, tag, k);
        eigvalsh(wigner(n, beta, &mut rng).as_ref())
    })
    .into_iter()
    .collect()
}

/// Smallest eigenvalue gap of `diag(x) + epsilon Q` over independent trials.
pub fn min_gap_samples(x: &[f64], epsilon: f64, beta: Beta, trials: usize, seed: u64, tag: &str) -> Result<Vec<f64>> {
    let idx: Vec<u32> = (0..trials as u32).collect();
    par::map(&idx, |&k| {
        let mut rng = stream(seed, tag, k);
        let m = regularize(x, epsilon, beta, &mut rng);
        eigvalsh(m.as_ref()).map(|v| min_spacing(&v))
    })
    .into_iter()
    .collect()
}

/// Log-spaced `delta` grid spanning the observed min gaps.
pub fn min_gap_deltas(gaps: &[f64]) -> Vec<f64> {
    let lo = gaps.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300);
    let hi = gaps.iter().cloned().fold(0.0, f64::max).max(lo * 10.0);
    log_grid(lo, hi, 60)
}

/// `(sup_t ||U(t) - I||, max unitarity defect)` per trial.
pub fn diffusion_norms(
    y: &[f64],
    a: f64,
    beta: Beta,
    horizon: f64,
    steps: usize,
    trials: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<(f64, f64)>> {
    let diff = UnitaryDiffusion::new(y, a, beta)?;
    let idx: Vec<u32> = (0..trials as u32).collect();
    par::map(&idx, |&k| {
        trajectory(&diff, horizon, steps, stream(seed, tag, k)).map(|t| (t.sup_norm_u_minus_i, t.max_unitarity_defect))
    })
    .into_iter()
    .collect()
}

/// Coupled runs; a failed trial is kept as its error.
pub fn couple_trials(cfg: &CoupleConfig, bulk: &[usize], trials: usize, seed: u64, tag: &str) -> Vec<Result<CoupledPaths>> {
    let idx: Vec<u32> = (0..trials as u32).collect();
    par::map(&idx, |&k| couple_run(cfg, bulk, &mut stream(seed, tag, k)))
}

/// Density of `mu_1 ⊞ mu_2` with enough grid to cover both supports.
pub fn convolution_density(m1: &Measure, m2: &Measure, points: usize, solver: &SolverConfig) -> Result<Measure> {
    let (a1, b1) = m1.support_interval();
    let (a2, b2) = m2.support_interval();
    let pad = 0.05 * ((b1 - a1) + (b2 - a2)) + 0.1;
    let grid = linspace(a1 + a2 - pad, b1 + b2 + pad, points);
    Ok(free_convolution(m1, m2, &grid, solver)?.density().clone())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Result of one acceptance criterion. Everything except `passed` and
/// `detail` is a deterministic function of the config and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
    pub seconds: f64,
}

impl CriterionOutcome {
    fn new(id: u8, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: false,
            detail: String::new(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
            seconds: 0.0,
        }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    /// The reproducible part, serialized.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(&(&self.metrics, &self.artifacts)).unwrap_or_default()
    }

    /// `[PASS] 3 esd-law: ...` style line.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<22} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "free-convolution"),
    (2, "subordination-signs"),
    (3, "esd-law"),
    (4, "local-law"),
    (5, "unitary-diffusion"),
    (6, "dbm-coupling"),
    (7, "gap-universality"),
    (8, "level-repulsion"),
    (9, "rigidity"),
    (10, "overlap-bound"),
    (11, "determinism"),
];

fn semicircle_quantiles(n: usize, beta: Beta, a: f64, b: f64) -> EnsembleConfig {
    let sc = || SpectrumSpec::Quantiles(Measure::semicircle(1.0));
    let mut e = EnsembleConfig::new(n, beta, sc(), sc());
    e.a = a;
    e.b = b;
    e
}

/// Runs criterion `id`. Numeric failures inside a criterion fail that
/// criterion only; the error text goes into `detail`.
pub fn run_criterion(id: u8, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> CriterionOutcome {
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1);
    let start = Instant::now();
    let mut out = CriterionOutcome::new(id, name);
    let res = match id {
        1 => free_convolution_oracle(&mut out, cfg, solver),
        2 => subordination_signs(&mut out, cfg, solver),
        3 => esd_law(&mut out, cfg, seed, solver),
        4 => local_law(&mut out, cfg, seed, solver),
        5 => unitary_diffusion(&mut out, cfg, seed),
        6 => dbm_coupling(&mut out, cfg, seed, solver),
        7 => gap_universality(&mut out, cfg, seed, solver),
        8 => level_repulsion(&mut out, cfg, seed),
        9 => rigidity(&mut out, cfg, seed, solver),
        10 => overlap_bound(&mut out, cfg, seed, solver),
        11 => determinism(&mut out, cfg, seed, solver),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    out.seconds = start.elapsed().as_secs_f64();
    if let Err(e) = res {
        out.passed = false;
        out.detail = format!("error: {e}");
    }
    out
}

/// Runs all criteria in order, handing each outcome to `report` as it finishes.
pub fn run_acceptance(
    cfg: &AcceptConfig,
    seed: u64,
    solver: &SolverConfig,
    ids: &[u8],
    mut report: impl FnMut(&CriterionOutcome),
) -> Vec<CriterionOutcome> {
    ids.iter()
        .map(|&id| {
            let o = run_criterion(id, cfg, seed, solver);
            report(&o);
            o
        })
        .collect()
}

fn free_convolution_oracle(out: &mut CriterionOutcome, cfg: &AcceptConfig, solver: &SolverConfig) -> Result<()> {
    let grid = linspace(-2.7, 2.7, cfg.grid_points);
    let sc = Measure::semicircle(1.0);
    let fc = free_convolution(&sc, &sc, &grid, solver)?;
    let mut sup_sc = 0.0f64;
    let mut csv = String::from("E,semicircle_numeric,semicircle2,bernoulli_numeric,arcsine\n");
    let bern = Measure::bernoulli();
    let fb = free_convolution(&bern, &bern, &grid, solver)?;
    let mut sup_arc = 0.0f64;
    for (k, &e) in grid.iter().enumerate() {
        // raw Im m / pi: the grid stops short of the semicircle(2) support
        let got = fc.solutions[k].m.im / PI;
        let want = semicircle_density(2.0, e);
        sup_sc = sup_sc.max((got - want).abs());
        let gb = fb.solutions[k].m.im / PI;
        let arc = if e.abs() < 2.0 { 1.0 / (PI * (4.0 - e * e).sqrt()) } else { 0.0 };
        if e.abs() <= 1.9 {
            sup_arc = sup_arc.max((gb - arc).abs());
        }
        csv.push_str(&format!("{e},{got:e},{want:e},{gb:e},{arc:e}\n"));
    }
    out.metric("sup_semicircle", sup_sc);
    out.metric("sup_arcsine", sup_arc);
    out.artifacts.push(("free_convolution.csv".into(), csv));
    out.passed = sup_sc <= 5e-3 && sup_arc <= 1e-2;
    out.detail = format!("semicircle sup {sup_sc:.2e} (<= 5e-3), arcsine sup {sup_arc:.2e} (<= 1e-2)");
    Ok(())
}

fn subordination_signs(out: &mut CriterionOutcome, cfg: &AcceptConfig, solver: &SolverConfig) -> Result<()> {
    let cases = [
        ("semicircle", Measure::semicircle(1.0), Measure::semicircle(1.0), 2.4),
        ("bernoulli", Measure::bernoulli(), Measure::bernoulli(), 1.9),
    ];
    let etas = log_grid(1e-3, 1.0, cfg.sign_eta_points);
    let (mut total, mut converged, mut bad) = (0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    for (_, m1, m2, e_max) in &cases {
        let es = linspace(-e_max, *e_max, cfg.sign_e_points);
        let pts: Vec<(f64, f64)> = es.iter().flat_map(|&e| etas.iter().map(move |&h| (e, h))).collect();
        let sols = par::map(&pts, |&(e, h)| solve_pointwise(m1, m2, num_complex::Complex64::new(e, h), solver));
        for s in sols {
            total += 1;
            let Ok(s) = s else { continue };
            if !s.converged {
                continue;
            }
            converged += 1;
            worst = worst.max(s.residual);
            if !(s.m.im > 0.0 && s.w1.im <= 0.0 && s.w2.im <= 0.0 && s.residual <= 1e-10) {
                bad += 1;
            }
        }
    }
    let rate = converged as f64 / total.max(1) as f64;
    out.metric("points", total as f64);
    out.metric("convergence_rate", rate);
    out.metric("sign_violations", bad as f64);
    out.metric("max_residual", worst);
    out.passed = rate >= 0.99 && bad == 0;
    out.detail = format!("{converged}/{total} converged (>= 99%), {bad} sign/residual violations, max residual {worst:.1e}");
    Ok(())
}

fn esd_law(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let start = Instant::now();
    let ens = semicircle_quantiles(cfg.esd_n, Beta::Two, cfg.a, cfg.b);
    let mu = convolution_density(&Measure::semicircle(1.0), &Measure::semicircle(1.0), 1201, solver)?;
    let spectra = h_spectra(&ens, cfg.esd_trials, seed, "esd-law")?;
    let pooled: Vec<f64> = spectra.concat();
    let ks = ks_distance(&pooled, |x| mu.cdf(x));
    let secs = start.elapsed().as_secs_f64();
    out.metric("ks", ks);
    out.metric("eigenvalues", pooled.len() as f64);
    out.passed = ks <= 0.05 && secs < 120.0;
    out.detail = format!("KS {ks:.4} (<= 0.05) over {} eigenvalues", pooled.len());
    Ok(())
}

/// Normalized sup error `sup_i |G_ii - 1/(-z + y_i + w1)| sqrt(N eta)` at `z`
/// for one draw of `V* X V + Y`, with `w1` from the empirical spectra.
fn local_law_trial(ens: &EnsembleConfig, z: num_complex::Complex64, rng: &mut SimRng, solver: &SolverConfig) -> Result<f64> {
    let es = h_eigensystem(ens, rng)?;
    let x = ens.x.values(ens.n)?;
    let y = ens.y.values(ens.n)?;
    let mx = Measure::uniform_atoms(&x)?;
    let my = Measure::uniform_atoms(&y)?;
    let report = local_law_report(&es, &y, &[(z.re, z.im)], |z| solve_pointwise(&mx, &my, z, solver))?;
    let p = &report.points[0];
    if !p.valid {
        return Err(Error::NoConvergence {
            what: "subordination at the local-law point",
            residual: f64::NAN,
        });
    }
    Ok(p.normalized)
}

fn local_law(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let n = cfg.law_n;
    let eta = (n as f64).powf(-0.5);
    let z = num_complex::Complex64::new(0.0, eta);
    // no regularization: the control below must see X = 0 exactly
    let mut ens = semicircle_quantiles(n, Beta::Two, cfg.a, cfg.b);
    ens.epsilon_reg = 0.0;
    let idx: Vec<u32> = (0..cfg.law_trials as u32).collect();
    let errs: Vec<f64> = par::map(&idx, |&k| local_law_trial(&ens, z, &mut stream(seed, "local-law", k), solver))
        .into_iter()
        .collect::<Result<_>>()?;
    let med = median(&errs);
    let mut control = ens.clone();
    control.x = SpectrumSpec::Values(vec![0.0; n]);
    let ctrl = local_law_trial(&control, z, &mut stream(seed, "local-law-control", 0), solver)? / (n as f64 * eta).sqrt();
    out.metric("median_normalized_error", med);
    out.metric("control_error", ctrl);
    let mut csv = String::from("trial,normalized_error\n");
    for (k, e) in errs.iter().enumerate() {
        csv.push_str(&format!("{k},{e:e}\n"));
    }
    out.artifacts.push(("local_law.csv".into(), csv));
    out.passed = med <= 10.0 && ctrl <= 1e-8;
    out.detail = format!("median error*sqrt(N eta) {med:.3} (<= 10), X=0 control {ctrl:.1e} (<= 1e-8)");
    Ok(())
}

fn unitary_diffusion(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64) -> Result<()> {
    let mut medians = Vec::new();
    let mut defect = 0.0f64;
    let mut csv = String::from("N,trial,sup_norm_U_minus_I,max_unitarity_defect\n");
    for &n in &cfg.diffusion_sizes {
        let y = Measure::semicircle(1.0).quantiles(n);
        let horizon = (n as f64).powf(-1.0 + cfg.b);
        let rows = diffusion_norms(&y, cfg.a, Beta::Two, horizon, cfg.diffusion_steps, cfg.diffusion_trials, seed, &format!("diffusion-{n}"))?;
        for (k, (s, d)) in rows.iter().enumerate() {
            csv.push_str(&format!("{n},{k},{s:e},{d:e}\n"));
            defect = defect.max(*d);
        }
        let med = median(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        out.metric(&format!("median_sup_norm_N{n}"), med);
        medians.push(med);
    }
    out.metric("max_unitarity_defect", defect);
    out.artifacts.push(("diffusion.csv".into(), csv));
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    out.passed = decreasing && defect <= 1e-8;
    let list: Vec<String> = cfg
        .diffusion_sizes
        .iter()
        .zip(&medians)
        .map(|(n, m)| format!("N={n}: {m:.4}"))
        .collect();
    out.detail = format!(
        "median sup||U-I|| {} (strictly decreasing: {decreasing}), max defect {defect:.1e} (<= 1e-8)",
        list.join(", ")
    );
    Ok(())
}

fn dbm_coupling(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let start = Instant::now();
    let sc = Measure::semicircle(1.0);
    let mu = convolution_density(&sc, &sc, 1201, solver)?;
    let rho0 = mu.density_at(0.0);
    let support = mu.essential_support(SUPPORT_TOL);
    let mut medians = Vec::new();
    let mut csv = String::from("N,trial,N_rho_sup_diff,excluded\n");
    let mut excluded = 0;
    for &n in &cfg.couple_sizes {
        let ens = semicircle_quantiles(n, Beta::Two, cfg.a, cfg.b);
        let mut cc = CoupleConfig::new(ens, CoupleMode::Matrix);
        cc.steps = cfg.couple_steps;
        let bulk = bulk_indices(&classical_locations(&mu, n), support, cfg.kappa);
        let runs = couple_trials(&cc, &bulk, cfg.couple_trials, seed, &format!("couple-{n}"));
        let mut vals = Vec::new();
        for (k, r) in runs.into_iter().enumerate() {
            match r {
                Ok(p) => {
                    let v = n as f64 * rho0 * p.final_sup_diff();
                    csv.push_str(&format!("{n},{k},{v:e},false\n"));
                    vals.push(v);
                }
                Err(e) => {
                    log::warn!("coupling trial {k} at N={n} excluded: {e}");
                    csv.push_str(&format!("{n},{k},NaN,true\n"));
                    excluded += 1;
                }
            }
        }
        let med = median(&vals);
        out.metric(&format!("median_N_rho_sup_diff_N{n}"), med);
        medians.push(med);
    }
    let secs = start.elapsed().as_secs_f64();
    out.metric("excluded_trials", excluded as f64);
    out.artifacts.push(("coupling.csv".into(), csv));
    let last = medians.last().copied().unwrap_or(f64::NAN);
    let nonincreasing = medians.windows(2).all(|w| w[1] <= w[0]);
    out.passed = last <= 0.5 && nonincreasing && secs < 1200.0;
    let list: Vec<String> = cfg
        .couple_sizes
        .iter()
        .zip(&medians)
        .map(|(n, m)| format!("N={n}: {m:.4}"))
        .collect();
    out.detail = format!(
        "median N*rho*sup|lambda-mu| {} (last <= 0.5, nonincreasing: {nonincreasing}), {excluded} excluded",
        list.join(", ")
    );
    Ok(())
}

fn gap_ks(spectra: &[Vec<f64>], rho: f64, beta: Beta) -> Result<(f64, usize)> {
    let n = spectra.first().map_or(0, |s| s.len());
    let gaps = unfold_gaps(spectra, rho, 0.0, default_window(n))?;
    Ok((ks_distance(&gaps, |s| reference_spacing_cdf(beta, s)), gaps.len()))
}

fn gap_universality(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let n = cfg.gap_n;
    let sc = Measure::semicircle(1.0);
    let rho = convolution_density(&sc, &sc, 1201, solver)?.density_at(0.0);
    let h2 = h_spectra(&semicircle_quantiles(n, Beta::Two, cfg.a, cfg.b), cfg.gap_trials, seed, "gaps-h2")?;
    let (ks_h, count) = gap_ks(&h2, rho, Beta::Two)?;
    let gue = wigner_spectra(n, Beta::Two, cfg.gap_trials, seed, "gaps-gue")?;
    let (ks_gue, _) = gap_ks(&gue, 1.0 / PI, Beta::Two)?;
    let h1 = h_spectra(&semicircle_quantiles(n, Beta::One, cfg.a, cfg.b), cfg.gap_trials, seed, "gaps-h1")?;
    let (ks_h1, _) = gap_ks(&h1, rho, Beta::One)?;
    out.metric("ks_h_beta2", ks_h);
    out.metric("ks_gue", ks_gue);
    out.metric("ks_h_beta1", ks_h1);
    out.metric("gap_count", count as f64);
    out.passed = ks_h <= 0.08 && ks_gue <= 0.05 && ks_h1 <= 0.10;
    out.detail = format!(
        "KS H(beta=2) {ks_h:.4} (<= 0.08), GUE {ks_gue:.4} (<= 0.05), H(beta=1) {ks_h1:.4} (<= 0.10), {count} gaps each"
    );
    Ok(())
}

/// Min-gap tail fit for `diag(x) + epsilon Q` with `x` the Bernoulli quantiles.
pub fn min_gap_fit(n: usize, beta: Beta, epsilon: f64, trials: usize, seed: u64) -> Result<MinGapFit> {
    let x = Measure::bernoulli().quantiles(n);
    let tag = format!("mingap-{}", beta.value() as u8);
    let gaps = min_gap_samples(&x, epsilon, beta, trials, seed, &tag)?;
    min_gap_statistics(&gaps, &min_gap_deltas(&gaps))
}

fn level_repulsion(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64) -> Result<()> {
    let start = Instant::now();
    let f2 = min_gap_fit(cfg.mingap_n, Beta::Two, cfg.mingap_epsilon, cfg.mingap_trials, seed)?;
    let f1 = min_gap_fit(cfg.mingap_n, Beta::One, cfg.mingap_epsilon, cfg.mingap_trials, seed)?;
    let secs = start.elapsed().as_secs_f64();
    out.metric("slope_beta2", f2.slope);
    out.metric("stderr_beta2", f2.stderr);
    out.metric("slope_beta1", f1.slope);
    out.metric("stderr_beta1", f1.stderr);
    out.artifacts.push(("min_gap_beta2.csv".into(), f2.to_csv()));
    out.artifacts.push(("min_gap_beta1.csv".into(), f1.to_csv()));
    out.passed = (f2.slope - 3.0).abs() <= 0.5 && (f1.slope - 2.0).abs() <= 0.5 && secs < 300.0;
    out.detail = format!(
        "slope beta=2 {:.3}±{:.3} (3 ± 0.5), beta=1 {:.3}±{:.3} (2 ± 0.5)",
        f2.slope, f2.stderr, f1.slope, f1.stderr
    );
    Ok(())
}

/// Per-trial `(max, median)` of `|lambda_i - gamma_i|` over the middle 60%,
/// with `gamma` the classical locations of the empirical `mu_X ⊞ mu_Y`.
pub fn rigidity_trials(
    ens: &EnsembleConfig,
    trials: usize,
    seed: u64,
    solver: &SolverConfig,
) -> Result<Vec<(f64, f64)>> {
    let n = ens.n;
    let mx = Measure::uniform_atoms(&ens.x.values(n)?)?;
    let my = Measure::uniform_atoms(&ens.y.values(n)?)?;
    let mu = convolution_density(&mx, &my, 2001, solver)?;
    let gamma = classical_locations(&mu, n);
    let idx = middle_indices(n, 0.6);
    let spectra = h_spectra(ens, trials, seed, &format!("rigidity-{n}"))?;
    spectra
        .iter()
        .map(|s| rigidity_report(s, &gamma, &idx).map(|r| (r.max, r.median)))
        .collect()
}

fn rigidity(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let mut med_devs = Vec::new();
    let mut worst_last = 0.0;
    for &n in &cfg.rigidity_sizes {
        let rows = rigidity_trials(&semicircle_quantiles(n, Beta::Two, cfg.a, cfg.b), cfg.rigidity_trials, seed, solver)?;
        let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let med = median(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        out.metric(&format!("max_deviation_N{n}"), worst);
        out.metric(&format!("median_deviation_N{n}"), med);
        med_devs.push(med);
        worst_last = worst;
    }
    let ratio = match med_devs[..] {
        [.., a, b] => b / a,
        _ => f64::NAN,
    };
    out.metric("halving_ratio", ratio);
    out.passed = worst_last <= 0.05 && (0.25..=0.75).contains(&ratio);
    out.detail = format!("max |lambda-gamma| at largest N {worst_last:.4} (<= 0.05), median ratio {ratio:.3} (0.5 ± 50%)");
    Ok(())
}

fn overlap_bound(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let n = cfg.overlap_n;
    let ens = semicircle_quantiles(n, Beta::Two, cfg.a, cfg.b);
    let sc = Measure::semicircle(1.0);
    let mu = convolution_density(&sc, &sc, 1201, solver)?;
    let bulk = bulk_indices(&classical_locations(&mu, n), mu.essential_support(SUPPORT_TOL), cfg.kappa);
    let bound = (n as f64).powf(cfg.a + 0.1) / n as f64;
    let idx: Vec<u32> = (0..cfg.overlap_trials as u32).collect();
    let maxima: Vec<f64> = par::map(&idx, |&k| -> Result<f64> {
        let mut rng = stream(seed, "overlaps", k);
        let es = h_eigensystem(&ens, &mut rng)?;
        let table = overlaps(identity(n).as_ref(), &es, cfg.a)?;
        let mut m = 0.0f64;
        for &i in &bulk {
            for j in (0..n).filter(|&j| j != i) {
                m = m.max(table.gamma(i, j));
            }
        }
        Ok(m)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let within = maxima.iter().filter(|&&m| m <= bound).count();
    let frac = within as f64 / maxima.len().max(1) as f64;
    out.metric("bound", bound);
    out.metric("median_max_gamma", median(&maxima));
    out.metric("fraction_within", frac);
    out.passed = frac >= 0.9;
    out.detail = format!(
        "bulk max gamma_ij median {:.4e} vs bound N^(a+0.1)/N = {bound:.4e}; {within}/{} trials within (>= 90%)",
        median(&maxima),
        maxima.len()
    );
    Ok(())
}

/// The suite at reduced size: every size and trial count divided by `k`.
pub fn shrink(cfg: &AcceptConfig, k: usize) -> AcceptConfig {
    let k = k.max(1);
    let s = |v: usize, floor: usize| (v / k).max(floor);
    AcceptConfig {
        grid_points: s(cfg.grid_points, 11),
        sign_e_points: s(cfg.sign_e_points, 3),
        sign_eta_points: s(cfg.sign_eta_points, 2),
        esd_n: s(cfg.esd_n, 8),
        esd_trials: s(cfg.esd_trials, 2),
        law_n: s(cfg.law_n, 8),
        law_trials: s(cfg.law_trials, 2),
        diffusion_sizes: cfg.diffusion_sizes.iter().map(|&v| s(v, 8)).collect(),
        diffusion_trials: s(cfg.diffusion_trials, 2),
        diffusion_steps: s(cfg.diffusion_steps, 4),
        couple_sizes: cfg.couple_sizes.iter().map(|&v| s(v, 8)).collect(),
        couple_trials: s(cfg.couple_trials, 2),
        couple_steps: s(cfg.couple_steps, 4),
        gap_n: s(cfg.gap_n, 16),
        gap_trials: s(cfg.gap_trials, 2),
        mingap_n: cfg.mingap_n,
        mingap_trials: s(cfg.mingap_trials, 200),
        rigidity_sizes: cfg.rigidity_sizes.iter().map(|&v| s(v, 10)).collect(),
        rigidity_trials: s(cfg.rigidity_trials, 2),
        overlap_n: s(cfg.overlap_n, 10),
        overlap_trials: s(cfg.overlap_trials, 2),
        ..cfg.clone()
    }
}

fn determinism(out: &mut CriterionOutcome, cfg: &AcceptConfig, seed: u64, solver: &SolverConfig) -> Result<()> {
    let small = shrink(cfg, cfg.replay_shrink);
    let mut mismatched = Vec::new();
    for &(id, name) in CRITERIA.iter().filter(|c| c.0 != 11) {
        let a = run_criterion(id, &small, seed, solver);
        let b = run_criterion(id, &small, seed, solver);
        if a.fingerprint() != b.fingerprint() {
            mismatched.push(name);
        }
    }
    out.metric("replayed", (CRITERIA.len() - 1) as f64);
    out.metric("mismatched", mismatched.len() as f64);
    out.passed = mismatched.is_empty();
    out.detail = if mismatched.is_empty() {
        format!("{} sub-experiments replayed byte-identically", CRITERIA.len() - 1)
    } else {
        format!("replay differs for {}", mismatched.join(", "))
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> AcceptConfig {
        shrink(&AcceptConfig::default(), 20)
    }

    #[test]
    fn spectra_are_reproducible_per_trial() {
        let ens = semicircle_quantiles(12, Beta::Two, 0.2, 0.002);
        let a = h_spectra(&ens, 3, 7, "t").unwrap();
        let b = h_spectra(&ens, 3, 7, "t").unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        // trial 2 alone equals trial 2 of the batch
        let c = h_spectra(&ens, 3, 7, "t").unwrap();
        assert_eq!(a[2], c[2]);
    }

    #[test]
    fn every_criterion_runs_at_tiny_scale() {
        let cfg = tiny();
        let solver = SolverConfig::default();
        for &(id, _) in CRITERIA.iter().filter(|c| c.0 != 11) {
            let o = run_criterion(id, &cfg, 1, &solver);
            assert!(!o.detail.starts_with("error"), "{}", o.line());
        }
    }

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let o = run_criterion(42, &tiny(), 1, &SolverConfig::default());
        assert!(!o.passed && o.detail.starts_with("error"));
    }

    #[test]
    fn shrink_keeps_floors() {
        let s = shrink(&AcceptConfig::default(), 1000);
        assert!(s.esd_n >= 8 && s.mingap_trials >= 200 && s.couple_steps >= 4);
        assert_eq!(s.a, 0.2);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-1.0, 1.0, 5);
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(linspace(3.0, 4.0, 1), vec![3.0]);
    }
}
