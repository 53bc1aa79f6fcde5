//! `haarflow` command line.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 acceptance criteria failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use haarflow::config::RunConfig;
use haarflow::dbm::{couple_run, CoupleConfig, CoupleMode};
use haarflow::error::{Error, Result};
use haarflow::experiments::{self, h_spectra, linspace, CRITERIA};
use haarflow::matrix_models::{overlaps, identity, short_range_radius, spectrum_csv};
use haarflow::measures::{Measure, SUPPORT_TOL};
use haarflow::rng::stream;
use haarflow::spectral_stats::{
    bulk_indices, correlation_estimate, default_window, ks_distance, local_law_report, median, middle_indices,
    reference_spacing_cdf, reference_spacing_density, rigidity_report, sine_kernel_correlation, unfold_gaps,
    ReportMetadata, StatisticsReport,
};
use haarflow::subordination::{classical_locations, free_convolution, solve_pointwise, DENSITY_ETA};
use haarflow::svg::{histogram, line_plot, Axis, Series};
use haarflow::unitary_diffusion::{trajectory, UnitaryDiffusion};

#[derive(Parser)]
#[command(name = "haarflow", version, about = "Spectra of V*XV + U*YU: free convolution, unitary diffusion, coupled DBM")]
struct Cli {
    /// Sectioned `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides HAARFLOW_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Density of mu_X ⊞ mu_Y via subordination.
    Freeconv,
    /// Eigenvalues of sampled H.
    Sample,
    /// Weighted unitary Brownian motion up to T = N^(-1+b).
    Diffuse,
    /// Perturbed vs clean DBM on the bulk.
    Couple,
    /// Entrywise local law for the diagonal resolvent.
    Locallaw,
    /// Gap, correlation, rigidity, overlap and min-gap statistics.
    Stats,
    /// Run the acceptance criteria.
    Accept {
        /// Comma separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

/// Files produced by a run, held in memory until the command succeeds.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, contents: impl Into<String>) {
        self.files.push((name.into(), contents.into()));
    }

    /// Writes everything; on any error the files already written are removed.
    fn commit(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, body) in &self.files {
            let p = dir.join(name);
            if let Err(e) = std::fs::write(&p, body) {
                for w in &written {
                    let _ = std::fs::remove_file(w);
                }
                return Err(e.into());
            }
            written.push(p);
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn resolve_seed(cli: &Cli, cfg: &mut RunConfig) -> Result<()> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    } else if let Ok(v) = std::env::var("HAARFLOW_SEED") {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("HAARFLOW_SEED must be a u64, got `{v}`")))?;
    }
    cfg.ensemble.seed = cfg.seed;
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            Error::Io(io) => Error::InvalidArgument(format!("cannot read {}: {io}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    resolve_seed(cli, &mut cfg)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let mut out = Outputs::default();
    let (name, code) = match &cli.cmd {
        Cmd::Freeconv => ("freeconv", freeconv(&cfg, &mut out)?),
        Cmd::Sample => ("sample", sample(&cfg, &mut out)?),
        Cmd::Diffuse => ("diffuse", diffuse(&cfg, &mut out)?),
        Cmd::Couple => ("couple", couple(&cfg, &mut out)?),
        Cmd::Locallaw => ("locallaw", locallaw(&cfg, &mut out)?),
        Cmd::Stats => ("stats", stats(&cfg, &mut out)?),
        Cmd::Accept { only } => ("accept", accept(&cfg, only, cli.quiet, &mut out)?),
    };
    let manifest = serde_json::json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "files": out.files.iter().map(|f| f.0.clone()).collect::<Vec<_>>(),
    });
    out.add("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n");
    out.commit(&cli.out)?;
    log::info!("wrote {} files to {}", out.files.len(), cli.out.display());
    Ok(code)
}

fn freeconv(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let f = &cfg.freeconv;
    let grid = linspace(f.e_min, f.e_max, f.points);
    let fc = free_convolution(&f.x, &f.y, &grid, &cfg.solver)?;
    let frac = fc.converged_fraction();
    if frac < 0.99 {
        log::warn!("only {:.1}% of grid points converged", 100.0 * frac);
    }
    let mut csv = String::from("E,density,converged\n");
    let mut sub = String::from("E,eta,re_m,im_m,re_w1,im_w1,re_w2,im_w2,residual,iterations\n");
    let mut pts = Vec::new();
    for (k, &e) in grid.iter().enumerate() {
        let s = &fc.solutions[k];
        let d = s.m.im / std::f64::consts::PI;
        csv.push_str(&format!("{e:e},{d:e},{}\n", s.converged));
        sub.push_str(&s.csv_row());
        sub.push('\n');
        pts.push((e, d));
    }
    out.add("density.csv", csv);
    out.add("subordination.csv", sub);
    out.add("density.txt", fc.density().to_text());
    out.add(
        "density.svg",
        line_plot(
            &format!("free convolution density (eta = {DENSITY_ETA:e})"),
            "E",
            "density",
            &[Series::new("mu_X ⊞ mu_Y", pts)],
            Axis::Linear,
            Axis::Linear,
        ),
    );
    Ok(ExitCode::SUCCESS)
}

fn sample(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let spectra = h_spectra(&cfg.ensemble, cfg.sample.trials, cfg.seed, "sample")?;
    let mut csv = String::from("trial,index,eigenvalue\n");
    for (t, s) in spectra.iter().enumerate() {
        for (i, v) in s.iter().enumerate() {
            csv.push_str(&format!("{t},{i},{v:e}\n"));
        }
    }
    if let [only] = &spectra[..] {
        out.add("spectrum.csv", spectrum_csv(only));
    }
    out.add("spectra.csv", csv);
    let pooled = spectra.concat();
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = ((pooled.len() as f64).sqrt() as usize).clamp(5, 80);
    let reference = limit_density(cfg).ok().map(|mu| {
        let g = linspace(lo, hi, 300);
        Series::new("mu_X ⊞ mu_Y", g.iter().map(|&e| (e, mu.density_at(e))).collect())
    });
    out.add(
        "spectrum.svg",
        histogram("eigenvalues of H", "lambda", &pooled, lo, hi + 1e-12, bins, reference.as_ref()),
    );
    Ok(ExitCode::SUCCESS)
}

/// `mu_X ⊞ mu_Y` for the ensemble's spectra, as a grid density.
fn limit_density(cfg: &RunConfig) -> Result<Measure> {
    let mx = cfg.ensemble.x.measure()?;
    let my = cfg.ensemble.y.measure()?;
    experiments::convolution_density(&mx, &my, 1201, &cfg.solver)
}

fn diffuse(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let ens = &cfg.ensemble;
    ens.validate()?;
    let y = ens.y.values(ens.n)?;
    let mut diff = UnitaryDiffusion::new(&y, ens.a, ens.beta)?;
    diff.retraction = cfg.diffuse.retraction;
    let mut series = Vec::new();
    let mut summary = String::from("trial,sup_norm_U_minus_I,max_unitarity_defect\n");
    for k in 0..cfg.diffuse.trials {
        let tr = trajectory(&diff, ens.horizon(), cfg.diffuse.steps, stream(cfg.seed, "diffuse", k as u32))?;
        summary.push_str(&format!("{k},{:e},{:e}\n", tr.sup_norm_u_minus_i, tr.max_unitarity_defect));
        out.add(format!("trajectory_{k}.csv"), tr.to_csv());
        series.push(Series::new(
            format!("trial {k}"),
            tr.points.iter().map(|p| (p.t, p.norm_u_minus_i)).collect(),
        ));
    }
    out.add("diffusion.csv", summary);
    series.truncate(6);
    out.add(
        "diffusion.svg",
        line_plot("||U(t) - I||", "t", "operator norm", &series, Axis::Linear, Axis::Linear),
    );
    Ok(ExitCode::SUCCESS)
}

fn couple_config(cfg: &RunConfig) -> Result<CoupleConfig> {
    let c = &cfg.couple;
    let n = cfg.ensemble.n as f64;
    let mode = match c.mode.as_str() {
        "matrix" => CoupleMode::Matrix,
        "synthetic" => CoupleMode::Synthetic {
            level: c.level.unwrap_or(n.powf(cfg.ensemble.a) / n),
        },
        other => return Err(Error::InvalidArgument(format!("unknown couple mode `{other}`"))),
    };
    let mut cc = CoupleConfig::new(cfg.ensemble.clone(), mode);
    cc.steps = c.steps;
    cc.noise_damping_c2 = c.noise_damping_c2;
    Ok(cc)
}

fn couple(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let cc = couple_config(cfg)?;
    let mu = limit_density(cfg)?;
    let rho = mu.density_at(0.0);
    let n = cfg.ensemble.n;
    let bulk = bulk_indices(&classical_locations(&mu, n), mu.essential_support(SUPPORT_TOL), cfg.couple.kappa);
    let mut summary = String::from("trial,final_sup_diff,N_rho0_sup_diff,guarded_time_mu\n");
    let mut series = Vec::new();
    for k in 0..cfg.couple.trials {
        let p = couple_run(&cc, &bulk, &mut stream(cfg.seed, "couple", k as u32))?;
        let d = p.final_sup_diff();
        summary.push_str(&format!("{k},{d:e},{:e},{:e}\n", n as f64 * rho * d, p.guarded_time_mu));
        out.add(format!("coupling_{k}.csv"), p.to_csv());
        if k == 0 {
            let mut paths = String::from("t,index,lambda,mu\n");
            for (s, t) in p.times.iter().enumerate() {
                for &i in &p.bulk {
                    paths.push_str(&format!("{t:e},{i},{:e},{:e}\n", p.lambda_path[s][i], p.mu_path[s][i]));
                }
            }
            out.add("paths_0.csv", paths);
        }
        series.push(Series::new(format!("trial {k}"), p.sup_diff.clone()));
    }
    out.add("coupling.csv", summary);
    series.truncate(6);
    out.add(
        "coupling.svg",
        line_plot("sup over bulk |lambda_i - mu_i|", "t", "sup difference", &series, Axis::Linear, Axis::Linear),
    );
    Ok(ExitCode::SUCCESS)
}

fn locallaw(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let ens = &cfg.ensemble;
    ens.validate()?;
    let n = ens.n;
    let etas = if cfg.locallaw.etas.is_empty() {
        vec![(n as f64).powf(-0.5)]
    } else {
        cfg.locallaw.etas.clone()
    };
    let grid: Vec<(f64, f64)> = cfg
        .locallaw
        .energies
        .iter()
        .flat_map(|&e| etas.iter().map(move |&h| (e, h)))
        .collect();
    let y = ens.y.values(n)?;
    let mx = Measure::uniform_atoms(&ens.x.values(n)?)?;
    let my = Measure::uniform_atoms(&y)?;
    let mut csv = String::from("trial,E,eta,sup_error,normalized,argmax,valid\n");
    let mut worst = 0.0f64;
    for k in 0..cfg.locallaw.trials {
        let es = experiments::h_eigensystem(ens, &mut stream(cfg.seed, "locallaw", k as u32))?;
        let rep = local_law_report(&es, &y, &grid, |z| solve_pointwise(&mx, &my, z, &cfg.solver))?;
        for p in &rep.points {
            csv.push_str(&format!(
                "{k},{:e},{:e},{:e},{:e},{},{}\n",
                p.e, p.eta, p.sup_error, p.normalized, p.argmax, p.valid
            ));
        }
        worst = worst.max(rep.max_normalized());
    }
    log::info!("max normalized local-law error {worst:.3}");
    out.add("local_law.csv", csv);
    Ok(ExitCode::SUCCESS)
}

fn stats(cfg: &RunConfig, out: &mut Outputs) -> Result<ExitCode> {
    let ens = &cfg.ensemble;
    let st = &cfg.stats;
    let n = ens.n;
    let mu = limit_density(cfg)?;
    let rho = mu.density_at(st.energy);
    if rho <= 0.0 {
        return Err(Error::InvalidArgument(format!("energy {} lies outside the support", st.energy)));
    }
    let spectra = h_spectra(ens, st.trials, cfg.seed, "stats")?;
    let window = if st.window_k == 0 { default_window(n) } else { st.window_k };
    let gaps = unfold_gaps(&spectra, rho, st.energy, window)?;
    let gap_ks = ks_distance(&gaps, |s| reference_spacing_cdf(ens.beta, s));
    let reference = Series::new(
        "reference",
        linspace(0.0, 4.0, 200)
            .into_iter()
            .map(|s| (s, reference_spacing_density(ens.beta, s)))
            .collect(),
    );
    out.add(
        "gaps.svg",
        histogram("unfolded gaps", "s", &gaps, 0.0, 4.0, 40, Some(&reference)),
    );
    let mut gap_csv = String::from("s\n");
    for g in &gaps {
        gap_csv.push_str(&format!("{g:e}\n"));
    }
    out.add("gaps.csv", gap_csv);

    let corr = correlation_estimate(&spectra, st.energy, rho, st.half_width)?;
    out.add("correlation.csv", corr.to_csv());
    let bins: Vec<(f64, f64)> = corr.bins.clone();
    out.add(
        "correlation.svg",
        line_plot(
            "two-point correlation",
            "a",
            "rho_2",
            &[
                Series::new("empirical", bins.clone()),
                Series::new("sine kernel", bins.iter().map(|b| (b.0, sine_kernel_correlation(b.0))).collect()),
            ],
            Axis::Linear,
            Axis::Linear,
        ),
    );

    // rigidity against the finite-N convolution
    let mx = Measure::uniform_atoms(&ens.x.values(n)?)?;
    let my = Measure::uniform_atoms(&ens.y.values(n)?)?;
    let gamma = classical_locations(&experiments::convolution_density(&mx, &my, 2001, &cfg.solver)?, n);
    let mid = middle_indices(n, 0.6);
    let rig: Vec<f64> = spectra
        .iter()
        .map(|s| rigidity_report(s, &gamma, &mid).map(|r| r.max))
        .collect::<Result<_>>()?;

    let es = experiments::h_eigensystem(ens, &mut stream(cfg.seed, "stats-overlaps", 0))?;
    let table = overlaps(identity(n).as_ref(), &es, ens.a)?;
    let bulk = bulk_indices(&classical_locations(&mu, n), mu.essential_support(SUPPORT_TOL), st.kappa);
    let mut gmax = 0.0f64;
    for &i in &bulk {
        for j in (0..n).filter(|&j| j != i) {
            gmax = gmax.max(table.gamma(i, j));
        }
    }
    out.add("overlaps.csv", table.to_csv((n as f64).powf(ens.a) / n as f64));

    let x = st.mingap_x.values(st.mingap_n)?;
    let mg = experiments::min_gap_samples(&x, st.mingap_epsilon, ens.beta, st.mingap_trials, cfg.seed, "stats-mingap")?;
    let fit = haarflow::spectral_stats::min_gap_statistics(&mg, &experiments::min_gap_deltas(&mg))?;
    out.add("min_gap.csv", fit.to_csv());
    out.add(
        "min_gap.svg",
        line_plot(
            "P(min gap < delta)",
            "delta",
            "probability",
            &[Series::new("empirical", fit.tail.iter().map(|t| (t.0, t.1)).collect())],
            Axis::Log,
            Axis::Log,
        ),
    );

    let report = StatisticsReport {
        metadata: ReportMetadata {
            n,
            beta: ens.beta.value() as u8,
            trials: st.trials,
            master_seed: cfg.seed,
            streams: (0..st.trials as u32).map(|k| ("stats".to_string(), k)).collect(),
        },
        gap_ks: Some(gap_ks),
        gap_count: gaps.len(),
        correlation_bins: bins,
        local_law: None,
        rigidity_max: Some(rig.iter().cloned().fold(0.0, f64::max)),
        gamma_max_bulk: Some(gmax),
        min_gap_exponent: Some((fit.slope, fit.stderr)),
    };
    log::info!(
        "gap KS {gap_ks:.4} ({} gaps), rigidity median max {:.4}, bulk gamma max {gmax:.3e}, min-gap slope {:.3}, short range radius {}",
        gaps.len(),
        median(&rig),
        fit.slope,
        short_range_radius(n, ens.a)
    );
    out.add("stats.json", report.to_json()? + "\n");
    Ok(ExitCode::SUCCESS)
}

fn accept(cfg: &RunConfig, only: &[u8], quiet: bool, out: &mut Outputs) -> Result<ExitCode> {
    let ids: Vec<u8> = if only.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        only.to_vec()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(Error::InvalidArgument(format!("no criterion {bad}")));
    }
    let outcomes = experiments::run_acceptance(&cfg.accept, cfg.seed, &cfg.solver, &ids, |o| {
        if !quiet {
            println!("{}", o.line());
        }
    });
    let mut summary = String::from("id,name,passed,seconds,detail\n");
    for o in &outcomes {
        summary.push_str(&format!("{},{},{},{:.2},\"{}\"\n", o.id, o.name, o.passed, o.seconds, o.detail.replace('"', "'")));
        for (name, body) in &o.artifacts {
            out.add(name.clone(), body.clone());
        }
    }
    out.add("acceptance.csv", summary);
    out.add("acceptance.json", serde_json::to_string_pretty(&outcomes)? + "\n");
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    Ok(if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
