//! Run configuration: a flat, sectioned `key = value` file.
//!
//! ```text
//! # comment
//! [ensemble]
//! n = 300
//! x = semicircle:1
//! ```
//!
//! Numbers accept scientific notation everywhere (`trials = 2e4`). Unknown
//! sections and keys are errors that carry the line number.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_models::{Beta, EnsembleConfig, SpectrumSpec};
use crate::measures::Measure;
use crate::subordination::SolverConfig;
use crate::unitary_diffusion::Retraction;

/// One `key = value` line.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: String,
    pub key: String,
    pub value: String,
}

/// Splits the text into entries; syntax errors only, no key checking.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = strip_comment(raw).trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(Error::config(line, "empty section name"));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, got `{s}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(line, "missing key"));
        }
        if section.is_empty() {
            return Err(Error::config(line, format!("key `{key}` outside any section")));
        }
        out.push(Entry {
            line,
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn strip_comment(s: &str) -> &str {
    match s.find(['#', ';']) {
        Some(i) => &s[..i],
        None => s,
    }
}

fn num(e: &Entry) -> Result<f64> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| Error::config(e.line, format!("`{}`: not a number: `{}`", e.key, e.value)))?;
    if !v.is_finite() {
        return Err(Error::config(e.line, format!("`{}` must be finite", e.key)));
    }
    Ok(v)
}

fn count(e: &Entry) -> Result<usize> {
    let v = num(e)?;
    if v < 0.0 || v.fract() != 0.0 || v > 1e15 {
        return Err(Error::config(e.line, format!("`{}` must be a nonnegative integer, got `{}`", e.key, e.value)));
    }
    Ok(v as usize)
}

fn positive(e: &Entry) -> Result<f64> {
    let v = num(e)?;
    if v <= 0.0 {
        return Err(Error::config(e.line, format!("`{}` must be positive", e.key)));
    }
    Ok(v)
}

fn list(e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::config(e.line, format!("`{}`: bad list entry `{}`", e.key, p.trim())))
        })
        .collect()
}

fn sizes(e: &Entry) -> Result<Vec<usize>> {
    list(e)?
        .into_iter()
        .map(|v| {
            if v >= 2.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(e.line, format!("`{}`: sizes must be integers >= 2", e.key)))
            }
        })
        .collect()
}

fn beta(e: &Entry) -> Result<Beta> {
    match e.value.as_str() {
        "1" => Ok(Beta::One),
        "2" => Ok(Beta::Two),
        v => Err(Error::config(e.line, format!("beta must be 1 or 2, got `{v}`"))),
    }
}

fn measure(e: &Entry) -> Result<Measure> {
    parse_measure(&e.value).map_err(|m| Error::config(e.line, format!("`{}`: {m}", e.key)))
}

/// Measure from a spec string:
/// `semicircle:VAR`, `bernoulli`, `delta:A`, `uniform:A:B`,
/// `atoms:X@W,X@W,...` or `file:PATH` (the text format of [`Measure::to_text`]).
pub fn parse_measure(s: &str) -> std::result::Result<Measure, String> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = |r: &str| -> std::result::Result<Vec<f64>, String> {
        r.split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}`")))
            .collect()
    };
    match kind.trim() {
        "semicircle" => {
            let v = if rest.is_empty() { vec![1.0] } else { nums(rest)? };
            match v[..] {
                [var] if var > 0.0 && var.is_finite() => Ok(Measure::semicircle(var)),
                _ => Err("semicircle takes one positive variance".into()),
            }
        }
        "bernoulli" if rest.is_empty() => Ok(Measure::bernoulli()),
        "delta" => match nums(rest)?[..] {
            [a] => Measure::atoms(vec![a], vec![1.0]).map_err(|e| e.to_string()),
            _ => Err("delta takes one location".into()),
        },
        "uniform" => match nums(rest)?[..] {
            [a, b] => Measure::uniform(a, b, 2).map_err(|e| e.to_string()),
            _ => Err("uniform takes `a:b`".into()),
        },
        "atoms" => {
            let mut loc = Vec::new();
            let mut w = Vec::new();
            for part in rest.split(',') {
                let (x, p) = part
                    .split_once('@')
                    .ok_or_else(|| format!("atom `{part}` is not `x@w`"))?;
                loc.push(x.trim().parse::<f64>().map_err(|_| format!("bad location `{x}`"))?);
                w.push(p.trim().parse::<f64>().map_err(|_| format!("bad weight `{p}`"))?);
            }
            Measure::atoms(loc, w).map_err(|e| e.to_string())
        }
        "file" => {
            let text = std::fs::read_to_string(Path::new(rest.trim())).map_err(|e| format!("{rest}: {e}"))?;
            Measure::from_text(&text).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown measure `{other}`")),
    }
}

/// Spectrum of `X` or `Y`: a measure spec (atomized by quantiles) or `values:v1,v2,...`.
pub fn parse_spectrum(s: &str) -> std::result::Result<SpectrumSpec, String> {
    if let Some(rest) = s.strip_prefix("values:") {
        let v = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad value `{p}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err("values must be finite".into());
        }
        return Ok(SpectrumSpec::Values(v));
    }
    parse_measure(s).map(SpectrumSpec::Quantiles)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeconvConfig {
    pub x: Measure,
    pub y: Measure,
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffuseConfig {
    pub steps: usize,
    pub trials: usize,
    pub retraction: Retraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupleSection {
    /// `matrix` or `synthetic`.
    pub mode: String,
    /// Synthetic overlap level; `None` means `N^a / N`.
    pub level: Option<f64>,
    pub steps: usize,
    pub trials: usize,
    pub kappa: f64,
    pub noise_damping_c2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawConfig {
    pub energies: Vec<f64>,
    /// Empty means the single value `N^-1/2`.
    pub etas: Vec<f64>,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub trials: usize,
    pub energy: f64,
    /// `0` selects `floor(N^0.3)`.
    pub window_k: usize,
    pub half_width: f64,
    pub kappa: f64,
    pub mingap_n: usize,
    pub mingap_trials: usize,
    pub mingap_epsilon: f64,
    pub mingap_x: SpectrumSpec,
}

/// Sizes and trial counts of the acceptance suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptConfig {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub grid_points: usize,
    pub sign_e_points: usize,
    pub sign_eta_points: usize,
    pub esd_n: usize,
    pub esd_trials: usize,
    pub law_n: usize,
    pub law_trials: usize,
    pub diffusion_sizes: Vec<usize>,
    pub diffusion_trials: usize,
    pub diffusion_steps: usize,
    pub couple_sizes: Vec<usize>,
    pub couple_trials: usize,
    pub couple_steps: usize,
    pub gap_n: usize,
    pub gap_trials: usize,
    pub mingap_n: usize,
    pub mingap_trials: usize,
    pub mingap_epsilon: f64,
    pub rigidity_sizes: Vec<usize>,
    pub rigidity_trials: usize,
    pub overlap_n: usize,
    pub overlap_trials: usize,
    /// Divides every size and trial count of the replay run in the determinism check.
    pub replay_shrink: usize,
}

impl Default for AcceptConfig {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.002,
            kappa: 0.1,
            grid_points: 1081,
            sign_e_points: 50,
            sign_eta_points: 10,
            esd_n: 500,
            esd_trials: 20,
            law_n: 300,
            law_trials: 20,
            diffusion_sizes: vec![100, 200, 400],
            diffusion_trials: 20,
            diffusion_steps: 200,
            couple_sizes: vec![100, 200, 300],
            couple_trials: 20,
            couple_steps: 200,
            gap_n: 400,
            gap_trials: 100,
            mingap_n: 10,
            mingap_trials: 20_000,
            mingap_epsilon: 1e-2,
            rigidity_sizes: vec![250, 500],
            rigidity_trials: 10,
            overlap_n: 400,
            overlap_trials: 20,
            replay_shrink: 10,
        }
    }
}

/// Fully resolved configuration; serialized verbatim into `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub ensemble: EnsembleConfig,
    pub solver: SolverConfig,
    pub freeconv: FreeconvConfig,
    pub sample: SampleConfig,
    pub diffuse: DiffuseConfig,
    pub couple: CoupleSection,
    pub locallaw: LocalLawConfig,
    pub stats: StatsConfig,
    pub accept: AcceptConfig,
}

pub const DEFAULT_SEED: u64 = 20_240_917;

impl Default for RunConfig {
    fn default() -> Self {
        let sc = || SpectrumSpec::Quantiles(Measure::semicircle(1.0));
        Self {
            seed: DEFAULT_SEED,
            ensemble: EnsembleConfig::new(300, Beta::Two, sc(), sc()),
            solver: SolverConfig::default(),
            freeconv: FreeconvConfig {
                x: Measure::semicircle(1.0),
                y: Measure::semicircle(1.0),
                e_min: -3.0,
                e_max: 3.0,
                points: 601,
            },
            sample: SampleConfig { trials: 1 },
            diffuse: DiffuseConfig {
                steps: 200,
                trials: 1,
                retraction: Retraction::Qr,
            },
            couple: CoupleSection {
                mode: "matrix".into(),
                level: None,
                steps: 200,
                trials: 1,
                kappa: 0.1,
                noise_damping_c2: None,
            },
            locallaw: LocalLawConfig {
                energies: vec![0.0],
                etas: Vec::new(),
                trials: 1,
            },
            stats: StatsConfig {
                trials: 20,
                energy: 0.0,
                window_k: 0,
                half_width: 10.0,
                kappa: 0.1,
                mingap_n: 10,
                mingap_trials: 2000,
                mingap_epsilon: 1e-2,
                mingap_x: SpectrumSpec::Quantiles(Measure::bernoulli()),
            },
            accept: AcceptConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    /// Defaults overridden by every entry of `text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for e in parse_entries(text)? {
            cfg.apply(&e)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn apply(&mut self, e: &Entry) -> Result<()> {
        let unknown = || Error::config(e.line, format!("unknown key `{}` in [{}]", e.key, e.section));
        match e.section.as_str() {
            "run" => match e.key.as_str() {
                "seed" => {
                    self.seed = e
                        .value
                        .parse()
                        .or_else(|_| count(e).map(|v| v as u64))
                        .map_err(|_| Error::config(e.line, format!("seed must be a u64, got `{}`", e.value)))?
                }
                _ => return Err(unknown()),
            },
            "ensemble" => {
                let c = &mut self.ensemble;
                match e.key.as_str() {
                    "n" => c.n = count(e)?,
                    "beta" => c.beta = beta(e)?,
                    "x" => c.x = parse_spectrum(&e.value).map_err(|m| Error::config(e.line, m))?,
                    "y" => c.y = parse_spectrum(&e.value).map_err(|m| Error::config(e.line, m))?,
                    "epsilon_reg" => c.epsilon_reg = num(e)?,
                    "a" => c.a = num(e)?,
                    "b" => c.b = num(e)?,
                    _ => return Err(unknown()),
                }
            }
            "solver" => {
                let c = &mut self.solver;
                match e.key.as_str() {
                    "tol" => c.tol = positive(e)?,
                    "max_iter" => c.max_iter = count(e)?,
                    "eta_min" => c.eta_min = positive(e)?,
                    "damping" => c.damping = positive(e)?,
                    "eta_start" => c.eta_start = positive(e)?,
                    _ => return Err(unknown()),
                }
            }
            "freeconv" => {
                let c = &mut self.freeconv;
                match e.key.as_str() {
                    "x" => c.x = measure(e)?,
                    "y" => c.y = measure(e)?,
                    "e_min" => c.e_min = num(e)?,
                    "e_max" => c.e_max = num(e)?,
                    "points" => c.points = count(e)?,
                    _ => return Err(unknown()),
                }
            }
            "sample" => match e.key.as_str() {
                "trials" => self.sample.trials = count(e)?,
                _ => return Err(unknown()),
            },
            "diffuse" => {
                let c = &mut self.diffuse;
                match e.key.as_str() {
                    "steps" => c.steps = count(e)?,
                    "trials" => c.trials = count(e)?,
                    "retraction" => {
                        c.retraction = match e.value.as_str() {
                            "qr" => Retraction::Qr,
                            "polar" => Retraction::Polar,
                            v => return Err(Error::config(e.line, format!("retraction must be qr or polar, got `{v}`"))),
                        }
                    }
                    _ => return Err(unknown()),
                }
            }
            "couple" => {
                let c = &mut self.couple;
                match e.key.as_str() {
                    "mode" => match e.value.as_str() {
                        "matrix" | "synthetic" => c.mode = e.value.clone(),
                        v => return Err(Error::config(e.line, format!("mode must be matrix or synthetic, got `{v}`"))),
                    },
                    "level" => c.level = Some(num(e)?),
                    "steps" => c.steps = count(e)?,
                    "trials" => c.trials = count(e)?,
                    "kappa" => c.kappa = num(e)?,
                    "noise_damping_c2" => c.noise_damping_c2 = Some(positive(e)?),
                    _ => return Err(unknown()),
                }
            }
            "locallaw" => {
                let c = &mut self.locallaw;
                match e.key.as_str() {
                    "energies" => c.energies = list(e)?,
                    "etas" => c.etas = list(e)?,
                    "trials" => c.trials = count(e)?,
                    _ => return Err(unknown()),
                }
            }
            "stats" => {
                let c = &mut self.stats;
                match e.key.as_str() {
                    "trials" => c.trials = count(e)?,
                    "energy" => c.energy = num(e)?,
                    "window_k" => c.window_k = count(e)?,
                    "half_width" => c.half_width = positive(e)?,
                    "kappa" => c.kappa = num(e)?,
                    "mingap_n" => c.mingap_n = count(e)?,
                    "mingap_trials" => c.mingap_trials = count(e)?,
                    "mingap_epsilon" => c.mingap_epsilon = positive(e)?,
                    "mingap_x" => c.mingap_x = parse_spectrum(&e.value).map_err(|m| Error::config(e.line, m))?,
                    _ => return Err(unknown()),
                }
            }
            "accept" => {
                let c = &mut self.accept;
                match e.key.as_str() {
                    "a" => c.a = num(e)?,
                    "b" => c.b = num(e)?,
                    "kappa" => c.kappa = num(e)?,
                    "grid_points" => c.grid_points = count(e)?,
                    "sign_e_points" => c.sign_e_points = count(e)?,
                    "sign_eta_points" => c.sign_eta_points = count(e)?,
                    "esd_n" => c.esd_n = count(e)?,
                    "esd_trials" => c.esd_trials = count(e)?,
                    "law_n" => c.law_n = count(e)?,
                    "law_trials" => c.law_trials = count(e)?,
                    "diffusion_sizes" => c.diffusion_sizes = sizes(e)?,
                    "diffusion_trials" => c.diffusion_trials = count(e)?,
                    "diffusion_steps" => c.diffusion_steps = count(e)?,
                    "couple_sizes" => c.couple_sizes = sizes(e)?,
                    "couple_trials" => c.couple_trials = count(e)?,
                    "couple_steps" => c.couple_steps = count(e)?,
                    "gap_n" => c.gap_n = count(e)?,
                    "gap_trials" => c.gap_trials = count(e)?,
                    "mingap_n" => c.mingap_n = count(e)?,
                    "mingap_trials" => c.mingap_trials = count(e)?,
                    "mingap_epsilon" => c.mingap_epsilon = positive(e)?,
                    "rigidity_sizes" => c.rigidity_sizes = sizes(e)?,
                    "rigidity_trials" => c.rigidity_trials = count(e)?,
                    "overlap_n" => c.overlap_n = count(e)?,
                    "overlap_trials" => c.overlap_trials = count(e)?,
                    "replay_shrink" => c.replay_shrink = count(e)?.max(1),
                    _ => return Err(unknown()),
                }
            }
            other => return Err(Error::config(e.line, format!("unknown section [{other}]"))),
        }
        Ok(())
    }

    /// Cross-field checks that single entries cannot see.
    fn check(&self) -> Result<()> {
        self.ensemble.validate()?;
        let f = &self.freeconv;
        if !(f.e_max > f.e_min) || f.points < 2 {
            return Err(Error::InvalidArgument("freeconv needs e_min < e_max and points >= 2".into()));
        }
        if self.diffuse.steps == 0 || self.couple.steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        if self.locallaw.etas.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("etas must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_scientific_counts() {
        let cfg = RunConfig::from_text(
            "# demo\n[run]\nseed = 42\n[ensemble]\nn = 1e2 ; inline\nbeta = 1\nx = bernoulli\ny = values:3,1,2,0\n[stats]\nmingap_trials = 2e4\n",
        );
        // y has 4 values, n = 100: the mismatch only surfaces when sampling
        let cfg = cfg.unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.ensemble.n, 100);
        assert_eq!(cfg.ensemble.beta, Beta::One);
        assert_eq!(cfg.stats.mingap_trials, 20_000);
        assert!(cfg.ensemble.y.values(100).is_err());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::from_text("[ensemble]\nn = 10\nbta = 2\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bta"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_section_and_syntax_errors() {
        assert!(matches!(RunConfig::from_text("[nope]\nx = 1\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(RunConfig::from_text("[run]\nseed\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(RunConfig::from_text("seed = 1\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::from_text("[run\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(
            RunConfig::from_text("[ensemble]\nn = 2.5\n"),
            Err(Error::Config { line: 2, .. })
        ));
    }

    #[test]
    fn cross_field_checks() {
        assert!(RunConfig::from_text("[ensemble]\nb = 0.5\n").unwrap_err().is_config());
        assert!(RunConfig::from_text("[freeconv]\ne_min = 1\ne_max = 0\n").is_err());
    }

    #[test]
    fn measure_specs() {
        assert_eq!(parse_measure("delta:0.5").unwrap().single_atom(), Some(0.5));
        assert_eq!(parse_measure("bernoulli").unwrap().support_interval(), (-1.0, 1.0));
        assert_eq!(parse_measure("uniform:-1:1").unwrap().support_interval(), (-1.0, 1.0));
        let m = parse_measure("atoms:0@0.25,2@0.75").unwrap();
        assert!((m.mean() - 1.5).abs() < 1e-15);
        assert!((parse_measure("semicircle:2").unwrap().second_moment() - 2.0).abs() < 1e-4);
        for bad in ["semicircle:-1", "delta", "atoms:1", "wobble", "uniform:1"] {
            assert!(parse_measure(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back.accept, cfg.accept);
        assert_eq!(back.seed, cfg.seed);
    }
}
