//! wasm-bindgen entry points for the static demo page. Every function
//! returns a JSON string so the page needs no generated TypeScript types.

use haarflow::config::parse_measure;
use haarflow::dbm::{couple_run, CoupleConfig, CoupleMode};
use haarflow::experiments::{h_spectra, linspace};
use haarflow::matrix_models::{Beta, EnsembleConfig, SpectrumSpec};
use haarflow::measures::{Measure, SUPPORT_TOL};
use haarflow::rng::stream;
use haarflow::spectral_stats::{bulk_indices, default_window, ks_distance, reference_spacing_cdf, reference_spacing_density, unfold_gaps};
use haarflow::subordination::{classical_locations, free_convolution, SolverConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn beta_of(b: u8) -> Result<Beta, JsValue> {
    match b {
        1 => Ok(Beta::One),
        2 => Ok(Beta::Two),
        _ => Err(js_err("beta must be 1 or 2")),
    }
}

/// `{"e": [...], "density": [...], "converged": f}` for `mu_x ⊞ mu_y`,
/// with measures written like `semicircle:1`, `bernoulli`, `uniform:-1:1`.
#[wasm_bindgen]
pub fn free_convolution_density(x: &str, y: &str, e_min: f64, e_max: f64, points: usize) -> Result<String, JsValue> {
    density_json(x, y, e_min, e_max, points).map_err(js_err)
}

fn density_json(x: &str, y: &str, e_min: f64, e_max: f64, points: usize) -> Result<String, String> {
    if !(e_max > e_min) || !(2..=5000).contains(&points) {
        return Err("need e_min < e_max and 2 <= points <= 5000".into());
    }
    let mx = parse_measure(x)?;
    let my = parse_measure(y)?;
    let grid = linspace(e_min, e_max, points);
    let fc = free_convolution(&mx, &my, &grid, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let density: Vec<f64> = fc.solutions.iter().map(|s| s.m.im / std::f64::consts::PI).collect();
    Ok(json!({ "e": grid, "density": density, "converged": fc.converged_fraction() }).to_string())
}

/// Perturbed and clean DBM driven by the same noise, synthetic overlaps at
/// `level`. Returns `{"t": [...], "lambda": [[...]], "mu": [[...]], "sup_diff": [...]}`
/// restricted to the bulk indices.
#[wasm_bindgen]
pub fn dbm_paths(n: usize, steps: usize, level: f64, seed: u64) -> Result<String, JsValue> {
    if !(4..=200).contains(&n) || !(1..=2000).contains(&steps) || !(0.0..1.0).contains(&level) {
        return Err(js_err("need 4 <= n <= 200, 1 <= steps <= 2000, 0 <= level < 1"));
    }
    let sc = || SpectrumSpec::Quantiles(Measure::semicircle(1.0));
    let mut cfg = CoupleConfig::new(EnsembleConfig::new(n, Beta::Two, sc(), sc()), CoupleMode::Synthetic { level });
    cfg.steps = steps;
    let mu = Measure::semicircle(2.0);
    let bulk = bulk_indices(&classical_locations(&mu, n), mu.essential_support(SUPPORT_TOL), 0.1);
    let p = couple_run(&cfg, &bulk, &mut stream(seed, "web-dbm", 0)).map_err(js_err)?;
    let pick = |path: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        path.iter().map(|row| bulk.iter().map(|&i| row[i]).collect()).collect()
    };
    Ok(json!({
        "t": p.times,
        "lambda": pick(&p.lambda_path),
        "mu": pick(&p.mu_path),
        "sup_diff": p.sup_diff.iter().map(|s| s.1).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Unfolded bulk gaps of `V*XV + U*YU` (semicircle X and Y) with the
/// reference spacing density. Returns `{"gaps": [...], "s": [...], "reference": [...], "ks": f}`.
#[wasm_bindgen]
pub fn gap_histogram(n: usize, trials: usize, beta: u8, seed: u64) -> Result<String, JsValue> {
    if !(20..=300).contains(&n) || !(1..=200).contains(&trials) {
        return Err(js_err("need 20 <= n <= 300 and 1 <= trials <= 200"));
    }
    let beta = beta_of(beta)?;
    let sc = || SpectrumSpec::Quantiles(Measure::semicircle(1.0));
    let ens = EnsembleConfig::new(n, beta, sc(), sc());
    let spectra = h_spectra(&ens, trials, seed, "web-gaps").map_err(js_err)?;
    let rho = Measure::semicircle(2.0).density_at(0.0);
    // a wider window than the statistics default: the page wants a visible histogram
    let gaps = unfold_gaps(&spectra, rho, 0.0, default_window(n).max(n / 8)).map_err(js_err)?;
    let s = linspace(0.0, 4.0, 161);
    let reference: Vec<f64> = s.iter().map(|&v| reference_spacing_density(beta, v)).collect();
    let ks = ks_distance(&gaps, |v| reference_spacing_cdf(beta, v));
    Ok(json!({ "gaps": gaps, "s": s, "reference": reference, "ks": ks }).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_json_has_matching_lengths() {
        let s = density_json("semicircle:1", "semicircle:1", -3.0, 3.0, 31).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["e"].as_array().unwrap().len(), 31);
        assert_eq!(v["density"].as_array().unwrap().len(), 31);
        assert!(density_json("nope", "bernoulli", -1.0, 1.0, 10).is_err());
    }

    #[test]
    fn gap_histogram_reports_gaps() {
        let v: serde_json::Value = serde_json::from_str(&gap_histogram(60, 4, 2, 3).unwrap()).unwrap();
        assert!(!v["gaps"].as_array().unwrap().is_empty());
        assert!(v["ks"].as_f64().unwrap() <= 1.0);
    }

    #[test]
    fn dbm_paths_restrict_to_bulk() {
        let v: serde_json::Value = serde_json::from_str(&dbm_paths(20, 10, 0.05, 1).unwrap()).unwrap();
        assert_eq!(v["t"].as_array().unwrap().len(), v["sup_diff"].as_array().unwrap().len());
        let width = v["lambda"][0].as_array().unwrap().len();
        assert!(width > 0 && width < 20);
    }
}
