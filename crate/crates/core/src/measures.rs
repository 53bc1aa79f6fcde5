//! Probability measures on the real line.
//!
//! A [`Measure`] is either a finite list of weighted atoms (spectra, quantile
//! atomizations) or a density sampled on an ascending grid and interpolated
//! linearly between grid points (inverted Stieltjes transforms, analytic laws).
//! Grid masses are trapezoid integrals, which is exact for the interpolant, and
//! the Stieltjes transform of a grid measure integrates the interpolant exactly
//! so it stays accurate for `Im z` far below the grid spacing.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Atoms,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Support {
    /// Locations ascending; weights nonnegative and summing to one.
    Atoms {
        locations: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Strictly ascending points with a nonnegative density of unit trapezoid mass.
    Grid {
        points: Vec<f64>,
        density: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MeasureData", try_from = "MeasureData")]
pub struct Measure {
    support: Support,
    bound: f64,
    /// Cumulative mass at each grid point / after each atom, ending at exactly 1.
    cumulative: Vec<f64>,
    /// Mass strictly to the right of each grid point / atom.
    tail: Vec<f64>,
}

/// Serialized form; the derived tables are rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct MeasureData {
    support: Support,
    bound: f64,
}

impl From<Measure> for MeasureData {
    fn from(m: Measure) -> Self {
        Self {
            support: m.support,
            bound: m.bound,
        }
    }
}

impl TryFrom<MeasureData> for Measure {
    type Error = Error;
    fn try_from(d: MeasureData) -> Result<Self> {
        let m = match d.support {
            Support::Atoms { locations, weights } => Measure::atoms(locations, weights)?,
            Support::Grid { points, density } => Measure::grid(points, density)?,
        };
        m.with_bound(d.bound)
    }
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("non-finite {what}")));
    }
    Ok(())
}

fn trapezoid(points: &[f64], values: &[f64]) -> f64 {
    points
        .windows(2)
        .zip(values.windows(2))
        .map(|(p, v)| 0.5 * (p[1] - p[0]) * (v[0] + v[1]))
        .sum()
}

impl Measure {
    /// Weighted atoms; weights are rescaled if their sum is off by more than 1e-12.
    pub fn atoms(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if locations.is_empty() || locations.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} locations vs {} weights",
                locations.len(),
                weights.len()
            )));
        }
        check_finite(&locations, "location")?;
        check_finite(&weights, "weight")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidMeasure("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        let mut pairs: Vec<(f64, f64)> = locations.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (locations, mut weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if (total - 1.0).abs() > WEIGHT_TOL {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let bound = locations.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(Self::finish(Support::Atoms { locations, weights }, bound))
    }

    /// Empirical measure `N^{-1} sum_k delta_{x_k}`.
    pub fn uniform_atoms(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        Self::atoms(values.to_vec(), vec![w; values.len()])
    }

    pub fn delta(a: f64) -> Self {
        Self::atoms(vec![a], vec![1.0]).expect("single atom is a valid measure")
    }

    /// `(delta_{-1} + delta_{1}) / 2`.
    pub fn bernoulli() -> Self {
        Self::atoms(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("valid")
    }

    /// Gridded density, renormalized to unit trapezoid mass.
    pub fn grid(points: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != density.len() {
            return Err(Error::InvalidMeasure(format!(
                "grid needs >= 2 points and matching density ({} vs {})",
                points.len(),
                density.len()
            )));
        }
        check_finite(&points, "grid point")?;
        check_finite(&density, "density")?;
        if points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidMeasure("grid points not strictly ascending".into()));
        }
        if density.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidMeasure("negative density".into()));
        }
        let mass = trapezoid(&points, &density);
        if mass <= 0.0 {
            return Err(Error::InvalidMeasure("grid density has zero mass".into()));
        }
        let density = density.into_iter().map(|d| d / mass).collect();
        let bound = points[0].abs().max(points[points.len() - 1].abs());
        Ok(Self::finish(Support::Grid { points, density }, bound))
    }

    /// Semicircle law of the given variance on a Chebyshev-type grid (points
    /// cluster at the square-root edges).
    pub fn semicircle(variance: f64) -> Self {
        Self::semicircle_with_points(variance, 2001)
    }

    pub fn semicircle_with_points(variance: f64, n: usize) -> Self {
        assert!(variance > 0.0 && n >= 3);
        let r = 2.0 * variance.sqrt();
        let points: Vec<f64> = (0..n)
            .map(|k| -r * (PI * k as f64 / (n - 1) as f64).cos())
            .collect();
        let mut points = points;
        points[0] = -r;
        points[n - 1] = r;
        if n % 2 == 1 {
            points[n / 2] = 0.0;
        }
        let density = points.iter().map(|&x| semicircle_density(variance, x)).collect();
        Self::grid(points, density).expect("semicircle grid is valid")
    }

    /// Uniform law on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if b <= a || n < 2 {
            return Err(Error::InvalidMeasure(format!("uniform needs a < b, got [{a}, {b}]")));
        }
        let points = (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect();
        Self::grid(points, vec![1.0 / (b - a); n])
    }

    fn finish(support: Support, bound: f64) -> Self {
        let masses: Vec<f64> = match &support {
            Support::Atoms { weights, .. } => weights.clone(),
            Support::Grid { points, density } => std::iter::once(0.0)
                .chain(
                    points
                        .windows(2)
                        .zip(density.windows(2))
                        .map(|(p, d)| 0.5 * (p[1] - p[0]) * (d[0] + d[1])),
                )
                .collect(),
        };
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        let total = acc;
        cumulative.iter_mut().for_each(|c| *c /= total);
        // tail[k]: mass strictly right of atom k / grid point k
        let mut tail = vec![0.0; masses.len()];
        let mut acc = 0.0;
        for k in (0..masses.len()).rev() {
            tail[k] = acc / total;
            acc += masses[k];
        }
        Self {
            support,
            bound,
            cumulative,
            tail,
        }
    }

    /// Raises the support bound `K`; it can never shrink below `max |support|`.
    pub fn with_bound(mut self, k: f64) -> Result<Self> {
        if k < self.bound {
            return Err(Error::InvalidMeasure(format!(
                "bound {k} below support extent {}",
                self.bound
            )));
        }
        self.bound = k;
        Ok(self)
    }

    pub fn kind(&self) -> MeasureKind {
        match self.support {
            Support::Atoms { .. } => MeasureKind::Atoms,
            Support::Grid { .. } => MeasureKind::Grid,
        }
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `[inf supp, sup supp]`.
    pub fn support_interval(&self) -> (f64, f64) {
        match &self.support {
            Support::Atoms { locations, weights } => {
                let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (locations[first], locations[last])
            }
            Support::Grid { points, density } => {
                let n = points.len();
                let lo = (0..n - 1)
                    .find(|&k| density[k] > 0.0 || density[k + 1] > 0.0)
                    .unwrap_or(0);
                let hi = (1..n)
                    .rev()
                    .find(|&k| density[k] > 0.0 || density[k - 1] > 0.0)
                    .unwrap_or(n - 1);
                (points[lo], points[hi])
            }
        }
    }

    /// Support with the numerical tails removed: for a grid density, the
    /// outermost points where the density exceeds `rel * max_density`.
    /// Atomic measures return `support_interval`.
    pub fn essential_support(&self, rel: f64) -> (f64, f64) {
        match &self.support {
            Support::Atoms { .. } => self.support_interval(),
            Support::Grid { points, density } => {
                let cut = rel * self.max_density();
                match (density.iter().position(|&d| d > cut), density.iter().rposition(|&d| d > cut)) {
                    (Some(lo), Some(hi)) => (points[lo.saturating_sub(1)], points[(hi + 1).min(points.len() - 1)]),
                    _ => self.support_interval(),
                }
            }
        }
    }

    /// Location of the single atom carrying all the mass, if any.
    pub fn single_atom(&self) -> Option<f64> {
        match &self.support {
            Support::Atoms { locations, weights } => {
                let mut it = locations.iter().zip(weights).filter(|(_, &w)| w > 0.0);
                let (&first, _) = it.next()?;
                it.all(|(&x, _)| x == first).then_some(first)
            }
            Support::Grid { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// `int x^2 dmu`, the total mass of the hat-measure of `mu`.
    pub fn second_moment(&self) -> f64 {
        self.moment(2)
    }

    fn moment(&self, p: i32) -> f64 {
        match &self.support {
            Support::Atoms { locations, weights } => {
                locations.iter().zip(weights).map(|(x, w)| w * x.powi(p)).sum()
            }
            Support::Grid { points, density } => {
                // Simpson on each linear piece is exact for x^p * (linear) with p <= 2.
                points
                    .windows(2)
                    .zip(density.windows(2))
                    .map(|(x, d)| {
                        let xm = 0.5 * (x[0] + x[1]);
                        let dm = 0.5 * (d[0] + d[1]);
                        (x[1] - x[0]) / 6.0
                            * (d[0] * x[0].powi(p) + 4.0 * dm * xm.powi(p) + d[1] * x[1].powi(p))
                    })
                    .sum()
            }
        }
    }

    pub fn max_density(&self) -> f64 {
        match &self.support {
            Support::Atoms { .. } => f64::INFINITY,
            Support::Grid { density, .. } => density.iter().fold(0.0, |m, &d| m.max(d)),
        }
    }

    /// Translate by `a`.
    pub fn shifted(&self, a: f64) -> Self {
        let support = match &self.support {
            Support::Atoms { locations, weights } => Support::Atoms {
                locations: locations.iter().map(|x| x + a).collect(),
                weights: weights.clone(),
            },
            Support::Grid { points, density } => Support::Grid {
                points: points.iter().map(|x| x + a).collect(),
                density: density.clone(),
            },
        };
        let bound = match &support {
            Support::Atoms { locations, .. } => locations.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Support::Grid { points, .. } => points[0].abs().max(points[points.len() - 1].abs()),
        };
        Self::finish(support, bound)
    }

    /// Density of the interpolant at `x` (zero outside the grid; infinite mass at atoms).
    pub fn density_at(&self, x: f64) -> f64 {
        match &self.support {
            Support::Atoms { .. } => 0.0,
            Support::Grid { points, density } => {
                let n = points.len();
                if x < points[0] || x > points[n - 1] {
                    return 0.0;
                }
                let k = points.partition_point(|&p| p <= x).clamp(1, n - 1) - 1;
                let u = (x - points[k]) / (points[k + 1] - points[k]);
                density[k] + u * (density[k + 1] - density[k])
            }
        }
    }

    /// Stieltjes transform `int dmu(x) / (x - z)` for `Im z > 0`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        if !(z.im > 0.0) {
            return Err(Error::OffUpperHalfPlane(z.im));
        }
        Ok(self.stieltjes_unchecked(z).0)
    }

    /// Transform and its derivative `int dmu(x) / (x - z)^2`.
    pub fn stieltjes_with_derivative(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if !(z.im > 0.0) {
            return Err(Error::OffUpperHalfPlane(z.im));
        }
        Ok(self.stieltjes_unchecked(z))
    }

    pub(crate) fn stieltjes_unchecked(&self, z: Complex64) -> (Complex64, Complex64) {
        match &self.support {
            Support::Atoms { locations, weights } => {
                let mut m = Complex64::new(0.0, 0.0);
                let mut dm = Complex64::new(0.0, 0.0);
                for (&x, &w) in locations.iter().zip(weights) {
                    let r = (x - z).inv();
                    m += w * r;
                    dm += w * r * r;
                }
                (m, dm)
            }
            Support::Grid { points, density } => grid_transform(points, density, z),
        }
    }

    /// Right-continuous distribution function `mu((-inf, s])`.
    pub fn cdf(&self, s: f64) -> f64 {
        match &self.support {
            Support::Atoms { locations, .. } => {
                let k = locations.partition_point(|&x| x <= s);
                if k == 0 {
                    0.0
                } else {
                    self.cumulative[k - 1]
                }
            }
            Support::Grid { points, density } => {
                let n = points.len();
                if s <= points[0] {
                    return 0.0;
                }
                if s >= points[n - 1] {
                    return 1.0;
                }
                let k = points.partition_point(|&p| p <= s) - 1;
                let u = s - points[k];
                let slope = (density[k + 1] - density[k]) / (points[k + 1] - points[k]);
                let total = self.total_grid_mass();
                self.cumulative[k] + (density[k] * u + 0.5 * slope * u * u) / total
            }
        }
    }

    /// `mu((s, inf))`, accurate when tiny.
    fn upper_tail(&self, s: f64) -> f64 {
        match &self.support {
            Support::Atoms { locations, .. } => {
                let k = locations.partition_point(|&x| x <= s);
                if k == 0 {
                    1.0
                } else {
                    self.tail[k - 1]
                }
            }
            Support::Grid { points, density } => {
                let n = points.len();
                if s <= points[0] {
                    return 1.0;
                }
                if s >= points[n - 1] {
                    return 0.0;
                }
                let k = points.partition_point(|&p| p <= s) - 1;
                let v = points[k + 1] - s;
                let slope = (density[k + 1] - density[k]) / (points[k + 1] - points[k]);
                let total = self.total_grid_mass();
                self.tail[k + 1] + (density[k + 1] * v - 0.5 * slope * v * v) / total
            }
        }
    }

    // Densities are normalized at construction, so the trapezoid mass is 1 up to rounding.
    fn total_grid_mass(&self) -> f64 {
        1.0
    }

    /// `mu([a, b])`, computed from whichever end of the support is nearer so
    /// that masses near an edge keep their relative accuracy.
    pub fn mass_in(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return 0.0;
        }
        let median = self.quantile(0.5);
        let m = if 0.5 * (a + b) >= median {
            let left_open = match &self.support {
                // closed interval: include an atom sitting at `a`
                Support::Atoms { .. } => self.upper_tail(prev_float(a)),
                Support::Grid { .. } => self.upper_tail(a),
            };
            left_open - self.upper_tail(b)
        } else {
            let below_a = match &self.support {
                Support::Atoms { .. } => self.cdf(prev_float(a)),
                Support::Grid { .. } => self.cdf(a),
            };
            self.cdf(b) - below_a
        };
        m.max(0.0)
    }

    /// `inf { s : mu((-inf, s]) >= p }` for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.support_interval();
        if p <= 0.0 {
            return lo;
        }
        match &self.support {
            Support::Atoms { locations, .. } => {
                let k = self.cumulative.partition_point(|&c| c < p - WEIGHT_TOL);
                locations[k.min(locations.len() - 1)]
            }
            Support::Grid { points, density } => {
                if p >= 1.0 - 1e-14 {
                    return hi;
                }
                let total = self.total_grid_mass();
                // first point whose cumulative mass reaches p
                let j = self.cumulative.partition_point(|&c| c < p);
                if j == 0 {
                    return points[0];
                }
                if j >= points.len() {
                    return hi;
                }
                let k = j - 1;
                let r = (p - self.cumulative[k]) * total;
                let d0 = density[k];
                let dx = points[k + 1] - points[k];
                let slope = (density[k + 1] - d0) / dx;
                // solve d0 u + slope u^2 / 2 = r on [0, dx]
                let disc = (d0 * d0 + 2.0 * slope * r).max(0.0);
                let denom = d0 + disc.sqrt();
                let u = if denom > 0.0 { 2.0 * r / denom } else { dx };
                (points[k] + u.clamp(0.0, dx)).min(hi)
            }
        }
    }

    /// The `N` values `inf { s : mu((-inf, s]) >= k / N }`, `k = 1..=N`.
    pub fn quantiles(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|k| self.quantile(k as f64 / n as f64)).collect()
    }

    /// Text form: `kind=...`, `K=...`, a CSV header and one `x,value` row per atom/point.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (kind, header, xs, vs) = match &self.support {
            Support::Atoms { locations, weights } => ("atoms", "location,weight", locations, weights),
            Support::Grid { points, density } => ("grid", "point,density", points, density),
        };
        let _ = writeln!(s, "kind={kind}");
        let _ = writeln!(s, "K={:e}", self.bound);
        let _ = writeln!(s, "{header}");
        for (x, v) in xs.iter().zip(vs) {
            let _ = writeln!(s, "{x:e},{v:e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut bound = None;
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        let mut in_body = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_body {
                if let Some(v) = line.strip_prefix("kind=") {
                    kind = Some(match v.trim() {
                        "atoms" => MeasureKind::Atoms,
                        "grid" => MeasureKind::Grid,
                        other => return Err(Error::config(line_no, format!("unknown kind `{other}`"))),
                    });
                    continue;
                }
                if let Some(v) = line.strip_prefix("K=") {
                    bound = Some(parse_f64(v, line_no)?);
                    continue;
                }
                if line == "location,weight" || line == "point,density" {
                    in_body = true;
                    continue;
                }
                return Err(Error::config(line_no, format!("unexpected line `{line}`")));
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::config(line_no, "expected two comma-separated values"))?;
            xs.push(parse_f64(a, line_no)?);
            vs.push(parse_f64(b, line_no)?);
        }
        let kind = kind.ok_or_else(|| Error::config(0, "missing `kind=` line"))?;
        let m = match kind {
            MeasureKind::Atoms => Self::atoms(xs, vs)?,
            MeasureKind::Grid => Self::grid(xs, vs)?,
        };
        match bound {
            Some(k) if k > m.bound => m.with_bound(k),
            _ => Ok(m),
        }
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::config(line, format!("not a number: `{}`", s.trim())))
}

fn prev_float(x: f64) -> f64 {
    if x == 0.0 {
        -f64::MIN_POSITIVE
    } else if x > 0.0 {
        f64::from_bits(x.to_bits() - 1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// `ln(1 + u)` accurate for small `|u|`.
fn ln_1p(u: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * u.re + u.norm_sqr()).ln_1p();
    let im = u.im.atan2(1.0 + u.re);
    Complex64::new(re, im)
}

/// Exact transform of the piecewise-linear density and its derivative.
fn grid_transform(points: &[f64], density: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut m = Complex64::new(0.0, 0.0);
    let mut dm = Complex64::new(0.0, 0.0);
    let mut left = points[0] - z;
    for k in 0..points.len() - 1 {
        let (d0, d1) = (density[k], density[k + 1]);
        let dx = points[k + 1] - points[k];
        let right = points[k + 1] - z;
        if d0 == 0.0 && d1 == 0.0 {
            left = right;
            continue;
        }
        let slope = (d1 - d0) / dx;
        // L = ln((x1 - z) / (x0 - z))
        let u = dx / left;
        let log_ratio = if u.norm() < 0.5 { ln_1p(u) } else { (right / left).ln() };
        // density extended linearly, evaluated at z
        let at_z = d0 - slope * left;
        m += slope * dx + at_z * log_ratio;
        dm += slope * log_ratio + at_z * dx / (left * right);
        left = right;
    }
    (m, dm)
}

/// Density of the centered semicircle law with the given variance.
/// Relative density cut used for `essential_support` of inverted transforms.
pub const SUPPORT_TOL: f64 = 1e-4;

pub fn semicircle_density(variance: f64, x: f64) -> f64 {
    let r2 = 4.0 * variance;
    if x * x >= r2 {
        0.0
    } else {
        (r2 - x * x).sqrt() / (2.0 * PI * variance)
    }
}

/// Distribution function of the centered semicircle law.
pub fn semicircle_cdf(variance: f64, x: f64) -> f64 {
    let r = 2.0 * variance.sqrt();
    let u = (x / r).clamp(-1.0, 1.0);
    0.5 + (u * (1.0 - u * u).sqrt() + u.asin()) / PI
}

/// Stieltjes transform of the semicircle law, on the Nevanlinna branch (`Im m > 0`).
pub fn semicircle_stieltjes(variance: f64, z: Complex64) -> Complex64 {
    let s = (z * z - 4.0 * variance).sqrt();
    let a = (-z + s) / (2.0 * variance);
    if a.im > 0.0 {
        a
    } else {
        (-z - s) / (2.0 * variance)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// At least one of the two measures has a bounded Stieltjes transform.
    pub bounded: bool,
    pub edge_constant: Option<f64>,
    pub edge_delta0: Option<f64>,
    /// Quantile spacing lower bound holds for the quantiles of `mu_2`.
    pub quantile_gap_ok: bool,
    pub notes: Vec<String>,
}

/// Ladder of candidate `delta_0` values scanned by the edge certificate.
pub const EDGE_DELTA0_LADDER: [f64; 9] = [1.0, 0.316, 0.1, 0.0316, 0.01, 3.16e-3, 1e-3, 3.16e-4, 1e-4];
/// Samples in `h` span `[delta_0 * EDGE_H_SPAN, delta_0]`.
pub const EDGE_H_SPAN: f64 = 1e-4;
const EDGE_H_POINTS: usize = 20;
const EDGE_XI_QUANTILES: usize = 1000;

fn edge_xi_samples(m: &Measure) -> Vec<f64> {
    let mut xi = vec![m.support_interval().0];
    xi.extend(m.quantiles(EDGE_XI_QUANTILES));
    xi
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Largest edge constant certified on the samples for one `delta_0`.
fn certified_edge_constant(m: &Measure, xis: &[f64], delta0: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &h in &log_spaced(delta0 * EDGE_H_SPAN, delta0, EDGE_H_POINTS) {
        for &xi in xis {
            let mass = m.mass_in(xi - h, xi + h);
            let c = if mass <= 0.0 {
                f64::NEG_INFINITY
            } else if h < 1.0 {
                // mass >= h^(2-c)  <=>  c <= 2 - ln(mass)/ln(h)
                2.0 - mass.ln() / h.ln()
            } else if mass >= h.powf(2.0) {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            best = best.min(c);
        }
    }
    best
}

/// Largest `delta_0` on the ladder for which `mu([xi-h, xi+h]) >= h^(2-c)` holds
/// on every sample; `None` when no ladder value works or `m` has no density.
pub fn certify_edge(m: &Measure, c: f64) -> Option<f64> {
    if m.kind() != MeasureKind::Grid {
        return None;
    }
    let xis = edge_xi_samples(m);
    EDGE_DELTA0_LADDER
        .iter()
        .copied()
        .find(|&d| certified_edge_constant(m, &xis, d) >= c)
}

/// Best sampled `(c, delta_0)` pair: the largest certified constant over the
/// ladder, ties resolved toward the larger `delta_0`.
pub fn edge_certificate(m: &Measure) -> Option<(f64, f64)> {
    if m.kind() != MeasureKind::Grid {
        return None;
    }
    let xis = edge_xi_samples(m);
    let mut best: Option<(f64, f64)> = None;
    for &d in &EDGE_DELTA0_LADDER {
        let c = certified_edge_constant(m, &xis, d);
        if c > 0.0 && best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, d));
        }
    }
    best
}

/// Heuristic boundedness test: `sup_E |m(E + i eta)|` must not grow by more
/// than 25% between `eta = 1e-2` and `eta = 1e-4`.
pub fn has_bounded_transform(m: &Measure) -> bool {
    let k = m.bound() + 0.5;
    let sup = |eta: f64| {
        (0..=400)
            .map(|j| {
                let e = -k + 2.0 * k * j as f64 / 400.0;
                m.stieltjes_unchecked(Complex64::new(e, eta)).0.norm()
            })
            .fold(0.0, f64::max)
    };
    let coarse = sup(1e-2);
    let fine = sup(1e-4);
    fine <= 1.25 * coarse
}

/// Checks the standing assumptions on the pair `(mu_1, mu_2)`. Failures are reported, not thrown.
pub fn check_assumptions(m1: &Measure, m2: &Measure) -> AssumptionReport {
    let mut notes = Vec::new();
    let bounded1 = has_bounded_transform(m1);
    let bounded2 = has_bounded_transform(m2);
    if !(bounded1 || bounded2) {
        notes.push("neither measure has a bounded Stieltjes transform on the test grid".into());
    }
    let (edge_constant, edge_delta0) = match m2.kind() {
        MeasureKind::Atoms => {
            notes.push("mu_2 has no density: edge behavior cannot hold".into());
            (None, None)
        }
        MeasureKind::Grid => match edge_certificate(m2) {
            Some((c, d)) => (Some(c), Some(d)),
            None => {
                notes.push("edge behavior not certified for any sampled delta_0".into());
                (None, None)
            }
        },
    };
    let quantile_gap_ok = match m2.kind() {
        MeasureKind::Atoms => {
            notes.push("quantile spacing bound needs a bounded density".into());
            false
        }
        MeasureKind::Grid => {
            let n = EDGE_XI_QUANTILES;
            let y = m2.quantiles(n);
            let rho = m2.max_density();
            let slack = (n as f64).powf(0.1);
            let mut ok = true;
            'outer: for k in 0..n {
                for l in k + 1..n {
                    let need = ((l - k) as f64 - slack) / (rho * n as f64);
                    if y[l] - y[k] < need - 1e-12 {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            if !ok {
                notes.push("quantiles of mu_2 violate the spacing lower bound".into());
            }
            ok
        }
    };
    AssumptionReport {
        bounded: bounded1 || bounded2,
        edge_constant,
        edge_delta0,
        quantile_gap_ok,
        notes,
    }
}

#[derive(Clone, Debug)]
pub struct Inversion {
    pub measure: Measure,
    /// Trapezoid mass of `Im m / pi` before renormalization.
    pub raw_mass: f64,
    /// Raw mass deviates from 1 by more than 5%.
    pub flagged: bool,
}

/// Density `max(Im f(E + i eta0), 0) / pi` on `grid`, renormalized to unit mass.
pub fn density_from_stieltjes<F>(eval: F, grid: &[f64], eta0: f64) -> Result<Inversion>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(eta0 > 0.0) {
        return Err(Error::OffUpperHalfPlane(eta0));
    }
    let density: Vec<f64> = grid
        .iter()
        .map(|&e| (eval(Complex64::new(e, eta0)).im / PI).max(0.0))
        .collect();
    inversion_from_density(grid, density)
}

pub(crate) fn inversion_from_density(grid: &[f64], density: Vec<f64>) -> Result<Inversion> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("inversion grid needs >= 2 points".into()));
    }
    let raw_mass = trapezoid(grid, &density);
    let flagged = (raw_mass - 1.0).abs() > 0.05;
    if flagged {
        log::warn!("inverted density has mass {raw_mass:.4} before renormalization");
    }
    let measure = Measure::grid(grid.to_vec(), density)?;
    Ok(Inversion {
        measure,
        raw_mass,
        flagged,
    })
}
