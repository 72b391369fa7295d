//! Shape-parameter estimation from drop-extremes volatility ratios, the
//! expected-volatility curve, the window simulation study and chi fits.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::Serialize;
use statrs::statistics::{Data, Median, Statistics};

use crate::distributions::{ChiParams, ReturnDistribution};
use crate::error::{GossetError, Result};
use crate::ingest::{segment, ReturnSeries};
use crate::quadrature::{integrate_second_moment, Interval, QuadratureConfig};
use crate::special::digamma;

/// ν grid of the simulated curve; the last point is the normal kernel.
pub const SIMULATED_NU_GRID: [f64; 26] = [
    2.25,
    2.5,
    3.0,
    3.5,
    4.0,
    5.0,
    6.0,
    7.0,
    8.0,
    10.0,
    12.0,
    14.0,
    16.0,
    20.0,
    25.0,
    30.0,
    40.0,
    50.0,
    70.0,
    100.0,
    150.0,
    200.0,
    300.0,
    500.0,
    1000.0,
    f64::INFINITY,
];

/// Windows simulated per grid point when building a [`VolatilityCurve`].
pub const DEFAULT_CURVE_TRIALS: usize = 20_000;

/// Smallest ν the truncated curve is inverted over.
const TRUNCATED_NU_FLOOR: f64 = 2.05;
const TRUNCATED_NU_CEILING: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let std = if values.len() > 1 { values.std_dev() } else { 0.0 };
        Self {
            mean: values.mean(),
            median: Data::new(values.to_vec()).median(),
            std,
        }
    }
}

/// Per-window sample volatilities after symmetrically dropping extremes.
///
/// A drop count is the total number of values removed from each sorted
/// window, half from each end. Level 0 (the full window) is always present.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStudy {
    window_len: usize,
    drop_counts: Vec<usize>,
    volatilities: Vec<Vec<f64>>,
    summaries: Vec<Summary>,
    zero_variance: Vec<usize>,
}

impl WindowStudy {
    pub fn from_windows<'a, I>(windows: I, window_len: usize, drop_counts: &[usize]) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let drop_counts = normalize_drops(window_len, drop_counts)?;
        let mut volatilities = vec![Vec::new(); drop_counts.len()];
        let mut zero_variance = Vec::new();
        let mut sorted = Vec::with_capacity(window_len);
        for (i, w) in windows.into_iter().enumerate() {
            if w.len() != window_len {
                return Err(GossetError::invalid(
                    "window",
                    format!("window {i} has {} values, expected {window_len}", w.len()),
                ));
            }
            sorted.clear();
            sorted.extend_from_slice(w);
            sorted.sort_by(f64::total_cmp);
            for (level, &d) in drop_counts.iter().enumerate() {
                let kept = &sorted[d / 2..window_len - d / 2];
                let s = kept.std_dev();
                volatilities[level].push(s);
            }
            if volatilities[0][i] == 0.0 {
                zero_variance.push(i);
            }
        }
        if volatilities[0].is_empty() {
            return Err(GossetError::invalid("windows", "no complete window"));
        }
        let summaries = volatilities.iter().map(|v| Summary::of(v)).collect();
        Ok(Self {
            window_len,
            drop_counts,
            volatilities,
            summaries,
            zero_variance,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Drop levels in increasing order, starting with 0.
    pub fn drop_counts(&self) -> &[usize] {
        &self.drop_counts
    }

    pub fn n_windows(&self) -> usize {
        self.volatilities[0].len()
    }

    fn level(&self, drop: usize) -> Result<usize> {
        self.drop_counts
            .iter()
            .position(|&d| d == drop)
            .ok_or_else(|| GossetError::invalid("drop", format!("level {drop} not in study {:?}", self.drop_counts)))
    }

    pub fn volatilities(&self, drop: usize) -> Result<&[f64]> {
        Ok(&self.volatilities[self.level(drop)?])
    }

    pub fn summary(&self, drop: usize) -> Result<Summary> {
        Ok(self.summaries[self.level(drop)?])
    }

    /// Indices of windows whose full-window volatility is exactly zero.
    pub fn zero_variance_windows(&self) -> &[usize] {
        &self.zero_variance
    }

    /// Ratio of the mean volatility at `drop` to the full-window mean, with
    /// its propagated two-sigma uncertainty.
    pub fn ratio(&self, drop: usize, form: CovarianceForm) -> Result<RatioEstimate> {
        let full = &self.volatilities[0];
        let cut = &self.volatilities[self.level(drop)?];
        let n = full.len() as f64;
        if full.len() < 2 {
            return Err(GossetError::invalid("windows", "need at least 2 windows for a ratio uncertainty"));
        }
        let (a, b) = (self.summaries[0], self.summaries[self.level(drop)?]);
        if a.mean == 0.0 {
            return Err(GossetError::invalid(
                "windows",
                "every window has zero volatility; the normalized ratio is undefined",
            ));
        }
        let cov = full.iter().covariance(cut.iter()) / n;
        let uncertainty = ratio_uncertainty_with(a.mean, a.std / n.sqrt(), b.mean, b.std / n.sqrt(), cov, form)?;
        Ok(RatioEstimate {
            drop,
            p_n: self.kept_fraction(drop),
            ratio: b.mean / a.mean,
            uncertainty,
            median_ratio: b.median / a.median,
        })
    }

    fn kept_fraction(&self, drop: usize) -> f64 {
        (self.window_len - drop) as f64 / self.window_len as f64
    }
}

fn normalize_drops(window_len: usize, drops: &[usize]) -> Result<Vec<usize>> {
    if window_len < 3 {
        return Err(GossetError::invalid("window_len", format!("must be at least 3, got {window_len}")));
    }
    let mut out = vec![0];
    for &d in drops {
        if d % 2 != 0 {
            return Err(GossetError::invalid("drops", format!("drop count {d} is odd")));
        }
        if d + 2 > window_len {
            return Err(GossetError::invalid(
                "drops",
                format!("drop count {d} leaves fewer than 2 of {window_len} values"),
            ));
        }
        out.push(d);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Sample volatilities of the non-overlapping windows of `series`.
pub fn window_volatilities(series: &ReturnSeries, window_len: usize, drop_counts: &[usize]) -> Result<WindowStudy> {
    if series.len() < window_len {
        return Err(GossetError::invalid(
            "series",
            format!("{} returns is shorter than one window of {window_len}", series.len()),
        ));
    }
    WindowStudy::from_windows(segment(series, window_len)?, window_len, drop_counts)
}

/// Coefficient on the covariance term of the ratio propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CovarianceForm {
    /// `−(B/A³)·cov`
    #[default]
    Single,
    /// `−2(B/A³)·cov`, the first-order Taylor form.
    Double,
}

impl FromStr for CovarianceForm {
    type Err = GossetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(CovarianceForm::Single),
            "double" => Ok(CovarianceForm::Double),
            other => Err(GossetError::invalid("covariance", format!("expected single or double, got `{other}`"))),
        }
    }
}

/// Two-sigma uncertainty of `B/A` from the means, their standard errors and
/// their covariance, using [`CovarianceForm::Single`].
pub fn ratio_uncertainty(mean_a: f64, s_a: f64, mean_b: f64, s_b: f64, cov_ab: f64) -> Result<f64> {
    ratio_uncertainty_with(mean_a, s_a, mean_b, s_b, cov_ab, CovarianceForm::Single)
}

pub fn ratio_uncertainty_with(
    mean_a: f64,
    s_a: f64,
    mean_b: f64,
    s_b: f64,
    cov_ab: f64,
    form: CovarianceForm,
) -> Result<f64> {
    if mean_a == 0.0 || !mean_a.is_finite() {
        return Err(GossetError::invalid("mean_a", format!("must be finite and nonzero, got {mean_a}")));
    }
    for (name, s) in [("s_a", s_a), ("s_b", s_b)] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(GossetError::invalid(name, format!("must be non-negative, got {s}")));
        }
    }
    let coef = match form {
        CovarianceForm::Single => 1.0,
        CovarianceForm::Double => 2.0,
    };
    let a2 = mean_a * mean_a;
    let var = s_b * s_b / a2 + (s_a * mean_b / a2).powi(2) - coef * mean_b / (a2 * mean_a) * cov_ab;
    if var < 0.0 {
        return Err(GossetError::NegativeVariance(var));
    }
    Ok(2.0 * var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub drop: usize,
    /// Fraction of each window kept at this level.
    pub p_n: f64,
    pub ratio: f64,
    pub uncertainty: f64,
    pub median_ratio: f64,
}

/// Root-mean-square return of the kernel restricted to its central `p_n`
/// probability mass.
pub fn expected_volatility(dist: &ReturnDistribution, p_n: f64) -> Result<f64> {
    if !(p_n > 0.0 && p_n <= 1.0) {
        return Err(GossetError::invalid("p_n", format!("must lie in (0, 1], got {p_n}")));
    }
    if p_n == 1.0 {
        return match dist.variance() {
            Some(v) if v.is_finite() => Ok(v.sqrt()),
            _ => Err(GossetError::invalid(
                "p_n",
                format!("full-range volatility diverges for nu = {}", dist.nu()),
            )),
        };
    }
    let x = dist.two_sided_critical(p_n)?;
    let m2 = integrate_second_moment(dist, Interval::symmetric(x)?, &QuadratureConfig::default())?;
    Ok((m2 / p_n).sqrt())
}

/// `expected_volatility(p_n) / expected_volatility(1)`.
pub fn normalized_volatility(dist: &ReturnDistribution, p_n: f64) -> Result<f64> {
    Ok(expected_volatility(dist, p_n)? / expected_volatility(dist, 1.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub nu: f64,
    pub p_n: f64,
    pub ratio: f64,
}

/// Normalized volatility for every `(ν, p_n)` pair, ν-major.
pub fn normalized_vol_curve(nu_grid: &[f64], fractions: &[f64]) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::with_capacity(nu_grid.len() * fractions.len());
    for &nu in nu_grid {
        let dist = ReturnDistribution::from_nu(nu)?;
        for &p_n in fractions {
            out.push(CurvePoint {
                nu,
                p_n,
                ratio: normalized_volatility(&dist, p_n)?,
            });
        }
    }
    Ok(out)
}

/// How the normalized-volatility curve is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveSource {
    /// Closed-form truncated-kernel ratio; the large-window limit.
    Truncated,
    /// Monte Carlo ratio of mean window volatilities at the study's window length.
    Simulated { trials: usize, seed: u64 },
}

impl fmt::Display for CurveSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSource::Truncated => f.write_str("truncated"),
            CurveSource::Simulated { .. } => f.write_str("simulated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CurveLevel {
    drop: usize,
    p_n: f64,
    /// `(1/ν, ratio)` knots with `1/ν` increasing; `None` for the truncated curve.
    table: Option<(Vec<f64>, Vec<f64>)>,
}

/// Normalized volatility as a function of ν for each drop level of a
/// window length, with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityCurve {
    window_len: usize,
    source: CurveSource,
    levels: Vec<CurveLevel>,
}

impl VolatilityCurve {
    pub fn build(source: CurveSource, window_len: usize, drops: &[usize]) -> Result<Self> {
        match source {
            CurveSource::Truncated => Self::truncated(window_len, drops),
            CurveSource::Simulated { trials, seed } => Self::simulated(window_len, drops, trials, seed),
        }
    }

    pub fn truncated(window_len: usize, drops: &[usize]) -> Result<Self> {
        let levels = normalize_drops(window_len, drops)?
            .into_iter()
            .filter(|&d| d > 0)
            .map(|drop| CurveLevel {
                drop,
                p_n: (window_len - drop) as f64 / window_len as f64,
                table: None,
            })
            .collect();
        Ok(Self {
            window_len,
            source: CurveSource::Truncated,
            levels,
        })
    }

    /// Simulates `trials` windows at every point of [`SIMULATED_NU_GRID`],
    /// then smooths each level to be nondecreasing in ν.
    pub fn simulated(window_len: usize, drops: &[usize], trials: usize, seed: u64) -> Result<Self> {
        let drops = normalize_drops(window_len, drops)?;
        let mut raw = vec![Vec::with_capacity(SIMULATED_NU_GRID.len()); drops.len()];
        for (i, &nu) in SIMULATED_NU_GRID.iter().enumerate() {
            let dist = ReturnDistribution::from_nu(nu)?;
            let study = simulate_window_study(&dist, window_len, &drops, trials, derive_seed(seed, i as u64))?;
            let base = study.summaries[0].mean;
            for (level, s) in study.summaries.iter().enumerate() {
                raw[level].push(s.mean / base);
            }
        }
        let inv_nu: Vec<f64> = SIMULATED_NU_GRID.iter().rev().map(|nu| 1.0 / nu).collect();
        let levels = drops
            .iter()
            .zip(raw)
            .skip(1)
            .map(|(&drop, ratios)| {
                let mut smooth = isotonic_increasing(&ratios);
                smooth.reverse();
                CurveLevel {
                    drop,
                    p_n: (window_len - drop) as f64 / window_len as f64,
                    table: Some((inv_nu.clone(), smooth)),
                }
            })
            .collect();
        Ok(Self {
            window_len,
            source: CurveSource::Simulated { trials, seed },
            levels,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn source(&self) -> CurveSource {
        self.source
    }

    /// Nonzero drop levels covered by the curve.
    pub fn drops(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.drop).collect()
    }

    fn level(&self, drop: usize) -> Result<&CurveLevel> {
        self.levels
            .iter()
            .find(|l| l.drop == drop)
            .ok_or_else(|| GossetError::invalid("drop", format!("curve has no level {drop}")))
    }

    /// Smallest ν the inverse can return.
    pub fn nu_floor(&self) -> f64 {
        match self.source {
            CurveSource::Truncated => TRUNCATED_NU_FLOOR,
            CurveSource::Simulated { .. } => SIMULATED_NU_GRID[0],
        }
    }

    pub fn ratio(&self, drop: usize, nu: f64) -> Result<f64> {
        let level = self.level(drop)?;
        match &level.table {
            None => normalized_volatility(&ReturnDistribution::from_nu(nu)?, level.p_n),
            Some((t, r)) => {
                if !(nu >= SIMULATED_NU_GRID[0]) {
                    return Err(GossetError::invalid(
                        "nu",
                        format!("simulated curve starts at {}, got {nu}", SIMULATED_NU_GRID[0]),
                    ));
                }
                Ok(interpolate(t, r, 1.0 / nu))
            }
        }
    }

    /// Curve value in the normal limit.
    pub fn asymptote(&self, drop: usize) -> Result<f64> {
        self.ratio(drop, f64::INFINITY)
    }

    /// ν whose curve value is `ratio`; clamps to [`Self::nu_floor`] below the
    /// curve and fails with `NoSolution` at or above the normal asymptote.
    pub fn invert(&self, drop: usize, ratio: f64) -> Result<f64> {
        let level = self.level(drop)?;
        let top = self.asymptote(drop)?;
        if !(ratio < top) {
            return Err(GossetError::NoSolution(format!(
                "ratio {ratio:.4} at drop {drop} is not below the normal-limit value {top:.4}"
            )));
        }
        let floor = self.nu_floor();
        if ratio <= self.ratio(drop, floor)? {
            return Ok(floor);
        }
        match &level.table {
            Some((t, r)) => Ok(1.0 / invert_decreasing(t, r, ratio)),
            None => {
                let (mut lo, mut hi) = ((floor - 2.0).ln(), (TRUNCATED_NU_CEILING - 2.0).ln());
                if ratio >= self.ratio(drop, TRUNCATED_NU_CEILING)? {
                    return Ok(TRUNCATED_NU_CEILING);
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.ratio(drop, 2.0 + mid.exp())? < ratio {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 {
                        break;
                    }
                }
                Ok(2.0 + (0.5 * (lo + hi)).exp())
            }
        }
    }
}

fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1)
}

/// Pool-adjacent-violators fit that is nondecreasing in index order.
fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m1, n1) = blocks[blocks.len() - 1];
            let (m0, n0) = blocks[blocks.len() - 2];
            if m0 <= m1 {
                break;
            }
            blocks.pop();
            let n = n0 + n1;
            *blocks.last_mut().unwrap() = ((m0 * n0 as f64 + m1 * n1 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// Piecewise-linear interpolation with `x` increasing; clamps outside.
fn interpolate(x: &[f64], y: &[f64], at: f64) -> f64 {
    if at <= x[0] {
        return y[0];
    }
    let i = x.partition_point(|&v| v < at);
    if i >= x.len() {
        return y[y.len() - 1];
    }
    let w = (at - x[i - 1]) / (x[i] - x[i - 1]);
    y[i - 1] + w * (y[i] - y[i - 1])
}

/// Inverse of a nonincreasing piecewise-linear table; `target` must lie within `y`.
fn invert_decreasing(x: &[f64], y: &[f64], target: f64) -> f64 {
    for i in 1..x.len() {
        if y[i] <= target {
            if y[i - 1] == y[i] {
                return x[i - 1];
            }
            let w = (y[i - 1] - target) / (y[i - 1] - y[i]);
            return x[i - 1] + w * (x[i] - x[i - 1]);
        }
    }
    x[x.len() - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CalibrationMethod {
    CurveMatch,
}

/// Ratio observed at one drop level, as fed to the curve inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedRatio {
    pub drop: usize,
    pub ratio: f64,
    /// Two-sigma half width.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelEstimate {
    pub drop: usize,
    pub p_n: f64,
    pub ratio: f64,
    pub uncertainty: f64,
    pub nu_hat: f64,
    pub nu_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub nu_hat: f64,
    /// 95% interval; the upper end is `∞` when the ratio band reaches the normal limit.
    pub nu_ci: (f64, f64),
    pub levels: Vec<LevelEstimate>,
    pub method: CalibrationMethod,
    pub source: CurveSource,
}

/// Inverts the truncated curve with [`CovarianceForm::Single`] uncertainties.
pub fn estimate_nu(study: &WindowStudy) -> Result<CalibrationResult> {
    let curve = VolatilityCurve::truncated(study.window_len, &study.drop_counts)?;
    estimate_nu_with(study, &curve, CovarianceForm::Single)
}

pub fn estimate_nu_with(study: &WindowStudy, curve: &VolatilityCurve, form: CovarianceForm) -> Result<CalibrationResult> {
    if study.window_len != curve.window_len {
        return Err(GossetError::invalid(
            "curve",
            format!("built for window {}, study uses {}", curve.window_len, study.window_len),
        ));
    }
    let observed = study
        .drop_counts
        .iter()
        .filter(|&&d| d > 0)
        .map(|&d| {
            let r = study.ratio(d, form)?;
            Ok(ObservedRatio {
                drop: d,
                ratio: r.ratio,
                uncertainty: r.uncertainty,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    estimate_nu_from_ratios(curve, &observed)
}

/// Maps each ratio band through the curve inverse and combines the levels.
///
/// Levels are combined in `1/ν` by inverse-variance weights, with each
/// level's spread read off its mapped band. The levels share their windows,
/// so the combined band is the weighted mean of the level bands rather than
/// the narrower independent-errors band.
pub fn estimate_nu_from_ratios(curve: &VolatilityCurve, observed: &[ObservedRatio]) -> Result<CalibrationResult> {
    if observed.is_empty() {
        return Err(GossetError::invalid("ratios", "need at least one drop level besides the full window"));
    }
    let mut levels = Vec::with_capacity(observed.len());
    for o in observed {
        if !(o.ratio > 0.0 && o.ratio.is_finite() && o.uncertainty >= 0.0 && o.uncertainty.is_finite()) {
            return Err(GossetError::invalid(
                "ratio",
                format!("drop {}: ratio {} ± {} is not usable", o.drop, o.ratio, o.uncertainty),
            ));
        }
        let nu_hat = curve.invert(o.drop, o.ratio)?;
        let lo = curve.invert(o.drop, (o.ratio - o.uncertainty).max(f64::MIN_POSITIVE))?;
        let hi = match curve.invert(o.drop, o.ratio + o.uncertainty) {
            Ok(v) => v,
            Err(GossetError::NoSolution(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        levels.push(LevelEstimate {
            drop: o.drop,
            p_n: curve.level(o.drop)?.p_n,
            ratio: o.ratio,
            uncertainty: o.uncertainty,
            nu_hat,
            nu_ci: (lo, hi),
        });
    }

    let (mut sw, mut t_hat, mut t_lo, mut t_hi) = (0.0, 0.0, 0.0, 0.0);
    for l in &levels {
        let (a, b) = (1.0 / l.nu_ci.1, 1.0 / l.nu_ci.0);
        let spread = ((b - a) / 4.0).max(1e-12);
        let w = 1.0 / (spread * spread);
        sw += w;
        t_hat += w / l.nu_hat;
        t_lo += w * a;
        t_hi += w * b;
    }
    let (t_hat, t_lo, t_hi) = (t_hat / sw, t_lo / sw, t_hi / sw);
    Ok(CalibrationResult {
        nu_hat: 1.0 / t_hat,
        nu_ci: (1.0 / t_hi, 1.0 / t_lo),
        levels,
        method: CalibrationMethod::CurveMatch,
        source: curve.source,
    })
}

/// Unit-scale [`simulate_scaled_window_study`].
pub fn simulate_window_study(
    dist: &ReturnDistribution,
    window_len: usize,
    drop_counts: &[usize],
    n_trials: usize,
    seed: u64,
) -> Result<WindowStudy> {
    simulate_scaled_window_study(dist, 1.0, window_len, drop_counts, n_trials, seed)
}

/// Draws `n_trials` windows of `scale · ξ` from a seeded ChaCha8 stream.
pub fn simulate_scaled_window_study(
    dist: &ReturnDistribution,
    scale: f64,
    window_len: usize,
    drop_counts: &[usize],
    n_trials: usize,
    seed: u64,
) -> Result<WindowStudy> {
    if n_trials == 0 {
        return Err(GossetError::invalid("n_trials", "must be at least 1"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GossetError::invalid("scale", format!("must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = dist.sampler();
    let draws: Vec<f64> = (0..n_trials * window_len)
        .map(|_| scale * sampler.sample(&mut rng))
        .collect();
    WindowStudy::from_windows(draws.chunks_exact(window_len), window_len, drop_counts)
}

/// What the fitted samples represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitTarget {
    Volatility,
    /// Reciprocals are taken before fitting.
    ReciprocalVolatility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitMethod {
    MaximumLikelihood,
    /// Least squares on histogram densities.
    BinnedLeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinResidual {
    pub lo: f64,
    pub hi: f64,
    /// Histogram density.
    pub observed: f64,
    /// Fitted probability of the bin over its width.
    pub fitted: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub x: f64,
    pub empirical: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiFit {
    pub params: ChiParams,
    pub target: FitTarget,
    pub method: FitMethod,
    /// Sum of squared density residuals over the bins.
    pub ssr: f64,
    /// Kolmogorov-Smirnov distance.
    pub ks: f64,
    pub bins: Vec<BinResidual>,
    pub cdf: Vec<CdfPoint>,
    /// Empirical mass above the fitted 95% quantile minus 0.05.
    pub right_tail_excess: f64,
}

/// Maximum-likelihood chi fit.
pub fn fit_chi(samples: &[f64], target: FitTarget) -> Result<ChiFit> {
    fit_chi_with(samples, target, FitMethod::MaximumLikelihood, None)
}

/// Chi fit with an explicit method and bin count (Rice rule when `None`).
pub fn fit_chi_with(samples: &[f64], target: FitTarget, method: FitMethod, bins: Option<usize>) -> Result<ChiFit> {
    if samples.len() < 30 {
        return Err(GossetError::invalid("samples", format!("need at least 30, got {}", samples.len())));
    }
    if let Some(x) = samples.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(GossetError::invalid("samples", format!("must be positive and finite, got {x}")));
    }
    let mut xs: Vec<f64> = match target {
        FitTarget::Volatility => samples.to_vec(),
        FitTarget::ReciprocalVolatility => samples.iter().map(|x| 1.0 / x).collect(),
    };
    xs.sort_by(f64::total_cmp);

    let n_bins = bins.unwrap_or_else(|| (2.0 * (xs.len() as f64).cbrt()).ceil() as usize).max(2);
    let (min, max) = (xs[0], xs[xs.len() - 1]);
    if max == min {
        return Err(GossetError::invalid("samples", "all samples are equal"));
    }
    let width = (max - min) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| min + width * i as f64).collect();
    let mut counts = vec![0usize; n_bins];
    for &x in &xs {
        counts[(((x - min) / width) as usize).min(n_bins - 1)] += 1;
    }
    let n = xs.len() as f64;
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();

    let mle = fit_mle(&xs)?;
    let params = match method {
        FitMethod::MaximumLikelihood => mle,
        FitMethod::BinnedLeastSquares => fit_binned(&edges, &observed, mle)?,
    };

    let bins: Vec<BinResidual> = (0..n_bins)
        .map(|i| {
            let fitted = (params.cdf(edges[i + 1]) - params.cdf(edges[i])) / width;
            BinResidual {
                lo: edges[i],
                hi: edges[i + 1],
                observed: observed[i],
                fitted,
                residual: observed[i] - fitted,
            }
        })
        .collect();
    let ssr = bins.iter().map(|b| b.residual * b.residual).sum();
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = params.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let cdf = edges
        .iter()
        .map(|&x| CdfPoint {
            x,
            empirical: xs.partition_point(|&v| v <= x) as f64 / n,
            fitted: params.cdf(x),
        })
        .collect();
    let q95 = chi_quantile(&params, 0.95);
    let above = (xs.len() - xs.partition_point(|&v| v <= q95)) as f64 / n;

    Ok(ChiFit {
        params,
        target,
        method,
        ssr,
        ks,
        bins,
        cdf,
        right_tail_excess: above - 0.05,
    })
}

/// `X² ~ Gamma(k/2, 2·scale²)`, so the shape solves `ln α − ψ(α) = ln ȳ − mean(ln y)`.
fn fit_mle(xs: &[f64]) -> Result<ChiParams> {
    let n = xs.len() as f64;
    let mean_y = xs.iter().map(|x| x * x).sum::<f64>() / n;
    let mean_ln_y = xs.iter().map(|x| 2.0 * x.ln()).sum::<f64>() / n;
    let c = mean_y.ln() - mean_ln_y;
    if !(c > 0.0 && c.is_finite()) {
        return Err(GossetError::NotConverged {
            what: "chi fit",
            detail: format!("log-moment gap {c} admits no shape"),
        });
    }
    let g = |ln_a: f64| {
        let a = ln_a.exp();
        a.ln() - digamma(a) - c
    };
    let (mut lo, mut hi) = (1e-8f64.ln(), 1e10f64.ln());
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return Err(GossetError::NotConverged {
            what: "chi fit",
            detail: format!("shape equation not bracketed for gap {c:e}"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    let k = 2.0 * alpha;
    ChiParams::new(k, (mean_y / k).sqrt())
}

fn fit_binned(edges: &[f64], observed: &[f64], start: ChiParams) -> Result<ChiParams> {
    let ssr = |ln_k: f64, ln_s: f64| {
        let p = ChiParams::new(ln_k.exp(), ln_s.exp()).expect("exp is positive");
        edges
            .windows(2)
            .zip(observed)
            .map(|(e, o)| {
                let f = (p.cdf(e[1]) - p.cdf(e[0])) / (e[1] - e[0]);
                (o - f).powi(2)
            })
            .sum::<f64>()
    };
    let best_scale = |ln_k: f64| golden_min(|ln_s| ssr(ln_k, ln_s), start.scale().ln() - 1.5, start.scale().ln() + 1.5);
    let ln_k = golden_min(
        |ln_k| ssr(ln_k, best_scale(ln_k)),
        start.k().ln() - 2.0,
        start.k().ln() + 2.0,
    );
    let params = ChiParams::new(ln_k.exp(), best_scale(ln_k).exp())?;
    if !ssr(params.k().ln(), params.scale().ln()).is_finite() {
        return Err(GossetError::NotConverged {
            what: "binned chi fit",
            detail: "residual sum is not finite".into(),
        });
    }
    Ok(params)
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn chi_quantile(params: &ChiParams, p: f64) -> f64 {
    let mut hi = params.scale() * (params.k().sqrt() + 1.0);
    while params.cdf(hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if params.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
