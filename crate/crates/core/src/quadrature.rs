//! Adaptive Gauss–Kronrod integration of the exponent-weighted return
//! kernels that every price, greek and volatility formula reduces to.
//!
//! Panels are evaluated with the 21-point Kronrod extension of the 10-point
//! Gauss rule. The panel with the largest error estimate is bisected until
//! the summed estimate meets `max(abs_tol, rel_tol·|I|)` or the panel budget
//! runs out. Kernel integrals start from a geometric partition around the
//! origin so that a wide interval (a far-tail lower bound, say) cannot hide
//! the body of the density between the nodes of a single panel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::distributions::ReturnDistribution;
use crate::error::{ensure_finite, GossetError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Finite integration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        ensure_finite("lo", lo)?;
        ensure_finite("hi", hi)?;
        if lo > hi {
            return Err(GossetError::invalid("interval", format!("lo = {lo} exceeds hi = {hi}")));
        }
        Ok(Self { lo, hi })
    }

    /// `[−a, a]`
    pub fn symmetric(a: f64) -> Result<Self> {
        Self::new(-a, a)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    rel_tol: f64,
    abs_tol: f64,
    max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureConfig {
    pub const MAX_SUBDIVISIONS: usize = 10_000;

    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol >= 1e-14 && rel_tol.is_finite()) {
            return Err(GossetError::invalid("rel_tol", format!("must be at least 1e-14, got {rel_tol}")));
        }
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(GossetError::invalid("abs_tol", format!("must be positive, got {abs_tol}")));
        }
        if max_subdivisions == 0 || max_subdivisions > Self::MAX_SUBDIVISIONS {
            return Err(GossetError::invalid(
                "max_subdivisions",
                format!("must lie in 1..={}, got {max_subdivisions}", Self::MAX_SUBDIVISIONS),
            ));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn max_subdivisions(&self) -> usize {
        self.max_subdivisions
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub panels: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    roundoff: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Panel {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let f_center = f(center);
    let mut gauss = 0.0;
    let mut kronrod = f_center * WGK[10];
    let mut res_abs = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    let roundoff = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(roundoff);
    }
    Panel {
        lo,
        hi,
        value,
        error,
        roundoff,
    }
}

/// Integrates `f` over `iv`, seeding the panel list with the interior
/// `breakpoints` that fall strictly inside the interval.
///
/// The estimate is accepted once the summed error is within
/// `max(abs_tol, rel_tol·|I|)` plus the rounding floor `50·ε·∫|f|`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    iv: Interval,
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<QuadEstimate> {
    if iv.is_empty() {
        return Ok(QuadEstimate {
            value: 0.0,
            abs_error: 0.0,
            panels: 0,
            evaluations: 0,
        });
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > iv.lo && b < iv.hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(iv.lo);
    edges.extend(cuts);
    edges.push(iv.hi);

    let mut heap: BinaryHeap<Panel> = edges
        .windows(2)
        .map(|w| gauss_kronrod_21(&f, w[0], w[1]))
        .collect();
    let mut evaluations = 21 * heap.len();

    loop {
        let (value, error, roundoff) = heap
            .iter()
            .fold((0.0, 0.0, 0.0), |(v, e, r), p| (v + p.value, e + p.error, r + p.roundoff));
        if !value.is_finite() {
            return Err(GossetError::NotConverged {
                what: "quadrature",
                detail: format!("non-finite integrand on [{}, {}]", iv.lo, iv.hi),
            });
        }
        let tolerance = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        // cancelling integrands cannot beat the rounding floor of |f|
        if error <= tolerance + roundoff {
            return Ok(QuadEstimate {
                value,
                abs_error: error,
                panels: heap.len(),
                evaluations,
            });
        }
        let worst = heap.peek().copied().expect("at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if heap.len() >= cfg.max_subdivisions || !(mid > worst.lo && mid < worst.hi) {
            return Err(GossetError::QuadratureNotConverged {
                lo: iv.lo,
                hi: iv.hi,
                subdivisions: heap.len(),
                error,
                tolerance,
            });
        }
        heap.pop();
        heap.push(gauss_kronrod_21(&f, worst.lo, mid));
        heap.push(gauss_kronrod_21(&f, mid, worst.hi));
        evaluations += 42;
    }
}

/// Geometric grid `0, ±1/2, ±1, ±2, …` clipped to the interval.
fn kernel_breakpoints(iv: Interval) -> Vec<f64> {
    let reach = iv.lo.abs().max(iv.hi.abs());
    let mut points = vec![0.0];
    let mut step = 0.5;
    while step < reach {
        points.push(step);
        points.push(-step);
        step *= 2.0;
    }
    points
}

/// `∫ e^{σξ} f_r(ξ) dξ` over `iv`.
pub fn integrate_exp_kernel(
    dist: &ReturnDistribution,
    sigma: f64,
    iv: Interval,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_sigma(sigma)?;
    let f = |x: f64| (sigma * x + dist.ln_pdf(x)).exp();
    Ok(integrate(f, iv, &kernel_breakpoints(iv), cfg)?.value)
}

/// `∫ ξ e^{σξ} f_r(ξ) dξ` over `iv`.
pub fn integrate_moment_kernel(
    dist: &ReturnDistribution,
    sigma: f64,
    iv: Interval,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_sigma(sigma)?;
    let f = |x: f64| x * (sigma * x + dist.ln_pdf(x)).exp();
    Ok(integrate(f, iv, &kernel_breakpoints(iv), cfg)?.value)
}

/// `∫ ξ² f_r(ξ) dξ` over `iv`.
pub fn integrate_second_moment(
    dist: &ReturnDistribution,
    iv: Interval,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let f = |x: f64| x * x * dist.pdf(x);
    Ok(integrate(f, iv, &kernel_breakpoints(iv), cfg)?.value)
}

fn check_sigma(sigma: f64) -> Result<()> {
    ensure_finite("sigma", sigma)?;
    if sigma < 0.0 {
        return Err(GossetError::invalid("sigma", format!("must be non-negative, got {sigma}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let iv = Interval::new(-1.0, 2.0).unwrap();
        let est = integrate(|x| 3.0 * x * x - x + 1.0, iv, &[], &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(est.value, 9.0 - 1.5 + 3.0, max_relative = 1e-14);
        assert_eq!(est.panels, 1);
    }

    #[test]
    fn peaked_integrand_needs_subdivision() {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let eps: f64 = 1e-3;
        let est = integrate(|x| eps / (x * x + eps * eps), iv, &[], &QuadratureConfig::default()).unwrap();
        assert_relative_eq!(est.value, 2.0 * (1.0 / eps).atan(), max_relative = 1e-10);
        assert!(est.panels > 1);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadratureConfig::new(1e-14, 1e-300, 3).unwrap();
        let iv = Interval::new(0.0, 1.0).unwrap();
        let err = integrate(|x: f64| x.sqrt().recip(), iv, &[], &cfg).unwrap_err();
        assert!(matches!(err, GossetError::QuadratureNotConverged { .. }));
    }

    #[test]
    fn empty_interval_is_zero() {
        let iv = Interval::new(1.5, 1.5).unwrap();
        let d = ReturnDistribution::student_t(3.0).unwrap();
        assert_eq!(integrate_exp_kernel(&d, 0.3, iv, &QuadratureConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn validation() {
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 1.0).is_err());
        assert!(QuadratureConfig::new(1e-16, 1e-13, 200).is_err());
        assert!(QuadratureConfig::new(1e-10, 0.0, 200).is_err());
        assert!(QuadratureConfig::new(1e-10, 1e-13, 0).is_err());
        let d = ReturnDistribution::normal();
        let iv = Interval::new(-1.0, 1.0).unwrap();
        assert!(integrate_exp_kernel(&d, -0.1, iv, &QuadratureConfig::default()).is_err());
    }

    #[test]
    fn odd_moment_vanishes_without_tilt() {
        let d = ReturnDistribution::student_t(4.0).unwrap();
        let iv = Interval::symmetric(7.0).unwrap();
        let m = integrate_moment_kernel(&d, 0.0, iv, &QuadratureConfig::default()).unwrap();
        assert!(m.abs() < 1e-13, "{m}");
    }
}
