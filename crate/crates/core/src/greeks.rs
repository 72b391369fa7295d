//! Call sensitivities: analytic delta, gamma and vega for both tail modes,
//! the one-day theta recipe, and finite-difference derivatives in the shape
//! parameter and the cap probability.

use serde::{Deserialize, Serialize};

use crate::distributions::ReturnDistribution;
use crate::error::{GossetError, Result};
use crate::pricing::{bs_d, norm_cdf, norm_pdf, GossetModel, MarketParams, Setup, TailMode, TailPolicy};
use crate::quadrature::{integrate_moment_kernel, Interval, QuadratureConfig};

/// Calendar scaling of the theta recipe.
const DAY_SCALE: f64 = 366.0 / 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    Forward,
    Central,
}

/// Finite-difference settings. `step` is relative to the parameter being
/// varied: `step·ν` for the shape parameter, `step·(1 − p_c)` for the cap
/// probability and `step·S0` for spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    step: f64,
    scheme: FdScheme,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            scheme: FdScheme::Central,
        }
    }
}

impl FdConfig {
    pub fn new(step: f64, scheme: FdScheme) -> Result<Self> {
        if !(step > 0.0 && step < 0.5) {
            return Err(GossetError::invalid("step", format!("relative step must lie in (0, 0.5), got {step}")));
        }
        Ok(Self { step, scheme })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn scheme(&self) -> FdScheme {
        self.scheme
    }

    pub fn with_step(self, step: f64) -> Result<Self> {
        Self::new(step, self.scheme)
    }
}

/// Finite-difference derivative of `f` at `x` with absolute step `h`.
pub fn finite_difference<F>(f: F, x: f64, h: f64, scheme: FdScheme) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(GossetError::invalid("step", format!("must be positive, got {h}")));
    }
    match scheme {
        FdScheme::Forward => Ok((f(x + h)? - f(x)?) / h),
        FdScheme::Central => Ok((f(x + h)? - f(x - h)?) / (2.0 * h)),
    }
}

/// Central second difference `(f(x+h) − 2f(x) + f(x−h)) / h²`.
pub fn second_difference<F>(f: F, x: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(GossetError::invalid("step", format!("must be positive, got {h}")));
    }
    Ok((f(x + h)? - 2.0 * f(x)? + f(x - h)?) / (h * h))
}

/// Call greeks at one market point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreeksReport {
    pub delta: f64,
    pub gamma: f64,
    pub vega: f64,
    /// Price change over one calendar day.
    pub theta: f64,
    /// `None` for the normal kernel.
    pub dc_dnu: Option<f64>,
    pub dc_dp: f64,
}

/// Quadrature used when prices are differenced; tighter than the pricing
/// default so that integration noise stays far below the step response.
pub fn difference_quadrature() -> QuadratureConfig {
    QuadratureConfig::new(1e-13, 1e-15, 2000).expect("valid constants")
}

struct Pieces {
    setup: Setup,
    /// Lower limit of the call integral after clamping to the floor.
    lo: f64,
    floor_in_the_money: bool,
    /// Strike at or beyond the cap: the call pays nothing.
    out_of_range: bool,
}

impl GossetModel {
    fn pieces(&self, mkt: &MarketParams) -> Result<Pieces> {
        let setup = self.setup(mkt)?;
        let p = self.policy();
        Ok(Pieces {
            lo: setup.threshold.max(p.x_floor()),
            floor_in_the_money: setup.threshold < p.x_floor(),
            out_of_range: setup.threshold >= p.x_cap(),
            setup,
        })
    }

    fn moment_kernel(&self, sigma: f64, lo: f64, hi: f64) -> Result<f64> {
        if lo >= hi {
            return Ok(0.0);
        }
        integrate_moment_kernel(self.dist(), sigma, Interval::new(lo, hi)?, self.quadrature())
    }

    /// `∂C₀/∂S0`
    pub fn delta(&self, mkt: &MarketParams) -> Result<f64> {
        let pc = self.pieces(mkt)?;
        if pc.out_of_range {
            return Ok(0.0);
        }
        let p = self.policy();
        let sig = mkt.sigma();
        let body = self.exp_kernel(sig, pc.lo, p.x_cap())?;
        let z = pc.setup.z;
        Ok(match p.mode() {
            TailMode::Truncated => body / (z * p.mass()),
            TailMode::Capped => {
                let floor = if pc.floor_in_the_money {
                    p.p_floor() * (sig * p.x_floor()).exp()
                } else {
                    0.0
                };
                (body + (1.0 - p.p_cap()) * (sig * p.x_cap()).exp() + floor) / z
            }
        })
    }

    /// `∂²C₀/∂S0²`; zero where the strike threshold lies outside the
    /// floor-to-cap range.
    pub fn gamma(&self, mkt: &MarketParams) -> Result<f64> {
        let pc = self.pieces(mkt)?;
        if pc.out_of_range || pc.floor_in_the_money || mkt.strike() == 0.0 {
            return Ok(0.0);
        }
        let p = self.policy();
        let density = self.dist().pdf(pc.setup.threshold);
        let g = mkt.strike() * mkt.discount() * density / (mkt.s0() * mkt.s0() * mkt.sigma());
        Ok(match p.mode() {
            TailMode::Truncated => g / p.mass(),
            TailMode::Capped => g,
        })
    }

    /// `∂C₀/∂σ_T`, including the change of the normalization with `σ_T`.
    pub fn vega(&self, mkt: &MarketParams) -> Result<f64> {
        let pc = self.pieces(mkt)?;
        if pc.out_of_range {
            return Ok(0.0);
        }
        let p = self.policy();
        let sig = mkt.sigma();
        let (xp, xc) = (p.x_floor(), p.x_cap());
        let z = pc.setup.z;
        let body = self.exp_kernel(sig, pc.lo, xc)?;
        let tilt = self.moment_kernel(sig, pc.lo, xc)?;
        let full_tilt = if pc.lo == xp { tilt } else { self.moment_kernel(sig, xp, xc)? };
        let s0 = mkt.s0();
        Ok(match p.mode() {
            TailMode::Truncated => {
                let m = p.mass();
                let dz = full_tilt / m;
                s0 / (z * m) * tilt - s0 * dz / (z * z * m) * body
            }
            TailMode::Capped => {
                let cap = (sig * xc).exp();
                let floor = (sig * xp).exp();
                let dz = p.p_floor() * xp * floor + full_tilt + (1.0 - p.p_cap()) * xc * cap;
                let ratio = dz / z;
                let mut v = tilt - ratio * body + (1.0 - p.p_cap()) * cap * (xc - ratio);
                if pc.floor_in_the_money {
                    v += p.p_floor() * floor * (xp - ratio);
                }
                s0 / z * v
            }
        })
    }

    /// One-day change: the call repriced with `rT` scaled by 366/365 and
    /// `σ_T` by its square root, minus today's price.
    pub fn theta(&self, mkt: &MarketParams) -> Result<f64> {
        let later = mkt.with_rt(mkt.rt() * DAY_SCALE)?.with_sigma(mkt.sigma() * DAY_SCALE.sqrt())?;
        Ok(self.call(&later)?.value_at_zero - self.call(mkt)?.value_at_zero)
    }

    /// Derivative of the call in the shape parameter, rebuilding the
    /// critical values at each shifted `ν`.
    pub fn dprice_dnu(&self, mkt: &MarketParams, cfg: &FdConfig) -> Result<f64> {
        let nu = self.dist().nu();
        if self.dist().is_normal() {
            return Err(GossetError::invalid("nu", "derivative in nu needs a finite shape parameter"));
        }
        let m = self.with_quadrature(difference_quadrature());
        let h = cfg.step * nu;
        finite_difference(|v| Ok(m.with_nu(v)?.call(mkt)?.value_at_zero), nu, h, cfg.scheme)
    }

    /// Forward difference of the call in the cap probability with step
    /// `step·(1 − p_c)`, rebuilding the cap at each evaluation.
    pub fn dprice_dp(&self, mkt: &MarketParams, cfg: &FdConfig) -> Result<f64> {
        let pcap = self.policy().p_cap();
        let h = cfg.step * (1.0 - pcap);
        if !(pcap + h < 1.0) {
            return Err(GossetError::invalid(
                "step",
                format!("p_cap + step must stay below 1 (p_cap = {pcap})"),
            ));
        }
        let m = self.with_quadrature(difference_quadrature());
        finite_difference(
            |p| Ok(m.with_cap_probability(p)?.call(mkt)?.value_at_zero),
            pcap,
            h,
            FdScheme::Forward,
        )
    }

    pub fn greeks(&self, mkt: &MarketParams, cfg: &FdConfig) -> Result<GreeksReport> {
        Ok(GreeksReport {
            delta: self.delta(mkt)?,
            gamma: self.gamma(mkt)?,
            vega: self.vega(mkt)?,
            theta: self.theta(mkt)?,
            dc_dnu: if self.dist().is_normal() {
                None
            } else {
                Some(self.dprice_dnu(mkt, cfg)?)
            },
            dc_dp: self.dprice_dp(mkt, cfg)?,
        })
    }
}

fn model(dist: &ReturnDistribution, policy: &TailPolicy, mode: TailMode) -> Result<GossetModel> {
    if policy.mode() != mode {
        return Err(GossetError::invalid(
            "policy",
            format!("expected a {mode} policy, got {}", policy.mode()),
        ));
    }
    GossetModel::new(*dist, *policy)
}

pub fn delta_truncated(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Truncated)?.delta(mkt)
}

pub fn delta_capped(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Capped)?.delta(mkt)
}

pub fn gamma_truncated(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Truncated)?.gamma(mkt)
}

pub fn gamma_capped(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Capped)?.gamma(mkt)
}

pub fn vega_truncated(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Truncated)?.vega(mkt)
}

pub fn vega_capped(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    model(dist, policy, TailMode::Capped)?.vega(mkt)
}

pub fn theta_numeric(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<f64> {
    GossetModel::new(*dist, *policy)?.theta(mkt)
}

pub fn dprice_dnu(
    dist: &ReturnDistribution,
    policy: &TailPolicy,
    mkt: &MarketParams,
    cfg: &FdConfig,
) -> Result<f64> {
    GossetModel::new(*dist, *policy)?.dprice_dnu(mkt, cfg)
}

pub fn dprice_dp(
    dist: &ReturnDistribution,
    policy: &TailPolicy,
    mkt: &MarketParams,
    cfg: &FdConfig,
) -> Result<f64> {
    GossetModel::new(*dist, *policy)?.dprice_dp(mkt, cfg)
}

/// Black-Scholes call greeks with the same theta recipe; `dc_dnu` is
/// `None` and `dc_dp` zero.
pub fn black_scholes_greeks(mkt: &MarketParams) -> Result<GreeksReport> {
    if mkt.strike() == 0.0 {
        return Ok(GreeksReport {
            delta: 1.0,
            gamma: 0.0,
            vega: 0.0,
            theta: 0.0,
            dc_dnu: None,
            dc_dp: 0.0,
        });
    }
    let (d1, _) = bs_d(mkt);
    let later = mkt.with_rt(mkt.rt() * DAY_SCALE)?.with_sigma(mkt.sigma() * DAY_SCALE.sqrt())?;
    Ok(GreeksReport {
        delta: norm_cdf(d1),
        gamma: norm_pdf(d1) / (mkt.s0() * mkt.sigma()),
        vega: mkt.s0() * norm_pdf(d1),
        theta: crate::pricing::black_scholes_call(&later) - crate::pricing::black_scholes_call(mkt),
        dc_dnu: None,
        dc_dp: 0.0,
    })
}
