//! European option prices when the log-return is a capped or truncated
//! Student's t variate, plus the Black-Scholes reference.
//!
//! The terminal price is `S_T = A_T e^{σ_T ξ}` where `A_T` is fixed by the
//! fair-wager condition `E{S_T} = S0 e^{rT}`. A capped policy keeps the tail
//! mass beyond the critical values as atoms at the boundaries; a truncated
//! policy removes it and renormalizes by `p_c − p_p`.

use serde::{Deserialize, Serialize};

use crate::distributions::ReturnDistribution;
use crate::error::{ensure_finite, ensure_positive, GossetError, Result};
use crate::quadrature::{integrate_exp_kernel, Interval, QuadratureConfig};
use crate::special::erfc;

/// Probability standing in for an infinite bound when a policy has no floor
/// (`p_p = 0`) or no truncation (`p_c = 1`).
pub const TAIL_EPSILON: f64 = 1e-12;

/// Spot, strike, rate and volatility of a single contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    s0: f64,
    strike: f64,
    rt: f64,
    sigma: f64,
}

impl MarketParams {
    /// `rt` is the rate multiplied by the time to expiry; `sigma` is the
    /// volatility over the life of the option.
    pub fn new(s0: f64, strike: f64, rt: f64, sigma: f64) -> Result<Self> {
        ensure_positive("s0", s0)?;
        ensure_finite("strike", strike)?;
        if strike < 0.0 {
            return Err(GossetError::invalid("strike", format!("must be non-negative, got {strike}")));
        }
        ensure_finite("rt", rt)?;
        ensure_positive("sigma", sigma)?;
        Ok(Self { s0, strike, rt, sigma })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn rt(&self) -> f64 {
        self.rt
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_s0(self, s0: f64) -> Result<Self> {
        Self::new(s0, self.strike, self.rt, self.sigma)
    }

    pub fn with_strike(self, strike: f64) -> Result<Self> {
        Self::new(self.s0, strike, self.rt, self.sigma)
    }

    pub fn with_rt(self, rt: f64) -> Result<Self> {
        Self::new(self.s0, self.strike, rt, self.sigma)
    }

    pub fn with_sigma(self, sigma: f64) -> Result<Self> {
        Self::new(self.s0, self.strike, self.rt, sigma)
    }

    /// `e^{−rT}`
    pub fn discount(&self) -> f64 {
        (-self.rt).exp()
    }

    /// Forward value `S0 e^{rT}`.
    pub fn forward(&self) -> f64 {
        self.s0 * self.rt.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailMode {
    Capped,
    Truncated,
}

impl std::fmt::Display for TailMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TailMode::Capped => "capped",
            TailMode::Truncated => "truncated",
        })
    }
}

impl std::str::FromStr for TailMode {
    type Err = GossetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "capped" | "cap" => Ok(TailMode::Capped),
            "truncated" | "truncate" => Ok(TailMode::Truncated),
            _ => Err(GossetError::invalid("mode", format!("expected capped or truncated, got {s:?}"))),
        }
    }
}

/// Floor and cap of the return distribution, as probabilities and as the
/// matching critical values of one particular distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPolicy {
    mode: TailMode,
    nu: f64,
    p_floor: f64,
    p_cap: f64,
    x_floor: f64,
    x_cap: f64,
}

impl TailPolicy {
    /// Builds the policy from floor and cap probabilities. A zero floor or a
    /// unit cap maps to the `TAIL_EPSILON` quantile.
    pub fn new(mode: TailMode, dist: &ReturnDistribution, p_floor: f64, p_cap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p_floor) {
            return Err(GossetError::invalid("p_floor", format!("must lie in [0, 1), got {p_floor}")));
        }
        if !(p_cap > 0.0 && p_cap <= 1.0) {
            return Err(GossetError::invalid("p_cap", format!("must lie in (0, 1], got {p_cap}")));
        }
        if p_floor >= p_cap {
            return Err(GossetError::invalid(
                "p_floor",
                format!("floor probability {p_floor} must be below cap probability {p_cap}"),
            ));
        }
        if mode == TailMode::Capped && p_cap == 1.0 {
            return Err(GossetError::invalid(
                "p_cap",
                "a capped policy needs p_cap < 1; the uncapped integrals diverge",
            ));
        }
        let x_floor = dist.quantile(if p_floor == 0.0 { TAIL_EPSILON } else { p_floor })?;
        let x_cap = dist.quantile(if p_cap == 1.0 { 1.0 - TAIL_EPSILON } else { p_cap })?;
        Ok(Self {
            mode,
            nu: dist.nu(),
            p_floor,
            p_cap,
            x_floor,
            x_cap,
        })
    }

    /// Capped policy without a floor.
    pub fn capped(dist: &ReturnDistribution, p_cap: f64) -> Result<Self> {
        Self::new(TailMode::Capped, dist, 0.0, p_cap)
    }

    /// Truncated policy without a floor.
    pub fn truncated(dist: &ReturnDistribution, p_cap: f64) -> Result<Self> {
        Self::new(TailMode::Truncated, dist, 0.0, p_cap)
    }

    /// Builds the policy from critical values; `None` means no floor.
    pub fn from_critical_values(
        mode: TailMode,
        dist: &ReturnDistribution,
        x_floor: Option<f64>,
        x_cap: f64,
    ) -> Result<Self> {
        ensure_finite("x_cap", x_cap)?;
        let (p_floor, x_floor) = match x_floor {
            Some(x) => {
                ensure_finite("x_floor", x)?;
                (dist.cdf(x), x)
            }
            None => (0.0, dist.quantile(TAIL_EPSILON)?),
        };
        if x_floor >= x_cap {
            return Err(GossetError::invalid("x_floor", format!("floor {x_floor} must be below cap {x_cap}")));
        }
        let p_cap = dist.cdf(x_cap);
        if mode == TailMode::Capped && p_cap >= 1.0 {
            return Err(GossetError::invalid("x_cap", format!("cap {x_cap} leaves no tail mass")));
        }
        if p_floor >= p_cap {
            return Err(GossetError::invalid("x_floor", "floor and cap carry the same probability"));
        }
        Ok(Self {
            mode,
            nu: dist.nu(),
            p_floor,
            p_cap,
            x_floor,
            x_cap,
        })
    }

    /// Same probabilities against another distribution.
    pub fn rebuild(&self, dist: &ReturnDistribution) -> Result<Self> {
        Self::new(self.mode, dist, self.p_floor, self.p_cap)
    }

    pub fn with_mode(&self, mode: TailMode, dist: &ReturnDistribution) -> Result<Self> {
        Self::new(mode, dist, self.p_floor, self.p_cap)
    }

    pub fn mode(&self) -> TailMode {
        self.mode
    }

    pub fn p_floor(&self) -> f64 {
        self.p_floor
    }

    pub fn p_cap(&self) -> f64 {
        self.p_cap
    }

    pub fn x_floor(&self) -> f64 {
        self.x_floor
    }

    pub fn x_cap(&self) -> f64 {
        self.x_cap
    }

    /// Probability mass kept between the floor and the cap.
    pub fn mass(&self) -> f64 {
        self.p_cap - self.p_floor
    }

    pub(crate) fn check(&self, dist: &ReturnDistribution) -> Result<()> {
        if self.nu == dist.nu() {
            Ok(())
        } else {
            Err(GossetError::invalid(
                "policy",
                format!("built for nu = {}, used with nu = {}", self.nu, dist.nu()),
            ))
        }
    }
}

/// Option value at expiry and discounted to today, with the normalization
/// and martingale constants used to obtain it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub value_at_expiry: f64,
    pub value_at_zero: f64,
    pub z: f64,
    pub a: f64,
}

/// A return distribution, a tail policy and the quadrature settings used
/// to price against them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossetModel {
    dist: ReturnDistribution,
    policy: TailPolicy,
    quad: QuadratureConfig,
}

/// Intermediate quantities shared by prices and greeks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Setup {
    pub z: f64,
    pub a: f64,
    /// Strike threshold `ln(K/A)/σ`, unclamped.
    pub threshold: f64,
}

impl GossetModel {
    pub fn new(dist: ReturnDistribution, policy: TailPolicy) -> Result<Self> {
        policy.check(&dist)?;
        Ok(Self {
            dist,
            policy,
            quad: QuadratureConfig::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadratureConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn dist(&self) -> &ReturnDistribution {
        &self.dist
    }

    pub fn policy(&self) -> &TailPolicy {
        &self.policy
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// Same tail probabilities under a different shape parameter.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        let dist = ReturnDistribution::from_nu(nu)?;
        Ok(Self {
            dist,
            policy: self.policy.rebuild(&dist)?,
            quad: self.quad,
        })
    }

    /// Same distribution with the cap moved to probability `p_cap`.
    pub fn with_cap_probability(&self, p_cap: f64) -> Result<Self> {
        Ok(Self {
            dist: self.dist,
            policy: TailPolicy::new(self.policy.mode, &self.dist, self.policy.p_floor, p_cap)?,
            quad: self.quad,
        })
    }

    pub fn with_mode(&self, mode: TailMode) -> Result<Self> {
        Ok(Self {
            dist: self.dist,
            policy: self.policy.with_mode(mode, &self.dist)?,
            quad: self.quad,
        })
    }

    pub(crate) fn exp_kernel(&self, sigma: f64, lo: f64, hi: f64) -> Result<f64> {
        if lo >= hi {
            return Ok(0.0);
        }
        integrate_exp_kernel(&self.dist, sigma, Interval::new(lo, hi)?, &self.quad)
    }

    /// Plain probability of `ξ ∈ [lo, hi]`.
    pub(crate) fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return 0.0;
        }
        if hi <= 0.0 {
            self.dist.cdf(hi) - self.dist.cdf(lo)
        } else if lo >= 0.0 {
            self.dist.sf(lo) - self.dist.sf(hi)
        } else {
            1.0 - self.dist.cdf(lo) - self.dist.sf(hi)
        }
    }

    /// Normalization `E{e^{σξ}}` under the active tail policy.
    pub fn z(&self, sigma: f64) -> Result<f64> {
        let p = &self.policy;
        let body = self.exp_kernel(sigma, p.x_floor, p.x_cap)?;
        let z = match p.mode {
            TailMode::Capped => {
                p.p_floor * (sigma * p.x_floor).exp() + body + (1.0 - p.p_cap) * (sigma * p.x_cap).exp()
            }
            TailMode::Truncated => body / p.mass(),
        };
        if !(z.is_finite() && z > 0.0) {
            return Err(GossetError::NotConverged {
                what: "normalization",
                detail: format!("Z = {z} for sigma = {sigma}, x_cap = {}", p.x_cap),
            });
        }
        Ok(z)
    }

    pub(crate) fn setup(&self, mkt: &MarketParams) -> Result<Setup> {
        let z = self.z(mkt.sigma)?;
        let a = martingale_a(mkt, z)?;
        let threshold = if mkt.strike > 0.0 {
            (mkt.strike / a).ln() / mkt.sigma
        } else {
            f64::NEG_INFINITY
        };
        Ok(Setup { z, a, threshold })
    }

    pub fn call(&self, mkt: &MarketParams) -> Result<PriceQuote> {
        let s = self.setup(mkt)?;
        if mkt.strike == 0.0 {
            return Ok(PriceQuote {
                value_at_expiry: mkt.forward(),
                value_at_zero: mkt.s0,
                z: s.z,
                a: s.a,
            });
        }
        Ok(quote(mkt, &s, self.call_at_expiry(mkt, &s)?))
    }

    pub fn put(&self, mkt: &MarketParams) -> Result<PriceQuote> {
        let s = self.setup(mkt)?;
        let value_at_expiry = if mkt.strike == 0.0 {
            0.0
        } else {
            self.put_at_expiry(mkt, &s)?
        };
        Ok(quote(mkt, &s, value_at_expiry))
    }

    fn call_at_expiry(&self, mkt: &MarketParams, s: &Setup) -> Result<f64> {
        let p = &self.policy;
        let k = mkt.strike;
        let lo = s.threshold.max(p.x_floor);
        let body = if lo < p.x_cap {
            s.a * self.exp_kernel(mkt.sigma, lo, p.x_cap)? - k * self.mass_between(lo, p.x_cap)
        } else {
            0.0
        };
        let value = match p.mode {
            TailMode::Truncated => body / p.mass(),
            TailMode::Capped => {
                let at_floor = (s.a * (mkt.sigma * p.x_floor).exp() - k).max(0.0);
                let at_cap = (s.a * (mkt.sigma * p.x_cap).exp() - k).max(0.0);
                p.p_floor * at_floor + body + (1.0 - p.p_cap) * at_cap
            }
        };
        Ok(value.max(0.0))
    }

    fn put_at_expiry(&self, mkt: &MarketParams, s: &Setup) -> Result<f64> {
        let p = &self.policy;
        let k = mkt.strike;
        let hi = s.threshold.min(p.x_cap);
        let body = if hi > p.x_floor {
            k * self.mass_between(p.x_floor, hi) - s.a * self.exp_kernel(mkt.sigma, p.x_floor, hi)?
        } else {
            0.0
        };
        let value = match p.mode {
            TailMode::Truncated => body / p.mass(),
            TailMode::Capped => {
                let at_floor = (k - s.a * (mkt.sigma * p.x_floor).exp()).max(0.0);
                let at_cap = (k - s.a * (mkt.sigma * p.x_cap).exp()).max(0.0);
                p.p_floor * at_floor + body + (1.0 - p.p_cap) * at_cap
            }
        };
        Ok(value.max(0.0))
    }
}

fn quote(mkt: &MarketParams, s: &Setup, value_at_expiry: f64) -> PriceQuote {
    PriceQuote {
        value_at_expiry,
        value_at_zero: value_at_expiry * mkt.discount(),
        z: s.z,
        a: s.a,
    }
}

fn model_for(dist: &ReturnDistribution, policy: &TailPolicy, mode: Option<TailMode>) -> Result<GossetModel> {
    if let Some(mode) = mode {
        if policy.mode != mode {
            return Err(GossetError::invalid("policy", format!("expected a {mode} policy, got {}", policy.mode)));
        }
    }
    GossetModel::new(*dist, *policy)
}

/// `p_p e^{σ x_p} + ∫ e^{σξ} f dξ + (1 − p_c) e^{σ x_c}`
pub fn z_capped(dist: &ReturnDistribution, policy: &TailPolicy, sigma: f64) -> Result<f64> {
    model_for(dist, policy, Some(TailMode::Capped))?.z(sigma)
}

/// `∫ e^{σξ} f dξ / (p_c − p_p)`
pub fn z_truncated(dist: &ReturnDistribution, policy: &TailPolicy, sigma: f64) -> Result<f64> {
    model_for(dist, policy, Some(TailMode::Truncated))?.z(sigma)
}

/// `A_T = S0 e^{rT} / Z`
pub fn martingale_a(mkt: &MarketParams, z: f64) -> Result<f64> {
    ensure_positive("z", z)?;
    Ok(mkt.forward() / z)
}

pub fn price_call(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<PriceQuote> {
    model_for(dist, policy, None)?.call(mkt)
}

pub fn price_put(dist: &ReturnDistribution, policy: &TailPolicy, mkt: &MarketParams) -> Result<PriceQuote> {
    model_for(dist, policy, None)?.put(mkt)
}

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `(d1, d2)` of the Black-Scholes formula.
pub(crate) fn bs_d(mkt: &MarketParams) -> (f64, f64) {
    let d1 = ((mkt.s0 / mkt.strike).ln() + mkt.rt + 0.5 * mkt.sigma * mkt.sigma) / mkt.sigma;
    (d1, d1 - mkt.sigma)
}

/// Black-Scholes call value today.
pub fn black_scholes_call(mkt: &MarketParams) -> f64 {
    if mkt.strike == 0.0 {
        return mkt.s0;
    }
    let (d1, d2) = bs_d(mkt);
    mkt.s0 * norm_cdf(d1) - mkt.strike * mkt.discount() * norm_cdf(d2)
}

/// Black-Scholes put value today.
pub fn black_scholes_put(mkt: &MarketParams) -> f64 {
    if mkt.strike == 0.0 {
        return 0.0;
    }
    let (d1, d2) = bs_d(mkt);
    mkt.strike * mkt.discount() * norm_cdf(-d2) - mkt.s0 * norm_cdf(-d1)
}
