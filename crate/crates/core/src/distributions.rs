//! Return kernels: Student's t (normal as the infinite-ν member) and the
//! chi / inverse-chi laws of sample volatilities.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_open_unit, ensure_positive, GossetError, Result};
use crate::special::{beta_reg, erfc, gamma_lr, gamma_ur, ln_beta, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_617_639_861;
const QUANTILE_MAX_ITER: usize = 300;

/// Standardized return kernel `f_r`, selected by the shape parameter ν.
///
/// A finite ν gives the Student's t density; `ν = ∞` dispatches to the
/// standard normal closed forms, which is the Black-Scholes limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ReturnDistribution {
    nu: f64,
    ln_norm: f64,
}

impl ReturnDistribution {
    /// Student's t with `nu > 0` degrees of freedom.
    pub fn student_t(nu: f64) -> Result<Self> {
        ensure_positive("nu", nu)?;
        Ok(Self {
            nu,
            ln_norm: -ln_beta(0.5 * nu, 0.5) - 0.5 * nu.ln(),
        })
    }

    pub fn normal() -> Self {
        Self {
            nu: f64::INFINITY,
            ln_norm: -LN_SQRT_2PI,
        }
    }

    /// Accepts any positive ν, mapping `+∞` to the normal kernel.
    pub fn from_nu(nu: f64) -> Result<Self> {
        if nu == f64::INFINITY {
            Ok(Self::normal())
        } else {
            Self::student_t(nu)
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn is_normal(&self) -> bool {
        self.nu.is_infinite()
    }

    /// Variance of the kernel when it exists (`ν > 2`).
    pub fn variance(&self) -> Option<f64> {
        if self.is_normal() {
            Some(1.0)
        } else if self.nu > 2.0 {
            Some(self.nu / (self.nu - 2.0))
        } else {
            None
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if self.is_normal() {
            self.ln_norm - 0.5 * x * x
        } else {
            self.ln_norm - 0.5 * (self.nu + 1.0) * (x * x / self.nu).ln_1p()
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Upper-tail probability `P{ξ > x}` computed without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0 - self.sf(-x);
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        if self.is_normal() {
            return 0.5 * erfc(x * FRAC_1_SQRT_2);
        }
        let nu = self.nu;
        let x2 = x * x;
        let z = nu / (nu + x2);
        let w = x2 / (nu + x2);
        // beta_reg only fails for invalid arguments, which cannot occur here
        0.5 * beta_reg(0.5 * nu, 0.5, z, w).unwrap_or(f64::NAN)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.sf(-x)
        } else {
            1.0 - self.sf(x)
        }
    }

    /// Inverse of [`cdf`](Self::cdf) for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        ensure_open_unit("p", p)?;
        if p == 0.5 {
            return Ok(0.0);
        }
        if p < 0.5 {
            Ok(-self.upper_quantile(p)?)
        } else {
            Ok(self.upper_quantile(1.0 - p)?)
        }
    }

    /// Critical value `x_c` with `P{−x_c ≤ ξ ≤ x_c} = p_n`.
    pub fn two_sided_critical(&self, p_n: f64) -> Result<f64> {
        ensure_open_unit("p_n", p_n)?;
        self.upper_quantile(0.5 * (1.0 - p_n))
    }

    /// Solves `sf(x) = q` for `x ≥ 0`, `q ∈ (0, 1/2]`.
    ///
    /// Newton on `ln sf` keeps the step well scaled in power-law tails;
    /// steps leaving the bracket fall back to bisection.
    fn upper_quantile(&self, q: f64) -> Result<f64> {
        if q >= 0.5 {
            return Ok(0.0);
        }
        let ln_q = q.ln();
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while self.sf(hi) > q {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(GossetError::NotConverged {
                    what: "quantile bracket",
                    detail: format!("nu = {}, q = {q:e}", self.nu),
                });
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..QUANTILE_MAX_ITER {
            let s = self.sf(x);
            if s == q {
                return Ok(x);
            }
            if s > q {
                lo = x;
            } else {
                hi = x;
            }
            let h = s.ln() - ln_q;
            let dh = -self.pdf(x) / s;
            let mut next = x - h / dh;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let tol = 4.0 * f64::EPSILON * next.abs().max(1e-300);
            if (next - x).abs() <= tol || hi - lo <= tol {
                return Ok(next);
            }
            x = next;
        }
        Err(GossetError::NotConverged {
            what: "quantile",
            detail: format!("nu = {}, q = {q:e}, bracket [{lo}, {hi}]", self.nu),
        })
    }

    /// Sampler drawing `Z / √(V/ν)` with `Z` standard normal and `V ~ χ²(ν)`.
    pub fn sampler(&self) -> ReturnSampler {
        ReturnSampler {
            nu: self.nu,
            chi2: if self.is_normal() {
                None
            } else {
                ChiSquared::new(self.nu).ok()
            },
        }
    }
}

impl TryFrom<f64> for ReturnDistribution {
    type Error = GossetError;

    fn try_from(nu: f64) -> Result<Self> {
        Self::from_nu(nu)
    }
}

impl From<ReturnDistribution> for f64 {
    fn from(d: ReturnDistribution) -> f64 {
        d.nu
    }
}

#[derive(Debug, Clone)]
pub struct ReturnSampler {
    nu: f64,
    chi2: Option<ChiSquared<f64>>,
}

impl Distribution<f64> for ReturnSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match &self.chi2 {
            None => z,
            Some(chi2) => z / (chi2.sample(rng) / self.nu).sqrt(),
        }
    }
}

/// Chi law with `k` degrees of freedom stretched by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiParams {
    k: f64,
    scale: f64,
}

impl ChiParams {
    pub fn new(k: f64, scale: f64) -> Result<Self> {
        ensure_positive("k", k)?;
        ensure_positive("scale", scale)?;
        Ok(Self { k, scale })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn ln_norm(&self) -> f64 {
        -(0.5 * self.k - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * self.k) - self.scale.ln()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = x / self.scale;
        self.ln_norm() + (self.k - 1.0) * u.ln() - 0.5 * u * u
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let u = x / self.scale;
        gamma_lr(0.5 * self.k, 0.5 * u * u)
    }

    pub fn mean(&self) -> f64 {
        self.scale * std::f64::consts::SQRT_2 * (ln_gamma(0.5 * (self.k + 1.0)) - ln_gamma(0.5 * self.k)).exp()
    }

    /// Location of the density maximum (zero for `k ≤ 1`).
    pub fn mode(&self) -> f64 {
        if self.k <= 1.0 {
            0.0
        } else {
            self.scale * (self.k - 1.0).sqrt()
        }
    }

    /// Density of `scale / X` with `X` a unit-scale chi(k) variate.
    pub fn inverse_pdf(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(GossetError::invalid("x", format!("inverse chi density needs x > 0, got {y}")));
        }
        let unit = ChiParams { k: self.k, scale: 1.0 };
        let x = self.scale / y;
        Ok((unit.ln_pdf(x) + (self.scale / (y * y)).ln()).exp())
    }

    pub fn inverse_cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let x = self.scale / y;
        gamma_ur(0.5 * self.k, 0.5 * x * x)
    }

    pub fn sampler(&self) -> ChiSampler {
        ChiSampler {
            scale: self.scale,
            chi2: ChiSquared::new(self.k).expect("k validated positive"),
        }
    }
}

/// Free-function form of [`ChiParams::pdf`].
pub fn chi_pdf(params: &ChiParams, x: f64) -> f64 {
    params.pdf(x)
}

/// Free-function form of [`ChiParams::inverse_pdf`].
pub fn inverse_chi_pdf(params: &ChiParams, x: f64) -> Result<f64> {
    params.inverse_pdf(x)
}

#[derive(Debug, Clone)]
pub struct ChiSampler {
    scale: f64,
    chi2: ChiSquared<f64>,
}

impl Distribution<f64> for ChiSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * self.chi2.sample(rng).sqrt()
    }
}
