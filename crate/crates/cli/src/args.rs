use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gosset::calibration::CovarianceForm;
use gosset::{SeriesFormat, TailMode};

#[derive(Debug, Parser)]
#[command(name = "gosset", version, about = "Option pricing and shape calibration under Student's t log-returns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output encoding.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Call and put prices under both tail modes against Black-Scholes.
    #[command(visible_alias = "curve")]
    Price(PriceArgs),
    /// Analytic greeks with finite-difference cross-checks.
    Greeks(GreeksArgs),
    /// Critical returns and the largest growth factor they allow.
    Table1(Table1Args),
    /// Estimate ν from a price or return file.
    Calibrate(CalibrateArgs),
    /// Simulated window-volatility study.
    Simulate(SimulateArgs),
}

/// Market and tail parameters shared by the pricing commands.
#[derive(Debug, Clone, Args)]
pub struct MarketArgs {
    /// Floor probability p_p (0 for no floor).
    #[arg(long, default_value_t = 0.0)]
    pub pp: f64,
    /// Cap probability p_c.
    #[arg(long, default_value_t = 0.999)]
    pub pc: f64,
    /// Spot price S0.
    #[arg(long, default_value_t = 50.0)]
    pub s0: f64,
    /// Risk-free rate times time to expiry.
    #[arg(long, default_value_t = 0.03)]
    pub rt: f64,
    /// Volatility over the option's life.
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Comma-separated shape parameters; `inf` selects the normal kernel.
    #[arg(long, default_value = "3,8,21,inf")]
    pub nu: NuList,
    #[arg(long, default_value_t = 50.0)]
    pub strike: f64,
    /// `param:lo:hi:steps` with param one of S0, K, sigma, nu, p.
    #[arg(long, default_value = "K:0:100:101")]
    pub sweep: Sweep,
    #[command(flatten)]
    pub market: MarketArgs,
}

#[derive(Debug, Args)]
pub struct GreeksArgs {
    #[arg(long, default_value = "3,5,21,inf")]
    pub nu: NuList,
    #[arg(long, default_value_t = 49.0)]
    pub strike: f64,
    #[arg(long, default_value = "S0:30:70:41")]
    pub sweep: Sweep,
    /// Restrict to one tail mode (both by default).
    #[arg(long)]
    pub mode: Option<TailMode>,
    #[command(flatten)]
    pub market: MarketArgs,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long, default_value = "3,8,21,inf")]
    pub nu: NuList,
    #[arg(long, default_value_t = 0.999)]
    pub pc: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Truncated,
    Simulated,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Delimited file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Whether the value column holds closes or log returns.
    #[arg(long, default_value = "closes")]
    pub input_format: SeriesFormat,
    /// Field delimiter: a single character or `tab`.
    #[arg(long, default_value = ",")]
    pub delimiter: Delimiter,
    /// Value column header (auto-detected when omitted).
    #[arg(long)]
    pub column: Option<String>,
    /// Date column header (`date` is used when present).
    #[arg(long)]
    pub date_column: Option<String>,
    /// Comma-separated window lengths.
    #[arg(long, default_value = "22", value_delimiter = ',')]
    pub window: Vec<usize>,
    /// Comma-separated total drop counts; defaults to N/11 and 2N/11 rounded to even.
    #[arg(long, value_delimiter = ',')]
    pub drops: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = CurveKind::Truncated)]
    pub curve: CurveKind,
    /// Windows per grid point for the simulated curve.
    #[arg(long, default_value_t = gosset::calibration::DEFAULT_CURVE_TRIALS)]
    pub trials: usize,
    /// Seed for the simulated curve.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coefficient on the covariance term: single or double.
    #[arg(long, default_value = "single")]
    pub covariance: CovarianceForm,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Seed for the ChaCha8 stream.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "3,inf")]
    pub nu: NuList,
    #[arg(long, default_value_t = 22)]
    pub window: usize,
    #[arg(long, value_delimiter = ',')]
    pub drops: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Scale every kernel to this variance, or `unit` for raw kernels.
    #[arg(long, default_value = "3")]
    pub variance: Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuList(pub Vec<f64>);

pub fn parse_nu(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if ["inf", "infinity", "+inf"].iter().any(|w| s.eq_ignore_ascii_case(w)) {
        return Ok(f64::INFINITY);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number or `inf`"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("nu must be positive, got {v}"))
    }
}

impl FromStr for NuList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s.split(',').map(parse_nu).collect::<Result<Vec<_>, _>>()?;
        Ok(NuList(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    S0,
    Strike,
    Sigma,
    Nu,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [name, lo, hi, steps] = parts[..] else {
            return Err(format!("expected param:lo:hi:steps, got `{s}`"));
        };
        let param = match name.to_ascii_lowercase().as_str() {
            "s0" | "s" => SweepParam::S0,
            "k" | "strike" => SweepParam::Strike,
            "sigma" => SweepParam::Sigma,
            "nu" => SweepParam::Nu,
            "p" | "pc" => SweepParam::P,
            other => return Err(format!("unknown sweep parameter `{other}` (S0, K, sigma, nu, p)")),
        };
        let bound = |v: &str| {
            if param == SweepParam::Nu {
                parse_nu(v)
            } else {
                v.parse::<f64>().map_err(|_| format!("`{v}` is not a number"))
            }
        };
        let (lo, hi) = (bound(lo)?, bound(hi)?);
        let steps: usize = steps.parse().map_err(|_| format!("`{steps}` is not a step count"))?;
        if steps == 0 {
            return Err("steps must be at least 1".into());
        }
        if steps > 1 && !(lo.is_finite() && hi.is_finite()) {
            return Err("sweep bounds must be finite".into());
        }
        if hi < lo {
            return Err(format!("sweep upper bound {hi} is below lower bound {lo}"));
        }
        Ok(Sweep { param, lo, hi, steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delimiter(pub u8);

impl FromStr for Delimiter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tab" | "\\t" | "\t" => Ok(Delimiter(b'\t')),
            _ if s.len() == 1 && s.is_ascii() => Ok(Delimiter(s.as_bytes()[0])),
            _ => Err(format!("delimiter must be one ASCII character or `tab`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Unit,
    Target(f64),
}

impl FromStr for Variance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("unit") {
            return Ok(Variance::Unit);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Variance::Target(v)),
            _ => Err(format!("variance must be positive or `unit`, got `{s}`")),
        }
    }
}

/// `N/11` and `2N/11`, rounded down to even and at least 2.
pub fn default_drops(window: usize) -> Vec<usize> {
    let even = |x: usize| (x / 2 * 2).max(2);
    let mut d = vec![even(window / 11), even(2 * window / 11)];
    d.dedup();
    d
}
