use gosset::calibration::{
    estimate_nu_with, simulate_scaled_window_study, window_volatilities, VolatilityCurve,
    SIMULATED_NU_GRID,
};
use gosset::greeks::{difference_quadrature, finite_difference, second_difference, FdConfig, FdScheme};
use gosset::ingest::{load_series, ColumnMap};
use gosset::pricing::{black_scholes_call, black_scholes_put};
use gosset::{
    CurveSource, GossetError, GossetModel, MarketParams, ReturnDistribution, Result, TailMode, TailPolicy,
};
use rayon::prelude::*;

use crate::args::{
    default_drops, CalibrateArgs, CurveKind, GreeksArgs, MarketArgs, PriceArgs, SimulateArgs, Sweep, SweepParam,
    Table1Args, Variance,
};
use crate::table::{Cell, Table};

/// One evaluation point: the swept value plus the resolved inputs.
#[derive(Debug, Clone, Copy)]
struct Point {
    sweep: f64,
    nu: f64,
    p_cap: f64,
    mkt: MarketParams,
}

fn points(sweep: &Sweep, nus: &[f64], strike: f64, market: &MarketArgs) -> Result<Vec<Point>> {
    let nus: Vec<f64> = if sweep.param == SweepParam::Nu { vec![f64::NAN] } else { nus.to_vec() };
    let mut out = Vec::new();
    for v in sweep.values() {
        for &nu in &nus {
            let (mut s0, mut k, mut sigma, mut nu, mut p_cap) = (market.s0, strike, market.sigma, nu, market.pc);
            match sweep.param {
                SweepParam::S0 => s0 = v,
                SweepParam::Strike => k = v,
                SweepParam::Sigma => sigma = v,
                SweepParam::Nu => nu = v,
                SweepParam::P => p_cap = v,
            }
            out.push(Point {
                sweep: v,
                nu,
                p_cap,
                mkt: MarketParams::new(s0, k, market.rt, sigma)?,
            });
        }
    }
    Ok(out)
}

fn model(nu: f64, mode: TailMode, p_floor: f64, p_cap: f64) -> Result<GossetModel> {
    let dist = ReturnDistribution::from_nu(nu)?;
    GossetModel::new(dist, TailPolicy::new(mode, &dist, p_floor, p_cap)?)
}

pub const PRICE_COLUMNS: [&str; 8] = [
    "sweep",
    "nu",
    "call_capped",
    "call_truncated",
    "put_capped",
    "put_truncated",
    "black_scholes",
    "black_scholes_put",
];

pub fn price(args: &PriceArgs) -> Result<Table> {
    let pts = points(&args.sweep, &args.nu.0, args.strike, &args.market)?;
    let rows = pts
        .par_iter()
        .map(|p| {
            let capped = model(p.nu, TailMode::Capped, args.market.pp, p.p_cap)?;
            let truncated = model(p.nu, TailMode::Truncated, args.market.pp, p.p_cap)?;
            Ok(vec![
                p.sweep.into(),
                Cell::nu(p.nu),
                capped.call(&p.mkt)?.value_at_zero.into(),
                truncated.call(&p.mkt)?.value_at_zero.into(),
                capped.put(&p.mkt)?.value_at_zero.into(),
                truncated.put(&p.mkt)?.value_at_zero.into(),
                black_scholes_call(&p.mkt).into(),
                black_scholes_put(&p.mkt).into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&PRICE_COLUMNS);
    t.extend(rows);
    Ok(t)
}

pub const GREEKS_COLUMNS: [&str; 13] = [
    "sweep", "nu", "mode", "call", "delta", "gamma", "vega", "theta", "dc_dnu", "dc_dp", "fd_delta", "fd_gamma",
    "fd_vega",
];

pub fn greeks(args: &GreeksArgs) -> Result<Table> {
    let modes: Vec<TailMode> = match args.mode {
        Some(m) => vec![m],
        None => vec![TailMode::Capped, TailMode::Truncated],
    };
    let cases: Vec<(Point, TailMode)> = points(&args.sweep, &args.nu.0, args.strike, &args.market)?
        .into_iter()
        .flat_map(|p| modes.iter().map(move |&m| (p, m)))
        .collect();
    let cfg = FdConfig::default();
    let rows = cases
        .par_iter()
        .map(|&(p, mode)| {
            let m = model(p.nu, mode, args.market.pp, p.p_cap)?.with_quadrature(difference_quadrature());
            let g = m.greeks(&p.mkt, &cfg)?;
            let s0 = p.mkt.s0();
            let sigma = p.mkt.sigma();
            let call_at = |s: f64| Ok(m.call(&p.mkt.with_s0(s)?)?.value_at_zero);
            let fd_delta = finite_difference(call_at, s0, 1e-5 * s0, FdScheme::Central)?;
            let fd_gamma = second_difference(call_at, s0, 1e-3 * s0)?;
            let fd_vega = finite_difference(
                |v| Ok(m.call(&p.mkt.with_sigma(v)?)?.value_at_zero),
                sigma,
                1e-5 * sigma,
                FdScheme::Central,
            )?;
            Ok(vec![
                p.sweep.into(),
                Cell::nu(p.nu),
                Cell::Text(mode.to_string()),
                m.call(&p.mkt)?.value_at_zero.into(),
                g.delta.into(),
                g.gamma.into(),
                g.vega.into(),
                g.theta.into(),
                g.dc_dnu.into(),
                g.dc_dp.into(),
                fd_delta.into(),
                fd_gamma.into(),
                fd_vega.into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(&GREEKS_COLUMNS);
    t.extend(rows);
    Ok(t)
}

pub const TABLE1_COLUMNS: [&str; 4] = ["nu", "p", "x_c", "growth"];

pub fn table1(args: &Table1Args) -> Result<Table> {
    if !(args.sigma >= 0.0 && args.sigma.is_finite()) {
        return Err(GossetError::InvalidParameter {
            name: "sigma",
            reason: format!("must be non-negative, got {}", args.sigma),
        });
    }
    let mut t = Table::new(&TABLE1_COLUMNS);
    for &nu in &args.nu.0 {
        let x = ReturnDistribution::from_nu(nu)?.quantile(args.pc)?;
        t.push(vec![Cell::nu(nu), args.pc.into(), x.into(), (args.sigma * x).exp().into()]);
    }
    Ok(t)
}

pub const CALIBRATE_COLUMNS: [&str; 11] = [
    "record",
    "window",
    "drop",
    "p_n",
    "nu",
    "ratio",
    "uncertainty",
    "median_ratio",
    "nu_lo",
    "nu_hi",
    "windows",
];

/// Curve rows, then one row per drop level and one combined estimate per window.
pub fn calibrate(args: &CalibrateArgs) -> Result<Table> {
    let columns = ColumnMap {
        value: args.column.clone(),
        date: args.date_column.clone(),
    };
    let series = load_series(&args.input, args.input_format, args.delimiter.0, &columns)?;
    let mut t = Table::new(&CALIBRATE_COLUMNS);
    let blank = |n: usize| vec![Cell::Empty; n];

    for &window in &args.window {
        let drops = args.drops.clone().unwrap_or_else(|| default_drops(window));
        let study = window_volatilities(&series, window, &drops)?;
        let source = match args.curve {
            CurveKind::Truncated => CurveSource::Truncated,
            CurveKind::Simulated => CurveSource::Simulated {
                trials: args.trials,
                seed: args.seed,
            },
        };
        let curve = VolatilityCurve::build(source, window, &drops)?;

        for drop in curve.drops() {
            let p_n = (window - drop) as f64 / window as f64;
            for &nu in &SIMULATED_NU_GRID {
                let ratio = curve.ratio(drop, nu)?;
                let mut r = vec![Cell::from("curve"), window.into(), drop.into(), p_n.into(), Cell::nu(nu), ratio.into()];
                r.extend(blank(5));
                t.push(r);
            }
        }

        let result = estimate_nu_with(&study, &curve, args.covariance)?;
        for l in &result.levels {
            let median_ratio = study.ratio(l.drop, args.covariance)?.median_ratio;
            t.push(vec![
                "level".into(),
                window.into(),
                l.drop.into(),
                l.p_n.into(),
                Cell::nu(l.nu_hat),
                l.ratio.into(),
                l.uncertainty.into(),
                median_ratio.into(),
                Cell::nu(l.nu_ci.0),
                Cell::nu(l.nu_ci.1),
                study.n_windows().into(),
            ]);
        }
        let mut r = vec![Cell::from("estimate"), window.into(), Cell::Empty, Cell::Empty, Cell::nu(result.nu_hat)];
        r.extend(blank(3));
        r.extend([Cell::nu(result.nu_ci.0), Cell::nu(result.nu_ci.1), study.n_windows().into()]);
        t.push(r);
    }
    Ok(t)
}

pub const SIMULATE_COLUMNS: [&str; 10] = [
    "nu",
    "scale",
    "window",
    "drop",
    "kept",
    "mean",
    "std",
    "median",
    "normalized_mean",
    "normalized_median",
];

pub fn simulate(args: &SimulateArgs) -> Result<Table> {
    let drops = args.drops.clone().unwrap_or_else(|| default_drops(args.window));
    let mut t = Table::new(&SIMULATE_COLUMNS);
    for &nu in &args.nu.0 {
        let dist = ReturnDistribution::from_nu(nu)?;
        let scale = match args.variance {
            Variance::Unit => 1.0,
            Variance::Target(v) => match dist.variance() {
                Some(kv) => (v / kv).sqrt(),
                None => {
                    return Err(GossetError::InvalidParameter {
                        name: "variance",
                        reason: format!("nu = {nu} has no finite variance; pass --variance unit"),
                    })
                }
            },
        };
        let study = simulate_scaled_window_study(&dist, scale, args.window, &drops, args.trials, args.seed)?;
        let base = study.summary(0)?;
        for &drop in study.drop_counts() {
            let s = study.summary(drop)?;
            t.push(vec![
                Cell::nu(nu),
                scale.into(),
                args.window.into(),
                drop.into(),
                (args.window - drop).into(),
                s.mean.into(),
                s.std.into(),
                s.median.into(),
                (s.mean / base.mean).into(),
                (s.median / base.median).into(),
            ]);
        }
    }
    Ok(t)
}
