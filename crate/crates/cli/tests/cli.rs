use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

fn gosset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gosset")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gosset(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    gosset(args).status.code().unwrap()
}

/// Rows as (header, records) with every field kept as text.
fn parse(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("`{s}` is not numeric"))
}

fn write_returns(path: &Path, returns: impl IntoIterator<Item = f64>) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "return").unwrap();
    for r in returns {
        writeln!(f, "{r}").unwrap();
    }
}

#[test]
fn price_zero_strike_and_normal_limit() {
    let (h, rows) = parse(&ok(&["price"]));
    assert_eq!(rows.len(), 101 * 4);
    for r in rows.iter().filter(|r| r[0] == "0") {
        for c in ["call_capped", "call_truncated"] {
            assert!((num(&r[col(&h, c)]) - 50.0).abs() < 1e-12);
        }
        for c in ["put_capped", "put_truncated"] {
            assert!(num(&r[col(&h, c)]).abs() < 1e-12);
        }
    }
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| r[1] == "inf") {
        let bs = num(&r[col(&h, "black_scholes")]);
        let bs_put = num(&r[col(&h, "black_scholes_put")]);
        worst = worst.max((num(&r[col(&h, "call_capped")]) - bs).abs());
        worst = worst.max((num(&r[col(&h, "put_capped")]) - bs_put).abs());
    }
    assert!(worst < 0.02, "normal kernel with a 0.999 cap is near Black-Scholes, got {worst}");

    let (h, rows) = parse(&ok(&["price", "--nu", "inf", "--pc", "0.9999999999", "--sweep", "K:20:80:7"]));
    for r in &rows {
        let d = (num(&r[col(&h, "call_truncated")]) - num(&r[col(&h, "black_scholes")])).abs();
        assert!(d < 1e-4, "strike {}: {d}", r[0]);
    }
}

#[test]
fn curve_alias_matches_price() {
    let args = ["--sweep", "K:40:60:3", "--nu", "3"];
    let a = ok(&[&["price"], &args[..]].concat());
    let b = ok(&[&["curve"], &args[..]].concat());
    assert_eq!(a, b);
}

#[test]
fn price_output_is_deterministic() {
    let args = ["price", "--sweep", "S0:30:70:9", "--nu", "3,5,inf"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn greeks_agree_with_finite_differences() {
    let (h, rows) = parse(&ok(&["greeks", "--sweep", "S0:30:70:5", "--nu", "3,21,inf"]));
    assert_eq!(rows.len(), 5 * 3 * 2);
    for r in &rows {
        for (a, f, tol) in [("delta", "fd_delta", 1e-6), ("gamma", "fd_gamma", 1e-5), ("vega", "fd_vega", 1e-5)] {
            let (a, f) = (num(&r[col(&h, a)]), num(&r[col(&h, f)]));
            assert!((a - f).abs() <= tol * a.abs().max(1.0), "{r:?}: {a} vs {f}");
        }
        assert_eq!(r[col(&h, "dc_dnu")].is_empty(), r[1] == "inf");
    }

    let (h, rows) = parse(&ok(&["greeks", "--sweep", "S0:200:200:1", "--nu", "5", "--mode", "truncated"]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "mode")], "truncated");
    let delta = num(&rows[0][col(&h, "delta")]);
    assert!(delta > 0.99 && delta <= 1.0 + 1e-9, "deep in the money delta {delta}");
}

#[test]
fn table1_critical_returns() {
    let (h, rows) = parse(&ok(&["table1"]));
    let expect = [("3", 10.2145, 21.42), ("8", 4.5008, 3.858), ("inf", 3.0902, 2.527)];
    for (nu, x, g) in expect {
        let r = rows.iter().find(|r| r[0] == nu).unwrap();
        assert!((num(&r[col(&h, "x_c")]) - x).abs() < 1e-3, "{r:?}");
        assert!((num(&r[col(&h, "growth")]) - g).abs() < 1e-2, "{r:?}");
    }
    let (h, rows) = parse(&ok(&["table1", "--nu", "3", "--pc", "0.95"]));
    assert!((num(&rows[0][col(&h, "x_c")]) - 2.3534).abs() < 1e-3);
    assert!((num(&rows[0][col(&h, "growth")]) - 2.0259).abs() < 1e-3);
    let (h, rows) = parse(&ok(&["table1", "--nu", "3", "--pc", "0.99999"]));
    assert!((num(&rows[0][col(&h, "x_c")]) - 47.93).abs() < 0.01);
}

#[test]
fn json_carries_the_same_values() {
    let args = ["greeks", "--sweep", "S0:45:55:3", "--nu", "4,inf"];
    let (h, rows) = parse(&ok(&args));
    let json: serde_json::Value = serde_json::from_str(&ok(&[&args[..], &["--format", "json"]].concat())).unwrap();
    let records = json.as_array().unwrap();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(&rows) {
        for (name, cell) in h.iter().zip(row) {
            let v = &rec[name.as_str()];
            match cell.parse::<f64>() {
                _ if cell.is_empty() => assert!(v.is_null()),
                Ok(x) if x.is_finite() => assert_eq!(v.as_f64().unwrap(), x, "{name}"),
                _ => assert_eq!(v.as_str().unwrap(), cell),
            }
        }
    }
}

#[test]
fn calibrate_recovers_synthetic_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t8.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = StudentT::new(8.0).unwrap();
    write_returns(&path, (0..22 * 700).map(|_| 0.01 * t.sample(&mut rng)));
    let path = path.to_str().unwrap();
    let csv = ok(&[
        "calibrate", "--input", path, "--input-format", "returns", "--curve", "simulated", "--trials", "4000", "--seed", "2",
    ]);
    let (h, rows) = parse(&csv);
    let est = rows.iter().find(|r| r[0] == "estimate").unwrap();
    let (lo, hi) = (num(&est[col(&h, "nu_lo")]), num(&est[col(&h, "nu_hi")]));
    assert!(lo < 8.0 && 8.0 < hi, "interval [{lo}, {hi}]");
    assert_eq!(est[col(&h, "windows")], "700");
    assert_eq!(rows.iter().filter(|r| r[0] == "level").count(), 2);
    assert!(rows.iter().filter(|r| r[0] == "curve").count() > 0);
}

#[test]
fn calibrate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    write_returns(&flat, std::iter::repeat(0.0).take(22 * 40));
    assert_eq!(code(&["calibrate", "--input", flat.to_str().unwrap(), "--input-format", "returns"]), 2);

    // Uniform returns are thinner-tailed than any t kernel.
    let thin = dir.path().join("thin.csv");
    write_returns(&thin, (0..22 * 400).map(|i| ((i as f64 * 0.618_033_988_7).fract() - 0.5) * 0.02));
    assert_eq!(code(&["calibrate", "--input", thin.to_str().unwrap(), "--input-format", "returns"]), 3);

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&["calibrate", "--input", missing.to_str().unwrap()]), 2);
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--seed", "5", "--trials", "300"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert_ne!(a, ok(&["simulate", "--seed", "6", "--trials", "300"]));
    let (h, rows) = parse(&a);
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[col(&h, "drop")] == "0") {
        assert_eq!(num(&r[col(&h, "normalized_mean")]), 1.0);
    }
    assert_eq!(code(&["simulate"]), 2);
    assert_eq!(code(&["simulate", "--seed", "1", "--nu", "2"]), 2);
    assert_eq!(code(&["simulate", "--seed", "1", "--nu", "2", "--variance", "unit", "--trials", "50"]), 0);
}

#[test]
fn bad_parameters_are_rejected() {
    assert_eq!(code(&["price", "--strike=-1", "--sweep", "S0:50:50:1"]), 2);
    assert_eq!(code(&["price", "--nu", "0"]), 2);
    assert_eq!(code(&["price", "--sweep", "rho:0:1:3"]), 2);
    assert_eq!(code(&["price", "--pc", "1", "--sweep", "K:50:50:1"]), 2);
    assert_eq!(code(&["table1", "--pc", "1.5"]), 2);
    assert_eq!(code(&["greeks", "--mode", "sideways"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
}
