use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qpvp::drivers::DriverSpec;
use qpvp::measures::MoneyMarket;
use qpvp::transforms::{CompositeMap, DistributionSpec, MapMode, QuantileSpec};
use qpvp::valuation::{quantile_integral_price, Payoff};
use tempfile::TempDir;

fn qpvp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpvp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_config(text: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), text).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PRICE: &str = r#"
kind = "price"
seed = 7

[price]
risk = { kind = "brownian" }
payoff = { kind = "layer", a = 1.0, b = 2.0 }
u = 1.0
n_paths = 20000

[price.map]
dist = { family = "DriverMarginal", driver = { kind = "brownian" } }
quantile = { family = "TukeyG", a = 0.0, b = 1.0, g = 0.5 }
mode = "TrueLaw"
"#;

#[test]
fn negative_h_is_reported() {
    let dir = with_config(
        r#"
kind = "reproduce-table1"

[[reproduce.table1]]
g1 = 2.0
g2 = 0.8
h1 = -0.1
h2 = 0.05
"#,
    );
    let o = qpvp(dir.path(), &["validate", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("TukeyGH requires h ≥ 0"), "{}", stdout(&o));
}

#[test]
fn valid_config_has_no_diagnostics() {
    let dir = with_config(PRICE);
    let o = qpvp(dir.path(), &["validate", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).trim().is_empty());
}

#[test]
fn degenerate_layer_is_rejected() {
    let dir = with_config(&PRICE.replace("a = 1.0, b = 2.0", "a = 2.0, b = 2.0"));
    let o = qpvp(dir.path(), &["validate", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("Layer requires"), "{}", stdout(&o));
}

#[test]
fn parse_errors_carry_a_position() {
    let dir = with_config("kind = \"price\"\nseed = \n");
    let o = qpvp(dir.path(), &["validate", "--config", "exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("exp.toml") && err.contains("line 2"), "{err}");

    let dir = with_config("kind = \"price\"\nunknown_key = 1\n");
    assert_eq!(qpvp(dir.path(), &["validate", "--config", "exp.toml"]).status.code(), Some(2));
}

#[test]
fn failed_runs_write_nothing() {
    let dir = with_config(
        r#"
kind = "simulate"

[simulate]
driver = { kind = "brownian" }
grid = { times = [0.5, 1.0] }
n_paths = 0
"#,
    );
    let o = qpvp(dir.path(), &["run", "--config", "exp.toml", "--out", "res"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("res").exists());

    let o = qpvp(dir.path(), &["price", "--config", "exp.toml", "--out", "res"]);
    assert_eq!(o.status.code(), Some(2), "kind mismatch");
}

#[test]
fn runs_are_byte_identical() {
    let dir = with_config(
        r#"
kind = "simulate"
seed = 3

[simulate]
driver = { kind = "ou", theta = 0.5, mu = 0.3, sigma = 0.4, y0 = 0.1 }
grid = { times = [0.5, 1.0, 2.0] }
n_paths = 500

[simulate.map]
dist = { family = "Gaussian", mean = 0.0, variance = 1.0 }
quantile = { family = "TukeyG", a = 0.0, b = 1.0, g = 0.5 }
mode = "Pivot"
"#,
    );
    for out in ["a", "b"] {
        let o = qpvp(dir.path(), &["run", "--config", "exp.toml", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["paths.csv", "composite.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    let o = qpvp(dir.path(), &["run", "--config", "exp.toml", "--out", "c", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        fs::read(dir.path().join("a/paths.csv")).unwrap(),
        fs::read(dir.path().join("c/paths.csv")).unwrap()
    );
}

#[test]
fn table1_reports_crossing_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpvp(dir.path(), &["reproduce", "table1", "--out", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "u_star").unwrap();
    let first = rows.records().next().unwrap().unwrap();
    let u: f64 = first[col].parse().unwrap();
    assert!((u - 0.021838).abs() < 1e-5, "{u}");
    assert!(!header.iter().any(|h| h.starts_with("paper")));
}

#[test]
fn appendix_integrals() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpvp(dir.path(), &["reproduce", "appendix-b4", "--out", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("appendix_b4.csv")).unwrap();
    let value = |q: &str| -> String {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{q},")))
            .unwrap_or_else(|| panic!("{q} missing in {text}"))
            .to_string()
    };
    let right: f64 = value("right_integral").parse().unwrap();
    assert!((right - 0.0660684).abs() < 1e-6, "{right}");
    assert_eq!(value("sosd_on_domain"), "true");
    assert_eq!(value("fosd_on_domain"), "false");
}

#[test]
fn price_run_matches_format() {
    let dir = with_config(PRICE);
    let o = qpvp(dir.path(), &["price", "--config", "exp.toml", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("p/price.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "price,std_error,risk_loading,risk_loading_se,n_effective,seed"
    );
    let f: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (p, se): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
    let map = CompositeMap::new(
        DistributionSpec::driver(DriverSpec::standard_brownian()),
        QuantileSpec::tukey_g(0.0, 1.0, 0.5),
        MapMode::TrueLaw,
    );
    let exact = quantile_integral_price(&map, &Payoff::Layer { a: 1.0, b: 2.0 }, 1.0, &MoneyMarket::constant(0.0)).unwrap();
    assert!((p - exact).abs() < 4.0 * se, "{p} vs {exact}");
    assert_eq!(f[5], "7");

    let json = with_config(&PRICE.replace("seed = 7", "seed = 7\noutput = { format = \"json\" }"));
    let o = qpvp(json.path(), &["run", "--config", "exp.toml", "--out", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(json.path().join("price.json")).unwrap()).unwrap();
    assert!((v["price"].as_f64().unwrap() - p).abs() < 1e-8 * p);
}

#[test]
fn tariff_and_dominance_runs() {
    let dir = with_config(
        r#"
kind = "tariff"

[tariff]
unit_cost = 40.0
u = 1.0
n_paths = 20000

[[tariff.exporters]]
name = "north"
gamma = 0.0
g = 0.2
driver = { kind = "brownian" }

[[tariff.exporters]]
name = "south"
gamma = 0.0
g = 0.8
driver = { kind = "brownian" }
"#,
    );
    let o = qpvp(dir.path(), &["tariff", "--config", "exp.toml", "--out", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("tariff.csv")).unwrap();
    let names: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["north", "south"]);

    let dir = with_config(
        r#"
kind = "dominance"

[dominance]
t = 1.0

[dominance.process1]
driver = { kind = "brownian" }
map = { dist = { family = "Gaussian", mean = 0.0, variance = 1.0 }, quantile = { family = "TukeyGH", a = 0.0, b = 1.0, g = 2.0, h = 0.4 }, mode = "FalseLaw" }

[dominance.process2]
driver = { kind = "brownian" }
map = { dist = { family = "Gaussian", mean = 0.0, variance = 1.0 }, quantile = { family = "TukeyGH", a = 0.0, b = 1.0, g = 0.8, h = 0.05 }, mode = "FalseLaw" }
"#,
    );
    let o = qpvp(dir.path(), &["run", "--config", "exp.toml", "--out", "."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("dominance.json")).unwrap()).unwrap();
    let u = v["u_star"]["u"].as_f64().unwrap();
    assert!((u - 0.021838).abs() < 1e-5, "{v}");
    assert!(dir.path().join("evidence_fosd.csv").exists());
}

#[test]
fn missing_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = qpvp(dir.path(), &["run", "--config", "nope.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(qpvp(dir.path(), &["--help"]).status.code(), Some(0));
}
