//! Command-line runner: reads an experiment config, validates it, runs the
//! experiment and writes CSV/JSON artifacts.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DominanceSpec, ExperimentConfig, Format, Kind, OrderRequest, ReproduceSpec};
use crate::dominance::{
    appendix_b4_integrals, crossing_u_star, fosd_check, sosd_check, state_dependent_tukey_g_cdf, tukey_g_cdf,
    DominanceReport, Direction, Order, UStar, Upper,
};
use crate::drivers::{simulate, DriverSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::measures::DistortedLaw;
use crate::stats::{batch_means, moments};
use crate::transforms::{
    apply_composite, tukey_g_gaussian_moments, CompositeMap, DistributionSpec, MapMode, QuantileSpec,
};
use crate::valuation::{carbon_tariff_table, qpvp_price, McSettings};

#[derive(Debug, Parser)]
#[command(name = "qpvp", version, about = "Quantile-process simulation, dominance and valuation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel Monte Carlo.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate driver paths and, optionally, their composite transform.
    Simulate,
    /// Test first- and second-order dominance between two processes.
    Dominance,
    /// Price a payoff under a distorted measure.
    Price,
    /// Build a carbon-tariff table.
    Tariff,
    /// Regenerate one of the reference tables or figures.
    Reproduce {
        #[arg(value_enum)]
        name: Reproduction,
    },
    /// Check a config and list every violation without running it.
    Validate,
    /// Run the experiment named by the config's `kind`.
    Run,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Reproduction {
    Table1,
    Figure1,
    AppendixB4,
    Moments,
}

impl From<Reproduction> for Kind {
    fn from(r: Reproduction) -> Kind {
        match r {
            Reproduction::Table1 => Kind::ReproduceTable1,
            Reproduction::Figure1 => Kind::ReproduceFigure1,
            Reproduction::AppendixB4 => Kind::ReproduceAppendixB4,
            Reproduction::Moments => Kind::ReproduceMoments,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_VALIDATION
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    let kind = match &cli.command {
        Command::Simulate => Kind::Simulate,
        Command::Dominance => Kind::Dominance,
        Command::Price => Kind::Price,
        Command::Tariff => Kind::Tariff,
        Command::Reproduce { name } => (*name).into(),
        Command::Run | Command::Validate => cfg
            .kind
            .ok_or_else(|| Error::Request("the config does not name a `kind`".into()))?,
    };
    if let (Some(k), false) = (cfg.kind, matches!(cli.command, Command::Run | Command::Validate)) {
        if k != kind {
            return Err(Error::Validation(vec![format!(
                "config kind `{}` does not match subcommand `{}`",
                k.name(),
                kind.name()
            )]));
        }
    }
    let diagnostics = cfg.validate(kind);
    if matches!(cli.command, Command::Validate) {
        for d in &diagnostics {
            println!("{d}");
        }
        return if diagnostics.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(diagnostics))
        };
    }
    if !diagnostics.is_empty() {
        return Err(Error::Validation(diagnostics));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    eprintln!("[qpvp] {}: running", kind.name());
    let artifacts = run(&cfg, kind)?;
    fs::create_dir_all(&out)?;
    for a in &artifacts {
        let path = out.join(&a.name);
        fs::write(&path, &a.bytes)?;
        eprintln!("[qpvp] wrote {}", path.display());
    }
    Ok(())
}

/// An output file produced by a run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn csv_artifact(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Artifact {
        name: format!("{name}.csv"),
        bytes,
    })
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Artifact {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    Artifact {
        name: format!("{name}.json"),
        bytes,
    }
}

fn tabular<T: Serialize>(format: Format, name: &str, header: &[&str], rows: &[T], cells: impl Fn(&T) -> Vec<String>) -> Result<Artifact> {
    match format {
        Format::Json => Ok(json_artifact(name, &rows)),
        Format::Csv => csv_artifact(name, header, rows.iter().map(cells).collect()),
    }
}

/// Run a validated experiment and return its artifacts in a fixed order.
pub fn run(cfg: &ExperimentConfig, kind: Kind) -> Result<Vec<Artifact>> {
    let fmt = cfg.output.format;
    match kind {
        Kind::Simulate => {
            let s = cfg.simulate.as_ref().expect("validated");
            let ens = simulate(&s.driver, &s.grid, s.n_paths, cfg.seed)?;
            let mut out = Vec::new();
            let mut push_ens = |name: &str, e: &crate::drivers::PathEnsemble| -> Result<()> {
                match fmt {
                    Format::Json => out.push(json_artifact(name, e)),
                    Format::Csv => {
                        let mut bytes = Vec::new();
                        e.write_csv(&mut bytes)?;
                        out.push(Artifact {
                            name: format!("{name}.csv"),
                            bytes,
                        });
                    }
                }
                Ok(())
            };
            push_ens("paths", &ens)?;
            if let Some(map) = &s.map {
                let z = apply_composite(map, &ens)?;
                push_ens("composite", &z)?;
            }
            if s.binary {
                let mut bytes = Vec::new();
                ens.write_binary(&mut bytes)?;
                out.push(Artifact {
                    name: "paths.bin".into(),
                    bytes,
                });
            }
            Ok(out)
        }
        Kind::Dominance => run_dominance(cfg.dominance.as_ref().expect("validated")),
        Kind::Price => {
            let p = cfg.price.as_ref().expect("validated");
            let r = qpvp_price(&p.request(cfg.seed))?;
            Ok(vec![match fmt {
                Format::Json => json_artifact("price", &r),
                Format::Csv => csv_artifact(
                    "price",
                    &["price", "std_error", "risk_loading", "risk_loading_se", "n_effective", "seed"],
                    vec![vec![
                        sig9(r.price),
                        sig9(r.std_error),
                        sig9(r.risk_loading),
                        sig9(r.risk_loading_se),
                        r.diagnostics.n_effective.to_string(),
                        r.diagnostics.seed.to_string(),
                    ]],
                )?,
            }])
        }
        Kind::Tariff => {
            let s = cfg.tariff.as_ref().expect("validated");
            let table = carbon_tariff_table(&s.exporters, s.unit_cost, s.u, &s.rate, McSettings::new(s.n_paths, cfg.seed))?;
            eprintln!("[qpvp] tariffs non-decreasing in g: {}", table.monotone_in_g);
            Ok(vec![match fmt {
                Format::Json => json_artifact("tariff", &table),
                Format::Csv => {
                    let mut bytes = Vec::new();
                    table.write_csv(&mut bytes)?;
                    Artifact {
                        name: "tariff.csv".into(),
                        bytes,
                    }
                }
            }])
        }
        Kind::ReproduceTable1 => {
            let rows = reproduce_table1(&cfg.reproduce)?;
            Ok(vec![tabular(
                fmt,
                "table1",
                &["row", "g1", "g2", "h1", "h2", "u_star", "domain_lower", "upper_process", "verdict", "cdf_dominant", "cdf_domain_lower"],
                &rows,
                |r| {
                    vec![
                        r.row.to_string(),
                        sig9(r.g1),
                        sig9(r.g2),
                        sig9(r.h1),
                        sig9(r.h2),
                        r.u_star.map(sig9).unwrap_or_default(),
                        r.domain_lower.map(sig9).unwrap_or_default(),
                        r.upper_process.clone(),
                        r.verdict.clone(),
                        r.cdf_dominant.clone(),
                        sig9(r.cdf_domain_lower),
                    ]
                },
            )?])
        }
        Kind::ReproduceFigure1 => {
            let rows = reproduce_figure1(&cfg.reproduce)?;
            Ok(vec![tabular(fmt, "figure1", &["h_gap", "g_gap", "u_star"], &rows, |r| {
                vec![sig9(r.h_gap), sig9(r.g_gap), sig9(r.u_star)]
            })?])
        }
        Kind::ReproduceAppendixB4 => {
            let rows = reproduce_b4(&cfg.reproduce)?;
            Ok(vec![tabular(fmt, "appendix_b4", &["quantity", "value"], &rows, |r| {
                vec![r.quantity.clone(), r.value.clone()]
            })?])
        }
        Kind::ReproduceMoments => {
            let rows = reproduce_moments(&cfg.reproduce, cfg.seed)?;
            Ok(vec![tabular(
                fmt,
                "moments",
                &["draw", "g", "v", "m", "statistic", "formula", "monte_carlo", "std_error", "z_score"],
                &rows,
                |r| {
                    vec![
                        r.draw.to_string(),
                        sig9(r.g),
                        sig9(r.v),
                        sig9(r.m),
                        r.statistic.clone(),
                        sig9(r.formula),
                        sig9(r.monte_carlo),
                        sig9(r.std_error),
                        sig9(r.z_score),
                    ]
                },
            )?])
        }
    }
}

#[derive(Debug, Serialize)]
struct DominanceOutput<'a> {
    fosd: Option<&'a DominanceReport>,
    sosd: Option<&'a DominanceReport>,
    u_star: Option<UStar>,
}

fn run_dominance(s: &DominanceSpec) -> Result<Vec<Artifact>> {
    let law1 = DistortedLaw::new(s.process1.map.clone(), s.process1.driver.clone())?;
    let law2 = DistortedLaw::new(s.process2.map.clone(), s.process2.driver.clone())?;
    let f1 = |z: f64| law1.cdf(s.t, z);
    let f2 = |z: f64| law2.cdf(s.t, z);
    let domain = s
        .domain
        .map(|[a, b]| (a, b))
        .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let u_star = match (&s.process1.map.quantile, &s.process2.map.quantile) {
        (
            q1 @ (QuantileSpec::TukeyG { .. } | QuantileSpec::TukeyGH { .. }),
            q2 @ (QuantileSpec::TukeyG { .. } | QuantileSpec::TukeyGH { .. }),
        ) => Some(crossing_u_star(q1, q2, s.t)?),
        _ => None,
    };
    let fosd = match s.order {
        OrderRequest::Fosd | OrderRequest::Both => Some(fosd_check(&f1, &f2, domain, s.grid_size)?),
        OrderRequest::Sosd => None,
    };
    let sosd = match s.order {
        OrderRequest::Sosd | OrderRequest::Both => Some(sosd_check(&f1, &f2, domain, s.grid_size)?),
        OrderRequest::Fosd => None,
    };
    let fosd = fosd.map(|r| r.with_u_star(u_star.as_ref().and_then(|u| u.u)));
    let sosd = sosd.map(|r| r.with_u_star(u_star.as_ref().and_then(|u| u.u)));
    let mut out = vec![json_artifact(
        "dominance",
        &DominanceOutput {
            fosd: fosd.as_ref(),
            sosd: sosd.as_ref(),
            u_star,
        },
    )];
    for (name, r) in [("evidence_fosd", &fosd), ("evidence_sosd", &sosd)] {
        if let Some(r) = r {
            let mut bytes = Vec::new();
            r.write_evidence_csv(&mut bytes)?;
            out.push(Artifact {
                name: format!("{name}.csv"),
                bytes,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1Line {
    pub row: usize,
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
    pub u_star: Option<f64>,
    /// `Q₁(u*)`.
    pub domain_lower: Option<f64>,
    pub upper_process: String,
    /// Verdict from the quantile crossing.
    pub verdict: String,
    /// Dominant process according to the grid CDF test, which cannot see
    /// crossings in tails lighter than its truncation level.
    pub cdf_dominant: String,
    pub cdf_domain_lower: f64,
}

fn direction_label(d: Direction) -> &'static str {
    match d {
        Direction::FirstDominates => "Z1",
        Direction::SecondDominates => "Z2",
        Direction::Neither => "none",
    }
}

/// Crossing level, domain bound and dominance verdict for each Tukey-gh
/// pair (A = 0, B = 1) at t = 1.
pub fn reproduce_table1(spec: &ReproduceSpec) -> Result<Vec<Table1Line>> {
    let mut out = Vec::new();
    for (i, r) in spec.table1.iter().enumerate() {
        let q1 = QuantileSpec::tukey_gh(0.0, 1.0, r.g1, r.h1);
        let q2 = QuantileSpec::tukey_gh(0.0, 1.0, r.g2, r.h2);
        let u = crossing_u_star(&q1, &q2, 1.0)?;
        let (a1, a2) = (q1.at(1.0), q2.at(1.0));
        let f1 = |z: f64| a1.cdf(z);
        let f2 = |z: f64| a2.cdf(z);
        let rep = fosd_check(&f1, &f2, (f64::NEG_INFINITY, f64::INFINITY), 512)?;
        let upper = match u.upper {
            Upper::First => "Z1",
            Upper::Second => "Z2",
            Upper::Equal => "equal",
        };
        let verdict = match (u.u, u.z) {
            (None, _) => "identical".to_string(),
            (Some(level), _) if level == 0.0 => format!("{upper} FOSD on R"),
            (Some(_), Some(z)) => format!("{upper} FOSD on [{}, inf)", sig9(z)),
            (Some(_), None) => "no FOSD".to_string(),
        };
        out.push(Table1Line {
            row: i + 1,
            g1: r.g1,
            g2: r.g2,
            h1: r.h1,
            h2: r.h2,
            u_star: u.u,
            domain_lower: u.z,
            upper_process: upper.into(),
            verdict,
            cdf_dominant: direction_label(rep.direction).into(),
            cdf_domain_lower: rep.domain_lower,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Point {
    pub h_gap: f64,
    pub g_gap: f64,
    pub u_star: f64,
}

/// `u*` as the skewness gap grows, one series per kurtosis gap.
pub fn reproduce_figure1(spec: &ReproduceSpec) -> Result<Vec<Figure1Point>> {
    let (g2, h2) = (spec.figure1_g2, spec.figure1_h2);
    let q2 = QuantileSpec::tukey_gh(0.0, 1.0, g2, h2);
    let mut out = Vec::new();
    for &dh in &spec.figure1_dh {
        for &dg in &spec.figure1_dg {
            let q1 = QuantileSpec::tukey_gh(0.0, 1.0, g2 + dg, h2 + dh);
            let u = crossing_u_star(&q1, &q2, 1.0)?;
            out.push(Figure1Point {
                h_gap: dh,
                g_gap: dg,
                u_star: u.u.unwrap_or(f64::NAN),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct B4Line {
    pub quantity: String,
    pub value: String,
}

/// The two integrals of the state-dependent Tukey-g pair, plus the FOSD and
/// SOSD verdicts on `(−1/g₂, ∞)`.
pub fn reproduce_b4(spec: &ReproduceSpec) -> Result<Vec<B4Line>> {
    let [g1a, g1b, g2] = spec.b4;
    let (left, right) = appendix_b4_integrals(g1a, g1b, g2)?;
    let f1 = |z: f64| Ok(state_dependent_tukey_g_cdf(g1a, g1b, z));
    let f2 = |z: f64| Ok(tukey_g_cdf(g2, z));
    let domain = (-1.0 / g2, f64::INFINITY);
    let fosd = fosd_check(&f1, &f2, domain, 1024)?;
    let sosd = sosd_check(&f1, &f2, domain, 1024)?;
    let fosd_holds = fosd.order == Order::FOSD && fosd.full_domain;
    let sosd_holds = sosd.order == Order::SOSD;
    let line = |q: &str, v: String| B4Line {
        quantity: q.into(),
        value: v,
    };
    Ok(vec![
        line("left_integral", sig9(left)),
        line("right_integral", sig9(right)),
        line("fosd_on_domain", fosd_holds.to_string()),
        line("sosd_on_domain", sosd_holds.to_string()),
        line("sosd_direction", direction_label(sosd.direction).into()),
    ])
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentLine {
    pub draw: usize,
    pub g: f64,
    pub v: f64,
    pub m: f64,
    pub statistic: String,
    pub formula: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
    pub z_score: f64,
}

/// Driver used for the moment comparison; the pivot makes its parameters
/// irrelevant to the composite law.
pub fn moments_driver() -> DriverSpec {
    DriverSpec::ou_constant(0.5, 0.3, 0.4, 0.1)
}

/// Formula moments of the Tukey-g Gaussian-pivot composite against Monte
/// Carlo for random `(g, v, m)`.
pub fn reproduce_moments(spec: &ReproduceSpec, seed: u64) -> Result<Vec<MomentLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let driver = moments_driver();
    let grid = TimeGrid::new(vec![1.0])?;
    let [a, b] = spec.moment_ab;
    let mut out = Vec::new();
    for draw in 0..spec.moment_draws {
        let g = rng.random_range(0.1..1.0);
        let v = rng.random_range(0.5..2.0);
        let m = rng.random_range(-1.0..1.0);
        let map = CompositeMap::new(
            DistributionSpec::gaussian(m, v),
            QuantileSpec::tukey_g(a, b, g),
            MapMode::Pivot,
        );
        let ens = simulate(&driver, &grid, spec.moment_paths, crate::rng::child_seed(seed, draw as u64))?;
        let z = apply_composite(&map, &ens)?.column(0);
        let f = tukey_g_gaussian_moments(a, b, g, m, v)?;
        let stats: [(&str, f64, fn(&[f64]) -> f64); 4] = [
            ("mean", f.mean, |x| moments(x).mean),
            ("variance", f.variance, |x| moments(x).variance),
            ("skewness", f.skewness, |x| moments(x).skewness),
            ("excess_kurtosis", f.excess_kurtosis, |x| moments(x).excess_kurtosis),
        ];
        for (name, formula, stat) in stats {
            let (mc, se) = batch_means(&z, 100, stat);
            out.push(MomentLine {
                draw,
                g,
                v,
                m,
                statistic: name.into(),
                formula,
                monte_carlo: mc,
                std_error: se,
                z_score: (mc - formula) / se,
            });
        }
    }
    Ok(out)
}

/// Write artifacts to `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for a in artifacts {
        fs::write(dir.join(&a.name), &a.bytes)?;
    }
    Ok(())
}
