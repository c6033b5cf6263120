//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drivers::{DriverSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::measures::MoneyMarket;
use crate::transforms::CompositeMap;
use crate::valuation::{Exporter, Payoff, MIN_PATHS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Dominance,
    Price,
    Tariff,
    ReproduceTable1,
    ReproduceFigure1,
    ReproduceAppendixB4,
    ReproduceMoments,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Dominance => "dominance",
            Kind::Price => "price",
            Kind::Tariff => "tariff",
            Kind::ReproduceTable1 => "reproduce-table1",
            Kind::ReproduceFigure1 => "reproduce-figure1",
            Kind::ReproduceAppendixB4 => "reproduce-appendix-b4",
            Kind::ReproduceMoments => "reproduce-moments",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub driver: DriverSpec,
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// Also write the composite-mapped ensemble.
    pub map: Option<CompositeMap>,
    /// Write the binary ensemble format next to the CSV.
    #[serde(default)]
    pub binary: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub driver: DriverSpec,
    pub map: CompositeMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderRequest {
    Fosd,
    Sosd,
    #[default]
    Both,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceSpec {
    pub t: f64,
    pub process1: ProcessSpec,
    pub process2: ProcessSpec,
    #[serde(default)]
    pub order: OrderRequest,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Finite or infinite bounds; defaults to the whole line.
    pub domain: Option<[f64; 2]>,
}

fn default_grid() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSpec {
    pub risk: DriverSpec,
    pub map: CompositeMap,
    pub payoff: Payoff,
    #[serde(default)]
    pub t: f64,
    pub u: f64,
    #[serde(default)]
    pub rate: MoneyMarket,
    pub n_paths: usize,
    #[serde(default = "default_inner")]
    pub n_inner: usize,
    pub state: Option<f64>,
}

fn default_inner() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSpec {
    pub exporters: Vec<Exporter>,
    pub unit_cost: f64,
    pub u: f64,
    #[serde(default)]
    pub rate: MoneyMarket,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Row {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceSpec {
    #[serde(default = "table1_rows")]
    pub table1: Vec<Table1Row>,
    #[serde(default = "figure1_g2")]
    pub figure1_g2: f64,
    #[serde(default = "figure1_h2")]
    pub figure1_h2: f64,
    #[serde(default = "figure1_dh")]
    pub figure1_dh: Vec<f64>,
    #[serde(default = "figure1_dg")]
    pub figure1_dg: Vec<f64>,
    #[serde(default = "b4_params")]
    pub b4: [f64; 3],
    #[serde(default = "moment_draws")]
    pub moment_draws: usize,
    #[serde(default = "moment_paths")]
    pub moment_paths: usize,
    #[serde(default = "moment_ab")]
    pub moment_ab: [f64; 2],
}

fn table1_rows() -> Vec<Table1Row> {
    [(2.0, 0.8, 0.4, 0.05), (3.0, 0.5, 0.2, 0.05), (2.0, 0.8, 0.05, 0.4), (2.0, 1.5, 0.05, 0.2)]
        .into_iter()
        .map(|(g1, g2, h1, h2)| Table1Row { g1, g2, h1, h2 })
        .collect()
}
fn figure1_g2() -> f64 {
    0.1
}
fn figure1_h2() -> f64 {
    0.05
}
fn figure1_dh() -> Vec<f64> {
    vec![0.2, 0.35, 0.5]
}
fn figure1_dg() -> Vec<f64> {
    (1..=80).map(|k| 0.05 * k as f64).collect()
}
fn b4_params() -> [f64; 3] {
    [0.8, 0.2, 0.3]
}
fn moment_draws() -> usize {
    5
}
fn moment_paths() -> usize {
    1_000_000
}
fn moment_ab() -> [f64; 2] {
    [0.0, 1.0]
}

impl Default for ReproduceSpec {
    fn default() -> Self {
        ReproduceSpec {
            table1: table1_rows(),
            figure1_g2: figure1_g2(),
            figure1_h2: figure1_h2(),
            figure1_dh: figure1_dh(),
            figure1_dg: figure1_dg(),
            b4: b4_params(),
            moment_draws: moment_draws(),
            moment_paths: moment_paths(),
            moment_ab: moment_ab(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    pub simulate: Option<SimulateSpec>,
    pub dominance: Option<DominanceSpec>,
    pub price: Option<PriceSpec>,
    pub tariff: Option<TariffSpec>,
    #[serde(default)]
    pub reproduce: ReproduceSpec,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every violated invariant for the sections `kind` needs; nothing is
    /// run.
    pub fn validate(&self, kind: Kind) -> Vec<String> {
        let mut d = Vec::new();
        let mut push = |prefix: &str, issues: Vec<String>| {
            d.extend(issues.into_iter().map(|i| format!("{prefix}: {i}")));
        };
        let missing = |name: &str| vec![format!("[{name}] section is required for {}", kind.name())];
        match kind {
            Kind::Simulate => match &self.simulate {
                None => d.extend(missing("simulate")),
                Some(s) => {
                    if s.n_paths == 0 {
                        push("simulate.n_paths", vec!["must be positive, got 0".into()]);
                    }
                    push("simulate.grid", s.grid.validate().err().unwrap_or_default());
                    push("simulate.driver", s.driver.validate(Some(&s.grid)).err().unwrap_or_default());
                    if let Some(m) = &s.map {
                        push("simulate.map", m.validate_for(&s.driver, &s.grid.times).err().unwrap_or_default());
                    }
                }
            },
            Kind::Dominance => match &self.dominance {
                None => d.extend(missing("dominance")),
                Some(s) => {
                    if !(s.t > 0.0) {
                        push("dominance.t", vec![format!("must be positive, got {}", s.t)]);
                    }
                    if s.grid_size < 64 {
                        push("dominance.grid_size", vec![format!("must be at least 64, got {}", s.grid_size)]);
                    }
                    if let Some([a, b]) = s.domain {
                        if !(a < b) {
                            push("dominance.domain", vec![format!("needs lower < upper, got [{a}, {b}]")]);
                        }
                    }
                    for (name, p) in [("process1", &s.process1), ("process2", &s.process2)] {
                        push(
                            &format!("dominance.{name}.driver"),
                            p.driver.validate(None).err().unwrap_or_default(),
                        );
                        if s.t > 0.0 {
                            push(
                                &format!("dominance.{name}.map"),
                                p.map.validate_for(&p.driver, &[s.t]).err().unwrap_or_default(),
                            );
                        }
                    }
                }
            },
            Kind::Price => match &self.price {
                None => d.extend(missing("price")),
                Some(p) => {
                    let req = p.request(self.seed);
                    push("price", req.validate().err().unwrap_or_default());
                    if p.t > 0.0 && p.state.is_none() {
                        push("price.state", vec![format!("required when t = {} > 0", p.t)]);
                    }
                }
            },
            Kind::Tariff => match &self.tariff {
                None => d.extend(missing("tariff")),
                Some(s) => {
                    if s.exporters.len() < 2 {
                        push("tariff.exporters", vec!["at least two exporters are required".into()]);
                    }
                    if !(s.unit_cost > 0.0) {
                        push("tariff.unit_cost", vec![format!("must be positive, got {}", s.unit_cost)]);
                    }
                    if s.n_paths < MIN_PATHS {
                        push("tariff.n_paths", vec![format!("must be at least {MIN_PATHS}, got {}", s.n_paths)]);
                    }
                    if !(s.u > 0.0) {
                        push("tariff.u", vec![format!("must be positive, got {}", s.u)]);
                    }
                    for (i, e) in s.exporters.iter().enumerate() {
                        if s.u > 0.0 {
                            push(
                                &format!("tariff.exporters[{i}]"),
                                e.map().validate_for(&e.driver, &[s.u]).err().unwrap_or_default(),
                            );
                        }
                        push(
                            &format!("tariff.exporters[{i}].driver"),
                            e.driver.validate(None).err().unwrap_or_default(),
                        );
                    }
                }
            },
            Kind::ReproduceTable1 | Kind::ReproduceFigure1 => {
                let r = &self.reproduce;
                for (i, row) in r.table1.iter().enumerate() {
                    if row.h1 < 0.0 || row.h2 < 0.0 {
                        push(&format!("reproduce.table1[{i}]"), vec!["TukeyGH requires h ≥ 0".into()]);
                    }
                }
                if r.figure1_dg.iter().any(|g| !(*g > 0.0)) || r.figure1_dh.iter().any(|h| !(*h >= 0.0)) {
                    push("reproduce.figure1", vec!["gaps must be positive".into()]);
                }
            }
            Kind::ReproduceAppendixB4 => {
                if self.reproduce.b4.iter().any(|g| !(*g > 0.0)) {
                    push("reproduce.b4", vec!["skewness parameters must be positive".into()]);
                }
            }
            Kind::ReproduceMoments => {
                let r = &self.reproduce;
                if r.moment_draws == 0 || r.moment_paths < 1000 {
                    push("reproduce.moments", vec!["needs at least one draw and 1000 paths".into()]);
                }
                if !(r.moment_ab[1] > 0.0) {
                    push("reproduce.moment_ab", vec![format!("B must be positive, got {}", r.moment_ab[1])]);
                }
            }
        }
        d
    }
}

impl PriceSpec {
    pub fn request(&self, seed: u64) -> crate::valuation::ValuationRequest {
        crate::valuation::ValuationRequest {
            risk: self.risk.clone(),
            map: self.map.clone(),
            payoff: self.payoff.clone(),
            t: self.t,
            u: self.u,
            rate: self.rate.clone(),
            mc: crate::valuation::McSettings {
                n_paths: self.n_paths,
                seed,
                n_inner: self.n_inner,
            },
            state: self.state,
        }
    }
}
