//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comment
//! population.path = frame.csv
//! columns.outcome = income
//! columns.covariates = age,hours
//! design.variant = bernoulli
//! design.expected_n = 50
//! sim.replicates = 1000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::classicvar::BmPlugin;
use crate::designs::DesignSpec;
use crate::error::{Error, Result};
use crate::hdvar::{HdOptions, Normalizer};
use crate::io::population::ColumnMapping;
use crate::io::synth::{OutcomeFamily, SynthParams};
use crate::sim::{Method, SimConfig};

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "population.path",
    "population.seed",
    "population.synthetic.n",
    "population.synthetic.p",
    "population.synthetic.coefficients",
    "population.synthetic.noise",
    "population.synthetic.family",
    "population.synthetic.strata",
    "population.synthetic.clusters",
    "population.synthetic.size_measure",
    "columns.id",
    "columns.outcome",
    "columns.covariates",
    "columns.intercept",
    "columns.stratum",
    "columns.cluster",
    "columns.size",
    "design.variant",
    "design.expected_n",
    "design.n",
    "design.n_per_stratum",
    "design.n_clusters",
    "design.n_units_per_cluster",
    "sample.path",
    "sim.replicates",
    "sim.seed",
    "sim.alphas",
    "sim.methods",
    "sim.threads",
    "options.include_tau2b",
    "options.fast_tau2a",
    "options.log_outcome",
    "options.normalizer",
    "options.bm_plugin",
    "options.timing",
    "options.compare_tau2b",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    File(PathBuf),
    Synthetic { params: SynthParams, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub population: PopulationSource,
    pub mapping: ColumnMapping,
    pub design: Option<DesignSpec>,
    pub sample_path: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub master_seed: u64,
    pub alphas: Vec<f64>,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub hd: HdOptions,
    pub bm_plugin: BmPlugin,
    pub timing: bool,
    pub compare_tau2b: bool,
    /// Effective key/value pairs after overrides, for echoing.
    pub echo: BTreeMap<String, String>,
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", k + 1)))?);
    }
    Ok(out)
}

/// Parses a single `key=value` assignment.
pub fn parse_assignment(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key = value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

struct Lookup<'a>(&'a BTreeMap<String, String>);

impl Lookup<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str, context: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("{key} is required for {context}")))
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "1" | "yes" | "on") => Ok(true),
            Some("false" | "0" | "no" | "off") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
        }
    }
}

impl RunConfig {
    /// Reads a config file (if any) and applies overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::from_pairs(pairs)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
            map.insert(k, v);
        }
        let l = Lookup(&map);

        let population = match l.get("population.path") {
            Some(p) => PopulationSource::File(PathBuf::from(p)),
            None => {
                let d = SynthParams::default();
                let params = SynthParams {
                    n: l.parse("population.synthetic.n")?.unwrap_or(d.n),
                    p: l.parse("population.synthetic.p")?.unwrap_or(d.p),
                    coefficients: match l.get("population.synthetic.coefficients") {
                        Some(v) => list(v)
                            .iter()
                            .map(|c| {
                                c.parse::<f64>().map_err(|_| {
                                    Error::Config(format!("population.synthetic.coefficients: cannot parse {c:?}"))
                                })
                            })
                            .collect::<Result<_>>()?,
                        None => d.coefficients,
                    },
                    noise_scale: l.parse("population.synthetic.noise")?.unwrap_or(d.noise_scale),
                    family: l
                        .get("population.synthetic.family")
                        .map(OutcomeFamily::parse)
                        .transpose()?
                        .unwrap_or(d.family),
                    strata: l.parse("population.synthetic.strata")?.unwrap_or(d.strata),
                    clusters: l.parse("population.synthetic.clusters")?.unwrap_or(d.clusters),
                    size_measure: l.flag("population.synthetic.size_measure", d.size_measure)?,
                };
                PopulationSource::Synthetic {
                    params,
                    seed: l.parse("population.seed")?.unwrap_or(0),
                }
            }
        };

        let dm = ColumnMapping::default();
        let mapping = ColumnMapping {
            id: l.get("columns.id").map(str::to_string),
            outcome: l.get("columns.outcome").map(str::to_string).unwrap_or(dm.outcome),
            covariates: l.get("columns.covariates").map(list).unwrap_or_default(),
            intercept: l.flag("columns.intercept", dm.intercept)?,
            stratum: l.get("columns.stratum").map(str::to_string),
            cluster: l.get("columns.cluster").map(str::to_string),
            size_measure: l.get("columns.size").map(str::to_string),
            log_outcome: l.flag("options.log_outcome", false)?,
        };

        let design = match l.get("design.variant") {
            None => None,
            Some(v) => Some(match v {
                "bernoulli" => DesignSpec::Bernoulli {
                    expected_n: l.required("design.expected_n", "bernoulli")?,
                },
                "poisson" => DesignSpec::Poisson {
                    expected_n: l.required("design.expected_n", "poisson")?,
                },
                "srswor" => DesignSpec::Srswor {
                    n: l.required("design.n", "srswor")?,
                },
                "stratified" => DesignSpec::Stratified {
                    n_per_stratum: l.required("design.n_per_stratum", "stratified")?,
                },
                "two_stage_cluster" => DesignSpec::TwoStageCluster {
                    n_clusters: l.required("design.n_clusters", "two_stage_cluster")?,
                    n_units_per_cluster: l.required("design.n_units_per_cluster", "two_stage_cluster")?,
                },
                other => return Err(Error::InvalidDesign(format!("unknown design variant {other:?}"))),
            }),
        };

        let methods = match l.0.get("sim.methods") {
            Some(v) => list(v).iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>>>()?,
            None => Method::ALL.to_vec(),
        };
        let alphas = match l.get("sim.alphas") {
            Some(v) => list(v)
                .iter()
                .map(|a| a.parse::<f64>().map_err(|_| Error::Config(format!("sim.alphas: cannot parse {a:?}"))))
                .collect::<Result<Vec<_>>>()?,
            None => vec![0.8, 0.9, 0.95],
        };
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, 1)")));
        }
        let replicates = l.parse("sim.replicates")?.unwrap_or(1000);
        if replicates < 1 {
            return Err(Error::Config("sim.replicates must be at least 1".into()));
        }

        let normalizer = match l.get("options.normalizer") {
            None | Some("inverse_probability") => Normalizer::InverseProbability,
            Some("pair_count") => Normalizer::PairCount,
            Some(v) => return Err(Error::Config(format!("options.normalizer: unknown value {v:?}"))),
        };
        let bm_plugin = match l.get("options.bm_plugin") {
            None | Some("ht_conditional") => BmPlugin::HtConditional,
            Some("kernel_average") => BmPlugin::KernelAverage,
            Some(v) => return Err(Error::Config(format!("options.bm_plugin: unknown value {v:?}"))),
        };

        Ok(RunConfig {
            population,
            mapping,
            design,
            sample_path: l.get("sample.path").map(PathBuf::from),
            methods,
            replicates,
            master_seed: l.parse("sim.seed")?.unwrap_or(0),
            alphas,
            output_dir: l.get("output.dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out")),
            threads: l.parse("sim.threads")?,
            hd: HdOptions {
                include_tau2b: l.flag("options.include_tau2b", false)?,
                fast: l.flag("options.fast_tau2a", true)?,
                normalizer,
            },
            bm_plugin,
            timing: l.flag("options.timing", false)?,
            compare_tau2b: l.flag("options.compare_tau2b", false)?,
            echo: map,
        })
    }

    pub fn require_design(&self) -> Result<&DesignSpec> {
        self.design
            .as_ref()
            .ok_or_else(|| Error::Config("design.variant is required".into()))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            design: self.require_design()?.clone(),
            replicates: self.replicates,
            methods: self.methods.clone(),
            master_seed: self.master_seed,
            threads: self.threads,
            hd: self.hd,
            bm_plugin: self.bm_plugin,
            timing: self.timing,
            compare_tau2b: self.compare_tau2b,
        })
    }
}
