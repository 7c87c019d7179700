//! Synthetic populations with a linear signal.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Population;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFamily {
    /// `y = x' beta + sigma e`.
    LinearGaussian,
    /// `y = exp(x' beta + sigma e)`.
    Lognormal,
}

impl OutcomeFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "linear_gaussian" | "linear-gaussian" | "gaussian" => Ok(OutcomeFamily::LinearGaussian),
            "lognormal" => Ok(OutcomeFamily::Lognormal),
            other => Err(Error::Config(format!("unknown outcome family {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeFamily::LinearGaussian => "linear_gaussian",
            OutcomeFamily::Lognormal => "lognormal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    /// Number of covariates including the leading intercept column.
    pub p: usize,
    /// Length `p`; defaults to `(1, 0.5, 0.5, ..)` when empty.
    pub coefficients: Vec<f64>,
    pub noise_scale: f64,
    pub family: OutcomeFamily,
    /// Number of contiguous strata; 0 for none.
    pub strata: usize,
    /// Number of contiguous clusters; 0 for none.
    pub clusters: usize,
    /// Attach a positive size measure correlated with the first covariate.
    pub size_measure: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n: 2000,
            p: 2,
            coefficients: Vec::new(),
            noise_scale: 1.0,
            family: OutcomeFamily::Lognormal,
            strata: 0,
            clusters: 0,
            size_measure: false,
        }
    }
}

impl SynthParams {
    pub fn resolved_coefficients(&self) -> Vec<f64> {
        if self.coefficients.is_empty() {
            (0..self.p).map(|k| if k == 0 { 1.0 } else { 0.5 }).collect()
        } else {
            self.coefficients.clone()
        }
    }
}

fn block_labels(n: usize, groups: usize, prefix: char) -> Vec<String> {
    let width = groups.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{:0width$}", i * groups / n)).collect()
}

/// Draws a population. Covariate 0 is the intercept; the rest are standard
/// normal. Same parameters and seed give the same population.
pub fn generate_synthetic(params: &SynthParams, seed: u64) -> Result<Population> {
    if params.n < 2 {
        return Err(Error::Config(format!("synthetic N must be at least 2, got {}", params.n)));
    }
    if params.p < 1 {
        return Err(Error::Config("synthetic p must be at least 1".into()));
    }
    let beta = params.resolved_coefficients();
    if beta.len() != params.p {
        return Err(Error::Config(format!(
            "{} coefficients for p = {}",
            beta.len(),
            params.p
        )));
    }
    if !(params.noise_scale >= 0.0) || !params.noise_scale.is_finite() {
        return Err(Error::Config(format!("noise scale must be finite and non-negative, got {}", params.noise_scale)));
    }
    for (name, g) in [("strata", params.strata), ("clusters", params.clusters)] {
        if g > params.n {
            return Err(Error::Config(format!("{g} {name} for {} units", params.n)));
        }
    }

    let mut rng = stream(seed);
    let (n, p) = (params.n, params.p);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(if params.size_measure { n } else { 0 });
    for _ in 0..n {
        let start = x.len();
        x.push(1.0);
        for _ in 1..p {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
        let row = &x[start..];
        let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let e: f64 = rng.sample(StandardNormal);
        let lin = eta + params.noise_scale * e;
        y.push(match params.family {
            OutcomeFamily::LinearGaussian => lin,
            OutcomeFamily::Lognormal => lin.exp(),
        });
        if params.size_measure {
            let u: f64 = rng.sample(StandardNormal);
            let x1 = if p > 1 { row[1] } else { 0.0 };
            size.push((0.5 * x1 + 0.25 * u).exp());
        }
    }
    let mut pop = Population::from_flat(y, x, p)?;
    if params.strata > 0 {
        pop = pop.with_strata(block_labels(n, params.strata, 's'))?;
    }
    if params.clusters > 0 {
        pop = pop.with_clusters(block_labels(n, params.clusters, 'c'))?;
    }
    if params.size_measure {
        pop = pop.with_size_measure(size)?;
    }
    Ok(pop)
}
