//! Monte Carlo replication harness: repeated sampling from a fixed frame,
//! per-replicate point and variance estimates, variance ratios against the
//! empirical variance, and normal-theory interval coverage.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classicvar::{asymptotic_variance, ij_bm_variance, BmPlugin};
use crate::designs::{compute_inclusion_probs, draw_sample, DesignSpec};
use crate::error::{Error, ErrorKind, Result};
use crate::frame::{InclusionProbs, Population};
use crate::greg::{GregFit, PopulationModel};
use crate::hdvar::{HdEstimator, HdOptions};
use crate::kernels::KernelContext;
use crate::rng::replicate_seed;
use crate::sum::csum;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "UVAR_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Asy,
    Hd,
    Ij,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Asy, Method::Hd, Method::Ij];

    pub fn name(self) -> &'static str {
        match self {
            Method::Asy => "asy",
            Method::Hd => "hd",
            Method::Ij => "ij",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim() {
            "asy" => Ok(Method::Asy),
            "hd" => Ok(Method::Hd),
            "ij" => Ok(Method::Ij),
            other => Err(Error::Config(format!("unknown method {other:?} (expected asy, hd or ij)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub design: DesignSpec,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Worker threads; `None` uses all available, capped by `UVAR_THREADS`.
    pub threads: Option<usize>,
    pub hd: HdOptions,
    pub bm_plugin: BmPlugin,
    /// Record per-method wall times. Off keeps outputs reproducible.
    pub timing: bool,
    /// Also record the HD estimate with the other `tau_2b` setting.
    pub compare_tau2b: bool,
}

impl SimConfig {
    pub fn new(design: DesignSpec, replicates: usize, master_seed: u64) -> Self {
        SimConfig {
            design,
            replicates,
            methods: Method::ALL.to_vec(),
            master_seed,
            threads: None,
            hd: HdOptions::default(),
            bm_plugin: BmPlugin::default(),
            timing: false,
            compare_tau2b: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub n: usize,
    pub a_hat: Option<f64>,
    pub v_asy: Option<f64>,
    pub v_hd: Option<f64>,
    pub v_ij: Option<f64>,
    /// HD estimate under the opposite `include_tau2b` setting.
    pub v_hd_alt: Option<f64>,
    pub t_asy_s: Option<f64>,
    pub t_hd_s: Option<f64>,
    pub t_ij_s: Option<f64>,
    pub skipped_reason: Option<String>,
}

impl ReplicateRecord {
    pub fn is_skipped(&self) -> bool {
        self.skipped_reason.is_some()
    }

    pub fn variance(&self, m: Method) -> Option<f64> {
        match m {
            Method::Asy => self.v_asy,
            Method::Hd => self.v_hd,
            Method::Ij => self.v_ij,
        }
    }

    pub fn time(&self, m: Method) -> Option<f64> {
        match m {
            Method::Asy => self.t_asy_s,
            Method::Hd => self.t_hd_s,
            Method::Ij => self.t_ij_s,
        }
    }

    fn skipped(replicate: usize, seed: u64, n: usize, reason: String) -> Self {
        ReplicateRecord {
            replicate,
            seed,
            n,
            a_hat: None,
            v_asy: None,
            v_hd: None,
            v_ij: None,
            v_hd_alt: None,
            t_asy_s: None,
            t_hd_s: None,
            t_ij_s: None,
            skipped_reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    /// Population mean, the estimation target.
    pub target: f64,
    pub methods: Vec<Method>,
    pub records: Vec<ReplicateRecord>,
}

impl ReplicationResult {
    pub fn effective(&self) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(|r| !r.is_skipped())
    }

    pub fn skipped(&self) -> usize {
        self.records.iter().filter(|r| r.is_skipped()).count()
    }
}

/// Number of worker threads after applying `UVAR_THREADS`.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut t = requested.unwrap_or(avail).max(1);
    if let Some(cap) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if cap > 0 {
            t = t.min(cap);
        }
    }
    t
}

fn timed<T>(on: bool, f: impl FnOnce() -> Result<T>) -> Result<(T, Option<f64>)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, on.then(|| start.elapsed().as_secs_f64())))
}

struct Shared<'a> {
    pop: &'a Population,
    probs: &'a InclusionProbs,
    model: &'a PopulationModel,
    config: &'a SimConfig,
}

fn one_replicate(sh: &Shared<'_>, r: usize) -> Result<ReplicateRecord> {
    let cfg = sh.config;
    let seed = replicate_seed(cfg.master_seed, r as u64);
    let sample = draw_sample(&cfg.design, sh.pop, sh.probs, seed)?;
    let n = sample.len();
    if n == 0 {
        log::debug!("replicate {r}: empty sample");
        return Ok(ReplicateRecord::skipped(r, seed, n, "empty_sample".into()));
    }
    let outcome = (|| -> Result<ReplicateRecord> {
        let ctx = KernelContext::with_model(sh.model, sh.pop, sh.probs, &sample)?;
        let mut rec = ReplicateRecord {
            replicate: r,
            seed,
            n,
            a_hat: Some(ctx.a_hat()),
            v_asy: None,
            v_hd: None,
            v_ij: None,
            v_hd_alt: None,
            t_asy_s: None,
            t_hd_s: None,
            t_ij_s: None,
            skipped_reason: None,
        };
        for &m in &cfg.methods {
            match m {
                Method::Asy => {
                    let (v, t) = timed(cfg.timing, || {
                        let fit = GregFit::from_model(sh.model, sh.pop, &sample, sh.probs);
                        asymptotic_variance(sh.pop, &sample, sh.probs, &fit)
                    })?;
                    rec.v_asy = Some(v);
                    rec.t_asy_s = t;
                }
                Method::Hd => {
                    let (est, t) = timed(cfg.timing, || {
                        let est = HdEstimator::new(&ctx, cfg.hd.normalizer)?;
                        let rep = est.report(cfg.hd)?;
                        Ok((rep, est))
                    })?;
                    let (rep, est) = est;
                    rec.v_hd = Some(rep.hd_variance);
                    rec.t_hd_s = t;
                    if cfg.compare_tau2b {
                        rec.v_hd_alt = Some(match rep.tau2b_hat {
                            Some(_) => rep.variance_excluding_tau2b(),
                            None => {
                                let mut opts = cfg.hd;
                                opts.include_tau2b = true;
                                est.report(opts)?.hd_variance
                            }
                        });
                    }
                }
                Method::Ij => {
                    let (v, t) = timed(cfg.timing, || ij_bm_variance(&ctx, cfg.bm_plugin))?;
                    rec.v_ij = Some(v.variance);
                    rec.t_ij_s = t;
                }
            }
        }
        Ok(rec)
    })();
    match outcome {
        Ok(rec) => Ok(rec),
        Err(e) if e.kind() == ErrorKind::Numerical => {
            log::debug!("replicate {r}: {e}");
            Ok(ReplicateRecord::skipped(r, seed, n, e.to_string()))
        }
        Err(e) => Err(e),
    }
}

/// Runs `config.replicates` independent replicates. Replicate `r` uses seed
/// `replicate_seed(master_seed, r)`, so the output does not depend on the
/// number of threads.
pub fn run_replications(pop: &Population, config: &SimConfig) -> Result<ReplicationResult> {
    if config.replicates < 2 {
        return Err(Error::Config(format!("replicates must be at least 2, got {}", config.replicates)));
    }
    config.design.validate(pop)?;
    let probs = compute_inclusion_probs(&config.design, pop)?;
    let model = PopulationModel::new(pop)?;
    let sh = Shared {
        pop,
        probs: &probs,
        model: &model,
        config,
    };
    let threads = resolve_threads(config.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<ReplicateRecord> = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| one_replicate(&sh, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let skipped = records.iter().filter(|r| r.is_skipped()).count();
    if skipped == records.len() {
        return Err(Error::AllSkipped(skipped));
    }
    if skipped > 0 {
        log::info!("{skipped} of {} replicates skipped", records.len());
    }
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    Ok(ReplicationResult {
        target: pop.mean(),
        methods,
        records,
    })
}

/// `Phi^{-1}(p)`: Acklam's rational approximation followed by one Newton step
/// on `Phi(x) = erfc(-x/sqrt 2)/2`. Upper-half arguments are reflected so the
/// refinement always runs in the accurate lower tail.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if p > 0.5 {
        return Ok(-normal_quantile(1.0 - p)?);
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let cdf = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(x - (cdf - p) / pdf)
}

/// Interval half-width multiplier for two-sided level `alpha`.
pub fn two_sided_multiplier(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::ProbabilityOutOfRange(alpha));
    }
    normal_quantile(0.5 + 0.5 * alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    /// `v^(r) / v_emp`; `None` when `v_emp = 0`.
    pub ratios: Option<Vec<f64>>,
    pub median_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
    /// `(alpha, coverage)`.
    pub coverage: Vec<(f64, f64)>,
    /// `(min, max)` wall time in seconds when timing was recorded.
    pub runtime_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub r_eff: usize,
    pub skipped: usize,
    pub target: f64,
    pub mean_a_hat: f64,
    pub v_emp: f64,
    pub methods: Vec<MethodSummary>,
    /// Coverage of `a_hat +- q sqrt(v_emp)`.
    pub empirical_coverage: Vec<(f64, f64)>,
    /// `|v_hd - v_hd_alt| / v_hd` per replicate, when recorded.
    pub tau2b_rel_diff: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub alpha: Option<f64>,
    pub value: f64,
}

impl Summary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Long-format rows, `(method, metric, alpha, value)`.
    pub fn rows(&self) -> Vec<SummaryRow> {
        let row = |method: &str, metric: &str, alpha: Option<f64>, value: f64| SummaryRow {
            method: method.into(),
            metric: metric.into(),
            alpha,
            value,
        };
        let mut out = vec![
            row("all", "r_eff", None, self.r_eff as f64),
            row("all", "skipped", None, self.skipped as f64),
            row("all", "target", None, self.target),
            row("all", "mean_a_hat", None, self.mean_a_hat),
            row("all", "v_emp", None, self.v_emp),
        ];
        for &(a, c) in &self.empirical_coverage {
            out.push(row("emp", "coverage", Some(a), c));
        }
        for ms in &self.methods {
            let name = ms.method.name();
            out.push(row(name, "ratio_median", None, ms.median_ratio.unwrap_or(f64::NAN)));
            out.push(row(name, "ratio_mean", None, ms.mean_ratio.unwrap_or(f64::NAN)));
            for &(a, c) in &ms.coverage {
                out.push(row(name, "coverage", Some(a), c));
            }
            if let Some((lo, hi)) = ms.runtime_range {
                out.push(row(name, "runtime_min_s", None, lo));
                out.push(row(name, "runtime_max_s", None, hi));
            }
        }
        if let Some(d) = &self.tau2b_rel_diff {
            out.push(row("hd", "tau2b_rel_diff_median", None, median(d)));
            out.push(row("hd", "tau2b_rel_diff_q95", None, quantile(d, 0.95)));
            out.push(row("hd", "tau2b_rel_diff_max", None, d.iter().copied().fold(0.0, f64::max)));
        }
        out
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn coverage_of(a_hats: &[f64], half_widths: impl Iterator<Item = f64>, target: f64) -> f64 {
    let hits = a_hats
        .iter()
        .zip(half_widths)
        .filter(|(a, h)| (*a - target).abs() <= *h)
        .count();
    hits as f64 / a_hats.len() as f64
}

/// Variance ratios and coverage over the non-skipped replicates.
pub fn summarize(result: &ReplicationResult, alphas: &[f64]) -> Result<Summary> {
    let eff: Vec<&ReplicateRecord> = result.effective().collect();
    if eff.len() < 2 {
        return Err(Error::TooFewUnits(format!(
            "summary needs at least two effective replicates, got {}",
            eff.len()
        )));
    }
    let multipliers: Vec<f64> = alphas.iter().map(|&a| two_sided_multiplier(a)).collect::<Result<_>>()?;
    let a_hats: Vec<f64> = eff.iter().map(|r| r.a_hat.expect("effective replicate has an estimate")).collect();
    let r_eff = a_hats.len();
    let mean_a_hat = csum(a_hats.iter().copied()) / r_eff as f64;
    let v_emp = csum(a_hats.iter().map(|a| (a - mean_a_hat) * (a - mean_a_hat))) / (r_eff - 1) as f64;
    let target = result.target;

    let empirical_coverage = alphas
        .iter()
        .zip(&multipliers)
        .map(|(&a, &z)| (a, coverage_of(&a_hats, std::iter::repeat(z * v_emp.sqrt()), target)))
        .collect();

    let mut methods = Vec::new();
    for &m in &result.methods {
        let v: Vec<f64> = eff
            .iter()
            .map(|r| r.variance(m).ok_or_else(|| Error::Config(format!("method {} missing from replicate {}", m.name(), r.replicate))))
            .collect::<Result<_>>()?;
        let ratios = (v_emp > 0.0).then(|| v.iter().map(|x| x / v_emp).collect::<Vec<_>>());
        let coverage = alphas
            .iter()
            .zip(&multipliers)
            .map(|(&a, &z)| (a, coverage_of(&a_hats, v.iter().map(|x| z * x.sqrt()), target)))
            .collect();
        let times: Vec<f64> = eff.iter().filter_map(|r| r.time(m)).collect();
        let runtime_range = (!times.is_empty()).then(|| {
            (
                times.iter().copied().fold(f64::INFINITY, f64::min),
                times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        });
        methods.push(MethodSummary {
            method: m,
            median_ratio: ratios.as_deref().map(median),
            mean_ratio: ratios.as_ref().map(|r| csum(r.iter().copied()) / r.len() as f64),
            ratios,
            coverage,
            runtime_range,
        });
    }

    let tau2b_rel_diff = eff
        .iter()
        .map(|r| match (r.v_hd, r.v_hd_alt) {
            (Some(a), Some(b)) => Some(if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) }),
            _ => None,
        })
        .collect::<Option<Vec<f64>>>();

    Ok(Summary {
        r_eff,
        skipped: result.skipped(),
        target,
        mean_a_hat,
        v_emp,
        methods,
        empirical_coverage,
        tau2b_rel_diff,
    })
}
