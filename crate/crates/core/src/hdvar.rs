//! H-decomposition estimator of the exact variance of the GREG estimate.
//!
//! `Var(a) = 4 tau_1 + tau_2` under independent inclusion. `tau_1` is
//! estimated by a weighted sum of squared differences between the plug-in
//! conditional means `phi'_i(1)` and kernel means `theta'_i` with an
//! estimated upward bias removed; `tau_2` by the plug-in sum `tau_2a` over
//! all pairs with its own bias estimate removed. Both terms are floored at
//! zero. Estimation only touches the sampled pairs, so setup is `O(n^2 p)`
//! and the fast `tau_2a` path is `O(n^2 + N)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{phi_observed_from_cases, theta_from_cases, KernelContext};
use crate::sum::{csum, NeumaierSum};

/// Denominator of the plug-in averages `phi'_i` and `theta'_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `N - 1/pi_i`.
    #[default]
    InverseProbability,
    /// `N - 1`, the expected HT count of the other units.
    PairCount,
}

impl Normalizer {
    #[inline]
    pub fn value(self, n_pop: usize, pi: f64) -> f64 {
        match self {
            Normalizer::InverseProbability => n_pop as f64 - 1.0 / pi,
            Normalizer::PairCount => n_pop as f64 - 1.0,
        }
    }
}

/// Which indicator value `phi'_i` is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiStatus {
    /// The unit's realized indicator.
    Realized,
    /// `I_i = 1` regardless of the sample.
    ForceObserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HdOptions {
    pub include_tau2b: bool,
    pub fast: bool,
    pub normalizer: Normalizer,
}

impl Default for HdOptions {
    fn default() -> Self {
        HdOptions {
            include_tau2b: false,
            fast: true,
            normalizer: Normalizer::default(),
        }
    }
}

/// Wall time of each stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub setup: f64,
    pub tau1: f64,
    pub tau2a: f64,
    pub tau2a_bias: f64,
    pub tau2b: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.setup + self.tau1 + self.tau2a + self.tau2a_bias + self.tau2b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub point_estimate: f64,
    pub tau1_hat: f64,
    pub tau1_bias_hat: f64,
    pub tau1_bcf: f64,
    pub tau1_floored: bool,
    pub tau2a_hat: f64,
    pub tau2a_bias_hat: f64,
    pub tau2b_hat: Option<f64>,
    /// `4/(N^2 (N-1)^2) (tau2a - [tau2b] - b_tau2a)` before the floor.
    pub tau2_hat: f64,
    pub tau2_bcf: f64,
    pub tau2_floored: bool,
    pub hd_variance: f64,
    pub timings: StageTimings,
    #[serde(skip)]
    tau2_scale: f64,
}

impl VarianceReport {
    /// The estimator without the `tau_2b` correction.
    pub fn variance_excluding_tau2b(&self) -> f64 {
        let t2 = (self.tau2_scale * (self.tau2a_hat - self.tau2a_bias_hat)).max(0.0);
        4.0 * self.tau1_bcf + t2
    }

    /// The estimator with the `tau_2b` correction, when it was computed.
    pub fn variance_including_tau2b(&self) -> Option<f64> {
        self.tau2b_hat.map(|b| {
            let t2 = (self.tau2_scale * (self.tau2a_hat - b - self.tau2a_bias_hat)).max(0.0);
            4.0 * self.tau1_bcf + t2
        })
    }
}

/// `(tau1_hat, bias_hat, tau1_bcf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau1 {
    pub tau1_hat: f64,
    pub bias_hat: f64,
    pub tau1_bcf: f64,
}

/// Sampled-pair tables shared by the component estimators.
#[derive(Debug)]
pub struct HdEstimator<'c, 'a> {
    ctx: &'c KernelContext<'a>,
    normalizer: Normalizer,
    sampled: Vec<usize>,
    /// `norm[i]` for every population unit.
    norm: Vec<f64>,
    /// `phi_{1;a,b}(I_a = 1)` for sampled positions, row-major, zero diagonal.
    phi: Vec<f64>,
    /// `h_U(1,1)` for sampled positions, zero diagonal.
    h11: Vec<f64>,
    phi_obs: Vec<f64>,
    theta_bar: Vec<f64>,
    g_sampled_sum: f64,
}

impl<'c, 'a> HdEstimator<'c, 'a> {
    pub fn new(ctx: &'c KernelContext<'a>, normalizer: Normalizer) -> Result<Self> {
        let n_pop = ctx.n_pop();
        let mut norm = Vec::with_capacity(n_pop);
        for i in 0..n_pop {
            let pi = ctx.pi(i);
            if pi >= 1.0 {
                return Err(Error::CertaintyUnit(i));
            }
            let d = normalizer.value(n_pop, pi);
            if !(d > 0.0) {
                return Err(Error::NonPositiveNormalizer { unit: i, n: n_pop, pi });
            }
            norm.push(d);
        }
        let sampled = ctx.sample().indices().to_vec();
        let n = sampled.len();
        let mut h11 = vec![0.0; n * n];
        let mut phi = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let v = ctx.h11(sampled[a], sampled[b]);
                h11[a * n + b] = v;
                h11[b * n + a] = v;
            }
        }
        for a in 0..n {
            let ga = ctx.g(sampled[a]);
            for b in 0..n {
                if a != b {
                    phi[a * n + b] = phi_observed_from_cases(h11[a * n + b], ga, ctx.pi(sampled[b]));
                }
            }
        }
        let mut est = HdEstimator {
            ctx,
            normalizer,
            phi_obs: Vec::new(),
            theta_bar: Vec::new(),
            g_sampled_sum: csum(sampled.iter().map(|&k| ctx.g(k))),
            sampled,
            norm,
            phi,
            h11,
        };
        est.phi_obs = (0..n)
            .map(|a| {
                let i = est.sampled[a];
                csum((0..n).filter(|&b| b != a).map(|b| est.phi[a * n + b] / est.pi_at(b))) / est.norm[i]
            })
            .collect();
        est.theta_bar = (0..n)
            .map(|a| {
                let i = est.sampled[a];
                csum((0..n).filter(|&b| b != a).map(|b| est.theta_at(a, b) / est.pi_at(b))) / est.norm[i]
            })
            .collect();
        Ok(est)
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    #[inline]
    fn pi_at(&self, a: usize) -> f64 {
        self.ctx.pi(self.sampled[a])
    }

    #[inline]
    fn theta_at(&self, a: usize, b: usize) -> f64 {
        let (i, j) = (self.sampled[a], self.sampled[b]);
        theta_from_cases(
            self.h11[a * self.sampled.len() + b],
            self.ctx.g(i),
            self.ctx.g(j),
            self.ctx.pi(i),
            self.ctx.pi(j),
        )
    }

    fn position(&self, i: usize) -> Option<usize> {
        self.sampled.binary_search(&i).ok()
    }

    /// Plug-in estimate of `phi'_{1;i}`.
    pub fn phi_bar(&self, i: usize, status: PhiStatus) -> Result<f64> {
        if i >= self.ctx.n_pop() {
            return Err(Error::UnitOutOfRange { index: i, n: self.ctx.n_pop() });
        }
        match (self.position(i), status) {
            (Some(a), _) => Ok(self.phi_obs[a]),
            (None, PhiStatus::Realized) => Ok(self.g_sampled_sum / self.norm[i]),
            (None, PhiStatus::ForceObserved) => {
                let s = csum(
                    self.sampled
                        .iter()
                        .map(|&j| self.ctx.phi_cond(i, j, true).map(|v| v / self.ctx.pi(j)))
                        .collect::<Result<Vec<_>>>()?,
                );
                Ok(s / self.norm[i])
            }
        }
    }

    /// Plug-in estimate of `theta'_{1;i}`; `i` must be sampled.
    pub fn theta_bar(&self, i: usize) -> Result<f64> {
        self.position(i)
            .map(|a| self.theta_bar[a])
            .ok_or(Error::NotSampled(i))
    }

    /// Realized-status `phi'` for every population unit.
    pub fn phi_bar_all(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.norm.iter().map(|&d| self.g_sampled_sum / d).collect();
        for (a, &i) in self.sampled.iter().enumerate() {
            out[i] = self.phi_obs[a];
        }
        out
    }

    pub fn tau1(&self) -> Tau1 {
        let n = self.sampled.len();
        let nf = self.ctx.n_pop() as f64;
        let mut tau = NeumaierSum::new();
        let mut bias = NeumaierSum::new();
        for a in 0..n {
            let i = self.sampled[a];
            let pi = self.ctx.pi(i);
            let diff = self.phi_obs[a] - self.theta_bar[a];
            tau += diff * diff / (1.0 - pi);
            let inner = csum((0..n).filter(|&b| b != a).map(|b| {
                let pb = self.pi_at(b);
                let d = self.phi[a * n + b] - self.theta_at(a, b);
                (1.0 - pb) / (pb * pb) * d * d
            }));
            bias += inner / (self.norm[i] * self.norm[i]) / (1.0 - pi);
        }
        let tau1_hat = tau.value() / (nf * nf);
        let bias_hat = bias.value() / (nf * nf);
        Tau1 {
            tau1_hat,
            bias_hat,
            tau1_bcf: (tau1_hat - bias_hat).max(0.0),
        }
    }

    /// `sum_{i<j in U} (h_U - phi'_i - phi'_j + a)^2` by direct enumeration of
    /// all `N(N-1)/2` pairs.
    pub fn tau2a_naive(&self) -> Result<f64> {
        let n_pop = self.ctx.n_pop();
        let a_hat = self.ctx.a_hat();
        let phi = self.phi_bar_all();
        let mut acc = NeumaierSum::new();
        for i in 0..n_pop {
            for j in i + 1..n_pop {
                let t = self.ctx.h_u_realized(i, j)? - phi[i] - phi[j] + a_hat;
                acc += t * t;
            }
        }
        Ok(acc.value())
    }

    /// Same sum as [`tau2a_naive`](Self::tau2a_naive) in `O(n^2 + N)`.
    ///
    /// With `d_i = phi'_i - a/2` each pair term is `h_U - d_i - d_j`. Pairs
    /// are split by how many members are sampled. Unsampled units are
    /// centered at their mean `m` (`e_j = d_j - m`) so the two large classes
    /// reduce to sums of non-negative terms:
    ///
    /// * mixed, sampled `a`: `M (g_a - d_a - m)^2 + sum_j e_j^2`
    /// * both unsampled: `(M - 2) sum_j e_j^2 + 2 M (M - 1) m^2`
    pub fn tau2a_fast(&self) -> f64 {
        let n_pop = self.ctx.n_pop();
        let n = self.sampled.len();
        let half_a = 0.5 * self.ctx.a_hat();
        let d_s: Vec<f64> = self.phi_obs.iter().map(|v| v - half_a).collect();

        let mut acc = NeumaierSum::new();
        for a in 0..n {
            for b in a + 1..n {
                let t = self.h11[a * n + b] - d_s[a] - d_s[b];
                acc += t * t;
            }
        }

        let m_count = n_pop - n;
        if m_count > 0 {
            let mut d_u = Vec::with_capacity(m_count);
            let mut next = 0;
            for i in 0..n_pop {
                if next < n && self.sampled[next] == i {
                    next += 1;
                    continue;
                }
                d_u.push(self.g_sampled_sum / self.norm[i] - half_a);
            }
            let mf = m_count as f64;
            let mean = csum(d_u.iter().copied()) / mf;
            let ss = csum(d_u.iter().map(|d| (d - mean) * (d - mean)));
            for a in 0..n {
                let c = self.ctx.g(self.sampled[a]) - d_s[a] - mean;
                acc += mf * c * c;
                acc += ss;
            }
            acc += (mf - 2.0).max(0.0) * ss;
            acc += 2.0 * mf * (mf - 1.0) * mean * mean;
        }
        acc.value()
    }

    /// Estimated upward bias of `tau2a`, over unordered sampled pairs.
    pub fn tau2a_bias(&self) -> f64 {
        let n = self.sampled.len();
        let w: Vec<f64> = (0..n)
            .map(|k| {
                let p = self.pi_at(k);
                (1.0 - p) / (p * p)
            })
            .collect();
        // Row a of `wphi` is w_k * phi_{a,k}; diagonals of phi are zero so
        // k = a and k = b drop out of the dot products.
        let wphi: Vec<f64> = (0..n * n).map(|ak| w[ak % n] * self.phi[ak]).collect();
        let own: Vec<f64> = (0..n)
            .map(|a| dot_rows(&wphi[a * n..(a + 1) * n], &self.phi[a * n..(a + 1) * n]))
            .collect();
        let mut acc = NeumaierSum::new();
        for a in 0..n {
            let (i, row_a) = (self.sampled[a], &wphi[a * n..(a + 1) * n]);
            for b in a + 1..n {
                let j = self.sampled[b];
                let cross = dot_rows(row_a, &self.phi[b * n..(b + 1) * n]);
                let inner = own[a] + own[b] + 2.0 * cross;
                let (da, db) = (self.norm[i], self.norm[j]);
                let f = (da + db) / (da * db);
                acc += f * f * inner / (self.ctx.pi(i) * self.ctx.pi(j));
            }
        }
        acc.value()
    }

    /// `sum_{i<j in S} (theta_ij - theta'_i - theta'_j + a)^2 / (pi_i pi_j)`.
    pub fn tau2b(&self) -> f64 {
        let n = self.sampled.len();
        let a_hat = self.ctx.a_hat();
        let mut acc = NeumaierSum::new();
        for a in 0..n {
            for b in a + 1..n {
                let t = self.theta_at(a, b) - self.theta_bar[a] - self.theta_bar[b] + a_hat;
                acc += t * t / (self.pi_at(a) * self.pi_at(b));
            }
        }
        acc.value()
    }

    pub fn report(&self, options: HdOptions) -> Result<VarianceReport> {
        self.report_with_setup(options, 0.0)
    }

    fn report_with_setup(&self, options: HdOptions, setup: f64) -> Result<VarianceReport> {
        let mut timings = StageTimings { setup, ..Default::default() };

        let t = Instant::now();
        let tau1 = self.tau1();
        timings.tau1 = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let tau2a = if options.fast { self.tau2a_fast() } else { self.tau2a_naive()? };
        timings.tau2a = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let bias2a = self.tau2a_bias();
        timings.tau2a_bias = t.elapsed().as_secs_f64();

        let tau2b = if options.include_tau2b {
            let t = Instant::now();
            let v = self.tau2b();
            timings.tau2b = t.elapsed().as_secs_f64();
            Some(v)
        } else {
            None
        };

        let nf = self.ctx.n_pop() as f64;
        let scale = 4.0 / (nf * nf * (nf - 1.0) * (nf - 1.0));
        let tau2_hat = scale * (tau2a - tau2b.unwrap_or(0.0) - bias2a);
        let tau2_bcf = tau2_hat.max(0.0);
        Ok(VarianceReport {
            point_estimate: self.ctx.a_hat(),
            tau1_hat: tau1.tau1_hat,
            tau1_bias_hat: tau1.bias_hat,
            tau1_bcf: tau1.tau1_bcf,
            tau1_floored: tau1.tau1_hat < tau1.bias_hat,
            tau2a_hat: tau2a,
            tau2a_bias_hat: bias2a,
            tau2b_hat: tau2b,
            tau2_hat,
            tau2_bcf,
            tau2_floored: tau2_hat < 0.0,
            hd_variance: 4.0 * tau1.tau1_bcf + tau2_bcf,
            timings,
            tau2_scale: scale,
        })
    }
}

#[inline]
fn dot_rows(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn phi_bar(ctx: &KernelContext<'_>, i: usize, status: PhiStatus) -> Result<f64> {
    HdEstimator::new(ctx, Normalizer::default())?.phi_bar(i, status)
}

pub fn theta_bar(ctx: &KernelContext<'_>, i: usize) -> Result<f64> {
    HdEstimator::new(ctx, Normalizer::default())?.theta_bar(i)
}

pub fn tau1_hat(ctx: &KernelContext<'_>) -> Result<Tau1> {
    Ok(HdEstimator::new(ctx, Normalizer::default())?.tau1())
}

pub fn tau2a_hat_naive(ctx: &KernelContext<'_>) -> Result<f64> {
    HdEstimator::new(ctx, Normalizer::default())?.tau2a_naive()
}

pub fn tau2a_hat_fast(ctx: &KernelContext<'_>) -> Result<f64> {
    Ok(HdEstimator::new(ctx, Normalizer::default())?.tau2a_fast())
}

pub fn tau2a_bias_hat(ctx: &KernelContext<'_>) -> Result<f64> {
    Ok(HdEstimator::new(ctx, Normalizer::default())?.tau2a_bias())
}

pub fn tau2b_hat(ctx: &KernelContext<'_>) -> Result<f64> {
    Ok(HdEstimator::new(ctx, Normalizer::default())?.tau2b())
}

/// Full H-decomposition variance estimate with per-stage timings.
pub fn hd_variance(ctx: &KernelContext<'_>, options: HdOptions) -> Result<VarianceReport> {
    let t = Instant::now();
    let est = HdEstimator::new(ctx, options.normalizer)?;
    let setup = t.elapsed().as_secs_f64();
    est.report_with_setup(options, setup)
}
