//! Exhaustive enumeration over all `2^N` samples of an independent-indicator
//! design. Gives exact moments of any sample statistic and the exact
//! H-decomposition of the GREG estimate.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{InclusionProbs, Population, Sample};
use crate::greg::{estimate_greg, estimate_ht, PopulationModel};
use crate::hdvar::{HdEstimator, HdOptions, Normalizer};
use crate::kernels::KernelContext;
use crate::sum::{csum, NeumaierSum};

pub const ORACLE_MAX_N: usize = 20;
/// Largest number of subsets the SRSWOR enumerator visits.
pub const SRSWOR_MAX_SUBSETS: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub total_probability: f64,
}

fn check_enumerable(pop: &Population, probs: &InclusionProbs) -> Result<()> {
    if probs.len() != pop.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities for {} units",
            probs.len(),
            pop.len()
        )));
    }
    if pop.len() > ORACLE_MAX_N {
        return Err(Error::TooLarge(format!(
            "exhaustive enumeration is capped at N = {ORACLE_MAX_N}, got {}",
            pop.len()
        )));
    }
    if !probs.is_independent() {
        return Err(Error::NonIndependentDesign);
    }
    Ok(())
}

/// `prod_i pi_i^{I_i} (1 - pi_i)^{1 - I_i}` for the indicator bit mask.
pub fn sample_probability(probs: &InclusionProbs, mask: u32) -> f64 {
    (0..probs.len())
        .map(|i| {
            let p = probs.pi(i);
            if mask >> i & 1 == 1 {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

pub fn mask_sample(mask: u32, n: usize) -> Sample {
    let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
    Sample::new(idx, n).expect("mask indices are sorted and in range")
}

/// Evaluates `f` on every sample with positive probability, in mask order.
fn enumerate_map<T, F>(n: usize, probs: &InclusionProbs, f: F) -> Result<Vec<(f64, T)>>
where
    T: Send,
    F: Fn(&Sample) -> Result<T> + Sync,
{
    let out: Vec<Option<(f64, T)>> = (0u32..1u32 << n)
        .into_par_iter()
        .map(|mask| {
            let p = sample_probability(probs, mask);
            if p == 0.0 {
                return Ok(None);
            }
            f(&mask_sample(mask, n)).map(|v| Some((p, v)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().flatten().collect())
}

/// Exact `E[stat]` and `Var(stat)` over the design.
pub fn enumerate_statistic<F>(pop: &Population, probs: &InclusionProbs, stat: F) -> Result<Moments>
where
    F: Fn(&Sample) -> Result<f64> + Sync,
{
    check_enumerable(pop, probs)?;
    let vals = enumerate_map(pop.len(), probs, stat)?;
    Ok(moments(&vals))
}

fn moments(vals: &[(f64, f64)]) -> Moments {
    let mean = csum(vals.iter().map(|(p, v)| p * v));
    let variance = csum(vals.iter().map(|(p, v)| p * (v - mean) * (v - mean)));
    Moments {
        mean,
        variance,
        total_probability: csum(vals.iter().map(|(p, _)| *p)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub exact_mean: f64,
    pub exact_variance: f64,
    /// `E[a]` as the average of the pair kernel means.
    pub theta: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub omega12: f64,
    /// `tau_1` from the conditional means alone, no enumeration.
    pub tau1_closed_form: f64,
    /// `theta_ij`, row-major `N x N`, zero diagonal.
    pub theta_table: Vec<f64>,
    /// `theta'_i`.
    pub theta_bar_table: Vec<f64>,
    /// `phi'_i(I_i = 1)`.
    pub phi_bar_observed: Vec<f64>,
    /// `phi'_i(I_i = 0)`.
    pub phi_bar_unobserved: Vec<f64>,
    /// `phi_{i,j}(I_i = 1)`, row-major, zero diagonal.
    pub phi_observed_table: Vec<f64>,
    pub identity_residual: f64,
    /// `max_S |a(S) - theta - 2 H_1(S) - H_2(S)|`.
    pub reconstruction_residual: f64,
    pub max_abs_mean_h1: f64,
    pub max_abs_mean_h2: f64,
    pub total_probability: f64,
    /// `max |h_U|` over pairs and cases; scale for absolute tolerances.
    pub kernel_scale: f64,
    pi: Vec<f64>,
}

impl OracleReport {
    /// Exact bias of the plug-in `tau_1` estimator,
    /// `(1/N^2) sum_i [1/c_i^2 sum_{j != i} (1-pi_j)/pi_j (phi_ij - theta_ij)^2] pi_i/(1-pi_i)`.
    pub fn tau1_bias(&self, normalizer: Normalizer) -> Result<f64> {
        let n = self.n;
        let nf = n as f64;
        let mut acc = NeumaierSum::new();
        for i in 0..n {
            let pi = self.pi[i];
            if pi >= 1.0 {
                return Err(Error::CertaintyUnit(i));
            }
            let c = normalizer.value(n, pi);
            if !(c > 0.0) {
                return Err(Error::NonPositiveNormalizer { unit: i, n, pi });
            }
            let inner = csum((0..n).filter(|&j| j != i).map(|j| {
                let pj = self.pi[j];
                let d = self.phi_observed_table[i * n + j] - self.theta_table[i * n + j];
                (1.0 - pj) / pj * d * d
            }));
            acc += inner / (c * c) * pi / (1.0 - pi);
        }
        Ok(acc.value() / (nf * nf))
    }

    /// `max(Var(a), 1e-30)`, the scale the identity residual is judged against.
    pub fn variance_scale(&self) -> f64 {
        self.exact_variance.max(1e-30)
    }
}

#[inline]
fn case(ii: bool, ij: bool) -> usize {
    2 * ii as usize + ij as usize
}

/// Exact H-decomposition components of the GREG estimate.
pub fn exact_h_components(pop: &Population, probs: &InclusionProbs) -> Result<OracleReport> {
    check_enumerable(pop, probs)?;
    let n = pop.len();
    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let model = PopulationModel::new(pop)?;
    let census = Sample::census(n);
    let ctx = KernelContext::with_model(&model, pop, probs, &census)?;
    let pi: Vec<f64> = probs.first_order().to_vec();
    let prob = |i: usize, on: bool| if on { pi[i] } else { 1.0 - pi[i] };

    // h_U for each ordered pair and indicator case.
    let mut hu = vec![[0.0f64; 4]; n * n];
    let mut kernel_scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for (ii, ij) in [(false, false), (false, true), (true, false), (true, true)] {
                let v = ctx.h_u(i, j, ii, ij)?;
                hu[i * n + j][case(ii, ij)] = v;
                kernel_scale = kernel_scale.max(v.abs());
            }
        }
    }

    let mut theta_table = vec![0.0; n * n];
    let mut phi_obs_table = vec![0.0; n * n];
    let mut phi_unobs_table = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let h = &hu[i * n + j];
            let mut th = 0.0;
            for ii in [false, true] {
                for ij in [false, true] {
                    th += prob(i, ii) * prob(j, ij) * h[case(ii, ij)];
                }
            }
            theta_table[i * n + j] = th;
            phi_obs_table[i * n + j] = pi[j] * h[case(true, true)] + (1.0 - pi[j]) * h[case(true, false)];
            phi_unobs_table[i * n + j] = pi[j] * h[case(false, true)] + (1.0 - pi[j]) * h[case(false, false)];
        }
    }
    let row_mean = |t: &[f64], i: usize| csum((0..n).filter(|&j| j != i).map(|j| t[i * n + j])) / (nf - 1.0);
    let theta_bar: Vec<f64> = (0..n).map(|i| row_mean(&theta_table, i)).collect();
    let phi_obs: Vec<f64> = (0..n).map(|i| row_mean(&phi_obs_table, i)).collect();
    let phi_unobs: Vec<f64> = (0..n).map(|i| row_mean(&phi_unobs_table, i)).collect();
    let theta = csum((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| theta_table[i * n + j])) / pairs;

    let h1 = |i: usize, on: bool| if on { phi_obs[i] } else { phi_unobs[i] } - theta_bar[i];
    let h2 = |i: usize, j: usize, ii: bool, ij: bool| {
        hu[i * n + j][case(ii, ij)] - h1(i, ii) - h1(j, ij) - theta_table[i * n + j]
    };

    let mut max_abs_mean_h1: f64 = 0.0;
    for i in 0..n {
        let m = pi[i] * h1(i, true) + (1.0 - pi[i]) * h1(i, false);
        max_abs_mean_h1 = max_abs_mean_h1.max(m.abs());
    }
    let mut max_abs_mean_h2: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut m = 0.0;
            for ii in [false, true] {
                for ij in [false, true] {
                    m += prob(i, ii) * prob(j, ij) * h2(i, j, ii, ij);
                }
            }
            max_abs_mean_h2 = max_abs_mean_h2.max(m.abs());
        }
    }

    // (a, H1, H2, reconstruction residual) per sample.
    let per_sample = enumerate_map(n, probs, |s| {
        let a = estimate_greg(pop, s, probs)?;
        let ind = s.indicators();
        let h1_sum = csum((0..n).map(|i| h1(i, ind[i])));
        let h2_sum = csum((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| h2(i, j, ind[i], ind[j])));
        let big_h1 = h1_sum / nf;
        let big_h2 = h2_sum / pairs;
        Ok((a, big_h1, big_h2, (a - theta - 2.0 * big_h1 - big_h2).abs()))
    })?;

    let total_probability = csum(per_sample.iter().map(|(p, _)| *p));
    let mean_of = |k: fn(&(f64, f64, f64, f64)) -> f64| csum(per_sample.iter().map(|(p, v)| p * k(v)));
    let ea = mean_of(|v| v.0);
    let eh1 = mean_of(|v| v.1);
    let eh2 = mean_of(|v| v.2);
    let var_a = csum(per_sample.iter().map(|(p, v)| p * (v.0 - ea).powi(2)));
    let tau1 = csum(per_sample.iter().map(|(p, v)| p * (v.1 - eh1).powi(2)));
    let tau2 = csum(per_sample.iter().map(|(p, v)| p * (v.2 - eh2).powi(2)));
    let omega12 = csum(per_sample.iter().map(|(p, v)| p * (v.1 - eh1) * (v.2 - eh2)));
    let reconstruction_residual = per_sample.iter().map(|(_, v)| v.3).fold(0.0, f64::max);

    let tau1_closed_form = csum((0..n).map(|i| {
        let d1 = phi_obs[i] - theta_bar[i];
        let d0 = phi_unobs[i] - theta_bar[i];
        d1 * d1 * pi[i] + d0 * d0 * (1.0 - pi[i])
    })) / (nf * nf);

    Ok(OracleReport {
        n,
        exact_mean: ea,
        exact_variance: var_a,
        theta,
        tau1,
        tau2,
        omega12,
        tau1_closed_form,
        theta_table,
        theta_bar_table: theta_bar,
        phi_bar_observed: phi_obs,
        phi_bar_unobserved: phi_unobs,
        phi_observed_table: phi_obs_table,
        identity_residual: (var_a - 4.0 * tau1 - tau2 - 4.0 * omega12).abs(),
        reconstruction_residual,
        max_abs_mean_h1,
        max_abs_mean_h2,
        total_probability,
        kernel_scale,
        pi,
    })
}

/// Sample-level estimators whose exact expectation can be taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEstimator {
    Ht,
    Greg,
    Tau1Hat(Normalizer),
    Tau1Bias(Normalizer),
    Tau2aHat(Normalizer),
    Tau2aBias(Normalizer),
    Tau2bHat(Normalizer),
    HdVariance(HdOptions),
}

fn evaluate(
    est: SampleEstimator,
    model: &PopulationModel,
    pop: &Population,
    probs: &InclusionProbs,
    s: &Sample,
) -> Result<f64> {
    use SampleEstimator::*;
    match est {
        Ht => Ok(estimate_ht(pop, s, probs)),
        Greg => estimate_greg(pop, s, probs),
        _ => {
            let ctx = KernelContext::with_model(model, pop, probs, s)?;
            let hd = |nm| HdEstimator::new(&ctx, nm);
            match est {
                Tau1Hat(nm) => Ok(hd(nm)?.tau1().tau1_hat),
                Tau1Bias(nm) => Ok(hd(nm)?.tau1().bias_hat),
                Tau2aHat(nm) => Ok(hd(nm)?.tau2a_fast()),
                Tau2aBias(nm) => Ok(hd(nm)?.tau2a_bias()),
                Tau2bHat(nm) => Ok(hd(nm)?.tau2b()),
                HdVariance(opts) => Ok(hd(opts.normalizer)?.report(opts)?.hd_variance),
                Ht | Greg => unreachable!(),
            }
        }
    }
}

/// Exact `E[estimator]` over all samples.
pub fn exact_estimator_expectation(
    pop: &Population,
    probs: &InclusionProbs,
    estimator: SampleEstimator,
) -> Result<f64> {
    check_enumerable(pop, probs)?;
    let model = PopulationModel::new(pop)?;
    let vals = enumerate_map(pop.len(), probs, |s| evaluate(estimator, &model, pop, probs, s))?;
    Ok(moments(&vals).mean)
}

/// First- and second-order inclusion probabilities of SRSWOR(n of N) by
/// counting subsets. `pij` is row-major with `pi_i` on the diagonal.
pub fn enumerate_srswor(n: usize, big_n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > big_n {
        return Err(Error::InvalidDesign(format!("SRSWOR needs 1 <= n <= N, got n = {n}, N = {big_n}")));
    }
    let total = binomial(big_n as u64, n as u64);
    if total > SRSWOR_MAX_SUBSETS {
        return Err(Error::TooLarge(format!("{total} subsets exceed the cap of {SRSWOR_MAX_SUBSETS}")));
    }
    let mut count = vec![0u64; big_n * big_n];
    let mut comb: Vec<usize> = (0..n).collect();
    loop {
        for &i in &comb {
            for &j in &comb {
                count[i * big_n + j] += 1;
            }
        }
        // Advance to the next combination in lexicographic order.
        let mut k = n;
        while k > 0 && comb[k - 1] == big_n - n + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        comb[k - 1] += 1;
        for m in k..n {
            comb[m] = comb[m - 1] + 1;
        }
    }
    let tf = total as f64;
    let pij: Vec<f64> = count.iter().map(|&c| c as f64 / tf).collect();
    let pi = (0..big_n).map(|i| pij[i * big_n + i]).collect();
    Ok((pi, pij))
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{compute_inclusion_probs, DesignSpec};
    use crate::frame::fixtures::f1;
    use crate::hdvar::PhiStatus;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn small_frame() -> (Population, InclusionProbs) {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, (i as f64 * 0.9).cos()]).collect();
        let y = vec![3.0, 1.5, 4.2, 2.2, 5.1, 0.7];
        let pop = Population::new(y, rows).unwrap();
        let probs = InclusionProbs::independent(vec![0.35, 0.6, 0.5, 0.72, 0.45, 0.55]).unwrap();
        (pop, probs)
    }

    #[test]
    fn f1_ht_and_constant() {
        let (pop, probs) = f1();
        let m = enumerate_statistic(&pop, &probs, |s| Ok(estimate_ht(&pop, s, &probs))).unwrap();
        assert!((m.mean - 4.0).abs() < 1e-12);
        assert!((m.total_probability - 1.0).abs() < 1e-12);
        let c = enumerate_statistic(&pop, &probs, |_| Ok(2.5)).unwrap();
        assert!((c.mean - 2.5).abs() < 1e-14);
        assert!(c.variance.abs() < 1e-14);
    }

    #[test]
    fn f1_identity_and_zero_omega() {
        let (pop, probs) = f1();
        let r = exact_h_components(&pop, &probs).unwrap();
        assert!(r.identity_residual <= 1e-12 * r.variance_scale());
        assert!(r.omega12.abs() <= 1e-14 * r.kernel_scale.powi(2).max(1.0));
        assert!((r.tau1 - r.tau1_closed_form).abs() <= 1e-12 * r.tau1.max(1e-300));
        assert!((r.exact_mean - r.theta).abs() <= 1e-12 * r.theta.abs());
        assert!(r.max_abs_mean_h1 <= 1e-12 * r.kernel_scale);
        assert!(r.max_abs_mean_h2 <= 1e-12 * r.kernel_scale);
        assert!(r.reconstruction_residual <= 1e-10 * r.kernel_scale);
    }

    #[test]
    fn zero_outcome_components_vanish() {
        let (pop, probs) = f1();
        let pop = pop.with_outcome(vec![0.0; 3]).unwrap();
        let r = exact_h_components(&pop, &probs).unwrap();
        assert_eq!(r.exact_variance, 0.0);
        assert_eq!(r.tau1, 0.0);
        assert_eq!(r.tau2, 0.0);
        assert_eq!(r.omega12, 0.0);
        assert_eq!(exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Hat(Normalizer::default())).unwrap(), 0.0);
    }

    #[test]
    fn identity_on_six_units() {
        let (pop, probs) = small_frame();
        let r = exact_h_components(&pop, &probs).unwrap();
        assert!(r.identity_residual <= 1e-9 * r.variance_scale());
        let m = enumerate_statistic(&pop, &probs, |s| estimate_greg(&pop, s, &probs)).unwrap();
        assert!(rel(m.variance, r.exact_variance) < 1e-12);
    }

    #[test]
    fn bias_estimator_is_unbiased() {
        let (pop, probs) = small_frame();
        let r = exact_h_components(&pop, &probs).unwrap();
        for nm in [Normalizer::InverseProbability, Normalizer::PairCount] {
            let e = exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Bias(nm)).unwrap();
            assert!(rel(e, r.tau1_bias(nm).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn pair_count_normalizer_gives_exact_inflation() {
        let (pop, probs) = small_frame();
        let r = exact_h_components(&pop, &probs).unwrap();
        let nm = Normalizer::PairCount;
        let e = exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Hat(nm)).unwrap();
        assert!(rel(e, r.tau1 + r.tau1_bias(nm).unwrap()) < 1e-9);
    }

    /// With the `N - 1/pi_i` normalizer the plug-in means are rescaled by
    /// `c_i = (N-1)/(N - 1/pi_i)`, which carries into the expectation.
    #[test]
    fn inverse_probability_normalizer_expectation_closed_form() {
        let (pop, probs) = small_frame();
        let r = exact_h_components(&pop, &probs).unwrap();
        let n = r.n as f64;
        let nm = Normalizer::InverseProbability;
        let scaled = csum((0..r.n).map(|i| {
            let p = probs.pi(i);
            let c = (n - 1.0) / nm.value(r.n, p);
            let d = r.phi_bar_observed[i] - r.theta_bar_table[i];
            p / (1.0 - p) * c * c * d * d
        })) / (n * n);
        let e = exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Hat(nm)).unwrap();
        assert!(rel(e, scaled + r.tau1_bias(nm).unwrap()) < 1e-9);
    }

    #[test]
    fn plug_in_phi_is_unbiased_for_pair_count() {
        let (pop, probs) = small_frame();
        let r = exact_h_components(&pop, &probs).unwrap();
        let model = PopulationModel::new(&pop).unwrap();
        // E[phi_hat'_0(1) | I_0 = 1] over the other units equals phi'_0(1).
        let m = enumerate_statistic(&pop, &probs, |s| {
            let ctx = KernelContext::with_model(&model, &pop, &probs, s)?;
            HdEstimator::new(&ctx, Normalizer::PairCount)?.phi_bar(0, PhiStatus::ForceObserved)
        })
        .unwrap();
        assert!(rel(m.mean, r.phi_bar_observed[0]) < 1e-10);
    }

    #[test]
    fn rejects_large_and_dependent() {
        let rows: Vec<Vec<f64>> = (0..21).map(|_| vec![1.0]).collect();
        let pop = Population::new(vec![1.0; 21], rows).unwrap();
        let probs = InclusionProbs::independent(vec![0.5; 21]).unwrap();
        assert!(matches!(exact_h_components(&pop, &probs), Err(Error::TooLarge(_))));

        let (pop, _) = f1();
        let srs = compute_inclusion_probs(&DesignSpec::Srswor { n: 2 }, &pop).unwrap();
        assert!(matches!(
            enumerate_statistic(&pop, &srs, |_| Ok(0.0)),
            Err(Error::NonIndependentDesign)
        ));
    }

    #[test]
    fn srswor_counts_match_closed_form() {
        let (pi, pij) = enumerate_srswor(3, 7).unwrap();
        for &p in &pi {
            assert!((p - 3.0 / 7.0).abs() < 1e-15);
        }
        assert!((pij[1] - 6.0 / 42.0).abs() < 1e-15);
        let pop = Population::new(vec![1.0; 7], (0..7).map(|_| vec![1.0]).collect()).unwrap();
        let probs = compute_inclusion_probs(&DesignSpec::Srswor { n: 3 }, &pop).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert!((probs.joint(i, j).unwrap() - pij[i * 7 + j]).abs() < 1e-15);
            }
        }
    }
}
