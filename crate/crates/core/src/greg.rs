//! Horvitz-Thompson, difference and GREG point estimators.
//!
//! The GREG working model is `m(x) = x' beta` with
//! `beta = Q * sum_{j in S} x_j y_j / pi_j` and `Q = (sum_{i in U} x_i x_i')^{-1}`.
//! `Q` is a population quantity and never depends on the sample.

use crate::error::{Error, Result};
use crate::frame::{InclusionProbs, Population, Sample};
use crate::linalg::{dot, mat_vec, Cholesky};
use crate::sum::{csum, NeumaierSum};

/// Sample-independent part of the GREG fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    /// `(sum_U x x')^{-1}`, row-major `p x p`.
    pub q: Vec<f64>,
    /// `sum_U x`.
    pub t_x: Vec<f64>,
}

impl PopulationModel {
    pub fn new(pop: &Population) -> Result<Self> {
        let p = pop.n_covariates();
        let mut cross = vec![NeumaierSum::new(); p * p];
        let mut total = vec![NeumaierSum::new(); p];
        for i in 0..pop.len() {
            let x = pop.x_row(i);
            for a in 0..p {
                total[a] += x[a];
                for b in 0..=a {
                    cross[a * p + b] += x[a] * x[b];
                }
            }
        }
        let mut m = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..=a {
                let v = cross[a * p + b].value();
                m[a * p + b] = v;
                m[b * p + a] = v;
            }
        }
        let q = Cholesky::factor(&m, p)?.inverse();
        Ok(PopulationModel {
            q,
            t_x: total.iter().map(NeumaierSum::value).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.t_x.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GregFit {
    pub q: Vec<f64>,
    pub t_x: Vec<f64>,
    /// `sum_{j in S} x_j y_j / pi_j`.
    pub ht_crossmoment: Vec<f64>,
    /// `Q * ht_crossmoment`.
    pub coefficients: Vec<f64>,
}

impl GregFit {
    pub fn from_model(
        model: &PopulationModel,
        pop: &Population,
        sample: &Sample,
        probs: &InclusionProbs,
    ) -> GregFit {
        let p = model.p();
        let mut c = vec![NeumaierSum::new(); p];
        for &j in sample.indices() {
            let w = pop.y()[j] / probs.pi(j);
            for (acc, &xv) in c.iter_mut().zip(pop.x_row(j)) {
                *acc += xv * w;
            }
        }
        let ht_crossmoment: Vec<f64> = c.iter().map(NeumaierSum::value).collect();
        let coefficients = mat_vec(&model.q, &ht_crossmoment);
        GregFit {
            q: model.q.clone(),
            t_x: model.t_x.clone(),
            ht_crossmoment,
            coefficients,
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(x, &self.coefficients)
    }
}

/// `(1/N) sum_{i in S} y_i / pi_i`.
pub fn estimate_ht(pop: &Population, sample: &Sample, probs: &InclusionProbs) -> f64 {
    csum(sample.indices().iter().map(|&i| pop.y()[i] / probs.pi(i))) / pop.len() as f64
}

/// `(1/N^2) sum_{i,j in S} (Delta_ij / pi_ij) (y_i/pi_i)(y_j/pi_j)`.
pub fn ht_variance_estimate(
    pop: &Population,
    sample: &Sample,
    probs: &InclusionProbs,
) -> Result<f64> {
    weighted_quadratic_form(sample, probs, |i| pop.y()[i]).map(|v| v / (pop.len() as f64).powi(2))
}

/// `sum_{i,j in S} (Delta_ij / pi_ij) (e_i/pi_i)(e_j/pi_j)`; collapses to the
/// diagonal when indicators are independent.
pub(crate) fn weighted_quadratic_form(
    sample: &Sample,
    probs: &InclusionProbs,
    value: impl Fn(usize) -> f64,
) -> Result<f64> {
    let s = sample.indices();
    let z: Vec<f64> = s.iter().map(|&i| value(i) / probs.pi(i)).collect();
    let mut acc = NeumaierSum::new();
    for (a, &i) in s.iter().enumerate() {
        acc += (1.0 - probs.pi(i)) * z[a] * z[a];
    }
    if probs.is_independent() {
        return Ok(acc.value());
    }
    for (a, &i) in s.iter().enumerate() {
        for (b, &j) in s.iter().enumerate().skip(a + 1) {
            let pij = probs.joint(i, j)?;
            if pij <= 0.0 {
                return Err(Error::JointUnavailable);
            }
            acc += 2.0 * (pij - probs.pi(i) * probs.pi(j)) / pij * z[a] * z[b];
        }
    }
    Ok(acc.value())
}

/// Difference estimator with fixed predictions `m` (one per population unit).
pub fn estimate_difference(
    pop: &Population,
    sample: &Sample,
    probs: &InclusionProbs,
    predictions: &[f64],
) -> Result<f64> {
    if predictions.len() != pop.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} units",
            predictions.len(),
            pop.len()
        )));
    }
    let total = csum(predictions.iter().copied());
    let corr = csum(
        sample
            .indices()
            .iter()
            .map(|&i| (pop.y()[i] - predictions[i]) / probs.pi(i)),
    );
    Ok((total + corr) / pop.len() as f64)
}

/// Fits the GREG working model. `Q` is recomputed from the population.
pub fn fit_greg(pop: &Population, sample: &Sample, probs: &InclusionProbs) -> Result<GregFit> {
    let model = PopulationModel::new(pop)?;
    Ok(GregFit::from_model(&model, pop, sample, probs))
}

/// GREG estimate from an existing fit:
/// `(1/N)[t_x' beta + sum_{i in S} (y_i - x_i' beta)/pi_i]`.
pub fn greg_from_fit(fit: &GregFit, pop: &Population, sample: &Sample, probs: &InclusionProbs) -> f64 {
    let mut acc = NeumaierSum::new();
    acc += dot(&fit.t_x, &fit.coefficients);
    for &i in sample.indices() {
        acc += (pop.y()[i] - fit.predict(pop.x_row(i))) / probs.pi(i);
    }
    acc.value() / pop.len() as f64
}

pub fn estimate_greg(pop: &Population, sample: &Sample, probs: &InclusionProbs) -> Result<f64> {
    let fit = fit_greg(pop, sample, probs)?;
    Ok(greg_from_fit(&fit, pop, sample, probs))
}
