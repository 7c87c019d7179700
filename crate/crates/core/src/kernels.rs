//! Degree-2 kernels of the GREG estimator.
//!
//! With `v_i = I_i/pi_i`, `w_i = y_i v_i`, `r_i = t_x' Q x_i` and
//! `K_ij = x_i' Q x_j`, the V-statistic kernel is
//!
//! ```text
//! h*(i, j) = 1/2 [ (1 + r_i - N v_j K_ij) w_i + (1 + r_j - N v_i K_ij) w_j ]
//! ```
//!
//! and `(1/N^2) sum_{i,j in U} h*(i, j)` is the GREG estimate. Folding the
//! diagonal terms into the off-diagonal pairs gives the U-statistic kernel
//! `h_U`, which only takes four shapes depending on `(I_i, I_j)`:
//!
//! ```text
//! (1,1): g_i + g_j - (N-1)/2 K_ij (y_i + y_j)/(pi_i pi_j)
//! (1,0): g_i        (0,1): g_j        (0,0): 0
//! g_i  = (N-1)/(2N) [ (1 + r_i) y_i/pi_i + h*_1(i, i)/(N-1) ]
//! ```
//!
//! where `h*_1(i, i)` is the diagonal with `I_i` forced to 1. The indicator
//! arguments are explicit so expectations over `I` can be formed; the
//! realized-sample versions read them from the context.

use crate::error::{Error, Result};
use crate::frame::{InclusionProbs, Population, Sample};
use crate::greg::{greg_from_fit, GregFit, PopulationModel};
use crate::linalg::{dot, mat_vec};

/// Per-unit quantities shared by every variance estimator.
#[derive(Debug, Clone)]
pub struct KernelContext<'a> {
    pop: &'a Population,
    probs: &'a InclusionProbs,
    sample: &'a Sample,
    /// `Q x_i`, row-major `N x p`.
    qx: Vec<f64>,
    r: Vec<f64>,
    /// `h*(z_i, z_i)` evaluated with `I_i = 1`.
    hstar_diag_observed: Vec<f64>,
    g: Vec<f64>,
    a_hat: f64,
}

impl<'a> KernelContext<'a> {
    pub fn new(pop: &'a Population, probs: &'a InclusionProbs, sample: &'a Sample) -> Result<Self> {
        let model = PopulationModel::new(pop)?;
        Self::with_model(&model, pop, probs, sample)
    }

    /// Builds the context from a precomputed population model (`Q`, `t_x`).
    /// Cost is `O(N p^2)`.
    pub fn with_model(
        model: &PopulationModel,
        pop: &'a Population,
        probs: &'a InclusionProbs,
        sample: &'a Sample,
    ) -> Result<Self> {
        let n_pop = pop.len();
        if probs.len() != n_pop || sample.population_size() != n_pop {
            return Err(Error::Dimension(format!(
                "population has {n_pop} units, probabilities {} and sample frame {}",
                probs.len(),
                sample.population_size()
            )));
        }
        let p = pop.n_covariates();
        let nf = n_pop as f64;
        let half = (nf - 1.0) / (2.0 * nf);
        let mut qx = Vec::with_capacity(n_pop * p);
        let mut r = Vec::with_capacity(n_pop);
        let mut hd = Vec::with_capacity(n_pop);
        let mut g = Vec::with_capacity(n_pop);
        for i in 0..n_pop {
            let xi = pop.x_row(i);
            let qxi = mat_vec(&model.q, xi);
            let ri = dot(&model.t_x, &qxi);
            let kii = dot(xi, &qxi);
            let (yi, pi) = (pop.y()[i], probs.pi(i));
            let u = yi / pi;
            let diag = (1.0 + ri - nf * kii / pi) * u;
            r.push(ri);
            hd.push(diag);
            g.push(half * ((1.0 + ri) * u + diag / (nf - 1.0)));
            qx.extend_from_slice(&qxi);
        }
        let fit = GregFit::from_model(model, pop, sample, probs);
        let a_hat = greg_from_fit(&fit, pop, sample, probs);
        Ok(KernelContext {
            pop,
            probs,
            sample,
            qx,
            r,
            hstar_diag_observed: hd,
            g,
            a_hat,
        })
    }

    #[inline]
    pub fn population(&self) -> &'a Population {
        self.pop
    }

    #[inline]
    pub fn probs(&self) -> &'a InclusionProbs {
        self.probs
    }

    #[inline]
    pub fn sample(&self) -> &'a Sample {
        self.sample
    }

    #[inline]
    pub fn n_pop(&self) -> usize {
        self.pop.len()
    }

    #[inline]
    pub fn pi(&self, i: usize) -> f64 {
        self.probs.pi(i)
    }

    #[inline]
    pub fn indicator(&self, i: usize) -> bool {
        self.sample.contains(i)
    }

    /// GREG estimate of the realized sample.
    #[inline]
    pub fn a_hat(&self) -> f64 {
        self.a_hat
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        self.r[i]
    }

    /// Kernel value of the (1,0) case; constant over the partner unit.
    #[inline]
    pub fn g(&self, i: usize) -> f64 {
        self.g[i]
    }

    /// `h*(z_i, z_i)` with the realized indicator (zero when unsampled).
    pub fn hstar_diag(&self, i: usize) -> f64 {
        if self.indicator(i) {
            self.hstar_diag_observed[i]
        } else {
            0.0
        }
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        let p = self.pop.n_covariates();
        dot(self.pop.x_row(i), &self.qx[j * p..(j + 1) * p])
    }

    /// `h*(z_i, z_j)` with the indicators forced to the given values.
    pub fn hstar_with(&self, i: usize, j: usize, ii: bool, ij: bool) -> f64 {
        let nf = self.n_pop() as f64;
        let (vi, vj) = (ind(ii) / self.pi(i), ind(ij) / self.pi(j));
        let (wi, wj) = (self.pop.y()[i] * vi, self.pop.y()[j] * vj);
        if i == j {
            // Both arguments are the same unit, so they share one indicator.
            return (1.0 + self.r[i] - nf * vi * self.k(i, i)) * wi;
        }
        let kij = self.k(i, j);
        0.5 * ((1.0 + self.r[i] - nf * vj * kij) * wi + (1.0 + self.r[j] - nf * vi * kij) * wj)
    }

    /// `h*(z_i, z_j)` on the realized sample.
    pub fn hstar(&self, i: usize, j: usize) -> f64 {
        self.hstar_with(i, j, self.indicator(i), self.indicator(j))
    }

    /// The four-case U-statistic kernel with forced indicators.
    pub fn h_u(&self, i: usize, j: usize, ii: bool, ij: bool) -> Result<f64> {
        if i == j {
            return Err(Error::SameUnit(i));
        }
        Ok(match (ii, ij) {
            (true, true) => {
                let nf = self.n_pop() as f64;
                (nf - 1.0) / (2.0 * nf)
                    * (2.0 * self.hstar_with(i, j, true, true)
                        + (self.hstar_with(i, i, true, true) + self.hstar_with(j, j, true, true))
                            / (nf - 1.0))
            }
            (true, false) => self.g[i],
            (false, true) => self.g[j],
            (false, false) => 0.0,
        })
    }

    /// `h_U(z_i, z_j)` on the realized sample.
    pub fn h_u_realized(&self, i: usize, j: usize) -> Result<f64> {
        self.h_u(i, j, self.indicator(i), self.indicator(j))
    }

    /// Case (1,1) of `h_U` in the folded form; `O(p)`, no `i != j` check.
    #[inline]
    pub(crate) fn h11(&self, i: usize, j: usize) -> f64 {
        let nf = self.n_pop() as f64;
        let y = self.pop.y();
        self.g[i] + self.g[j]
            - 0.5 * (nf - 1.0) * self.k(i, j) * (y[i] + y[j]) / (self.pi(i) * self.pi(j))
    }

    /// `theta_ij = E[h_U(z_i, z_j)]` under independent indicators.
    pub fn theta_pair(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::SameUnit(i));
        }
        Ok(theta_from_cases(self.h11(i, j), self.g[i], self.g[j], self.pi(i), self.pi(j)))
    }

    /// `phi_{1;i,j}(I_i) = E[h_U(z_i, z_j) | I_i]`.
    pub fn phi_cond(&self, i: usize, j: usize, ii: bool) -> Result<f64> {
        if i == j {
            return Err(Error::SameUnit(i));
        }
        let pj = self.pi(j);
        Ok(if ii {
            phi_observed_from_cases(self.h11(i, j), self.g[i], pj)
        } else {
            self.g[j] * pj
        })
    }
}

#[inline]
fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn theta_from_cases(h11: f64, gi: f64, gj: f64, pi: f64, pj: f64) -> f64 {
    h11 * pi * pj + gi * pi * (1.0 - pj) + gj * (1.0 - pi) * pj
}

#[inline]
pub(crate) fn phi_observed_from_cases(h11: f64, gi: f64, pj: f64) -> f64 {
    h11 * pj + gi * (1.0 - pj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::fixtures::{f1, s13};
    use crate::greg::estimate_greg;
    use crate::sum::csum;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn f1_context_constants() {
        let (pop, probs) = f1();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        for i in 0..3 {
            assert!(close(ctx.r(i), 1.0));
        }
        assert!(close(ctx.g(0), 8.0 / 3.0));
        assert!(close(ctx.g(2), 8.0));
        assert_eq!(ctx.hstar_diag(1), 0.0);
        assert!(close(ctx.a_hat(), 32.0 / 9.0));
    }

    #[test]
    fn f1_hstar() {
        let (pop, probs) = f1();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        assert!(close(ctx.hstar(0, 2), 0.0));
        assert!(close(ctx.hstar(0, 1), 4.0));
        assert_eq!(ctx.hstar_with(0, 1, false, false), 0.0);
    }

    #[test]
    fn f1_h_u_cases() {
        let (pop, probs) = f1();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        assert!(close(ctx.h_u(0, 2, true, true).unwrap(), 0.0));
        assert!(close(ctx.h_u(0, 1, true, false).unwrap(), 8.0 / 3.0));
        assert_eq!(ctx.h_u(0, 1, false, false).unwrap(), 0.0);
        assert!(matches!(ctx.h_u(1, 1, true, true), Err(Error::SameUnit(1))));
    }

    #[test]
    fn f1_theta_and_phi() {
        let (pop, probs) = f1();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        assert!(close(ctx.theta_pair(0, 2).unwrap(), 8.0 / 3.0));
        assert!(close(ctx.theta_pair(2, 0).unwrap(), 8.0 / 3.0));
        assert!(close(ctx.phi_cond(0, 2, true).unwrap(), 4.0 / 3.0));
        assert!(close(ctx.phi_cond(0, 2, false).unwrap(), 4.0));
    }

    #[test]
    fn zero_outcome_gives_zero_kernels() {
        let (pop, probs) = f1();
        let pop = pop.with_outcome(vec![0.0; 3]).unwrap();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(ctx.theta_pair(i, j).unwrap(), 0.0);
                    assert_eq!(ctx.phi_cond(i, j, true).unwrap(), 0.0);
                    assert_eq!(ctx.phi_cond(i, j, false).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn f1_representation_identities() {
        let (pop, probs) = f1();
        let s = s13();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        let v = csum((0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| ctx.hstar(i, j))) / 9.0;
        let u = csum((0..3).flat_map(|i| (i + 1..3).map(move |j| (i, j))).map(|(i, j)| ctx.h_u_realized(i, j).unwrap()))
            / 3.0;
        let a = estimate_greg(&pop, &s, &probs).unwrap();
        assert!(close(v, 32.0 / 9.0));
        assert!(close(u, 32.0 / 9.0));
        assert!(close(a, 32.0 / 9.0));
    }

    #[test]
    fn folded_and_literal_case_11_agree() {
        let pop = Population::new(
            vec![3.0, -1.0, 4.0, 1.5, 9.0],
            vec![vec![1.0, 0.2], vec![1.0, -1.3], vec![1.0, 2.0], vec![1.0, 0.7], vec![1.0, -0.1]],
        )
        .unwrap();
        let probs = InclusionProbs::independent(vec![0.3, 0.5, 0.7, 0.4, 0.6]).unwrap();
        let s = Sample::new(vec![1, 2, 4], 5).unwrap();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    let lit = ctx.h_u(i, j, true, true).unwrap();
                    assert!((lit - ctx.h11(i, j)).abs() < 1e-12 * lit.abs().max(1.0));
                }
            }
        }
    }
}
