//! Comparator variance estimators: the classical asymptotic (residual)
//! estimator and the infinitesimal jackknife in its balanced-method form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{InclusionProbs, Population, Sample};
use crate::greg::{weighted_quadratic_form, GregFit};
use crate::hdvar::{HdEstimator, Normalizer};
use crate::kernels::KernelContext;
use crate::sum::{csum, NeumaierSum};

/// Largest population the literal IJ evaluation accepts.
pub const IJ_DIRECT_MAX_N: usize = 400;

/// `(1/N^2) sum_{i,j in S} (Delta_ij/pi_ij) (e_i/pi_i)(e_j/pi_j)` with GREG
/// residuals `e_i = y_i - x_i' beta`.
pub fn asymptotic_variance(
    pop: &Population,
    sample: &Sample,
    probs: &InclusionProbs,
    fit: &GregFit,
) -> Result<f64> {
    let n = pop.len() as f64;
    weighted_quadratic_form(sample, probs, |i| pop.y()[i] - fit.predict(pop.x_row(i)))
        .map(|v| v / (n * n))
}

/// Per-unit averages fed to the balanced method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmPlugin {
    /// HT plug-in `phi'_i(z_i)` shared with the H-decomposition estimator.
    #[default]
    HtConditional,
    /// Plain average of the realized kernels `h_U(z_i, z_j)` over `j != i`.
    KernelAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmVariance {
    pub tau1_bm: f64,
    pub variance: f64,
}

/// `tau1_BM = (N-1)^2 / (N^2 (N-2)^2) sum_{i in U} (phi_i - a)^2`, variance
/// `4 tau1_BM`.
pub fn ij_bm_variance(ctx: &KernelContext<'_>, plugin: BmPlugin) -> Result<BmVariance> {
    let n_pop = ctx.n_pop();
    if n_pop < 3 {
        return Err(Error::TooFewUnits(format!("balanced method needs N >= 3, got {n_pop}")));
    }
    let phi = match plugin {
        BmPlugin::HtConditional => {
            HdEstimator::new(ctx, Normalizer::InverseProbability)?.phi_bar_all()
        }
        BmPlugin::KernelAverage => kernel_averages(ctx)?,
    };
    let a_hat = ctx.a_hat();
    let nf = n_pop as f64;
    let ss = csum(phi.iter().map(|p| (p - a_hat) * (p - a_hat)));
    let tau1_bm = (nf - 1.0).powi(2) / (nf * nf * (nf - 2.0).powi(2)) * ss;
    Ok(BmVariance {
        tau1_bm,
        variance: 4.0 * tau1_bm,
    })
}

/// `(1/(N-1)) sum_{j != i} h_U(z_i, z_j)` for every unit in `O(n^2 + N)`.
///
/// Unsampled `j` contribute `g_i` to a sampled `i`; unsampled `i` collect
/// `g_j` from the sampled `j` only.
fn kernel_averages(ctx: &KernelContext<'_>) -> Result<Vec<f64>> {
    let n_pop = ctx.n_pop();
    let s = ctx.sample().indices();
    let n = s.len();
    let g_sum = csum(s.iter().map(|&k| ctx.g(k)));
    let denom = (n_pop - 1) as f64;
    let mut out = vec![g_sum / denom; n_pop];
    for (a, &i) in s.iter().enumerate() {
        let mut acc = NeumaierSum::new();
        for (b, &j) in s.iter().enumerate() {
            if a != b {
                acc += ctx.h_u_realized(i, j)?;
            }
        }
        acc += (n_pop - n) as f64 * ctx.g(i);
        out[i] = acc.value() / denom;
    }
    Ok(out)
}

/// Literal covariance-form IJ estimate,
/// `1/(N (N-1) (N-2)^2) sum_l [sum_{i<j} (delta_l{i,j} - 2/N)(h_U - a)]^2`.
pub fn ij_direct_tau1(ctx: &KernelContext<'_>) -> Result<f64> {
    let n_pop = ctx.n_pop();
    if n_pop > IJ_DIRECT_MAX_N {
        return Err(Error::TooLarge(format!(
            "direct IJ evaluation is capped at N = {IJ_DIRECT_MAX_N}, got {n_pop}"
        )));
    }
    if n_pop < 3 {
        return Err(Error::TooFewUnits(format!("IJ needs N >= 3, got {n_pop}")));
    }
    let a_hat = ctx.a_hat();
    let mut centered = Vec::with_capacity(n_pop * (n_pop - 1) / 2);
    for i in 0..n_pop {
        for j in i + 1..n_pop {
            centered.push(ctx.h_u_realized(i, j)? - a_hat);
        }
    }
    let nf = n_pop as f64;
    let two_over_n = 2.0 / nf;
    let mut outer = NeumaierSum::new();
    for l in 0..n_pop {
        let mut inner = NeumaierSum::new();
        let mut k = 0;
        for i in 0..n_pop {
            for j in i + 1..n_pop {
                let delta = if i == l || j == l { 1.0 } else { 0.0 };
                inner += (delta - two_over_n) * centered[k];
                k += 1;
            }
        }
        let v = inner.value();
        outer += v * v;
    }
    Ok(outer.value() / (nf * (nf - 1.0) * (nf - 2.0).powi(2)))
}
