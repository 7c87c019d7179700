//! Population, sample and inclusion-probability types.
//!
//! Units are addressed by their position `0..N` in the population. Source-file
//! identifiers are kept alongside for reporting only.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// An immutable finite population: outcome, covariate rows and optional
/// design labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    y: Vec<f64>,
    /// Row-major `N x p`.
    x: Vec<f64>,
    p: usize,
    ids: Vec<String>,
    stratum: Option<Vec<String>>,
    cluster: Option<Vec<String>>,
    size_measure: Option<Vec<f64>>,
}

impl Population {
    /// Builds a population from an outcome vector and covariate rows.
    pub fn new(y: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} outcomes but {} covariate rows",
                y.len(),
                rows.len()
            )));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Dimension(format!(
                "covariate row {i} has {} entries, expected {p}",
                r.len()
            )));
        }
        let x = rows.into_iter().flatten().collect();
        Self::from_flat(y, x, p)
    }

    /// Builds a population from a row-major covariate buffer.
    pub fn from_flat(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        let ids = (1..=y.len()).map(|i| i.to_string()).collect();
        validate_population(Population {
            y,
            x,
            p,
            ids,
            stratum: None,
            cluster: None,
            size_measure: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        self.ids = ids;
        validate_population(self)
    }

    pub fn with_strata(mut self, labels: Vec<String>) -> Result<Self> {
        self.stratum = Some(labels);
        validate_population(self)
    }

    pub fn with_clusters(mut self, labels: Vec<String>) -> Result<Self> {
        self.cluster = Some(labels);
        validate_population(self)
    }

    pub fn with_size_measure(mut self, size: Vec<f64>) -> Result<Self> {
        self.size_measure = Some(size);
        validate_population(self)
    }

    /// Same frame with a replaced outcome column.
    pub fn with_outcome(mut self, y: Vec<f64>) -> Result<Self> {
        self.y = y;
        validate_population(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn n_covariates(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn strata(&self) -> Option<&[String]> {
        self.stratum.as_deref()
    }

    pub fn clusters(&self) -> Option<&[String]> {
        self.cluster.as_deref()
    }

    pub fn size_measure(&self) -> Option<&[f64]> {
        self.size_measure.as_deref()
    }

    /// Finite-population mean of the outcome.
    pub fn mean(&self) -> f64 {
        crate::sum::csum(self.y.iter().copied()) / self.len() as f64
    }

    /// Map from source identifier to unit index.
    pub fn id_index(&self) -> BTreeMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Checks every population invariant that does not need a model fit.
/// Returns the population unchanged on success.
pub fn validate_population(pop: Population) -> Result<Population> {
    let n = pop.y.len();
    if n < 2 {
        return Err(Error::TooFewUnits(format!("N = {n}, need at least 2")));
    }
    if pop.p == 0 {
        return Err(Error::Dimension("no covariate columns".into()));
    }
    if pop.x.len() != n * pop.p {
        return Err(Error::Dimension(format!(
            "covariate buffer has {} entries, expected {n} x {}",
            pop.x.len(),
            pop.p
        )));
    }
    if pop.ids.len() != n {
        return Err(Error::Dimension(format!("{} ids for {n} units", pop.ids.len())));
    }
    if let Some(i) = pop.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { field: "outcome", unit: i });
    }
    if let Some(k) = pop.x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "covariates",
            unit: k / pop.p,
        });
    }
    for (column, labels) in [("stratum", &pop.stratum), ("cluster", &pop.cluster)] {
        if let Some(labels) = labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} {column} labels for {n} units",
                    labels.len()
                )));
            }
            if let Some(i) = labels.iter().position(|l| l.trim().is_empty()) {
                return Err(Error::EmptyLabel { column, unit: i });
            }
        }
    }
    if let Some(size) = &pop.size_measure {
        if size.len() != n {
            return Err(Error::Dimension(format!("{} size values for {n} units", size.len())));
        }
        if let Some(i) = size.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { field: "size measure", unit: i });
        }
        if let Some(i) = size.iter().position(|&v| v <= 0.0) {
            return Err(Error::Dimension(format!("size measure must be positive (unit {i})")));
        }
    }
    Ok(pop)
}

/// A realized sample: strictly increasing unit indices plus an indicator table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    indices: Vec<usize>,
    member: Vec<bool>,
}

impl Sample {
    pub fn new(indices: Vec<usize>, population_size: usize) -> Result<Self> {
        let mut member = vec![false; population_size];
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::UnsortedSample { prev: w[0], next: w[1] });
            }
        }
        for &i in &indices {
            if i >= population_size {
                return Err(Error::UnitOutOfRange { index: i, n: population_size });
            }
            member[i] = true;
        }
        Ok(Sample { indices, member })
    }

    pub fn from_indicators(member: Vec<bool>) -> Self {
        let indices = member
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Sample { indices, member }
    }

    pub fn empty(population_size: usize) -> Self {
        Sample {
            indices: Vec::new(),
            member: vec![false; population_size],
        }
    }

    pub fn census(population_size: usize) -> Self {
        Sample::from_indicators(vec![true; population_size])
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn indicators(&self) -> &[bool] {
        &self.member
    }

    pub fn population_size(&self) -> usize {
        self.member.len()
    }
}

/// How second-order inclusion probabilities are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PairwiseRule {
    /// Indicators are independent: `pi_ij = pi_i * pi_j`.
    Independent,
    /// Simple random sampling without replacement of `n` out of `big_n`.
    Srswor { n: usize, big_n: usize },
    /// SRSWOR within strata, independent across strata. `within[h]` is the
    /// joint probability of two distinct units of stratum `h`.
    Stratified { group: Vec<usize>, within: Vec<f64> },
    /// SRSWOR of clusters, then SRSWOR of units inside each selected cluster.
    TwoStage {
        group: Vec<usize>,
        n_clusters: usize,
        total_clusters: usize,
        /// Conditional first-order probability inside cluster `c`.
        within_first: Vec<f64>,
        /// Conditional joint probability of two distinct units inside cluster `c`.
        within_pair: Vec<f64>,
    },
    /// No joint probabilities (e.g. user-supplied first-order weights only).
    Unavailable,
}

/// First-order inclusion probabilities plus the rule for pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionProbs {
    pi: Vec<f64>,
    pairwise: PairwiseRule,
}

impl InclusionProbs {
    pub fn new(pi: Vec<f64>, pairwise: PairwiseRule) -> Result<Self> {
        if let Some((i, &v)) = pi
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0 && v <= 1.0))
        {
            return Err(Error::InvalidProbability { unit: i, value: v });
        }
        Ok(InclusionProbs { pi, pairwise })
    }

    /// Independent indicators with the given first-order probabilities.
    pub fn independent(pi: Vec<f64>) -> Result<Self> {
        Self::new(pi, PairwiseRule::Independent)
    }

    #[inline]
    pub fn pi(&self, i: usize) -> f64 {
        self.pi[i]
    }

    pub fn first_order(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn rule(&self) -> &PairwiseRule {
        &self.pairwise
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.pairwise, PairwiseRule::Independent)
    }

    /// `pi_ij`; `pi_ii = pi_i`.
    pub fn joint(&self, i: usize, j: usize) -> Result<f64> {
        let (pi, pj) = (self.pi[i], self.pi[j]);
        if i == j {
            return Ok(pi);
        }
        Ok(match &self.pairwise {
            PairwiseRule::Independent => pi * pj,
            PairwiseRule::Srswor { n, big_n } => {
                let (n, big_n) = (*n as f64, *big_n as f64);
                n * (n - 1.0) / (big_n * (big_n - 1.0))
            }
            PairwiseRule::Stratified { group, within } => {
                if group[i] == group[j] {
                    within[group[i]]
                } else {
                    pi * pj
                }
            }
            PairwiseRule::TwoStage {
                group,
                n_clusters,
                total_clusters,
                within_first,
                within_pair,
            } => {
                let (nc, tc) = (*n_clusters as f64, *total_clusters as f64);
                let (a, b) = (group[i], group[j]);
                if a == b {
                    nc / tc * within_pair[a]
                } else {
                    let both = if *total_clusters > 1 {
                        nc * (nc - 1.0) / (tc * (tc - 1.0))
                    } else {
                        0.0
                    };
                    both * within_first[a] * within_first[b]
                }
            }
            PairwiseRule::Unavailable => return Err(Error::JointUnavailable),
        })
    }

    /// `Delta_ij = pi_ij - pi_i pi_j`.
    pub fn delta(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.joint(i, j)? - self.pi[i] * self.pi[j])
    }
}

/// Dense group index (sorted label order) for a label column.
pub fn group_index(labels: &[String]) -> (Vec<usize>, Vec<String>) {
    let names: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(k, s)| (s.as_str(), k))
        .collect();
    let group = labels.iter().map(|l| lookup[l.as_str()]).collect();
    (group, names)
}
