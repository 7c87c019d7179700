//! The five supported sampling designs: inclusion probabilities and seeded
//! sample drawing.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{group_index, InclusionProbs, PairwiseRule, Population, Sample};
use crate::rng;

/// Lower/upper clamp for Poisson probabilities before the rescaling pass.
pub const POISSON_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DesignSpec {
    /// Equal-probability independent inclusion.
    Bernoulli { expected_n: f64 },
    /// Independent inclusion proportional to the population size measure.
    Poisson { expected_n: f64 },
    Srswor { n: usize },
    /// SRSWOR of the same number of units in every stratum.
    Stratified { n_per_stratum: usize },
    /// SRSWOR of clusters, then SRSWOR of units within each selected cluster.
    TwoStageCluster {
        n_clusters: usize,
        n_units_per_cluster: usize,
    },
}

impl DesignSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DesignSpec::Bernoulli { .. } => "bernoulli",
            DesignSpec::Poisson { .. } => "poisson",
            DesignSpec::Srswor { .. } => "srswor",
            DesignSpec::Stratified { .. } => "stratified",
            DesignSpec::TwoStageCluster { .. } => "cluster",
        }
    }

    /// Whether inclusion indicators are mutually independent.
    pub fn is_independent(&self) -> bool {
        matches!(self, DesignSpec::Bernoulli { .. } | DesignSpec::Poisson { .. })
    }

    /// Checks the design parameters against a population.
    pub fn validate(&self, pop: &Population) -> Result<()> {
        let n_pop = pop.len();
        match *self {
            DesignSpec::Bernoulli { expected_n } | DesignSpec::Poisson { expected_n } => {
                if !(expected_n > 0.0 && expected_n <= n_pop as f64) {
                    return Err(Error::InvalidDesign(format!(
                        "expected_n = {expected_n} must lie in (0, {n_pop}]"
                    )));
                }
                if matches!(self, DesignSpec::Poisson { .. }) && pop.size_measure().is_none() {
                    return Err(Error::MissingLabels("size measure"));
                }
            }
            DesignSpec::Srswor { n } => {
                if n == 0 || n > n_pop {
                    return Err(Error::InvalidDesign(format!("n = {n} must lie in [1, {n_pop}]")));
                }
            }
            DesignSpec::Stratified { n_per_stratum } => {
                let labels = pop.strata().ok_or(Error::MissingLabels("stratum"))?;
                let (group, names) = group_index(labels);
                let smallest = group_sizes(&group, names.len()).into_iter().min().unwrap_or(0);
                if n_per_stratum == 0 || n_per_stratum > smallest {
                    return Err(Error::InvalidDesign(format!(
                        "n_per_stratum = {n_per_stratum} must lie in [1, {smallest}] (smallest stratum)"
                    )));
                }
            }
            DesignSpec::TwoStageCluster {
                n_clusters,
                n_units_per_cluster,
            } => {
                let labels = pop.clusters().ok_or(Error::MissingLabels("cluster"))?;
                let (_, names) = group_index(labels);
                if n_clusters == 0 || n_clusters > names.len() {
                    return Err(Error::InvalidDesign(format!(
                        "n_clusters = {n_clusters} must lie in [1, {}]",
                        names.len()
                    )));
                }
                if n_units_per_cluster == 0 {
                    return Err(Error::InvalidDesign("n_units_per_cluster must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

fn group_sizes(group: &[usize], n_groups: usize) -> Vec<usize> {
    let mut sizes = vec![0; n_groups];
    for &g in group {
        sizes[g] += 1;
    }
    sizes
}

/// First-order probabilities and the pairwise rule of `design` on `pop`.
pub fn compute_inclusion_probs(design: &DesignSpec, pop: &Population) -> Result<InclusionProbs> {
    design.validate(pop)?;
    let n_pop = pop.len();
    match *design {
        DesignSpec::Bernoulli { expected_n } => {
            InclusionProbs::independent(vec![expected_n / n_pop as f64; n_pop])
        }
        DesignSpec::Poisson { expected_n } => {
            let size = pop.size_measure().ok_or(Error::MissingLabels("size measure"))?;
            InclusionProbs::independent(poisson_probs(size, expected_n)?)
        }
        DesignSpec::Srswor { n } => InclusionProbs::new(
            vec![n as f64 / n_pop as f64; n_pop],
            PairwiseRule::Srswor { n, big_n: n_pop },
        ),
        DesignSpec::Stratified { n_per_stratum } => {
            let (group, names) = group_index(pop.strata().ok_or(Error::MissingLabels("stratum"))?);
            let sizes = group_sizes(&group, names.len());
            let k = n_per_stratum as f64;
            let first: Vec<f64> = sizes.iter().map(|&m| k / m as f64).collect();
            let within = sizes
                .iter()
                .map(|&m| {
                    let m = m as f64;
                    if m > 1.0 {
                        k * (k - 1.0) / (m * (m - 1.0))
                    } else {
                        0.0
                    }
                })
                .collect();
            let pi = group.iter().map(|&g| first[g]).collect();
            InclusionProbs::new(pi, PairwiseRule::Stratified { group, within })
        }
        DesignSpec::TwoStageCluster {
            n_clusters,
            n_units_per_cluster,
        } => {
            let (group, names) = group_index(pop.clusters().ok_or(Error::MissingLabels("cluster"))?);
            let sizes = group_sizes(&group, names.len());
            let total_clusters = names.len();
            let mut within_first = Vec::with_capacity(total_clusters);
            let mut within_pair = Vec::with_capacity(total_clusters);
            for &m in &sizes {
                // A cluster smaller than the per-cluster take is enumerated in full.
                let take = n_units_per_cluster.min(m) as f64;
                let m = m as f64;
                within_first.push(take / m);
                within_pair.push(if m > 1.0 {
                    take * (take - 1.0) / (m * (m - 1.0))
                } else {
                    0.0
                });
            }
            let stage1 = n_clusters as f64 / total_clusters as f64;
            let pi = group.iter().map(|&c| stage1 * within_first[c]).collect();
            InclusionProbs::new(
                pi,
                PairwiseRule::TwoStage {
                    group,
                    n_clusters,
                    total_clusters,
                    within_first,
                    within_pair,
                },
            )
        }
    }
}

/// `pi_i = E[n] s_i / sum(s)`, clamped to `[eps, 1 - eps]` and rescaled once
/// so that the probabilities sum to `E[n]`.
pub fn poisson_probs(size: &[f64], expected_n: f64) -> Result<Vec<f64>> {
    let total = crate::sum::csum(size.iter().copied());
    let mut pi: Vec<f64> = size
        .iter()
        .map(|&s| (expected_n * s / total).clamp(POISSON_CLAMP, 1.0 - POISSON_CLAMP))
        .collect();
    let scale = expected_n / crate::sum::csum(pi.iter().copied());
    for v in &mut pi {
        *v *= scale;
    }
    let over: Vec<usize> = (0..pi.len()).filter(|&i| pi[i] >= 1.0).collect();
    if !over.is_empty() {
        return Err(Error::PoissonOverflow { units: over });
    }
    Ok(pi)
}

/// `pi_ij` of two distinct units under `probs` (which carries the design's
/// pairwise rule).
pub fn joint_inclusion(probs: &InclusionProbs, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::SameUnit(i));
    }
    probs.joint(i, j)
}

/// Draws one sample. A pure function of `(design, pop, probs, seed)`.
pub fn draw_sample(
    design: &DesignSpec,
    pop: &Population,
    probs: &InclusionProbs,
    seed: u64,
) -> Result<Sample> {
    let n_pop = pop.len();
    if probs.len() != n_pop {
        return Err(Error::Dimension(format!(
            "{} inclusion probabilities for {n_pop} units",
            probs.len()
        )));
    }
    let mut rng = rng::stream(seed);
    match *design {
        DesignSpec::Bernoulli { .. } | DesignSpec::Poisson { .. } => {
            let member = (0..n_pop)
                .map(|i| rng.random::<f64>() < probs.pi(i))
                .collect();
            Ok(Sample::from_indicators(member))
        }
        DesignSpec::Srswor { n } => {
            design.validate(pop)?;
            let mut idx = index::sample(&mut rng, n_pop, n).into_vec();
            idx.sort_unstable();
            Sample::new(idx, n_pop)
        }
        DesignSpec::Stratified { n_per_stratum } => {
            design.validate(pop)?;
            let (group, names) = group_index(pop.strata().ok_or(Error::MissingLabels("stratum"))?);
            let members = members_by_group(&group, names.len());
            let mut idx = Vec::with_capacity(n_per_stratum * names.len());
            for units in &members {
                idx.extend(index::sample(&mut rng, units.len(), n_per_stratum).iter().map(|k| units[k]));
            }
            idx.sort_unstable();
            Sample::new(idx, n_pop)
        }
        DesignSpec::TwoStageCluster {
            n_clusters,
            n_units_per_cluster,
        } => {
            design.validate(pop)?;
            let (group, names) = group_index(pop.clusters().ok_or(Error::MissingLabels("cluster"))?);
            let members = members_by_group(&group, names.len());
            let mut chosen = index::sample(&mut rng, names.len(), n_clusters).into_vec();
            chosen.sort_unstable();
            let mut idx = Vec::new();
            for c in chosen {
                let units = &members[c];
                let take = n_units_per_cluster.min(units.len());
                idx.extend(index::sample(&mut rng, units.len(), take).iter().map(|k| units[k]));
            }
            idx.sort_unstable();
            Sample::new(idx, n_pop)
        }
    }
}

fn members_by_group(group: &[usize], n_groups: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_groups];
    for (i, &g) in group.iter().enumerate() {
        members[g].push(i);
    }
    members
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_pop(n: usize) -> Population {
        Population::new((0..n).map(|i| i as f64).collect(), vec![vec![1.0]; n]).unwrap()
    }

    fn labelled_pop(sizes: &[usize]) -> Population {
        let n: usize = sizes.iter().sum();
        let labels: Vec<String> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &m)| std::iter::repeat(format!("g{g:02}")).take(m))
            .collect();
        flat_pop(n)
            .with_strata(labels.clone())
            .unwrap()
            .with_clusters(labels)
            .unwrap()
    }

    #[test]
    fn bernoulli_probabilities() {
        let probs = compute_inclusion_probs(&DesignSpec::Bernoulli { expected_n: 50.0 }, &flat_pop(1000)).unwrap();
        assert!(probs.first_order().iter().all(|&p| p == 0.05));
        assert!((joint_inclusion(&probs, 3, 4).unwrap() - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn srswor_probabilities() {
        let probs = compute_inclusion_probs(&DesignSpec::Srswor { n: 100 }, &flat_pop(1000)).unwrap();
        assert!(probs.first_order().iter().all(|&p| p == 0.1));
        assert!((joint_inclusion(&probs, 0, 999).unwrap() - 9900.0 / 999_000.0).abs() < 1e-15);
        let probs = compute_inclusion_probs(&DesignSpec::Srswor { n: 2 }, &flat_pop(4)).unwrap();
        assert!((joint_inclusion(&probs, 1, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(joint_inclusion(&probs, 1, 1), Err(Error::SameUnit(1))));
    }

    #[test]
    fn two_stage_probabilities() {
        let pop = labelled_pop(&[40; 61]);
        let design = DesignSpec::TwoStageCluster { n_clusters: 15, n_units_per_cluster: 2 };
        let probs = compute_inclusion_probs(&design, &pop).unwrap();
        assert!((probs.pi(0) - 3.0 / 244.0).abs() < 1e-15);
        let same = joint_inclusion(&probs, 0, 1).unwrap();
        assert!((same - 15.0 / 61.0 * 2.0 / (40.0 * 39.0)).abs() < 1e-15);
        let cross = joint_inclusion(&probs, 0, 40).unwrap();
        assert!((cross - (15.0 * 14.0) / (61.0 * 60.0) * (2.0 / 40.0) * (2.0 / 40.0)).abs() < 1e-15);
    }

    #[test]
    fn small_cluster_is_taken_whole() {
        let pop = labelled_pop(&[1, 5, 5]);
        let design = DesignSpec::TwoStageCluster { n_clusters: 2, n_units_per_cluster: 3 };
        let probs = compute_inclusion_probs(&design, &pop).unwrap();
        assert!((probs.pi(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((probs.pi(1) - 2.0 / 3.0 * 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_normalizes_and_rejects_overflow() {
        let size: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let pi = poisson_probs(&size, 5.0).unwrap();
        assert!((pi.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        assert!((pi[19] / pi[0] - 20.0).abs() < 1e-9);
        let mut skewed = vec![1.0; 10];
        skewed[0] = 1000.0;
        match poisson_probs(&skewed, 5.0) {
            Err(Error::PoissonOverflow { units }) => assert_eq!(units, vec![0]),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn invalid_designs() {
        let pop = flat_pop(10);
        assert!(DesignSpec::Srswor { n: 11 }.validate(&pop).is_err());
        assert!(DesignSpec::Bernoulli { expected_n: 0.0 }.validate(&pop).is_err());
        assert!(matches!(
            DesignSpec::Stratified { n_per_stratum: 1 }.validate(&pop),
            Err(Error::MissingLabels("stratum"))
        ));
        assert!(matches!(
            DesignSpec::Poisson { expected_n: 2.0 }.validate(&pop),
            Err(Error::MissingLabels("size measure"))
        ));
        let pop = labelled_pop(&[3, 5]);
        assert!(DesignSpec::Stratified { n_per_stratum: 4 }.validate(&pop).is_err());
        assert!(DesignSpec::TwoStageCluster { n_clusters: 3, n_units_per_cluster: 1 }.validate(&pop).is_err());
    }

    #[test]
    fn draws_are_deterministic_and_sized() {
        let pop = labelled_pop(&[7, 9, 4]);
        for design in [
            DesignSpec::Bernoulli { expected_n: 6.0 },
            DesignSpec::Srswor { n: 8 },
            DesignSpec::Stratified { n_per_stratum: 3 },
            DesignSpec::TwoStageCluster { n_clusters: 2, n_units_per_cluster: 5 },
        ] {
            let probs = compute_inclusion_probs(&design, &pop).unwrap();
            let a = draw_sample(&design, &pop, &probs, 99).unwrap();
            let b = draw_sample(&design, &pop, &probs, 99).unwrap();
            assert_eq!(a, b, "{}", design.name());
        }
        let design = DesignSpec::Srswor { n: 100 };
        let pop = flat_pop(1000);
        let probs = compute_inclusion_probs(&design, &pop).unwrap();
        for seed in 0..20 {
            assert_eq!(draw_sample(&design, &pop, &probs, seed).unwrap().len(), 100);
        }
    }
}
