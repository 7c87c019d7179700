//! Fixtures shared by the benchmarks.

use uvar::io::{generate_synthetic, SynthParams};
use uvar::{compute_inclusion_probs, draw_sample, DesignSpec, InclusionProbs, Population, Sample};

/// Lognormal synthetic frame of `n_pop` units with a Bernoulli sample of
/// expected size `expected_n`.
pub fn frame(n_pop: usize, expected_n: f64, seed: u64) -> (Population, InclusionProbs, Sample) {
    let pop = generate_synthetic(&SynthParams { n: n_pop, p: 3, ..Default::default() }, seed)
        .expect("valid synthetic parameters");
    let design = DesignSpec::Bernoulli { expected_n };
    let probs = compute_inclusion_probs(&design, &pop).expect("valid design");
    let sample = draw_sample(&design, &pop, &probs, seed).expect("sample");
    (pop, probs, sample)
}

#[cfg(test)]
mod tests {
    #[test]
    fn frame_is_reproducible() {
        let (_, _, a) = super::frame(500, 40.0, 3);
        let (_, _, b) = super::frame(500, 40.0, 3);
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }
}
