//! Shared fixtures for the criterion benches.

use casebase::{
    simulate_dataset, Censoring, CovariateSampler, HazardFamily, SurvivalDataset, TruthSpec,
};

/// Weibull cohort with a binary treatment and a standard-normal covariate,
/// fixed seed so every bench sees the same data.
pub fn cohort(n: usize) -> SurvivalDataset {
    let truth = TruthSpec {
        families: vec![HazardFamily::Weibull {
            shape: 1.4,
            scale: 8.0,
        }],
        effects: vec![vec![-0.5, 0.3]],
        covariates: vec![
            CovariateSampler::Bernoulli {
                name: "trt".into(),
                p: 0.5,
            },
            CovariateSampler::Normal {
                name: "age".into(),
                mean: 0.0,
                sd: 1.0,
            },
        ],
        censoring: Censoring::None,
        tau: 12.0,
        n,
        seed: 17,
    };
    simulate_dataset(&truth).unwrap()
}
