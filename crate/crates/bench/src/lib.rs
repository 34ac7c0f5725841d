//! Fixtures shared by the benchmarks.

use tensegrity_core::{GpModel, KernelParams, PriorSpec, TrainingSet};

/// `n` points spread over the unit cube by additive recurrence, with a
/// smooth response.
pub fn training_set(n: usize) -> TrainingSet {
    const STEPS: [f64; 3] = [
        0.819_172_513_396_164_4,
        0.671_043_606_703_789_2,
        0.549_700_477_901_970_5,
    ];
    let points: Vec<Vec<f64>> = (1..=n)
        .map(|i| STEPS.iter().map(|a| (a * i as f64).fract()).collect())
        .collect();
    let values = points.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[2]).collect();
    TrainingSet::new(points, values).expect("well-formed fixture")
}

/// A prior-guided model fitted to `n` points.
pub fn model(n: usize) -> GpModel {
    let prior = PriorSpec::default().mean_fn().expect("default prior fits");
    GpModel::fit(training_set(n), KernelParams::default(), Some(prior)).expect("fixture fits")
}
