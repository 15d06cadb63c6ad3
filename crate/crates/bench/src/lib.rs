//! Shared fixtures for the benchmark suite.

use gauss_nisim::VectorFunction;

/// Halfspace on `n` coordinates with weights `1, 1/2, 1/3, …` and threshold `b`.
pub fn halfspace(n: usize, b: f64) -> VectorFunction {
    VectorFunction::halfspace((1..=n).map(|i| 1.0 / i as f64).collect(), b)
}

/// Deterministic points spread over `[-3, 3]^k`.
pub fn spread_points(count: usize, k: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            (0..k)
                .map(|s| {
                    let u = ((i * (2 * s + 3) + s) % 97) as f64 / 96.0;
                    6.0 * u - 3.0
                })
                .collect()
        })
        .collect()
}
