//! Shared fixtures for the criterion benchmarks in `benches/`.

use mmiq_core::QueueSpec;

/// The two-state queue used throughout: `q₁₂ = q₂₁ = 5`, `λ = [20, 10]`.
pub fn section7(mu: [f64; 2]) -> QueueSpec {
    QueueSpec::from_rows(
        &[vec![-5.0, 5.0], vec![5.0, -5.0]],
        vec![20.0, 10.0],
        mu.to_vec(),
    )
    .expect("valid spec")
}

/// A `d`-state cyclic queue with distinct rates, for scaling in `d`.
pub fn ring(d: usize) -> QueueSpec {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut row = vec![0.0; d];
            let (next, prev) = ((i + 1) % d, (i + d - 1) % d);
            row[next] += 1.0 + i as f64;
            row[prev] += 0.5;
            row[i] = -(row.iter().sum::<f64>());
            row
        })
        .collect();
    let lambda = (0..d).map(|i| 5.0 + i as f64).collect();
    let mu = (0..d).map(|i| 0.5 + 0.25 * i as f64).collect();
    QueueSpec::from_rows(&rows, lambda, mu).expect("valid spec")
}
