//! Seeded synthetic cohorts with known structure, for exercising the
//! clustering pipeline. These are generated data, not field observations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cohort::{CohortMatrix, CohortRow};

/// Rubric-score profiles of the six planted personas.
pub const PERSONA_CENTROIDS: [[f64; 5]; 6] = [
    [90.0, 90.0, 90.0, 90.0, 90.0],
    [90.0, 90.0, 40.0, 40.0, 40.0],
    [40.0, 40.0, 90.0, 90.0, 90.0],
    [40.0, 40.0, 40.0, 40.0, 40.0],
    [90.0, 40.0, 90.0, 40.0, 90.0],
    [40.0, 90.0, 40.0, 90.0, 40.0],
];

/// `per_persona` learners around each persona centroid with Gaussian noise,
/// scores clamped to 0..100 and rounded. Returns the matrix and the planted
/// persona index of every row.
pub fn planted_cohort(per_persona: usize, noise_sd: f64, seed: u64) -> (CohortMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("finite noise");
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (p, centre) in PERSONA_CENTROIDS.iter().enumerate() {
        for i in 0..per_persona {
            let scores: Vec<f64> =
                centre.iter().map(|c| (c + noise.sample(&mut rng)).clamp(0.0, 100.0).round()).collect();
            let overall = (scores.iter().sum::<f64>() / scores.len() as f64).round();
            let frac = (overall / 100.0).clamp(0.0, 1.0);
            rows.push(CohortRow {
                learner: format!("p{p}-{i:02}"),
                keystones: vec![scores[2] >= 65.0, scores[4] >= 65.0],
                rubric_scores: scores,
                overall,
                fraction_correct: frac,
            });
            truth.push(p);
        }
    }
    (CohortMatrix::new(rows).expect("generated rows are in range"), truth)
}
