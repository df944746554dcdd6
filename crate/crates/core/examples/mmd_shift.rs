//! Distribution shift between two embedding sets with an RBF-kernel MMD.

use doctags_prior::analysis::{gamma_from_sigma, median_heuristic_sigma, mmd, mmd_auto, pool_embedding, EmbeddingSet};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn sample(n: usize, d: usize, shift: f64, seed: u64) -> EmbeddingSet {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows = Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng) + shift);
    EmbeddingSet::new(format!("shift {shift}"), rows).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // an image embedding is the mean of its patch tokens
    let patches = Array3::from_shape_fn((2, 64, 4), |(p, t, k)| (p + t + k) as f64);
    println!("pooled embedding: {}", pool_embedding(patches.view())?);

    let base = sample(200, 16, 0.0, 1);
    for (shift, seed) in [(0.0, 2), (0.25, 3), (1.0, 4)] {
        let other = sample(200, 16, shift, seed);
        let r = mmd_auto(&base, &other)?;
        println!(
            "shift {shift:<4}: sigma {:.3} gamma {:.5} MMD2 biased {:.5} unbiased {:.5}",
            r.sigma.unwrap(),
            r.gamma,
            r.mmd2_biased,
            r.mmd2_unbiased
        );
    }

    let sigma = median_heuristic_sigma(&base, &base)?;
    let same = mmd(&base, &base, gamma_from_sigma(sigma))?;
    println!("identical sets: MMD2 biased {}", same.mmd2_biased);
    Ok(())
}
