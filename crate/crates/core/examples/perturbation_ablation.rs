//! The S-P-D ablation grid: shuffle, injection probability and item dropout.

use doctags_prior::layout::{PageDetections, PostprocessConfig};
use doctags_prior::prior::{build_prior, perturb, PerturbConfig};

const DETECTIONS: &str = include_str!("../tests/fixtures/heron_detections.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prior = build_prior(&PageDetections::from_json(DETECTIONS)?, &PostprocessConfig::default())?;
    let grid = ["ns-0.8-0.0", "ns-1.0-0.0", "ys-0.8-0.0", "ys-1.0-0.0", "ys-1.0-0.3"];

    for label in grid {
        let cfg: PerturbConfig = label.parse()?;
        assert_eq!(cfg.label(), label);
        let trials = 2000u64;
        let (mut injected, mut kept) = (0u64, 0usize);
        for seed in 0..trials {
            if let Some(p) = perturb(&prior, &cfg.with_seed(seed)) {
                injected += 1;
                kept += p.items.len();
            }
        }
        println!(
            "{label}: injected {:.3}, items kept when injected {:.2} of {}",
            injected as f64 / trials as f64,
            kept as f64 / injected.max(1) as f64,
            prior.items.len()
        );
    }

    let shuffled = perturb(&prior, &"ys-1.0-0.0".parse::<PerturbConfig>()?.with_seed(7)).unwrap();
    println!("\nys-1.0-0.0, seed 7:\n{}", shuffled.block());
    Ok(())
}
