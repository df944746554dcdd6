//! Prompt token overhead across a corpus of priors.

use doctags_prior::layout::PostprocessConfig;
use doctags_prior::mock::{generate_corpus, oracle_detections};
use doctags_prior::prior::{build_prior, build_prompt, overhead_stats, DEFAULT_INSTRUCTION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut prompts = Vec::new();
    for page in generate_corpus(1000, 99) {
        let prior = build_prior(&oracle_detections(&page), &PostprocessConfig::default())?;
        let prompt = build_prompt(Some(&prior), DEFAULT_INSTRUCTION);
        assert_eq!(prompt.token_overhead, 6 * prior.items.len() + 2);
        prompts.push(prompt);
    }
    let stats = overhead_stats(&prompts)?;
    println!(
        "{} prompts: min {} median {} mean {:.2} max {}",
        prompts.len(),
        stats.min,
        stats.median,
        stats.mean,
        stats.max
    );
    println!("no prior: {} tokens", build_prompt(None, DEFAULT_INSTRUCTION).token_overhead);
    Ok(())
}
