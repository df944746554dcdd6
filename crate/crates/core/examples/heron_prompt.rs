//! Detections for one page become a DocTags layout prior and the decoder prompt.

use doctags_prior::layout::{PageDetections, PostprocessConfig};
use doctags_prior::prior::{build_prior, build_prompt, DEFAULT_INSTRUCTION};

const DETECTIONS: &str = include_str!("../tests/fixtures/heron_detections.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let page = PageDetections::from_json(DETECTIONS)?;
    let prior = build_prior(&page, &PostprocessConfig::default())?;
    let prompt = build_prompt(Some(&prior), DEFAULT_INSTRUCTION);
    println!("{}", prompt.text());
    println!("-- {} items, {} prompt tokens of overhead", prior.items.len(), prompt.token_overhead);
    assert_eq!(prompt.token_overhead, 6 * prior.items.len() + 2);
    Ok(())
}
