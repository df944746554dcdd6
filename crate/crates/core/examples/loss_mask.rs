//! Location tokens are masked out of the training loss.

use doctags_prior::doctags::tokenize;
use doctags_prior::mask::{build_mask, masked_loss, TokenSeq};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let target = "<text><loc_100><loc_200><loc_300><loc_400>Net revenue rose</text>";
    let tokens = tokenize(target)?;
    let mask = build_mask(&tokens);
    for (t, m) in tokens.iter().zip(&mask.bits) {
        println!("{m} {t}");
    }

    // fake per-token log-probabilities; the loc tokens are deliberately terrible
    let logprobs: Vec<f64> = tokens
        .iter()
        .map(|t| if t.starts_with("<loc_") { -25.0 } else { -0.4 })
        .collect();
    let loss = masked_loss(&TokenSeq::new(tokens, Some(logprobs))?)?;
    println!(
        "masked NLL {:.2} over {} tokens (unmasked NLL would be {:.2})",
        loss.masked_nll,
        loss.mask.unmasked(),
        loss.unmasked_nll
    );
    Ok(())
}
