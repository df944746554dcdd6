//! Location-token loss masking.
//!
//! Location tokens get mask 0 and contribute nothing to the loss; layout
//! tags, control tokens and content keep mask 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doctags::{classify_token, TokenClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("sequence has no log-probabilities")]
    MissingLogprobs,
    #[error("{tokens} tokens but {logprobs} log-probabilities")]
    LengthMismatch { tokens: usize, logprobs: usize },
    #[error("log-probability {value} at position {index} is not a finite value <= 0")]
    InvalidLogprob { index: usize, value: f64 },
}

/// A target token sequence with optional per-token log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>, logprobs: Option<Vec<f64>>) -> Result<Self, MaskError> {
        let seq = TokenSeq { tokens, logprobs };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        let Some(lp) = &self.logprobs else {
            return Ok(());
        };
        if lp.len() != self.tokens.len() {
            return Err(MaskError::LengthMismatch {
                tokens: self.tokens.len(),
                logprobs: lp.len(),
            });
        }
        if let Some((index, &value)) = lp.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v <= 0.0)) {
            return Err(MaskError::InvalidLogprob { index, value });
        }
        Ok(())
    }
}

/// One bit per token: 0 for location tokens, 1 otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossMask {
    pub bits: Vec<u8>,
}

impl LossMask {
    pub fn unmasked(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }
}

pub fn build_mask<S: AsRef<str>>(tokens: &[S]) -> LossMask {
    LossMask {
        bits: tokens
            .iter()
            .map(|t| u8::from(classify_token(t.as_ref()) != TokenClass::Loc))
            .collect(),
    }
}

/// Loss summary for one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedLoss {
    pub mask: LossMask,
    /// `-sum(mask[i] * logprob[i])`, unnormalized.
    pub masked_nll: f64,
    /// `masked_nll` divided by the number of unmasked tokens; absent when
    /// every token is masked. Derived, not part of the training objective.
    pub mean_unmasked_nll: Option<f64>,
    /// `-sum(logprob[i])` over all tokens.
    pub unmasked_nll: f64,
}

/// Sum of negative log-probabilities over unmasked positions.
pub fn masked_nll(seq: &TokenSeq) -> Result<f64, MaskError> {
    masked_loss(seq).map(|l| l.masked_nll)
}

pub fn masked_loss(seq: &TokenSeq) -> Result<MaskedLoss, MaskError> {
    seq.validate()?;
    let logprobs = seq.logprobs.as_ref().ok_or(MaskError::MissingLogprobs)?;
    let mask = build_mask(&seq.tokens);
    // 0.0 - x keeps the result at +0.0 when nothing is summed
    let masked_nll = 0.0
        - mask
            .bits
            .iter()
            .zip(logprobs)
            .filter(|(b, _)| **b == 1)
            .map(|(_, lp)| lp)
            .sum::<f64>();
    let unmasked_nll = 0.0 - logprobs.iter().sum::<f64>();
    let n = mask.unmasked();
    Ok(MaskedLoss {
        mean_unmasked_nll: (n > 0).then(|| masked_nll / n as f64),
        mask,
        masked_nll,
        unmasked_nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn mask_examples() {
        let seq = toks(&["<text>", "<loc_100>", "<loc_200>", "<loc_300>", "<loc_400>", "hello", "</text>"]);
        assert_eq!(build_mask(&seq).bits, [1, 0, 0, 0, 0, 1, 1]);
        assert_eq!(build_mask(&toks(&["a", "b"])).bits, [1, 1]);
        assert_eq!(build_mask(&toks(&["<loc_0>", "<loc_500>"])).bits, [0, 0]);
    }

    #[test]
    fn nll_examples() {
        let seq = TokenSeq::new(toks(&["a", "<loc_5>", "b"]), Some(vec![-1.0, -100.0, -2.0])).unwrap();
        let loss = masked_loss(&seq).unwrap();
        assert_eq!(loss.masked_nll, 3.0);
        assert_eq!(loss.mean_unmasked_nll, Some(1.5));
        assert_eq!(loss.unmasked_nll, 103.0);

        let all_loc = TokenSeq::new(toks(&["<loc_1>", "<loc_2>"]), Some(vec![-3.0, -4.0])).unwrap();
        let loss = masked_loss(&all_loc).unwrap();
        assert_eq!(loss.masked_nll, 0.0);
        assert!(loss.masked_nll.is_sign_positive());
        assert_eq!(loss.mean_unmasked_nll, None);

        let plain = TokenSeq::new(toks(&["x", "y"]), Some(vec![-0.5, -0.25])).unwrap();
        let loss = masked_loss(&plain).unwrap();
        assert_eq!(loss.masked_nll, loss.unmasked_nll);
    }

    #[test]
    fn nll_errors() {
        let seq = TokenSeq::new(toks(&["a"]), None).unwrap();
        assert_eq!(masked_nll(&seq), Err(MaskError::MissingLogprobs));
        assert!(matches!(
            TokenSeq::new(toks(&["a"]), Some(vec![])),
            Err(MaskError::LengthMismatch { .. })
        ));
        assert!(matches!(
            TokenSeq::new(toks(&["a"]), Some(vec![0.5])),
            Err(MaskError::InvalidLogprob { index: 0, .. })
        ));
    }
}
