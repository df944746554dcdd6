//! Where does the decoder look? A synthetic tensor in which structural
//! tokens attend to the layout prior and content tokens to the image.

use doctags_prior::analysis::{aggregate_attention, phase_shift, AttentionTensor, Segment, SegmentMap};
use doctags_prior::doctags::TokenClass;
use ndarray::Array4;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Segment::*;
    // 6 image patches, 2 instruction, 4 prior, 4 generated
    let seg = SegmentMap::from_runs(&[(ImagePatches, 6), (Instruction, 2), (LayoutPrior, 4), (Generated, 4)])?;
    let kinds = [TokenClass::LayoutTag, TokenClass::Loc, TokenClass::Content, TokenClass::Content];
    let s = seg.len();

    let (layers, heads) = (2, 3);
    let mut values = Array4::<f64>::zeros((layers, heads, s, s));
    for l in 0..layers {
        for h in 0..heads {
            for i in 0..s {
                // one head per layer carries the signal, the rest spread evenly over the past
                let peak = match (h, i) {
                    (0, 12 | 13) => Some(8 + (i + l) % 4),
                    (0, 14 | 15) => Some((i + l) % 6),
                    _ => None,
                };
                match peak {
                    Some(j) => {
                        for k in 0..i {
                            values[[l, h, i, k]] = 0.2 / i as f64;
                        }
                        values[[l, h, i, j]] += 0.8;
                    }
                    None => {
                        let width = i.max(1);
                        for k in 0..width {
                            values[[l, h, i, k]] = 1.0 / width as f64;
                        }
                    }
                }
            }
        }
    }
    let tensor = AttentionTensor::from_array(values)?;
    let agg = aggregate_attention(&tensor);
    println!("aggregated row 12: {:.3}", agg.row(12));
    let summary = phase_shift(&tensor, &seg, &kinds)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
