//! End-to-end run on synthetic pages: oracle detections -> layout prior ->
//! mock decoder, with and without the prior, then metrics and the
//! stability audit.

use std::collections::BTreeMap;

use doctags_prior::guard::{audit, GuardConfig};
use doctags_prior::layout::PostprocessConfig;
use doctags_prior::metrics::{evaluate_corpus, PagePair};
use doctags_prior::mock::{decode_corpus, generate_corpus, oracle_detections, DegradeConfig};
use doctags_prior::prior::build_prior;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = generate_corpus(500, 2024);
    let cfg = DegradeConfig::new(0.7, 0.05, 7)?;

    let mut priors = BTreeMap::new();
    for f in &fixtures {
        let prior = build_prior(&oracle_detections(f), &PostprocessConfig::default())?;
        priors.insert(f.page_id.clone(), prior);
    }
    let truth: BTreeMap<_, _> = fixtures.iter().map(|f| (f.page_id.clone(), f.truth.clone())).collect();

    for (name, priors) in [("with prior", priors), ("without prior", BTreeMap::new())] {
        let outputs = decode_corpus(&fixtures, &priors, &cfg);
        let pairs: Vec<PagePair> = outputs
            .iter()
            .map(|(id, doc, _)| PagePair {
                page_id: id.clone(),
                pred: doc.clone(),
                reference: truth[id].clone(),
            })
            .collect();
        let records: Vec<_> = outputs.into_iter().map(|(_, _, r)| r).collect();
        let report = evaluate_corpus(&pairs)?.report;
        let stability = audit(&records, &GuardConfig::default())?;
        let failures: usize = stability.stability.per_domain.values().map(|d| d.failures).sum();
        println!(
            "{name:>14}: F1 {:.3}  BLEU {:.3}  edit {:.3}  TEDS {:.3}  loops {failures}/{}",
            report.f1,
            report.bleu,
            report.edit_dist,
            report.teds.unwrap_or(f64::NAN),
            records.len()
        );
    }
    Ok(())
}
