//! Evaluation metrics for predicted DocTags against references.
//!
//! Text metrics (BLEU, token F1, normalized edit distance) run on a plain
//! text flattening of each document: element contents in document order
//! joined by newlines, table rows joined by newlines and cells by ` | `.
//! Table metrics (TEDS, TEDS-S) compare `<otsl>` trees, and reading order is
//! scored by matching boxes and diffing the resulting index sequence.

mod table;
mod text;
mod tree;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{otsl_body_to_tree, otsl_to_tree, teds, TableNode, TableTree};
pub use text::{bleu, edit_distance_norm, levenshtein, token_prf, Prf};
pub use tree::{tree_edit_distance, tree_edit_distance_by, Tree};

use crate::doctags::{DocElement, DocTagsDoc, LayoutTag};

/// Boxes must overlap at least this much (IoU) to be matched.
pub const MATCH_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed otsl table: {0}")]
    MalformedOtsl(String),
    #[error("page `{0}` appears more than once")]
    DuplicatePage(String),
}

/// Plain text view of a document used by the text metrics.
pub fn flatten(doc: &DocTagsDoc) -> String {
    let mut parts: Vec<String> = Vec::new();
    for el in doc.walk() {
        if el.tag == LayoutTag::Otsl {
            let rendered = match otsl_to_tree(el) {
                Ok(tree) => table::table_rows(&tree)
                    .iter()
                    .map(|r| r.join(" | "))
                    .collect::<Vec<_>>()
                    .join("\n"),
                // unparseable table bodies still contribute their words
                Err(_) => crate::doctags::tokenize(&el.content)
                    .map(|t| t.into_iter().filter(|w| !w.starts_with('<')).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default(),
            };
            if !rendered.trim().is_empty() {
                parts.push(rendered);
            }
        } else if !el.content.trim().is_empty() {
            parts.push(el.content.trim().to_string());
        }
    }
    parts.join("\n")
}

/// Matches `pred` elements to `reference` elements: same tag, IoU at least
/// [`MATCH_IOU_THRESHOLD`], greedily by descending IoU (ties by index).
/// Returns, for each pred element, the matched reference index.
pub fn match_elements(pred: &[&DocElement], reference: &[&DocElement]) -> Vec<Option<usize>> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            if let (Some(pl), Some(rl)) = (p.locs, r.locs) {
                let v = pl.iou(&rl);
                if p.tag == r.tag && v >= MATCH_IOU_THRESHOLD {
                    candidates.push((v, i, j));
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_match = vec![None; pred.len()];
    let mut ref_used = vec![false; reference.len()];
    for (_, i, j) in candidates {
        if pred_match[i].is_none() && !ref_used[j] {
            pred_match[i] = Some(j);
            ref_used[j] = true;
        }
    }
    pred_match
}

fn located(doc: &DocTagsDoc) -> Vec<&DocElement> {
    doc.elements.iter().filter(|e| e.locs.is_some()).collect()
}

/// Normalized edit distance between the reference indices of the matched
/// pred elements (in pred order) and `0..n_ref`. Unmatched pred elements
/// never equal any reference index.
pub fn reading_order_ed(pred: &DocTagsDoc, reference: &DocTagsDoc) -> f64 {
    let p = located(pred);
    let r = located(reference);
    let longest = p.len().max(r.len());
    if longest == 0 {
        return 0.0;
    }
    let seq: Vec<Option<usize>> = match_elements(&p, &r);
    let identity: Vec<Option<usize>> = (0..r.len()).map(Some).collect();
    // `None` must never match, so compare through a wrapper that is unequal to everything
    #[derive(PartialEq)]
    struct Idx(Option<usize>, usize);
    let a: Vec<Idx> = seq.iter().enumerate().map(|(k, v)| Idx(*v, v.map_or(usize::MAX - k, |_| 0))).collect();
    let b: Vec<Idx> = identity.iter().map(|v| Idx(*v, 0)).collect();
    (levenshtein(&a, &b) as f64 / longest as f64).clamp(0.0, 1.0)
}

/// Tables of a document in document order.
fn tables(doc: &DocTagsDoc) -> Vec<&DocElement> {
    doc.walk().filter(|e| e.tag == LayoutTag::Otsl).collect()
}

/// Mean TEDS over the reference tables, pairing tables in document order.
/// Missing or unparseable predicted tables score 0. `None` when the
/// reference has no tables.
pub fn page_teds(pred: &DocTagsDoc, reference: &DocTagsDoc, structure_only: bool) -> Result<Option<f64>, MetricsError> {
    let refs = tables(reference);
    if refs.is_empty() {
        return Ok(None);
    }
    let preds = tables(pred);
    let mut total = 0.0;
    for (k, r) in refs.iter().enumerate() {
        let rt = otsl_to_tree(r)?;
        total += match preds.get(k).map(|p| otsl_to_tree(p)) {
            Some(Ok(pt)) => teds(&pt, &rt, structure_only),
            _ => 0.0,
        };
    }
    Ok(Some(total / refs.len() as f64))
}

/// Metrics for one page (also a row of the per-page CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageMetrics {
    pub page_id: String,
    pub bleu: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub edit_dist: f64,
    pub teds: Option<f64>,
    pub teds_s: Option<f64>,
    pub ro_ed: Option<f64>,
}

pub fn evaluate_page(page_id: &str, pred: &DocTagsDoc, reference: &DocTagsDoc) -> Result<PageMetrics, MetricsError> {
    let (p, r) = (flatten(pred), flatten(reference));
    let prf = token_prf(&p, &r);
    let any_located = pred.elements.iter().chain(&reference.elements).any(|e| e.locs.is_some());
    Ok(PageMetrics {
        page_id: page_id.to_string(),
        bleu: bleu(&p, &r),
        f1: prf.f1,
        precision: prf.precision,
        recall: prf.recall,
        edit_dist: edit_distance_norm(&p, &r),
        teds: page_teds(pred, reference, false)?,
        teds_s: page_teds(pred, reference, true)?,
        ro_ed: any_located.then(|| reading_order_ed(pred, reference)),
    })
}

/// Corpus averages. METEOR is not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub edit_dist: f64,
    /// Averaged over pages whose reference contains a table.
    pub teds: Option<f64>,
    pub teds_s: Option<f64>,
    /// Averaged over pages with located elements.
    pub reading_order_ed: Option<f64>,
    pub n_pages: usize,
}

#[derive(Debug, Clone)]
pub struct PagePair {
    pub page_id: String,
    pub pred: DocTagsDoc,
    pub reference: DocTagsDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub report: MetricReport,
    /// Sorted by page id.
    pub pages: Vec<PageMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Evaluates every page and averages, in page-id order.
pub fn evaluate_corpus(pairs: &[PagePair]) -> Result<CorpusEvaluation, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut seen = BTreeSet::new();
    let mut sorted: Vec<&PagePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    let mut pages = Vec::with_capacity(sorted.len());
    for pair in sorted {
        if !seen.insert(pair.page_id.as_str()) {
            return Err(MetricsError::DuplicatePage(pair.page_id.clone()));
        }
        pages.push(evaluate_page(&pair.page_id, &pair.pred, &pair.reference)?);
    }
    let avg = |f: fn(&PageMetrics) -> f64| mean(pages.iter().map(f)).unwrap_or(0.0);
    let report = MetricReport {
        bleu: avg(|p| p.bleu),
        f1: avg(|p| p.f1),
        precision: avg(|p| p.precision),
        recall: avg(|p| p.recall),
        edit_dist: avg(|p| p.edit_dist),
        teds: mean(pages.iter().filter_map(|p| p.teds)),
        teds_s: mean(pages.iter().filter_map(|p| p.teds_s)),
        reading_order_ed: mean(pages.iter().filter_map(|p| p.ro_ed)),
        n_pages: pages.len(),
    };
    Ok(CorpusEvaluation { report, pages })
}
