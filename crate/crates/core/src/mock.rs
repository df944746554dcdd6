//! A seeded stand-in for the vision-language decoder.
//!
//! [`decode`] copies ground-truth elements that the layout prior covers and
//! drops the rest with a configurable probability. Without a prior it may
//! also "loop": stop early, never emit EOS, and repeat one element's tokens.
//! Alongside it live a synthetic fixture generator and an oracle detector
//! that turns fixtures back into detections.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doctags::{self, tokenize, DocElement, DocTagsDoc, LayoutTag, Locs};
use crate::guard::GenerationRecord;
use crate::layout::{BBox, Detection, PageDetections};
use crate::prior::{class_for_tag, LayoutPrior};
use crate::rng::SplitMix64;

/// Prior boxes must overlap a truth element at least this much (IoU).
pub const MATCH_IOU: f64 = 0.5;
pub const DEFAULT_LOOP_TOKENS: u64 = 12_000;
pub const LOOP_TAIL_LEN: usize = 512;
/// Fixture pages are square; one location unit is two pixels.
pub const FIXTURE_PAGE_SIZE: u32 = 1000;
pub const FIXTURE_DOMAINS: [&str; 7] = [
    "computer_science",
    "energy",
    "finance_en",
    "finance_fr",
    "hr",
    "industrial",
    "pharmaceuticals",
];
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const DOCTAGS_EXT: &str = "doctags";

#[derive(Debug, Error)]
pub enum MockError {
    #[error("invalid degrade config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageFixture {
    pub page_id: String,
    pub domain: String,
    pub truth: DocTagsDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeConfig {
    pub miss_rate_without_prior: f64,
    pub loop_rate_without_prior: f64,
    pub seed: u64,
    /// Token count reported for a looping generation.
    #[serde(default = "default_loop_tokens")]
    pub loop_tokens: u64,
}

fn default_loop_tokens() -> u64 {
    DEFAULT_LOOP_TOKENS
}

impl DegradeConfig {
    pub fn new(miss: f64, loop_rate: f64, seed: u64) -> Result<Self, MockError> {
        let cfg = DegradeConfig {
            miss_rate_without_prior: miss,
            loop_rate_without_prior: loop_rate,
            seed,
            loop_tokens: DEFAULT_LOOP_TOKENS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MockError> {
        for (name, v) in [("miss", self.miss_rate_without_prior), ("loop", self.loop_rate_without_prior)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MockError::InvalidConfig(format!("{name}={v} is outside [0, 1]")));
            }
        }
        if self.loop_tokens == 0 {
            return Err(MockError::InvalidConfig("loop_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Parses `miss=0.7,loop=0.1[,loop_tokens=N]`; the seed is set separately.
impl FromStr for DegradeConfig {
    type Err = MockError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = DegradeConfig {
            miss_rate_without_prior: 0.0,
            loop_rate_without_prior: 0.0,
            seed: 0,
            loop_tokens: DEFAULT_LOOP_TOKENS,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || MockError::InvalidConfig(format!("cannot read `{part}`"));
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key.trim() {
                "miss" => cfg.miss_rate_without_prior = value.trim().parse().map_err(|_| bad())?,
                "loop" => cfg.loop_rate_without_prior = value.trim().parse().map_err(|_| bad())?,
                "loop_tokens" => cfg.loop_tokens = value.trim().parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn covered(el: &DocElement, prior: Option<&LayoutPrior>) -> bool {
    let (Some(prior), Some(locs)) = (prior, el.locs) else {
        return false;
    };
    prior
        .items
        .iter()
        .any(|item| item.tag == el.tag && item.locs.iou(&locs) >= MATCH_IOU)
}

/// Keeps covered elements, drops uncovered ones with probability `miss`.
/// Containers keep whichever children survive.
fn degrade(el: &DocElement, prior: Option<&LayoutPrior>, miss: f64, rng: &mut SplitMix64) -> Option<DocElement> {
    if covered(el, prior) {
        return Some(el.clone());
    }
    if el.children.is_empty() {
        let dropped = rng.bernoulli(miss);
        return (!dropped).then(|| el.clone());
    }
    let kept: Vec<DocElement> = el
        .children
        .iter()
        .filter_map(|c| degrade(c, prior, miss, rng))
        .collect();
    if kept.is_empty() {
        return None;
    }
    if kept.len() == el.children.len() {
        return Some(el.clone());
    }
    let mut out = DocElement::new(el.tag).with_children(kept);
    if let Some(l) = el.locs {
        out = out.with_locs(l);
    }
    Some(out)
}

fn loop_unit(el: Option<&DocElement>) -> Vec<String> {
    let fallback = || vec!["<text>".to_string(), "</text>".to_string()];
    match el {
        Some(e) => tokenize(&DocTagsDoc::new(vec![e.clone()]).serialize()).unwrap_or_else(|_| fallback()),
        None => fallback(),
    }
}

/// Mock generation for one page.
///
/// Draw order from the per-page generator: the loop draw (only when the
/// prior is skipped), one miss draw per uncovered leaf in document order,
/// then the cut position of a looping page.
pub fn decode(fixture: &PageFixture, prior: Option<&LayoutPrior>, cfg: &DegradeConfig) -> (DocTagsDoc, GenerationRecord) {
    let mut rng = SplitMix64::for_page(cfg.seed, &fixture.page_id);
    let looping = prior.is_none() && rng.bernoulli(cfg.loop_rate_without_prior);
    let mut kept: Vec<DocElement> = fixture
        .truth
        .elements
        .iter()
        .filter_map(|e| degrade(e, prior, cfg.miss_rate_without_prior, &mut rng))
        .collect();

    let record = |token_count: u64, eos: bool, tail: Option<Vec<String>>| GenerationRecord {
        page_id: fixture.page_id.clone(),
        domain: fixture.domain.clone(),
        token_count,
        ended_with_eos: eos,
        tail_tokens: tail,
    };

    if !looping {
        // keep the original spacing when nothing was dropped
        let doc = if kept == fixture.truth.elements {
            fixture.truth.clone()
        } else {
            DocTagsDoc::new(kept)
        };
        let rec = record(doc.token_count() as u64, true, None);
        return (doc, rec);
    }

    let cut = rng.below(kept.len() + 1);
    let unit = loop_unit(kept.get(cut).or(kept.last()));
    kept.truncate(cut);
    let doc = DocTagsDoc::new(kept);
    let tail: Vec<String> = unit.iter().cycle().take(LOOP_TAIL_LEN).cloned().collect();
    let count = cfg.loop_tokens.max(doc.token_count() as u64 + tail.len() as u64);
    let rec = record(count, false, Some(tail));
    (doc, rec)
}

const WORDS: [&str; 40] = [
    "annual", "revenue", "growth", "energy", "supply", "contract", "policy", "employee", "benefit", "report",
    "quarter", "market", "risk", "capital", "asset", "plant", "safety", "clinical", "trial", "dose", "system",
    "network", "model", "data", "table", "value", "total", "net", "margin", "cost", "price", "volume", "region",
    "europe", "france", "audit", "review", "process", "control", "summary",
];

/// Between `min` and `min + extra - 1` random words (exactly `min` when `extra` is 0).
fn words(rng: &mut SplitMix64, min: usize, extra: usize) -> String {
    let n = if extra == 0 { min } else { min + rng.below(extra) };
    (0..n).map(|_| WORDS[rng.below(WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn table_body(rng: &mut SplitMix64) -> String {
    let (rows, cols) = (2 + rng.below(3), 2 + rng.below(3));
    let mut body = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if r > 0 && c > 0 && rng.bernoulli(0.1) {
                body.push_str("<ecel>");
            } else {
                body.push_str("<fcel>");
                body.push_str(&words(rng, 1, 2));
            }
        }
        body.push_str("<nl>");
    }
    body
}

fn locs(x0: u16, y0: u16, x1: u16, y1: u16) -> Locs {
    Locs::new(x0, y0, x1, y1).expect("generator boxes are ordered and on the grid")
}

/// A seeded synthetic page: a single column of non-overlapping elements.
pub fn generate_page(page_id: &str, domain: &str, seed: u64) -> PageFixture {
    const LEFT: u16 = 20;
    const RIGHT: u16 = 480;
    const BOTTOM: u16 = 480;
    let mut rng = SplitMix64::for_page(seed, page_id);
    let target = 4 + rng.below(11);
    let mut y: u16 = 10;
    let mut elements = Vec::new();

    let header = rng.bernoulli(0.5);
    if header {
        elements.push(
            DocElement::new(LayoutTag::PageHeader)
                .with_locs(locs(LEFT, y, RIGHT, y + 8))
                .with_content(words(&mut rng, 3, 0)),
        );
        y += 12;
    }
    while elements.len() < target && y < BOTTOM - 40 {
        let kind = rng.below(10);
        let (el, h) = match kind {
            0 => (DocElement::new(LayoutTag::SectionHeader).with_content(words(&mut rng, 2, 4)), 10),
            1 => (DocElement::new(LayoutTag::Title).with_content(words(&mut rng, 3, 4)), 14),
            2 => {
                let n = 2 + rng.below(3);
                let items: Vec<DocElement> = (0..n)
                    .map(|k| {
                        let top = y + 10 * k as u16;
                        DocElement::new(LayoutTag::ListItem)
                            .with_locs(locs(LEFT + 10, top, RIGHT, top + 8))
                            .with_content(words(&mut rng, 3, 6))
                    })
                    .collect();
                let h = 10 * n as u16;
                elements.push(DocElement::new(LayoutTag::UnorderedList).with_children(items));
                y += h + 4;
                continue;
            }
            3 => (DocElement::new(LayoutTag::Otsl).with_content(table_body(&mut rng)), 36),
            4 => (DocElement::new(LayoutTag::Picture), 40),
            5 => (DocElement::new(LayoutTag::Formula).with_content(words(&mut rng, 3, 0)), 10),
            6 => (DocElement::new(LayoutTag::Code).with_content(words(&mut rng, 4, 4)), 16),
            _ => (DocElement::new(LayoutTag::Text).with_content(words(&mut rng, 8, 20)), 24),
        };
        let h = h + rng.below(8) as u16;
        if y + h >= BOTTOM {
            break;
        }
        elements.push(el.with_locs(locs(LEFT, y, RIGHT, y + h)));
        y += h + 4;
    }
    if rng.bernoulli(0.3) {
        elements.push(
            DocElement::new(LayoutTag::Footnote)
                .with_locs(locs(LEFT, 484, RIGHT, 489))
                .with_content(words(&mut rng, 5, 0)),
        );
    }
    if rng.bernoulli(0.5) {
        elements.push(
            DocElement::new(LayoutTag::PageFooter)
                .with_locs(locs(LEFT, 492, RIGHT, 498))
                .with_content(words(&mut rng, 2, 0)),
        );
    }
    PageFixture {
        page_id: page_id.to_string(),
        domain: domain.to_string(),
        truth: DocTagsDoc::new(elements),
    }
}

/// `n` pages cycling through [`FIXTURE_DOMAINS`], ids `page-00000`, ...
pub fn generate_corpus(n: usize, seed: u64) -> Vec<PageFixture> {
    (0..n)
        .map(|i| generate_page(&format!("page-{i:05}"), FIXTURE_DOMAINS[i % FIXTURE_DOMAINS.len()], seed))
        .collect()
}

/// Perfect detections for a fixture: every located leaf whose tag has a
/// detector class, score 0.99, on a [`FIXTURE_PAGE_SIZE`] square page.
pub fn oracle_detections(fixture: &PageFixture) -> PageDetections {
    let scale = f64::from(FIXTURE_PAGE_SIZE) / f64::from(doctags::MAX_LOC);
    let detections = fixture
        .truth
        .elements
        .iter()
        .flat_map(DocElement::walk)
        .filter(|e| e.children.is_empty())
        .filter_map(|e| {
            let cls = class_for_tag(e.tag)?;
            let [x0, y0, x1, y1] = e.locs?.to_array().map(|v| f64::from(v) * scale);
            let bbox = BBox::new(x0, y0, x1, y1).ok()?;
            Detection::new(i64::from(cls), 0.99, bbox).ok()
        })
        .collect();
    PageDetections::new(
        fixture.page_id.clone(),
        i64::from(FIXTURE_PAGE_SIZE),
        i64::from(FIXTURE_PAGE_SIZE),
        detections,
    )
    .expect("fixture page size is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub page_id: String,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MockError + '_ {
    move |source| MockError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads `<page_id>.doctags` files plus `manifest.jsonl` for domains.
/// Without a manifest every `.doctags` file is loaded with domain `default`.
pub fn read_fixture_dir(dir: &Path) -> Result<Vec<PageFixture>, MockError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let entries: Vec<(String, String)> = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| {
                serde_json::from_str::<ManifestEntry>(l)
                    .map(|e| (e.page_id, e.domain))
                    .map_err(|e| MockError::Format {
                        path: format!("{}:{}", manifest_path.display(), k + 1),
                        reason: e.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?
    } else {
        let mut ids = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.extension().is_some_and(|e| e == DOCTAGS_EXT) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push((stem.to_string(), "default".to_string()));
                }
            }
        }
        ids
    };
    let mut fixtures = Vec::with_capacity(entries.len());
    for (page_id, domain) in entries {
        let path = dir.join(format!("{page_id}.{DOCTAGS_EXT}"));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let truth = doctags::parse(&text).map_err(|e| MockError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        fixtures.push(PageFixture { page_id, domain, truth });
    }
    fixtures.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    Ok(fixtures)
}

/// Writes fixtures as `.doctags` files plus a manifest.
pub fn write_fixture_dir(dir: &Path, fixtures: &[PageFixture]) -> Result<(), MockError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = String::new();
    for f in fixtures {
        let path = dir.join(format!("{}.{DOCTAGS_EXT}", f.page_id));
        fs::write(&path, f.truth.serialize()).map_err(io_err(&path))?;
        let entry = ManifestEntry {
            page_id: f.page_id.clone(),
            domain: f.domain.clone(),
            width: Some(FIXTURE_PAGE_SIZE),
            height: Some(FIXTURE_PAGE_SIZE),
        };
        manifest.push_str(&serde_json::to_string(&entry).expect("manifest entry serializes"));
        manifest.push('\n');
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(io_err(&path))
}

/// Decodes every fixture; pages are looked up in `priors` by id and decoded
/// without a prior when absent. Results are in page-id order.
pub fn decode_corpus(
    fixtures: &[PageFixture],
    priors: &BTreeMap<String, LayoutPrior>,
    cfg: &DegradeConfig,
) -> Vec<(String, DocTagsDoc, GenerationRecord)> {
    let mut out: Vec<_> = fixtures
        .iter()
        .map(|f| {
            let (doc, rec) = decode(f, priors.get(&f.page_id), cfg);
            (f.page_id.clone(), doc, rec)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::PostprocessConfig;
    use crate::prior::build_prior;

    fn prior_for(f: &PageFixture) -> LayoutPrior {
        build_prior(&oracle_detections(f), &PostprocessConfig::default()).unwrap()
    }

    #[test]
    fn exact_prior_is_identity() {
        let cfg = DegradeConfig::new(1.0, 1.0, 3).unwrap();
        for f in generate_corpus(50, 11) {
            let (doc, rec) = decode(&f, Some(&prior_for(&f)), &cfg);
            assert_eq!(doc, f.truth);
            assert!(rec.ended_with_eos);
            assert_eq!(rec.token_count, f.truth.token_count() as u64);
        }
    }

    #[test]
    fn skipped_prior_full_miss_is_empty() {
        let cfg = DegradeConfig::new(1.0, 0.0, 3).unwrap();
        let f = generate_page("p", "hr", 1);
        let (doc, rec) = decode(&f, None, &cfg);
        assert!(doc.elements.is_empty());
        assert!(rec.ended_with_eos);
    }

    #[test]
    fn looping_record_shape() {
        let cfg = DegradeConfig::new(0.0, 1.0, 3).unwrap();
        let f = generate_page("p", "hr", 1);
        let (doc, rec) = decode(&f, None, &cfg);
        assert!(!rec.ended_with_eos);
        assert!(rec.token_count > 10_000);
        assert!(doc.elements.len() <= f.truth.elements.len());
        let tail = rec.tail_tokens.unwrap();
        assert_eq!(tail.len(), LOOP_TAIL_LEN);
        assert!(crate::guard::detect_period(&tail, 4).is_some());
    }

    #[test]
    fn deterministic() {
        let cfg = DegradeConfig::new(0.5, 0.5, 99).unwrap();
        let f = generate_page("p7", "energy", 5);
        assert_eq!(decode(&f, None, &cfg), decode(&f, None, &cfg));
        assert_eq!(generate_page("p7", "energy", 5), f);
    }

    #[test]
    fn fixtures_round_trip() {
        for f in generate_corpus(30, 2) {
            let text = f.truth.serialize();
            assert_eq!(doctags::parse(&text).unwrap().serialize(), text);
            assert!(f.truth.validate().is_ok());
        }
    }

    #[test]
    fn degrade_config_parsing() {
        let c: DegradeConfig = "miss=0.7,loop=0.1".parse().unwrap();
        assert_eq!((c.miss_rate_without_prior, c.loop_rate_without_prior), (0.7, 0.1));
        assert!("miss=1.5".parse::<DegradeConfig>().is_err());
        assert!("speed=1".parse::<DegradeConfig>().is_err());
    }
}
