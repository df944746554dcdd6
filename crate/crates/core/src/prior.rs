//! Layout prior construction.
//!
//! Post-processed detections are quantized onto the `0..=500` location grid,
//! mapped to DocTags layout tags, put in reading order and serialized into a
//! `<layout>` block that is appended to the instruction prompt.
//!
//! [`perturb`] implements the three ablation axes: shuffled order, stochastic
//! injection of the whole prior and per-item dropout. Configurations are
//! written `S-P-D`, e.g. `ys-1.0-0.3`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doctags::{self, DocElement, DocTagsDoc, DocTagsError, LayoutTag, LocToken, Locs, MAX_LOC};
use crate::layout::{postprocess, BBox, PageDetections, PostprocessConfig};
use crate::rng::SplitMix64;

pub const DEFAULT_INSTRUCTION: &str = "Convert this page to Docling:";

/// Items whose `y_min` differ by at most this many bins may share a row.
pub const BAND_TOLERANCE: u16 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("page size must be positive, got {width}x{height}")]
    InvalidPage { width: i64, height: i64 },
    #[error("detector class {0} outside 0..=16")]
    UnknownClass(i64),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad perturbation config `{0}`, expected S-P-D such as ys-1.0-0.3")]
    BadPerturbConfig(String),
    #[error("not a layout prior: {0}")]
    NotAPrior(String),
    #[error(transparent)]
    DocTags(#[from] DocTagsError),
}

/// Maps `cls * 500 / dim` to the grid, rounding half away from zero.
fn to_bin(coord: f64, dim: f64) -> LocToken {
    LocToken::saturating((coord * f64::from(MAX_LOC) / dim).round() as i64)
}

/// Quantizes a pixel box onto the location grid of a `width x height` page.
pub fn quantize(bbox: &BBox, width: i64, height: i64) -> Result<Locs, PriorError> {
    if width <= 0 || height <= 0 {
        return Err(PriorError::InvalidPage { width, height });
    }
    let (w, h) = (width as f64, height as f64);
    Ok(Locs {
        x_min: to_bin(bbox.x_min, w),
        y_min: to_bin(bbox.y_min, h),
        x_max: to_bin(bbox.x_max, w),
        y_max: to_bin(bbox.y_max, h),
    })
}

const CLASS_TAGS: [LayoutTag; 17] = [
    LayoutTag::Caption,
    LayoutTag::Footnote,
    LayoutTag::Formula,
    LayoutTag::ListItem,
    LayoutTag::PageFooter,
    LayoutTag::PageHeader,
    LayoutTag::Picture,
    LayoutTag::SectionHeader,
    LayoutTag::Otsl,
    LayoutTag::Text,
    LayoutTag::Title,
    LayoutTag::DocumentIndex,
    LayoutTag::Code,
    LayoutTag::CheckboxSelected,
    LayoutTag::CheckboxUnselected,
    LayoutTag::Form,
    LayoutTag::KeyValueRegion,
];

/// Detector class id to layout tag.
pub fn map_class(cls: i64) -> Result<LayoutTag, PriorError> {
    usize::try_from(cls)
        .ok()
        .and_then(|i| CLASS_TAGS.get(i).copied())
        .ok_or(PriorError::UnknownClass(cls))
}

/// Inverse of [`map_class`]; `None` for tags no detector class produces.
pub fn class_for_tag(tag: LayoutTag) -> Option<u8> {
    CLASS_TAGS.iter().position(|&t| t == tag).map(|i| i as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriorItem {
    pub tag: LayoutTag,
    pub locs: Locs,
}

impl PriorItem {
    pub fn to_element(self) -> DocElement {
        DocElement::new(self.tag).with_locs(self.locs)
    }

    fn sort_key(&self) -> (u16, u16, u16, u16, LayoutTag) {
        let [x0, y0, x1, y1] = self.locs.to_array();
        (y0, x0, x1, y1, self.tag)
    }
}

fn same_band(anchor: &PriorItem, item: &PriorItem) -> bool {
    let [_, ay0, _, ay1] = anchor.locs.to_array();
    let [_, by0, _, by1] = item.locs.to_array();
    by0.abs_diff(ay0) <= BAND_TOLERANCE && ay1.min(by1) > ay0.max(by0)
}

/// Orders items top to bottom, left to right within a row.
///
/// Items are scanned by `y_min`; a row collects the following items whose
/// `y_min` is within [`BAND_TOLERANCE`] of the row's first item and whose
/// vertical extent overlaps it. Rows are ordered by `x_min`.
pub fn reading_order(items: &[PriorItem]) -> Vec<PriorItem> {
    let mut sorted = items.to_vec();
    sorted.sort_by_key(PriorItem::sort_key);
    let mut out = Vec::with_capacity(sorted.len());
    let mut start = 0;
    while start < sorted.len() {
        let anchor = sorted[start];
        let mut end = start + 1;
        while end < sorted.len() && same_band(&anchor, &sorted[end]) {
            end += 1;
        }
        let band = &mut sorted[start..end];
        band.sort_by_key(|i| {
            let [x0, y0, x1, y1] = i.locs.to_array();
            (x0, y0, x1, y1, i.tag)
        });
        out.extend_from_slice(band);
        start = end;
    }
    out
}

/// Ordered `(tag, box)` pairs for one page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutPrior {
    pub page_id: String,
    pub items: Vec<PriorItem>,
}

impl LayoutPrior {
    pub fn to_doc(&self) -> DocTagsDoc {
        DocTagsDoc::new(self.items.iter().map(|i| i.to_element()).collect())
    }

    /// Items serialized one per line.
    pub fn fragment(&self) -> String {
        self.to_doc().serialize()
    }

    /// The `<layout>` block injected into the prompt.
    pub fn block(&self) -> String {
        if self.items.is_empty() {
            return "<layout>\n</layout>".to_string();
        }
        format!("<layout>\n{}\n</layout>", self.fragment())
    }

    /// Reads a prior back from a `<layout>` block or a bare fragment.
    pub fn from_block(page_id: impl Into<String>, block: &str) -> Result<Self, PriorError> {
        let trimmed = block.trim();
        let inner = trimmed
            .strip_prefix("<layout>")
            .and_then(|s| s.strip_suffix("</layout>"))
            .unwrap_or(trimmed);
        let doc = doctags::parse(inner)?;
        let items = doc
            .elements
            .iter()
            .map(|e| match e.locs {
                Some(locs) if e.content.is_empty() && e.children.is_empty() => Ok(PriorItem { tag: e.tag, locs }),
                _ => Err(PriorError::NotAPrior(format!("`{}` element without a bare box", e.tag))),
            })
            .collect::<Result<_, _>>()?;
        Ok(LayoutPrior {
            page_id: page_id.into(),
            items,
        })
    }
}

/// Post-processes, quantizes, maps and orders one page of detections.
pub fn build_prior(page: &PageDetections, cfg: &PostprocessConfig) -> Result<LayoutPrior, PriorError> {
    let cleaned = postprocess(page, cfg);
    let items = cleaned
        .detections
        .iter()
        .map(|d| {
            Ok(PriorItem {
                tag: map_class(i64::from(d.cls))?,
                locs: quantize(&d.bbox, i64::from(page.width), i64::from(page.height))?,
            })
        })
        .collect::<Result<Vec<_>, PriorError>>()?;
    Ok(LayoutPrior {
        page_id: page.page_id.clone(),
        items: reading_order(&items),
    })
}

/// One ablation configuration plus its seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    /// Shuffle item order (`ys`) or keep reading order (`ns`).
    pub shuffle: bool,
    /// Probability that the prior is injected at all.
    pub inject_prob: f64,
    /// Per-item drop probability.
    pub dropout: f64,
    pub seed: u64,
}

impl PerturbConfig {
    /// The unperturbed configuration, `ns-1.0-0.0`.
    pub fn identity() -> Self {
        PerturbConfig {
            shuffle: false,
            inject_prob: 1.0,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        PerturbConfig { seed, ..self }
    }

    /// The `S-P-D` label, e.g. `ys-1.0-0.3`.
    pub fn label(&self) -> String {
        format!(
            "{}-{}-{}",
            if self.shuffle { "ys" } else { "ns" },
            fmt_prob(self.inject_prob),
            fmt_prob(self.dropout)
        )
    }
}

fn fmt_prob(p: f64) -> String {
    let one_decimal = format!("{p:.1}");
    if one_decimal.parse::<f64>() == Ok(p) {
        one_decimal
    } else {
        p.to_string()
    }
}

impl fmt::Display for PerturbConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses an `S-P-D` label (spaces around the dashes are allowed). The seed is 0.
impl FromStr for PerturbConfig {
    type Err = PriorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PriorError::BadPerturbConfig(s.to_string());
        let parts: Vec<&str> = s.split('-').map(str::trim).collect();
        let [shuffle, p, d] = parts.as_slice() else {
            return Err(bad());
        };
        let shuffle = match *shuffle {
            "ys" => true,
            "ns" => false,
            _ => return Err(bad()),
        };
        let prob = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(bad)
        };
        Ok(PerturbConfig {
            shuffle,
            inject_prob: prob(p)?,
            dropout: prob(d)?,
            seed: 0,
        })
    }
}

/// Applies a perturbation; `None` means the prior is not injected.
///
/// The generator is seeded from `cfg.seed` and the page id. Draw order: one
/// draw for injection, one per item for dropout, then the shuffle.
pub fn perturb(prior: &LayoutPrior, cfg: &PerturbConfig) -> Option<LayoutPrior> {
    let mut rng = SplitMix64::for_page(cfg.seed, &prior.page_id);
    if !rng.bernoulli(cfg.inject_prob) {
        return None;
    }
    let mut items: Vec<PriorItem> = prior
        .items
        .iter()
        .filter(|_| !rng.bernoulli(cfg.dropout))
        .copied()
        .collect();
    if cfg.shuffle {
        rng.shuffle(&mut items);
    }
    Some(LayoutPrior {
        page_id: prior.page_id.clone(),
        items,
    })
}

/// The decoder prompt: instruction line plus optional prior block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub instruction: String,
    /// Empty when the prior was not injected.
    pub prior_block: String,
    pub token_overhead: usize,
}

impl PromptSpec {
    pub fn text(&self) -> String {
        if self.prior_block.is_empty() {
            self.instruction.clone()
        } else {
            format!("{}\n{}", self.instruction, self.prior_block)
        }
    }
}

pub fn build_prompt(prior: Option<&LayoutPrior>, instruction: &str) -> PromptSpec {
    let prior_block = prior.map(LayoutPrior::block).unwrap_or_default();
    // a prior block is built from valid items, so it always counts
    let token_overhead = if prior_block.is_empty() {
        0
    } else {
        doctags::count_tokens(&prior_block).expect("prior block is well formed")
    };
    PromptSpec {
        instruction: instruction.to_string(),
        prior_block,
        token_overhead,
    }
}

/// One line of a prompts JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub page_id: String,
    pub instruction: String,
    /// The `<layout>` block, or null when skipped.
    pub prior: Option<String>,
    /// Full prompt text as fed to the decoder.
    pub prompt: String,
    pub token_overhead: usize,
    pub perturb_config: Option<String>,
}

impl PromptRecord {
    pub fn new(page_id: &str, prompt: &PromptSpec, perturb: Option<&PerturbConfig>) -> Self {
        PromptRecord {
            page_id: page_id.to_string(),
            instruction: prompt.instruction.clone(),
            prior: (!prompt.prior_block.is_empty()).then(|| prompt.prior_block.clone()),
            prompt: prompt.text(),
            token_overhead: prompt.token_overhead,
            perturb_config: perturb.map(PerturbConfig::label),
        }
    }

    pub fn layout_prior(&self) -> Result<Option<LayoutPrior>, PriorError> {
        self.prior
            .as_deref()
            .map(|b| LayoutPrior::from_block(self.page_id.clone(), b))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadStats {
    pub min: usize,
    pub max: usize,
    pub median: f64,
    pub mean: f64,
}

/// Order statistics of prompt token overhead.
pub fn overhead_stats(prompts: &[PromptSpec]) -> Result<OverheadStats, PriorError> {
    let overheads: Vec<usize> = prompts.iter().map(|p| p.token_overhead).collect();
    overhead_stats_of(&overheads)
}

pub fn overhead_stats_of(overheads: &[usize]) -> Result<OverheadStats, PriorError> {
    if overheads.is_empty() {
        return Err(PriorError::EmptyCorpus);
    }
    let mut sorted = overheads.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(OverheadStats {
        min: sorted[0],
        max: sorted[n - 1],
        median,
        mean: sorted.iter().sum::<usize>() as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Detection;

    fn item(tag: LayoutTag, b: [u16; 4]) -> PriorItem {
        PriorItem {
            tag,
            locs: Locs::new(b[0], b[1], b[2], b[3]).unwrap(),
        }
    }

    #[test]
    fn quantize_examples() {
        let full = BBox::new(0.0, 0.0, 640.0, 480.0).unwrap();
        assert_eq!(quantize(&full, 640, 480).unwrap().to_array(), [0, 0, 500, 500]);
        let b = BBox::new(264.0, 112.0, 864.0, 514.0).unwrap();
        assert_eq!(quantize(&b, 1000, 1000).unwrap().to_array(), [132, 56, 432, 257]);
        let edge = BBox::new(999.9, 0.0, 999.9, 0.0).unwrap();
        assert_eq!(quantize(&edge, 1000, 1000).unwrap().x_min.value(), 500);
        // 1/1000 * 500 = 0.5 rounds away from zero
        let half = BBox::new(1.0, 3.0, 1.0, 3.0).unwrap();
        assert_eq!(quantize(&half, 1000, 1000).unwrap().to_array(), [1, 2, 1, 2]);
        assert!(matches!(quantize(&full, 0, 10), Err(PriorError::InvalidPage { .. })));
    }

    #[test]
    fn class_map() {
        assert_eq!(map_class(8).unwrap(), LayoutTag::Otsl);
        assert_eq!(map_class(7).unwrap(), LayoutTag::SectionHeader);
        assert_eq!(map_class(0).unwrap(), LayoutTag::Caption);
        assert_eq!(map_class(16).unwrap(), LayoutTag::KeyValueRegion);
        assert_eq!(map_class(17), Err(PriorError::UnknownClass(17)));
        assert_eq!(map_class(-1), Err(PriorError::UnknownClass(-1)));
        for c in 0..17 {
            assert_eq!(class_for_tag(map_class(c).unwrap()), Some(c as u8));
        }
        assert_eq!(class_for_tag(LayoutTag::UnorderedList), None);
    }

    #[test]
    fn reading_order_rows() {
        let left = item(LayoutTag::Text, [40, 100, 200, 150]);
        let right = item(LayoutTag::Text, [300, 100, 450, 150]);
        assert_eq!(reading_order(&[right, left]), vec![left, right]);
        assert_eq!(reading_order(&[left]), vec![left]);
        // within tolerance but not vertically overlapping: stays top to bottom
        let above = item(LayoutTag::Caption, [132, 296, 295, 302]);
        let below = item(LayoutTag::Otsl, [131, 302, 441, 459]);
        assert_eq!(reading_order(&[below, above]), vec![above, below]);
    }

    #[test]
    fn prompt_without_prior() {
        let p = build_prompt(None, DEFAULT_INSTRUCTION);
        assert_eq!(p.text(), DEFAULT_INSTRUCTION);
        assert_eq!(p.token_overhead, 0);
        let empty = LayoutPrior {
            page_id: "x".into(),
            items: vec![],
        };
        assert_eq!(build_prompt(Some(&empty), "i").token_overhead, 2);
    }

    #[test]
    fn overhead_examples() {
        let s = overhead_stats_of(&[74, 0, 62]).unwrap();
        assert_eq!((s.min, s.max, s.median), (0, 74, 62.0));
        assert!((s.mean - 136.0 / 3.0).abs() < 1e-12);
        let one = overhead_stats_of(&[8]).unwrap();
        assert_eq!((one.min, one.max, one.median, one.mean), (8, 8, 8.0, 8.0));
        assert_eq!(overhead_stats_of(&[1, 2, 3, 10]).unwrap().median, 2.5);
        let zeros = overhead_stats(&[build_prompt(None, "i"), build_prompt(None, "i")]).unwrap();
        assert_eq!((zeros.min, zeros.max, zeros.median, zeros.mean), (0, 0, 0.0, 0.0));
        assert_eq!(overhead_stats_of(&[]), Err(PriorError::EmptyCorpus));
    }

    #[test]
    fn perturb_label_round_trip() {
        for row in ["ns - 0.8 - 0.0", "ns - 1.0 - 0.0", "ys - 0.8 - 0.0", "ys - 1.0 - 0.0", "ys - 1.0 - 0.3"] {
            let cfg: PerturbConfig = row.parse().unwrap();
            assert_eq!(cfg.label(), row.replace(' ', ""));
            assert_eq!(cfg.label().parse::<PerturbConfig>().unwrap(), cfg);
        }
        for bad in ["", "xs-1.0-0.0", "ys-1.5-0.0", "ys-1.0", "ys-1.0-0.3-1"] {
            assert!(bad.parse::<PerturbConfig>().is_err(), "{bad}");
        }
        let odd = PerturbConfig {
            shuffle: true,
            inject_prob: 0.25,
            dropout: 0.125,
            seed: 0,
        };
        assert_eq!(odd.label(), "ys-0.25-0.125");
    }

    fn ten_items() -> LayoutPrior {
        LayoutPrior {
            page_id: "page".into(),
            items: (0..10)
                .map(|i| item(LayoutTag::Text, [10, i * 40, 400, i * 40 + 30]))
                .collect(),
        }
    }

    #[test]
    fn perturb_identity_and_skip() {
        let prior = ten_items();
        for seed in 0..50 {
            let id = PerturbConfig::identity().with_seed(seed);
            assert_eq!(perturb(&prior, &id).as_ref(), Some(&prior));
            let never: PerturbConfig = "ns-0.0-0.0".parse().unwrap();
            assert_eq!(perturb(&prior, &never.with_seed(seed)), None);
        }
    }

    #[test]
    fn perturb_is_seeded() {
        let prior = ten_items();
        let cfg: PerturbConfig = "ys-0.8-0.3".parse().unwrap();
        for seed in 0..20 {
            assert_eq!(perturb(&prior, &cfg.with_seed(seed)), perturb(&prior, &cfg.with_seed(seed)));
        }
        let shuffled = perturb(&prior, &"ys-1.0-0.0".parse::<PerturbConfig>().unwrap().with_seed(1)).unwrap();
        let mut a = shuffled.items.clone();
        a.sort_by_key(PriorItem::sort_key);
        assert_eq!(a, prior.items);
    }

    #[test]
    fn block_round_trip() {
        let prior = ten_items();
        let back = LayoutPrior::from_block("page", &prior.block()).unwrap();
        assert_eq!(back, prior);
        assert!(LayoutPrior::from_block("p", "<text>hello</text>").is_err());
    }

    #[test]
    fn build_prior_from_pixels() {
        let page = PageDetections::new(
            "p",
            1000,
            1000,
            vec![
                Detection::new(9, 0.9, BBox::new(264.0, 112.0, 864.0, 514.0).unwrap()).unwrap(),
                Detection::new(7, 0.95, BBox::new(98.0, 84.0, 394.0, 102.0).unwrap()).unwrap(),
                Detection::new(9, 0.3, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()).unwrap(),
            ],
        )
        .unwrap();
        let prior = build_prior(&page, &PostprocessConfig::default()).unwrap();
        assert_eq!(
            prior.fragment(),
            "<section_header><loc_49><loc_42><loc_197><loc_51></section_header>\n<text><loc_132><loc_56><loc_432><loc_257></text>"
        );
    }
}
