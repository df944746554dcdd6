//! Attention phase-shift analysis and MMD distribution-shift diagnostics.
//!
//! Attention tensors come from outside (model inference is not part of this
//! crate). [`aggregate_attention`] max-pools them over layers and heads, and
//! [`phase_shift`] measures where structural and content tokens look.

use std::io::BufRead;

use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doctags::TokenClass;

/// Softmax rows must sum to one within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;
pub const TOKENS_PER_PATCH: usize = 64;
pub const EMBEDDING_DIM: usize = 576;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid attention tensor: {0}")]
    InvalidTensor(String),
    #[error("segment map covers {got} positions, tensor has {expected}")]
    SegmentMismatch { expected: usize, got: usize },
    #[error("segment `{0}` is not contiguous")]
    NonContiguousSegment(&'static str),
    #[error("{got} token kinds for {expected} generated positions")]
    TokenKindMismatch { expected: usize, got: usize },
    #[error("no patch tokens to pool")]
    EmptyPatches,
    #[error("all pairwise distances are zero")]
    DegenerateSample,
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("gamma must be positive and finite")]
    InvalidGamma,
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("embedding input line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// `L x H x S x S` attention probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    values: Array4<f64>,
}

impl AttentionTensor {
    /// From a flat row-major `layers * heads * seq * seq` buffer.
    pub fn new(layers: usize, heads: usize, seq: usize, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if layers == 0 || heads == 0 || seq == 0 {
            return Err(AnalysisError::InvalidTensor("layers, heads and seq must be positive".into()));
        }
        let expected = layers * heads * seq * seq;
        if values.len() != expected {
            return Err(AnalysisError::InvalidTensor(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        let values = Array4::from_shape_vec((layers, heads, seq, seq), values)
            .map_err(|e| AnalysisError::InvalidTensor(e.to_string()))?;
        Self::from_array(values)
    }

    pub fn from_array(values: Array4<f64>) -> Result<Self, AnalysisError> {
        let (l, h, s, s2) = values.dim();
        if l == 0 || h == 0 || s == 0 || s != s2 {
            return Err(AnalysisError::InvalidTensor(format!("bad shape {l}x{h}x{s}x{s2}")));
        }
        for ((layer, head, i, j), v) in values.indexed_iter() {
            if !v.is_finite() || *v < 0.0 {
                return Err(AnalysisError::InvalidTensor(format!(
                    "value {v} at [{layer},{head},{i},{j}]"
                )));
            }
        }
        for ((layer, head, i), sum) in values.sum_axis(Axis(3)).indexed_iter() {
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(AnalysisError::InvalidTensor(format!(
                    "row [{layer},{head},{i}] sums to {sum}"
                )));
            }
        }
        Ok(AttentionTensor { values })
    }

    pub fn layers(&self) -> usize {
        self.values.dim().0
    }

    pub fn heads(&self) -> usize {
        self.values.dim().1
    }

    pub fn seq(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array4<f64> {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    ImagePatches,
    Instruction,
    LayoutPrior,
    Generated,
}

impl Segment {
    pub fn name(self) -> &'static str {
        match self {
            Segment::ImagePatches => "image_patches",
            Segment::Instruction => "instruction",
            Segment::LayoutPrior => "layout_prior",
            Segment::Generated => "generated",
        }
    }
}

/// Segment label per sequence position; every segment is one contiguous run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct SegmentMap(Vec<Segment>);

impl SegmentMap {
    pub fn new(labels: Vec<Segment>) -> Result<Self, AnalysisError> {
        let mut finished: Vec<Segment> = Vec::new();
        for w in labels.windows(2) {
            if w[0] != w[1] {
                finished.push(w[0]);
                if finished.contains(&w[1]) {
                    return Err(AnalysisError::NonContiguousSegment(w[1].name()));
                }
            }
        }
        Ok(SegmentMap(labels))
    }

    /// Builds a map from `(segment, length)` runs.
    pub fn from_runs(runs: &[(Segment, usize)]) -> Result<Self, AnalysisError> {
        Self::new(runs.iter().flat_map(|&(s, n)| std::iter::repeat(s).take(n)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[Segment] {
        &self.0
    }

    pub fn count(&self, seg: Segment) -> usize {
        self.0.iter().filter(|s| **s == seg).count()
    }

    pub fn generated_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Segment::Generated)
            .map(|(i, _)| i)
    }
}

impl TryFrom<Vec<Segment>> for SegmentMap {
    type Error = AnalysisError;

    fn try_from(v: Vec<Segment>) -> Result<Self, Self::Error> {
        SegmentMap::new(v)
    }
}

impl From<SegmentMap> for Vec<Segment> {
    fn from(m: SegmentMap) -> Self {
        m.0
    }
}

/// `Agg[i, j] = max over layers and heads of A[l, h, i, j]`.
pub fn aggregate_attention(t: &AttentionTensor) -> Array2<f64> {
    let s = t.seq();
    let mut agg = Array2::<f64>::zeros((s, s));
    for layer in t.values.outer_iter() {
        for head in layer.outer_iter() {
            agg.zip_mut_with(&head, |a, &v| *a = a.max(v));
        }
    }
    agg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftSummary {
    /// Share of structural positions whose causal argmax is in the layout prior.
    pub frac_struct_to_prior: Option<f64>,
    /// Share of content positions whose causal argmax is in the image patches.
    pub frac_content_to_image: Option<f64>,
    /// `frac_struct_to_prior - (1 - frac_content_to_image)`.
    pub bimodality_gap: Option<f64>,
    /// Mean share of each structural row's total mass that lands on the prior.
    pub mass_struct_to_prior: Option<f64>,
    /// Mean share of each content row's total mass that lands on the image.
    pub mass_content_to_image: Option<f64>,
    pub n_struct: usize,
    pub n_content: usize,
}

/// Lowest `j < i` attaining the row maximum.
fn causal_argmax(row: &[f64], i: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, v) in row[..i].iter().enumerate() {
        if best.map_or(true, |b| *v > row[b]) {
            best = Some(j);
        }
    }
    best
}

fn mass_share(row: &[f64], seg: &SegmentMap, target: Segment) -> Option<f64> {
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let hit: f64 = row.iter().zip(seg.labels()).filter(|(_, s)| **s == target).map(|(v, _)| v).sum();
    Some(hit / total)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Phase-shift summary of an already aggregated `S x S` matrix.
pub fn phase_shift_from_agg(
    agg: ArrayView2<f64>,
    seg: &SegmentMap,
    token_kinds: &[TokenClass],
) -> Result<PhaseShiftSummary, AnalysisError> {
    let (s, s2) = agg.dim();
    if s != s2 {
        return Err(AnalysisError::InvalidTensor(format!("aggregate is {s}x{s2}")));
    }
    if seg.len() != s {
        return Err(AnalysisError::SegmentMismatch {
            expected: s,
            got: seg.len(),
        });
    }
    let generated: Vec<usize> = seg.generated_positions().collect();
    if generated.len() != token_kinds.len() {
        return Err(AnalysisError::TokenKindMismatch {
            expected: generated.len(),
            got: token_kinds.len(),
        });
    }

    let (mut struct_hits, mut content_hits) = (Vec::new(), Vec::new());
    let (mut struct_mass, mut content_mass) = (Vec::new(), Vec::new());
    for (&i, kind) in generated.iter().zip(token_kinds) {
        let (target, hits, masses) = match kind {
            TokenClass::LayoutTag | TokenClass::Loc => (Segment::LayoutPrior, &mut struct_hits, &mut struct_mass),
            TokenClass::Content => (Segment::ImagePatches, &mut content_hits, &mut content_mass),
            TokenClass::Control => continue,
        };
        let row = agg.row(i).to_vec();
        if let Some(j) = causal_argmax(&row, i) {
            hits.push(if seg.labels()[j] == target { 1.0 } else { 0.0 });
        }
        if let Some(m) = mass_share(&row, seg, target) {
            masses.push(m);
        }
    }
    let frac_struct_to_prior = mean(&struct_hits);
    let frac_content_to_image = mean(&content_hits);
    Ok(PhaseShiftSummary {
        frac_struct_to_prior,
        frac_content_to_image,
        bimodality_gap: frac_struct_to_prior.zip(frac_content_to_image).map(|(a, b)| a - (1.0 - b)),
        mass_struct_to_prior: mean(&struct_mass),
        mass_content_to_image: mean(&content_mass),
        n_struct: struct_hits.len(),
        n_content: content_hits.len(),
    })
}

pub fn phase_shift(
    t: &AttentionTensor,
    seg: &SegmentMap,
    token_kinds: &[TokenClass],
) -> Result<PhaseShiftSummary, AnalysisError> {
    if seg.len() != t.seq() {
        return Err(AnalysisError::SegmentMismatch {
            expected: t.seq(),
            got: seg.len(),
        });
    }
    phase_shift_from_agg(aggregate_attention(t).view(), seg, token_kinds)
}

/// On-disk attention file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionFile {
    pub layers: usize,
    pub heads: usize,
    pub seq: usize,
    pub segments: Vec<Segment>,
    pub token_kinds: Vec<TokenClass>,
    pub values: Vec<f64>,
}

impl AttentionFile {
    pub fn into_parts(self) -> Result<(AttentionTensor, SegmentMap, Vec<TokenClass>), AnalysisError> {
        let t = AttentionTensor::new(self.layers, self.heads, self.seq, self.values)?;
        let seg = SegmentMap::new(self.segments)?;
        Ok((t, seg, self.token_kinds))
    }
}

/// Mean over all patch tokens of a `P x T x d` array.
pub fn pool_embedding(patch_tokens: ArrayView3<f64>) -> Result<Array1<f64>, AnalysisError> {
    let (p, t, d) = patch_tokens.dim();
    if p == 0 || t == 0 {
        return Err(AnalysisError::EmptyPatches);
    }
    let flat = patch_tokens
        .to_shape((p * t, d))
        .map_err(|e| AnalysisError::InvalidTensor(e.to_string()))?;
    Ok(flat.sum_axis(Axis(0)) / (p * t) as f64)
}

/// `n x d` embedding rows with a dataset label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub label: String,
    rows: Array2<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonRow {
    Bare(Vec<f64>),
    Labeled {
        #[serde(alias = "embedding", alias = "values")]
        vector: Vec<f64>,
        #[serde(default)]
        label: Option<String>,
    },
}

impl EmbeddingSet {
    pub fn new(label: impl Into<String>, rows: Array2<f64>) -> Result<Self, AnalysisError> {
        if let Some((i, _)) = rows.outer_iter().enumerate().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
            return Err(AnalysisError::NonFinite(i));
        }
        Ok(EmbeddingSet {
            label: label.into(),
            rows,
        })
    }

    pub fn from_rows(label: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(AnalysisError::DimensionMismatch(d, r.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| AnalysisError::InvalidTensor(e.to_string()))?;
        Self::new(label, arr)
    }

    /// CSV rows of floats. A trailing non-numeric field is the label; a first
    /// row with no numeric fields is treated as a header.
    pub fn from_csv<R: std::io::Read>(reader: R, default_label: &str) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut rows = Vec::new();
        let mut label: Option<String> = None;
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| AnalysisError::Parse {
                line: k + 1,
                reason: e.to_string(),
            })?;
            let fields: Vec<&str> = rec.iter().map(str::trim).collect();
            let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            if k == 0 && parsed.iter().all(Option::is_none) {
                continue;
            }
            let mut values = Vec::with_capacity(fields.len());
            for (col, (f, v)) in fields.iter().zip(&parsed).enumerate() {
                match v {
                    Some(x) => values.push(*x),
                    None if col + 1 == fields.len() => {
                        label.get_or_insert_with(|| f.to_string());
                    }
                    None => {
                        return Err(AnalysisError::Parse {
                            line: k + 1,
                            reason: format!("`{f}` is not a number"),
                        })
                    }
                }
            }
            rows.push(values);
        }
        Self::from_rows(label.unwrap_or_else(|| default_label.to_string()), &rows)
    }

    /// JSONL rows: either a bare array or `{"vector": [...], "label": ...}`.
    pub fn from_jsonl<R: BufRead>(reader: R, default_label: &str) -> Result<Self, AnalysisError> {
        let mut rows = Vec::new();
        let mut label: Option<String> = None;
        for (k, line) in reader.lines().enumerate() {
            let err = |reason: String| AnalysisError::Parse { line: k + 1, reason };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<JsonRow>(&line).map_err(|e| err(e.to_string()))? {
                JsonRow::Bare(v) => rows.push(v),
                JsonRow::Labeled { vector, label: l } => {
                    if label.is_none() {
                        label = l;
                    }
                    rows.push(vector);
                }
            }
        }
        Self::from_rows(label.unwrap_or_else(|| default_label.to_string()), &rows)
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }
}

fn check_dims(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<(), AnalysisError> {
    if x.dim() != y.dim() {
        return Err(AnalysisError::DimensionMismatch(x.dim(), y.dim()));
    }
    Ok(())
}

/// Median pairwise Euclidean distance over `x ∪ y` (all pairs).
pub fn median_heuristic_sigma(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<f64, AnalysisError> {
    check_dims(x, y)?;
    let pooled = ndarray::concatenate(Axis(0), &[x.rows(), y.rows()])
        .map_err(|e| AnalysisError::InvalidTensor(e.to_string()))?;
    let n = pooled.nrows();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints { need: 2, got: n });
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let diff = &pooled.row(i) - &pooled.row(j);
            dists.push(diff.dot(&diff).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        (dists[m / 2 - 1] + dists[m / 2]) / 2.0
    };
    if median == 0.0 {
        return Err(AnalysisError::DegenerateSample);
    }
    Ok(median)
}

/// `gamma = 1 / (2 sigma^2)`.
pub fn gamma_from_sigma(sigma: f64) -> f64 {
    1.0 / (2.0 * sigma * sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub mmd2_biased: f64,
    /// May be negative.
    pub mmd2_unbiased: f64,
    pub mmd_biased: f64,
    pub mmd_unbiased: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub n_x: usize,
    pub n_y: usize,
    pub dim: usize,
}

/// RBF Gram matrix `exp(-gamma * |a - b|^2)` via the norm expansion.
fn rbf_gram(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    let na: Array1<f64> = a.outer_iter().map(|r| r.dot(&r)).collect();
    let nb: Array1<f64> = b.outer_iter().map(|r| r.dot(&r)).collect();
    let mut g = a.dot(&b.t());
    for ((i, j), v) in g.indexed_iter_mut() {
        let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        *v = (-gamma * d2).exp();
    }
    g
}

/// Biased and unbiased MMD² with an RBF kernel.
pub fn mmd(x: &EmbeddingSet, y: &EmbeddingSet, gamma: f64) -> Result<MmdReport, AnalysisError> {
    check_dims(x, y)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AnalysisError::InvalidGamma);
    }
    for n in [x.n(), y.n()] {
        if n < 2 {
            return Err(AnalysisError::TooFewPoints { need: 2, got: n });
        }
    }
    let (nx, ny) = (x.n() as f64, y.n() as f64);
    let kxx = rbf_gram(x.rows(), x.rows(), gamma);
    let kyy = rbf_gram(y.rows(), y.rows(), gamma);
    let kxy = rbf_gram(x.rows(), y.rows(), gamma);
    let (sxx, syy, sxy) = (kxx.sum(), kyy.sum(), kxy.sum());
    let (txx, tyy) = (kxx.diag().sum(), kyy.diag().sum());

    let mmd2_biased = (sxx / (nx * nx) + syy / (ny * ny) - 2.0 * sxy / (nx * ny)).max(0.0);
    let mmd2_unbiased = (sxx - txx) / (nx * (nx - 1.0)) + (syy - tyy) / (ny * (ny - 1.0)) - 2.0 * sxy / (nx * ny);
    Ok(MmdReport {
        mmd2_biased,
        mmd2_unbiased,
        mmd_biased: mmd2_biased.max(0.0).sqrt(),
        mmd_unbiased: mmd2_unbiased.max(0.0).sqrt(),
        gamma,
        sigma: None,
        n_x: x.n(),
        n_y: y.n(),
        dim: x.dim(),
    })
}

/// MMD with the bandwidth chosen by the median heuristic.
pub fn mmd_auto(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<MmdReport, AnalysisError> {
    let sigma = median_heuristic_sigma(x, y)?;
    let mut report = mmd(x, y, gamma_from_sigma(sigma))?;
    report.sigma = Some(sigma);
    Ok(report)
}
