//! Decode stability auditing.
//!
//! A generation fails when it runs past the token budget without emitting
//! EOS. Repetition-period detection on the generated tail is reported
//! alongside but never counts toward failures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_T_MAX: u64 = 5000;
pub const DEFAULT_MIN_REPEATS: usize = 4;
pub const DEFAULT_TAIL_WINDOW: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("t_max must be positive")]
    InvalidTMax,
    #[error("page `{page_id}`: {tail} tail tokens exceed token_count {token_count}")]
    InconsistentRecord {
        page_id: String,
        token_count: u64,
        tail: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub page_id: String,
    pub domain: String,
    pub token_count: u64,
    pub ended_with_eos: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tokens: Option<Vec<String>>,
}

impl GenerationRecord {
    pub fn validate(&self) -> Result<(), GuardError> {
        match &self.tail_tokens {
            Some(t) if t.len() as u64 > self.token_count => Err(GuardError::InconsistentRecord {
                page_id: self.page_id.clone(),
                token_count: self.token_count,
                tail: t.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Ran past `t_max` (strictly) without terminating.
pub fn is_failure(rec: &GenerationRecord, t_max: u64) -> bool {
    rec.token_count > t_max && !rec.ended_with_eos
}

/// Smallest period `p` such that the last `p * min_repeats` tokens repeat
/// with period `p`.
pub fn detect_period<S: PartialEq>(tail: &[S], min_repeats: usize) -> Option<usize> {
    let min_repeats = min_repeats.max(2);
    (1..=tail.len() / min_repeats).find(|&p| {
        let window = &tail[tail.len() - p * min_repeats..];
        window.iter().zip(&window[p..]).all(|(a, b)| a == b)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub pages: usize,
    pub failures: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub per_domain: BTreeMap<String, DomainStats>,
    /// Unweighted mean of the per-domain rates.
    pub overall_rate: f64,
}

impl StabilityReport {
    /// Domains by failure rate, highest first; ties by name.
    pub fn ranking(&self) -> Vec<&str> {
        let mut domains: Vec<(&str, f64)> = self
            .per_domain
            .iter()
            .map(|(d, s)| (d.as_str(), s.rate))
            .collect();
        domains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        domains.into_iter().map(|(d, _)| d).collect()
    }
}

pub fn stability_report(recs: &[GenerationRecord], t_max: u64) -> Result<StabilityReport, GuardError> {
    if recs.is_empty() {
        return Err(GuardError::EmptyCorpus);
    }
    if t_max == 0 {
        return Err(GuardError::InvalidTMax);
    }
    let mut per_domain: BTreeMap<String, DomainStats> = BTreeMap::new();
    for rec in recs {
        let s = per_domain.entry(rec.domain.clone()).or_insert(DomainStats {
            pages: 0,
            failures: 0,
            rate: 0.0,
        });
        s.pages += 1;
        s.failures += usize::from(is_failure(rec, t_max));
    }
    for s in per_domain.values_mut() {
        s.rate = s.failures as f64 / s.pages as f64;
    }
    let overall_rate = per_domain.values().map(|s| s.rate).sum::<f64>() / per_domain.len() as f64;
    Ok(StabilityReport {
        per_domain,
        overall_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardConfig {
    pub t_max: u64,
    pub min_repeats: usize,
    pub tail_window: usize,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            t_max: DEFAULT_T_MAX,
            min_repeats: DEFAULT_MIN_REPEATS,
            tail_window: DEFAULT_TAIL_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repetition {
    pub page_id: String,
    pub period: usize,
    pub failed: bool,
}

/// Stability report plus the repetition diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub t_max: u64,
    #[serde(flatten)]
    pub stability: StabilityReport,
    pub repetitions: Vec<Repetition>,
}

pub fn audit(recs: &[GenerationRecord], cfg: &GuardConfig) -> Result<AuditReport, GuardError> {
    recs.iter().try_for_each(GenerationRecord::validate)?;
    let stability = stability_report(recs, cfg.t_max)?;
    let mut repetitions: Vec<Repetition> = recs
        .iter()
        .filter_map(|r| {
            let tail = r.tail_tokens.as_deref()?;
            let window = &tail[tail.len().saturating_sub(cfg.tail_window)..];
            detect_period(window, cfg.min_repeats).map(|period| Repetition {
                page_id: r.page_id.clone(),
                period,
                failed: is_failure(r, cfg.t_max),
            })
        })
        .collect();
    repetitions.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    Ok(AuditReport {
        t_max: cfg.t_max,
        stability,
        repetitions,
    })
}
