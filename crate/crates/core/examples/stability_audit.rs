//! Per-domain infinite-loop rates under different token budgets.

use doctags_prior::guard::{audit, GenerationRecord, GuardConfig};

fn rec(domain: &str, i: usize, looping: bool) -> GenerationRecord {
    GenerationRecord {
        page_id: format!("{domain}-{i:03}"),
        domain: domain.into(),
        token_count: if looping { 12_000 } else { 800 + (i as u64 * 37) % 900 },
        ended_with_eos: !looping,
        tail_tokens: looping.then(|| {
            ["<text>", "total", "net", "</text>"].iter().cycle().take(64).map(|s| s.to_string()).collect()
        }),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut recs = Vec::new();
    for (domain, loops) in [("hr", 7), ("finance_en", 5), ("energy", 4), ("computer_science", 1)] {
        recs.extend((0..100).map(|i| rec(domain, i, i < loops)));
    }
    for t_max in [2000, 5000, 10_000] {
        let report = audit(&recs, &GuardConfig { t_max, ..GuardConfig::default() })?;
        println!(
            "t_max {t_max:>6}: overall {:.4}  ranking {:?}",
            report.stability.overall_rate,
            report.stability.ranking()
        );
    }
    let report = audit(&recs, &GuardConfig::default())?;
    println!("{} pages show a repeating tail, e.g. {:?}", report.repetitions.len(), report.repetitions[0]);
    Ok(())
}
