//! The `doctags-prior` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 malformed or invalid input,
//! 3 bad flags, 4 invalid `--config` file. Errors are written to stderr as a
//! single JSON line `{"error": kind, "message": ...}`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AttentionFile, EmbeddingSet};
use crate::doctags::{self, DocTagsDoc};
use crate::guard::{self, GenerationRecord, GuardConfig};
use crate::layout::{self, PageDetections, PostprocessConfig};
use crate::mask::{self, TokenSeq};
use crate::metrics::{self, PagePair};
use crate::mock::{self, DegradeConfig, ManifestEntry};
use crate::prior::{self, PerturbConfig, PromptRecord};

pub const EXIT_IO: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_FLAGS: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Format(String),
    Flags(String),
    Config(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Flags(_) => EXIT_FLAGS,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
            CliError::Flags(_) => "flags",
            CliError::Config(_) => "config",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Format(m) | CliError::Flags(m) | CliError::Config(m) => m,
        }
    }

    /// The single-line JSON written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.message() }).to_string()
    }
}

type CliResult<T> = Result<T, CliError>;

fn format_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("{}: {e}", path.display()))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(
    name = "doctags-prior",
    version,
    about = "Layout priors, DocTags handling, masking, stability audits and evaluation"
)]
struct Cli {
    /// TOML file overriding defaults (sections: postprocess, prior, guard).
    /// Explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy, Default)]
struct ThresholdArgs {
    /// Keep detections scoring strictly above this [default: 0.6, the
    /// reference detector setting]
    #[arg(long)]
    tau: Option<f64>,
    /// Same-class NMS IoU threshold [default: 0.5, the reference detector
    /// setting]
    #[arg(long)]
    iota: Option<f64>,
    /// Merge same-class fragments whose intersection over the smaller box
    /// reaches this [default: 0.8]
    #[arg(long = "merge-ios")]
    merge_ios: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Confidence filter, fragment merge and NMS over a detections corpus.
    Postprocess {
        /// Detections JSONL (one page object per line) or a single JSON object.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Build layout priors and prompts from detections.
    Prior {
        #[arg(long)]
        detections: PathBuf,
        /// Manifest JSONL with `page_id`, `width`, `height`; overrides the
        /// page size stored in the detections.
        #[arg(long = "width-height-from", value_name = "MANIFEST")]
        width_height_from: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Ablation config `S-P-D`, e.g. `ys-1.0-0.3` (shuffle, injection
        /// probability, item dropout). Requires --seed.
        #[arg(long)]
        perturb: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Instruction line [default: "Convert this page to Docling:"]
        #[arg(long)]
        instruction: Option<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Parse every `.doctags` file in a directory and check the round trip.
    Validate {
        #[arg(long)]
        doctags: PathBuf,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Location-token loss mask and masked NLL for token sequences.
    Mask {
        /// JSONL of `{"tokens": [...], "logprobs": [...]}`; logprobs optional.
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-domain decode failure rates and repetition diagnostics.
    Guard {
        #[arg(long)]
        generations: PathBuf,
        /// Token budget; a generation fails when it exceeds this without EOS
        /// [default: 5000, the reference budget]
        #[arg(long = "t-max")]
        t_max: Option<u64>,
        /// Minimum repeats for the repetition diagnostic [default: 4]
        #[arg(long = "min-repeats")]
        min_repeats: Option<usize>,
        /// Tail tokens inspected for repetition [default: 512]
        #[arg(long = "tail-window")]
        tail_window: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Text, table and reading-order metrics for predictions against references.
    Eval {
        /// Directory of `.doctags` files, or a JSONL manifest of `{"page_id", "path"}`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-page CSV.
        #[arg(long = "per-page")]
        per_page: Option<PathBuf>,
    },
    /// Attention phase-shift summary from an attention tensor file.
    Attn {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RBF-kernel MMD between two embedding sets (CSV, or JSONL by extension).
    Mmd {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Kernel gamma, or `auto` for the median heuristic [default: auto]
        #[arg(long, default_value = "auto")]
        gamma: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded mock decoder over a fixture directory.
    Mock {
        /// Directory of `.doctags` truth files with `manifest.jsonl`.
        #[arg(long)]
        fixtures: PathBuf,
        /// Prompts JSONL; pages without a prompt or with a null prior decode without one.
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// `miss=<p>,loop=<p>[,loop_tokens=<n>]`
        #[arg(long, default_value = "miss=0.7,loop=0.1")]
        degrade: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for `<page_id>.doctags` and `generations.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Token-overhead order statistics of a prompts file.
    Overhead {
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic fixture corpus with oracle detections.
    Fixtures {
        #[arg(long, default_value_t = 100)]
        pages: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory: `.doctags` files, `manifest.jsonl`, `detections.jsonl`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    postprocess: PostprocessSection,
    #[serde(default)]
    prior: PriorSection,
    #[serde(default)]
    guard: GuardSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostprocessSection {
    tau: Option<f64>,
    iota: Option<f64>,
    merge_ios: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSection {
    instruction: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuardSection {
    t_max: Option<u64>,
    min_repeats: Option<usize>,
    tail_window: Option<usize>,
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

fn postprocess_config(flags: ThresholdArgs, file: &PostprocessSection) -> CliResult<PostprocessConfig> {
    let d = PostprocessConfig::default();
    let cfg = PostprocessConfig {
        confidence_threshold: flags.tau.or(file.tau).unwrap_or(d.confidence_threshold),
        nms_iou_threshold: flags.iota.or(file.iota).unwrap_or(d.nms_iou_threshold),
        merge_ios_threshold: flags.merge_ios.or(file.merge_ios).unwrap_or(d.merge_ios_threshold),
    };
    cfg.validate().map_err(|e| CliError::Flags(e.to_string()))?;
    Ok(cfg)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    EXIT_FLAGS
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                    report(&CliError::Flags(first.to_string()))
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    let _ = writeln!(std::io::stderr(), "{}", e.to_json());
    e.code()
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Postprocess {
            detections,
            out,
            thresholds,
        } => {
            let cfg = postprocess_config(thresholds, &config.postprocess)?;
            let pages = read_detections(&detections)?;
            let mut text = String::new();
            for page in &pages {
                text.push_str(&layout::postprocess(page, &cfg).to_json());
                text.push('\n');
            }
            write_atomic(&out, text.as_bytes())
        }
        Command::Prior {
            detections,
            width_height_from,
            out,
            perturb,
            seed,
            instruction,
            thresholds,
        } => {
            let cfg = postprocess_config(thresholds, &config.postprocess)?;
            let perturb = match (perturb, seed) {
                (Some(p), Some(seed)) => Some(
                    p.parse::<PerturbConfig>()
                        .map_err(|e| CliError::Flags(e.to_string()))?
                        .with_seed(seed),
                ),
                (Some(_), None) => return Err(CliError::Flags("--perturb requires --seed".into())),
                (None, _) => None,
            };
            let instruction = instruction
                .or(config.prior.instruction)
                .unwrap_or_else(|| prior::DEFAULT_INSTRUCTION.to_string());
            let mut pages = read_detections(&detections)?;
            if let Some(manifest) = width_height_from {
                apply_page_sizes(&manifest, &mut pages)?;
            }
            let mut text = String::new();
            for page in &pages {
                let built = prior::build_prior(page, &cfg).map_err(|e| format_err(&detections, e))?;
                let injected = match &perturb {
                    Some(p) => prior::perturb(&built, p),
                    None => Some(built),
                };
                let spec = prior::build_prompt(injected.as_ref(), &instruction);
                let rec = PromptRecord::new(&page.page_id, &spec, perturb.as_ref());
                text.push_str(&to_json_line(&rec));
            }
            write_atomic(&out, text.as_bytes())
        }
        Command::Validate { doctags, out } => {
            let summary = validate_dir(&doctags)?;
            let json = to_json_pretty(&summary);
            match out {
                Some(path) => write_atomic(&path, json.as_bytes())?,
                None => println!("{json}"),
            }
            if summary.failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Format(format!(
                    "{} of {} files failed validation",
                    summary.failed.len(),
                    summary.files
                )))
            }
        }
        Command::Mask { tokens, out } => {
            let mut text = String::new();
            for (line, seq) in read_jsonl::<TokenSeq>(&tokens)? {
                let at = |e: mask::MaskError| CliError::Format(format!("{}:{line}: {e}", tokens.display()));
                seq.validate().map_err(at)?;
                let rec = match seq.logprobs {
                    Some(_) => serde_json::to_value(mask::masked_loss(&seq).map_err(at)?),
                    None => serde_json::to_value(serde_json::json!({ "mask": mask::build_mask(&seq.tokens) })),
                }
                .expect("mask output serializes");
                text.push_str(&rec.to_string());
                text.push('\n');
            }
            write_atomic(&out, text.as_bytes())
        }
        Command::Guard {
            generations,
            t_max,
            min_repeats,
            tail_window,
            out,
        } => {
            let d = GuardConfig::default();
            let cfg = GuardConfig {
                t_max: t_max.or(config.guard.t_max).unwrap_or(d.t_max),
                min_repeats: min_repeats.or(config.guard.min_repeats).unwrap_or(d.min_repeats),
                tail_window: tail_window.or(config.guard.tail_window).unwrap_or(d.tail_window),
            };
            if cfg.t_max == 0 {
                return Err(CliError::Flags("--t-max must be positive".into()));
            }
            let recs: Vec<GenerationRecord> = read_jsonl(&generations)?.into_iter().map(|(_, r)| r).collect();
            let report = guard::audit(&recs, &cfg).map_err(|e| format_err(&generations, e))?;
            write_atomic(&out, to_json_pretty(&report).as_bytes())
        }
        Command::Eval {
            pred,
            reference,
            out,
            per_page,
        } => {
            let refs = read_doc_set(&reference)?;
            let preds = read_doc_set(&pred)?;
            let pairs: Vec<PagePair> = refs
                .into_iter()
                .map(|(page_id, reference)| PagePair {
                    pred: preds.get(&page_id).cloned().unwrap_or_default(),
                    page_id,
                    reference,
                })
                .collect();
            let ev = metrics::evaluate_corpus(&pairs).map_err(|e| format_err(&reference, e))?;
            if let Some(csv_path) = per_page {
                write_atomic(&csv_path, &per_page_csv(&ev.pages)?)?;
            }
            write_atomic(&out, to_json_pretty(&ev.report).as_bytes())
        }
        Command::Attn { tensor, out } => {
            let text = read_text(&tensor)?;
            let file: AttentionFile = serde_json::from_str(&text).map_err(|e| format_err(&tensor, e))?;
            let (t, seg, kinds) = file.into_parts().map_err(|e| format_err(&tensor, e))?;
            let summary = analysis::phase_shift(&t, &seg, &kinds).map_err(|e| format_err(&tensor, e))?;
            write_atomic(&out, to_json_pretty(&summary).as_bytes())
        }
        Command::Mmd { x, y, gamma, out } => {
            let gamma = match gamma.as_str() {
                "auto" => None,
                g => Some(
                    g.parse::<f64>()
                        .ok()
                        .filter(|v| *v > 0.0 && v.is_finite())
                        .ok_or_else(|| CliError::Flags(format!("--gamma must be `auto` or a positive number, got `{g}`")))?,
                ),
            };
            let xs = read_embeddings(&x, "x")?;
            let ys = read_embeddings(&y, "y")?;
            let report = match gamma {
                Some(g) => analysis::mmd(&xs, &ys, g),
                None => analysis::mmd_auto(&xs, &ys),
            }
            .map_err(|e| CliError::Format(e.to_string()))?;
            write_atomic(&out, to_json_pretty(&report).as_bytes())
        }
        Command::Mock {
            fixtures,
            prompts,
            degrade,
            seed,
            out,
        } => {
            let seed = seed.ok_or_else(|| CliError::Flags("mock requires --seed".into()))?;
            let mut cfg: DegradeConfig = degrade.parse().map_err(|e: mock::MockError| CliError::Flags(e.to_string()))?;
            cfg.seed = seed;
            let pages = mock::read_fixture_dir(&fixtures).map_err(mock_err)?;
            let mut priors = BTreeMap::new();
            if let Some(path) = &prompts {
                for (line, rec) in read_jsonl::<PromptRecord>(path)? {
                    let prior = rec
                        .layout_prior()
                        .map_err(|e| CliError::Format(format!("{}:{line}: {e}", path.display())))?;
                    if let Some(p) = prior {
                        priors.insert(rec.page_id.clone(), p);
                    }
                }
            }
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let mut gens = String::new();
            for (page_id, doc, rec) in mock::decode_corpus(&pages, &priors, &cfg) {
                write_atomic(&out.join(format!("{page_id}.{}", mock::DOCTAGS_EXT)), doc.serialize().as_bytes())?;
                gens.push_str(&to_json_line(&rec));
            }
            write_atomic(&out.join("generations.jsonl"), gens.as_bytes())
        }
        Command::Overhead { prompts, out } => {
            let overheads: Vec<usize> = read_jsonl::<PromptRecord>(&prompts)?
                .into_iter()
                .map(|(_, r)| r.token_overhead)
                .collect();
            let stats = prior::overhead_stats_of(&overheads).map_err(|e| format_err(&prompts, e))?;
            #[derive(Serialize)]
            struct Out {
                n: usize,
                #[serde(flatten)]
                stats: prior::OverheadStats,
            }
            let json = to_json_pretty(&Out {
                n: overheads.len(),
                stats,
            });
            write_atomic(&out, json.as_bytes())
        }
        Command::Fixtures { pages, seed, out } => {
            let seed = seed.ok_or_else(|| CliError::Flags("fixtures requires --seed".into()))?;
            let corpus = mock::generate_corpus(pages, seed);
            mock::write_fixture_dir(&out, &corpus).map_err(mock_err)?;
            let dets: String = corpus
                .iter()
                .map(|f| mock::oracle_detections(f).to_json() + "\n")
                .collect();
            write_atomic(&out.join("detections.jsonl"), dets.as_bytes())
        }
    }
}

fn mock_err(e: mock::MockError) -> CliError {
    match e {
        mock::MockError::Io { .. } => CliError::Io(e.to_string()),
        mock::MockError::InvalidConfig(_) => CliError::Flags(e.to_string()),
        mock::MockError::Format { .. } => CliError::Format(e.to_string()),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<(usize, T)>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l)
                .map(|v| (k + 1, v))
                .map_err(|e| CliError::Format(format!("{}:{}: {e}", path.display(), k + 1)))
        })
        .collect()
}

fn to_json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("output serializes");
    s.push('\n');
    s
}

fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// Detection pages sorted by id; a file holding one JSON object is one page.
fn read_detections(path: &Path) -> CliResult<Vec<PageDetections>> {
    let text = read_text(path)?;
    let mut pages = match PageDetections::from_json(&text) {
        Ok(page) => vec![page],
        Err(_) => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(k, l)| {
                PageDetections::from_json(l).map_err(|e| CliError::Format(format!("{}:{}: {e}", path.display(), k + 1)))
            })
            .collect::<CliResult<Vec<_>>>()?,
    };
    pages.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    if let Some(w) = pages.windows(2).find(|w| w[0].page_id == w[1].page_id) {
        return Err(format_err(path, format!("duplicate page `{}`", w[0].page_id)));
    }
    Ok(pages)
}

fn apply_page_sizes(manifest: &Path, pages: &mut [PageDetections]) -> CliResult<()> {
    let sizes: BTreeMap<String, (u32, u32)> = read_jsonl::<ManifestEntry>(manifest)?
        .into_iter()
        .filter_map(|(_, e)| Some((e.page_id, (e.width?, e.height?))))
        .collect();
    for page in pages.iter_mut() {
        let &(w, h) = sizes
            .get(&page.page_id)
            .ok_or_else(|| format_err(manifest, format!("no width/height for page `{}`", page.page_id)))?;
        let dets = std::mem::take(&mut page.detections);
        *page = PageDetections::new(page.page_id.clone(), i64::from(w), i64::from(h), dets)
            .map_err(|e| format_err(manifest, e))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ValidationSummary {
    files: usize,
    ok: usize,
    failed: Vec<ValidationFailure>,
}

#[derive(Debug, Serialize)]
struct ValidationFailure {
    file: String,
    error: String,
}

fn doctags_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().is_some_and(|e| e == mock::DOCTAGS_EXT) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn validate_dir(dir: &Path) -> CliResult<ValidationSummary> {
    let files = doctags_files(dir)?;
    let mut failed = Vec::new();
    for path in &files {
        let text = read_text(path)?;
        let problem = match doctags::parse(&text) {
            Err(e) => Some(e.to_string()),
            Ok(doc) if doc.serialize() != text => Some("serialization does not reproduce the input".into()),
            Ok(doc) => doc.validate().err().map(|e| e.to_string()),
        };
        if let Some(error) = problem {
            failed.push(ValidationFailure {
                file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                error,
            });
        }
    }
    Ok(ValidationSummary {
        files: files.len(),
        ok: files.len() - failed.len(),
        failed,
    })
}

#[derive(Deserialize)]
struct DocManifestEntry {
    page_id: String,
    path: PathBuf,
}

/// Documents keyed by page id, from a directory or a JSONL manifest.
fn read_doc_set(path: &Path) -> CliResult<BTreeMap<String, DocTagsDoc>> {
    let entries: Vec<(String, PathBuf)> = if path.is_dir() {
        doctags_files(path)?
            .into_iter()
            .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
            .collect()
    } else {
        let base = path.parent().unwrap_or(Path::new("."));
        read_jsonl::<DocManifestEntry>(path)?
            .into_iter()
            .map(|(_, e)| (e.page_id, base.join(e.path)))
            .collect()
    };
    let mut seen = BTreeSet::new();
    let mut docs = BTreeMap::new();
    for (page_id, file) in entries {
        if !seen.insert(page_id.clone()) {
            return Err(format_err(path, format!("duplicate page `{page_id}`")));
        }
        let doc = doctags::parse(&read_text(&file)?).map_err(|e| format_err(&file, e))?;
        docs.insert(page_id, doc);
    }
    Ok(docs)
}

fn per_page_csv(pages: &[metrics::PageMetrics]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["page_id", "bleu", "f1", "precision", "recall", "edit_dist", "teds", "teds_s", "ro_ed"])
        .map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in pages {
        w.write_record([
            p.page_id.clone(),
            p.bleu.to_string(),
            p.f1.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.edit_dist.to_string(),
            opt(p.teds),
            opt(p.teds_s),
            opt(p.ro_ed),
        ])
        .map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn read_embeddings(path: &Path, default_label: &str) -> CliResult<EmbeddingSet> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let jsonl = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    let set = if jsonl {
        EmbeddingSet::from_jsonl(BufReader::new(file), default_label)
    } else {
        EmbeddingSet::from_csv(file, default_label)
    };
    set.map_err(|e| format_err(path, e))
}
