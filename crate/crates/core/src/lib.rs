//! Deterministic core of a layout-prior guided document parsing pipeline.
//!
//! The crate covers everything around the vision-language model that can be
//! checked without one:
//!
//! - [`doctags`]: the DocTags markup vocabulary, parser and serializer.
//! - [`layout`]: detector post-processing (confidence filter, fragment merge, NMS).
//! - [`prior`]: quantization to the location grid, layout prior and prompt
//!   construction, ablation perturbations and prompt overhead statistics.
//! - [`mask`]: the location-token loss mask and masked NLL.
//! - [`guard`]: decode stability auditing (token budget and repetition).
//! - [`metrics`]: edit distance, BLEU, token F1, TEDS and reading order.
//! - [`analysis`]: attention aggregation and MMD distribution-shift diagnostics.
//! - [`mock`]: a seeded stand-in decoder for end-to-end runs.
//! - [`cli`]: the `doctags-prior` command line.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod analysis;
pub mod cli;
pub mod doctags;
pub mod guard;
pub mod layout;
pub mod mask;
pub mod metrics;
pub mod mock;
pub mod prior;
pub mod rng;
