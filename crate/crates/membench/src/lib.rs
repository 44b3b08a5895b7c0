//! Memory-hierarchy load-throughput microbenchmark.
//!
//! `membench` measures how fast a core (or a set of cores) can *read* memory
//! as the working set walks from L1d out to DRAM. It is built around a few
//! hard rules that make the numbers defensible:
//!
//! * timestamps are serialized reads of a counter with a known frequency,
//!   never averages of noisy clock deltas;
//! * the traffic per sample is fixed in *bytes*, not iterations, so every
//!   working-set size sees comparable measurement duration;
//! * buffers are filled with a denormal-safe pattern so FP arithmetic in the
//!   measurement loop can never fall off the fast path;
//! * multi-core bandwidth is aggregated by the slowest-thread rule: total
//!   bytes over the *maximum* per-worker elapsed time, which is the only
//!   aggregation that cannot overstate sustained throughput.
//!
//! The measurement kernels come in four flavours selected by
//! [`kernels::IsaExtension`]: hand-written NEON and SVE assembly on AArch64,
//! a portable scalar fallback for any host (labeled non-authoritative in all
//! output), and a fully deterministic *virtual* backend that replays a
//! programmed bandwidth schedule. The virtual backend is what makes the whole
//! pipeline testable: every statistics, knee-detection, and reporting path
//! can be driven end to end with known-good inputs and byte-identical output.
//!
//! Start with the runnable examples (`cargo run --example sweep_virtual`) or
//! the thin CLI (`cargo run --bin membench -- --help`).

mod affinity;
pub mod analysis;
pub mod cli;
pub mod engine;
pub mod kernels;
mod kvfile;
pub mod memory;
pub mod output;
pub mod timer;
pub mod topology;
pub mod virtual_platform;
