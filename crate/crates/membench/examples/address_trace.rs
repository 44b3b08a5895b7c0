//! The exact load sequence a kernel issues, replayed from its metadata.
//! Useful for verifying stride and cursor behavior without running any
//! assembly, and for feeding cache simulators.
//!
//!     cargo run --example address_trace

use membench::kernels::{resolve_kernel_simulated, KernelSpec};
use membench::virtual_platform::address_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Contrast single-cursor and multi-cursor kernels at the same width.
    for id in ["neon/load/post/r1", "neon/fadd/manual/r4", "sve/fadd/offset/r2"] {
        let spec = KernelSpec::parse_id(id)?;
        let handle = resolve_kernel_simulated(&spec, 16)?;
        let md = *handle.metadata();
        println!(
            "{id}: {} loads x {} B per iteration, {} cursor(s) advancing {} B",
            md.loads_per_iteration,
            md.bytes_per_iteration / md.loads_per_iteration,
            md.cursor_count,
            md.cursor_advance_bytes,
        );

        let window = u64::from(md.granule_bytes);
        let trace = address_trace(&md, window, 1)?;
        let offsets: Vec<u64> = trace.iter().map(|a| a.offset).collect();
        println!("  one {window}-byte pass, offsets in issue order: {offsets:?}");

        // Multi-cursor kernels interleave independent streams; the union
        // still covers the window exactly once.
        let mut sorted = offsets.clone();
        sorted.sort_unstable();
        let load = u64::from(trace[0].length);
        assert!(sorted.iter().enumerate().all(|(k, o)| *o == k as u64 * load));
        println!("  -> covers [0, {window}) exactly once\n");
    }
    Ok(())
}
