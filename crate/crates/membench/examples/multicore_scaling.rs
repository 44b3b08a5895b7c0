//! Multicore aggregation and per-level scaling factors, demonstrated on a
//! virtual platform where shared-resource contention is programmed in.
//!
//!     cargo run --example multicore_scaling

use membench::analysis;
use membench::engine::{Engine, SweepConfig};
use membench::kernels::KernelSpec;
use membench::topology::builtin;
use membench::virtual_platform::VirtualSchedule;

/// Sweep three hierarchy levels with `cores` workers and return per-level
/// (name, GB/s) pairs.
fn measure(cores: usize) -> Result<Vec<(String, f64)>, Box<dyn std::error::Error>> {
    // Cache plateaus scale with core count (private caches); the memory
    // plateau does not (one shared controller). worker_scale models the
    // stragglers a real part exhibits under load.
    let per_core_cache = 90.0;
    let shared_dram = 140.0;
    let mut schedule = VirtualSchedule::from_bandwidths(
        1e9,
        &[
            (64 << 10, per_core_cache),
            (1 << 20, per_core_cache * 0.6),
            (u64::MAX, (shared_dram / cores as f64).min(per_core_cache * 0.5)),
        ],
    )?;
    schedule.worker_scale = (0..cores).map(|w| 1.0 + 0.02 * w as f64).collect();

    let machine = builtin("altra_q80_30")?;
    let engine = Engine::virtual_platform(schedule, machine.clone());
    let mut config = SweepConfig::new(KernelSpec::parse_id("neon/load/post/r1")?);
    config.cores = (0..cores).collect();
    config.repetitions = 10;
    config.sizes_bytes = vec![16 << 10, 512 << 10, 64 << 20];

    let result = engine.sweep(&config)?;
    let bands = analysis::level_bands(&machine, cores);
    Ok(result
        .sizes
        .iter()
        .map(|s| {
            (
                analysis::level_annotation(&bands, s.size_bytes).to_string(),
                s.mean_gbps,
            )
        })
        .collect())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let single = measure(1)?;
    println!("single core:");
    for (level, gbps) in &single {
        println!("  {level:<4} {gbps:8.1} GB/s");
    }

    for cores in [4, 16] {
        let multi = measure(cores)?;
        println!("\n{cores} cores (aggregate over the slowest worker):");
        for (level, gbps) in &multi {
            println!("  {level:<4} {gbps:8.1} GB/s");
        }
        println!("  scaling factor vs single core (ideal {cores}.00x):");
        for (level, factor) in analysis::scaling_factor(&multi, &single)? {
            println!("  {level:<4} {factor:8.2}x");
        }
    }

    println!(
        "\ncaches scale with private copies; the memory plateau saturates — \
         the scaling factor is how far below `cores`x each level lands."
    );
    Ok(())
}
