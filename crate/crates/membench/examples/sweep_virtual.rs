//! The whole pipeline on a machine that doesn't exist: program a three-level
//! cost model, sweep working sets across it, and read back the hierarchy.
//!
//!     cargo run --example sweep_virtual

use membench::analysis;
use membench::engine::{default_size_grid, Engine, SweepConfig};
use membench::kernels::KernelSpec;
use membench::topology::builtin;
use membench::virtual_platform::VirtualSchedule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A 48-core part seen from one core: 160 GB/s until 64 KiB, 60 GB/s
    // until 8 MiB, 38 GB/s beyond. Ticks are 1 ns at 1 GHz.
    let mut schedule = VirtualSchedule::from_bandwidths(
        1e9,
        &[(64 << 10, 160.0), (8 << 20, 60.0), (u64::MAX, 38.0)],
    )?;
    schedule.per_worker_jitter = 0.01; // 1% measurement noise

    let machine = builtin("a64fx")?;
    let engine = Engine::virtual_platform(schedule, machine.clone());

    let kernel = KernelSpec::parse_id("neon/fadd/manual/r4")?;
    let granule = engine.resolve(&kernel)?.metadata().granule_bytes;

    let mut config = SweepConfig::new(kernel);
    config.sizes_bytes = default_size_grid(&machine, granule);
    config.repetitions = 20;
    config.seed = 7;

    let result = engine.sweep(&config)?;
    let bands = analysis::level_bands(&machine, config.cores.len());

    println!("{} on {} ({} sizes, {} reps)", result.kernel_id, result.machine_name,
             result.sizes.len(), result.repetitions);
    println!("{:>14} {:>10} {:>8} {:>6}", "working set", "GB/s", "stddev", "level");
    for size in &result.sizes {
        println!(
            "{:>14} {:>10.2} {:>8.3} {:>6}",
            size.size_bytes,
            size.mean_gbps,
            size.stddev_gbps,
            analysis::level_annotation(&bands, size.size_bytes),
        );
    }

    let series: Vec<(u64, f64)> = result.sizes.iter().map(|s| (s.size_bytes, s.mean_gbps)).collect();
    println!("\nknees:");
    for knee in analysis::detect_knees(&series, Some(&machine))? {
        let near = knee
            .nearest_capacity
            .map(|(name, cap)| format!("{name} ({cap} B)"))
            .unwrap_or_default();
        println!(
            "  {:>10} B: {:.1} -> {:.1} GB/s ({:?}), nearest documented capacity: {near}",
            knee.boundary_bytes, knee.upstream_level_gbps, knee.downstream_level_gbps,
            knee.confidence,
        );
    }

    println!("\nefficiency against documented peaks:");
    for level in analysis::efficiency_report(&series, &bands).levels {
        match (level.measured_gbps, level.peak_gbps, level.efficiency_fraction) {
            (Some(m), Some(p), Some(f)) => {
                println!("  {:>5}: {m:8.2} of {p:8.2} GB/s = {:5.1}%", level.level, f * 100.0)
            }
            (Some(m), None, _) => println!("  {:>5}: {m:8.2} GB/s (no documented peak)", level.level),
            _ => println!("  {:>5}: no samples in band", level.level),
        }
    }
    Ok(())
}
