//! An actual measurement of this machine, using whatever runs here: the
//! vector kernels where the ISA allows, the portable scalar kernel anywhere
//! else. Small and fast rather than rigorous — raise the sizes, repetitions,
//! and minimum bytes per sample for numbers worth quoting.
//!
//!     cargo run --release --example real_sweep

use membench::analysis;
use membench::engine::{Engine, SweepConfig};
use membench::kernels::{extension_available, KernelSpec};
use membench::timer::TimerBackend;
use membench::topology;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let kernel = ["neon/fadd/manual/r4", "sve/fadd/offset/r4", "scalar/fadd/manual/r1"]
        .iter()
        .map(|id| KernelSpec::parse_id(id).expect("known ids"))
        .find(|spec| extension_available(spec.isa_extension))
        .expect("the scalar kernel runs everywhere");

    let machine = topology::detect();
    println!(
        "host: {} cores, largest detected cache {:?} B",
        machine.core_count(),
        machine.largest_cache_bytes(),
    );

    let engine = Engine::real(TimerBackend::default_for_host(), machine.clone());
    let mut config = SweepConfig::new(kernel);
    config.sizes_bytes = (0..=12).map(|k| 8192u64 << k).collect(); // 8 KiB .. 32 MiB
    config.repetitions = 10;
    config.min_bytes_per_sample = 16 << 20;

    let result = engine.sweep(&config)?;
    println!(
        "{} via {} timer ({} reps/size):",
        result.kernel_id,
        result.timer_source.as_str(),
        result.repetitions
    );
    let bands = analysis::level_bands(&machine, 1);
    for size in &result.sizes {
        println!(
            "{:>12} B {:>9.2} GB/s (stddev {:>6.2}) {}",
            size.size_bytes,
            size.mean_gbps,
            size.stddev_gbps,
            analysis::level_annotation(&bands, size.size_bytes),
        );
    }
    for warning in &result.warnings {
        println!("note: {warning}");
    }

    let series: Vec<(u64, f64)> = result.sizes.iter().map(|s| (s.size_bytes, s.mean_gbps)).collect();
    match analysis::detect_knees(&series, Some(&machine)) {
        Ok(knees) if !knees.is_empty() => {
            for knee in knees {
                println!(
                    "knee near {} B: {:.1} -> {:.1} GB/s",
                    knee.boundary_bytes, knee.upstream_level_gbps, knee.downstream_level_gbps
                );
            }
        }
        _ => println!("no clear knees at these sizes"),
    }
    Ok(())
}
