//! Where machine descriptions come from: shipped reference specs, host
//! detection, and user files — and how overrides merge onto a detected base.
//!
//!     cargo run --example machine_specs

use membench::topology::{self, MachineSpec, Provenance};

fn describe(spec: &MachineSpec) {
    println!(
        "{} [{:?}]: {} cores / {} socket(s), nominal {}",
        spec.name,
        spec.provenance,
        spec.core_count(),
        spec.sockets,
        spec.nominal_frequency_hz
            .map(|f| format!("{:.2} GHz", f as f64 / 1e9))
            .unwrap_or_else(|| "unknown".into()),
    );
    for level in &spec.cache_levels {
        let peak = level
            .peak_gbps_per_core
            .map(|p| format!(", {p} GB/s per core"))
            .unwrap_or_default();
        println!(
            "  {:<4} {:>12} B, {:?}{peak}",
            level.name, level.capacity_bytes, level.scope
        );
    }
    if let Some(dram) = spec.dram_peak_gbps_per_socket {
        println!("  DRAM {dram} GB/s per socket");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("=== shipped reference machines ===");
    for spec in topology::builtin_specs() {
        describe(&spec);
        spec.validate()?;
    }

    println!("\n=== this host, as detected ===");
    let detected = topology::detect();
    describe(&detected);
    for warning in &detected.warnings {
        println!("  warning: {warning}");
    }

    // A user file only has to name what it wants to change; merging onto a
    // base keeps everything else, and derived GB/s figures are recomputed
    // when the frequency moves.
    println!("\n=== user override: altra clocked down to 2.8 GHz ===");
    let user = MachineSpec::parse("name = altra_downclocked\nfrequency_hz = 2_800_000_000\n")?;
    let merged = MachineSpec::merge(&topology::builtin("altra_q80_30")?, &user);
    assert_eq!(merged.provenance, Provenance::Merged);
    describe(&merged);
    merged.validate()?;

    // Round-trip: any spec can be written back out as the same file format.
    println!("\n=== the merged spec, serialized ===");
    print!("{}", merged.to_file_format());
    Ok(())
}
