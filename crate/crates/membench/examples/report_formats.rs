//! The three output artifacts a run can produce — CSV, JSON, and a plot
//! script — rendered from one small virtual sweep, plus the config echo and
//! hash that make results traceable back to their exact settings.
//!
//!     cargo run --example report_formats

use membench::engine::{Engine, SweepConfig};
use membench::kernels::KernelSpec;
use membench::output::{config_echo, config_hash, render_csv, render_json, render_plot_script};
use membench::topology::builtin;
use membench::virtual_platform::VirtualSchedule;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = VirtualSchedule::from_bandwidths(
        1e9,
        &[(64 << 10, 200.0), (u64::MAX, 80.0)],
    )?;
    let machine = builtin("a64fx")?;
    let engine = Engine::virtual_platform(schedule.clone(), machine.clone());

    let mut config = SweepConfig::new(KernelSpec::parse_id("neon/fadd/manual/r4")?);
    config.sizes_bytes = vec![16 << 10, 64 << 10, 4 << 20];
    config.repetitions = 5;
    let series = engine.sweep(&config)?;

    // Every artifact embeds the echo's hash; two outputs with the same hash
    // came from identical settings, whatever file they ended up in.
    let echo = config_echo(&config, &machine, Some(&schedule));
    println!("=== config echo (sha256 {}) ===", config_hash(&echo));
    print!("{echo}");

    println!("\n=== CSV ===");
    print!("{}", render_csv(&series, &machine, &echo));

    println!("\n=== JSON ===");
    print!("{}", render_json(&series, &machine, &echo));

    println!("\n=== plot script (pipe the CSV next to it and run) ===");
    print!("{}", render_plot_script("run.csv", &series));
    Ok(())
}
