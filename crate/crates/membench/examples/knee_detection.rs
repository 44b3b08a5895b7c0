//! Finding cache-capacity transitions in a bandwidth curve, including the
//! cases that trip up naive approaches: noise, gradual rolloff, and curves
//! with no knee at all.
//!
//!     cargo run --example knee_detection

use membench::analysis::{detect_knees, KNEE_MIN_POINTS, KNEE_RATIO, KNEE_WINDOW};
use membench::topology::builtin;

fn show(label: &str, series: &[(u64, f64)]) {
    print!("{label}: ");
    match detect_knees(series, None) {
        Err(e) => println!("{e}"),
        Ok(knees) if knees.is_empty() => println!("no knees"),
        Ok(knees) => {
            let descriptions: Vec<String> = knees
                .iter()
                .map(|k| {
                    format!(
                        "{} B ({:.0} -> {:.0} GB/s, {:?})",
                        k.boundary_bytes, k.upstream_level_gbps, k.downstream_level_gbps,
                        k.confidence
                    )
                })
                .collect();
            println!("{}", descriptions.join(", "));
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "window = {KNEE_WINDOW} points per side, trigger ratio = {KNEE_RATIO}, \
         minimum {KNEE_MIN_POINTS} points\n"
    );

    // Half-octave grid from 4 KiB.
    let grid: Vec<u64> = (0..24)
        .map(|k| {
            let exact = 4096.0 * (2.0f64).powf(k as f64 / 2.0);
            exact.round() as u64
        })
        .collect();

    // A clean two-plateau curve: 100 GB/s through 128 KiB, then 30.
    let clean: Vec<(u64, f64)> = grid
        .iter()
        .map(|&s| (s, if s <= 128 << 10 { 100.0 } else { 30.0 }))
        .collect();
    show("clean step          ", &clean);

    // The same curve with ±5% deterministic ripple still reads as one knee.
    let noisy: Vec<(u64, f64)> = clean
        .iter()
        .enumerate()
        .map(|(i, &(s, v))| (s, v * (1.0 + 0.05 * ((i % 3) as f64 - 1.0))))
        .collect();
    show("with 5% ripple      ", &noisy);

    // A gentle 2%-per-point slope never crosses the trigger ratio.
    let slope: Vec<(u64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, 100.0 * 0.98f64.powi(i as i32)))
        .collect();
    show("gradual rolloff     ", &slope);

    // Bandwidth rising with size is inverted for a load sweep; it is still
    // reported, but flagged.
    let inverted: Vec<(u64, f64)> = grid
        .iter()
        .map(|&s| (s, if s <= 128 << 10 { 30.0 } else { 100.0 }))
        .collect();
    show("inverted (suspect)  ", &inverted);

    // With a machine spec, each knee is matched to the nearest documented
    // capacity for labeling.
    let a64fx = builtin("a64fx")?;
    let shaped: Vec<(u64, f64)> = grid
        .iter()
        .map(|&s| {
            let gbps = if s <= 64 << 10 {
                180.0
            } else if s <= 8 << 20 {
                60.0
            } else {
                35.0
            };
            (s, gbps)
        })
        .collect();
    for knee in detect_knees(&shaped, Some(&a64fx))? {
        let (name, capacity) = knee.nearest_capacity.expect("spec documents capacities");
        println!(
            "a64fx-shaped curve  : boundary {} B sits nearest {name} ({capacity} B)",
            knee.boundary_bytes
        );
    }
    Ok(())
}
