//! What each timer backend reports on this host: tick frequency and the
//! cost of reading the clock, which bound how short a measurement can be.
//!
//!     cargo run --example timer_calibration

use membench::timer::{TimerBackend, VirtualClock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut backends = vec![TimerBackend::os_monotonic()];
    match TimerBackend::hardware() {
        Ok(hw) => backends.push(hw),
        Err(e) => println!("hardware counter unavailable here: {e}"),
    }
    backends.push(TimerBackend::Virtual(VirtualClock::new(1e9, 5)));

    for backend in backends {
        let cal = backend.calibrate()?;
        println!(
            "{:<18} {:>16.0} Hz, read overhead {:>8.2} ticks ({:.1} ns)",
            cal.source.as_str(),
            cal.tick_frequency_hz,
            cal.read_overhead_ticks,
            cal.read_overhead_ticks / cal.tick_frequency_hz * 1e9,
        );
    }

    // The smallest honest measurement: overhead should stay under 1% of the
    // measured interval, which is why tiny working sets are re-read in
    // passes until enough bytes have moved.
    let cal = TimerBackend::os_monotonic().calibrate()?;
    let floor_ticks = cal.read_overhead_ticks * 100.0;
    println!(
        "\nwith {} a sample should span >= {:.0} ticks (~{:.2} us) to keep \
         read overhead below 1%",
        cal.source.as_str(),
        floor_ticks,
        floor_ticks / cal.tick_frequency_hz * 1e6,
    );
    Ok(())
}
