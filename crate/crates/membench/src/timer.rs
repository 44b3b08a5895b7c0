//! Serialized timestamps with calibrated tick frequency.
//!
//! Bandwidth math is only as good as its clock. Two properties matter here:
//!
//! 1. **Serialization.** An out-of-order core may hoist a counter read above
//!    the loads we are trying to time. Every hardware read is therefore
//!    preceded by a full barrier: `DSB SY; ISB` before `CNTVCT_EL0` on
//!    AArch64, `MFENCE; LFENCE` before `RDTSC` on x86-64. The portable
//!    fallback issues a sequentially-consistent fence before reading the OS
//!    monotonic clock — the strongest ordering the platform offers.
//! 2. **Known frequency.** Ticks are converted to seconds through a single
//!    calibrated `tick_frequency_hz`, read from the architectural frequency
//!    register where one exists (`CNTFRQ_EL0`) and measured against the OS
//!    clock over ≥ 100 ms elsewhere. A measured frequency is taken twice;
//!    if the two runs disagree by more than 1 % the host is too noisy to
//!    trust and calibration fails rather than returning a guess.
//!
//! Read overhead is measured (mean of ≥ 1000 back-to-back read pairs) and
//! *reported* in the calibration record. It is never silently subtracted
//! from measurements; subtraction is an explicit engine option.

use std::sync::atomic::{fence, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

/// Where timestamps come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerSource {
    /// Architectural counter (`CNTVCT_EL0` on AArch64, TSC on x86-64).
    HardwareCounter,
    /// OS monotonic clock in nanosecond ticks, behind a full fence.
    OsMonotonic,
    /// Programmable clock driven by the virtual platform.
    Virtual,
}

impl TimerSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TimerSource::HardwareCounter => "hardware_counter",
            TimerSource::OsMonotonic => "os_monotonic",
            TimerSource::Virtual => "virtual",
        }
    }
}

/// Result of calibrating a timestamp source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimerCalibration {
    pub source: TimerSource,
    /// Ticks per second. From the frequency register when the architecture
    /// provides one, otherwise measured against the OS clock.
    pub tick_frequency_hz: f64,
    /// Mean cost of one serialized read, in ticks. Reported, not subtracted.
    pub read_overhead_ticks: f64,
}

#[derive(Debug, Error)]
pub enum TimerError {
    #[error("hardware counter not available on this platform")]
    BackendUnavailable,
    #[error("unstable calibration: consecutive frequency measurements {first:.0} Hz and {second:.0} Hz disagree by more than 1%")]
    UnstableCalibration { first: f64, second: f64 },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
}

/// Upper bound on a sane read overhead. A serialized counter read costs tens
/// of ticks; anything near this bound means the backend is broken or
/// emulated and its measurements would be garbage.
const MAX_READ_OVERHEAD_TICKS: f64 = 10_000.0;

/// Minimum wall-clock window for measuring tick frequency against the OS.
const FREQUENCY_WINDOW: Duration = Duration::from_millis(110);

/// Minimum number of back-to-back read pairs for the overhead estimate.
const OVERHEAD_PAIRS: usize = 1000;

// ---------------------------------------------------------------------------
// Virtual clock
// ---------------------------------------------------------------------------

/// Deterministic tick counter for the virtual platform.
///
/// Reads return the current value and then advance it by a programmed
/// per-read cost, so a clock with `read_advance_ticks = 100` yields
/// 0, 100, 200, … from consecutive reads. Kernel execution advances the
/// clock explicitly via [`VirtualClock::advance`].
#[derive(Debug)]
pub struct VirtualClock {
    now: AtomicU64,
    read_advance_ticks: u64,
    tick_frequency_hz: f64,
}

impl VirtualClock {
    pub fn new(tick_frequency_hz: f64, read_advance_ticks: u64) -> Arc<Self> {
        Arc::new(VirtualClock {
            now: AtomicU64::new(0),
            read_advance_ticks,
            tick_frequency_hz,
        })
    }

    pub fn read(&self) -> u64 {
        self.now.fetch_add(self.read_advance_ticks, Ordering::SeqCst)
    }

    pub fn advance(&self, ticks: u64) {
        self.now.fetch_add(ticks, Ordering::SeqCst);
    }

    pub fn tick_frequency_hz(&self) -> f64 {
        self.tick_frequency_hz
    }

    pub fn read_advance_ticks(&self) -> u64 {
        self.read_advance_ticks
    }
}

// ---------------------------------------------------------------------------
// Backend
// ---------------------------------------------------------------------------

/// A timestamp source plus the state it needs.
#[derive(Debug, Clone)]
pub enum TimerBackend {
    /// Architectural counter. Only constructible where one exists.
    Hardware,
    /// OS monotonic clock; ticks are nanoseconds since backend creation.
    OsMonotonic { epoch: Instant },
    /// Clock owned by a virtual-platform worker.
    Virtual(Arc<VirtualClock>),
}

impl TimerBackend {
    /// Hardware counter if this architecture has one, OS clock otherwise.
    pub fn default_for_host() -> TimerBackend {
        if cfg!(any(target_arch = "aarch64", target_arch = "x86_64")) {
            TimerBackend::Hardware
        } else {
            TimerBackend::os_monotonic()
        }
    }

    pub fn hardware() -> Result<TimerBackend, TimerError> {
        if cfg!(any(target_arch = "aarch64", target_arch = "x86_64")) {
            Ok(TimerBackend::Hardware)
        } else {
            Err(TimerError::BackendUnavailable)
        }
    }

    pub fn os_monotonic() -> TimerBackend {
        TimerBackend::OsMonotonic {
            epoch: Instant::now(),
        }
    }

    pub fn source(&self) -> TimerSource {
        match self {
            TimerBackend::Hardware => TimerSource::HardwareCounter,
            TimerBackend::OsMonotonic { .. } => TimerSource::OsMonotonic,
            TimerBackend::Virtual(_) => TimerSource::Virtual,
        }
    }

    /// One serialized timestamp. Non-decreasing across consecutive calls
    /// from the same thread.
    #[inline]
    pub fn read(&self) -> u64 {
        match self {
            TimerBackend::Hardware => read_hardware_counter(),
            TimerBackend::OsMonotonic { epoch } => {
                fence(Ordering::SeqCst);
                epoch.elapsed().as_nanos() as u64
            }
            TimerBackend::Virtual(clock) => clock.read(),
        }
    }

    /// Establishes tick frequency and read overhead for this backend.
    ///
    /// Measured frequencies are taken twice; >1 % disagreement fails with
    /// [`TimerError::UnstableCalibration`]. Declared frequencies (frequency
    /// register, OS clock, virtual clock) are exact by construction, so
    /// calibration is idempotent for those sources.
    pub fn calibrate(&self) -> Result<TimerCalibration, TimerError> {
        let tick_frequency_hz = match self {
            TimerBackend::Hardware => match declared_hardware_frequency() {
                Some(freq) => freq,
                None => {
                    let first = self.measure_frequency();
                    let second = self.measure_frequency();
                    let spread = (first - second).abs() / first.max(second);
                    if spread > 0.01 {
                        return Err(TimerError::UnstableCalibration { first, second });
                    }
                    (first + second) / 2.0
                }
            },
            TimerBackend::OsMonotonic { .. } => 1e9,
            TimerBackend::Virtual(clock) => clock.tick_frequency_hz(),
        };
        if !(tick_frequency_hz.is_finite() && tick_frequency_hz > 0.0) {
            return Err(TimerError::CalibrationFailed(format!(
                "tick frequency {tick_frequency_hz} Hz is not usable"
            )));
        }

        let read_overhead_ticks = match self {
            TimerBackend::Virtual(clock) => clock.read_advance_ticks() as f64,
            _ => {
                let mut total: u64 = 0;
                for _ in 0..OVERHEAD_PAIRS {
                    let a = self.read();
                    let b = self.read();
                    total += b.saturating_sub(a);
                }
                total as f64 / OVERHEAD_PAIRS as f64
            }
        };
        if read_overhead_ticks >= MAX_READ_OVERHEAD_TICKS {
            return Err(TimerError::CalibrationFailed(format!(
                "read overhead {read_overhead_ticks:.0} ticks exceeds sanity bound {MAX_READ_OVERHEAD_TICKS}"
            )));
        }

        Ok(TimerCalibration {
            source: self.source(),
            tick_frequency_hz,
            read_overhead_ticks,
        })
    }

    /// Tick rate against the OS clock over at least 100 ms.
    fn measure_frequency(&self) -> f64 {
        let wall_start = Instant::now();
        let t0 = self.read();
        std::thread::sleep(FREQUENCY_WINDOW);
        let t1 = self.read();
        let wall = wall_start.elapsed().as_secs_f64();
        (t1.saturating_sub(t0)) as f64 / wall
    }
}

/// Converts a tick delta to seconds: `1800` ticks at 1.8 GHz is 1 µs.
pub fn ticks_to_seconds(delta_ticks: u64, calibration: &TimerCalibration) -> f64 {
    delta_ticks as f64 / calibration.tick_frequency_hz
}

// ---------------------------------------------------------------------------
// Per-architecture serialized reads
// ---------------------------------------------------------------------------

#[cfg(target_arch = "aarch64")]
#[inline]
fn read_hardware_counter() -> u64 {
    let ticks: u64;
    // DSB SY drains every outstanding memory access; ISB then prevents the
    // counter read from issuing early. This is the full-strength ordering —
    // ISB alone does not stop loads already in flight from completing late.
    unsafe {
        core::arch::asm!(
            "dsb sy",
            "isb",
            "mrs {ticks}, cntvct_el0",
            ticks = out(reg) ticks,
            options(nomem, nostack)
        );
    }
    ticks
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn read_hardware_counter() -> u64 {
    let lo: u32;
    let hi: u32;
    // MFENCE orders stores, LFENCE keeps RDTSC from executing until every
    // prior instruction has completed locally — the x86 equivalent of the
    // DSB SY / ISB pair.
    unsafe {
        core::arch::asm!(
            "mfence",
            "lfence",
            "rdtsc",
            out("eax") lo,
            out("edx") hi,
            options(nomem, nostack)
        );
    }
    ((hi as u64) << 32) | lo as u64
}

#[cfg(not(any(target_arch = "aarch64", target_arch = "x86_64")))]
#[inline]
fn read_hardware_counter() -> u64 {
    unreachable!("hardware backend is never constructed on this architecture")
}

/// Architectural frequency register, where one exists.
fn declared_hardware_frequency() -> Option<f64> {
    #[cfg(target_arch = "aarch64")]
    {
        let freq: u64;
        unsafe {
            core::arch::asm!("mrs {f}, cntfrq_el0", f = out(reg) freq, options(nomem, nostack));
        }
        return Some(freq as f64);
    }
    #[cfg(not(target_arch = "aarch64"))]
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_to_seconds_at_declared_frequency() {
        let cal = TimerCalibration {
            source: TimerSource::Virtual,
            tick_frequency_hz: 1.8e9,
            read_overhead_ticks: 0.0,
        };
        assert_eq!(ticks_to_seconds(1800, &cal), 1.0e-6);
    }

    #[test]
    fn reads_are_monotonic() {
        let backend = TimerBackend::default_for_host();
        let mut prev = backend.read();
        for _ in 0..10_000 {
            let next = backend.read();
            assert!(next >= prev, "timestamp went backwards: {prev} -> {next}");
            prev = next;
        }
    }

    #[test]
    fn os_monotonic_calibration_reports_nanosecond_ticks() {
        let backend = TimerBackend::os_monotonic();
        let cal = backend.calibrate().expect("monotonic clock must calibrate");
        assert_eq!(cal.source, TimerSource::OsMonotonic);
        assert_eq!(cal.tick_frequency_hz, 1e9);
        assert!(cal.read_overhead_ticks < MAX_READ_OVERHEAD_TICKS);
    }

    #[test]
    fn hardware_calibration_when_available() {
        match TimerBackend::hardware() {
            Ok(backend) => {
                let cal = backend.calibrate().expect("hardware calibration");
                assert_eq!(cal.source, TimerSource::HardwareCounter);
                assert!(cal.tick_frequency_hz > 1e6, "implausibly slow counter");
                assert!(cal.read_overhead_ticks >= 0.0);
            }
            Err(TimerError::BackendUnavailable) => {} // nothing to test here
            Err(other) => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn virtual_clock_advances_per_read() {
        let clock = VirtualClock::new(1e9, 100);
        let backend = TimerBackend::Virtual(clock.clone());
        assert_eq!(backend.read(), 0);
        assert_eq!(backend.read(), 100);
        assert_eq!(backend.read(), 200);
        clock.advance(50);
        assert_eq!(backend.read(), 350);
    }

    #[test]
    fn virtual_calibration_is_idempotent() {
        let clock = VirtualClock::new(2.5e9, 7);
        let backend = TimerBackend::Virtual(clock);
        let a = backend.calibrate().unwrap();
        let b = backend.calibrate().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tick_frequency_hz, 2.5e9);
        assert_eq!(a.read_overhead_ticks, 7.0);
    }

    #[test]
    fn empty_region_costs_at_most_three_read_overheads() {
        let clock = VirtualClock::new(1e9, 40);
        let backend = TimerBackend::Virtual(clock);
        let cal = backend.calibrate().unwrap();
        let t0 = backend.read();
        let t1 = backend.read();
        let elapsed = (t1 - t0) as f64;
        assert!(elapsed <= 3.0 * cal.read_overhead_ticks);
    }

    #[test]
    fn absurd_virtual_read_cost_fails_calibration() {
        let clock = VirtualClock::new(1e9, 50_000);
        let backend = TimerBackend::Virtual(clock);
        assert!(matches!(
            backend.calibrate(),
            Err(TimerError::CalibrationFailed(_))
        ));
    }
}
