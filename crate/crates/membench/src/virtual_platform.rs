//! Deterministic stand-in for real hardware.
//!
//! A [`VirtualSchedule`] describes a piecewise-constant cost curve — ticks per
//! byte as a function of working-set size — plus optional reproducible noise.
//! The engine runs "virtual" kernels against it exactly as it runs real ones,
//! except that elapsed time is computed from the curve and pushed into a
//! [`VirtualClock`](crate::timer::VirtualClock) instead of being observed.
//! Every downstream number (bandwidth, statistics, knees, CSV bytes) is then
//! fully determined by the schedule and seed, which is what makes the rest of
//! the pipeline testable on machines that have nothing to measure.
//!
//! Schedules live in the same `key = value` file format as machine specs,
//! under `vplat.*` keys:
//!
//! ```text
//! vplat.tick_frequency_hz = 1_000_000_000
//! vplat.read_overhead_ticks = 0
//! vplat.jitter = 0.02
//! vplat.plateau.0.max_bytes = 65_536
//! vplat.plateau.0.ticks_per_byte = 0.5
//! vplat.plateau.1.max_bytes = 8_388_608
//! vplat.plateau.1.ticks_per_byte = 1.25
//! # optional:
//! vplat.worker_scale = 1.0,1.0,0.9
//! vplat.vector_bytes = 16
//! ```
//!
//! The last plateau also covers every size beyond its bound, so a schedule is
//! total over all working-set sizes.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kernels::{KernelError, KernelMetadata};
use crate::kvfile::{KvError, KvFile, KvWriter};
use crate::timer::VirtualClock;

/// One segment of the cost curve: every working set up to (and including)
/// `max_working_set_bytes` costs `ticks_per_byte` to stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub max_working_set_bytes: u64,
    pub ticks_per_byte: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirtualSchedule {
    /// Ordered by working-set size; later plateaus may not be cheaper.
    pub plateaus: Vec<Plateau>,
    /// Relative amplitude of the reproducible per-sample noise, in [0, 1).
    /// 0 disables jitter entirely.
    pub per_worker_jitter: f64,
    pub tick_frequency_hz: f64,
    /// Programmed cost of one clock read, in ticks.
    pub read_overhead_ticks: u64,
    /// Optional per-worker slowdown factors (elapsed multiplier). Workers
    /// beyond the end of the list run at 1.0. Empty = all symmetric.
    pub worker_scale: Vec<f64>,
    /// Vector width reported for `virtual/*` kernels driven by this
    /// schedule. None = the catalog default.
    pub vector_bytes: Option<u32>,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("schedule has no plateaus")]
    EmptyPlateaus,
    #[error("plateau {index}: working-set bound {found} does not increase over {previous}")]
    UnorderedPlateaus { index: usize, previous: u64, found: u64 },
    #[error("plateau {index}: ticks_per_byte {found} decreases below {previous} (larger sets cannot be faster)")]
    DecreasingCost { index: usize, previous: f64, found: f64 },
    #[error("plateau {index}: ticks_per_byte must be finite and > 0, got {value}")]
    BadCost { index: usize, value: f64 },
    #[error("per_worker_jitter must lie in [0, 1), got {0}")]
    BadJitter(f64),
    #[error("tick_frequency_hz must be finite and > 0, got {0}")]
    BadFrequency(f64),
    #[error("worker_scale entries must be finite and > 0, got {0}")]
    BadWorkerScale(f64),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error(transparent)]
    Format(#[from] KvError),
    #[error("reading schedule: {0}")]
    Io(#[from] std::io::Error),
}

impl VirtualSchedule {
    /// A flat single-plateau schedule: `ticks_per_byte` everywhere, no
    /// jitter, free clock reads. The usual starting point in tests.
    pub fn flat(tick_frequency_hz: f64, ticks_per_byte: f64) -> Self {
        VirtualSchedule {
            plateaus: vec![Plateau {
                max_working_set_bytes: u64::MAX,
                ticks_per_byte,
            }],
            per_worker_jitter: 0.0,
            tick_frequency_hz,
            read_overhead_ticks: 0,
            worker_scale: Vec::new(),
            vector_bytes: None,
        }
    }

    /// Builds a schedule from `(max_working_set_bytes, gigabytes_per_second)`
    /// pairs. Bandwidths must be non-increasing, mirroring a load sweep
    /// walking down the hierarchy.
    pub fn from_bandwidths(
        tick_frequency_hz: f64,
        levels: &[(u64, f64)],
    ) -> Result<Self, ScheduleError> {
        let plateaus = levels
            .iter()
            .map(|&(max, gbps)| Plateau {
                max_working_set_bytes: max,
                ticks_per_byte: tick_frequency_hz / (gbps * 1e9),
            })
            .collect();
        let schedule = VirtualSchedule {
            plateaus,
            per_worker_jitter: 0.0,
            tick_frequency_hz,
            read_overhead_ticks: 0,
            worker_scale: Vec::new(),
            vector_bytes: None,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.plateaus.is_empty() {
            return Err(ScheduleError::EmptyPlateaus);
        }
        for (i, p) in self.plateaus.iter().enumerate() {
            if !p.ticks_per_byte.is_finite() || p.ticks_per_byte <= 0.0 {
                return Err(ScheduleError::BadCost {
                    index: i,
                    value: p.ticks_per_byte,
                });
            }
            if i > 0 {
                let prev = &self.plateaus[i - 1];
                if p.max_working_set_bytes <= prev.max_working_set_bytes {
                    return Err(ScheduleError::UnorderedPlateaus {
                        index: i,
                        previous: prev.max_working_set_bytes,
                        found: p.max_working_set_bytes,
                    });
                }
                if p.ticks_per_byte < prev.ticks_per_byte {
                    return Err(ScheduleError::DecreasingCost {
                        index: i,
                        previous: prev.ticks_per_byte,
                        found: p.ticks_per_byte,
                    });
                }
            }
        }
        if !(0.0..1.0).contains(&self.per_worker_jitter) {
            return Err(ScheduleError::BadJitter(self.per_worker_jitter));
        }
        if !self.tick_frequency_hz.is_finite() || self.tick_frequency_hz <= 0.0 {
            return Err(ScheduleError::BadFrequency(self.tick_frequency_hz));
        }
        for &s in &self.worker_scale {
            if !s.is_finite() || s <= 0.0 {
                return Err(ScheduleError::BadWorkerScale(s));
            }
        }
        Ok(())
    }

    /// Cost of the plateau covering `working_set_bytes`. Sizes past the last
    /// bound fall into the last plateau.
    pub fn ticks_per_byte(&self, working_set_bytes: u64) -> f64 {
        for p in &self.plateaus {
            if working_set_bytes <= p.max_working_set_bytes {
                return p.ticks_per_byte;
            }
        }
        self.plateaus.last().expect("validated non-empty").ticks_per_byte
    }

    /// The bandwidth the schedule encodes at this size, ignoring jitter and
    /// worker scaling — the oracle value pipeline tests compare against.
    pub fn bandwidth_gbps(&self, working_set_bytes: u64) -> f64 {
        self.tick_frequency_hz / (self.ticks_per_byte(working_set_bytes) * 1e9)
    }

    fn scale_for(&self, worker: usize) -> f64 {
        self.worker_scale.get(worker).copied().unwrap_or(1.0)
    }

    /// A clock programmed with this schedule's tick rate and read cost.
    pub fn clock(&self) -> Arc<VirtualClock> {
        VirtualClock::new(self.tick_frequency_hz, self.read_overhead_ticks)
    }

    pub fn load(path: &Path) -> Result<Self, ScheduleError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScheduleError> {
        let kv = KvFile::parse(text)?;
        let tick_frequency_hz = kv
            .get_f64("vplat.tick_frequency_hz")?
            .ok_or(ScheduleError::MissingKey("vplat.tick_frequency_hz"))?;
        let read_overhead_ticks = kv.get_u64("vplat.read_overhead_ticks")?.unwrap_or(0);
        let per_worker_jitter = kv.get_f64("vplat.jitter")?.unwrap_or(0.0);
        let vector_bytes = kv.get_u32("vplat.vector_bytes")?;
        let worker_scale = match kv.get("vplat.worker_scale") {
            None => Vec::new(),
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| KvError::BadValue {
                    key: "vplat.worker_scale".into(),
                    expected: "comma-separated floats",
                    value: list.to_string(),
                })?,
        };
        let mut plateaus = Vec::new();
        for (i, group) in kv.indexed_groups("vplat.plateau")?.iter().enumerate() {
            let field = |name: &str| -> Result<f64, ScheduleError> {
                group
                    .get(name)
                    .ok_or(ScheduleError::MissingKey("vplat.plateau.<n>.max_bytes/ticks_per_byte"))?
                    .replace('_', "")
                    .parse::<f64>()
                    .map_err(|_| {
                        ScheduleError::Format(KvError::BadValue {
                            key: format!("vplat.plateau.{i}.{name}"),
                            expected: "number",
                            value: group.get(name).cloned().unwrap_or_default(),
                        })
                    })
            };
            plateaus.push(Plateau {
                max_working_set_bytes: field("max_bytes")? as u64,
                ticks_per_byte: field("ticks_per_byte")?,
            });
        }
        let schedule = VirtualSchedule {
            plateaus,
            per_worker_jitter,
            tick_frequency_hz,
            read_overhead_ticks,
            worker_scale,
            vector_bytes,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn to_file_format(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("virtual platform schedule");
        w.set("vplat.tick_frequency_hz", format_plain(self.tick_frequency_hz));
        w.set("vplat.read_overhead_ticks", self.read_overhead_ticks);
        w.set("vplat.jitter", format_plain(self.per_worker_jitter));
        if !self.worker_scale.is_empty() {
            let list: Vec<String> = self.worker_scale.iter().map(|s| format_plain(*s)).collect();
            w.set("vplat.worker_scale", list.join(","));
        }
        if let Some(vb) = self.vector_bytes {
            w.set("vplat.vector_bytes", vb);
        }
        for (i, p) in self.plateaus.iter().enumerate() {
            w.blank();
            w.set(format!("vplat.plateau.{i}.max_bytes").as_str(), p.max_working_set_bytes);
            w.set(
                format!("vplat.plateau.{i}.ticks_per_byte").as_str(),
                format_plain(p.ticks_per_byte),
            );
        }
        w.finish()
    }
}

/// Renders floats without scientific notation so files parse back exactly
/// (`f64::to_string` round-trips and never emits `e` for these magnitudes).
fn format_plain(v: f64) -> String {
    let s = v.to_string();
    if s.contains('e') || s.contains('E') {
        format!("{v:.17}")
    } else {
        s
    }
}

/// Elapsed ticks for one measured region: `bytes` of traffic against the
/// plateau covering `working_set_bytes`, with the worker's scale factor and
/// the keyed jitter draw applied, rounded to whole ticks.
pub fn virtual_execute(
    schedule: &VirtualSchedule,
    working_set_bytes: u64,
    bytes: u64,
    seed: u64,
    worker: usize,
    repetition: u32,
) -> u64 {
    let jitter = jitter_factor(schedule.per_worker_jitter, seed, worker, repetition);
    let ticks = bytes as f64
        * schedule.ticks_per_byte(working_set_bytes)
        * (1.0 + jitter)
        * schedule.scale_for(worker);
    ticks.round() as u64
}

/// Reproducible noise in [-amplitude, amplitude]: a fresh generator keyed by
/// (seed, worker, repetition), so any sample can be recomputed in isolation
/// and no ordering between workers or repetitions matters.
pub fn jitter_factor(amplitude: f64, seed: u64, worker: usize, repetition: u32) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(worker as u64).to_le_bytes());
    key[16..24].copy_from_slice(&u64::from(repetition).to_le_bytes());
    key[24..32].copy_from_slice(b"mbjitter");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.gen_range(-1.0..=1.0) * amplitude
}

/// One simulated load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub offset: u64,
    pub length: u32,
}

/// Replays the access geometry a kernel's metadata declares: `cursor_count`
/// read cursors starting one load footprint apart, used round-robin, each
/// advancing by `cursor_advance_bytes` after use. Returns every load of every
/// pass in issue order.
pub fn address_trace(
    metadata: &KernelMetadata,
    window_bytes: u64,
    passes: u32,
) -> Result<Vec<Access>, KernelError> {
    let granule = u64::from(metadata.granule_bytes);
    if window_bytes == 0 || window_bytes % granule != 0 {
        return Err(KernelError::WindowGeometry {
            len: window_bytes as usize,
            granule: metadata.granule_bytes,
        });
    }
    let load_bytes = u64::from(metadata.bytes_per_iteration / metadata.loads_per_iteration);
    let cursors = metadata.cursor_count as usize;
    let advance = u64::from(metadata.cursor_advance_bytes);
    let loads_per_pass = window_bytes / load_bytes;
    let mut trace = Vec::with_capacity(loads_per_pass as usize * passes as usize);
    for _ in 0..passes {
        let mut offsets: Vec<u64> = (0..cursors as u64).map(|i| i * load_bytes).collect();
        for k in 0..loads_per_pass {
            let c = (k % cursors as u64) as usize;
            trace.push(Access {
                offset: offsets[c],
                length: load_bytes as u32,
            });
            offsets[c] += advance;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{
        AddressingMode, InstructionMix, IsaExtension, KernelSpec, resolve_kernel_simulated,
    };

    fn metadata_for(ext: IsaExtension, addr: AddressingMode, regs: u8) -> KernelMetadata {
        let spec = KernelSpec::new(ext, InstructionMix::ArithFadd, addr, regs);
        *resolve_kernel_simulated(&spec, 16).unwrap().metadata()
    }

    #[test]
    fn flat_schedule_costs_the_same_everywhere() {
        let s = VirtualSchedule::flat(1e9, 0.5);
        assert_eq!(s.ticks_per_byte(1), 0.5);
        assert_eq!(s.ticks_per_byte(u64::MAX), 0.5);
        assert_eq!(virtual_execute(&s, 65_536, 65_536, 0, 0, 0), 32_768);
    }

    #[test]
    fn plateau_lookup_walks_the_curve() {
        let s = VirtualSchedule {
            plateaus: vec![
                Plateau { max_working_set_bytes: 65_536, ticks_per_byte: 0.5 },
                Plateau { max_working_set_bytes: 8 << 20, ticks_per_byte: 1.5 },
            ],
            ..VirtualSchedule::flat(1e9, 1.0)
        };
        assert_eq!(s.ticks_per_byte(1024), 0.5);
        assert_eq!(s.ticks_per_byte(65_536), 0.5); // bound is inclusive
        assert_eq!(s.ticks_per_byte(65_537), 1.5);
        assert_eq!(s.ticks_per_byte(1 << 30), 1.5); // beyond last bound
    }

    #[test]
    fn zero_jitter_is_bit_deterministic() {
        let s = VirtualSchedule::flat(1e9, 0.75);
        let a = virtual_execute(&s, 4096, 1 << 20, 7, 3, 42);
        let b = virtual_execute(&s, 4096, 1 << 20, 7, 3, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn jitter_is_keyed_not_sequential() {
        // Same key → same draw; any coordinate change → (almost surely)
        // a different draw; all draws within the amplitude.
        let d = jitter_factor(0.05, 1, 2, 3);
        assert_eq!(d, jitter_factor(0.05, 1, 2, 3));
        assert!(d.abs() <= 0.05);
        assert_ne!(d, jitter_factor(0.05, 2, 2, 3));
        assert_ne!(d, jitter_factor(0.05, 1, 3, 3));
        assert_ne!(d, jitter_factor(0.05, 1, 2, 4));
    }

    #[test]
    fn worker_scale_slows_selected_workers() {
        let mut s = VirtualSchedule::flat(1e9, 1.0);
        s.worker_scale = vec![1.0, 2.0];
        assert_eq!(virtual_execute(&s, 4096, 1000, 0, 0, 0), 1000);
        assert_eq!(virtual_execute(&s, 4096, 1000, 0, 1, 0), 2000);
        // Workers beyond the list run unscaled.
        assert_eq!(virtual_execute(&s, 4096, 1000, 0, 2, 0), 1000);
    }

    #[test]
    fn from_bandwidths_round_trips_the_oracle() {
        let s = VirtualSchedule::from_bandwidths(1e12, &[(65_536, 158.976), (8 << 20, 58.0)])
            .unwrap();
        assert!((s.bandwidth_gbps(4096) - 158.976).abs() / 158.976 < 1e-12);
        assert!((s.bandwidth_gbps(1 << 24) - 58.0).abs() / 58.0 < 1e-12);
    }

    #[test]
    fn increasing_bandwidth_schedules_are_rejected() {
        // Larger working sets may not get cheaper per byte.
        let err = VirtualSchedule::from_bandwidths(1e9, &[(65_536, 50.0), (1 << 20, 100.0)]);
        assert!(matches!(err, Err(ScheduleError::DecreasingCost { .. })));
    }

    #[test]
    fn unordered_plateaus_are_rejected() {
        let s = VirtualSchedule {
            plateaus: vec![
                Plateau { max_working_set_bytes: 1 << 20, ticks_per_byte: 1.0 },
                Plateau { max_working_set_bytes: 65_536, ticks_per_byte: 2.0 },
            ],
            ..VirtualSchedule::flat(1e9, 1.0)
        };
        assert!(matches!(s.validate(), Err(ScheduleError::UnorderedPlateaus { .. })));
    }

    #[test]
    fn file_format_round_trips() {
        let mut s = VirtualSchedule::from_bandwidths(
            1e12,
            &[(65_536, 158.976), (8 << 20, 58.0), (1 << 30, 37.833)],
        )
        .unwrap();
        s.per_worker_jitter = 0.01;
        s.read_overhead_ticks = 8;
        s.worker_scale = vec![1.0, 0.5];
        s.vector_bytes = Some(64);
        let text = s.to_file_format();
        let back = VirtualSchedule::parse(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn missing_frequency_is_a_hard_error() {
        let err = VirtualSchedule::parse("vplat.plateau.0.max_bytes = 100\nvplat.plateau.0.ticks_per_byte = 1\n");
        assert!(matches!(err, Err(ScheduleError::MissingKey(_))));
    }

    #[test]
    fn four_cursor_trace_interleaves_then_covers() {
        // 4-register manual addressing: cursors at 0/64/128/192 advancing by
        // 256 — dense coverage in issue order despite the interleave.
        let md = metadata_for(IsaExtension::Neon, AddressingMode::ManualIncrement, 4);
        let trace = address_trace(&md, 1024, 1).unwrap();
        let offsets: Vec<u64> = trace.iter().map(|a| a.offset).collect();
        assert_eq!(offsets[..4], [0, 64, 128, 192]);
        assert_eq!(offsets[4..8], [256, 320, 384, 448]);
        assert_eq!(trace.len(), 16);
        assert!(trace.iter().all(|a| a.length == 64));
    }

    #[test]
    fn single_cursor_trace_is_sequential() {
        let md = metadata_for(IsaExtension::Neon, AddressingMode::PostIncrement, 4);
        let trace = address_trace(&md, 512, 1).unwrap();
        let offsets: Vec<u64> = trace.iter().map(|a| a.offset).collect();
        assert_eq!(offsets, vec![0, 64, 128, 192, 256, 320, 384, 448]);
    }

    #[test]
    fn trace_covers_window_exactly_once_per_pass() {
        for regs in [1u8, 2, 4] {
            for (ext, addr) in [
                (IsaExtension::Neon, AddressingMode::ManualIncrement),
                (IsaExtension::Neon, AddressingMode::PostIncrement),
                (IsaExtension::Sve, AddressingMode::Offset),
                (IsaExtension::ScalarPortable, AddressingMode::ManualIncrement),
            ] {
                if ext == IsaExtension::ScalarPortable && regs != 1 {
                    continue;
                }
                let md = metadata_for(ext, addr, regs);
                let window = u64::from(md.granule_bytes) * 9;
                let passes = 3;
                let trace = address_trace(&md, window, passes).unwrap();
                // Total traffic matches the metadata identity…
                let total: u64 = trace.iter().map(|a| u64::from(a.length)).sum();
                assert_eq!(total, window * u64::from(passes));
                // …and each pass tiles [0, window) without gaps or overlap.
                let per_pass = trace.len() / passes as usize;
                let load_bytes = u64::from(md.bytes_per_iteration / md.loads_per_iteration);
                for pass in trace.chunks(per_pass) {
                    let mut seen: Vec<u64> = pass.iter().map(|a| a.offset).collect();
                    seen.sort_unstable();
                    let mut expect = 0;
                    for o in seen {
                        assert_eq!(o, expect);
                        expect += load_bytes;
                    }
                    assert_eq!(expect, window);
                }
            }
        }
    }

    #[test]
    fn trace_rejects_misaligned_windows() {
        let md = metadata_for(IsaExtension::Neon, AddressingMode::ManualIncrement, 4);
        assert!(matches!(
            address_trace(&md, 100, 1),
            Err(KernelError::WindowGeometry { .. })
        ));
    }
}
