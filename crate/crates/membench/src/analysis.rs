//! Turns raw samples into reported quantities: decimal GB/s, bytes per
//! cycle against the nominal clock, cumulative means, group-of-four
//! aggregates, efficiency against documented peaks, and cache-boundary
//! (knee) detection on sweep curves.
//!
//! Everything here is a pure function over immutable inputs. Bandwidth is
//! decimal (10⁹ bytes per second) throughout; bytes/cycle always uses the
//! machine's nominal frequency, never a measured one, so the two columns
//! stay mutually consistent: GB/s × 10⁹ / f = B/cycle.

use serde::Serialize;
use thiserror::Error;

use crate::timer::TimerCalibration;
use crate::topology::{CacheScope, MachineSpec};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("elapsed tick count is zero")]
    ZeroElapsed,
    #[error("nominal frequency unknown; bytes/cycle unavailable")]
    MissingFrequency,
    #[error("empty input series")]
    EmptyInput,
    #[error("knee detection needs at least {need} points, got {have}")]
    InsufficientPoints { have: usize, need: usize },
    #[error("per-level series do not align: expected level `{expected}`, found `{found}`")]
    LevelMismatch { expected: String, found: String },
    #[error("peak bandwidth must be > 0, got {0}")]
    BadPeak(f64),
}

// ---------------------------------------------------------------------------
// Unit conversions
// ---------------------------------------------------------------------------

/// Decimal gigabytes per second: bytes / seconds / 10⁹.
pub fn bandwidth_gbps(
    bytes: u64,
    elapsed_ticks: u64,
    cal: &TimerCalibration,
) -> Result<f64, AnalysisError> {
    if elapsed_ticks == 0 {
        return Err(AnalysisError::ZeroElapsed);
    }
    Ok(bytes as f64 * cal.tick_frequency_hz / (elapsed_ticks as f64 * 1e9))
}

/// Bytes moved per cycle of the *nominal* clock.
pub fn bytes_per_cycle(
    bytes: u64,
    elapsed_ticks: u64,
    cal: &TimerCalibration,
    nominal_frequency_hz: Option<u64>,
) -> Result<f64, AnalysisError> {
    if elapsed_ticks == 0 {
        return Err(AnalysisError::ZeroElapsed);
    }
    let freq = nominal_frequency_hz.ok_or(AnalysisError::MissingFrequency)?;
    Ok(bytes as f64 * cal.tick_frequency_hz / (elapsed_ticks as f64 * freq as f64))
}

/// Projection between the two reported units, for values already in GB/s.
pub fn gbps_to_bytes_per_cycle(gbps: f64, nominal_frequency_hz: u64) -> f64 {
    gbps * 1e9 / nominal_frequency_hz as f64
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Element k is the mean of samples[0..=k]; the last element is therefore
/// the plain arithmetic mean.
pub fn cumulative_mean(samples: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut sum = 0.0;
    for (k, s) in samples.iter().enumerate() {
        sum += s;
        out.push(sum / (k + 1) as f64);
    }
    Ok(out)
}

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Population standard deviation (÷N).
pub fn population_stddev(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let m = mean(samples);
    (samples.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / samples.len() as f64).sqrt()
}

/// How many trailing repetitions the reported stddev is computed over. The
/// mean uses every repetition; the spread estimate discounts warm-up drift
/// by looking only at the stabilized tail.
pub const STDDEV_STABILIZATION_WINDOW: usize = 50;

/// Reported spread for a repetition series: population stddev over the last
/// `min(STDDEV_STABILIZATION_WINDOW, len)` samples.
pub fn stabilized_stddev(samples: &[f64]) -> f64 {
    let window = samples.len().min(STDDEV_STABILIZATION_WINDOW);
    population_stddev(&samples[samples.len() - window..])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadGroup {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadSummary {
    pub groups: Vec<QuadGroup>,
    /// Points dropped from a trailing partial group (0 or 1–3).
    pub dropped_tail: usize,
}

/// Mean and population stddev over non-overlapping groups of four
/// consecutive values; a trailing partial group is dropped, not padded.
pub fn aggregate_quad(series: &[f64]) -> QuadSummary {
    let full = series.len() / 4 * 4;
    let groups = series[..full]
        .chunks_exact(4)
        .map(|g| QuadGroup { mean: mean(g), stddev: population_stddev(g) })
        .collect();
    QuadSummary { groups, dropped_tail: series.len() - full }
}

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

/// Values above this are considered sanity violations rather than mere
/// above-peak measurements (which happen, e.g. timer granularity at tiny
/// sizes) and are flagged separately.
pub const EFFICIENCY_SANITY_LIMIT: f64 = 1.5;

/// measured / peak. Values above 1 are legal output (flagged by callers,
/// never clamped); a non-positive peak is a caller error.
pub fn efficiency(measured_gbps: f64, peak_gbps: f64) -> Result<f64, AnalysisError> {
    if !(peak_gbps > 0.0) {
        return Err(AnalysisError::BadPeak(peak_gbps));
    }
    Ok(measured_gbps / peak_gbps)
}

/// Per-level multicore-vs-single-core ratios. Inputs are (level, measured)
/// pairs and must list the same levels in the same order.
pub fn scaling_factor(
    multi: &[(String, f64)],
    single: &[(String, f64)],
) -> Result<Vec<(String, f64)>, AnalysisError> {
    if multi.len() != single.len() {
        return Err(AnalysisError::LevelMismatch {
            expected: format!("{} levels", single.len()),
            found: format!("{} levels", multi.len()),
        });
    }
    multi
        .iter()
        .zip(single)
        .map(|((ml, mv), (sl, sv))| {
            if ml != sl {
                return Err(AnalysisError::LevelMismatch {
                    expected: sl.clone(),
                    found: ml.clone(),
                });
            }
            Ok((ml.clone(), mv / sv))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Level assignment
// ---------------------------------------------------------------------------

/// One stretch of working-set sizes attributed to a memory level, under a
/// given core count. `upper_bytes` is inclusive; bands are consulted in
/// order and the final DRAM band is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelBand {
    pub name: String,
    pub upper_bytes: u64,
    /// True when concurrent per-core footprints exhaust this level before
    /// it can be told apart from the previous one (its size range is
    /// empty), like a small shared L3 under many cores.
    pub indistinct: bool,
    /// Peak for the whole run (per-core peak × cores, or per-socket DRAM
    /// peak × sockets in use); None when undocumented.
    pub peak_gbps: Option<f64>,
}

/// Splits the working-set axis into per-level bands for `core_count`
/// concurrent workers, each streaming its own private buffer:
/// - per-core caches hold a full private working set each;
/// - group/shared caches are divided among the cores that share them,
///   so their upper bound shrinks as cores are added;
/// - a level whose divided share no longer exceeds the previous level's
///   bound is flagged indistinct (it cannot appear on the sweep curve).
pub fn level_bands(spec: &MachineSpec, core_count: usize) -> Vec<LevelBand> {
    let cores = core_count.max(1) as u64;
    let mut bands = Vec::new();
    let mut previous_upper = 0u64;
    for level in &spec.cache_levels {
        let sharers = match level.scope {
            CacheScope::PerCore => 1,
            CacheScope::PerGroup => {
                cores.min(u64::from(level.group_size_cores.unwrap_or(1)).max(1))
            }
            CacheScope::Shared => cores.min(spec.cores_per_socket() as u64),
        };
        let visible = level.capacity_bytes / sharers;
        let indistinct = visible <= previous_upper;
        bands.push(LevelBand {
            name: level.name.clone(),
            upper_bytes: visible.max(previous_upper),
            indistinct,
            peak_gbps: level.peak_gbps_per_core.map(|p| p * core_count as f64),
        });
        previous_upper = previous_upper.max(visible);
    }
    let sockets_in_use = core_count
        .div_ceil(spec.cores_per_socket())
        .clamp(1, spec.sockets.max(1) as usize);
    bands.push(LevelBand {
        name: "DRAM".into(),
        upper_bytes: u64::MAX,
        indistinct: false,
        peak_gbps: spec.dram_peak_gbps_per_socket.map(|p| p * sockets_in_use as f64),
    });
    bands
}

/// The level a per-core working set of `size` bytes lands in.
pub fn level_annotation(bands: &[LevelBand], size: u64) -> &str {
    for band in bands {
        if !band.indistinct && size <= band.upper_bytes {
            return &band.name;
        }
    }
    "DRAM"
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelEfficiency {
    pub level: String,
    /// Mean measured bandwidth over sizes in this band; None when the sweep
    /// had no points here or the band is indistinct.
    pub measured_gbps: Option<f64>,
    pub peak_gbps: Option<f64>,
    pub efficiency_fraction: Option<f64>,
    /// Above documented peak — reported as-is, flagged here.
    pub exceeds_peak: bool,
    /// Outside (0, EFFICIENCY_SANITY_LIMIT): likely a unit or spec error.
    pub outside_sanity_band: bool,
    pub indistinct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub levels: Vec<LevelEfficiency>,
}

/// Folds a measured (size, GB/s) curve into per-level summaries against the
/// machine's documented peaks.
pub fn efficiency_report(series: &[(u64, f64)], bands: &[LevelBand]) -> EfficiencyReport {
    let mut levels = Vec::new();
    let mut lower = 0u64;
    for band in bands {
        if band.indistinct {
            levels.push(LevelEfficiency {
                level: band.name.clone(),
                measured_gbps: None,
                peak_gbps: band.peak_gbps,
                efficiency_fraction: None,
                exceeds_peak: false,
                outside_sanity_band: false,
                indistinct: true,
            });
            continue;
        }
        let in_band: Vec<f64> = series
            .iter()
            .filter(|(size, _)| *size > lower && *size <= band.upper_bytes)
            .map(|(_, gbps)| *gbps)
            .collect();
        lower = band.upper_bytes;
        let measured = (!in_band.is_empty()).then(|| mean(&in_band));
        let fraction = match (measured, band.peak_gbps) {
            (Some(m), Some(p)) if p > 0.0 => Some(m / p),
            _ => None,
        };
        levels.push(LevelEfficiency {
            level: band.name.clone(),
            measured_gbps: measured,
            peak_gbps: band.peak_gbps,
            efficiency_fraction: fraction,
            exceeds_peak: fraction.is_some_and(|f| f > 1.0),
            outside_sanity_band: fraction.is_some_and(|f| f <= 0.0 || f >= EFFICIENCY_SANITY_LIMIT),
            indistinct: false,
        });
    }
    EfficiencyReport { levels }
}

// ---------------------------------------------------------------------------
// Knee detection
// ---------------------------------------------------------------------------

pub const KNEE_WINDOW: usize = 3;
pub const KNEE_RATIO: f64 = 1.3;
pub const KNEE_MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KneeConfidence {
    Clear,
    /// Bandwidth *rose* with size — inverted for a load sweep, reported but
    /// suspect.
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KneeEstimate {
    /// Last size still on the faster plateau.
    pub boundary_bytes: u64,
    pub upstream_level_gbps: f64,
    pub downstream_level_gbps: f64,
    pub confidence: KneeConfidence,
    /// Documented capacity closest (log-scale) to the boundary, when a
    /// machine spec was supplied.
    pub nearest_capacity: Option<(String, u64)>,
}

/// Finds working-set sizes where the curve steps down between cache levels:
/// positions where the mean over the preceding `KNEE_WINDOW` points exceeds
/// the mean over the following window by ≥ `KNEE_RATIO`. Runs of adjacent
/// triggers collapse to the strongest one. An upward step of the same
/// magnitude is reported too, flagged weak.
pub fn detect_knees(
    series: &[(u64, f64)],
    spec: Option<&MachineSpec>,
) -> Result<Vec<KneeEstimate>, AnalysisError> {
    if series.len() < KNEE_MIN_POINTS {
        return Err(AnalysisError::InsufficientPoints {
            have: series.len(),
            need: KNEE_MIN_POINTS,
        });
    }
    struct Candidate {
        split: usize,
        strength: f64,
        up: f64,
        down: f64,
        confidence: KneeConfidence,
    }
    let values: Vec<f64> = series.iter().map(|(_, v)| *v).collect();
    let mut candidates: Vec<Candidate> = Vec::new();
    for split in KNEE_WINDOW..=values.len() - KNEE_WINDOW {
        let up = mean(&values[split - KNEE_WINDOW..split]);
        let down = mean(&values[split..split + KNEE_WINDOW]);
        let (strength, confidence) = if up >= down * KNEE_RATIO {
            (up / down, KneeConfidence::Clear)
        } else if down >= up * KNEE_RATIO {
            (down / up, KneeConfidence::Weak)
        } else {
            continue;
        };
        candidates.push(Candidate { split, strength, up, down, confidence });
    }

    // A single physical knee fires at several adjacent splits as the windows
    // slide across it; the strongest split is the one whose windows sit
    // fully on either plateau.
    let mut knees = Vec::new();
    let mut i = 0;
    while i < candidates.len() {
        let mut best = i;
        let mut j = i + 1;
        while j < candidates.len() && candidates[j].split == candidates[j - 1].split + 1 {
            if candidates[j].strength > candidates[best].strength {
                best = j;
            }
            j += 1;
        }
        let c = &candidates[best];
        let boundary_bytes = series[c.split - 1].0;
        knees.push(KneeEstimate {
            boundary_bytes,
            upstream_level_gbps: c.up,
            downstream_level_gbps: c.down,
            confidence: c.confidence,
            nearest_capacity: spec.and_then(|s| nearest_capacity(s, boundary_bytes)),
        });
        i = j;
    }
    Ok(knees)
}

fn nearest_capacity(spec: &MachineSpec, boundary: u64) -> Option<(String, u64)> {
    spec.cache_levels
        .iter()
        .map(|l| {
            let distance = (boundary as f64 / l.capacity_bytes as f64).ln().abs();
            (distance, l)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l)| (l.name.clone(), l.capacity_bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timer::{TimerCalibration, TimerSource};
    use crate::topology::{builtin, KIB, MIB};
    use approx::assert_relative_eq;

    fn cal(hz: f64) -> TimerCalibration {
        TimerCalibration {
            source: TimerSource::Virtual,
            tick_frequency_hz: hz,
            read_overhead_ticks: 0.0,
        }
    }

    #[test]
    fn bandwidth_anchors() {
        // 10⁹ bytes in one second of ticks → 1 GB/s.
        assert_eq!(bandwidth_gbps(1_000_000_000, 1_000_000_000, &cal(1e9)).unwrap(), 1.0);
        // A full cache line of 128 bytes every 1.8 GHz cycle → 230.4 GB/s.
        let bytes = 128u64 * 1_800_000_000;
        assert_relative_eq!(
            bandwidth_gbps(bytes, 1_800_000_000, &cal(1.8e9)).unwrap(),
            230.4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn bytes_per_cycle_anchors() {
        let bytes = 128u64 * 1_800_000_000;
        let v = bytes_per_cycle(bytes, 1_800_000_000, &cal(1.8e9), Some(1_800_000_000)).unwrap();
        assert_relative_eq!(v, 128.0, max_relative = 1e-12);
        // 96 GB/s at 3 GHz → 32 B/cycle.
        let v = bytes_per_cycle(96_000_000_000, 1_000_000_000, &cal(1e9), Some(3_000_000_000));
        assert_relative_eq!(v.unwrap(), 32.0, max_relative = 1e-12);
        // 0 bytes → 0.
        assert_eq!(bytes_per_cycle(0, 100, &cal(1e9), Some(1_000_000_000)).unwrap(), 0.0);
    }

    #[test]
    fn unit_coherence_between_the_two_columns() {
        let c = cal(25e6);
        for (bytes, ticks, freq) in [(123_456_789u64, 777u64, 2_345_678_901u64)] {
            let gbps = bandwidth_gbps(bytes, ticks, &c).unwrap();
            let bpc = bytes_per_cycle(bytes, ticks, &c, Some(freq)).unwrap();
            assert_relative_eq!(gbps * 1e9 / freq as f64, bpc, max_relative = 1e-12);
        }
    }

    #[test]
    fn conversion_errors() {
        assert_eq!(bandwidth_gbps(10, 0, &cal(1e9)), Err(AnalysisError::ZeroElapsed));
        assert_eq!(
            bytes_per_cycle(10, 5, &cal(1e9), None),
            Err(AnalysisError::MissingFrequency)
        );
    }

    #[test]
    fn cumulative_mean_matches_hand_arithmetic() {
        assert_eq!(cumulative_mean(&[4.0]).unwrap(), vec![4.0]);
        assert_eq!(cumulative_mean(&[2.0, 4.0, 6.0]).unwrap(), vec![2.0, 3.0, 4.0]);
        assert_eq!(cumulative_mean(&[]), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn cumulative_mean_ends_at_the_arithmetic_mean() {
        let xs = [3.5, -1.25, 8.0, 0.0, 2.75, 9.5];
        let cm = cumulative_mean(&xs).unwrap();
        assert_relative_eq!(*cm.last().unwrap(), mean(&xs), max_relative = 1e-15);
    }

    #[test]
    fn quad_aggregation() {
        let s = aggregate_quad(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s.groups, vec![QuadGroup { mean: 1.0, stddev: 0.0 }]);
        assert_eq!(s.dropped_tail, 0);

        let s = aggregate_quad(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.groups[0].mean, 2.5);
        assert_relative_eq!(s.groups[0].stddev, 1.25f64.sqrt(), max_relative = 1e-15);

        // Six points: one full group, two dropped.
        let s = aggregate_quad(&[1.0, 1.0, 1.0, 1.0, 9.0, 9.0]);
        assert_eq!(s.groups.len(), 1);
        assert_eq!(s.dropped_tail, 2);
    }

    #[test]
    fn stddev_estimator_uses_the_stabilized_tail() {
        assert_eq!(stabilized_stddev(&[5.0; 100]), 0.0);
        // Noisy warm-up, then 50+ identical samples: spread reports 0 while
        // the mean still sees everything.
        let mut xs = vec![100.0, 0.0, 55.0, 7.0];
        xs.extend(std::iter::repeat(42.0).take(60));
        assert_eq!(stabilized_stddev(&xs), 0.0);
        assert!(mean(&xs) != 42.0);
    }

    #[test]
    fn efficiency_basics() {
        assert_relative_eq!(efficiency(0.69 * 230.4, 230.4).unwrap(), 0.69, max_relative = 1e-12);
        assert_eq!(efficiency(96.0, 96.0).unwrap(), 1.0);
        // Above peak comes back unclamped.
        assert_eq!(efficiency(120.0, 100.0).unwrap(), 1.2);
        assert!(efficiency(1.0, 0.0).is_err());
        // Scale equivariance.
        let k = 7.3;
        assert_relative_eq!(
            efficiency(k * 3.0, k * 9.0).unwrap(),
            efficiency(3.0, 9.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scaling_factor_per_level() {
        let single = vec![("L1d".to_string(), 10.0), ("DRAM".to_string(), 4.0)];
        let multi = vec![("L1d".to_string(), 480.0), ("DRAM".to_string(), 16.0)];
        let s = scaling_factor(&multi, &single).unwrap();
        assert_eq!(s[0].1, 48.0);
        assert_eq!(s[1].1, 4.0);

        let wrong = vec![("L2".to_string(), 1.0), ("DRAM".to_string(), 1.0)];
        assert!(matches!(
            scaling_factor(&wrong, &single),
            Err(AnalysisError::LevelMismatch { .. })
        ));
    }

    fn synthetic_series(plateaus: &[(u64, f64)], points_per_plateau: usize) -> Vec<(u64, f64)> {
        // points_per_plateau log-spaced sizes per plateau, ending at the bound.
        let mut series = Vec::new();
        let mut lower = 1024u64;
        for &(upper, gbps) in plateaus {
            for k in 1..=points_per_plateau {
                let size = if k == points_per_plateau {
                    upper // hit each plateau bound exactly
                } else {
                    let f = k as f64 / points_per_plateau as f64;
                    (lower as f64 * (upper as f64 / lower as f64).powf(f)) as u64
                };
                series.push((size, gbps));
            }
            lower = upper;
        }
        series
    }

    #[test]
    fn flat_series_has_no_knees() {
        let series: Vec<(u64, f64)> = (0..12).map(|i| (1024 << i, 50.0)).collect();
        assert!(detect_knees(&series, None).unwrap().is_empty());
    }

    #[test]
    fn two_plateau_knee_lands_on_the_boundary() {
        let series = synthetic_series(&[(64 * KIB, 100.0), (64 * MIB, 50.0)], 6);
        let knees = detect_knees(&series, None).unwrap();
        assert_eq!(knees.len(), 1);
        let k = &knees[0];
        assert_eq!(k.boundary_bytes, 64 * KIB);
        assert_eq!(k.confidence, KneeConfidence::Clear);
        assert_relative_eq!(k.upstream_level_gbps, 100.0, max_relative = 1e-12);
        assert_relative_eq!(k.downstream_level_gbps, 50.0, max_relative = 1e-12);
    }

    #[test]
    fn three_plateau_curve_yields_two_annotated_knees() {
        let spec = builtin("a64fx").unwrap();
        let series = synthetic_series(
            &[(64 * KIB, 158.976), (8 * MIB, 58.0), (1 << 30, 37.8)],
            5,
        );
        let knees = detect_knees(&series, Some(&spec)).unwrap();
        assert_eq!(knees.len(), 2);
        assert_eq!(knees[0].boundary_bytes, 64 * KIB);
        assert_eq!(knees[0].nearest_capacity, Some(("L1d".to_string(), 64 * KIB)));
        assert_eq!(knees[1].boundary_bytes, 8 * MIB);
        assert_eq!(knees[1].nearest_capacity, Some(("L2".to_string(), 8 * MIB)));
    }

    #[test]
    fn rising_step_is_reported_weak() {
        let series = synthetic_series(&[(64 * KIB, 50.0), (64 * MIB, 100.0)], 6);
        let knees = detect_knees(&series, None).unwrap();
        assert_eq!(knees.len(), 1);
        assert_eq!(knees[0].confidence, KneeConfidence::Weak);
    }

    #[test]
    fn small_steps_below_the_ratio_are_ignored() {
        let series = synthetic_series(&[(64 * KIB, 100.0), (64 * MIB, 90.0)], 6);
        assert!(detect_knees(&series, None).unwrap().is_empty());
    }

    #[test]
    fn short_series_is_rejected() {
        let series: Vec<(u64, f64)> = (0..7).map(|i| (1024 << i, 50.0)).collect();
        assert_eq!(
            detect_knees(&series, None),
            Err(AnalysisError::InsufficientPoints { have: 7, need: 8 })
        );
    }

    #[test]
    fn single_core_bands_follow_raw_capacities() {
        let spec = builtin("a64fx").unwrap();
        let bands = level_bands(&spec, 1);
        assert_eq!(bands.len(), 3); // L1d, L2, DRAM
        assert_eq!(bands[0].upper_bytes, 64 * KIB);
        assert_eq!(bands[1].upper_bytes, 8 * MIB);
        assert_eq!(bands[2].upper_bytes, u64::MAX);
        assert!(bands.iter().all(|b| !b.indistinct));
        // Peaks: per-core × 1.
        assert_eq!(bands[0].peak_gbps, Some(230.4));
        assert_eq!(bands[2].peak_gbps, Some(921.6));
    }

    #[test]
    fn group_caches_divide_among_active_sharers() {
        let spec = builtin("a64fx").unwrap();
        let bands = level_bands(&spec, 48);
        // Twelve cores share each 8 MiB group cache.
        assert_eq!(bands[1].upper_bytes, 8 * MIB / 12);
        assert_eq!(bands[0].peak_gbps, Some(230.4 * 48.0));
    }

    #[test]
    fn small_shared_l3_under_many_cores_goes_indistinct() {
        // 80 private 1 MiB L2 footprints exceed the 32 MiB shared L3:
        // its share per core (410 KiB) is inside L2, so the level vanishes
        // from the sweep axis.
        let spec = builtin("altra_q80_30").unwrap();
        let bands = level_bands(&spec, 80);
        let l3 = bands.iter().find(|b| b.name == "L3").unwrap();
        assert!(l3.indistinct);
        // …but with a single core it is a perfectly visible 32 MiB.
        let bands1 = level_bands(&spec, 1);
        let l3 = bands1.iter().find(|b| b.name == "L3").unwrap();
        assert!(!l3.indistinct);
        assert_eq!(l3.upper_bytes, 32 * MIB);
    }

    #[test]
    fn annotation_walks_bands_in_order() {
        let spec = builtin("a64fx").unwrap();
        let bands = level_bands(&spec, 1);
        assert_eq!(level_annotation(&bands, 16 * KIB), "L1d");
        assert_eq!(level_annotation(&bands, 64 * KIB), "L1d"); // inclusive bound
        assert_eq!(level_annotation(&bands, 65 * KIB), "L2");
        assert_eq!(level_annotation(&bands, 100 * MIB), "DRAM");
    }

    #[test]
    fn dram_peak_scales_with_sockets_in_use() {
        let spec = builtin("thunderx2_cn9975").unwrap();
        let one_socket = level_bands(&spec, 28);
        let both = level_bands(&spec, 56);
        assert_eq!(one_socket.last().unwrap().peak_gbps, Some(170.5));
        assert_eq!(both.last().unwrap().peak_gbps, Some(341.0));
    }

    #[test]
    fn efficiency_report_summarizes_bands() {
        let spec = builtin("a64fx").unwrap();
        let bands = level_bands(&spec, 1);
        let series = vec![
            (16 * KIB, 0.99 * 230.4),
            (32 * KIB, 0.99 * 230.4),
            (MIB, 100.0),
            (4 * MIB, 100.0),
            (256 * MIB, 800.0),
        ];
        let report = efficiency_report(&series, &bands);
        assert_eq!(report.levels.len(), 3);
        let l1 = &report.levels[0];
        assert_relative_eq!(l1.efficiency_fraction.unwrap(), 0.99, max_relative = 1e-12);
        assert!(!l1.exceeds_peak);
        let dram = &report.levels[2];
        assert!(dram.efficiency_fraction.unwrap() < 1.0);
    }

    #[test]
    fn above_peak_is_flagged_not_clamped() {
        let spec = builtin("a64fx").unwrap();
        let bands = level_bands(&spec, 1);
        let series = vec![(16 * KIB, 1.2 * 230.4)];
        let report = efficiency_report(&series, &bands);
        let l1 = &report.levels[0];
        assert_relative_eq!(l1.efficiency_fraction.unwrap(), 1.2, max_relative = 1e-12);
        assert!(l1.exceeds_peak);
        assert!(!l1.outside_sanity_band);
        // Far outside the sanity band → also flagged.
        let wild = efficiency_report(&[(16 * KIB, 2.0 * 230.4)], &bands);
        assert!(wild.levels[0].outside_sanity_band);
    }

    #[test]
    fn indistinct_levels_carry_no_numbers() {
        let spec = builtin("altra_q80_30").unwrap();
        let bands = level_bands(&spec, 80);
        let series = vec![(16 * KIB, 96.0 * 70.0)];
        let report = efficiency_report(&series, &bands);
        let l3 = report.levels.iter().find(|l| l.level == "L3").unwrap();
        assert!(l3.indistinct);
        assert_eq!(l3.measured_gbps, None);
        assert_eq!(l3.efficiency_fraction, None);
    }
}
