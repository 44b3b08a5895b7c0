//! Measurement orchestration: sweeps a kernel across working-set sizes,
//! handles repetitions and warm-up, coordinates multicore workers, and
//! reduces raw ticks to per-size statistics.
//!
//! The central rules, kept in one place so they cannot drift:
//!
//! - Total traffic per repetition is fixed, not the pass count: a sample
//!   runs `ceil(min_bytes_per_sample / size)` passes over its window, so
//!   small working sets are not dominated by timer granularity.
//! - One untimed warm-up pass per size per worker, before repetition 0.
//! - Every worker owns a private buffer, allocated once per sweep at the
//!   largest configured size; smaller working sets traverse its prefix.
//! - Multicore repetitions start behind a barrier and are reduced by the
//!   slowest-thread rule: total bytes over the maximum per-worker elapsed.
//! - Timestamps wrap the whole measured region (all passes), never
//!   individual passes.

use std::sync::Barrier;

use serde::Serialize;
use thiserror::Error;

use crate::affinity;
use crate::analysis::{self, AnalysisError};
use crate::kernels::{
    execute_kernel, resolve_kernel, resolve_kernel_simulated, IsaExtension, KernelError,
    KernelHandle, KernelMetadata, KernelSpec, DEFAULT_VIRTUAL_VECTOR_BYTES,
};
use crate::memory::{
    allocate, initialize_denormal_safe, pattern_value_admissible, BufferRequest, HugepagePolicy,
    MeasurementBuffer, MemoryError, DEFAULT_PATTERN_X, MIN_ALIGNMENT,
};
use crate::timer::{TimerBackend, TimerCalibration, TimerError, TimerSource};
use crate::topology::{MachineSpec, Provenance};
use crate::virtual_platform::{virtual_execute, VirtualSchedule};

pub const DEFAULT_REPETITIONS: u32 = 100;
/// Traffic per repetition: passes are chosen so each timed region moves at
/// least this much data.
pub const DEFAULT_MIN_BYTES_PER_SAMPLE: u64 = 256 * 1024 * 1024;
pub const DEFAULT_GRID_FLOOR_BYTES: u64 = 8 * 1024;
pub const DEFAULT_GRID_CEILING_BYTES: u64 = 1 << 30;
/// Grid density: 4 points per size octave.
pub const GRID_POINTS_PER_OCTAVE: u32 = 4;
/// Front-end width assumed when charging loop-control instructions to
/// cycles; all three documented machines decode 4 instructions per cycle.
pub const ASSUMED_ISSUE_WIDTH: u32 = 4;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Timer(#[from] TimerError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("kernel `{0}` only exists on the virtual platform")]
    VirtualKernelOnRealPlatform(String),
    #[error("loop-overhead subtraction needs a nominal frequency in the machine spec")]
    OverheadNeedsFrequency,
}

/// Everything a sweep needs to know. Construct with [`SweepConfig::new`]
/// and adjust fields; `new` fills the documented defaults (single core 0,
/// 100 repetitions, 256 MiB per sample, transparent hugepages, pattern 4.0).
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kernel: KernelSpec,
    /// Strictly increasing working-set sizes, each a multiple of the
    /// kernel's granule and of the 32-byte pattern quadruple.
    pub sizes_bytes: Vec<u64>,
    pub repetitions: u32,
    pub min_bytes_per_sample: u64,
    /// Logical cores to run on; one worker and one private buffer each.
    pub cores: Vec<usize>,
    pub alignment_bytes: usize,
    pub hugepage_policy: HugepagePolicy,
    /// First-touch each worker's buffer on its core's NUMA node (real
    /// platform, multi-node machines only).
    pub numa_local_buffers: bool,
    pub subtract_loop_overhead: bool,
    pub pattern_x: f64,
    /// Seed for the virtual platform's jitter stream; inert on real runs.
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(kernel: KernelSpec) -> SweepConfig {
        SweepConfig {
            kernel,
            sizes_bytes: Vec::new(),
            repetitions: DEFAULT_REPETITIONS,
            min_bytes_per_sample: DEFAULT_MIN_BYTES_PER_SAMPLE,
            cores: vec![0],
            alignment_bytes: 4096,
            hugepage_policy: HugepagePolicy::Transparent,
            numa_local_buffers: true,
            subtract_loop_overhead: false,
            pattern_x: DEFAULT_PATTERN_X,
            seed: 0,
        }
    }

    pub fn passes_for(&self, size: u64) -> u32 {
        self.min_bytes_per_sample.div_ceil(size.max(1)).max(1) as u32
    }

    fn validate(&self, metadata: &KernelMetadata) -> Result<(), EngineError> {
        let err = |msg: String| Err(EngineError::Config(msg));
        if self.sizes_bytes.is_empty() {
            return err("no working-set sizes configured".into());
        }
        if !self.sizes_bytes.windows(2).all(|w| w[0] < w[1]) {
            return err("working-set sizes must be strictly increasing".into());
        }
        let granule = u64::from(metadata.granule_bytes);
        for &size in &self.sizes_bytes {
            if size == 0 || size % granule != 0 || size % 32 != 0 {
                return err(format!(
                    "size {size} is not a positive multiple of the kernel granule \
                     ({granule} bytes) and the 32-byte pattern quadruple"
                ));
            }
        }
        if self.repetitions == 0 {
            return err("repetitions must be at least 1".into());
        }
        if self.min_bytes_per_sample == 0 {
            return err("min_bytes_per_sample must be positive".into());
        }
        if self.cores.is_empty() {
            return err("at least one core required".into());
        }
        let mut seen = self.cores.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.cores.len() {
            return err("core list contains duplicates".into());
        }
        if !self.alignment_bytes.is_power_of_two() || self.alignment_bytes < MIN_ALIGNMENT {
            return err(format!(
                "alignment {} must be a power of two ≥ {MIN_ALIGNMENT}",
                self.alignment_bytes
            ));
        }
        if !pattern_value_admissible(self.pattern_x) {
            return err(format!(
                "pattern value {} is outside the denormal-safe window",
                self.pattern_x
            ));
        }
        Ok(())
    }
}

/// One raw measured repetition, already reduced across workers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub size_bytes: u64,
    pub core_count: u32,
    pub repetition_index: u32,
    /// Slowest worker's ticks for this repetition.
    pub elapsed_ticks: u64,
    /// Sum of bytes read by all workers.
    pub bytes_read: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub size_bytes: u64,
    /// Mean over all repetitions (the final cumulative mean).
    pub mean_gbps: f64,
    /// Population stddev over the stabilized tail of repetitions.
    pub stddev_gbps: f64,
    /// Against the nominal frequency; absent when the machine spec has none.
    pub bytes_per_cycle: Option<f64>,
    pub sample_count: u32,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesResult {
    pub kernel_id: String,
    pub vector_bytes: u32,
    pub timer_source: TimerSource,
    pub calibration: TimerCalibration,
    pub machine_name: String,
    pub machine_provenance: Provenance,
    pub core_count: u32,
    pub repetitions: u32,
    pub min_bytes_per_sample: u64,
    pub pattern_x: f64,
    pub subtract_loop_overhead: bool,
    pub seed: u64,
    /// False for scalar-portable and virtual runs: those exist to keep the
    /// pipeline testable everywhere, not to characterize hardware.
    pub authoritative: bool,
    pub sizes: Vec<SizeSummary>,
    /// Run-level degradations (allocation fallbacks, pinning failures, …).
    pub warnings: Vec<String>,
}

/// Where measurements come from.
#[derive(Debug, Clone)]
pub enum Platform {
    Real { backend: TimerBackend },
    Virtual { schedule: VirtualSchedule },
}

#[derive(Debug)]
pub struct Engine {
    platform: Platform,
    machine: MachineSpec,
}

/// (bytes, ticks) per worker → (Σ bytes, max ticks): the aggregate reported
/// for one multicore repetition. Bandwidth from these two numbers is the
/// slowest-thread bandwidth.
pub fn aggregate_worker_totals(per_worker: &[(u64, u64)]) -> (u64, u64) {
    let bytes = per_worker.iter().map(|(b, _)| b).sum();
    let ticks = per_worker.iter().map(|(_, t)| *t).max().unwrap_or(0);
    (bytes, ticks)
}

/// Ticks the loop-control instructions (compare + branch per trip) are
/// expected to cost across `iterations`, assuming the documented 4-wide
/// front end. Only ever *reported* or subtracted on explicit request.
pub fn loop_overhead_ticks(
    metadata: &KernelMetadata,
    iterations: u64,
    calibration: &TimerCalibration,
    nominal_frequency_hz: Option<u64>,
) -> Result<f64, EngineError> {
    if iterations == 0 {
        return Ok(0.0);
    }
    let freq = nominal_frequency_hz.ok_or(EngineError::OverheadNeedsFrequency)?;
    let cycles =
        metadata.loop_control_per_iteration * iterations as f64 / f64::from(ASSUMED_ISSUE_WIDTH);
    Ok(cycles / freq as f64 * calibration.tick_frequency_hz)
}

/// The default working-set grid: quarter-octave steps from 8 KiB up to the
/// larger of 4 × the machine's largest cache and 1 GiB, every size rounded
/// up to the kernel granule.
pub fn default_size_grid(machine: &MachineSpec, granule_bytes: u32) -> Vec<u64> {
    let ceiling = machine
        .largest_cache_bytes()
        .map(|c| 4 * c)
        .unwrap_or(0)
        .max(DEFAULT_GRID_CEILING_BYTES);
    let granule = u64::from(granule_bytes);
    let mut sizes = Vec::new();
    for k in 0u32.. {
        // Exact powers of two on octave boundaries; float steps between.
        let base = if k % GRID_POINTS_PER_OCTAVE == 0 {
            DEFAULT_GRID_FLOOR_BYTES << (k / GRID_POINTS_PER_OCTAVE)
        } else {
            let exponent = f64::from(k) / f64::from(GRID_POINTS_PER_OCTAVE);
            (DEFAULT_GRID_FLOOR_BYTES as f64 * exponent.exp2()).round() as u64
        };
        if base > ceiling {
            break;
        }
        let aligned = base.div_ceil(granule).max(1) * granule;
        if sizes.last() != Some(&aligned) {
            sizes.push(aligned);
        }
    }
    sizes
}

struct WorkerSlot {
    index: usize,
    core: usize,
    buffer: Option<MeasurementBuffer>,
}

struct WorkerRun {
    ticks_per_rep: Vec<u64>,
    bytes_per_rep: u64,
    warnings: Vec<String>,
}

impl Engine {
    pub fn real(backend: TimerBackend, machine: MachineSpec) -> Engine {
        Engine { platform: Platform::Real { backend }, machine }
    }

    pub fn virtual_platform(schedule: VirtualSchedule, machine: MachineSpec) -> Engine {
        Engine { platform: Platform::Virtual { schedule }, machine }
    }

    pub fn machine(&self) -> &MachineSpec {
        &self.machine
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self.platform, Platform::Virtual { .. })
    }

    /// Resolves the configured kernel the way this platform will run it.
    pub fn resolve(&self, spec: &KernelSpec) -> Result<KernelHandle, EngineError> {
        match &self.platform {
            Platform::Real { .. } => {
                if spec.isa_extension == IsaExtension::Virtual {
                    return Err(EngineError::VirtualKernelOnRealPlatform(spec.id()));
                }
                Ok(resolve_kernel(spec)?)
            }
            Platform::Virtual { schedule } => {
                let stand_in = schedule.vector_bytes.unwrap_or(DEFAULT_VIRTUAL_VECTOR_BYTES);
                Ok(resolve_kernel_simulated(spec, stand_in)?)
            }
        }
    }

    pub fn calibration(&self) -> Result<TimerCalibration, EngineError> {
        match &self.platform {
            Platform::Real { backend } => Ok(backend.calibrate()?),
            Platform::Virtual { schedule } => Ok(TimerCalibration {
                source: TimerSource::Virtual,
                tick_frequency_hz: schedule.tick_frequency_hz,
                read_overhead_ticks: schedule.read_overhead_ticks as f64,
            }),
        }
    }

    /// Raw samples for one size on a single worker (the first configured
    /// core).
    pub fn run_single(
        &self,
        config: &SweepConfig,
        size: u64,
    ) -> Result<Vec<SamplePoint>, EngineError> {
        let mut single = config.clone();
        single.cores.truncate(1);
        let (samples, _) = self.run_sizes(&single, &[size])?;
        Ok(samples.into_iter().next().expect("one size requested").1)
    }

    /// Raw aggregated samples for one size across all configured cores.
    pub fn run_multi(
        &self,
        config: &SweepConfig,
        size: u64,
    ) -> Result<Vec<SamplePoint>, EngineError> {
        let (samples, _) = self.run_sizes(config, &[size])?;
        Ok(samples.into_iter().next().expect("one size requested").1)
    }

    /// Full sweep over `config.sizes_bytes` with summary statistics.
    pub fn sweep(&self, config: &SweepConfig) -> Result<SeriesResult, EngineError> {
        let handle = self.resolve(&config.kernel)?;
        let calibration = self.calibration()?;
        let (per_size, run_warnings) = self.run_sizes(config, &config.sizes_bytes)?;
        let nominal = self.machine.nominal_frequency_hz;
        let mut sizes = Vec::with_capacity(per_size.len());
        for (size, samples) in per_size {
            let mut gbps = Vec::with_capacity(samples.len());
            let mut warnings: Vec<String> = Vec::new();
            for s in &samples {
                gbps.push(analysis::bandwidth_gbps(s.bytes_read, s.elapsed_ticks, &calibration)?);
                for w in &s.warnings {
                    if !warnings.contains(w) {
                        warnings.push(w.clone());
                    }
                }
            }
            let mean = analysis::mean(&gbps);
            sizes.push(SizeSummary {
                size_bytes: size,
                mean_gbps: mean,
                stddev_gbps: analysis::stabilized_stddev(&gbps),
                bytes_per_cycle: nominal.map(|f| analysis::gbps_to_bytes_per_cycle(mean, f)),
                sample_count: samples.len() as u32,
                warnings,
            });
        }
        let authoritative = !self.is_virtual()
            && config.kernel.isa_extension != IsaExtension::ScalarPortable;
        Ok(SeriesResult {
            kernel_id: handle.id(),
            vector_bytes: handle.metadata().vector_bytes,
            timer_source: calibration.source,
            calibration,
            machine_name: self.machine.name.clone(),
            machine_provenance: self.machine.provenance,
            core_count: config.cores.len() as u32,
            repetitions: config.repetitions,
            min_bytes_per_sample: config.min_bytes_per_sample,
            pattern_x: config.pattern_x,
            subtract_loop_overhead: config.subtract_loop_overhead,
            seed: config.seed,
            authoritative,
            sizes,
            warnings: run_warnings,
        })
    }

    /// Shared implementation: sets up workers once (buffers at the largest
    /// size), then walks the sizes.
    fn run_sizes(
        &self,
        config: &SweepConfig,
        sizes: &[u64],
    ) -> Result<(Vec<(u64, Vec<SamplePoint>)>, Vec<String>), EngineError> {
        let handle = self.resolve(&config.kernel)?;
        let mut scoped = config.clone();
        scoped.sizes_bytes = sizes.to_vec();
        scoped.validate(handle.metadata())?;
        let calibration = self.calibration()?;

        let max_size = *sizes.last().expect("validated non-empty");
        let mut run_warnings: Vec<String> = Vec::new();
        let mut slots = Vec::with_capacity(config.cores.len());
        for (index, &core) in config.cores.iter().enumerate() {
            let buffer = match &self.platform {
                Platform::Virtual { .. } => None,
                Platform::Real { .. } => {
                    let mut request = BufferRequest::new(max_size as usize);
                    request.alignment = config.alignment_bytes;
                    request.hugepage_policy = config.hugepage_policy;
                    if config.numa_local_buffers && self.machine.numa_nodes().len() > 1 {
                        request.numa_node = self.machine.numa_node_of(core as u32);
                    }
                    let mut buffer = allocate(&request)?;
                    initialize_denormal_safe(&mut buffer, config.pattern_x)?;
                    for w in buffer.warnings() {
                        let tagged = format!("core{core}:{w}");
                        if !run_warnings.contains(&tagged) {
                            run_warnings.push(tagged);
                        }
                    }
                    Some(buffer)
                }
            };
            slots.push(WorkerSlot { index, core, buffer });
        }

        let mut out = Vec::with_capacity(sizes.len());
        for &size in sizes {
            let samples = self.run_one_size(config, &handle, &calibration, &slots, size)?;
            out.push((size, samples));
        }
        Ok((out, run_warnings))
    }

    fn run_one_size(
        &self,
        config: &SweepConfig,
        handle: &KernelHandle,
        calibration: &TimerCalibration,
        slots: &[WorkerSlot],
        size: u64,
    ) -> Result<Vec<SamplePoint>, EngineError> {
        let passes = config.passes_for(size);
        let reps = config.repetitions;
        let barrier = Barrier::new(slots.len());

        let runs: Vec<Result<WorkerRun, KernelError>> = std::thread::scope(|scope| {
            let mut joins = Vec::with_capacity(slots.len());
            for slot in slots {
                let barrier = &barrier;
                let platform = &self.platform;
                joins.push(scope.spawn(move || {
                    worker_body(platform, handle, slot, config, size, passes, reps, barrier)
                }));
            }
            joins.into_iter().map(|j| j.join().expect("measurement worker panicked")).collect()
        });
        let runs: Vec<WorkerRun> = runs.into_iter().collect::<Result<_, _>>()?;

        // Optional static loop-overhead correction, identical for every
        // worker (same geometry, same passes).
        let overhead_ticks = if config.subtract_loop_overhead {
            let iterations = handle.metadata().iterations_for(size as usize) * u64::from(passes);
            match loop_overhead_ticks(
                handle.metadata(),
                iterations,
                calibration,
                self.machine.nominal_frequency_hz,
            ) {
                Ok(t) => Some(t.round() as u64),
                Err(EngineError::OverheadNeedsFrequency) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let overhead_unavailable = config.subtract_loop_overhead && overhead_ticks.is_none();

        let mut samples = Vec::with_capacity(reps as usize);
        for rep in 0..reps {
            let mut warnings: Vec<String> = Vec::new();
            let per_worker: Vec<(u64, u64)> = runs
                .iter()
                .map(|r| {
                    let mut ticks = r.ticks_per_rep[rep as usize];
                    if let Some(overhead) = overhead_ticks {
                        if overhead >= ticks {
                            push_unique(&mut warnings, "overhead_exceeds_elapsed");
                            ticks = 1;
                        } else {
                            ticks -= overhead;
                        }
                    }
                    (r.bytes_per_rep, ticks)
                })
                .collect();
            let (bytes, mut elapsed) = aggregate_worker_totals(&per_worker);
            if elapsed == 0 {
                push_unique(&mut warnings, "zero_elapsed_clamped");
                elapsed = 1;
            }
            if overhead_unavailable {
                push_unique(&mut warnings, "loop_overhead_unavailable");
            }
            for r in &runs {
                for w in &r.warnings {
                    push_unique(&mut warnings, w);
                }
            }
            samples.push(SamplePoint {
                size_bytes: size,
                core_count: slots.len() as u32,
                repetition_index: rep,
                elapsed_ticks: elapsed,
                bytes_read: bytes,
                warnings,
            });
        }
        Ok(samples)
    }
}

fn push_unique(list: &mut Vec<String>, value: &str) {
    if !list.iter().any(|w| w == value) {
        list.push(value.to_string());
    }
}

/// Runs on each worker thread: warm-up, then `reps` barrier-aligned timed
/// regions of `passes` full traversals each.
#[allow(clippy::too_many_arguments)]
fn worker_body(
    platform: &Platform,
    handle: &KernelHandle,
    slot: &WorkerSlot,
    config: &SweepConfig,
    size: u64,
    passes: u32,
    reps: u32,
    barrier: &Barrier,
) -> Result<WorkerRun, KernelError> {
    let bytes_per_rep = size * u64::from(passes);
    let mut warnings = Vec::new();
    let mut ticks_per_rep = Vec::with_capacity(reps as usize);

    match platform {
        Platform::Real { backend } => {
            if let Err(_e) = affinity::pin_current_thread(&[slot.core]) {
                warnings.push(format!("pinning_failed_core_{}", slot.core));
            }
            let buffer = slot.buffer.as_ref().expect("real workers own buffers");
            let window = &buffer.as_slice()[..(size / 8) as usize];
            let backend = backend.clone();
            // Untimed warm-up traversal: first-touch and cache fill.
            std::hint::black_box(execute_kernel(handle, window, 1)?);
            for _ in 0..reps {
                barrier.wait();
                let t0 = backend.read();
                let checksum = execute_kernel(handle, window, passes)?;
                let t1 = backend.read();
                std::hint::black_box(checksum);
                ticks_per_rep.push(t1.saturating_sub(t0));
            }
        }
        Platform::Virtual { schedule } => {
            // Per-worker clock: virtual workers never share timer state, so
            // thread interleaving cannot affect the numbers.
            let clock = schedule.clock();
            handle.record_simulated_traffic(size); // warm-up pass
            for rep in 0..reps {
                barrier.wait();
                let t0 = clock.read();
                let elapsed =
                    virtual_execute(schedule, size, bytes_per_rep, config.seed, slot.index, rep);
                clock.advance(elapsed);
                handle.record_simulated_traffic(bytes_per_rep);
                let t1 = clock.read();
                ticks_per_rep.push(t1.saturating_sub(t0));
            }
        }
    }
    Ok(WorkerRun { ticks_per_rep, bytes_per_rep, warnings })
}
