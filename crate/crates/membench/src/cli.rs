//! The command-line front end behind the `membench` binary.
//!
//! Thin by design: flags and an optional key=value config file are merged
//! (flags win field-wise), resolved into an [`Engine`] + [`SweepConfig`],
//! and the results rendered through [`crate::output`]. All logic lives here
//! in the library so the binary stays a three-line shim and tests can drive
//! the exact production path without spawning processes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 timer or
//! kernel backend unavailable on this host.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use crate::affinity;
use crate::engine::{default_size_grid, Engine, EngineError, SweepConfig};
use crate::kernels::{KernelError, KernelSpec};
use crate::kvfile::KvFile;
use crate::memory::{HugepagePolicy, MemoryError};
use crate::output;
use crate::timer::{TimerBackend, TimerError};
use crate::topology::{self, MachineSpec, Provenance, TopologyError};
use crate::virtual_platform::{ScheduleError, VirtualSchedule};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

pub const DEFAULT_KERNEL_ID: &str = "neon/fadd/manual/r4";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> CliError {
        match e {
            KernelError::ExtensionUnsupported(_) => CliError::Backend(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TimerError> for CliError {
    fn from(e: TimerError) -> CliError {
        CliError::Backend(e.to_string())
    }
}

impl From<TopologyError> for CliError {
    fn from(e: TopologyError) -> CliError {
        match e {
            TopologyError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> CliError {
        match e {
            ScheduleError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> CliError {
        match e {
            EngineError::Config(msg) => CliError::Config(msg),
            EngineError::Kernel(k) => k.into(),
            EngineError::Timer(t) => t.into(),
            EngineError::Memory(m) => match m {
                MemoryError::AllocationFailure { .. } => CliError::Io(m.to_string()),
                other => CliError::Config(other.to_string()),
            },
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Flags mirror the config-file keys one-to-one; a flag overrides the same
/// field from `--config`.
#[derive(Parser, Debug, Default)]
#[command(
    name = "membench",
    version,
    about = "Memory-hierarchy load-throughput microbenchmark"
)]
pub struct Cli {
    /// Kernel id `<ext>/<mix>/<addressing>/r<regs>`, e.g. neon/fadd/manual/r4
    #[arg(long)]
    pub kernel: Option<String>,

    /// Cores to run on, cpu-list syntax: `0`, `0-3`, `0-3,8`
    #[arg(long)]
    pub cores: Option<String>,

    /// Working-set sizes, comma-separated, with optional K/M/G (binary) suffix
    #[arg(long)]
    pub sizes: Option<String>,

    /// Timed repetitions per working-set size
    #[arg(long)]
    pub reps: Option<u32>,

    /// Base value of the non-denormal fill pattern
    #[arg(long = "pattern-x")]
    pub pattern_x: Option<f64>,

    /// Buffer alignment in bytes (power of two ≥ 64)
    #[arg(long)]
    pub alignment: Option<u64>,

    /// Huge-page policy: transparent, explicit, or forbid
    #[arg(long)]
    pub hugepages: Option<String>,

    /// Machine description: a spec file path or `builtin:<name>`
    #[arg(long = "machine-spec")]
    pub machine_spec: Option<String>,

    /// Subtract the estimated loop-control cost from elapsed time
    #[arg(long)]
    pub subtract_loop_overhead: bool,

    /// Result format: csv or json
    #[arg(long)]
    pub output: Option<String>,

    /// Also emit the CSV data file and a matplotlib script (needs --out)
    #[arg(long)]
    pub plot: bool,

    /// Run against a virtual-platform schedule file instead of real memory
    #[arg(long = "virtual")]
    pub virtual_schedule: Option<PathBuf>,

    /// Seed for the virtual platform's jitter stream
    #[arg(long)]
    pub seed: Option<u64>,

    /// Key=value config file; individual flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output path stem; the format extension is appended. Default: stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn parse(s: &str) -> Result<OutputFormat, CliError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(CliError::Config(format!(
                "output format `{other}`: expected csv or json"
            ))),
        }
    }
}

/// A fully resolved invocation, ready to execute.
#[derive(Debug)]
pub struct Resolved {
    pub engine: Engine,
    pub config: SweepConfig,
    /// Kept alongside the engine so the config echo can inline it.
    pub schedule: Option<VirtualSchedule>,
    pub format: OutputFormat,
    pub plot: bool,
    pub out: Option<PathBuf>,
    /// Non-fatal resolution notes, reported on stderr.
    pub notes: Vec<String>,
}

/// The config-file counterpart of [`Cli`]. Every field optional; unknown
/// keys are rejected so typos fail loudly instead of silently measuring the
/// wrong thing.
#[derive(Debug, Default)]
struct FileConfig {
    kernel: Option<String>,
    cores: Option<String>,
    sizes: Option<String>,
    reps: Option<u32>,
    min_bytes_per_sample: Option<u64>,
    pattern_x: Option<f64>,
    alignment: Option<u64>,
    hugepages: Option<String>,
    machine_spec: Option<String>,
    subtract_loop_overhead: Option<bool>,
    numa_local_buffers: Option<bool>,
    output: Option<String>,
    plot: Option<bool>,
    virtual_schedule: Option<String>,
    seed: Option<u64>,
    out: Option<String>,
}

const FILE_KEYS: &[&str] = &[
    "kernel",
    "cores",
    "sizes",
    "reps",
    "min_bytes_per_sample",
    "pattern_x",
    "alignment",
    "hugepages",
    "machine_spec",
    "subtract_loop_overhead",
    "numa_local_buffers",
    "output",
    "plot",
    "virtual",
    "seed",
    "out",
];

fn load_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let kv = KvFile::parse(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for key in kv.keys() {
        if !FILE_KEYS.contains(&key) {
            return Err(CliError::Config(format!(
                "{}: unknown key `{key}`",
                path.display()
            )));
        }
    }
    let bad = |e: crate::kvfile::KvError| CliError::Config(format!("{}: {e}", path.display()));
    Ok(FileConfig {
        kernel: kv.get("kernel").map(str::to_string),
        cores: kv.get("cores").map(str::to_string),
        sizes: kv.get("sizes").map(str::to_string),
        reps: kv.get_u32("reps").map_err(bad)?,
        min_bytes_per_sample: kv
            .get("min_bytes_per_sample")
            .map(parse_size)
            .transpose()
            .map_err(|e| CliError::Config(format!("{}: min_bytes_per_sample: {e}", path.display())))?,
        pattern_x: kv.get_f64("pattern_x").map_err(bad)?,
        alignment: kv.get_u64("alignment").map_err(bad)?,
        hugepages: kv.get("hugepages").map(str::to_string),
        machine_spec: kv.get("machine_spec").map(str::to_string),
        subtract_loop_overhead: kv.get_bool("subtract_loop_overhead").map_err(bad)?,
        numa_local_buffers: kv.get_bool("numa_local_buffers").map_err(bad)?,
        output: kv.get("output").map(str::to_string),
        plot: kv.get_bool("plot").map_err(bad)?,
        virtual_schedule: kv.get("virtual").map(str::to_string),
        seed: kv.get_u64("seed").map_err(bad)?,
        out: kv.get("out").map(str::to_string),
    })
}

/// `"64K"` → 65536. Plain integers, `_` separators, and binary K/M/G
/// suffixes.
pub fn parse_size(token: &str) -> Result<u64, CliError> {
    let t = token.trim().replace('_', "");
    let (digits, unit) = match t.chars().next_back() {
        Some('K') | Some('k') => (&t[..t.len() - 1], 1024u64),
        Some('M') | Some('m') => (&t[..t.len() - 1], 1024 * 1024),
        Some('G') | Some('g') => (&t[..t.len() - 1], 1024 * 1024 * 1024),
        _ => (t.as_str(), 1),
    };
    let value: u64 = digits
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse size `{token}`")))?;
    value
        .checked_mul(unit)
        .ok_or_else(|| CliError::Config(format!("size `{token}` overflows")))
}

fn parse_size_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(parse_size)
        .collect()
}

/// Picks the timestamp source for a real run, honoring `MEMBENCH_BACKEND`
/// (`hardware` or `os_monotonic`). On virtual runs the variable is inert —
/// noted, not fatal — because the schedule brings its own clock.
fn select_backend(
    env_backend: Option<&str>,
    is_virtual: bool,
    notes: &mut Vec<String>,
) -> Result<TimerBackend, CliError> {
    match env_backend {
        None => Ok(TimerBackend::default_for_host()),
        Some(value) => {
            if is_virtual {
                notes.push(format!(
                    "MEMBENCH_BACKEND={value} ignored: this run uses the virtual platform's clock"
                ));
                return Ok(TimerBackend::default_for_host());
            }
            match value {
                "hardware" => Ok(TimerBackend::hardware()?),
                "os" | "os_monotonic" => Ok(TimerBackend::os_monotonic()),
                other => Err(CliError::Config(format!(
                    "MEMBENCH_BACKEND=`{other}`: expected hardware or os_monotonic"
                ))),
            }
        }
    }
}

fn resolve_machine(
    request: Option<&str>,
    is_virtual: bool,
) -> Result<MachineSpec, CliError> {
    match request {
        Some(name) => {
            if let Some(builtin) = name.strip_prefix("builtin:") {
                Ok(topology::builtin(builtin)?)
            } else {
                Ok(MachineSpec::load(Path::new(name))?)
            }
        }
        // A virtual run with no stated machine gets a deterministic blank
        // spec rather than whatever host happens to execute the simulation.
        None if is_virtual => Ok(MachineSpec::empty("unspecified", Provenance::UserFile)),
        None => Ok(topology::detect()),
    }
}

/// Merges flags over the optional config file and builds the engine.
pub fn resolve(cli: &Cli, env_backend: Option<&str>) -> Result<Resolved, CliError> {
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let mut notes = Vec::new();

    let schedule_path: Option<PathBuf> = cli
        .virtual_schedule
        .clone()
        .or(file.virtual_schedule.as_deref().map(PathBuf::from));
    let schedule = match &schedule_path {
        Some(path) => Some(VirtualSchedule::load(path)?),
        None => None,
    };

    let machine_request = cli.machine_spec.as_deref().or(file.machine_spec.as_deref());
    let machine = resolve_machine(machine_request, schedule.is_some())?;

    let kernel_id = cli
        .kernel
        .as_deref()
        .or(file.kernel.as_deref())
        .unwrap_or(DEFAULT_KERNEL_ID);
    let kernel = KernelSpec::parse_id(kernel_id)?;

    let backend = select_backend(env_backend, schedule.is_some(), &mut notes)?;
    let engine = match schedule.clone() {
        Some(schedule) => Engine::virtual_platform(schedule, machine),
        None => Engine::real(backend, machine),
    };

    let mut config = SweepConfig::new(kernel);
    if let Some(text) = cli.cores.as_deref().or(file.cores.as_deref()) {
        config.cores = affinity::parse_cpu_list(text).map_err(CliError::Config)?;
    }
    config.sizes_bytes = match cli.sizes.as_deref().or(file.sizes.as_deref()) {
        Some(text) => parse_size_list(text)?,
        None => {
            let granule = engine.resolve(&config.kernel)?.metadata().granule_bytes;
            default_size_grid(engine.machine(), granule)
        }
    };
    if let Some(reps) = cli.reps.or(file.reps) {
        config.repetitions = reps;
    }
    if let Some(min_bytes) = file.min_bytes_per_sample {
        config.min_bytes_per_sample = min_bytes;
    }
    if let Some(x) = cli.pattern_x.or(file.pattern_x) {
        config.pattern_x = x;
    }
    if let Some(alignment) = cli.alignment.or(file.alignment) {
        config.alignment_bytes = alignment as usize;
    }
    if let Some(policy) = cli.hugepages.as_deref().or(file.hugepages.as_deref()) {
        config.hugepage_policy = HugepagePolicy::parse(policy).ok_or_else(|| {
            CliError::Config(format!(
                "hugepages `{policy}`: expected transparent, explicit or forbid"
            ))
        })?;
    }
    if let Some(numa) = file.numa_local_buffers {
        config.numa_local_buffers = numa;
    }
    config.subtract_loop_overhead =
        cli.subtract_loop_overhead || file.subtract_loop_overhead.unwrap_or(false);
    if let Some(seed) = cli.seed.or(file.seed) {
        config.seed = seed;
    }

    let format = match cli.output.as_deref().or(file.output.as_deref()) {
        Some(f) => OutputFormat::parse(f)?,
        None => OutputFormat::Csv,
    };
    let plot = cli.plot || file.plot.unwrap_or(false);
    let out = cli.out.clone().or(file.out.as_deref().map(PathBuf::from));
    if plot && out.is_none() {
        return Err(CliError::Config(
            "--plot writes a data file and script: give it --out <stem>".to_string(),
        ));
    }

    Ok(Resolved { engine, config, schedule, format, plot, out, notes })
}

/// One rendered output and its destination (`None` = stdout).
#[derive(Debug)]
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub text: String,
}

/// Runs the sweep and renders every requested artifact. Pure with respect
/// to the filesystem: writing happens in [`write_artifacts`].
pub fn execute(resolved: &Resolved) -> Result<Vec<Artifact>, CliError> {
    let series = resolved.engine.sweep(&resolved.config)?;
    let machine = resolved.engine.machine();
    let echo = output::config_echo(&resolved.config, machine, resolved.schedule.as_ref());
    let csv = || output::render_csv(&series, machine, &echo);
    let json = || output::render_json(&series, machine, &echo);

    let mut artifacts = Vec::new();
    match &resolved.out {
        None => artifacts.push(Artifact {
            path: None,
            text: match resolved.format {
                OutputFormat::Csv => csv(),
                OutputFormat::Json => json(),
            },
        }),
        Some(stem) => {
            let csv_path = stem.with_extension("csv");
            match resolved.format {
                OutputFormat::Csv => {
                    artifacts.push(Artifact { path: Some(csv_path.clone()), text: csv() })
                }
                OutputFormat::Json => {
                    artifacts.push(Artifact {
                        path: Some(stem.with_extension("json")),
                        text: json(),
                    });
                    if resolved.plot {
                        // The plot reads CSV; emit it alongside the JSON.
                        artifacts.push(Artifact { path: Some(csv_path.clone()), text: csv() });
                    }
                }
            }
            if resolved.plot {
                let data_name = csv_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "membench.csv".to_string());
                artifacts.push(Artifact {
                    path: Some(stem.with_extension("py")),
                    text: output::render_plot_script(&data_name, &series),
                });
            }
        }
    }
    Ok(artifacts)
}

pub fn write_artifacts(artifacts: &[Artifact]) -> Result<(), CliError> {
    for artifact in artifacts {
        match &artifact.path {
            None => print!("{}", artifact.text),
            Some(path) => std::fs::write(path, &artifact.text)
                .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?,
        }
    }
    Ok(())
}

fn run_with(cli: &Cli, env_backend: Option<&str>) -> Result<(), CliError> {
    let resolved = resolve(cli, env_backend)?;
    for note in &resolved.notes {
        eprintln!("membench: note: {note}");
    }
    let artifacts = execute(&resolved)?;
    write_artifacts(&artifacts)
}

/// Everything the binary does. Clap exits with code 2 on flag errors, which
/// matches the configuration-error contract.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_backend = std::env::var("MEMBENCH_BACKEND").ok();
    match run_with(&cli, env_backend.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("membench: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
