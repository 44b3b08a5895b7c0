//! Machine description: cores, NUMA placement, cache levels, and theoretical
//! peak bandwidths.
//!
//! A [`MachineSpec`] can come from three places — best-effort OS detection,
//! a user-written spec file, or the built-in descriptions of the three
//! machines this suite was originally tuned on — and the result records
//! which, so downstream reports can say where their "peak" numbers came
//! from. Detection never fails: anything sysfs refuses to reveal is left
//! empty and noted in `warnings`, and efficiency reporting simply switches
//! off downstream when peaks are unknown.
//!
//! Spec files use the shared `key = value` grammar:
//!
//! ```text
//! name = a64fx
//! frequency_hz = 1_800_000_000
//! sockets = 1
//! cores.count = 48
//! cores.numa_map = 0,0,0,...        # one NUMA node id per core
//! cache.0.name = L1d
//! cache.0.capacity_bytes = 65_536
//! cache.0.scope = per_core          # per_core | per_group | shared
//! cache.0.peak_bpc = 128            # optional, bytes/cycle per core
//! cache.0.peak_gbps = 230.4         # optional, GB/s per core
//! cache.1.scope = per_group
//! cache.1.group_size = 12           # required for per_group
//! dram.peak_gbps_per_socket = 921.6
//! ```
//!
//! When both peak fields are present they must agree: GB/s = B/cycle ×
//! frequency / 10⁹, to within 0.1%. All bandwidths are decimal gigabytes.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::kvfile::{KvError, KvFile, KvWriter};

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;

/// How far a cache level's capacity is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheScope {
    PerCore,
    PerGroup,
    Shared,
}

impl CacheScope {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheScope::PerCore => "per_core",
            CacheScope::PerGroup => "per_group",
            CacheScope::Shared => "shared",
        }
    }

    fn parse(s: &str) -> Option<CacheScope> {
        match s {
            "per_core" => Some(CacheScope::PerCore),
            "per_group" => Some(CacheScope::PerGroup),
            "shared" => Some(CacheScope::Shared),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheLevel {
    pub name: String,
    pub capacity_bytes: u64,
    pub scope: CacheScope,
    /// Cores sharing one instance; required when scope is per_group.
    pub group_size_cores: Option<u32>,
    pub peak_bytes_per_cycle_per_core: Option<f64>,
    pub peak_gbps_per_core: Option<f64>,
}

/// Where a spec's numbers came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Detected,
    Builtin,
    UserFile,
    Merged,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Detected => "detected",
            Provenance::Builtin => "builtin",
            Provenance::UserFile => "user_file",
            Provenance::Merged => "merged",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Core {
    pub id: u32,
    pub numa_node: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineSpec {
    pub name: String,
    pub provenance: Provenance,
    pub nominal_frequency_hz: Option<u64>,
    pub sockets: u32,
    pub cores: Vec<Core>,
    /// Ordered by increasing capacity (L1 before L2 before L3).
    pub cache_levels: Vec<CacheLevel>,
    pub dram_peak_gbps_per_socket: Option<f64>,
    /// Fields detection could not fill, and other degradations.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error(transparent)]
    Format(#[from] KvError),
    #[error("reading machine spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("no builtin machine spec named `{0}` (have: a64fx, altra_q80_30, thunderx2_cn9975)")]
    UnknownBuiltin(String),
    #[error("machine spec field `{field}`: {detail}")]
    InvariantViolation { field: String, detail: String },
}

fn violation(field: &str, detail: impl Into<String>) -> TopologyError {
    TopologyError::InvariantViolation {
        field: field.to_string(),
        detail: detail.into(),
    }
}

/// Relative tolerance for the GB/s vs B/cycle cross-check.
const PEAK_CONSISTENCY_TOLERANCE: f64 = 1e-3;

impl MachineSpec {
    /// An empty spec to fill in; not valid until cores are added.
    pub fn empty(name: &str, provenance: Provenance) -> MachineSpec {
        MachineSpec {
            name: name.to_string(),
            provenance,
            nominal_frequency_hz: None,
            sockets: 1,
            cores: Vec::new(),
            cache_levels: Vec::new(),
            dram_peak_gbps_per_socket: None,
            warnings: Vec::new(),
        }
    }

    pub fn core_count(&self) -> usize {
        self.cores.len()
    }

    pub fn cores_per_socket(&self) -> usize {
        (self.cores.len() / self.sockets.max(1) as usize).max(1)
    }

    /// Distinct NUMA nodes, ascending.
    pub fn numa_nodes(&self) -> Vec<u32> {
        let mut nodes: Vec<u32> = self.cores.iter().map(|c| c.numa_node).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn numa_node_of(&self, core_id: u32) -> Option<u32> {
        self.cores.iter().find(|c| c.id == core_id).map(|c| c.numa_node)
    }

    /// Capacity of the biggest described cache, used to size sweep grids.
    pub fn largest_cache_bytes(&self) -> Option<u64> {
        self.cache_levels.iter().map(|l| l.capacity_bytes).max()
    }

    pub fn has_peaks(&self) -> bool {
        self.dram_peak_gbps_per_socket.is_some()
            || self.cache_levels.iter().any(|l| l.peak_gbps_per_core.is_some())
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.cores.is_empty() {
            return Err(violation("cores.count", "at least one core required"));
        }
        if self.sockets == 0 {
            return Err(violation("sockets", "must be ≥ 1"));
        }
        if let Some(f) = self.nominal_frequency_hz {
            if f == 0 {
                return Err(violation("frequency_hz", "must be > 0 when given"));
            }
        }
        let mut previous_capacity = 0u64;
        for (i, level) in self.cache_levels.iter().enumerate() {
            let field = |suffix: &str| format!("cache.{i}.{suffix}");
            if level.capacity_bytes == 0 {
                return Err(violation(&field("capacity_bytes"), "must be > 0"));
            }
            if level.capacity_bytes <= previous_capacity {
                return Err(violation(
                    &field("capacity_bytes"),
                    format!(
                        "levels must grow: {} does not exceed {previous_capacity}",
                        level.capacity_bytes
                    ),
                ));
            }
            previous_capacity = level.capacity_bytes;
            if level.scope == CacheScope::PerGroup && level.group_size_cores.is_none() {
                return Err(violation(&field("group_size"), "required for per_group scope"));
            }
            if let Some(g) = level.group_size_cores {
                if g == 0 {
                    return Err(violation(&field("group_size"), "must be ≥ 1"));
                }
            }
            for (name, value) in [
                ("peak_bpc", level.peak_bytes_per_cycle_per_core),
                ("peak_gbps", level.peak_gbps_per_core),
            ] {
                if let Some(v) = value {
                    if !v.is_finite() || v <= 0.0 {
                        return Err(violation(&field(name), "must be finite and > 0"));
                    }
                }
            }
            if let (Some(bpc), Some(gbps)) =
                (level.peak_bytes_per_cycle_per_core, level.peak_gbps_per_core)
            {
                let Some(freq) = self.nominal_frequency_hz else {
                    return Err(violation(
                        &field("peak_gbps"),
                        "cannot cross-check peaks without frequency_hz",
                    ));
                };
                let derived = bpc * freq as f64 / 1e9;
                if (gbps - derived).abs() > PEAK_CONSISTENCY_TOLERANCE * derived {
                    return Err(violation(
                        &field("peak_gbps"),
                        format!("{gbps} disagrees with peak_bpc × frequency = {derived}"),
                    ));
                }
            }
        }
        if let Some(d) = self.dram_peak_gbps_per_socket {
            if !d.is_finite() || d <= 0.0 {
                return Err(violation("dram.peak_gbps_per_socket", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Overlays `user` on `base`, field-wise: any field the user spec fills
    /// wins; anything it leaves empty falls through to the base.
    ///
    /// One derived-value subtlety: a GB/s cache peak is `B/cycle ×
    /// frequency`. When the user overrides the frequency but inherits the
    /// base's cache levels, the inherited GB/s figures would contradict the
    /// (frequency-independent) B/cycle ones, so they are recomputed at the
    /// merged frequency.
    pub fn merge(base: &MachineSpec, user: &MachineSpec) -> MachineSpec {
        let mut warnings = base.warnings.clone();
        warnings.extend(user.warnings.iter().cloned());
        let frequency = user.nominal_frequency_hz.or(base.nominal_frequency_hz);
        let mut cache_levels = if user.cache_levels.is_empty() {
            base.cache_levels.clone()
        } else {
            user.cache_levels.clone()
        };
        if user.cache_levels.is_empty() && user.nominal_frequency_hz.is_some() {
            if let Some(freq) = frequency {
                for level in &mut cache_levels {
                    if let (Some(bpc), Some(_)) =
                        (level.peak_bytes_per_cycle_per_core, level.peak_gbps_per_core)
                    {
                        level.peak_gbps_per_core = Some(bpc * freq as f64 / 1e9);
                    }
                }
            }
        }
        MachineSpec {
            name: if user.name.is_empty() { base.name.clone() } else { user.name.clone() },
            provenance: Provenance::Merged,
            nominal_frequency_hz: frequency,
            sockets: if user.cores.is_empty() { base.sockets } else { user.sockets },
            cores: if user.cores.is_empty() { base.cores.clone() } else { user.cores.clone() },
            cache_levels,
            dram_peak_gbps_per_socket: user
                .dram_peak_gbps_per_socket
                .or(base.dram_peak_gbps_per_socket),
            warnings,
        }
    }

    pub fn load(path: &Path) -> Result<MachineSpec, TopologyError> {
        let text = std::fs::read_to_string(path)?;
        let spec = MachineSpec::parse(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Parses without validating, so partial overlay files are accepted;
    /// call [`validate`](Self::validate) on the final merged spec.
    pub fn parse(text: &str) -> Result<MachineSpec, TopologyError> {
        let kv = KvFile::parse(text)?;
        let mut spec = MachineSpec::empty(kv.get("name").unwrap_or(""), Provenance::UserFile);
        spec.nominal_frequency_hz = kv.get_u64("frequency_hz")?;
        spec.sockets = kv.get_u32("sockets")?.unwrap_or(1);
        let count = kv.get_u32("cores.count")?.unwrap_or(0);
        let numa_map: Vec<u32> = match kv.get("cores.numa_map") {
            None => vec![0; count as usize],
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|_| KvError::BadValue {
                    key: "cores.numa_map".into(),
                    expected: "comma-separated node ids",
                    value: list.to_string(),
                })?,
        };
        if numa_map.len() != count as usize {
            return Err(violation(
                "cores.numa_map",
                format!("{} entries for {count} cores", numa_map.len()),
            ));
        }
        spec.cores = (0..count).map(|id| Core { id, numa_node: numa_map[id as usize] }).collect();
        for (i, group) in kv.indexed_groups("cache")?.iter().enumerate() {
            let get_f64 = |field: &str| -> Result<Option<f64>, TopologyError> {
                match group.get(field) {
                    None => Ok(None),
                    Some(raw) => raw.replace('_', "").parse::<f64>().map(Some).map_err(|_| {
                        KvError::BadValue {
                            key: format!("cache.{i}.{field}"),
                            expected: "number",
                            value: raw.clone(),
                        }
                        .into()
                    }),
                }
            };
            let capacity = get_f64("capacity_bytes")?
                .ok_or_else(|| violation(&format!("cache.{i}.capacity_bytes"), "required"))?;
            let scope_raw = group
                .get("scope")
                .ok_or_else(|| violation(&format!("cache.{i}.scope"), "required"))?;
            let scope = CacheScope::parse(scope_raw).ok_or_else(|| {
                violation(
                    &format!("cache.{i}.scope"),
                    format!("`{scope_raw}` is not per_core/per_group/shared"),
                )
            })?;
            spec.cache_levels.push(CacheLevel {
                name: group.get("name").cloned().unwrap_or_else(|| format!("cache{i}")),
                capacity_bytes: capacity as u64,
                scope,
                group_size_cores: get_f64("group_size")?.map(|g| g as u32),
                peak_bytes_per_cycle_per_core: get_f64("peak_bpc")?,
                peak_gbps_per_core: get_f64("peak_gbps")?,
            });
        }
        spec.dram_peak_gbps_per_socket = kv.get_f64("dram.peak_gbps_per_socket")?;
        Ok(spec)
    }

    pub fn to_file_format(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("machine spec");
        w.set("name", &self.name);
        if let Some(f) = self.nominal_frequency_hz {
            w.set("frequency_hz", f);
        }
        w.set("sockets", self.sockets);
        w.set("cores.count", self.cores.len());
        let numa: Vec<String> = self.cores.iter().map(|c| c.numa_node.to_string()).collect();
        w.set("cores.numa_map", numa.join(","));
        for (i, level) in self.cache_levels.iter().enumerate() {
            w.blank();
            w.set(format!("cache.{i}.name").as_str(), &level.name);
            w.set(format!("cache.{i}.capacity_bytes").as_str(), level.capacity_bytes);
            w.set(format!("cache.{i}.scope").as_str(), level.scope.as_str());
            if let Some(g) = level.group_size_cores {
                w.set(format!("cache.{i}.group_size").as_str(), g);
            }
            if let Some(bpc) = level.peak_bytes_per_cycle_per_core {
                w.set(format!("cache.{i}.peak_bpc").as_str(), bpc);
            }
            if let Some(gbps) = level.peak_gbps_per_core {
                w.set(format!("cache.{i}.peak_gbps").as_str(), gbps);
            }
        }
        if let Some(d) = self.dram_peak_gbps_per_socket {
            w.blank();
            w.set("dram.peak_gbps_per_socket", d);
        }
        w.finish()
    }
}

// ---------------------------------------------------------------------------
// Built-in machines
// ---------------------------------------------------------------------------

fn evenly_distributed_cores(count: u32, cores_per_node: u32) -> Vec<Core> {
    (0..count).map(|id| Core { id, numa_node: id / cores_per_node }).collect()
}

/// The three machines with fully documented peaks. Peak GB/s figures are
/// exactly B/cycle × nominal frequency; DRAM peaks are per socket.
pub fn builtin_specs() -> Vec<MachineSpec> {
    let a64fx = MachineSpec {
        name: "a64fx".into(),
        provenance: Provenance::Builtin,
        nominal_frequency_hz: Some(1_800_000_000),
        sockets: 1,
        // One socket of 48 cores in four 12-core groups, each group a NUMA
        // node with its own memory stack.
        cores: evenly_distributed_cores(48, 12),
        cache_levels: vec![
            CacheLevel {
                name: "L1d".into(),
                capacity_bytes: 64 * KIB,
                scope: CacheScope::PerCore,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: Some(128.0),
                peak_gbps_per_core: Some(230.4),
            },
            CacheLevel {
                name: "L2".into(),
                capacity_bytes: 8 * MIB,
                scope: CacheScope::PerGroup,
                group_size_cores: Some(12),
                peak_bytes_per_cycle_per_core: Some(64.0),
                peak_gbps_per_core: Some(115.2),
            },
            // No L3.
        ],
        dram_peak_gbps_per_socket: Some(921.6),
        warnings: Vec::new(),
    };

    let altra = MachineSpec {
        name: "altra_q80_30".into(),
        provenance: Provenance::Builtin,
        nominal_frequency_hz: Some(3_000_000_000),
        sockets: 1,
        cores: evenly_distributed_cores(80, 80),
        cache_levels: vec![
            CacheLevel {
                name: "L1d".into(),
                capacity_bytes: 64 * KIB,
                scope: CacheScope::PerCore,
                group_size_cores: None,
                // Two 128-bit read paths per cycle.
                peak_bytes_per_cycle_per_core: Some(32.0),
                peak_gbps_per_core: Some(96.0),
            },
            CacheLevel {
                name: "L2".into(),
                capacity_bytes: MIB,
                scope: CacheScope::PerCore,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: None,
                peak_gbps_per_core: None,
            },
            CacheLevel {
                name: "L3".into(),
                capacity_bytes: 32 * MIB,
                scope: CacheScope::Shared,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: None,
                peak_gbps_per_core: None,
            },
        ],
        // DDR4-3200 × 8 channels = 8 × 25.6 GB/s.
        dram_peak_gbps_per_socket: Some(204.8),
        warnings: Vec::new(),
    };

    let thunderx2 = MachineSpec {
        name: "thunderx2_cn9975".into(),
        provenance: Provenance::Builtin,
        nominal_frequency_hz: Some(2_000_000_000),
        sockets: 2,
        cores: evenly_distributed_cores(56, 28),
        cache_levels: vec![
            CacheLevel {
                name: "L1d".into(),
                capacity_bytes: 32 * KIB,
                scope: CacheScope::PerCore,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: Some(32.0),
                peak_gbps_per_core: Some(64.0),
            },
            CacheLevel {
                name: "L2".into(),
                capacity_bytes: 256 * KIB,
                scope: CacheScope::PerCore,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: None,
                peak_gbps_per_core: None,
            },
            CacheLevel {
                name: "L3".into(),
                capacity_bytes: 28 * MIB,
                scope: CacheScope::Shared,
                group_size_cores: None,
                peak_bytes_per_cycle_per_core: None,
                peak_gbps_per_core: None,
            },
        ],
        dram_peak_gbps_per_socket: Some(170.5),
        warnings: Vec::new(),
    };

    vec![a64fx, altra, thunderx2]
}

pub fn builtin(name: &str) -> Result<MachineSpec, TopologyError> {
    builtin_specs()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| TopologyError::UnknownBuiltin(name.to_string()))
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Best-effort description of the current host from sysfs. Never fails:
/// on trouble it degrades toward a bare core list and records what it could
/// not learn in `warnings`.
pub fn detect() -> MachineSpec {
    let mut spec = MachineSpec::empty("detected", Provenance::Detected);
    detect_into(&mut spec);
    if spec.cores.is_empty() {
        let fallback = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        spec.cores = (0..fallback as u32).map(|id| Core { id, numa_node: 0 }).collect();
        spec.warnings.push("topology_detection_unavailable".into());
    }
    if spec.validate().is_err() {
        // Keep the core list; drop whatever combination sysfs reported that
        // our invariants reject (e.g. duplicate capacities).
        spec.cache_levels.clear();
        spec.warnings.push("detected_cache_description_inconsistent".into());
    }
    spec
}

#[cfg(target_os = "linux")]
fn detect_into(spec: &mut MachineSpec) {
    use crate::affinity::parse_cpu_list;

    let read = |path: String| std::fs::read_to_string(path).ok().map(|s| s.trim().to_string());

    let Some(online) = read("/sys/devices/system/cpu/online".into())
        .and_then(|s| parse_cpu_list(&s).ok())
    else {
        return;
    };

    // NUMA node per core.
    let mut node_of = std::collections::HashMap::new();
    let mut node = 0u32;
    loop {
        let Some(list) = read(format!("/sys/devices/system/node/node{node}/cpulist")) else {
            break;
        };
        if let Ok(cpus) = parse_cpu_list(&list) {
            for cpu in cpus {
                node_of.insert(cpu, node);
            }
        }
        node += 1;
    }
    spec.cores = online
        .iter()
        .map(|&id| Core {
            id: id as u32,
            numa_node: node_of.get(&id).copied().unwrap_or(0),
        })
        .collect();

    // Socket count from physical package ids.
    let mut packages = std::collections::HashSet::new();
    for &cpu in &online {
        if let Some(pkg) = read(format!(
            "/sys/devices/system/cpu/cpu{cpu}/topology/physical_package_id"
        )) {
            packages.insert(pkg);
        }
    }
    if !packages.is_empty() {
        spec.sockets = packages.len() as u32;
    }

    // Nominal frequency. cpuinfo_max_freq is in kHz.
    match read("/sys/devices/system/cpu/cpu0/cpufreq/cpuinfo_max_freq".into())
        .and_then(|s| s.parse::<u64>().ok())
    {
        Some(khz) => spec.nominal_frequency_hz = Some(khz * 1000),
        None => spec.warnings.push("nominal_frequency_unknown".into()),
    }

    // Data/unified caches as seen by cpu0.
    let total = online.len();
    let mut levels = Vec::new();
    for index in 0..16 {
        let base = format!("/sys/devices/system/cpu/cpu0/cache/index{index}");
        let Some(kind) = read(format!("{base}/type")) else { break };
        if kind == "Instruction" {
            continue;
        }
        let (Some(level), Some(size), Some(shared)) = (
            read(format!("{base}/level")),
            read(format!("{base}/size")),
            read(format!("{base}/shared_cpu_list")),
        ) else {
            continue;
        };
        let Some(capacity) = parse_size_suffixed(&size) else { continue };
        let Ok(sharers) = parse_cpu_list(&shared) else { continue };
        let scope = if sharers.len() <= 1 {
            CacheScope::PerCore
        } else if sharers.len() >= total {
            CacheScope::Shared
        } else {
            CacheScope::PerGroup
        };
        let name = if level == "1" { "L1d".to_string() } else { format!("L{level}") };
        levels.push(CacheLevel {
            name,
            capacity_bytes: capacity,
            scope,
            group_size_cores: (scope == CacheScope::PerGroup).then_some(sharers.len() as u32),
            peak_bytes_per_cycle_per_core: None,
            peak_gbps_per_core: None,
        });
    }
    levels.sort_by_key(|l| l.capacity_bytes);
    spec.cache_levels = levels;
    // Peaks are never discoverable from sysfs.
    spec.warnings.push("peak_bandwidths_unknown".into());
}

#[cfg(not(target_os = "linux"))]
fn detect_into(_spec: &mut MachineSpec) {}

/// Parses sysfs cache sizes like `32K`, `1024K`, `8M`.
#[cfg_attr(not(target_os = "linux"), allow(dead_code))]
fn parse_size_suffixed(s: &str) -> Option<u64> {
    let s = s.trim();
    let (digits, mult) = match s.as_bytes().last()? {
        b'K' => (&s[..s.len() - 1], KIB),
        b'M' => (&s[..s.len() - 1], MIB),
        b'G' => (&s[..s.len() - 1], 1024 * MIB),
        _ => (s, 1),
    };
    digits.parse::<u64>().ok().map(|n| n * mult)
}
