//! Measurement kernels: pure read loops with a precisely known instruction
//! and traffic budget.
//!
//! Every kernel follows the same skeleton regardless of backend: one logical
//! iteration loads **eight vector registers** from the working set and, when
//! the mix asks for it, feeds each into one of **eight independent
//! accumulators**. Eight-way unrolling keeps the load and FP pipelines full
//! without creating cross-iteration dependencies, so throughput — not
//! latency — is what gets measured. A kernel is identified by four axes:
//!
//! * **ISA extension** — `neon` (128-bit), `sve` (vector length discovered
//!   at run time), `scalar` (portable Rust, non-authoritative), `virtual`
//!   (deterministic simulation for tests);
//! * **instruction mix** — `fadd` (load + FADD per register), `nop` (the
//!   FADDs replaced one-for-one by NOPs, keeping issue slots occupied while
//!   removing FP pressure), `load` (loads only);
//! * **addressing mode** — `manual` (separate pointer-increment ADDs),
//!   `post` (NEON post-indexed loads, address update folded in),
//!   `offset` (SVE `mul vl` offsets, one pointer bump per iteration);
//! * **registers per load** — 1, 2, or 4 registers filled by each load
//!   instruction (multi-register load forms exist on neon and sve).
//!
//! With NEON manual addressing the pointer is duplicated across four cursor
//! registers offset by one load's footprint, each advancing by four
//! footprints (256 bytes in the 4-register case); this removes the serial
//! dependency between a load and its own address update.
//!
//! The derived [`KernelMetadata`] is the contract the rest of the crate
//! leans on: bytes per iteration, instruction counts, and cursor geometry
//! are exact, and the identity `bytes_per_iteration = loads_per_iteration ×
//! registers_per_load × vector_bytes` holds for every catalog entry.

mod scalar;

#[cfg(target_arch = "aarch64")]
mod aarch64;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Registers every load fills; the unroll depth of one logical iteration.
pub const LOADED_REGISTERS_PER_ITERATION: u32 = 8;

/// Accumulator registers carried by the `fadd` mix.
pub const ACCUMULATORS: u32 = 8;

/// Vector width assumed for `virtual` kernels unless the kernel spec or the
/// schedule overrides it.
pub const DEFAULT_VIRTUAL_VECTOR_BYTES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsaExtension {
    Neon,
    Sve,
    ScalarPortable,
    Virtual,
}

impl IsaExtension {
    pub fn as_str(self) -> &'static str {
        match self {
            IsaExtension::Neon => "neon",
            IsaExtension::Sve => "sve",
            IsaExtension::ScalarPortable => "scalar",
            IsaExtension::Virtual => "virtual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionMix {
    ArithFadd,
    NopSubstituted,
    LoadOnly,
}

impl InstructionMix {
    pub fn as_str(self) -> &'static str {
        match self {
            InstructionMix::ArithFadd => "fadd",
            InstructionMix::NopSubstituted => "nop",
            InstructionMix::LoadOnly => "load",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressingMode {
    ManualIncrement,
    PostIncrement,
    Offset,
}

impl AddressingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AddressingMode::ManualIncrement => "manual",
            AddressingMode::PostIncrement => "post",
            AddressingMode::Offset => "offset",
        }
    }
}

/// Full description of a kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct KernelSpec {
    pub isa_extension: IsaExtension,
    pub instruction_mix: InstructionMix,
    pub addressing_mode: AddressingMode,
    /// 1, 2 or 4; values above 1 require a multi-register load form.
    pub registers_per_load: u8,
    /// Geometry override for `virtual` kernels (other extensions discover
    /// their width from the hardware). `None` means
    /// [`DEFAULT_VIRTUAL_VECTOR_BYTES`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub virtual_vector_bytes: Option<u32>,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid kernel combination: {0}")]
    InvalidCombination(String),
    #[error("isa extension `{0}` is not available on this host")]
    ExtensionUnsupported(&'static str),
    #[error("cannot parse kernel id {0:?}: expected <ext>/<mix>[/<addressing>]/r<regs>")]
    BadKernelId(String),
    #[error("implausible vector length {0} bytes: expected a multiple of 16 in [16, 256]")]
    ImplausibleVectorLength(u32),
    #[error("window of {len} bytes does not fit kernel geometry: need a positive multiple of {granule} bytes")]
    WindowGeometry { len: usize, granule: u32 },
}

impl KernelSpec {
    /// The documented default addressing mode for an extension and mix:
    /// NEON kernels default to manual increment; SVE kernels default to
    /// offset addressing except pure-load kernels, where offset forms cost
    /// L1-resident throughput and manual increment wins.
    pub fn default_addressing(ext: IsaExtension, mix: InstructionMix) -> AddressingMode {
        match (ext, mix) {
            (IsaExtension::Sve, InstructionMix::LoadOnly) => AddressingMode::ManualIncrement,
            (IsaExtension::Sve, _) => AddressingMode::Offset,
            _ => AddressingMode::ManualIncrement,
        }
    }

    pub fn new(
        ext: IsaExtension,
        mix: InstructionMix,
        addressing: AddressingMode,
        registers_per_load: u8,
    ) -> Self {
        KernelSpec {
            isa_extension: ext,
            instruction_mix: mix,
            addressing_mode: addressing,
            registers_per_load,
            virtual_vector_bytes: None,
        }
    }

    /// Checks the axis constraints; every other entry point calls this.
    pub fn validate(&self) -> Result<(), KernelError> {
        let ext = self.isa_extension;
        match self.registers_per_load {
            1 => {}
            2 | 4 if ext != IsaExtension::ScalarPortable => {}
            2 | 4 => {
                return Err(KernelError::InvalidCombination(format!(
                    "scalar kernels load one register at a time, got r{}",
                    self.registers_per_load
                )))
            }
            n => {
                return Err(KernelError::InvalidCombination(format!(
                    "registers_per_load must be 1, 2 or 4, got {n}"
                )))
            }
        }
        match self.addressing_mode {
            AddressingMode::PostIncrement if ext != IsaExtension::Neon => {
                return Err(KernelError::InvalidCombination(
                    "post-increment addressing exists only on neon".to_string(),
                ));
            }
            AddressingMode::Offset if ext != IsaExtension::Sve => {
                return Err(KernelError::InvalidCombination(
                    "offset addressing exists only on sve".to_string(),
                ));
            }
            _ => {}
        }
        if let Some(vb) = self.virtual_vector_bytes {
            if ext != IsaExtension::Virtual {
                return Err(KernelError::InvalidCombination(
                    "vector_bytes can only be overridden for virtual kernels".to_string(),
                ));
            }
            if vb < 8 || vb > 256 || vb % 8 != 0 {
                return Err(KernelError::ImplausibleVectorLength(vb));
            }
        }
        Ok(())
    }

    /// `<ext>/<mix>/<addressing>/r<regs>`, e.g. `sve/fadd/offset/r2`.
    pub fn id(&self) -> String {
        format!(
            "{}/{}/{}/r{}",
            self.isa_extension.as_str(),
            self.instruction_mix.as_str(),
            self.addressing_mode.as_str(),
            self.registers_per_load
        )
    }

    /// Parses a kernel id. The addressing segment may be omitted, in which
    /// case the documented default for the extension and mix is used.
    pub fn parse_id(id: &str) -> Result<KernelSpec, KernelError> {
        let err = || KernelError::BadKernelId(id.to_string());
        let parts: Vec<&str> = id.trim().split('/').collect();
        let (ext_s, mix_s, addr_s, regs_s) = match parts.as_slice() {
            [e, m, a, r] => (*e, *m, Some(*a), *r),
            [e, m, r] => (*e, *m, None, *r),
            _ => return Err(err()),
        };
        let ext = match ext_s {
            "neon" => IsaExtension::Neon,
            "sve" => IsaExtension::Sve,
            "scalar" => IsaExtension::ScalarPortable,
            "virtual" => IsaExtension::Virtual,
            _ => return Err(err()),
        };
        let mix = match mix_s {
            "fadd" => InstructionMix::ArithFadd,
            "nop" => InstructionMix::NopSubstituted,
            "load" => InstructionMix::LoadOnly,
            _ => return Err(err()),
        };
        let addressing = match addr_s {
            Some("manual") => AddressingMode::ManualIncrement,
            Some("post") => AddressingMode::PostIncrement,
            Some("offset") => AddressingMode::Offset,
            Some(_) => return Err(err()),
            None => KernelSpec::default_addressing(ext, mix),
        };
        let regs: u8 = regs_s.strip_prefix('r').ok_or_else(err)?.parse().map_err(|_| err())?;
        let spec = KernelSpec::new(ext, mix, addressing, regs);
        spec.validate()?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

/// Exact per-iteration accounting for a kernel, derived purely from the spec
/// and the vector width. Identical for every backend that shares the
/// geometry — an SVE kernel's metadata is the same function of
/// `vector_bytes` whether the width is 16 bytes or 256.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMetadata {
    pub vector_bytes: u32,
    pub loads_per_iteration: u32,
    /// FADD instructions per iteration (0 for nop/load mixes).
    pub arith_per_iteration: u32,
    /// Non-load, non-arith instructions per iteration: pointer-update ADDs
    /// plus substituted NOPs.
    pub aux_per_iteration: u32,
    pub bytes_per_iteration: u32,
    /// Net address-space advance per iteration; equals `bytes_per_iteration`
    /// because every kernel streams without gaps or overlap.
    pub stride_bytes: u32,
    /// Independent address cursors walking the buffer.
    pub cursor_count: u32,
    /// Bytes a single cursor jumps each time it is used.
    pub cursor_advance_bytes: u32,
    /// Logical iterations covered by one trip of the physical loop (the
    /// 4-cursor NEON body spans two iterations).
    pub iterations_per_loop_trip: u32,
    /// Compare-and-branch instructions charged to one iteration.
    pub loop_control_per_iteration: f64,
    /// Working-set sizes must be a positive multiple of this.
    pub granule_bytes: u32,
}

impl KernelMetadata {
    /// Derives the metadata for a spec at a given vector width.
    pub fn for_spec(spec: &KernelSpec, vector_bytes: u32) -> Result<KernelMetadata, KernelError> {
        spec.validate()?;
        if vector_bytes == 0 || vector_bytes % 8 != 0 {
            return Err(KernelError::ImplausibleVectorLength(vector_bytes));
        }
        let regs = spec.registers_per_load as u32;
        let loads = LOADED_REGISTERS_PER_ITERATION / regs;
        let load_bytes = regs * vector_bytes;
        let bytes = loads * regs * vector_bytes;

        let arith = match spec.instruction_mix {
            InstructionMix::ArithFadd => ACCUMULATORS,
            _ => 0,
        };
        let address_updates = match spec.addressing_mode {
            AddressingMode::ManualIncrement => loads,
            AddressingMode::PostIncrement => 0,
            AddressingMode::Offset => 1,
        };
        let nops = match spec.instruction_mix {
            InstructionMix::NopSubstituted => ACCUMULATORS,
            _ => 0,
        };

        let cursor_count = match (spec.isa_extension, spec.addressing_mode) {
            (IsaExtension::Neon, AddressingMode::ManualIncrement) => 4,
            _ => 1,
        };
        let cursor_advance_bytes = cursor_count * load_bytes;
        // One loop trip must use every cursor a whole number of times.
        let loads_per_trip = lcm(loads, cursor_count);
        let iterations_per_loop_trip = loads_per_trip / loads;
        let granule_bytes = bytes * iterations_per_loop_trip;

        Ok(KernelMetadata {
            vector_bytes,
            loads_per_iteration: loads,
            arith_per_iteration: arith,
            aux_per_iteration: address_updates + nops,
            bytes_per_iteration: bytes,
            stride_bytes: bytes,
            cursor_count,
            cursor_advance_bytes,
            iterations_per_loop_trip,
            loop_control_per_iteration: 2.0 / iterations_per_loop_trip as f64,
            granule_bytes,
        })
    }

    /// Logical iterations needed to stream `window_len` bytes once.
    pub fn iterations_for(&self, window_len: usize) -> u64 {
        (window_len as u64) / self.stride_bytes as u64
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    fn gcd(mut a: u32, mut b: u32) -> u32 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    a / gcd(a, b) * b
}

// ---------------------------------------------------------------------------
// Vector-length discovery
// ---------------------------------------------------------------------------

/// Vector width in bytes for an extension.
///
/// NEON is architecturally 16 bytes. SVE is discovered from the hardware at
/// run time (via the element-count increment instructions) and must come
/// back as a multiple of 16 in `[16, 256]`. The scalar backend moves one
/// f64 per load. Virtual kernels use their configured width.
pub fn discover_vector_length(ext: IsaExtension) -> Result<u32, KernelError> {
    match ext {
        IsaExtension::Neon => Ok(16),
        IsaExtension::ScalarPortable => Ok(8),
        IsaExtension::Virtual => Ok(DEFAULT_VIRTUAL_VECTOR_BYTES),
        IsaExtension::Sve => {
            #[cfg(target_arch = "aarch64")]
            {
                if !std::arch::is_aarch64_feature_detected!("sve") {
                    return Err(KernelError::ExtensionUnsupported("sve"));
                }
                let vb = aarch64::sve_vector_bytes();
                if vb < 16 || vb > 256 || vb % 16 != 0 {
                    return Err(KernelError::ImplausibleVectorLength(vb));
                }
                Ok(vb)
            }
            #[cfg(not(target_arch = "aarch64"))]
            Err(KernelError::ExtensionUnsupported("sve"))
        }
    }
}

/// Whether kernels of this extension can execute on the current host.
pub fn extension_available(ext: IsaExtension) -> bool {
    match ext {
        IsaExtension::ScalarPortable | IsaExtension::Virtual => true,
        IsaExtension::Neon => cfg!(target_arch = "aarch64"),
        IsaExtension::Sve => {
            #[cfg(target_arch = "aarch64")]
            {
                std::arch::is_aarch64_feature_detected!("sve")
            }
            #[cfg(not(target_arch = "aarch64"))]
            false
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub spec: KernelSpec,
    pub available: bool,
}

/// Every valid kernel, in a fixed order (extension, mix, addressing,
/// register count). Both addressing variants are listed for every SVE
/// kernel; availability reflects the current host.
pub fn list_kernels() -> Vec<CatalogEntry> {
    let mut out = Vec::new();
    let exts = [
        IsaExtension::Neon,
        IsaExtension::Sve,
        IsaExtension::ScalarPortable,
        IsaExtension::Virtual,
    ];
    let mixes = [
        InstructionMix::ArithFadd,
        InstructionMix::NopSubstituted,
        InstructionMix::LoadOnly,
    ];
    for ext in exts {
        let addressings: &[AddressingMode] = match ext {
            IsaExtension::Neon => &[AddressingMode::ManualIncrement, AddressingMode::PostIncrement],
            IsaExtension::Sve => &[AddressingMode::ManualIncrement, AddressingMode::Offset],
            _ => &[AddressingMode::ManualIncrement],
        };
        let reg_counts: &[u8] = match ext {
            IsaExtension::ScalarPortable => &[1],
            _ => &[1, 2, 4],
        };
        let available = extension_available(ext);
        for mix in mixes {
            for &addressing in addressings {
                for &regs in reg_counts {
                    let spec = KernelSpec::new(ext, mix, addressing, regs);
                    debug_assert!(spec.validate().is_ok());
                    out.push(CatalogEntry { spec, available });
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Handles and execution
// ---------------------------------------------------------------------------

/// Opaque result of a kernel run. Its only purpose is to give the loads a
/// data sink the optimizer must respect; tests with known buffer contents
/// can also assert its exact value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChecksumToken(pub f64);

/// A validated, resolved kernel ready to execute.
#[derive(Debug, Clone)]
pub struct KernelHandle {
    spec: KernelSpec,
    metadata: KernelMetadata,
    /// Traffic accounting for virtual kernels, which touch no real memory.
    virtual_bytes_touched: Arc<AtomicU64>,
}

impl KernelHandle {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn metadata(&self) -> &KernelMetadata {
        &self.metadata
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    /// Bytes a virtual kernel has notionally streamed so far.
    pub fn virtual_bytes_touched(&self) -> u64 {
        self.virtual_bytes_touched.load(Ordering::Relaxed)
    }

    /// Accounts traffic for a simulated run. Used by the virtual platform
    /// when it replays this kernel's geometry instead of executing it.
    pub fn record_simulated_traffic(&self, bytes: u64) {
        self.virtual_bytes_touched.fetch_add(bytes, Ordering::Relaxed);
    }
}

/// Validates a spec against this host and derives its metadata.
pub fn resolve_kernel(spec: &KernelSpec) -> Result<KernelHandle, KernelError> {
    spec.validate()?;
    if !extension_available(spec.isa_extension) {
        return Err(KernelError::ExtensionUnsupported(spec.isa_extension.as_str()));
    }
    let vector_bytes = match spec.isa_extension {
        IsaExtension::Virtual => spec
            .virtual_vector_bytes
            .unwrap_or(DEFAULT_VIRTUAL_VECTOR_BYTES),
        ext => discover_vector_length(ext)?,
    };
    let metadata = KernelMetadata::for_spec(spec, vector_bytes)?;
    Ok(KernelHandle {
        spec: *spec,
        metadata,
        virtual_bytes_touched: Arc::new(AtomicU64::new(0)),
    })
}

/// Like [`resolve_kernel`], but skips the host-availability check and runs
/// the kernel as a simulation. This is how a virtual platform replays NEON
/// or SVE kernel geometries on hosts that lack the hardware.
pub fn resolve_kernel_simulated(
    spec: &KernelSpec,
    vector_bytes_for_unavailable: u32,
) -> Result<KernelHandle, KernelError> {
    spec.validate()?;
    let vector_bytes = match spec.isa_extension {
        IsaExtension::Virtual => spec
            .virtual_vector_bytes
            .unwrap_or(DEFAULT_VIRTUAL_VECTOR_BYTES),
        IsaExtension::Neon => 16,
        IsaExtension::ScalarPortable => 8,
        IsaExtension::Sve => match discover_vector_length(IsaExtension::Sve) {
            Ok(vb) => vb,
            Err(_) => vector_bytes_for_unavailable,
        },
    };
    let metadata = KernelMetadata::for_spec(spec, vector_bytes)?;
    Ok(KernelHandle {
        spec: *spec,
        metadata,
        virtual_bytes_touched: Arc::new(AtomicU64::new(0)),
    })
}

/// Streams the window `passes` times through the kernel's load loop.
///
/// The window length must be a positive multiple of the kernel's granule.
/// Virtual kernels only account the traffic (their cost model lives in the
/// virtual platform); all other backends really read every byte.
pub fn execute_kernel(
    handle: &KernelHandle,
    window: &[f64],
    passes: u32,
) -> Result<ChecksumToken, KernelError> {
    let len = window.len() * 8;
    let granule = handle.metadata.granule_bytes;
    if len == 0 || len % granule as usize != 0 {
        return Err(KernelError::WindowGeometry { len, granule });
    }
    if passes == 0 {
        return Ok(ChecksumToken(0.0));
    }
    let value = match handle.spec.isa_extension {
        IsaExtension::ScalarPortable => {
            scalar::run(handle.spec.instruction_mix, window, passes)
        }
        IsaExtension::Virtual => {
            handle
                .virtual_bytes_touched
                .fetch_add(len as u64 * passes as u64, Ordering::Relaxed);
            0.0
        }
        IsaExtension::Neon | IsaExtension::Sve => {
            #[cfg(target_arch = "aarch64")]
            {
                aarch64::run(&handle.spec, &handle.metadata, window, passes)?
            }
            #[cfg(not(target_arch = "aarch64"))]
            {
                return Err(KernelError::ExtensionUnsupported(
                    handle.spec.isa_extension.as_str(),
                ));
            }
        }
    };
    Ok(ChecksumToken(value))
}
