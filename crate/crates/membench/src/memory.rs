//! Measurement buffers: aligned, hugepage-aware, NUMA-placed, and filled
//! with a denormal-safe value pattern.
//!
//! # The fill pattern
//!
//! Buffers are filled with the repeating quadruple `[x, 1/x, -x, -1/x]`.
//! This shape is load-bearing in three ways:
//!
//! * every element is a *normal* f64, so FADD in the measurement loop can
//!   never hit subnormal-assist microcode and distort timing;
//! * each accumulator lane sees the same pattern slot every iteration, so
//!   accumulators grow linearly instead of overflowing or collapsing;
//! * paired with its negation, each quadruple sums to exactly 0.0 in the
//!   association `(x + -x) + (1/x + -1/x)`, which gives checksum tests an
//!   exact expected value instead of a tolerance.
//!
//! `x` is admissible when it is finite, non-zero, and `2^-500 ≤ |x| ≤ 2^500`;
//! that head-room guarantees `1/x` is normal too. The default is `x = 4.0`,
//! giving `[4.0, 0.25, -4.0, -0.25]`.
//!
//! # Placement controls
//!
//! Alignment, hugepage policy, and NUMA node are all best-effort with loud
//! degradation: anything the host refuses is recorded as a warning on the
//! buffer (and from there into every output record), never silently ignored.

use std::ptr::NonNull;

use thiserror::Error;

/// Smallest and largest admissible magnitude for the pattern value.
pub const MIN_PATTERN_MAGNITUDE_EXP: i32 = -500;
pub const MAX_PATTERN_MAGNITUDE_EXP: i32 = 500;

/// Default pattern value.
pub const DEFAULT_PATTERN_X: f64 = 4.0;

/// Minimum supported buffer alignment.
pub const MIN_ALIGNMENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HugepagePolicy {
    /// Ask the kernel to back the region with transparent huge pages.
    Transparent,
    /// Demand explicit huge pages (`MAP_HUGETLB`); falls back to
    /// `Transparent` with a warning when the host has no hugetlb pool.
    Explicit,
    /// Actively opt out of huge pages.
    Forbid,
}

impl HugepagePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            HugepagePolicy::Transparent => "transparent",
            HugepagePolicy::Explicit => "explicit",
            HugepagePolicy::Forbid => "forbid",
        }
    }

    pub fn parse(s: &str) -> Option<HugepagePolicy> {
        match s {
            "transparent" => Some(HugepagePolicy::Transparent),
            "explicit" => Some(HugepagePolicy::Explicit),
            "forbid" => Some(HugepagePolicy::Forbid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PageKind {
    Base,
    Huge,
    Unknown,
}

/// What the caller wants allocated.
#[derive(Debug, Clone)]
pub struct BufferRequest {
    /// Bytes; must be positive and a multiple of one 32-byte pattern quadruple.
    pub size_bytes: usize,
    /// Power of two, at least [`MIN_ALIGNMENT`].
    pub alignment: usize,
    pub hugepage_policy: HugepagePolicy,
    /// Preferred NUMA node for first-touch placement.
    pub numa_node: Option<u32>,
}

impl BufferRequest {
    pub fn new(size_bytes: usize) -> Self {
        BufferRequest {
            size_bytes,
            alignment: 4096,
            hugepage_policy: HugepagePolicy::Transparent,
            numa_node: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("alignment {0} is invalid: must be a power of two >= {MIN_ALIGNMENT}")]
    InvalidAlignment(usize),
    #[error("size {0} is invalid: must be positive and a multiple of 32 bytes")]
    InvalidSize(usize),
    #[error("allocation of {size} bytes failed: {reason}")]
    AllocationFailure { size: usize, reason: String },
    #[error(
        "pattern value {0:e} is out of range: |x| must lie in [2^{MIN_PATTERN_MAGNITUDE_EXP}, 2^{MAX_PATTERN_MAGNITUDE_EXP}] and be finite and non-zero"
    )]
    PatternValueOutOfRange(f64),
    #[error("pattern mismatch at element {index}: expected {expected:e}, found {found:e}")]
    PatternMismatch {
        index: usize,
        expected: f64,
        found: f64,
    },
}

/// The quadruple written for pattern value `x`.
#[inline]
pub fn quadruple(x: f64) -> [f64; 4] {
    [x, 1.0 / x, -x, -(1.0 / x)]
}

/// Checks the admissibility window for a pattern value.
pub fn pattern_value_admissible(x: f64) -> bool {
    let lo = (2.0f64).powi(MIN_PATTERN_MAGNITUDE_EXP);
    let hi = (2.0f64).powi(MAX_PATTERN_MAGNITUDE_EXP);
    x.is_finite() && x != 0.0 && (lo..=hi).contains(&x.abs())
}

// ---------------------------------------------------------------------------
// Buffer
// ---------------------------------------------------------------------------

enum Region {
    #[cfg(target_os = "linux")]
    Mmap { base: *mut u8, mapped_len: usize },
    #[cfg(not(target_os = "linux"))]
    Alloc { layout: std::alloc::Layout },
}

/// An owned, aligned measurement region.
pub struct MeasurementBuffer {
    data: NonNull<u8>,
    len: usize,
    region: Region,
    page_kind: PageKind,
    numa_node: Option<u32>,
    warnings: Vec<String>,
}

// The buffer is a plain byte region; it is moved wholesale into a worker
// thread and never aliased mutably across threads.
unsafe impl Send for MeasurementBuffer {}
unsafe impl Sync for MeasurementBuffer {}

impl std::fmt::Debug for MeasurementBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementBuffer")
            .field("len", &self.len)
            .field("addr", &self.data.as_ptr())
            .field("page_kind", &self.page_kind)
            .field("numa_node", &self.numa_node)
            .field("warnings", &self.warnings)
            .finish()
    }
}

impl MeasurementBuffer {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        unsafe { std::slice::from_raw_parts(self.data.as_ptr().cast::<f64>(), self.len / 8) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        unsafe { std::slice::from_raw_parts_mut(self.data.as_ptr().cast::<f64>(), self.len / 8) }
    }

    pub fn as_ptr(&self) -> *const u8 {
        self.data.as_ptr()
    }

    /// Best-effort observation of the page size actually backing the region.
    pub fn page_kind(&self) -> PageKind {
        self.page_kind
    }

    /// NUMA node the buffer was first-touched on, when one was requested and
    /// binding succeeded.
    pub fn numa_node(&self) -> Option<u32> {
        self.numa_node
    }

    /// Everything that did not go exactly as requested.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn push_warning(&mut self, code: &str) {
        if !self.warnings.iter().any(|w| w == code) {
            self.warnings.push(code.to_string());
        }
    }
}

impl Drop for MeasurementBuffer {
    fn drop(&mut self) {
        match self.region {
            #[cfg(target_os = "linux")]
            Region::Mmap { base, mapped_len } => unsafe {
                libc::munmap(base.cast(), mapped_len);
            },
            #[cfg(not(target_os = "linux"))]
            Region::Alloc { layout } => unsafe {
                std::alloc::dealloc(self.data.as_ptr(), layout);
            },
        }
    }
}

/// Allocates a region per the request.
///
/// Degradations (hugetlb pool empty, NUMA node unusable, THP advice
/// rejected) downgrade to the nearest working configuration and leave a
/// warning code on the returned buffer.
pub fn allocate(request: &BufferRequest) -> Result<MeasurementBuffer, MemoryError> {
    if !request.alignment.is_power_of_two() || request.alignment < MIN_ALIGNMENT {
        return Err(MemoryError::InvalidAlignment(request.alignment));
    }
    if request.size_bytes == 0 || request.size_bytes % 32 != 0 {
        return Err(MemoryError::InvalidSize(request.size_bytes));
    }

    let mut buffer = allocate_region(request)?;

    if let Some(node) = request.numa_node {
        match first_touch_on_node(&mut buffer, node) {
            Ok(()) => buffer.numa_node = Some(node),
            Err(_) => buffer.push_warning("numa_unavailable"),
        }
        // Pages are committed now; see what actually backs them.
        buffer.page_kind = probe_page_kind(&buffer);
    }

    Ok(buffer)
}

/// Fills the buffer with the `[x, 1/x, -x, -1/x]` pattern.
///
/// This doubles as first-touch placement: when no NUMA node was requested,
/// calling this from the thread that will run the kernel puts the pages on
/// that thread's local node.
pub fn initialize_denormal_safe(buffer: &mut MeasurementBuffer, x: f64) -> Result<(), MemoryError> {
    if !pattern_value_admissible(x) {
        return Err(MemoryError::PatternValueOutOfRange(x));
    }
    let quad = quadruple(x);
    for chunk in buffer.as_mut_slice().chunks_exact_mut(4) {
        chunk.copy_from_slice(&quad);
    }
    if buffer.page_kind == PageKind::Unknown {
        buffer.page_kind = probe_page_kind(buffer);
    }
    Ok(())
}

/// Bit-exact check that the buffer still holds the pattern for `x`.
pub fn verify_pattern(buffer: &MeasurementBuffer, x: f64) -> Result<(), MemoryError> {
    if !pattern_value_admissible(x) {
        return Err(MemoryError::PatternValueOutOfRange(x));
    }
    let quad = quadruple(x);
    for (index, &found) in buffer.as_slice().iter().enumerate() {
        let expected = quad[index % 4];
        if found.to_bits() != expected.to_bits() {
            return Err(MemoryError::PatternMismatch {
                index,
                expected,
                found,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Platform plumbing
// ---------------------------------------------------------------------------

#[cfg(target_os = "linux")]
fn allocate_region(request: &BufferRequest) -> Result<MeasurementBuffer, MemoryError> {
    let mut warnings = Vec::new();
    let mut page_kind = PageKind::Unknown;

    if request.hugepage_policy == HugepagePolicy::Explicit {
        // Explicit huge pages need a length rounded to the huge page size.
        const HUGE_2M: usize = 2 << 20;
        let mapped_len = request.size_bytes.div_ceil(HUGE_2M) * HUGE_2M;
        let ptr = unsafe {
            libc::mmap(
                std::ptr::null_mut(),
                mapped_len,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_PRIVATE | libc::MAP_ANONYMOUS | libc::MAP_HUGETLB,
                -1,
                0,
            )
        };
        if ptr != libc::MAP_FAILED {
            // Huge pages are 2 MiB aligned, which satisfies any alignment
            // this crate accepts below that; larger requests fall through.
            if request.alignment <= HUGE_2M {
                return Ok(MeasurementBuffer {
                    data: NonNull::new(ptr.cast::<u8>()).unwrap(),
                    len: request.size_bytes,
                    region: Region::Mmap {
                        base: ptr.cast(),
                        mapped_len,
                    },
                    page_kind: PageKind::Huge,
                    numa_node: None,
                    warnings,
                });
            }
            unsafe { libc::munmap(ptr, mapped_len) };
        }
        warnings.push("hugepage_fallback".to_string());
    }

    // Normal path: anonymous mapping with enough slack to align by hand.
    let slack = request.alignment.saturating_sub(4096);
    let mapped_len = request.size_bytes + slack;
    let ptr = unsafe {
        libc::mmap(
            std::ptr::null_mut(),
            mapped_len,
            libc::PROT_READ | libc::PROT_WRITE,
            libc::MAP_PRIVATE | libc::MAP_ANONYMOUS,
            -1,
            0,
        )
    };
    if ptr == libc::MAP_FAILED {
        return Err(MemoryError::AllocationFailure {
            size: mapped_len,
            reason: std::io::Error::last_os_error().to_string(),
        });
    }
    let base = ptr.cast::<u8>();
    let misalign = (base as usize) % request.alignment;
    let data = if misalign == 0 {
        base
    } else {
        unsafe { base.add(request.alignment - misalign) }
    };

    let advice = match request.hugepage_policy {
        HugepagePolicy::Forbid => Some(libc::MADV_NOHUGEPAGE),
        _ => Some(libc::MADV_HUGEPAGE),
    };
    if let Some(advice) = advice {
        let rc = unsafe { libc::madvise(ptr, mapped_len, advice) };
        if rc != 0 && request.hugepage_policy != HugepagePolicy::Forbid {
            warnings.push("thp_advice_rejected".to_string());
        }
    }
    if request.hugepage_policy == HugepagePolicy::Forbid {
        page_kind = PageKind::Base;
    }

    Ok(MeasurementBuffer {
        data: NonNull::new(data).unwrap(),
        len: request.size_bytes,
        region: Region::Mmap {
            base: ptr.cast(),
            mapped_len,
        },
        page_kind,
        numa_node: None,
        warnings,
    })
}

#[cfg(not(target_os = "linux"))]
fn allocate_region(request: &BufferRequest) -> Result<MeasurementBuffer, MemoryError> {
    let mut warnings = Vec::new();
    if request.hugepage_policy != HugepagePolicy::Forbid {
        warnings.push("hugepage_fallback".to_string());
    }
    let layout = std::alloc::Layout::from_size_align(request.size_bytes, request.alignment)
        .map_err(|_| MemoryError::InvalidAlignment(request.alignment))?;
    let ptr = unsafe { std::alloc::alloc_zeroed(layout) };
    let data = NonNull::new(ptr).ok_or(MemoryError::AllocationFailure {
        size: request.size_bytes,
        reason: "allocator returned null".to_string(),
    })?;
    Ok(MeasurementBuffer {
        data,
        len: request.size_bytes,
        region: Region::Alloc { layout },
        page_kind: PageKind::Unknown,
        numa_node: None,
        warnings,
    })
}

/// Touches one byte per page from a thread bound to the node's CPUs, fixing
/// first-touch placement on that node.
fn first_touch_on_node(buffer: &mut MeasurementBuffer, node: u32) -> Result<(), String> {
    let cpulist_path = format!("/sys/devices/system/node/node{node}/cpulist");
    let text = std::fs::read_to_string(&cpulist_path).map_err(|e| e.to_string())?;
    let cpus = crate::affinity::parse_cpu_list(&text)?;

    let addr = buffer.data.as_ptr() as usize;
    let len = buffer.len;
    std::thread::scope(|scope| {
        scope
            .spawn(move || -> Result<(), String> {
                crate::affinity::pin_current_thread(&cpus)?;
                let ptr = addr as *mut u8;
                let mut offset = 0;
                while offset < len {
                    unsafe { ptr.add(offset).write_volatile(0) };
                    offset += 4096;
                }
                Ok(())
            })
            .join()
            .map_err(|_| "first-touch thread panicked".to_string())?
    })
}

/// Reads `/proc/self/smaps` to see whether the mapping holding the buffer is
/// currently backed by huge pages. Purely observational.
#[cfg(target_os = "linux")]
fn probe_page_kind(buffer: &MeasurementBuffer) -> PageKind {
    let Ok(smaps) = std::fs::read_to_string("/proc/self/smaps") else {
        return PageKind::Unknown;
    };
    let addr = buffer.data.as_ptr() as usize;
    let mut in_region = false;
    for line in smaps.lines() {
        if let Some((range, _)) = line.split_once(' ') {
            if let Some((start, end)) = range.split_once('-') {
                if let (Ok(start), Ok(end)) = (
                    usize::from_str_radix(start, 16),
                    usize::from_str_radix(end, 16),
                ) {
                    in_region = start <= addr && addr < end;
                    continue;
                }
            }
        }
        if !in_region {
            continue;
        }
        for field in ["AnonHugePages:", "KernelPageSize:"] {
            if let Some(rest) = line.strip_prefix(field) {
                let kb: u64 = rest
                    .trim()
                    .trim_end_matches("kB")
                    .trim()
                    .parse()
                    .unwrap_or(0);
                match field {
                    "AnonHugePages:" if kb > 0 => return PageKind::Huge,
                    "KernelPageSize:" if kb > 4 => return PageKind::Huge,
                    "KernelPageSize:" => return PageKind::Base,
                    _ => {}
                }
            }
        }
    }
    PageKind::Unknown
}

#[cfg(not(target_os = "linux"))]
fn probe_page_kind(_buffer: &MeasurementBuffer) -> PageKind {
    PageKind::Unknown
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_request() -> BufferRequest {
        BufferRequest::new(4096)
    }

    #[test]
    fn default_pattern_quadruple() {
        assert_eq!(quadruple(DEFAULT_PATTERN_X), [4.0, 0.25, -4.0, -0.25]);
    }

    #[test]
    fn quadruple_sums_to_exact_zero_in_paired_association() {
        for &x in &[3.0, 4.0, 1.0, 0.1, -7.5, (2.0f64).powi(-500), (2.0f64).powi(500)] {
            let [a, b, c, d] = quadruple(x);
            assert_eq!((a + c) + (b + d), 0.0, "x = {x}");
        }
    }

    #[test]
    fn admissibility_window() {
        assert!(pattern_value_admissible(4.0));
        assert!(pattern_value_admissible(-4.0));
        assert!(pattern_value_admissible((2.0f64).powi(-500)));
        assert!(pattern_value_admissible((2.0f64).powi(500)));
        assert!(!pattern_value_admissible((2.0f64).powi(-520)));
        assert!(!pattern_value_admissible((2.0f64).powi(501)));
        assert!(!pattern_value_admissible(0.0));
        assert!(!pattern_value_admissible(f64::NAN));
        assert!(!pattern_value_admissible(f64::INFINITY));
    }

    #[test]
    fn out_of_range_pattern_is_rejected() {
        let mut buf = allocate(&small_request()).unwrap();
        let err = initialize_denormal_safe(&mut buf, (2.0f64).powi(-520)).unwrap_err();
        assert!(matches!(err, MemoryError::PatternValueOutOfRange(_)));
    }

    #[test]
    fn fill_then_verify_roundtrip() {
        let mut buf = allocate(&small_request()).unwrap();
        initialize_denormal_safe(&mut buf, 3.0).unwrap();
        verify_pattern(&buf, 3.0).unwrap();
        // Every element must be a normal float.
        for &v in buf.as_slice() {
            assert!(v.is_normal(), "{v} is not normal");
        }
    }

    #[test]
    fn verify_detects_corruption() {
        let mut buf = allocate(&small_request()).unwrap();
        initialize_denormal_safe(&mut buf, 3.0).unwrap();
        buf.as_mut_slice()[17] = 42.0;
        match verify_pattern(&buf, 3.0) {
            Err(MemoryError::PatternMismatch { index: 17, .. }) => {}
            other => panic!("expected mismatch at 17, got {other:?}"),
        }
    }

    #[test]
    fn alignment_is_honored() {
        for align in [64usize, 256, 4096, 1 << 20] {
            let mut request = small_request();
            request.alignment = align;
            let buf = allocate(&request).unwrap();
            assert_eq!(buf.as_ptr() as usize % align, 0, "alignment {align}");
        }
    }

    #[test]
    fn bad_requests_are_rejected() {
        let mut r = small_request();
        r.alignment = 48;
        assert!(matches!(allocate(&r), Err(MemoryError::InvalidAlignment(48))));
        let mut r = small_request();
        r.alignment = 128;
        r.size_bytes = 40; // not a multiple of 32
        assert!(matches!(allocate(&r), Err(MemoryError::InvalidSize(40))));
        r.size_bytes = 0;
        assert!(matches!(allocate(&r), Err(MemoryError::InvalidSize(0))));
    }

    #[test]
    fn explicit_hugepages_fall_back_loudly() {
        let mut request = small_request();
        request.hugepage_policy = HugepagePolicy::Explicit;
        let buf = allocate(&request).unwrap();
        // Either the host had a hugetlb pool and we got huge pages, or the
        // allocation degraded and said so. Silence is the only failure.
        if buf.page_kind() != PageKind::Huge {
            assert!(
                buf.warnings().iter().any(|w| w == "hugepage_fallback"),
                "fallback must leave a warning, got {:?}",
                buf.warnings()
            );
        }
    }

    #[test]
    fn bogus_numa_node_degrades_with_warning() {
        let mut request = small_request();
        request.numa_node = Some(unimaginable_node());
        let buf = allocate(&request).unwrap();
        assert!(buf.warnings().iter().any(|w| w == "numa_unavailable"));
        assert_eq!(buf.numa_node(), None);
    }

    fn unimaginable_node() -> u32 {
        9999
    }
}
