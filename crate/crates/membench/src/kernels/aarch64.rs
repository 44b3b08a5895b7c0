//! Hand-written NEON and SVE measurement loops.
//!
//! Register convention, shared by every variant:
//!   v16..v23 / z16..z23 — load targets (eight registers per iteration)
//!   v0..v7   / z0..z7   — accumulators for the `fadd` mix
//!
//! The accumulators are zeroed inside the asm block, reduced pairwise after
//! the loop, and handed back through d0 — so a kernel's checksum is real
//! dataflow the optimizer cannot remove, and loop trips stay free of any
//! Rust-side bookkeeping. Loop control is exactly `subs` + `b.ne` per trip.
//!
//! SVE bodies never mention the vector length: loads scale with `mul vl`
//! offsets and pointers advance with `addvl`, so the same instructions run
//! unmodified on 128- through 2048-bit implementations. Only the Rust-side
//! trip count needs the discovered width.

use super::{AddressingMode, InstructionMix, IsaExtension, KernelError, KernelMetadata, KernelSpec};

/// SVE vector width in bytes, from the element-count increment instruction.
/// Callers must have verified SVE support first.
pub(super) fn sve_vector_bytes() -> u32 {
    #[target_feature(enable = "sve")]
    unsafe fn f64_lanes() -> u64 {
        let mut n: u64 = 0;
        core::arch::asm!("incd {n}", n = inout(reg) n, options(nomem, nostack, preserves_flags));
        n
    }
    (unsafe { f64_lanes() } * 8) as u32
}

// ---------------------------------------------------------------------------
// NEON
// ---------------------------------------------------------------------------

// Each shape arm fixes the load/pointer scaffold; the `$ar` lines splice in
// the instruction mix (8 FADDs, 8 NOPs, or nothing). Manual-increment
// shapes run four cursors offset by one load footprint and advancing by
// four footprints, which breaks the load→address-update dependency chain.
macro_rules! neon_shape {
    // 4 registers per load, manual increment: cursors 256 bytes apart in
    // flight, one loop trip covers two logical iterations (512 bytes shown
    // as 2×256-byte cursor strides).
    ($name:ident, manual_r4 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 256, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut c1 = base.add(64);
                let mut c2 = base.add(128);
                let mut c3 = base.add(192);
                let mut trips = len / 256;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d, v17.2d, v18.2d, v19.2d}}, [{c0}]",
                    "add {c0}, {c0}, #256",
                    "ld1 {{v20.2d, v21.2d, v22.2d, v23.2d}}, [{c1}]",
                    "add {c1}, {c1}, #256",
                    $($ar,)*
                    "ld1 {{v16.2d, v17.2d, v18.2d, v19.2d}}, [{c2}]",
                    "add {c2}, {c2}, #256",
                    "ld1 {{v20.2d, v21.2d, v22.2d, v23.2d}}, [{c3}]",
                    "add {c3}, {c3}, #256",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0, c1 = inout(reg) c1,
                    c2 = inout(reg) c2, c3 = inout(reg) c3,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    // 2 registers per load, manual increment: cursors 32 bytes apart,
    // advancing 128; four loads per trip.
    ($name:ident, manual_r2 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 128, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut c1 = base.add(32);
                let mut c2 = base.add(64);
                let mut c3 = base.add(96);
                let mut trips = len / 128;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d, v17.2d}}, [{c0}]",
                    "add {c0}, {c0}, #128",
                    "ld1 {{v18.2d, v19.2d}}, [{c1}]",
                    "add {c1}, {c1}, #128",
                    "ld1 {{v20.2d, v21.2d}}, [{c2}]",
                    "add {c2}, {c2}, #128",
                    "ld1 {{v22.2d, v23.2d}}, [{c3}]",
                    "add {c3}, {c3}, #128",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0, c1 = inout(reg) c1,
                    c2 = inout(reg) c2, c3 = inout(reg) c3,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    // 1 register per load, manual increment: cursors 16 bytes apart,
    // advancing 64; each cursor is used twice per trip (eight loads).
    ($name:ident, manual_r1 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 128, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut c1 = base.add(16);
                let mut c2 = base.add(32);
                let mut c3 = base.add(48);
                let mut trips = len / 128;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d}}, [{c0}]",
                    "add {c0}, {c0}, #64",
                    "ld1 {{v17.2d}}, [{c1}]",
                    "add {c1}, {c1}, #64",
                    "ld1 {{v18.2d}}, [{c2}]",
                    "add {c2}, {c2}, #64",
                    "ld1 {{v19.2d}}, [{c3}]",
                    "add {c3}, {c3}, #64",
                    "ld1 {{v20.2d}}, [{c0}]",
                    "add {c0}, {c0}, #64",
                    "ld1 {{v21.2d}}, [{c1}]",
                    "add {c1}, {c1}, #64",
                    "ld1 {{v22.2d}}, [{c2}]",
                    "add {c2}, {c2}, #64",
                    "ld1 {{v23.2d}}, [{c3}]",
                    "add {c3}, {c3}, #64",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0, c1 = inout(reg) c1,
                    c2 = inout(reg) c2, c3 = inout(reg) c3,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    // Post-indexed forms: a single cursor, the update folded into each load.
    ($name:ident, post_r4 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 128, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / 128;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d, v17.2d, v18.2d, v19.2d}}, [{c0}], #64",
                    "ld1 {{v20.2d, v21.2d, v22.2d, v23.2d}}, [{c0}], #64",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, post_r2 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 128, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / 128;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d, v17.2d}}, [{c0}], #32",
                    "ld1 {{v18.2d, v19.2d}}, [{c0}], #32",
                    "ld1 {{v20.2d, v21.2d}}, [{c0}], #32",
                    "ld1 {{v22.2d, v23.2d}}, [{c0}], #32",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, post_r1 $(, $ar:literal)*) => {
        unsafe fn $name(base: *const u8, len: usize, passes: u32) -> f64 {
            debug_assert_eq!(len % 128, 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / 128;
                let acc: f64;
                core::arch::asm!(
                    "movi v0.2d, #0", "movi v1.2d, #0", "movi v2.2d, #0", "movi v3.2d, #0",
                    "movi v4.2d, #0", "movi v5.2d, #0", "movi v6.2d, #0", "movi v7.2d, #0",
                    "2:",
                    "ld1 {{v16.2d}}, [{c0}], #16",
                    "ld1 {{v17.2d}}, [{c0}], #16",
                    "ld1 {{v18.2d}}, [{c0}], #16",
                    "ld1 {{v19.2d}}, [{c0}], #16",
                    "ld1 {{v20.2d}}, [{c0}], #16",
                    "ld1 {{v21.2d}}, [{c0}], #16",
                    "ld1 {{v22.2d}}, [{c0}], #16",
                    "ld1 {{v23.2d}}, [{c0}], #16",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd v0.2d, v0.2d, v1.2d",
                    "fadd v2.2d, v2.2d, v3.2d",
                    "fadd v4.2d, v4.2d, v5.2d",
                    "fadd v6.2d, v6.2d, v7.2d",
                    "fadd v0.2d, v0.2d, v2.2d",
                    "fadd v4.2d, v4.2d, v6.2d",
                    "fadd v0.2d, v0.2d, v4.2d",
                    "faddp d0, v0.2d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };
}

macro_rules! neon_mixes {
    ($shape:tt, $fadd:ident, $nop:ident, $load:ident) => {
        neon_shape!(
            $fadd, $shape,
            "fadd v0.2d, v0.2d, v16.2d",
            "fadd v1.2d, v1.2d, v17.2d",
            "fadd v2.2d, v2.2d, v18.2d",
            "fadd v3.2d, v3.2d, v19.2d",
            "fadd v4.2d, v4.2d, v20.2d",
            "fadd v5.2d, v5.2d, v21.2d",
            "fadd v6.2d, v6.2d, v22.2d",
            "fadd v7.2d, v7.2d, v23.2d"
        );
        neon_shape!($nop, $shape, "nop", "nop", "nop", "nop", "nop", "nop", "nop", "nop");
        neon_shape!($load, $shape);
    };
}

neon_mixes!(manual_r4, neon_manual_r4_fadd, neon_manual_r4_nop, neon_manual_r4_load);
neon_mixes!(manual_r2, neon_manual_r2_fadd, neon_manual_r2_nop, neon_manual_r2_load);
neon_mixes!(manual_r1, neon_manual_r1_fadd, neon_manual_r1_nop, neon_manual_r1_load);
neon_mixes!(post_r4, neon_post_r4_fadd, neon_post_r4_nop, neon_post_r4_load);
neon_mixes!(post_r2, neon_post_r2_fadd, neon_post_r2_nop, neon_post_r2_load);
neon_mixes!(post_r1, neon_post_r1_fadd, neon_post_r1_nop, neon_post_r1_load);

// ---------------------------------------------------------------------------
// SVE
// ---------------------------------------------------------------------------

macro_rules! sve_shape {
    ($name:ident, manual_r1 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld1d {{z16.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z17.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z18.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z19.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z20.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z21.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z22.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    "ld1d {{z23.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #1",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, manual_r2 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld2d {{z16.d, z17.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #2",
                    "ld2d {{z18.d, z19.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #2",
                    "ld2d {{z20.d, z21.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #2",
                    "ld2d {{z22.d, z23.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #2",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, manual_r4 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld4d {{z16.d, z17.d, z18.d, z19.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #4",
                    "ld4d {{z20.d, z21.d, z22.d, z23.d}}, p0/z, [{c0}]",
                    "addvl {c0}, {c0}, #4",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    // Offset addressing: loads target `[base, #imm, mul vl]` and a single
    // ADDVL advances the pointer once per iteration.
    ($name:ident, offset_r1 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld1d {{z16.d}}, p0/z, [{c0}]",
                    "ld1d {{z17.d}}, p0/z, [{c0}, #1, mul vl]",
                    "ld1d {{z18.d}}, p0/z, [{c0}, #2, mul vl]",
                    "ld1d {{z19.d}}, p0/z, [{c0}, #3, mul vl]",
                    "ld1d {{z20.d}}, p0/z, [{c0}, #4, mul vl]",
                    "ld1d {{z21.d}}, p0/z, [{c0}, #5, mul vl]",
                    "ld1d {{z22.d}}, p0/z, [{c0}, #6, mul vl]",
                    "ld1d {{z23.d}}, p0/z, [{c0}, #7, mul vl]",
                    "addvl {c0}, {c0}, #8",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, offset_r2 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld2d {{z16.d, z17.d}}, p0/z, [{c0}]",
                    "ld2d {{z18.d, z19.d}}, p0/z, [{c0}, #2, mul vl]",
                    "ld2d {{z20.d, z21.d}}, p0/z, [{c0}, #4, mul vl]",
                    "ld2d {{z22.d, z23.d}}, p0/z, [{c0}, #6, mul vl]",
                    "addvl {c0}, {c0}, #8",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };

    ($name:ident, offset_r4 $(, $ar:literal)*) => {
        #[target_feature(enable = "sve")]
        unsafe fn $name(base: *const u8, len: usize, passes: u32, vl: usize) -> f64 {
            debug_assert_eq!(len % (8 * vl), 0);
            let mut checksum = 0.0f64;
            for _ in 0..passes {
                let mut c0 = base;
                let mut trips = len / (8 * vl);
                let acc: f64;
                core::arch::asm!(
                    "ptrue p0.d",
                    "mov z0.d, #0", "mov z1.d, #0", "mov z2.d, #0", "mov z3.d, #0",
                    "mov z4.d, #0", "mov z5.d, #0", "mov z6.d, #0", "mov z7.d, #0",
                    "2:",
                    "ld4d {{z16.d, z17.d, z18.d, z19.d}}, p0/z, [{c0}]",
                    "ld4d {{z20.d, z21.d, z22.d, z23.d}}, p0/z, [{c0}, #4, mul vl]",
                    "addvl {c0}, {c0}, #8",
                    $($ar,)*
                    "subs {trips}, {trips}, #1",
                    "b.ne 2b",
                    "fadd z0.d, z0.d, z1.d",
                    "fadd z2.d, z2.d, z3.d",
                    "fadd z4.d, z4.d, z5.d",
                    "fadd z6.d, z6.d, z7.d",
                    "fadd z0.d, z0.d, z2.d",
                    "fadd z4.d, z4.d, z6.d",
                    "fadd z0.d, z0.d, z4.d",
                    "faddv d0, p0, z0.d",
                    c0 = inout(reg) c0,
                    trips = inout(reg) trips,
                    lateout("v0") acc,
                    out("v1") _, out("v2") _, out("v3") _, out("v4") _,
                    out("v5") _, out("v6") _, out("v7") _,
                    out("v16") _, out("v17") _, out("v18") _, out("v19") _,
                    out("v20") _, out("v21") _, out("v22") _, out("v23") _,
                    options(nostack, readonly)
                );
                checksum += acc;
            }
            checksum
        }
    };
}

macro_rules! sve_mixes {
    ($shape:tt, $fadd:ident, $nop:ident, $load:ident) => {
        sve_shape!(
            $fadd, $shape,
            "fadd z0.d, z0.d, z16.d",
            "fadd z1.d, z1.d, z17.d",
            "fadd z2.d, z2.d, z18.d",
            "fadd z3.d, z3.d, z19.d",
            "fadd z4.d, z4.d, z20.d",
            "fadd z5.d, z5.d, z21.d",
            "fadd z6.d, z6.d, z22.d",
            "fadd z7.d, z7.d, z23.d"
        );
        sve_shape!($nop, $shape, "nop", "nop", "nop", "nop", "nop", "nop", "nop", "nop");
        sve_shape!($load, $shape);
    };
}

sve_mixes!(manual_r1, sve_manual_r1_fadd, sve_manual_r1_nop, sve_manual_r1_load);
sve_mixes!(manual_r2, sve_manual_r2_fadd, sve_manual_r2_nop, sve_manual_r2_load);
sve_mixes!(manual_r4, sve_manual_r4_fadd, sve_manual_r4_nop, sve_manual_r4_load);
sve_mixes!(offset_r1, sve_offset_r1_fadd, sve_offset_r1_nop, sve_offset_r1_load);
sve_mixes!(offset_r2, sve_offset_r2_fadd, sve_offset_r2_nop, sve_offset_r2_load);
sve_mixes!(offset_r4, sve_offset_r4_fadd, sve_offset_r4_nop, sve_offset_r4_load);

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

pub(super) fn run(
    spec: &KernelSpec,
    metadata: &KernelMetadata,
    window: &[f64],
    passes: u32,
) -> Result<f64, KernelError> {
    use AddressingMode as A;
    use InstructionMix as M;

    let base = window.as_ptr().cast::<u8>();
    let len = window.len() * 8;
    let r = spec.registers_per_load;

    let value = unsafe {
        match spec.isa_extension {
            IsaExtension::Neon => match (spec.addressing_mode, r, spec.instruction_mix) {
                (A::ManualIncrement, 4, M::ArithFadd) => neon_manual_r4_fadd(base, len, passes),
                (A::ManualIncrement, 4, M::NopSubstituted) => neon_manual_r4_nop(base, len, passes),
                (A::ManualIncrement, 4, M::LoadOnly) => neon_manual_r4_load(base, len, passes),
                (A::ManualIncrement, 2, M::ArithFadd) => neon_manual_r2_fadd(base, len, passes),
                (A::ManualIncrement, 2, M::NopSubstituted) => neon_manual_r2_nop(base, len, passes),
                (A::ManualIncrement, 2, M::LoadOnly) => neon_manual_r2_load(base, len, passes),
                (A::ManualIncrement, 1, M::ArithFadd) => neon_manual_r1_fadd(base, len, passes),
                (A::ManualIncrement, 1, M::NopSubstituted) => neon_manual_r1_nop(base, len, passes),
                (A::ManualIncrement, 1, M::LoadOnly) => neon_manual_r1_load(base, len, passes),
                (A::PostIncrement, 4, M::ArithFadd) => neon_post_r4_fadd(base, len, passes),
                (A::PostIncrement, 4, M::NopSubstituted) => neon_post_r4_nop(base, len, passes),
                (A::PostIncrement, 4, M::LoadOnly) => neon_post_r4_load(base, len, passes),
                (A::PostIncrement, 2, M::ArithFadd) => neon_post_r2_fadd(base, len, passes),
                (A::PostIncrement, 2, M::NopSubstituted) => neon_post_r2_nop(base, len, passes),
                (A::PostIncrement, 2, M::LoadOnly) => neon_post_r2_load(base, len, passes),
                (A::PostIncrement, 1, M::ArithFadd) => neon_post_r1_fadd(base, len, passes),
                (A::PostIncrement, 1, M::NopSubstituted) => neon_post_r1_nop(base, len, passes),
                (A::PostIncrement, 1, M::LoadOnly) => neon_post_r1_load(base, len, passes),
                _ => unreachable!("validated spec"),
            },
            IsaExtension::Sve => {
                let vl = metadata.vector_bytes as usize;
                match (spec.addressing_mode, r, spec.instruction_mix) {
                    (A::ManualIncrement, 1, M::ArithFadd) => sve_manual_r1_fadd(base, len, passes, vl),
                    (A::ManualIncrement, 1, M::NopSubstituted) => sve_manual_r1_nop(base, len, passes, vl),
                    (A::ManualIncrement, 1, M::LoadOnly) => sve_manual_r1_load(base, len, passes, vl),
                    (A::ManualIncrement, 2, M::ArithFadd) => sve_manual_r2_fadd(base, len, passes, vl),
                    (A::ManualIncrement, 2, M::NopSubstituted) => sve_manual_r2_nop(base, len, passes, vl),
                    (A::ManualIncrement, 2, M::LoadOnly) => sve_manual_r2_load(base, len, passes, vl),
                    (A::ManualIncrement, 4, M::ArithFadd) => sve_manual_r4_fadd(base, len, passes, vl),
                    (A::ManualIncrement, 4, M::NopSubstituted) => sve_manual_r4_nop(base, len, passes, vl),
                    (A::ManualIncrement, 4, M::LoadOnly) => sve_manual_r4_load(base, len, passes, vl),
                    (A::Offset, 1, M::ArithFadd) => sve_offset_r1_fadd(base, len, passes, vl),
                    (A::Offset, 1, M::NopSubstituted) => sve_offset_r1_nop(base, len, passes, vl),
                    (A::Offset, 1, M::LoadOnly) => sve_offset_r1_load(base, len, passes, vl),
                    (A::Offset, 2, M::ArithFadd) => sve_offset_r2_fadd(base, len, passes, vl),
                    (A::Offset, 2, M::NopSubstituted) => sve_offset_r2_nop(base, len, passes, vl),
                    (A::Offset, 2, M::LoadOnly) => sve_offset_r2_load(base, len, passes, vl),
                    (A::Offset, 4, M::ArithFadd) => sve_offset_r4_fadd(base, len, passes, vl),
                    (A::Offset, 4, M::NopSubstituted) => sve_offset_r4_nop(base, len, passes, vl),
                    (A::Offset, 4, M::LoadOnly) => sve_offset_r4_load(base, len, passes, vl),
                    _ => unreachable!("validated spec"),
                }
            }
            _ => unreachable!("scalar and virtual kernels dispatch elsewhere"),
        }
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::super::*;

    // These only run on AArch64 hosts; the asm above is what they exercise.

    fn pattern_window(x: f64, elements: usize) -> Vec<f64> {
        let quad = crate::memory::quadruple(x);
        (0..elements).map(|i| quad[i % 4]).collect()
    }

    #[test]
    fn neon_fadd_checksums_are_exactly_zero_on_pattern_data() {
        // Lanes cancel pairwise for the quadruple pattern, so a correct
        // kernel returns 0.0 exactly; any misread shows up as a residue.
        let window = pattern_window(4.0, 4096);
        for addr in [AddressingMode::ManualIncrement, AddressingMode::PostIncrement] {
            for regs in [1u8, 2, 4] {
                let spec = KernelSpec::new(IsaExtension::Neon, InstructionMix::ArithFadd, addr, regs);
                let handle = resolve_kernel(&spec).unwrap();
                let sum = execute_kernel(&handle, &window, 3).unwrap();
                assert_eq!(sum.0, 0.0, "{}", spec.id());
            }
        }
    }

    #[test]
    fn neon_variants_agree_on_arbitrary_data() {
        // Different addressing modes and register counts must read exactly
        // the same bytes, so their lane sums agree bit for bit.
        let window: Vec<f64> = (0..2048).map(|i| ((i * 37) % 101) as f64 * 0.25).collect();
        let mut sums = Vec::new();
        for addr in [AddressingMode::ManualIncrement, AddressingMode::PostIncrement] {
            for regs in [1u8, 2, 4] {
                let spec = KernelSpec::new(IsaExtension::Neon, InstructionMix::ArithFadd, addr, regs);
                let handle = resolve_kernel(&spec).unwrap();
                sums.push(execute_kernel(&handle, &window, 1).unwrap().0);
            }
        }
        // All variants accumulate the same multiset of lane values per
        // accumulator index, so every checksum matches the first.
        for (i, s) in sums.iter().enumerate() {
            assert_eq!(*s, sums[0], "variant {i}");
        }
    }

    #[test]
    fn sve_kernels_match_neon_checksums_when_available() {
        if !extension_available(IsaExtension::Sve) {
            return;
        }
        let window = pattern_window(3.0, 8192);
        for addr in [AddressingMode::ManualIncrement, AddressingMode::Offset] {
            for regs in [1u8, 2, 4] {
                let spec = KernelSpec::new(IsaExtension::Sve, InstructionMix::ArithFadd, addr, regs);
                let handle = resolve_kernel(&spec).unwrap();
                let sum = execute_kernel(&handle, &window, 2).unwrap();
                assert_eq!(sum.0, 0.0, "{}", spec.id());
            }
        }
    }

    #[test]
    fn discovered_sve_width_is_sane() {
        if !extension_available(IsaExtension::Sve) {
            return;
        }
        let vb = discover_vector_length(IsaExtension::Sve).unwrap();
        assert!(vb >= 16 && vb <= 256 && vb % 16 == 0, "{vb}");
    }
}
