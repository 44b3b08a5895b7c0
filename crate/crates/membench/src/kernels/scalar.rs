//! Portable scalar backend.
//!
//! This exists so the full pipeline — allocation, sweep, statistics,
//! reporting — runs on any host, not to produce publishable bandwidth
//! numbers. It mirrors the vector kernels' shape (eight loaded values per
//! iteration, eight accumulators for the `fadd` mix) but leaves instruction
//! selection to the compiler, so results carry the `non_authoritative`
//! marker downstream.
//!
//! Elision control differs by mix:
//! * `fadd` — the accumulators are data sinks for every load and are passed
//!   through `black_box` once per pass;
//! * `load`/`nop` — nothing consumes the values, so the loads are issued
//!   with `read_volatile`, which the optimizer may not remove or merge.

use super::InstructionMix;

pub(super) fn run(mix: InstructionMix, window: &[f64], passes: u32) -> f64 {
    match mix {
        InstructionMix::ArithFadd => run_fadd(window, passes),
        InstructionMix::NopSubstituted => run_loads(window, passes, true),
        InstructionMix::LoadOnly => run_loads(window, passes, false),
    }
}

fn run_fadd(window: &[f64], passes: u32) -> f64 {
    let mut acc = [0.0f64; 8];
    for _ in 0..passes {
        for chunk in window.chunks_exact(8) {
            for lane in 0..8 {
                acc[lane] += chunk[lane];
            }
        }
        acc = std::hint::black_box(acc);
    }
    // Checksum reduction: left-to-right over the lanes. Keep in sync with
    // `brute_force_fadd`, which re-derives this value independently.
    acc.iter().sum()
}

fn run_loads(window: &[f64], passes: u32, with_nops: bool) -> f64 {
    let mut last = 0.0f64;
    let ptr = window.as_ptr();
    for _ in 0..passes {
        let mut i = 0;
        while i + 8 <= window.len() {
            // Eight volatile loads stand in for one vector iteration; only
            // the last value is kept, the reads themselves cannot be elided.
            unsafe {
                let _ = ptr.add(i).read_volatile();
                let _ = ptr.add(i + 1).read_volatile();
                let _ = ptr.add(i + 2).read_volatile();
                let _ = ptr.add(i + 3).read_volatile();
                let _ = ptr.add(i + 4).read_volatile();
                let _ = ptr.add(i + 5).read_volatile();
                let _ = ptr.add(i + 6).read_volatile();
                last = ptr.add(i + 7).read_volatile();
            }
            if with_nops {
                nop_block();
            }
            i += 8;
        }
    }
    last
}

/// Eight NOPs, one per substituted FADD slot.
#[inline(always)]
fn nop_block() {
    #[cfg(any(target_arch = "x86_64", target_arch = "aarch64"))]
    unsafe {
        core::arch::asm!(
            "nop", "nop", "nop", "nop", "nop", "nop", "nop", "nop",
            options(nomem, nostack, preserves_flags)
        );
    }
}

/// Independent re-computation of the `fadd` checksum: eight lane
/// accumulators filled in window order, then reduced left-to-right.
#[cfg(test)]
pub(super) fn brute_force_fadd(window: &[f64], passes: u32) -> f64 {
    let mut acc = [0.0f64; 8];
    for _ in 0..passes {
        for chunk in window.chunks_exact(8) {
            for lane in 0..8 {
                acc[lane] += chunk[lane];
            }
        }
    }
    let mut total = 0.0;
    for lane in acc {
        total += lane;
    }
    total
}
