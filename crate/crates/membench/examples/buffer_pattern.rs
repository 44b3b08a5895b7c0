//! Measurement buffers up close: alignment, page provenance, and the
//! sign-balanced fill that keeps arithmetic kernels off denormals.
//!
//!     cargo run --example buffer_pattern

use membench::memory::{
    allocate, initialize_denormal_safe, quadruple, verify_pattern, BufferRequest, HugepagePolicy,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut request = BufferRequest::new(2 << 20);
    request.hugepage_policy = HugepagePolicy::Transparent;
    let mut buffer = allocate(&request)?;

    println!(
        "{} bytes at {:p} ({:?} pages, numa node {:?})",
        buffer.len(),
        buffer.as_ptr(),
        buffer.page_kind(),
        buffer.numa_node(),
    );
    for warning in buffer.warnings() {
        println!("  note: {warning}");
    }

    // Fill with x = 4: repeating [4, 0.25, -4, -0.25]. Summing any aligned
    // block of the buffer gives exactly zero, so a kernel accumulating it
    // with fadd can run forever without drifting toward infinity or zero.
    let x = 4.0;
    initialize_denormal_safe(&mut buffer, x)?;
    verify_pattern(&buffer, x)?;
    println!("\nfirst quadruple for x = {x}: {:?}", quadruple(x));

    let sum: f64 = buffer.as_slice().iter().sum();
    println!("sum over all {} elements: {sum} (exactly zero)", buffer.as_slice().len());

    let extremes = buffer
        .as_slice()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
    println!("magnitude range: {} ..= {} — all normal numbers", extremes.0, extremes.1);

    // Out-of-range values are rejected before they can poison a run.
    let tiny = (2.0f64).powi(-600);
    println!("\ninitialize with 2^-600: {}", initialize_denormal_safe(&mut buffer, tiny).unwrap_err());
    Ok(())
}
