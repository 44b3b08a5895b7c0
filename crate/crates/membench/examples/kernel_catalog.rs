//! Every load kernel the suite knows, with its geometry at this host's
//! vector width and whether it can actually run here.
//!
//!     cargo run --example kernel_catalog

use membench::kernels::{discover_vector_length, list_kernels, KernelMetadata};

fn main() {
    println!(
        "{:<26} {:>5} {:>7} {:>9} {:>8} {:>8}  available",
        "kernel", "loads", "B/iter", "stride", "cursors", "granule"
    );
    for entry in list_kernels() {
        // Unavailable extensions still describe themselves: metadata uses a
        // stand-in vector width so geometry is inspectable anywhere.
        let vector_bytes = discover_vector_length(entry.spec.isa_extension).unwrap_or(16);
        let md = KernelMetadata::for_spec(&entry.spec, vector_bytes).expect("catalog is valid");
        println!(
            "{:<26} {:>5} {:>7} {:>9} {:>8} {:>8}  {}",
            entry.spec.id(),
            md.loads_per_iteration,
            md.bytes_per_iteration,
            md.stride_bytes,
            md.cursor_count,
            md.granule_bytes,
            if entry.available { "yes" } else { "no (foreign ISA)" },
        );
    }
}
