//! Randomized invariants. Where the acceptance suite checks fixed oracles,
//! these properties let proptest hunt for inputs that break the rules the
//! rest of the system leans on: exact pattern cancellation, monotone cost
//! models, the slowest-thread bounds, and lossless round-trips of the file
//! formats and kernel ids.

use proptest::prelude::*;

use membench::analysis;
use membench::cli::parse_size;
use membench::engine::aggregate_worker_totals;
use membench::kernels::{list_kernels, KernelMetadata, KernelSpec};
use membench::memory::{
    allocate, initialize_denormal_safe, pattern_value_admissible, verify_pattern, BufferRequest,
};
use membench::output::format_sig;
use membench::topology::MachineSpec;
use membench::virtual_platform::{virtual_execute, Plateau, VirtualSchedule};

/// Pattern values across the full admissible magnitude range, both signs.
fn admissible_x() -> impl Strategy<Value = f64> {
    (any::<bool>(), 1.0f64..2.0, -500i32..500)
        .prop_map(|(negative, mantissa, exp)| {
            let sign = if negative { -1.0 } else { 1.0 };
            sign * mantissa * (2.0f64).powi(exp)
        })
        .prop_filter("x and 1/x must both be admissible", |x| {
            pattern_value_admissible(*x) && pattern_value_admissible(1.0 / x)
        })
}

/// A validated schedule: strictly increasing plateau bounds (last unbounded),
/// non-decreasing ticks per byte.
fn schedule() -> impl Strategy<Value = VirtualSchedule> {
    let steps = prop::collection::vec((1u64..1 << 30, 1e-3f64..1.0), 1..5);
    (1e6f64..1e12, steps).prop_map(|(hz, steps)| {
        let mut bound = 0u64;
        let mut cost = 0.0f64;
        let mut plateaus = Vec::new();
        for (extent, increment) in steps {
            bound = bound.saturating_add(extent);
            cost += increment;
            plateaus.push(Plateau {
                max_working_set_bytes: bound,
                ticks_per_byte: cost,
            });
        }
        plateaus.last_mut().unwrap().max_working_set_bytes = u64::MAX;
        let schedule = VirtualSchedule {
            plateaus,
            per_worker_jitter: 0.0,
            tick_frequency_hz: hz,
            read_overhead_ticks: 0,
            worker_scale: Vec::new(),
            vector_bytes: None,
        };
        schedule.validate().expect("constructed to satisfy validation");
        schedule
    })
}

proptest! {
    // Initialization must hold its shape for any admissible value: normals
    // only, exact pair cancellation, and a verify pass that agrees.
    #[test]
    fn pattern_survives_any_admissible_value(x in admissible_x()) {
        let mut buffer = allocate(&BufferRequest::new(512)).unwrap();
        initialize_denormal_safe(&mut buffer, x).unwrap();
        verify_pattern(&buffer, x).unwrap();
        for quad in buffer.as_slice().chunks_exact(4) {
            prop_assert!(quad.iter().all(|v| v.is_normal()));
            prop_assert_eq!(quad[0] + quad[2], 0.0);
            prop_assert_eq!(quad[1] + quad[3], 0.0);
        }
    }

    // Corrupting any single element must be caught at its index.
    #[test]
    fn pattern_verification_pinpoints_corruption(
        x in admissible_x(),
        index in 0usize..64,
    ) {
        let mut buffer = allocate(&BufferRequest::new(512)).unwrap();
        initialize_denormal_safe(&mut buffer, x).unwrap();
        let original = buffer.as_slice()[index];
        buffer.as_mut_slice()[index] = original * 0.5;
        let err = verify_pattern(&buffer, x).unwrap_err();
        prop_assert!(
            format!("{err}").contains(&format!("element {index}:")),
            "error did not name element {index}: {err}"
        );
    }

    // Every catalog kernel's id is parseable back to the same spec, and its
    // metadata keeps the bytes/loads/stride identities at any vector width.
    #[test]
    fn kernel_ids_and_metadata_are_consistent(
        which in any::<prop::sample::Index>(),
        vector_bytes in prop::sample::select(vec![16u32, 32, 64]),
        granules in 1usize..64,
    ) {
        let catalog = list_kernels();
        let spec = catalog[which.index(catalog.len())].spec;
        prop_assert_eq!(KernelSpec::parse_id(&spec.id()).unwrap(), spec);

        let md = KernelMetadata::for_spec(&spec, vector_bytes).unwrap();
        prop_assert_eq!(
            md.bytes_per_iteration,
            md.loads_per_iteration * u32::from(spec.registers_per_load) * vector_bytes
        );
        prop_assert_eq!(md.stride_bytes, md.bytes_per_iteration);
        prop_assert_eq!(md.granule_bytes % 64, 0);

        // A window of whole granules is consumed exactly, no remainder.
        let window = md.granule_bytes as usize * granules;
        let iterations = md.iterations_for(window);
        prop_assert_eq!(iterations * u64::from(md.stride_bytes), window as u64);
    }

    // More working set never gets cheaper per byte, so modeled bandwidth
    // never rises with size.
    #[test]
    fn schedules_cost_monotonically(s in schedule(), a in any::<u64>(), b in any::<u64>()) {
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(s.ticks_per_byte(small) <= s.ticks_per_byte(large));
        prop_assert!(s.bandwidth_gbps(small) >= s.bandwidth_gbps(large));
    }

    // The simulated cost of a measurement is deterministic and monotone in
    // the amount of traffic, jitter and all.
    #[test]
    fn simulated_cost_is_deterministic_and_monotone(
        ticks_per_byte in 1e-3f64..100.0,
        jitter in 0.0f64..0.5,
        seed in any::<u64>(),
        worker in 0usize..16,
        repetition in 0u32..1000,
        a in 1u64..1 << 40,
        b in 1u64..1 << 40,
    ) {
        let mut s = VirtualSchedule::flat(1e9, ticks_per_byte);
        s.per_worker_jitter = jitter;
        let (small, large) = if a <= b { (a, b) } else { (b, a) };
        let t_small = virtual_execute(&s, small, small, seed, worker, repetition);
        let t_large = virtual_execute(&s, large, large, seed, worker, repetition);
        prop_assert_eq!(t_small, virtual_execute(&s, small, small, seed, worker, repetition));
        prop_assert!(t_small <= t_large);
    }

    // Aggregation bounds: the combined rate never beats the sum of the
    // workers' own rates, and never drops below what the slowest worker
    // managed alone.
    #[test]
    fn aggregate_bandwidth_is_bounded_by_workers(
        totals in prop::collection::vec((1u64..1 << 40, 1u64..1 << 30), 1..64),
    ) {
        let (bytes, ticks) = aggregate_worker_totals(&totals);
        let expected: u64 = totals.iter().map(|(b, _)| *b).sum();
        prop_assert_eq!(bytes, expected);
        prop_assert_eq!(ticks, totals.iter().map(|(_, t)| *t).max().unwrap());

        let aggregate = bytes as f64 / ticks as f64;
        let sum_of_rates: f64 = totals.iter().map(|(b, t)| *b as f64 / *t as f64).sum();
        let slowest = totals.iter().max_by_key(|(_, t)| *t).unwrap();
        prop_assert!(aggregate <= sum_of_rates * (1.0 + 1e-12));
        prop_assert!(aggregate >= (slowest.0 as f64 / slowest.1 as f64) * (1.0 - 1e-12));
    }

    // Six significant digits means a relative error below 5e-6, and
    // re-formatting the parsed value reproduces the same string (the
    // rendering is a fixpoint, so published numbers are stable).
    #[test]
    fn significant_digit_rendering_round_trips(
        mantissa in -1.0f64..1.0,
        exp in -30i32..30,
    ) {
        let value = mantissa * (10.0f64).powi(exp);
        let text = format_sig(value, 6);
        let parsed: f64 = text.parse().unwrap();
        let tolerance = 5e-6 * value.abs() + f64::MIN_POSITIVE;
        prop_assert!(
            (parsed - value).abs() <= tolerance,
            "{value} -> {text} -> {parsed}"
        );
        prop_assert_eq!(&format_sig(parsed, 6), &text);
    }

    // Size suffixes are binary and insensitive to `_` separators.
    #[test]
    fn size_suffixes_are_powers_of_1024(n in 0u64..1 << 40) {
        prop_assert_eq!(parse_size(&format!("{n}")).unwrap(), n);
        prop_assert_eq!(parse_size(&format!("{n}K")).unwrap(), n * 1024);
        prop_assert_eq!(parse_size(&format!("{n}M")).unwrap(), n * 1024 * 1024);
        if n < 1 << 33 {
            prop_assert_eq!(parse_size(&format!("{n}G")).unwrap(), n << 30);
        }
        let grouped: String = n
            .to_string()
            .chars()
            .flat_map(|c| [c, '_'])
            .collect();
        prop_assert_eq!(parse_size(grouped.trim_end_matches('_')).unwrap(), n);
    }

    // A flat curve has no knees to find, however long it is.
    #[test]
    fn flat_curves_have_no_knees(
        value in 1e-3f64..1e3,
        count in 8usize..64,
    ) {
        let series: Vec<(u64, f64)> = (0..count)
            .map(|k| (1024u64 << k.min(50), value))
            .collect();
        prop_assert!(analysis::detect_knees(&series, None).unwrap().is_empty());
    }

    // Statistics basics that the reporting layer assumes: the running mean
    // ends at the plain mean and every prefix mean stays inside the data's
    // range (allowing accumulation dust).
    #[test]
    fn running_means_stay_in_range(
        series in prop::collection::vec(-1e9f64..1e9, 1..256),
    ) {
        let running = analysis::cumulative_mean(&series).unwrap();
        prop_assert_eq!(*running.last().unwrap(), analysis::mean(&series));
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-9 * (hi - lo).abs().max(1.0);
        for m in running {
            prop_assert!(m >= lo - slack && m <= hi + slack);
        }
    }

    // measured/peak is reported as-is — above-peak values flow through so
    // callers can flag them, and only a non-positive peak errors out.
    #[test]
    fn efficiency_is_a_plain_ratio(measured in 0.0f64..1e6, peak in 1e-6f64..1e6) {
        prop_assert_eq!(analysis::efficiency(measured, peak).unwrap(), measured / peak);
        prop_assert!(analysis::efficiency(measured, 0.0).is_err());
        prop_assert!(analysis::efficiency(measured, -peak).is_err());
    }

    // Schedules survive a write/parse cycle byte-for-value.
    #[test]
    fn schedule_files_round_trip(s in schedule(), jitter in 0.0f64..0.9) {
        let mut original = s;
        original.per_worker_jitter = jitter;
        original.read_overhead_ticks = 7;
        original.worker_scale = vec![1.0, 1.25];
        original.vector_bytes = Some(32);
        let reparsed = VirtualSchedule::parse(&original.to_file_format()).unwrap();
        prop_assert_eq!(reparsed, original);
    }
}

// Machine-spec files also round-trip; exercised on the builtins, whose
// contents cover every field the grammar supports.
#[test]
fn builtin_machine_files_round_trip() {
    for spec in membench::topology::builtin_specs() {
        let reparsed = MachineSpec::parse(&spec.to_file_format()).unwrap();
        assert_eq!(reparsed.nominal_frequency_hz, spec.nominal_frequency_hz);
        assert_eq!(reparsed.sockets, spec.sockets);
        assert_eq!(reparsed.cores, spec.cores);
        assert_eq!(reparsed.cache_levels, spec.cache_levels);
        assert_eq!(reparsed.dram_peak_gbps_per_socket, spec.dram_peak_gbps_per_socket);
        reparsed.validate().unwrap();
    }
}
