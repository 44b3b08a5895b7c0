//! End-to-end journeys through the public surface: files in, files out.
//! These stay cheap (virtual platform or tiny real runs) so they can gate
//! every commit; exhaustive per-module behavior lives in the unit tests.

use std::path::{Path, PathBuf};

use membench::cli::{self, Cli};
use membench::engine::{Engine, SweepConfig};
use membench::kernels::KernelSpec;
use membench::topology::MachineSpec;
use membench::virtual_platform::VirtualSchedule;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// A user machine file plus a schedule file, through resolve/execute, out to
/// CSV, JSON, and a plot script on disk — the full artifact set a scripted
/// user consumes.
#[test]
fn files_in_files_out() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("run");
    let cli = Cli {
        kernel: Some("neon/fadd/manual/r4".into()),
        sizes: Some("16K,512K,2M,64M".into()),
        reps: Some(10),
        seed: Some(9),
        machine_spec: Some(data("lab_machine.spec").display().to_string()),
        virtual_schedule: Some(data("golden.vplat")),
        output: Some("json".into()),
        plot: true,
        out: Some(stem.clone()),
        ..Default::default()
    };
    let resolved = cli::resolve(&cli, None).unwrap();
    let artifacts = cli::execute(&resolved).unwrap();
    cli::write_artifacts(&artifacts).unwrap();

    let json = std::fs::read_to_string(stem.with_extension("json")).unwrap();
    let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
    let script = std::fs::read_to_string(stem.with_extension("py")).unwrap();

    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["machine"]["name"], "labbox");
    assert_eq!(doc["machine"]["provenance"], "user_file");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 4);

    // One core against the documented hierarchy: 16 KiB fits L1d (32 KiB),
    // 512 KiB fits L2 (1 MiB), 2 MiB fits the shared L3, 64 MiB spills.
    let annotations: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("kernel_id"))
        .map(|l| l.split(',').nth(8).unwrap())
        .collect();
    assert_eq!(annotations, ["L1d", "L2", "L3", "DRAM"]);

    // L3 documents no peak, so its efficiency cell must be empty while its
    // neighbors' are filled.
    let efficiency: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("kernel_id"))
        .map(|l| l.split(',').nth(7).unwrap())
        .collect();
    assert!(!efficiency[0].is_empty() && !efficiency[1].is_empty() && !efficiency[3].is_empty());
    assert!(efficiency[2].is_empty());

    // The plot script must reference the sibling CSV by name, nothing else.
    assert!(script.contains("run.csv"));
    assert!(script.contains("matplotlib"));
}

/// Jitter produces spread, never irreproducibility: a four-worker noisy
/// sweep reports nonzero stddev yet identical results on every run.
#[test]
fn noisy_multicore_sweeps_reproduce_exactly() {
    let schedule = VirtualSchedule::load(&data("golden.vplat")).unwrap();
    assert!(schedule.per_worker_jitter > 0.0, "fixture must carry jitter");
    let engine = Engine::virtual_platform(
        schedule,
        membench::topology::builtin("a64fx").unwrap(),
    );
    let mut config = SweepConfig::new(KernelSpec::parse_id("neon/load/post/r2").unwrap());
    config.cores = vec![0, 1, 2, 3];
    config.sizes_bytes = vec![8192, 65536, 1 << 20, 1 << 24];
    config.repetitions = 25;
    config.seed = 4242;

    let first = engine.sweep(&config).unwrap();
    let second = engine.sweep(&config).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.core_count, 4);
    for size in &first.sizes {
        assert!(size.stddev_gbps > 0.0, "jitter must show up at {} B", size.size_bytes);
        assert!(size.stddev_gbps < size.mean_gbps * 0.1, "2% jitter cannot explode");
    }
}

/// Loop-overhead subtraction is plumbed from a config file all the way to
/// the reported numbers: with it, every size reads faster, and the choice is
/// recorded in the output.
#[test]
fn overhead_subtraction_flows_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let write_config = |subtract: bool| {
        let path = dir.path().join(format!("sub_{subtract}.conf"));
        std::fs::write(
            &path,
            format!(
                "kernel = neon/fadd/manual/r4\n\
                 sizes = 64K,512K\n\
                 reps = 5\n\
                 seed = 1\n\
                 machine_spec = builtin:a64fx\n\
                 virtual = {}\n\
                 subtract_loop_overhead = {subtract}\n",
                data("golden.vplat").display()
            ),
        )
        .unwrap();
        path
    };

    let run = |subtract: bool| {
        let cli = Cli {
            config: Some(write_config(subtract)),
            ..Default::default()
        };
        let resolved = cli::resolve(&cli, None).unwrap();
        assert_eq!(resolved.config.subtract_loop_overhead, subtract);
        let artifacts = cli::execute(&resolved).unwrap();
        artifacts[0].text.clone()
    };

    let plain = run(false);
    let subtracted = run(true);
    assert!(plain.contains("subtract_loop_overhead=false"));
    assert!(subtracted.contains("subtract_loop_overhead=true"));

    let means = |csv: &str| -> Vec<f64> {
        csv.lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("kernel_id"))
            .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
            .collect()
    };
    for (with, without) in means(&subtracted).iter().zip(means(&plain)) {
        assert!(
            *with > without,
            "subtracting overhead must raise reported bandwidth: {with} vs {without}"
        );
    }
}

/// A real measurement, kept tiny: the scalar kernel on the OS clock, two
/// cache-resident sizes, through the same CLI path users take. Asserts
/// plumbing (positive bandwidth, authoritative=false for scalar), not
/// hardware performance.
#[test]
fn small_real_run_travels_the_cli_path() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("real.conf");
    std::fs::write(
        &conf,
        "kernel = scalar/fadd/manual/r1\n\
         sizes = 16K,64K\n\
         reps = 3\n\
         min_bytes_per_sample = 1M\n",
    )
    .unwrap();
    let cli = Cli {
        config: Some(conf),
        ..Default::default()
    };
    let resolved = cli::resolve(&cli, Some("os_monotonic")).unwrap();
    let artifacts = cli::execute(&resolved).unwrap();
    let csv = &artifacts[0].text;

    assert!(csv.contains("# timer_source=os_monotonic"));
    assert!(csv.contains("# authoritative=false"));
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("kernel_id"))
        .collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let mean: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!(mean > 0.0, "real run must measure something: {row}");
    }
}

/// Merging a user override file onto a detected/builtin base keeps derived
/// quantities consistent end to end: overriding only the frequency rescales
/// inherited GB/s peaks, and the merged spec still validates.
#[test]
fn frequency_override_rescales_inherited_peaks() {
    let base = membench::topology::builtin("altra_q80_30").unwrap();
    let mut user = MachineSpec::empty("tuned", membench::topology::Provenance::UserFile);
    user.nominal_frequency_hz = Some(2_800_000_000);
    let merged = MachineSpec::merge(&base, &user);
    merged.validate().unwrap();
    assert_eq!(merged.nominal_frequency_hz, Some(2_800_000_000));
    assert_eq!(merged.cache_levels[0].peak_gbps_per_core, Some(89.6));
    assert_eq!(89.6, 32.0 * 2.8);
}
