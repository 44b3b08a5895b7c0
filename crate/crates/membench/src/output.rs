//! Result emission: CSV, JSON, and a generated plot script.
//!
//! Outputs are designed to be diffable golden files: fixed column order,
//! numbers rendered to 6 significant digits, no timestamps or hostnames,
//! and the full configuration echoed (plus hashed) into every artifact so a
//! result file alone is enough to rerun the measurement.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{level_annotation, level_bands, LevelBand};
use crate::engine::{SeriesResult, SweepConfig};
use crate::timer::TimerCalibration;
use crate::topology::MachineSpec;
use crate::virtual_platform::VirtualSchedule;

/// Significant digits for every rendered number.
pub const SIGNIFICANT_DIGITS: usize = 6;

/// The fixed CSV column set, in order.
pub const CSV_COLUMNS: &str = "kernel_id,size_bytes,core_count,repetitions,mean_gbps,\
stddev_gbps,bytes_per_cycle,efficiency_pct,level_annotation,warnings";

/// Rounds to `digits` significant digits and renders without trailing
/// zeros; falls back to scientific notation outside `%g`'s plain range.
/// Deterministic: the same value always renders to the same bytes.
pub fn format_sig(value: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    // `{:e}` with digits-1 decimals rounds the mantissa for us; the
    // exponent it reports is the post-rounding one (9.999e2 → 1.000e3).
    let sci = format!("{value:.*e}", digits - 1);
    let (mantissa, exponent) = sci.split_once('e').expect("float `e` format");
    let exponent: i32 = exponent.parse().expect("float exponent");
    if exponent < -4 || exponent >= digits as i32 {
        let mantissa = trim_decimal_zeros(mantissa);
        return format!("{mantissa}e{exponent}");
    }
    let rounded: f64 = sci.parse().expect("round-trip of our own rendering");
    let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
    trim_decimal_zeros(&format!("{rounded:.decimals$}")).to_string()
}

fn trim_decimal_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Shortest exact rendering, for metadata values that must round-trip.
fn fmt_f64(value: f64) -> String {
    value.to_string()
}

fn fmt_list<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical key=value rendering of a validated configuration. Contains no
/// filesystem paths (schedules and machine specs appear by content/name),
/// so the text — and therefore [`config_hash`] — is host-independent.
pub fn config_echo(
    config: &SweepConfig,
    machine: &MachineSpec,
    schedule: Option<&VirtualSchedule>,
) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("kernel", config.kernel.id());
    kv("cores", fmt_list(&config.cores));
    kv("sizes", fmt_list(&config.sizes_bytes));
    kv("repetitions", config.repetitions.to_string());
    kv("min_bytes_per_sample", config.min_bytes_per_sample.to_string());
    kv("alignment", config.alignment_bytes.to_string());
    kv("hugepages", config.hugepage_policy.as_str().to_string());
    kv("numa_local_buffers", config.numa_local_buffers.to_string());
    kv("subtract_loop_overhead", config.subtract_loop_overhead.to_string());
    kv("pattern_x", fmt_f64(config.pattern_x));
    kv("seed", config.seed.to_string());
    kv("machine", machine.name.clone());
    kv("machine_provenance", machine.provenance.to_string());
    if let Some(schedule) = schedule {
        // Inline the schedule by content: two runs hash alike iff they
        // simulate the same platform, wherever the file lived.
        for line in schedule.to_file_format().lines() {
            if !line.is_empty() && !line.starts_with('#') {
                let _ = writeln!(out, "{line}");
            }
        }
    }
    out
}

/// Hex SHA-256 of the canonical configuration text.
pub fn config_hash(echo: &str) -> String {
    let digest = Sha256::digest(echo.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Per-row derived fields shared by the CSV and JSON renderers, so the two
/// formats cannot disagree.
struct Row<'a> {
    size_bytes: u64,
    repetitions: u32,
    mean_gbps: f64,
    stddev_gbps: f64,
    bytes_per_cycle: Option<f64>,
    efficiency_pct: Option<f64>,
    level: &'a str,
    warnings: &'a [String],
}

fn build_rows<'a>(series: &'a SeriesResult, bands: &'a [LevelBand]) -> Vec<Row<'a>> {
    series
        .sizes
        .iter()
        .map(|s| {
            let level = level_annotation(bands, s.size_bytes);
            let peak = bands
                .iter()
                .find(|b| b.name == level)
                .and_then(|b| b.peak_gbps);
            Row {
                size_bytes: s.size_bytes,
                repetitions: s.sample_count,
                mean_gbps: s.mean_gbps,
                stddev_gbps: s.stddev_gbps,
                bytes_per_cycle: s.bytes_per_cycle,
                efficiency_pct: peak
                    .filter(|p| *p > 0.0)
                    .map(|p| 100.0 * s.mean_gbps / p),
                level,
                warnings: &s.warnings,
            }
        })
        .collect()
}

/// Warnings live in one CSV cell; keep them free of structural characters.
fn warning_cell(warnings: &[String]) -> String {
    warnings
        .iter()
        .map(|w| w.replace([',', '\n', '"'], "_"))
        .collect::<Vec<_>>()
        .join(";")
}

/// The full CSV artifact: `#`-prefixed metadata header, fixed column row,
/// one data row per working-set size.
pub fn render_csv(series: &SeriesResult, machine: &MachineSpec, echo: &str) -> String {
    let bands = level_bands(machine, series.core_count as usize);
    let mut out = String::new();
    let _ = writeln!(out, "# membench series");
    let _ = writeln!(out, "# kernel_id={}", series.kernel_id);
    let _ = writeln!(out, "# vector_bytes={}", series.vector_bytes);
    let _ = writeln!(out, "# timer_source={}", series.timer_source.as_str());
    let _ = writeln!(
        out,
        "# tick_frequency_hz={}",
        fmt_f64(series.calibration.tick_frequency_hz)
    );
    let _ = writeln!(
        out,
        "# read_overhead_ticks={}",
        fmt_f64(series.calibration.read_overhead_ticks)
    );
    let _ = writeln!(out, "# machine={}", series.machine_name);
    let _ = writeln!(out, "# machine_provenance={}", series.machine_provenance);
    let _ = writeln!(out, "# authoritative={}", series.authoritative);
    let _ = writeln!(out, "# config_sha256={}", config_hash(echo));
    for line in echo.lines() {
        let _ = writeln!(out, "# config.{line}");
    }
    if !series.warnings.is_empty() {
        let _ = writeln!(out, "# warnings={}", warning_cell(&series.warnings));
    }
    let _ = writeln!(out, "{CSV_COLUMNS}");
    for row in build_rows(series, &bands) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            series.kernel_id,
            row.size_bytes,
            series.core_count,
            row.repetitions,
            format_sig(row.mean_gbps, SIGNIFICANT_DIGITS),
            format_sig(row.stddev_gbps, SIGNIFICANT_DIGITS),
            row.bytes_per_cycle
                .map(|v| format_sig(v, SIGNIFICANT_DIGITS))
                .unwrap_or_default(),
            row.efficiency_pct
                .map(|v| format_sig(v, SIGNIFICANT_DIGITS))
                .unwrap_or_default(),
            row.level,
            warning_cell(row.warnings),
        );
    }
    out
}

#[derive(Serialize)]
struct JsonMachine<'a> {
    name: &'a str,
    provenance: String,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    size_bytes: u64,
    repetitions: u32,
    mean_gbps: f64,
    stddev_gbps: f64,
    bytes_per_cycle: Option<f64>,
    efficiency_pct: Option<f64>,
    level_annotation: &'a str,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    format: &'static str,
    kernel_id: &'a str,
    vector_bytes: u32,
    timer: &'a TimerCalibration,
    machine: JsonMachine<'a>,
    core_count: u32,
    repetitions: u32,
    min_bytes_per_sample: u64,
    pattern_x: f64,
    subtract_loop_overhead: bool,
    seed: u64,
    authoritative: bool,
    config_sha256: String,
    config: Vec<&'a str>,
    warnings: &'a [String],
    rows: Vec<JsonRow<'a>>,
}

/// JSON mirror of the CSV: identical per-size values at full precision,
/// plus the complete run metadata.
pub fn render_json(series: &SeriesResult, machine: &MachineSpec, echo: &str) -> String {
    let bands = level_bands(machine, series.core_count as usize);
    let rows = build_rows(series, &bands);
    let document = JsonDocument {
        format: "membench-series",
        kernel_id: &series.kernel_id,
        vector_bytes: series.vector_bytes,
        timer: &series.calibration,
        machine: JsonMachine {
            name: &series.machine_name,
            provenance: series.machine_provenance.to_string(),
        },
        core_count: series.core_count,
        repetitions: series.repetitions,
        min_bytes_per_sample: series.min_bytes_per_sample,
        pattern_x: series.pattern_x,
        subtract_loop_overhead: series.subtract_loop_overhead,
        seed: series.seed,
        authoritative: series.authoritative,
        config_sha256: config_hash(echo),
        config: echo.lines().collect(),
        warnings: &series.warnings,
        rows: rows
            .iter()
            .map(|r| JsonRow {
                size_bytes: r.size_bytes,
                repetitions: r.repetitions,
                mean_gbps: r.mean_gbps,
                stddev_gbps: r.stddev_gbps,
                bytes_per_cycle: r.bytes_per_cycle,
                efficiency_pct: r.efficiency_pct,
                level_annotation: r.level,
                warnings: r.warnings,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&document).expect("serializable document");
    text.push('\n');
    text
}

/// A self-contained matplotlib script that reads the CSV emitted next to it
/// and draws the bandwidth-vs-working-set curve with level annotations.
pub fn render_plot_script(csv_name: &str, series: &SeriesResult) -> String {
    let title = format!(
        "{} on {} ({} core{})",
        series.kernel_id,
        series.machine_name,
        series.core_count,
        if series.core_count == 1 { "" } else { "s" },
    );
    format!(
        r##"#!/usr/bin/env python3
"""Plot a membench sweep: bandwidth vs working-set size with level bands."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

data = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "{csv_name}"
with data.open() as handle:
    rows = list(csv.DictReader(line for line in handle if not line.startswith("#")))
if not rows:
    sys.exit(f"no data rows in {{data}}")

sizes = [int(r["size_bytes"]) for r in rows]
mean = [float(r["mean_gbps"]) for r in rows]
spread = [float(r["stddev_gbps"]) for r in rows]

fig, ax = plt.subplots(figsize=(7.0, 4.2))
ax.errorbar(sizes, mean, yerr=spread, marker="o", markersize=3, linewidth=1.2)
ax.set_xscale("log", base=2)
ax.set_xlabel("working set [bytes]")
ax.set_ylabel("bandwidth [GB/s]")
ax.set_title({title:?})
ax.grid(True, which="both", alpha=0.3)

# Dashed separators where the level annotation changes, labeled per band.
previous = rows[0]["level_annotation"]
start = 0
bounds = []
for i, row in enumerate(rows[1:], start=1):
    if row["level_annotation"] != previous:
        bounds.append((previous, start, i - 1))
        ax.axvline(sizes[i - 1], color="grey", linestyle="--", linewidth=0.8)
        previous = row["level_annotation"]
        start = i
bounds.append((previous, start, len(rows) - 1))
top = ax.get_ylim()[1]
for name, lo, hi in bounds:
    centre = (sizes[lo] * sizes[hi]) ** 0.5
    ax.annotate(name, (centre, top), ha="center", va="top", fontsize=8, color="grey")

out = data.with_suffix(".png")
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
"##
    )
}
