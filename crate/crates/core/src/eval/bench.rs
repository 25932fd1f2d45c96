use std::fs;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::alloc;
use crate::error::{Error, Result};
use crate::models::TrainedModel;

pub const WARMUP_PREDICTIONS: usize = 10;
pub const MIN_REPETITIONS: usize = 100;
const BYTES_PER_MB: f64 = 1_048_576.0;

/// Latency and memory of single-window inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub mean_response_time_ms: f64,
    pub memory_footprint_mb: f64,
    pub memory_peak_mb: f64,
    pub sample_count: usize,
    pub hardware_label: String,
    pub memory_method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryProbe {
    /// procfs when readable, else the counting allocator.
    Auto,
    /// Resident set size from `/proc/self/status` (VmRSS, VmHWM).
    Procfs,
    /// Live bytes and high-water mark from [`alloc::CountingAllocator`].
    Allocator,
}

struct ProcStatus {
    rss_kb: u64,
    hwm_kb: u64,
}

fn read_proc_status() -> Option<ProcStatus> {
    let text = fs::read_to_string("/proc/self/status").ok()?;
    let field = |name: &str| -> Option<u64> {
        let line = text.lines().find(|l| l.starts_with(name))?;
        line[name.len()..].split_whitespace().next()?.parse().ok()
    };
    Some(ProcStatus {
        rss_kb: field("VmRSS:")?,
        hwm_kb: field("VmHWM:")?,
    })
}

/// Resets the kernel's peak-RSS counter (VmHWM) to the current RSS so the
/// reported peak covers only this run. Returns false where unsupported.
fn reset_proc_peak() -> bool {
    fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn cpu_label() -> String {
    let model = fs::read_to_string("/proc/cpuinfo").ok().and_then(|t| {
        t.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|s| s.trim().to_string())
    });
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{} ({} logical CPUs, {}-{})",
        model.unwrap_or_else(|| "unknown CPU".into()),
        threads,
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

fn resolve_probe(probe: MemoryProbe) -> Result<MemoryProbe> {
    let procfs = read_proc_status().is_some();
    match probe {
        MemoryProbe::Procfs if procfs => Ok(MemoryProbe::Procfs),
        MemoryProbe::Auto if procfs => Ok(MemoryProbe::Procfs),
        MemoryProbe::Procfs | MemoryProbe::Auto | MemoryProbe::Allocator => {
            if alloc::is_installed() {
                Ok(MemoryProbe::Allocator)
            } else {
                Err(Error::Unsupported(
                    "no memory probe: procfs unreadable and the counting allocator is not installed"
                        .into(),
                ))
            }
        }
    }
}

/// Times `repetitions` single-window predictions after a fixed warmup,
/// cycling through `patterns`. Only the predict call is timed.
pub fn bench_inference(model: &TrainedModel, patterns: &[&[u8]], repetitions: usize) -> Result<ComplexityReport> {
    bench_inference_with(model, patterns, repetitions, MemoryProbe::Auto)
}

pub fn bench_inference_with(
    model: &TrainedModel,
    patterns: &[&[u8]],
    repetitions: usize,
    probe: MemoryProbe,
) -> Result<ComplexityReport> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_REPETITIONS} timed repetitions, got {repetitions}"
        )));
    }
    if patterns.is_empty() {
        return Err(Error::EmptyInput("bench_inference patterns"));
    }
    for p in patterns {
        model.check_pattern(p)?;
    }
    let probe = resolve_probe(probe)?;

    for k in 0..WARMUP_PREDICTIONS {
        black_box(model.predict(patterns[k % patterns.len()])?);
    }
    let peak_scope = match probe {
        MemoryProbe::Allocator => {
            alloc::reset_peak();
            "run"
        }
        _ if reset_proc_peak() => "run",
        _ => "process lifetime",
    };

    let mut total = Duration::ZERO;
    let mut footprint_sum = 0.0;
    for k in 0..repetitions {
        let pattern = patterns[k % patterns.len()];
        let start = Instant::now();
        let y = model.predict(black_box(pattern))?;
        total += start.elapsed();
        black_box(y);
        footprint_sum += match probe {
            MemoryProbe::Allocator => alloc::live_bytes() as f64,
            _ => read_proc_status().map_or(0, |s| s.rss_kb) as f64 * 1024.0,
        };
    }

    let (peak_bytes, source) = match probe {
        MemoryProbe::Allocator => (
            alloc::peak_bytes() as f64,
            "instrumented allocator (mean live bytes / high-water mark",
        ),
        _ => (
            read_proc_status().map_or(0, |s| s.hwm_kb) as f64 * 1024.0,
            "procfs resident set (mean VmRSS / VmHWM",
        ),
    };
    let method = format!("{source} over {peak_scope})");
    let footprint = footprint_sum / repetitions as f64 / BYTES_PER_MB;
    Ok(ComplexityReport {
        mean_response_time_ms: total.as_secs_f64() * 1e3 / repetitions as f64,
        memory_footprint_mb: footprint,
        memory_peak_mb: peak_bytes / BYTES_PER_MB,
        sample_count: repetitions,
        hardware_label: format!("{}; memory: {method}", cpu_label()),
        memory_method: method,
    })
}
