//! Outcome traces, delivery-ratio targets, sliding windows and splits.
//!
//! Indexing is 0-based. For an anchor `i` the input pattern is the `l`
//! outcomes ending at `i` (inclusive) and the target is the mean of the
//! `horizon` outcomes strictly after `i`.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 0.5;
/// 30 minutes at one probe every 0.5 s.
pub const DEFAULT_HORIZON: usize = 3600;

/// Time-ordered binary frame outcomes: 1 = delivered and acknowledged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSeries {
    outcomes: Vec<u8>,
    sample_period_s: f64,
    origin_label: String,
}

impl OutcomeSeries {
    pub fn new(outcomes: Vec<u8>, origin_label: impl Into<String>) -> Result<Self> {
        Self::with_period(outcomes, DEFAULT_SAMPLE_PERIOD_S, origin_label)
    }

    pub fn with_period(
        outcomes: Vec<u8>,
        sample_period_s: f64,
        origin_label: impl Into<String>,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyInput("OutcomeSeries"));
        }
        if let Some(pos) = outcomes.iter().position(|&b| b > 1) {
            return Err(Error::InvalidParameter(format!(
                "outcome {} at index {pos} is not 0 or 1",
                outcomes[pos]
            )));
        }
        if !(sample_period_s > 0.0 && sample_period_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample period must be positive, got {sample_period_s}"
            )));
        }
        Ok(Self {
            outcomes,
            sample_period_s,
            origin_label: origin_label.into(),
        })
    }

    /// Segment constructor that admits an empty result (split outputs).
    fn segment(&self, range: std::ops::Range<usize>, part: &str) -> Self {
        Self {
            outcomes: self.outcomes[range].to_vec(),
            sample_period_s: self.sample_period_s,
            origin_label: format!("{}#{part}", self.origin_label),
        }
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn origin_label(&self) -> &str {
        &self.origin_label
    }

    pub fn duration_s(&self) -> f64 {
        self.outcomes.len() as f64 * self.sample_period_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    /// ASCII `0`/`1` characters; newlines are ignored.
    Bitline,
    /// One integer per row with an optional `outcome` header.
    Csv,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Bitline => "bits",
            TraceFormat::Csv => "csv",
        }
    }

    /// Guesses the format from a file name, defaulting to bitline.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => TraceFormat::Csv,
            _ => TraceFormat::Bitline,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bitline" | "bits" => Ok(TraceFormat::Bitline),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(Error::InvalidParameter(format!("unknown trace format {other:?}"))),
        }
    }
}

pub fn load_outcomes<R: Read>(mut source: R, format: TraceFormat) -> Result<OutcomeSeries> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let outcomes = match format {
        TraceFormat::Bitline => parse_bitline(&bytes)?,
        TraceFormat::Csv => parse_csv(&bytes)?,
    };
    OutcomeSeries::new(outcomes, "")
}

fn parse_bitline(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(bytes.len());
    for (offset, &b) in bytes.iter().enumerate() {
        match b {
            b'0' => out.push(0),
            b'1' => out.push(1),
            b'\n' | b'\r' => {}
            _ => {
                return Err(Error::Parse {
                    offset,
                    found: (b as char).to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (line_no, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_start = offset;
        offset += raw.len() + 1;
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        let trimmed = line.trim_ascii();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 0 && trimmed.eq_ignore_ascii_case(b"outcome") {
            continue;
        }
        match trimmed {
            b"0" => out.push(0),
            b"1" => out.push(1),
            _ => {
                let lead = line.len() - line.trim_ascii_start().len();
                return Err(Error::Parse {
                    offset: line_start + lead,
                    found: String::from_utf8_lossy(trimmed).into_owned(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_outcomes<W: Write>(series: &OutcomeSeries, mut sink: W, format: TraceFormat) -> Result<()> {
    match format {
        TraceFormat::Bitline => {
            let mut buf: Vec<u8> = series.outcomes.iter().map(|&b| b'0' + b).collect();
            buf.push(b'\n');
            sink.write_all(&buf)?;
        }
        TraceFormat::Csv => {
            let mut buf = Vec::with_capacity(series.len() * 2 + 8);
            buf.extend_from_slice(b"outcome\n");
            for &b in &series.outcomes {
                buf.push(b'0' + b);
                buf.push(b'\n');
            }
            sink.write_all(&buf)?;
        }
    }
    Ok(())
}

/// Mean of the `horizon` outcomes strictly after index `i`.
pub fn compute_target(series: &OutcomeSeries, i: usize, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if i + horizon >= series.len() {
        return Err(Error::OutOfRange(format!(
            "target window {}..={} exceeds series of length {}",
            i + 1,
            i + horizon,
            series.len()
        )));
    }
    let count: usize = series.outcomes[i + 1..=i + horizon]
        .iter()
        .map(|&b| b as usize)
        .sum();
    Ok(count as f64 / horizon as f64)
}

/// Number of (pattern, target) pairs `make_windows` yields.
pub fn window_count(len: usize, window_length: usize, horizon: usize, stride: usize) -> usize {
    if stride == 0 || len < window_length + horizon {
        return 0;
    }
    (len - window_length - horizon + 1).div_ceil(stride)
}

/// Sliding (pattern, target) pairs over one contiguous series.
///
/// Patterns are borrowed views into the owned outcome buffer, so stride-1
/// datasets over long traces stay compact.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    outcomes: Vec<u8>,
    anchors: Vec<usize>,
    targets: Vec<f64>,
    window_length: usize,
    horizon: usize,
    stride: usize,
}

pub fn make_windows(
    series: &OutcomeSeries,
    window_length: usize,
    horizon: usize,
    stride: usize,
) -> Result<WindowedDataset> {
    if window_length == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidParameter(format!(
            "window length, horizon and stride must be >= 1 (got {window_length}, {horizon}, {stride})"
        )));
    }
    let required = window_length + horizon;
    if series.len() < required {
        return Err(Error::InsufficientData {
            required,
            available: series.len(),
        });
    }
    let x = &series.outcomes;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0usize);
    for &b in x {
        prefix.push(prefix.last().unwrap() + b as usize);
    }
    let last_anchor = x.len() - 1 - horizon;
    let anchors: Vec<usize> = (window_length - 1..=last_anchor).step_by(stride).collect();
    let targets = anchors
        .iter()
        .map(|&i| (prefix[i + 1 + horizon] - prefix[i + 1]) as f64 / horizon as f64)
        .collect();
    Ok(WindowedDataset {
        outcomes: x.clone(),
        anchors,
        targets,
        window_length,
        horizon,
        stride,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target(&self, k: usize) -> f64 {
        self.targets[k]
    }

    pub fn pattern(&self, k: usize) -> &[u8] {
        let end = self.anchors[k] + 1;
        &self.outcomes[end - self.window_length..end]
    }

    pub fn patterns(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        (0..self.len()).map(move |k| self.pattern(k))
    }

    /// Mean of each pattern; the naive "recent FDR persists" predictor.
    pub fn window_means(&self) -> Vec<f64> {
        self.patterns()
            .map(|p| p.iter().map(|&b| b as usize).sum::<usize>() as f64 / p.len() as f64)
            .collect()
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    /// Roughly 30 / 10 / 20 days.
    fn default() -> Self {
        Self {
            train: 0.5,
            validation: 0.1667,
            test: 0.3333,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let spec = Self { train, validation, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::InvalidParameter(format!("split fractions must be >= 0: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl FromStr for SplitSpec {
    type Err = Error;

    /// Parses `"train,validation,test"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad split fraction {p:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        match parts[..] {
            [a, b, c] => SplitSpec::new(a, b, c),
            _ => Err(Error::InvalidParameter(format!(
                "expected three comma-separated fractions, got {s:?}"
            ))),
        }
    }
}

/// Three contiguous segments of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: OutcomeSeries,
    pub validation: OutcomeSeries,
    pub test: OutcomeSeries,
}

/// Splits at cumulative `floor(fraction * len)` boundaries; the test segment
/// takes the remainder.
pub fn chronological_split(series: &OutcomeSeries, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = series.len();
    let b1 = ((spec.train * n as f64).floor() as usize).min(n);
    let b2 = (((spec.train + spec.validation) * n as f64).floor() as usize).clamp(b1, n);
    Ok(Splits {
        train: series.segment(0..b1, "train"),
        validation: series.segment(b1..b2, "validation"),
        test: series.segment(b2..n, "test"),
    })
}

/// `(success_fraction, failure_fraction)`.
pub fn class_balance(series: &OutcomeSeries) -> Result<(f64, f64)> {
    if series.is_empty() {
        return Err(Error::EmptyInput("class_balance"));
    }
    let ones = series.outcomes.iter().filter(|&&b| b == 1).count();
    let success = ones as f64 / series.len() as f64;
    Ok((success, (series.len() - ones) as f64 / series.len() as f64))
}
