//! Prepared dataset directories: the chronological split segments of one
//! trace, stored as bitline files, plus a `dataset.json` manifest.
//!
//! Segments are stored unwindowed so that any input length can be windowed
//! from them later; the manifest pins the default length, horizon and
//! strides, and the window counts those defaults produce.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    chronological_split, load_outcomes, make_windows, window_count, write_outcomes, OutcomeSeries, SplitSpec,
    TraceFormat, WindowedDataset,
};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::hypertune::write_atomic;

pub const MANIFEST_FILE: &str = "dataset.json";
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub input_length: usize,
    pub horizon: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub file: String,
    pub length: usize,
    pub sha256: String,
    /// Windows at the manifest's input length, horizon and this split's stride.
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub input_length: usize,
    pub horizon: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub split: SplitSpec,
    pub sample_period_s: f64,
    pub source: String,
    pub source_sha256: String,
    pub train: SegmentInfo,
    pub validation: SegmentInfo,
    pub test: SegmentInfo,
}

impl DatasetManifest {
    pub fn segment(&self, name: &str) -> Option<&SegmentInfo> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn stride_for(&self, name: &str) -> usize {
        if name == "train" {
            self.train_stride
        } else {
            self.eval_stride
        }
    }
}

/// Splits `series`, writes the segments and manifest into `out_dir`, and
/// returns the manifest together with the names of splits that hold no
/// window (callers surface those as warnings).
///
/// Fails when a split with a nonzero fraction is too short for one window,
/// naming the minimum length it needed.
pub fn prepare(
    series: &OutcomeSeries,
    source: &str,
    source_sha256: &str,
    config: &PrepareConfig,
    out_dir: &Path,
) -> Result<(DatasetManifest, Vec<&'static str>)> {
    if config.input_length == 0 || config.horizon == 0 {
        return Err(Error::InvalidParameter("input length and horizon must be >= 1".into()));
    }
    if config.train_stride == 0 || config.eval_stride == 0 {
        return Err(Error::InvalidParameter("strides must be >= 1".into()));
    }
    let needed = config.input_length + config.horizon;
    if series.len() < needed {
        return Err(Error::InsufficientData {
            required: needed,
            available: series.len(),
        });
    }
    let splits = chronological_split(series, &config.split)?;
    let fractions = [config.split.train, config.split.validation, config.split.test];
    let segments = [&splits.train, &splits.validation, &splits.test];

    let mut empty = Vec::new();
    for ((name, seg), fraction) in SPLIT_NAMES.iter().zip(segments).zip(fractions) {
        let stride = if *name == "train" { config.train_stride } else { config.eval_stride };
        if window_count(seg.len(), config.input_length, config.horizon, stride) == 0 {
            if fraction > 0.0 {
                return Err(Error::InsufficientData {
                    required: needed,
                    available: seg.len(),
                });
            }
            empty.push(*name);
        }
    }

    fs::create_dir_all(out_dir)?;
    let mut infos = Vec::with_capacity(3);
    for (name, seg) in SPLIT_NAMES.iter().zip(segments) {
        let file = format!("{name}.bits");
        let mut bytes = Vec::with_capacity(seg.len() + 1);
        write_outcomes(seg, &mut bytes, TraceFormat::Bitline)?;
        write_atomic(&out_dir.join(&file), &bytes)?;
        let stride = if *name == "train" { config.train_stride } else { config.eval_stride };
        infos.push(SegmentInfo {
            file,
            length: seg.len(),
            sha256: sha256_hex(&bytes),
            windows: window_count(seg.len(), config.input_length, config.horizon, stride),
        });
    }
    let [train, validation, test]: [SegmentInfo; 3] = infos.try_into().expect("three segments");
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        input_length: config.input_length,
        horizon: config.horizon,
        train_stride: config.train_stride,
        eval_stride: config.eval_stride,
        split: config.split,
        sample_period_s: series.sample_period_s(),
        source: source.to_string(),
        source_sha256: source_sha256.to_string(),
        train,
        validation,
        test,
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok((manifest, empty))
}

/// A prepared dataset directory opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if manifest.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "dataset format version {} (expected {DATASET_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    /// Loads one split segment, verifying its digest. `None` for an empty split.
    pub fn segment(&self, name: &str) -> Result<Option<OutcomeSeries>> {
        let info = self
            .manifest
            .segment(name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown split {name:?}")))?;
        let bytes = fs::read(self.dir.join(&info.file))?;
        let digest = sha256_hex(&bytes);
        if digest != info.sha256 {
            return Err(Error::Precondition(format!(
                "{} digest {digest} does not match manifest {}",
                info.file, info.sha256
            )));
        }
        if info.length == 0 {
            return Ok(None);
        }
        let series = load_outcomes(bytes.as_slice(), TraceFormat::Bitline)?;
        Ok(Some(OutcomeSeries::with_period(
            series.outcomes().to_vec(),
            self.manifest.sample_period_s,
            name,
        )?))
    }

    /// Loads a segment that must be nonempty.
    pub fn require_segment(&self, name: &str) -> Result<OutcomeSeries> {
        self.segment(name)?
            .ok_or_else(|| Error::Precondition(format!("the {name} split of this dataset is empty")))
    }

    /// Windows a split at `input_length` using the manifest's horizon and the
    /// split's stride.
    pub fn windows(&self, name: &str, input_length: usize) -> Result<WindowedDataset> {
        let series = self.require_segment(name)?;
        make_windows(&series, input_length, self.manifest.horizon, self.manifest.stride_for(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::bernoulli;

    fn config(split: SplitSpec) -> PrepareConfig {
        PrepareConfig {
            input_length: 8,
            horizon: 4,
            train_stride: 3,
            eval_stride: 1,
            split,
        }
    }

    #[test]
    fn round_trip_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let series = bernoulli(0.7, 600, 1).unwrap();
        let (m, empty) = prepare(&series, "mem", "00", &config(SplitSpec::default()), dir.path()).unwrap();
        assert!(empty.is_empty());
        assert_eq!(m.train.length + m.validation.length + m.test.length, 600);
        assert_eq!(m.train.windows, window_count(m.train.length, 8, 4, 3));
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, m);
        let train = ds.require_segment("train").unwrap();
        assert_eq!(train.outcomes(), &series.outcomes()[..300]);
        assert_eq!(ds.windows("test", 8).unwrap().len(), m.test.windows);
    }

    #[test]
    fn train_only_split_reports_empty_splits() {
        let dir = tempfile::tempdir().unwrap();
        let series = bernoulli(0.7, 100, 1).unwrap();
        let (_, empty) = prepare(&series, "mem", "00", &config(SplitSpec::new(1.0, 0.0, 0.0).unwrap()), dir.path()).unwrap();
        assert_eq!(empty, vec!["validation", "test"]);
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(ds.segment("test").unwrap().is_none());
        assert!(ds.require_segment("validation").is_err());
    }

    #[test]
    fn short_trace_names_minimum() {
        let dir = tempfile::tempdir().unwrap();
        let series = bernoulli(0.7, 10, 1).unwrap();
        let err = prepare(&series, "mem", "00", &config(SplitSpec::default()), dir.path()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { required: 12, available: 10 }));
    }

    #[test]
    fn tampered_segment_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let series = bernoulli(0.7, 600, 1).unwrap();
        prepare(&series, "mem", "00", &config(SplitSpec::default()), dir.path()).unwrap();
        fs::write(dir.path().join("test.bits"), "0101").unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(matches!(ds.segment("test"), Err(Error::Precondition(_))));
    }
}
