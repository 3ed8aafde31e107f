//! Labeled S-second windows cut from preprocessed drives, and the `SURFDS`
//! text format they are stored in.
//!
//! A stored dataset is a header line `SURFDS v1, S=<n>, rate=20` followed by
//! one CSV row per window: `label,v1,...,v(120*S)`, time-major (the six
//! channels of each time step are contiguous). Lines starting with `#`
//! carry the source drive of the rows that follow (`# drive=<id>`).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{LeveledSeries, OUTPUT_RATE_HZ};

pub const ROAD: u8 = 0;
pub const SIDEWALK: u8 = 1;

/// Channels per time step: accel xyz, gyro xyz.
pub const CHANNELS: usize = 6;

pub const FORMAT_MAGIC: &str = "SURFDS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_seconds: usize,
    pub rate_hz: f64,
    pub stride_seconds: f64,
}

impl WindowConfig {
    /// Non-overlapping `window_seconds` windows at 20 Hz.
    pub fn new(window_seconds: usize) -> Result<Self> {
        Self::with_stride(window_seconds, window_seconds as f64)
    }

    pub fn with_stride(window_seconds: usize, stride_seconds: f64) -> Result<Self> {
        let cfg = Self {
            window_seconds,
            rate_hz: OUTPUT_RATE_HZ,
            stride_seconds,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.window_seconds < 1 {
            return Err(Error::param("window length must be at least 1 s"));
        }
        if !(self.stride_seconds > 0.0) {
            return Err(Error::param(format!("stride must be positive, got {}", self.stride_seconds)));
        }
        if self.stride_samples() == 0 {
            return Err(Error::param(format!("stride {} s is below one sample", self.stride_seconds)));
        }
        Ok(())
    }

    /// Time steps per window, `20 * S`.
    pub fn window_len(&self) -> usize {
        (self.window_seconds as f64 * self.rate_hz).round() as usize
    }

    pub fn stride_samples(&self) -> usize {
        (self.stride_seconds * self.rate_hz).round() as usize
    }

    /// Values per flattened window, `120 * S`.
    pub fn values_per_window(&self) -> usize {
        self.window_len() * CHANNELS
    }

    /// Number of windows cut from a series of `n` samples.
    pub fn window_count(&self, n: usize) -> usize {
        let w = self.window_len();
        if n < w {
            0
        } else {
            (n - w) / self.stride_samples() + 1
        }
    }
}

/// One classifier input: `20*S` rows of six channels, stored time-major,
/// and its label (1 = sidewalk, 0 = road).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub x: Vec<f64>,
    pub y: u8,
}

impl LabeledWindow {
    pub fn new(rows: &[[f64; 6]], y: u8) -> Result<Self> {
        check_label(y)?;
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("window contains a non-finite value"));
        }
        Ok(Self { x, y })
    }

    pub fn from_flat(x: Vec<f64>, y: u8) -> Result<Self> {
        check_label(y)?;
        if !x.len().is_multiple_of(CHANNELS) {
            return Err(Error::shape(format!("{} values is not a whole number of rows", x.len())));
        }
        Ok(Self { x, y })
    }

    pub fn time_steps(&self) -> usize {
        self.x.len() / CHANNELS
    }

    /// Value at time step `t`, channel `c`.
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.x[t * CHANNELS + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(CHANNELS)
    }
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::param(format!("label must be 0 or 1, got {y}")));
    }
    Ok(())
}

/// Cuts `s` into windows starting at 0, stride, 2*stride, ...; a trailing
/// partial window is dropped. A series shorter than one window yields none.
pub fn partition_windows(s: &LeveledSeries, label: u8, cfg: &WindowConfig) -> Result<Vec<LabeledWindow>> {
    cfg.check()?;
    check_label(label)?;
    if (s.rate_hz - cfg.rate_hz).abs() > 1e-9 {
        return Err(Error::param(format!(
            "series rate {} Hz differs from window rate {} Hz",
            s.rate_hz, cfg.rate_hz
        )));
    }
    let rows = s.rows();
    let w = cfg.window_len();
    (0..cfg.window_count(rows.len()))
        .map(|k| {
            let start = k * cfg.stride_samples();
            LabeledWindow::new(&rows[start..start + w], label)
        })
        .collect()
}

/// A whole preprocessed recording with a single surface label.
#[derive(Debug, Clone)]
pub struct Drive {
    pub id: String,
    pub label: u8,
    pub series: LeveledSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: WindowConfig,
    pub examples: Vec<LabeledWindow>,
    /// Source drive id of each example.
    pub provenance: Vec<String>,
}

impl Dataset {
    pub fn new(config: WindowConfig, examples: Vec<LabeledWindow>, provenance: Vec<String>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::param("a dataset needs at least one example"));
        }
        if provenance.len() != examples.len() {
            return Err(Error::param("one provenance entry per example is required"));
        }
        let n = config.values_per_window();
        if let Some(i) = examples.iter().position(|e| e.x.len() != n) {
            return Err(Error::shape(format!(
                "example {i} has {} values, expected {n}",
                examples[i].x.len()
            )));
        }
        Ok(Self {
            config,
            examples,
            provenance,
        })
    }

    /// Windows every drive in order, keeping drive order then window order.
    pub fn from_drives(drives: &[&Drive], config: &WindowConfig) -> Result<Self> {
        let mut examples = Vec::new();
        let mut provenance = Vec::new();
        for d in drives {
            let w = partition_windows(&d.series, d.label, config)?;
            provenance.extend(std::iter::repeat_n(d.id.clone(), w.len()));
            examples.extend(w);
        }
        Self::new(*config, examples, provenance)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn window_seconds(&self) -> usize {
        self.config.window_seconds
    }

    /// `(road, sidewalk)` example counts.
    pub fn class_balance(&self) -> (usize, usize) {
        let ones = self.examples.iter().filter(|e| e.y == 1).count();
        (self.examples.len() - ones, ones)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.y).collect()
    }

    pub fn drive_ids(&self) -> BTreeSet<&str> {
        self.provenance.iter().map(String::as_str).collect()
    }
}

/// Splits by whole drive: every window of a drive named in `val_ids` goes
/// to validation, the rest to training.
pub fn split_train_val(drives: &[Drive], val_ids: &[&str], config: &WindowConfig) -> Result<(Dataset, Dataset)> {
    for id in val_ids {
        if !drives.iter().any(|d| d.id == *id) {
            return Err(Error::param(format!("unknown drive '{id}' in validation selector")));
        }
    }
    let (val, train): (Vec<&Drive>, Vec<&Drive>) = drives.iter().partition(|d| val_ids.contains(&d.id.as_str()));
    if train.is_empty() || val.is_empty() {
        return Err(Error::param(format!(
            "split leaves {} training and {} validation drives; both must be non-empty",
            train.len(),
            val.len()
        )));
    }
    let train = Dataset::from_drives(&train, config).map_err(empty_split("training"))?;
    let val = Dataset::from_drives(&val, config).map_err(empty_split("validation"))?;
    Ok((train, val))
}

fn empty_split(which: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Param(msg) => Error::Param(format!("{which} split: {msg}")),
        other => other,
    }
}

pub fn write_dataset<W: Write>(d: &Dataset, mut out: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(
        buf,
        "{FORMAT_MAGIC} v{FORMAT_VERSION}, S={}, rate={}",
        d.config.window_seconds, d.config.rate_hz
    )
    .unwrap();
    let mut current: Option<&str> = None;
    for (e, src) in d.examples.iter().zip(&d.provenance) {
        if current != Some(src.as_str()) {
            writeln!(buf, "# drive={src}").unwrap();
            current = Some(src);
        }
        write!(buf, "{}", e.y).unwrap();
        for v in &e.x {
            write!(buf, ",{v}").unwrap();
        }
        buf.push('\n');
        if buf.len() > 1 << 20 {
            out.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path.as_ref())?);
    write_dataset(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(fs::File::open(path.as_ref())?)
}

fn parse_header(line: &str) -> Result<usize> {
    let bad = || Error::format(format!("bad dataset header '{line}'"));
    let mut parts = line.split(',').map(str::trim);
    let magic = parts.next().ok_or_else(bad)?;
    let version = magic
        .strip_prefix(FORMAT_MAGIC)
        .and_then(|r| r.trim().strip_prefix('v'))
        .ok_or_else(bad)?;
    let version: u32 = version.parse().map_err(|_| bad())?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "dataset format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let s: usize = parts
        .next()
        .and_then(|p| p.strip_prefix("S="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    let rate: f64 = parts
        .next()
        .and_then(|p| p.strip_prefix("rate="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() || s == 0 {
        return Err(bad());
    }
    if rate != OUTPUT_RATE_HZ {
        return Err(Error::format(format!("dataset rate {rate} Hz, expected {OUTPUT_RATE_HZ} Hz")));
    }
    Ok(s)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format("empty dataset file"))?;
    let s = parse_header(header.trim())?;
    let config = WindowConfig::new(s).map_err(|e| Error::format(e.to_string()))?;
    let n = config.values_per_window();
    let mut examples = Vec::new();
    let mut provenance = Vec::new();
    let mut drive = String::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("drive=") {
                drive = id.to_string();
            }
            continue;
        }
        let mut fields = line.split(',');
        let label: u8 = match fields.next().map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(Error::format(format!("line {lineno}: bad label {other:?}")));
            }
        };
        let x = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(format!("line {lineno}: bad value '{f}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if x.len() != n {
            return Err(Error::format(format!(
                "line {lineno}: {} values but S={s} requires {n}",
                x.len()
            )));
        }
        examples.push(LabeledWindow { x, y: label });
        provenance.push(drive.clone());
    }
    if examples.is_empty() {
        return Err(Error::format("dataset file has no examples"));
    }
    Dataset::new(config, examples, provenance).map_err(|e| Error::format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::ImuSample;
    use proptest::prelude::*;

    fn leveled(n: usize) -> LeveledSeries {
        LeveledSeries {
            rate_hz: 20.0,
            samples: (0..n)
                .map(|i| {
                    let v = i as f64;
                    ImuSample::new(v / 20.0, [v, v + 0.5, -v], [0.1 * v, 0.0, 1.0])
                })
                .collect(),
        }
    }

    fn drive(id: &str, label: u8, n: usize) -> Drive {
        Drive {
            id: id.into(),
            label,
            series: leveled(n),
        }
    }

    #[test]
    fn window_counts() {
        let cfg = WindowConfig::new(3).unwrap();
        let w = partition_windows(&leveled(200), 1, &cfg).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|e| e.time_steps() == 60 && e.x.len() == 360 && e.y == 1));
        assert_eq!(w[1].at(0, 0), 60.0);
        assert_eq!(partition_windows(&leveled(60), 0, &cfg).unwrap().len(), 1);
        assert!(partition_windows(&leveled(59), 0, &cfg).unwrap().is_empty());
    }

    #[test]
    fn overlapping_stride() {
        let cfg = WindowConfig::with_stride(1, 0.5).unwrap();
        let w = partition_windows(&leveled(50), 0, &cfg).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[1].at(0, 0), 10.0);
        assert!(WindowConfig::with_stride(1, 0.0).is_err());
        assert!(WindowConfig::new(0).is_err());
    }

    #[test]
    fn split_is_by_whole_drive() {
        let drives: Vec<Drive> = (0..12)
            .map(|i| drive(&format!("d{i}"), (i % 2) as u8, 100 + 10 * i))
            .collect();
        let cfg = WindowConfig::new(1).unwrap();
        let (train, val) = split_train_val(&drives, &["d3", "d8"], &cfg).unwrap();
        let v: BTreeSet<&str> = val.drive_ids();
        assert_eq!(v, BTreeSet::from(["d3", "d8"]));
        assert!(train.drive_ids().is_disjoint(&val.drive_ids()));
        assert_eq!(val.len(), 6 + 9);
        assert_eq!(train.len() + val.len(), drives.iter().map(|d| d.series.len() / 20).sum::<usize>());
    }

    #[test]
    fn bad_selectors() {
        let drives = vec![drive("a", 0, 40), drive("b", 1, 40)];
        let cfg = WindowConfig::new(1).unwrap();
        assert!(matches!(split_train_val(&drives, &["zz"], &cfg), Err(Error::Param(_))));
        assert!(matches!(split_train_val(&drives, &["a", "b"], &cfg), Err(Error::Param(_))));
        assert!(matches!(split_train_val(&drives, &[], &cfg), Err(Error::Param(_))));
    }

    #[test]
    fn class_balance_matches_hand_count() {
        let drives = [drive("a", 0, 60), drive("b", 1, 100), drive("c", 1, 41)];
        let d = Dataset::from_drives(&drives.iter().collect::<Vec<_>>(), &WindowConfig::new(1).unwrap()).unwrap();
        assert_eq!(d.class_balance(), (3, 7));
    }

    fn small_dataset() -> Dataset {
        let cfg = WindowConfig::new(1).unwrap();
        let examples = (0..3)
            .map(|k| {
                let x = (0..120).map(|i| (i as f64 + 0.1) * (k as f64 - 1.3) / 7.0).collect();
                LabeledWindow::from_flat(x, (k % 2) as u8).unwrap()
            })
            .collect();
        Dataset::new(cfg, examples, vec!["r1".into(), "r1".into(), "s2".into()]).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let d = small_dataset();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("SURFDS v1, S=1, rate=20\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let mut buf = Vec::new();
        write_dataset(&small_dataset(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let wrong_magic = text.replacen("SURFDS", "SURFXX", 1);
        assert!(matches!(read_dataset(wrong_magic.as_bytes()), Err(Error::Format(_))));

        let wrong_version = text.replacen("v1", "v2", 1);
        assert!(matches!(read_dataset(wrong_version.as_bytes()), Err(Error::Format(_))));

        let wrong_s = text.replacen("S=1", "S=2", 1);
        assert!(matches!(read_dataset(wrong_s.as_bytes()), Err(Error::Format(_))));

        let truncated = &text[..text.len() - 40];
        assert!(matches!(read_dataset(truncated.as_bytes()), Err(Error::Format(_))));

        assert!(matches!(read_dataset("".as_bytes()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn window_count_formula(n in 0usize..2000, s in 1usize..4, stride_tenths in 1usize..40) {
            let stride = stride_tenths as f64 / 10.0;
            let cfg = WindowConfig::with_stride(s, stride).unwrap();
            let w = partition_windows(&leveled(n), 0, &cfg).unwrap();
            let expected = if n >= 20 * s {
                (n - 20 * s) / (((20 * s) as f64 * stride / s as f64).round() as usize) + 1
            } else {
                0
            };
            prop_assert_eq!(w.len(), expected);
            prop_assert!(w.iter().all(|e| e.x.len() == 120 * s));
        }
    }
}
