//! Record and annotation I/O: a WFDB subset (format 16), plain CSV, and text annotations.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalIoError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported signal format {0} (only WFDB format 16 is read)")]
    UnsupportedFormat(String),
    #[error("signal file holds {found} samples per channel, header claims {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("row {row} has {found} columns, expected {expected}")]
    ColumnCountMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric cell at row {row}, column {col}: {value:?}")]
    NonNumericCell {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("annotation is not strictly increasing at line {line}")]
    NonMonotonic { line: usize },
    #[error("annotation line {line} is not a sample index: {value:?}")]
    BadAnnotationLine { line: usize, value: String },
    #[error("record has no ECG channel")]
    NoEcg,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl SignalIoError {
    fn io(path: &Path, source: io::Error) -> Self {
        SignalIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalKind {
    Ecg,
    Bp,
    Art,
    Pap,
    Cvp,
    Sv,
    Resp,
    Eeg,
    Emg,
    Eog,
    So2,
    Co2,
    Other,
}

impl SignalKind {
    /// Channels carrying direct evidence of cardiac activity.
    pub fn is_heart_related(self) -> bool {
        matches!(
            self,
            SignalKind::Ecg
                | SignalKind::Bp
                | SignalKind::Art
                | SignalKind::Pap
                | SignalKind::Cvp
                | SignalKind::Sv
        )
    }

    /// Mechanical (pressure or volume) channels usable as beat candidates.
    pub fn is_pulsatile(self) -> bool {
        self.is_heart_related() && self != SignalKind::Ecg
    }

    /// Kinds the onset detector can run on.
    pub fn is_arterial_pressure(self) -> bool {
        matches!(self, SignalKind::Bp | SignalKind::Art | SignalKind::Pap)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Ecg => "ECG",
            SignalKind::Bp => "BP",
            SignalKind::Art => "ART",
            SignalKind::Pap => "PAP",
            SignalKind::Cvp => "CVP",
            SignalKind::Sv => "SV",
            SignalKind::Resp => "RESP",
            SignalKind::Eeg => "EEG",
            SignalKind::Emg => "EMG",
            SignalKind::Eog => "EOG",
            SignalKind::So2 => "SO2",
            SignalKind::Co2 => "CO2",
            SignalKind::Other => "OTHER",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const ECG_LEADS: &[&str] = &[
    "I", "II", "III", "AVR", "AVL", "AVF", "V", "V1", "V2", "V3", "V4", "V5", "V6", "MLI", "MLII",
    "MLIII", "MV", "ML5", "D1", "D2", "D3",
];

/// Maps a channel label to its kind.
///
/// Matching is case-insensitive. Exact ECG lead names (`I`, `II`, `aVR`, `V1`, `MLII`, ...)
/// and anything starting with `ECG`/`EKG` map to ECG. The remaining kinds match by prefix,
/// checked in this order: `ABP`/`BP` → BP, `ART` → ART, `PAP` → PAP, `CVP` → CVP,
/// `SV` → SV, `RESP` → RESP, `SO2`/`SPO2` → SO2, `CO2` → CO2, `EEG`, `EMG`, `EOG`.
/// Everything else is OTHER.
pub fn classify_kind(label: &str) -> SignalKind {
    let upper = label.trim().to_ascii_uppercase();
    if upper.is_empty() {
        return SignalKind::Other;
    }
    if ECG_LEADS.contains(&upper.as_str()) || upper.starts_with("ECG") || upper.starts_with("EKG")
    {
        return SignalKind::Ecg;
    }
    const PREFIXES: &[(&str, SignalKind)] = &[
        ("ABP", SignalKind::Bp),
        ("BP", SignalKind::Bp),
        ("ART", SignalKind::Art),
        ("PAP", SignalKind::Pap),
        ("CVP", SignalKind::Cvp),
        ("SV", SignalKind::Sv),
        ("RESP", SignalKind::Resp),
        ("SPO2", SignalKind::So2),
        ("SO2", SignalKind::So2),
        ("CO2", SignalKind::Co2),
        ("EEG", SignalKind::Eeg),
        ("EMG", SignalKind::Emg),
        ("EOG", SignalKind::Eog),
    ];
    PREFIXES
        .iter()
        .find(|(p, _)| upper.starts_with(p))
        .map(|&(_, k)| k)
        .unwrap_or(SignalKind::Other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: String,
    pub kind: SignalKind,
    pub fs: f64,
    pub gain: f64,
    pub baseline: i32,
    /// Physical units.
    pub samples: Vec<f64>,
}

impl Channel {
    pub fn new(label: impl Into<String>, fs: f64, samples: Vec<f64>) -> Self {
        let label = label.into();
        Self {
            kind: classify_kind(&label),
            label,
            fs,
            gain: 1.0,
            baseline: 0,
            samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub fs: f64,
    pub channels: Vec<Channel>,
}

impl Record {
    /// Validates the shared-rate and finiteness invariants.
    pub fn new(id: impl Into<String>, fs: f64, channels: Vec<Channel>) -> Result<Self, SignalIoError> {
        let id = id.into();
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(SignalIoError::InvalidRecord(format!("sampling rate {fs}")));
        }
        let len = channels.first().map_or(0, |c| c.samples.len());
        for c in &channels {
            if c.fs != fs {
                return Err(SignalIoError::InvalidRecord(format!(
                    "channel {} sampled at {} Hz, record at {fs} Hz",
                    c.label, c.fs
                )));
            }
            if c.samples.len() != len {
                return Err(SignalIoError::InvalidRecord(format!(
                    "channel {} has {} samples, expected {len}",
                    c.label,
                    c.samples.len()
                )));
            }
            if c.samples.iter().any(|v| !v.is_finite()) {
                return Err(SignalIoError::InvalidRecord(format!(
                    "channel {} has non-finite samples",
                    c.label
                )));
            }
        }
        if channels.first().is_some_and(|c| c.kind != SignalKind::Ecg) {
            log::warn!("record {id}: first channel is not ECG");
        }
        Ok(Self { id, fs, channels })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }
}

/// Beat locations as sample indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub record_id: String,
    pub fs: f64,
    pub beats: Vec<usize>,
}

impl Annotation {
    pub fn new(record_id: impl Into<String>, fs: f64, beats: Vec<usize>) -> Self {
        Self {
            record_id: record_id.into(),
            fs,
            beats,
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.beats.windows(2).all(|w| w[0] < w[1])
    }
}

fn leading_number(tok: &str) -> Option<f64> {
    // "250", "250/250", "360(0)"
    let end = tok
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(tok.len());
    tok[..end].parse().ok()
}

#[derive(Debug)]
struct SignalSpec {
    file: String,
    offset: u64,
    gain: f64,
    baseline: i32,
    label: String,
}

fn parse_signal_line(line: &str, lineno: usize) -> Result<SignalSpec, SignalIoError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 2 {
        return Err(SignalIoError::MalformedHeader(format!(
            "line {lineno}: signal specification needs file name and format"
        )));
    }
    // format[xspf][:skew][+offset]
    let fmt_tok = toks[1];
    let (fmt_part, offset) = match fmt_tok.split_once('+') {
        Some((f, off)) => (
            f,
            off.parse::<u64>().map_err(|_| {
                SignalIoError::MalformedHeader(format!("line {lineno}: bad byte offset {off:?}"))
            })?,
        ),
        None => (fmt_tok, 0),
    };
    let fmt_part = fmt_part.split(':').next().unwrap_or(fmt_part);
    let (code, spf) = match fmt_part.split_once('x') {
        Some((c, s)) => (c, Some(s)),
        None => (fmt_part, None),
    };
    if code != "16" || spf.is_some_and(|s| s != "1") {
        return Err(SignalIoError::UnsupportedFormat(fmt_tok.to_string()));
    }

    let mut gain = 200.0;
    let mut baseline = None;
    if let Some(g) = toks.get(2) {
        let (num, rest) = match g.find(['(', '/']) {
            Some(i) => (&g[..i], &g[i..]),
            None => (*g, ""),
        };
        let parsed: f64 = num.parse().map_err(|_| {
            SignalIoError::MalformedHeader(format!("line {lineno}: bad gain {g:?}"))
        })?;
        if parsed != 0.0 {
            gain = parsed;
        }
        if let Some(inner) = rest.strip_prefix('(') {
            let close = inner.find(')').ok_or_else(|| {
                SignalIoError::MalformedHeader(format!("line {lineno}: unterminated baseline"))
            })?;
            baseline = Some(inner[..close].parse::<i32>().map_err(|_| {
                SignalIoError::MalformedHeader(format!("line {lineno}: bad baseline in {g:?}"))
            })?);
        }
    }
    // adc zero doubles as the baseline when none is given explicitly
    let adc_zero = toks.get(4).and_then(|t| t.parse::<i32>().ok());
    let baseline = baseline.or(adc_zero).unwrap_or(0);
    let label = if toks.len() > 8 {
        toks.last().copied().unwrap_or_default().to_string()
    } else {
        String::new()
    };
    Ok(SignalSpec {
        file: toks[0].to_string(),
        offset,
        gain,
        baseline,
        label,
    })
}

/// Reads a single-rate WFDB record whose signals are all stored in one format-16 file.
pub fn load_wfdb(header_path: &Path) -> Result<Record, SignalIoError> {
    let text = fs::read_to_string(header_path).map_err(|e| SignalIoError::io(header_path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (lineno, record_line) = lines
        .next()
        .ok_or_else(|| SignalIoError::MalformedHeader("empty header".into()))?;
    let toks: Vec<&str> = record_line.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(SignalIoError::MalformedHeader(format!(
            "line {lineno}: record line needs name, signal count and sampling rate"
        )));
    }
    let id = toks[0].split('/').next().unwrap_or(toks[0]).to_string();
    let nsig: usize = toks[1].parse().map_err(|_| {
        SignalIoError::MalformedHeader(format!("line {lineno}: bad signal count {:?}", toks[1]))
    })?;
    let fs = leading_number(toks[2])
        .filter(|f| *f > 0.0)
        .ok_or_else(|| {
            SignalIoError::MalformedHeader(format!("line {lineno}: bad sampling rate {:?}", toks[2]))
        })?;
    let nsamp: Option<usize> = match toks.get(3) {
        Some(t) => Some(t.parse().map_err(|_| {
            SignalIoError::MalformedHeader(format!("line {lineno}: bad sample count {t:?}"))
        })?),
        None => None,
    };
    if nsig == 0 {
        return Err(SignalIoError::MalformedHeader("record declares no signals".into()));
    }

    let specs = lines
        .take(nsig)
        .map(|(n, l)| parse_signal_line(l, n))
        .collect::<Result<Vec<_>, _>>()?;
    if specs.len() != nsig {
        return Err(SignalIoError::MalformedHeader(format!(
            "header declares {nsig} signals but lists {}",
            specs.len()
        )));
    }
    if specs.iter().any(|s| s.file != specs[0].file || s.offset != specs[0].offset) {
        return Err(SignalIoError::UnsupportedFormat(
            "signals spread over several files".into(),
        ));
    }

    let dat_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&specs[0].file);
    let bytes = fs::read(&dat_path).map_err(|e| SignalIoError::io(&dat_path, e))?;
    let body = bytes.get(specs[0].offset as usize..).unwrap_or(&[]);
    let frame_bytes = 2 * nsig;
    let available = body.len() / frame_bytes;
    let nsamp = match nsamp {
        Some(n) if n > available => {
            return Err(SignalIoError::LengthMismatch {
                expected: n,
                found: available,
            })
        }
        Some(n) => n,
        None => available,
    };

    let mut channels: Vec<Channel> = specs
        .iter()
        .map(|s| Channel {
            kind: classify_kind(&s.label),
            label: s.label.clone(),
            fs,
            gain: s.gain,
            baseline: s.baseline,
            samples: Vec::with_capacity(nsamp),
        })
        .collect();
    let mut last_valid = vec![0.0f64; nsig];
    for frame in body.chunks_exact(frame_bytes).take(nsamp) {
        for (c, ch) in channels.iter_mut().enumerate() {
            let adc = i16::from_le_bytes([frame[2 * c], frame[2 * c + 1]]);
            // -32768 is WFDB's "invalid sample"; hold the previous value
            let v = if adc == i16::MIN {
                last_valid[c]
            } else {
                (adc as f64 - ch.baseline as f64) / ch.gain
            };
            last_valid[c] = v;
            ch.samples.push(v);
        }
    }
    Record::new(id, fs, channels)
}

/// Reads a CSV with a header row of labels and one numeric column per channel.
/// When `labels` is non-empty it overrides the header.
pub fn load_csv(path: &Path, fs: f64, labels: &[String]) -> Result<Record, SignalIoError> {
    let file = fs::File::open(path).map_err(|e| SignalIoError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| SignalIoError::io(path, e))?,
        None => return Err(SignalIoError::MalformedHeader("empty CSV file".into())),
    };
    let header_labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if header_labels.iter().all(|l| l.is_empty()) {
        return Err(SignalIoError::MalformedHeader("CSV header row is blank".into()));
    }
    let labels: Vec<String> = if labels.is_empty() {
        header_labels
    } else if labels.len() != header_labels.len() {
        return Err(SignalIoError::ColumnCountMismatch {
            row: 1,
            expected: labels.len(),
            found: header_labels.len(),
        });
    } else {
        labels.to_vec()
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.map_err(|e| SignalIoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != labels.len() {
            return Err(SignalIoError::ColumnCountMismatch {
                row,
                expected: labels.len(),
                found: cells.len(),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| SignalIoError::NonNumericCell {
                    row,
                    col: col + 1,
                    value: cell.to_string(),
                })?;
            columns[col].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(SignalIoError::MalformedHeader("CSV has no data rows".into()));
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let channels = labels
        .into_iter()
        .zip(columns)
        .map(|(label, samples)| Channel::new(label, fs, samples))
        .collect();
    Record::new(id, fs, channels)
}

/// Writes a record as CSV with a header row of channel labels.
pub fn write_csv(record: &Record, path: &Path) -> Result<(), SignalIoError> {
    let mut out = String::new();
    let labels: Vec<&str> = record.channels.iter().map(|c| c.label.as_str()).collect();
    out.push_str(&labels.join(","));
    out.push('\n');
    for i in 0..record.len() {
        for (c, ch) in record.channels.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", ch.samples[i]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SignalIoError::io(path, e))
}

/// The ECG channel and the pulsatile beat candidates picked from a record.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub ecg: usize,
    /// Pulsatile channel indices in record order.
    pub pulsatile: Vec<usize>,
    /// Channel that hosts the pressure onset detector, if any.
    pub proprietary_pressure: Option<usize>,
}

/// Picks the first ECG channel and every BP/ART/PAP/CVP/SV channel. The onset detector's
/// channel is the lowest-index BP; failing that ART, then PAP.
pub fn select_candidates(record: &Record) -> Result<Candidates, SignalIoError> {
    let ecg = record
        .channels
        .iter()
        .position(|c| c.kind == SignalKind::Ecg)
        .ok_or(SignalIoError::NoEcg)?;
    let pulsatile: Vec<usize> = record
        .channels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind.is_pulsatile())
        .map(|(i, _)| i)
        .collect();
    let proprietary_pressure = [SignalKind::Bp, SignalKind::Art, SignalKind::Pap]
        .iter()
        .find_map(|&kind| {
            pulsatile
                .iter()
                .copied()
                .find(|&i| record.channels[i].kind == kind)
        });
    Ok(Candidates {
        ecg,
        pulsatile,
        proprietary_pressure,
    })
}

pub fn format_annotation(beats: &[usize]) -> String {
    let mut s = String::with_capacity(beats.len() * 7);
    for b in beats {
        s.push_str(&b.to_string());
        s.push('\n');
    }
    s
}

pub fn write_annotation(ann: &Annotation, path: &Path) -> Result<(), SignalIoError> {
    let mut f = fs::File::create(path).map_err(|e| SignalIoError::io(path, e))?;
    f.write_all(format_annotation(&ann.beats).as_bytes())
        .map_err(|e| SignalIoError::io(path, e))
}

pub fn parse_annotation(text: &str) -> Result<Vec<usize>, SignalIoError> {
    let mut beats: Vec<usize> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t.parse().map_err(|_| SignalIoError::BadAnnotationLine {
            line: i + 1,
            value: t.to_string(),
        })?;
        if beats.last().is_some_and(|&prev| v <= prev) {
            return Err(SignalIoError::NonMonotonic { line: i + 1 });
        }
        beats.push(v);
    }
    Ok(beats)
}

pub fn read_annotation(path: &Path, fs: f64) -> Result<Annotation, SignalIoError> {
    let text = fs::read_to_string(path).map_err(|e| SignalIoError::io(path, e))?;
    let record_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Annotation::new(record_id, fs, parse_annotation(&text)?))
}
