//! Seeded synthetic multimodal records with ground-truth beat locations.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal_io::{self, Annotation, Channel, Record, SignalIoError, SignalKind};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] SignalIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NoiseKind {
    White,
    EmgBurst,
    Flatline,
    BaselineWander,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthChannel {
    pub kind: SignalKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub channel: usize,
    pub kind: NoiseKind,
    #[serde(default)]
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_id")]
    pub record_id: String,
    pub fs: f64,
    pub duration_s: f64,
    pub hr_bpm: f64,
    #[serde(default)]
    pub hrv_pct: f64,
    pub channels: Vec<SynthChannel>,
    #[serde(default)]
    pub noise_events: Vec<NoiseEvent>,
    #[serde(default)]
    pub seed: u64,
}

fn default_id() -> String {
    "synth".to_string()
}

impl SynthSpec {
    /// ECG lead II plus an arterial pressure channel 200 ms behind it.
    pub fn ecg_bp(record_id: &str, fs: f64, duration_s: f64, hr_bpm: f64, seed: u64) -> Self {
        Self {
            record_id: record_id.to_string(),
            fs,
            duration_s,
            hr_bpm,
            hrv_pct: 3.0,
            channels: vec![
                SynthChannel {
                    kind: SignalKind::Ecg,
                    label: Some("II".into()),
                    delay_ms: 0.0,
                    amplitude: 1.0,
                },
                SynthChannel {
                    kind: SignalKind::Bp,
                    label: Some("ABP".into()),
                    delay_ms: 200.0,
                    amplitude: 40.0,
                },
            ],
            noise_events: Vec::new(),
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if !(30.0..=220.0).contains(&self.hr_bpm) {
            return bad(format!("hr_bpm must lie in [30, 220], got {}", self.hr_bpm));
        }
        if !(0.0..50.0).contains(&self.hrv_pct) {
            return bad(format!("hrv_pct must lie in [0, 50), got {}", self.hrv_pct));
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        for c in &self.channels {
            if !(c.delay_ms >= 0.0 && c.delay_ms.is_finite() && c.amplitude.is_finite()) {
                return bad(format!("channel {:?} has invalid delay or amplitude", c.kind));
            }
        }
        for e in &self.noise_events {
            if !(e.start_s >= 0.0 && e.start_s < e.end_s && e.end_s <= self.duration_s) {
                return bad(format!("noise event {}..{} s outside the record", e.start_s, e.end_s));
            }
            if e.channel >= self.channels.len() {
                return bad(format!("noise event refers to missing channel {}", e.channel));
            }
            if !e.snr_db.is_finite() {
                return bad("noise event snr_db must be finite".into());
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub record: Record,
    /// R apex sample indices.
    pub truth: Annotation,
    /// Per channel: the sample each beat's waveform starts at (R for ECG, pulse foot for
    /// pressure, volume bump start for SV). Only in-bounds indices are kept.
    pub onsets: Vec<Vec<usize>>,
}

/// (amplitude, centre s, width s) Gaussian components around the R apex.
const ECG_WAVES: [(f64, f64, f64); 5] = [
    (0.12, -0.20, 0.025),
    (-0.10, -0.03, 0.008),
    (1.00, 0.00, 0.010),
    (-0.20, 0.03, 0.008),
    (0.30, 0.25, 0.040),
];
const ECG_NOISE_FRACTION: f64 = 0.01;
const PULSE_RISE_S: f64 = 0.1;
const PULSE_DECAY_S: f64 = 0.1;
const DICROTIC: (f64, f64, f64) = (0.1, 0.3, 0.03);
const SV_WIDTH_S: f64 = 0.3;
const WANDER_HZ: f64 = 0.3;

fn baseline(kind: SignalKind) -> f64 {
    match kind {
        SignalKind::Bp | SignalKind::Art => 80.0,
        SignalKind::Pap => 15.0,
        SignalKind::Cvp => 5.0,
        _ => 0.0,
    }
}

fn ecg_wave(dt: f64) -> f64 {
    ECG_WAVES
        .iter()
        .map(|&(a, c, w)| a * (-0.5 * ((dt - c) / w).powi(2)).exp())
        .sum()
}

/// Arterial-like pulse: raised-cosine upstroke, exponential run-off, small dicrotic bump.
fn pressure_wave(dt: f64) -> f64 {
    if dt < 0.0 {
        return 0.0;
    }
    let main = if dt < PULSE_RISE_S {
        0.5 * (1.0 - (PI * dt / PULSE_RISE_S).cos())
    } else {
        (-(dt - PULSE_RISE_S) / PULSE_DECAY_S).exp()
    };
    let (a, c, w) = DICROTIC;
    main + a * (-0.5 * ((dt - c) / w).powi(2)).exp()
}

fn volume_wave(dt: f64) -> f64 {
    if (0.0..SV_WIDTH_S).contains(&dt) {
        0.5 * (1.0 - (2.0 * PI * dt / SV_WIDTH_S).cos())
    } else {
        0.0
    }
}

fn beat_times(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = 60.0 / spec.hr_bpm;
    let jitter = spec.hrv_pct / 100.0;
    let mut times = Vec::new();
    let mut t = 0.5 * base;
    while t < spec.duration_s {
        times.push(t);
        let u: f64 = rng.gen_range(-1.0..=1.0);
        t += base * (1.0 + jitter * u);
    }
    times
}

/// Renders `wave` at every beat time into a fresh buffer, looking `reach` seconds around it.
fn render(n: usize, fs: f64, times: &[f64], offset_s: f64, reach: (f64, f64), wave: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &t in times {
        let t0 = t + offset_s;
        let lo = ((t0 + reach.0) * fs).floor().max(0.0) as usize;
        let hi = (((t0 + reach.1) * fs).ceil().max(0.0) as usize).min(n);
        for (i, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
            *v += wave(i as f64 / fs - t0);
        }
    }
    x
}

fn noise_rms(clean: &[f64], snr_db: f64) -> f64 {
    let (lo, hi) = clean
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let p2p = if hi > lo { hi - lo } else { 1.0 };
    (p2p * p2p / 8.0 / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn apply_noise(x: &mut [f64], clean_ref: &[f64], e: &NoiseEvent, fs: f64, rng: &mut ChaCha8Rng) {
    let lo = ((e.start_s * fs).round() as usize).min(x.len());
    let hi = ((e.end_s * fs).round() as usize).min(x.len());
    if hi <= lo {
        return;
    }
    let rms = noise_rms(clean_ref, e.snr_db);
    match e.kind {
        NoiseKind::White => {
            for v in &mut x[lo..hi] {
                let g: f64 = StandardNormal.sample(rng);
                *v += rms * g;
            }
        }
        NoiseKind::EmgBurst => {
            // bursts of 50-300 ms separated by 0-200 ms, random gain, rescaled to `rms`
            let mut env = vec![0.0; hi - lo];
            let mut i = 0;
            while i < env.len() {
                let on = (rng.gen_range(0.05..0.3) * fs) as usize + 1;
                let gain: f64 = rng.gen_range(0.5..1.5);
                for v in env.iter_mut().skip(i).take(on) {
                    *v = gain;
                }
                i += on + (rng.gen_range(0.0..0.2) * fs) as usize;
            }
            let noise: Vec<f64> = env
                .iter()
                .map(|g| {
                    let n: f64 = StandardNormal.sample(rng);
                    g * n
                })
                .collect();
            let power = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
            let scale = if power > 0.0 { rms / power.sqrt() } else { 0.0 };
            for (v, n) in x[lo..hi].iter_mut().zip(noise) {
                *v += scale * n;
            }
        }
        NoiseKind::Flatline => {
            let level = x[lo];
            for v in &mut x[lo..hi] {
                *v = level;
            }
        }
        NoiseKind::BaselineWander => {
            let amp = rms * std::f64::consts::SQRT_2;
            for (i, v) in x[lo..hi].iter_mut().enumerate() {
                *v += amp * (2.0 * PI * WANDER_HZ * (i as f64) / fs).sin();
            }
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let fs = spec.fs;
    let n = spec.len();
    if n == 0 {
        return Err(SynthError::InvalidSpec("record has no samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let times = beat_times(spec, &mut rng);
    let to_index = |t: f64| (t * fs).round() as usize;
    let truth: Vec<usize> = times.iter().map(|&t| to_index(t)).filter(|&i| i < n).collect();

    let mut channels = Vec::with_capacity(spec.channels.len());
    let mut cleans = Vec::with_capacity(spec.channels.len());
    let mut onsets = Vec::with_capacity(spec.channels.len());
    for c in &spec.channels {
        let delay = c.delay_ms / 1000.0;
        let mut x = match c.kind {
            SignalKind::Ecg => render(n, fs, &times, delay, (-0.4, 0.5), ecg_wave),
            SignalKind::Sv => render(n, fs, &times, delay, (0.0, SV_WIDTH_S), volume_wave),
            _ => render(n, fs, &times, delay, (0.0, 1.5), pressure_wave),
        };
        let base = baseline(c.kind);
        for v in &mut x {
            *v = base + c.amplitude * *v;
        }
        let mut clean = x.clone();
        if c.kind == SignalKind::Ecg {
            let sd = ECG_NOISE_FRACTION * c.amplitude.abs();
            for v in &mut x {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v += sd * g;
            }
            clean.clone_from(&x);
        }
        onsets.push(times.iter().map(|&t| to_index(t + delay)).filter(|&i| i < n).collect());
        cleans.push(clean);
        channels.push(x);
    }
    for e in &spec.noise_events {
        apply_noise(&mut channels[e.channel], &cleans[e.channel], e, fs, &mut rng);
    }

    let channels = spec
        .channels
        .iter()
        .zip(channels)
        .map(|(c, x)| {
            let label = c.label.clone().unwrap_or_else(|| c.kind.as_str().to_string());
            let mut ch = Channel::new(label, fs, x);
            ch.kind = c.kind;
            ch
        })
        .collect();
    let record = Record::new(spec.record_id.clone(), fs, channels)?;
    Ok(SynthOutput {
        truth: Annotation::new(spec.record_id.clone(), fs, truth),
        record,
        onsets,
    })
}

/// Writes `<id>.csv` and `<id>.truth` into `dir`; returns both paths.
pub fn write_outputs(out: &SynthOutput, dir: &Path) -> Result<(PathBuf, PathBuf), SynthError> {
    let csv = dir.join(format!("{}.csv", out.record.id));
    let truth = dir.join(format!("{}.truth", out.record.id));
    signal_io::write_csv(&out.record, &csv)?;
    signal_io::write_annotation(&out.truth, &truth)?;
    Ok((csv, truth))
}
