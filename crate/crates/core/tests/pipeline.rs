use beatfuse::evaluation::{self, Matching};
use beatfuse::pipeline::ConfigError;
use beatfuse::searchback::search_back;
use beatfuse::signal_io::{Channel, Record, SignalKind};
use beatfuse::synth::{self, NoiseEvent, NoiseKind, SynthChannel, SynthSpec};
use beatfuse::{run_record, PipelineConfig};

fn f1(truth: &[usize], det: &[usize], fs: f64) -> f64 {
    let m = evaluation::match_beats(truth, det, fs, 150.0, Matching::Greedy);
    evaluation::statistics(m.tp, m.fp, m.fn_).f1
}

fn burst(w: usize, channel: usize) -> NoiseEvent {
    NoiseEvent {
        start_s: 5.0 * w as f64,
        end_s: 5.0 * (w + 1) as f64,
        channel,
        kind: NoiseKind::EmgBurst,
        snr_db: 0.0,
    }
}

/// Clean, ECG-noisy, pressure-noisy, three-channel and ECG-only fixtures.
fn fixtures() -> Vec<SynthSpec> {
    let mut out = vec![SynthSpec::ecg_bp("clean", 250.0, 120.0, 72.0, 1)];
    let mut s = SynthSpec::ecg_bp("ecg_noise", 250.0, 120.0, 80.0, 2);
    s.noise_events = [2, 3, 9, 15, 16].iter().map(|&w| burst(w, 0)).collect();
    out.push(s);
    let mut s = SynthSpec::ecg_bp("bp_noise", 360.0, 120.0, 65.0, 3);
    s.noise_events = [4, 11].iter().map(|&w| burst(w, 1)).collect();
    out.push(s);
    let mut s = SynthSpec::ecg_bp("three", 500.0, 120.0, 95.0, 4);
    s.channels.push(SynthChannel {
        kind: SignalKind::Sv,
        label: None,
        delay_ms: 150.0,
        amplitude: 60.0,
    });
    s.noise_events = [5, 6, 7].iter().map(|&w| burst(w, 0)).collect();
    out.push(s);
    let mut s = SynthSpec::ecg_bp("ecg_only", 120.0, 120.0, 110.0, 5);
    s.channels.truncate(1);
    out.push(s);
    out
}

#[test]
fn fixtures_end_to_end() {
    for spec in fixtures() {
        let out = synth::generate(&spec).unwrap();
        let o = run_record(&out.record, &PipelineConfig::default()).unwrap();
        let fs = spec.fs;
        let score = f1(&out.truth.beats, &o.annotation.beats, fs);
        assert!(score >= 98.0, "{}: F1 {score:.2}", spec.record_id);
        // search-back never hurts, and a second application has nothing left to do
        assert!(score + 1e-9 >= f1(&out.truth.beats, &o.assembled, fs), "{}", spec.record_id);
        let (again, edits) = search_back(&o.annotation.beats, &out.record.channels[0].samples, fs, (5.0 * fs) as usize);
        assert_eq!(again, o.annotation.beats, "{}", spec.record_id);
        assert!(edits.is_empty());
        assert!(o.annotation.is_strictly_increasing());
        assert!(o.annotation.beats.iter().all(|&b| b < out.record.len()));
    }
}

#[test]
fn ecg_only_record_has_no_pressure_reference() {
    let mut s = SynthSpec::ecg_bp("solo", 250.0, 60.0, 70.0, 6);
    s.channels.truncate(1);
    let out = synth::generate(&s).unwrap();
    let o = run_record(&out.record, &PipelineConfig::default()).unwrap();
    assert!(o.quality.global.no_pressure_reference);
    assert_eq!(o.sets.len(), 5);
}

#[test]
fn record_without_ecg_is_rejected() {
    let ch = Channel::new("ABP", 250.0, vec![0.0; 2500]);
    let r = Record::new("noecg", 250.0, vec![ch]).unwrap();
    assert!(run_record(&r, &PipelineConfig::default()).is_err());
}

#[test]
fn identical_runs_identical_outcomes() {
    let out = synth::generate(&fixtures()[1]).unwrap();
    let a = run_record(&out.record, &PipelineConfig::default()).unwrap();
    let b = run_record(&out.record, &PipelineConfig::default()).unwrap();
    assert_eq!(a.annotation, b.annotation);
    assert_eq!(a.quality, b.quality);
    assert_eq!(a.fusion, b.fusion);
    assert_eq!(a.edits, b.edits);
}

#[test]
fn config_hash_tracks_settings() {
    let base = PipelineConfig::default();
    assert_eq!(base.hash(), PipelineConfig::default().hash());
    assert_eq!(base.hash().len(), 64);
    let mut c = base.clone();
    c.set("eval_tol_ms", "100").unwrap();
    assert_ne!(c.hash(), base.hash());
    let mut back = PipelineConfig::default();
    back.apply_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn config_rejects_fixed_and_unknown_keys() {
    let mut c = PipelineConfig::default();
    assert!(matches!(c.set("refractory_s", "0.3"), Err(ConfigError::Fixed { .. })));
    assert!(matches!(c.set("wavelet_depth", "6"), Err(ConfigError::Fixed { .. })));
    assert!(c.set("refractory_s", "0.2").is_ok());
    assert!(matches!(c.set("nonsense", "1"), Err(ConfigError::UnknownKey(_))));
    assert!(matches!(c.set("window_s", "-1"), Err(ConfigError::BadValue { .. })));
    assert!(matches!(c.apply_text("window_s 5"), Err(ConfigError::Syntax { .. })));
}

#[test]
fn window_length_override_changes_window_count() {
    let out = synth::generate(&fixtures()[0]).unwrap();
    let mut c = PipelineConfig::default();
    c.set("window_s", "10").unwrap();
    let o = run_record(&out.record, &c).unwrap();
    assert_eq!(o.quality.windows.len(), 12);
    assert!(f1(&out.truth.beats, &o.annotation.beats, 250.0) >= 99.0);
}
