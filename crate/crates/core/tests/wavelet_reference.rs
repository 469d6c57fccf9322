//! Wavelet transforms checked against coefficients produced by PyWavelets
//! (`fixtures/gen_fixtures.py`, symmetric extension).

use beatfuse::dsp::{self, BandSelection, Wavelet};
use beatfuse::preprocess;
use serde_json::Value;

const TOL: f64 = 1e-9;

fn fixture(name: &str) -> Value {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn vec_of(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn assert_close(got: &[f64], want: &[f64], what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= TOL * (1.0 + w.abs()), "{what}[{i}]: {g} vs {w}");
    }
}

#[test]
fn ramp_db6_three_levels_matches_reference() {
    let f = fixture("ramp64_db6_l3.json");
    let x = vec_of(&f["signal"]);
    let d = dsp::dwt(&x, Wavelet::Db6, 3).unwrap();
    assert_close(&d.approx, &vec_of(&f["approx"]), "cA3");
    for (lvl, want) in f["details"].as_array().unwrap().iter().enumerate() {
        assert_close(d.detail(lvl + 1).unwrap(), &vec_of(want), &format!("cD{}", lvl + 1));
    }
    assert_close(&dsp::idwt(&d).unwrap(), &x, "round trip");
}

#[test]
fn two_tones_without_finest_band_match_reference() {
    let f = fixture("tones500_db6_l4_no_d1.json");
    let x = vec_of(&f["signal"]);
    let d = dsp::dwt(&x, Wavelet::Db6, 4).unwrap();
    let y = dsp::reconstruct_from_details(&d, &BandSelection::details(2..=4).with_approx()).unwrap();
    assert_close(&y, &vec_of(&f["expected"]), "tones");
    // both tones lie below the d1 band, so the interior is essentially unchanged
    let interior_err = x[100..1948]
        .iter()
        .zip(&y[100..1948])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(interior_err < 0.05, "{interior_err}");
}

#[test]
fn ecg_denoise_keeps_bands_two_to_four() {
    let f = fixture("ecg250_bands234.json");
    let x = vec_of(&f["signal"]);
    let p = preprocess::denoise_ecg(&x, 250.0).unwrap();
    assert_close(&p.denoised, &vec_of(&f["denoised"]), "denoised");
}

#[test]
fn haar_baseline_removal_matches_reference() {
    let f = fixture("ecg250_bands234.json");
    let x = vec_of(&f["signal"]);
    assert_eq!(preprocess::baseline_depth(250.0), 7);
    let y = preprocess::remove_baseline_pulsatile(&x, 250.0).unwrap();
    assert_close(&y, &vec_of(&f["haar7_no_approx"]), "haar");
}
