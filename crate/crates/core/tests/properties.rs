use beatfuse::alignment::{self, ChannelDelay, DelayParams, DelaySource};
use beatfuse::detectors::general::fp_fn_remover;
use beatfuse::detectors::{DetectionSet, DetectorId};
use beatfuse::dsp::{self, BandSelection, Wavelet};
use beatfuse::evaluation::{self, Matching};
use beatfuse::fusion::{self, CorrectedSet, FusionParams};
use beatfuse::preprocess;
use beatfuse::quality::{self, LocalStatus, VarianceThresholds, WindowStatus, WindowVerdict};
use beatfuse::searchback::search_back;
use beatfuse::signal_io::{self, classify_kind};
use proptest::prelude::*;

fn wavelet() -> impl Strategy<Value = Wavelet> {
    prop_oneof![Just(Wavelet::Db6), Just(Wavelet::Haar)]
}

/// Strictly increasing beat indices below `max`.
fn beats(max: usize, n: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::btree_set(0..max, 0..n).prop_map(|s| s.into_iter().collect())
}

/// Jittered regular train with a few extra and missing beats, over a matching pulse signal.
fn noisy_train() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (
        150usize..300,
        proptest::collection::vec(-10i64..10, 40),
        proptest::collection::vec(0usize..12_000, 0..4),
        proptest::collection::vec(0usize..40, 0..3),
    )
        .prop_map(|(rr, jitter, extra, missing)| {
            let truth: Vec<usize> = jitter
                .iter()
                .enumerate()
                .map(|(i, j)| (100 + i * rr) as i64 + j)
                .map(|v| v as usize)
                .collect();
            let len = truth.last().unwrap() + 200;
            let mut x = vec![0.0f64; len];
            for &t in &truth {
                for k in 0..15usize {
                    let v = 1.0 - k as f64 / 15.0;
                    x[t + k] = x[t + k].max(v);
                    x[t - k] = x[t - k].max(v);
                }
            }
            let mut b: Vec<usize> = truth
                .iter()
                .enumerate()
                .filter(|(i, _)| !missing.contains(i))
                .map(|(_, &t)| t)
                .collect();
            b.extend(extra.into_iter().filter(|&e| e < len));
            b.sort_unstable();
            b.dedup();
            (b, x)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dwt_reconstructs(w in wavelet(), levels in 1usize..=8, extra in 0usize..300, seed in proptest::collection::vec(-100.0f64..100.0, 256..=556)) {
        let x: Vec<f64> = seed.iter().cycle().take(256 + extra).copied().collect();
        let d = dsp::dwt(&x, w, levels).unwrap();
        let y = dsp::idwt(&d).unwrap();
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn band_reconstruction_is_linear(w in wavelet(), x in proptest::collection::vec(-10.0f64..10.0, 256..400), split in 1usize..5) {
        let d = dsp::dwt(&x, w, 5).unwrap();
        let a = dsp::reconstruct_from_details(&d, &BandSelection::details(1..=split)).unwrap();
        let b = dsp::reconstruct_from_details(&d, &BandSelection::details(split + 1..=5).with_approx()).unwrap();
        for ((p, q), v) in a.iter().zip(&b).zip(&x) {
            prop_assert!((p + q - v).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_nonnegative_and_permutation_invariant(x in proptest::collection::vec(-1e3f64..1e3, 1..200), rot in 0usize..200) {
        let v = dsp::variance(&x).unwrap();
        prop_assert!(v >= 0.0);
        let mut y = x.clone();
        let k = rot % y.len();
        y.rotate_left(k);
        y.reverse();
        prop_assert!((dsp::variance(&y).unwrap() - v).abs() <= 1e-9 * (1.0 + v));
    }

    #[test]
    fn normalize_and_optimize_relations(x in proptest::collection::vec(-5.0f64..5.0, 2..300)) {
        let (n, degenerate) = preprocess::normalize(&x);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        if max != 0.0 {
            prop_assert!(!degenerate);
            for (a, b) in n.iter().zip(&x) {
                prop_assert!((a - (b - mean) / max).abs() < 1e-12);
            }
        }
        let o = preprocess::optimize(&n);
        for (a, b) in o.iter().zip(&n) {
            prop_assert!(*a >= 0.0);
            prop_assert!((a - 16.0 * b * b).abs() < 1e-12 * (1.0 + a));
        }
    }

    #[test]
    fn remover_is_idempotent((b, x) in noisy_train()) {
        let once = fp_fn_remover(&b, &x, 250.0);
        let twice = fp_fn_remover(&once, &x, 250.0);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(once.iter().all(|&i| i < x.len()));
    }

    #[test]
    fn searchback_output_is_spaced((b, x) in noisy_train()) {
        let (out, edits) = search_back(&b, &x, 250.0, 1250);
        prop_assert!(out.windows(2).all(|w| w[1] >= w[0] + 50), "beats closer than 0.2 s");
        prop_assert!(out.iter().all(|&i| i < x.len()));
        let removed = edits.iter().filter(|e| e.kind == beatfuse::searchback::EditKind::RemovedFp).count();
        prop_assert_eq!(out.len() + removed, b.len() + edits.len() - removed);
    }

    #[test]
    fn delay_preserves_intervals(b in beats(100_000, 60), d in 0usize..200) {
        let delay = ChannelDelay { channel_index: 1, delay_samples: d, source: DelaySource::Measured };
        let out = alignment::apply_delay(&b, &delay);
        let kept: Vec<usize> = b.iter().copied().filter(|&v| v >= d).collect();
        prop_assert_eq!(out.len(), kept.len());
        for (o, k) in out.iter().zip(&kept) {
            prop_assert_eq!(o + d, *k);
        }
        let shifted: Vec<usize> = b.iter().map(|v| v + d).collect();
        prop_assert_eq!(alignment::apply_delay(&shifted, &delay), b);
    }

    #[test]
    fn delay_estimate_translates(rr in 150usize..300, lag in 0usize..60, k in 0usize..40) {
        let ecg: Vec<usize> = (0..30).map(|i| 500 + i * rr).collect();
        let set = |shift: usize| {
            DetectionSet::new(1, DetectorId::WindowAbsmax, 250.0, ecg.iter().map(|e| e + lag + shift).collect())
        };
        let p = DelayParams::default();
        let a = alignment::estimate_delay(&ecg, &set(0), &p);
        let b = alignment::estimate_delay(&ecg, &set(k), &p);
        prop_assert_eq!(a.source, DelaySource::Measured);
        prop_assert_eq!(b.delay_samples, a.delay_samples + k);
    }

    #[test]
    fn metric_relations(tp in 0usize..500, fp in 0usize..500, fn_ in 0usize..500) {
        let s = evaluation::statistics(tp, fp, fn_);
        for v in [s.se, s.ppv, s.acc, s.f1] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        if s.se + s.ppv > 0.0 {
            prop_assert!((evaluation::f1_from_se_ppv(s.se, s.ppv) - s.f1).abs() < 1e-9);
        }
        prop_assert!(s.acc <= s.se.min(s.ppv) + 1e-9);
        prop_assert!(s.se.min(s.ppv) <= s.f1 + 1e-9);
    }

    #[test]
    fn optimal_matching_is_symmetric(r in beats(20_000, 80), d in beats(20_000, 80), tol in 1.0f64..300.0) {
        let a = evaluation::match_beats(&r, &d, 250.0, tol, Matching::Optimal);
        let b = evaluation::match_beats(&d, &r, 250.0, tol, Matching::Optimal);
        prop_assert_eq!(a.tp, b.tp);
        prop_assert_eq!(a.fp, b.fn_);
        prop_assert_eq!(a.fn_, b.fp);
        let g = evaluation::match_beats(&r, &d, 250.0, tol, Matching::Greedy);
        prop_assert!(g.tp <= a.tp);
        // one-to-one
        let mut seen: Vec<usize> = g.pairs.iter().map(|p| p.1).collect();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), g.tp);
    }

    #[test]
    fn compatibility_symmetric_reflexive(a in 0usize..100_000, b in 0usize..100_000, tol in 0.0f64..300.0) {
        prop_assert!(quality::beats_compatible(a, a, 250.0, tol));
        prop_assert_eq!(quality::beats_compatible(a, b, 250.0, tol), quality::beats_compatible(b, a, 250.0, tol));
    }

    #[test]
    fn verdict_monotone_in_variance(c in 0.0f64..10.0, gap in -5.0f64..10.0, v in 0.0f64..20.0, dv in 0.0f64..20.0) {
        let thr = VarianceThresholds { clean_thr: c, noisy_thr: c + gap, clean_fallback: false };
        let rank = |s: WindowStatus| match s {
            WindowStatus::AcceptEcg => 0,
            WindowStatus::FuseAll => 1,
            WindowStatus::FuseNoEcg => 2,
        };
        let (lo, _) = quality::ecg_quality_verdict(v, &thr);
        let (hi, _) = quality::ecg_quality_verdict(v + dv, &thr);
        prop_assert!(rank(hi) >= rank(lo));
    }

    #[test]
    fn fusion_rank_checksum_and_permutation(
        sets in proptest::collection::vec(beats(1250, 12), 1..8),
        rot in 0usize..8,
        scale in 0.1f64..10.0,
    ) {
        let ids = [DetectorId::WindowAbsmax, DetectorId::AdaptiveThreshold, DetectorId::LocalMax, DetectorId::PanTompkins];
        let corrected: Vec<CorrectedSet> = sets
            .iter()
            .enumerate()
            .map(|(i, b)| CorrectedSet { key: (i / 4 + 1, ids[i % 4]), beats: b.clone() })
            .collect();
        let verdict = WindowVerdict { index: 0, start: 0, end: 1250, status: WindowStatus::FuseAll, local: Some(LocalStatus::Incompatible), d2_variance: Some(scale) };
        let p = FusionParams::default();
        let a = fusion::select_window_beats(&verdict, &corrected, 0, None, 250.0, &p);
        let mut permuted = corrected.clone();
        let k = rot % permuted.len();
        permuted.rotate_left(k);
        let b = fusion::select_window_beats(&verdict, &permuted, 0, None, 250.0, &p);
        prop_assert_eq!(&a, &b);
        let n = corrected.len() as f64;
        let rank_sum = n * (n + 1.0) / 2.0;
        let reg: f64 = a.scores.iter().map(|(_, c)| c.regularity).sum();
        let com: f64 = a.scores.iter().map(|(_, c)| c.compat).sum();
        prop_assert!((reg - rank_sum).abs() < 1e-9);
        prop_assert!((com - rank_sum).abs() < 1e-9);
        for (_, c) in &a.scores {
            prop_assert!([n, 2.0 * n / 3.0, n / 3.0].iter().any(|p| (c.physio - p).abs() < 1e-9));
            prop_assert!((c.total - c.regularity - c.physio - c.compat).abs() < 1e-9);
        }
    }

    #[test]
    fn annotation_round_trip(b in beats(1_000_000, 200)) {
        let text = signal_io::format_annotation(&b);
        prop_assert_eq!(signal_io::parse_annotation(&text).unwrap(), b);
    }

    #[test]
    fn classify_kind_is_pure(label in "\\PC{0,12}") {
        prop_assert_eq!(classify_kind(&label), classify_kind(&label));
    }
}
