//! Seam repairs: a contraction reported on both sides of a window boundary, and one lost
//! across the boundary by delay correction.

use beatfuse::searchback::{search_back, EditKind};

const FS: f64 = 250.0;
const WINDOW: usize = 1250;

fn train() -> Vec<usize> {
    (0..30).map(|k| 48 + 200 * k).collect()
}

fn signal(beats: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0f64; 6200];
    for &b in beats {
        for k in 0..12usize {
            let v = 1.0 - k as f64 / 12.0;
            x[b + k] = x[b + k].max(v);
            if b >= k {
                x[b - k] = x[b - k].max(v);
            }
        }
    }
    x
}

#[test]
fn duplicate_at_seam_removed() {
    let truth = train();
    assert!(truth.contains(&1248));
    let mut beats = truth.clone();
    beats.push(1256);
    beats.sort_unstable();
    let (out, edits) = search_back(&beats, &signal(&truth), FS, WINDOW);
    assert_eq!(out, truth);
    assert_eq!(edits.len(), 1, "{edits:?}");
    assert_eq!(edits[0].kind, EditKind::RemovedFp);
    assert_eq!(edits[0].at, 1256);
    assert!(edits[0].at_seam);
    assert_eq!(edits[0].window_seam, 1);
}

#[test]
fn gap_at_seam_filled() {
    let truth = train();
    let beats: Vec<usize> = truth.iter().copied().filter(|&b| b != 1248).collect();
    let (out, edits) = search_back(&beats, &signal(&truth), FS, WINDOW);
    assert_eq!(out, truth);
    assert_eq!(edits.len(), 1, "{edits:?}");
    assert_eq!(edits[0].kind, EditKind::InsertedFn);
    assert_eq!(edits[0].at, 1248);
    assert!(edits[0].at_seam);
}

#[test]
fn clean_annotation_untouched() {
    let truth = train();
    let (out, edits) = search_back(&truth, &signal(&truth), FS, WINDOW);
    assert_eq!(out, truth);
    assert!(edits.is_empty());
}
