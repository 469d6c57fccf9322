//! Orthogonal wavelet filter banks and the multilevel Mallat cascade.
//!
//! Boundary handling is half-point symmetric extension (`... x1 x0 | x0 x1 ... xn-1 | xn-1 xn-2 ...`).
//! Each level produces `floor((n + taps - 1) / 2)` coefficients, so the coefficient
//! layout matches the common "symmetric" mode of established wavelet toolkits and
//! fixtures produced by them can be compared directly.

use serde::{Deserialize, Serialize};

use super::DspError;

/// Daubechies 6 (12 taps) decomposition low-pass filter.
const DB6_DEC_LO: [f64; 12] = [
    -0.0010773010853084796,
    0.004777257510945511,
    0.0005538422011614961,
    -0.03158203931748603,
    0.027522865530305727,
    0.09750160558732304,
    -0.12976686756726194,
    -0.22626469396543983,
    0.31525035170919763,
    0.7511339080210954,
    0.49462389039845306,
    0.11154074335010947,
];

const HAAR_DEC_LO: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wavelet {
    Db6,
    Haar,
}

/// The four filters of a two-channel orthogonal filter bank.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
    pub rec_lo: Vec<f64>,
    pub rec_hi: Vec<f64>,
}

impl Wavelet {
    pub fn dec_lo(self) -> &'static [f64] {
        match self {
            Wavelet::Db6 => &DB6_DEC_LO,
            Wavelet::Haar => &HAAR_DEC_LO,
        }
    }

    pub fn taps(self) -> usize {
        self.dec_lo().len()
    }

    /// Builds the quadrature-mirror bank from the low-pass prototype.
    pub fn filter_bank(self) -> FilterBank {
        let lo = self.dec_lo();
        let n = lo.len();
        let dec_hi: Vec<f64> = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                sign * lo[n - 1 - j]
            })
            .collect();
        let rec_lo: Vec<f64> = lo.iter().rev().copied().collect();
        let rec_hi: Vec<f64> = dec_hi.iter().rev().copied().collect();
        FilterBank {
            dec_lo: lo.to_vec(),
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }
}

/// Multilevel decomposition. `details[0]` is d1, the finest band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwtDecomposition {
    pub wavelet: Wavelet,
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    pub original_len: usize,
}

impl DwtDecomposition {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Detail band `level` (1-based, 1 = finest).
    pub fn detail(&self, level: usize) -> Option<&[f64]> {
        level
            .checked_sub(1)
            .and_then(|i| self.details.get(i))
            .map(Vec::as_slice)
    }
}

/// Index into `x` after half-point symmetric reflection.
#[inline]
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn analysis_step(x: &[f64], bank: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let taps = bank.dec_lo.len();
    let n = x.len() as isize;
    let out_len = (x.len() + taps - 1) / 2;
    let mut approx = Vec::with_capacity(out_len);
    let mut detail = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let centre = 2 * k as isize + 1;
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..taps {
            let v = x[reflect(centre - j as isize, n)];
            a += bank.dec_lo[j] * v;
            d += bank.dec_hi[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

fn synthesis_step(approx: &[f64], detail: &[f64], bank: &FilterBank) -> Vec<f64> {
    let taps = bank.rec_lo.len();
    let n = approx.len();
    let out_len = (2 * n + 2).saturating_sub(taps);
    let offset = taps - 2;
    let mut out = vec![0.0; out_len];
    // Upsampled coefficients sit at even positions 2i; output o picks tap (o + offset - 2i).
    for (o, slot) in out.iter_mut().enumerate() {
        let pos = o + offset;
        let i_hi = (pos / 2).min(n - 1);
        let i_lo = pos.saturating_sub(taps - 1).div_ceil(2);
        let mut acc = 0.0;
        for i in i_lo..=i_hi {
            let tap = pos - 2 * i;
            acc += approx[i] * bank.rec_lo[tap] + detail[i] * bank.rec_hi[tap];
        }
        *slot = acc;
    }
    out
}

/// Deepest level for which `signal_len >= 2^level`, capped at `cap`.
pub fn max_feasible_level(signal_len: usize, cap: usize) -> usize {
    if signal_len < 2 {
        return 0;
    }
    let lvl = (usize::BITS - 1 - signal_len.leading_zeros()) as usize;
    lvl.min(cap)
}

pub fn dwt(signal: &[f64], wavelet: Wavelet, levels: usize) -> Result<DwtDecomposition, DspError> {
    if levels == 0 || levels >= usize::BITS as usize || signal.len() < (1usize << levels) {
        return Err(DspError::SignalTooShort {
            len: signal.len(),
            levels,
        });
    }
    let bank = wavelet.filter_bank();
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = analysis_step(&current, &bank);
        details.push(d);
        current = a;
    }
    Ok(DwtDecomposition {
        wavelet,
        details,
        approx: current,
        original_len: signal.len(),
    })
}

pub fn idwt(decomp: &DwtDecomposition) -> Result<Vec<f64>, DspError> {
    let bank = decomp.wavelet.filter_bank();
    let mut current = decomp.approx.clone();
    for (idx, detail) in decomp.details.iter().enumerate().rev() {
        // Odd-length inputs leave the approximation one coefficient longer than the
        // detail band of the next finer level; the surplus sample is dropped.
        if current.len() == detail.len() + 1 {
            current.pop();
        }
        if current.len() != detail.len() || detail.is_empty() {
            return Err(DspError::InconsistentLengths {
                level: idx + 1,
                approx: current.len(),
                detail: detail.len(),
            });
        }
        current = synthesis_step(&current, detail, &bank);
    }
    if current.len() < decomp.original_len {
        return Err(DspError::InconsistentLengths {
            level: 0,
            approx: current.len(),
            detail: decomp.original_len,
        });
    }
    current.truncate(decomp.original_len);
    Ok(current)
}

/// Which bands survive a partial reconstruction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BandSelection {
    pub details: Vec<usize>,
    pub approx: bool,
}

impl BandSelection {
    pub fn details<I: IntoIterator<Item = usize>>(levels: I) -> Self {
        Self {
            details: levels.into_iter().collect(),
            approx: false,
        }
    }

    pub fn with_approx(mut self) -> Self {
        self.approx = true;
        self
    }
}

/// Inverse transform with every band outside `keep` zeroed.
pub fn reconstruct_from_details(
    decomp: &DwtDecomposition,
    keep: &BandSelection,
) -> Result<Vec<f64>, DspError> {
    let levels = decomp.levels();
    if let Some(&bad) = keep.details.iter().find(|&&l| l == 0 || l > levels) {
        return Err(DspError::BadLevelIndex { level: bad, levels });
    }
    let mut masked = decomp.clone();
    for (i, band) in masked.details.iter_mut().enumerate() {
        if !keep.details.contains(&(i + 1)) {
            band.iter_mut().for_each(|c| *c = 0.0);
        }
    }
    if !keep.approx {
        masked.approx.iter_mut().for_each(|c| *c = 0.0);
    }
    idwt(&masked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db6_is_orthonormal() {
        let h = Wavelet::Db6.dec_lo();
        let sum: f64 = h.iter().sum();
        assert!((sum - std::f64::consts::SQRT_2).abs() < 1e-10);
        for shift in 0..h.len() / 2 {
            let dot: f64 = (0..h.len() - 2 * shift).map(|i| h[i] * h[i + 2 * shift]).sum();
            let expected = if shift == 0 { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-10, "shift {shift}: {dot}");
        }
    }

    #[test]
    fn haar_on_constant() {
        let x = vec![3.0; 8];
        let d = dwt(&x, Wavelet::Haar, 1).unwrap();
        assert!(d.details[0].iter().all(|v| v.abs() < 1e-12));
        assert!(d
            .approx
            .iter()
            .all(|v| (v - 3.0 * std::f64::consts::SQRT_2).abs() < 1e-12));
    }

    #[test]
    fn lowpass_keeps_constant() {
        let d = dwt(&[1.0; 4], Wavelet::Haar, 1).unwrap();
        let y = reconstruct_from_details(&d, &BandSelection::default().with_approx()).unwrap();
        assert_eq!(y.len(), 4);
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn empty_selection_is_zero() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let d = dwt(&x, Wavelet::Db6, 3).unwrap();
        let y = reconstruct_from_details(&d, &BandSelection::default()).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_short_and_bad_levels() {
        assert!(matches!(
            dwt(&[1.0, 2.0, 3.0], Wavelet::Haar, 2),
            Err(DspError::SignalTooShort { .. })
        ));
        let d = dwt(&[0.0; 16], Wavelet::Haar, 2).unwrap();
        assert!(matches!(
            reconstruct_from_details(&d, &BandSelection::details([3])),
            Err(DspError::BadLevelIndex { level: 3, levels: 2 })
        ));
    }

    #[test]
    fn corrupted_layout_is_reported() {
        let mut d = dwt(&[1.0; 32], Wavelet::Db6, 2).unwrap();
        d.details[0].truncate(3);
        assert!(matches!(idwt(&d), Err(DspError::InconsistentLengths { .. })));
    }

    #[test]
    fn feasible_level() {
        assert_eq!(max_feasible_level(255, 8), 7);
        assert_eq!(max_feasible_level(256, 8), 8);
        assert_eq!(max_feasible_level(100_000, 8), 8);
        assert_eq!(max_feasible_level(1, 8), 0);
    }
}
