//! Second-order IIR sections and zero-phase filtering.

use std::f64::consts::PI;

/// Direct-form biquad, coefficients normalised so `a0 == 1`.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 3],
}

impl Biquad {
    /// Butterworth (Q = 1/sqrt(2)) low-pass via the bilinear transform.
    pub fn lowpass(cutoff_hz: f64, fs: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, fs);
        let b1 = 1.0 - cos_w;
        Self::normalised([b1 / 2.0, b1, b1 / 2.0], [1.0 + alpha, -2.0 * cos_w, 1.0 - alpha])
    }

    /// Butterworth (Q = 1/sqrt(2)) high-pass via the bilinear transform.
    pub fn highpass(cutoff_hz: f64, fs: f64) -> Self {
        let (cos_w, alpha) = Self::prewarp(cutoff_hz, fs);
        let b1 = 1.0 + cos_w;
        Self::normalised([b1 / 2.0, -b1, b1 / 2.0], [1.0 + alpha, -2.0 * cos_w, 1.0 - alpha])
    }

    fn prewarp(cutoff_hz: f64, fs: f64) -> (f64, f64) {
        // Keep the corner strictly below Nyquist for low sampling rates.
        let f = cutoff_hz.min(0.45 * fs);
        let w0 = 2.0 * PI * f / fs;
        (w0.cos(), w0.sin() * std::f64::consts::FRAC_1_SQRT_2)
    }

    fn normalised(b: [f64; 3], a: [f64; 3]) -> Self {
        let a0 = a[0];
        Self {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [1.0, a[1] / a0, a[2] / a0],
        }
    }

    /// Causal filtering with the state initialised to the steady-state response of `x[0]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let Some(&first) = x.first() else {
            return Vec::new();
        };
        let dc_gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let y0 = first * dc_gain;
        // Transposed direct form II state for a constant input `first`.
        let mut z1 = y0 - self.b[0] * first;
        let mut z2 = self.b[2] * first - self.a[2] * y0;
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[1] * y + z2;
                z2 = self.b[2] * v - self.a[2] * y;
                y
            })
            .collect()
    }
}

/// Forward-backward application of a cascade of sections, with odd reflection padding at
/// both ends to suppress start-up transients. Output has zero phase shift.
pub fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let pad = pad.min(x.len() - 1);
    let (first, last) = (x[0], x[x.len() - 1]);
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));

    let mut y = ext;
    for s in sections {
        y = s.apply(&y);
    }
    y.reverse();
    for s in sections {
        y = s.apply(&y);
    }
    y.reverse();
    y[pad..pad + x.len()].to_vec()
}

/// Centred moving average of width `width` samples (shrinks at the edges).
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let half_lo = width / 2;
    let half_hi = width - half_lo;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
