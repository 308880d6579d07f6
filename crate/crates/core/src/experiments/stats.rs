//! Confidence intervals and histograms for Monte-Carlo summaries.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Upper bins cap for Freedman-Diaconis histograms of heavy-tailed data.
pub const MAX_BINS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub n: usize,
}

impl MeanCi {
    /// True when the whole interval lies strictly below zero.
    pub fn below_zero(&self) -> bool {
        self.high < 0.0
    }
}

/// Sample mean with a normal-approximation 95% interval.
pub fn mean_ci(values: &[f64]) -> MeanCi {
    let n = values.len();
    if n == 0 {
        return MeanCi { mean: f64::NAN, low: f64::NAN, high: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi { mean, low: mean, high: mean, n };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z95 * (var / n as f64).sqrt();
    MeanCi { mean, low: mean - half, high: mean + half, n }
}

/// Interval for `mean(a - b)` over paired samples.
pub fn paired_difference(a: &[f64], b: &[f64]) -> MeanCi {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_ci(&d)
}

/// BER interval from per-frame error counts, each frame carrying
/// `bits_per_frame` bits. Zero observed errors give the rule-of-three bound
/// `[0, 3 / bits]`.
pub fn ber_interval(frame_errors: &[u64], bits_per_frame: u64) -> (f64, f64, f64) {
    let bits = frame_errors.len() as u64 * bits_per_frame;
    if bits == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let errors: u64 = frame_errors.iter().sum();
    let ber = errors as f64 / bits as f64;
    if errors == 0 {
        return (0.0, 0.0, 3.0 / bits as f64);
    }
    let per_frame: Vec<f64> = frame_errors.iter().map(|&e| e as f64 / bits_per_frame as f64).collect();
    let ci = mean_ci(&per_frame);
    (ber, ci.low.max(0.0), ci.high)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Normalized so that `sum(density * width) = 1`.
    pub density: Vec<f64>,
    /// Bin width chosen by the Freedman-Diaconis rule, before capping.
    pub fd_width: f64,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Index of the most populated bin.
    pub fn mode_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }
}

/// Freedman-Diaconis histogram, width `2 IQR / n^(1/3)`, bin count capped
/// at [`MAX_BINS`]. Non-finite values are ignored.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return Histogram { edges: vec![0.0, 1.0], counts: vec![0], density: vec![0.0], fd_width: f64::NAN };
    }
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let fd_width = 2.0 * iqr / (v.len() as f64).cbrt();
    let span = hi - lo;
    let bins = if span <= 0.0 {
        1
    } else if fd_width > 0.0 && fd_width.is_finite() {
        ((span / fd_width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        // degenerate IQR; fall back to Sturges
        ((v.len() as f64).log2().ceil() as usize + 1).clamp(1, MAX_BINS)
    };
    let width = if span > 0.0 { span / bins as f64 } else { 1.0 };
    let start = if span > 0.0 { lo } else { lo - 0.5 };
    let edges: Vec<f64> = (0..=bins).map(|i| start + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &x in &v {
        let i = (((x - start) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = v.len() as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Histogram { edges, counts, density, fd_width }
}
