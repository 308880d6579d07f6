//! Rayleigh block-fading multipath channel with an exponential power profile.
//!
//! Tap `l` sits at delay `l * spacing` samples with mean power proportional
//! to `exp(-l / L_d)`, normalized so the powers sum to one. `L_d` is chosen so
//! the magnitude of the frequency correlation
//! `|sum_l p_l exp(-j 2 pi B_c l spacing T_s)|` equals one half at the
//! configured coherence bandwidth `B_c`, where `T_s = 1 / (N_c f_sub)`. If
//! sample-spaced taps cannot decorrelate that fast, the spacing is widened to
//! the smallest integer for which the target is reachable.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const COHERENCE_LEVEL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    pub powers: Vec<f64>,
    pub spacing: usize,
    /// `L_d` in taps; infinite means a uniform profile.
    pub decay_taps: f64,
}

impl ChannelProfile {
    /// Single-tap flat channel.
    pub fn flat() -> Self {
        Self { powers: vec![1.0], spacing: 1, decay_taps: f64::INFINITY }
    }

    pub fn exponential(taps: usize, decay_taps: f64, spacing: usize) -> Result<Self> {
        if taps == 0 || spacing == 0 {
            return Err(Error::InvalidArgument("channel needs at least one tap and spacing >= 1".into()));
        }
        let raw: Vec<f64> = (0..taps)
            .map(|l| if decay_taps.is_infinite() { 1.0 } else { (-(l as f64) / decay_taps).exp() })
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self { powers: raw.iter().map(|p| p / total).collect(), spacing, decay_taps })
    }

    /// Magnitude of the normalized frequency correlation at offset `df_norm`
    /// (frequency offset times sample period).
    pub fn correlation(&self, df_norm: f64) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, p) in self.powers.iter().enumerate() {
            acc += Complex64::from_polar(*p, -2.0 * PI * df_norm * (l * self.spacing) as f64);
        }
        acc.norm()
    }

    /// Profile whose correlation at `coherence_bw_hz` is one half.
    pub fn from_coherence_bandwidth(taps: usize, coherence_bw_hz: f64, n_sub: usize, f_sub_hz: f64) -> Result<Self> {
        if taps == 0 {
            return Err(Error::InvalidArgument("channel needs at least one tap".into()));
        }
        if taps == 1 {
            return Ok(Self::flat());
        }
        if !(coherence_bw_hz > 0.0 && f_sub_hz > 0.0) || n_sub == 0 {
            return Err(Error::InvalidArgument("coherence bandwidth and spacing must be positive".into()));
        }
        let df_norm = coherence_bw_hz / (n_sub as f64 * f_sub_hz);
        let max_spacing = (n_sub / taps).max(1);
        for spacing in 1..=max_spacing {
            let uniform = Self::exponential(taps, f64::INFINITY, spacing)?;
            if uniform.correlation(df_norm) > COHERENCE_LEVEL {
                continue;
            }
            // correlation -> 1 as the decay rate grows; bisect on the rate 1/L_d
            let f = |rate: f64| -> f64 {
                let decay = if rate == 0.0 { f64::INFINITY } else { 1.0 / rate };
                Self::exponential(taps, decay, spacing).map(|p| p.correlation(df_norm)).unwrap_or(1.0)
                    - COHERENCE_LEVEL
            };
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            while f(hi) < 0.0 {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::InvalidArgument("could not bracket channel decay".into()));
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let rate = 0.5 * (lo + hi);
            return Self::exponential(taps, 1.0 / rate, spacing);
        }
        Err(Error::InvalidArgument(format!(
            "{taps} taps cannot reach correlation {COHERENCE_LEVEL} at {coherence_bw_hz} Hz"
        )))
    }

    /// Delay of the last tap in samples.
    pub fn max_delay(&self) -> usize {
        (self.powers.len() - 1) * self.spacing
    }
}

/// One channel realization: impulse response over `N_c` samples and its DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    /// `H_k = sum_n h[n] exp(-j 2 pi k n / N_c)`.
    pub freq: Vec<Complex64>,
}

pub fn rayleigh_channel<R: Rng + ?Sized>(profile: &ChannelProfile, n_sub: usize, rng: &mut R) -> Result<ChannelRealization> {
    if profile.max_delay() >= n_sub {
        return Err(Error::InvalidDimension("channel longer than the symbol".into()));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); n_sub];
    for (l, p) in profile.powers.iter().enumerate() {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        h[l * profile.spacing] = Complex64::new(a, b) * (p / 2.0).sqrt();
    }
    let freq = channel_dft(&h);
    Ok(ChannelRealization { h, freq })
}

fn channel_dft(h: &[Complex64]) -> Vec<Complex64> {
    let n = h.len();
    let taps: Vec<(usize, Complex64)> = h.iter().copied().enumerate().filter(|(_, z)| z.norm_sqr() > 0.0).collect();
    (0..n)
        .map(|k| {
            taps.iter()
                .map(|&(m, z)| z * Complex64::from_polar(1.0, -2.0 * PI * ((k * m) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_channel_is_constant_over_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = rayleigh_channel(&ChannelProfile::flat(), 64, &mut rng).unwrap();
        let m0 = c.freq[0].norm();
        assert!(c.freq.iter().all(|z| (z.norm() - m0).abs() < 1e-14));
    }

    #[test]
    fn parseval_under_unnormalized_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, 128, 15e3).unwrap();
        let c = rayleigh_channel(&p, 128, &mut rng).unwrap();
        let lhs: f64 = c.freq.iter().map(|z| z.norm_sqr()).sum();
        let rhs: f64 = 128.0 * c.h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn coherence_mapping_hits_half_correlation() {
        for (n_sub, f_sub) in [(128usize, 15e3), (512, 15e3)] {
            let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, n_sub, f_sub).unwrap();
            let df = 800e3 / (n_sub as f64 * f_sub);
            assert_abs_diff_eq!(p.correlation(df), 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(p.powers.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            assert!(p.powers.windows(2).all(|w| w[1] <= w[0]));
        }
        // sample-spaced taps are too short at the full 7.68 MHz bandwidth
        let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, 512, 15e3).unwrap();
        assert_eq!(p.spacing, 2);
        let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, 128, 15e3).unwrap();
        assert_eq!(p.spacing, 1);
    }

    #[test]
    fn empirical_frequency_correlation() {
        // full-scale bandwidth; subcarrier offset closest to 800 kHz
        let (n_sub, f_sub) = (512usize, 15e3);
        let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, n_sub, f_sub).unwrap();
        let m = (800e3 / f_sub).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cross = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        let trials = 4000;
        for _ in 0..trials {
            let c = rayleigh_channel(&p, n_sub, &mut rng).unwrap();
            for k in (0..n_sub).step_by(16) {
                cross += c.freq[k] * c.freq[(k + m) % n_sub].conj();
                pow += c.freq[k].norm_sqr();
            }
        }
        let rho = cross.norm() / pow;
        assert!((rho - 0.5).abs() < 0.05, "correlation {rho}");
    }

    #[test]
    fn unit_average_power() {
        let p = ChannelProfile::from_coherence_bandwidth(4, 800e3, 128, 15e3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 20_000;
        let e: f64 = (0..trials)
            .map(|_| rayleigh_channel(&p, 128, &mut rng).unwrap().h.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / trials as f64;
        assert!((e - 1.0).abs() < 0.03, "{e}");
    }
}
