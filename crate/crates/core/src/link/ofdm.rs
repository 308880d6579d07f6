//! Frequency-domain OFDM symbol model `r = V H s + n`.
//!
//! The cyclic prefix is not modelled: every vector here is already the
//! post-DFT symbol at perfect timing.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::channel::{rayleigh_channel, ChannelProfile, ChannelRealization};
use crate::link::conv::{conv_encode, info_len, ViterbiDecoder, DEFAULT_TRACEBACK};
use crate::link::qam::{qam16_llr, qam16_map, BITS_PER_SYMBOL};
use crate::phase_noise::{spectral_vector_with, wiener_trajectory, PhaseNoiseRealization, SpectralVector, WienerConfig};
use crate::spectral::UnitaryDft;

/// Seed of the fixed pseudo-random QPSK pilot sequence.
/// How `snr_db` maps to the noise variance of each symbol.
pub const SNR_DEFINITION: &str =
    "noise variance = mean over subcarriers of |H_k s_k|^2 of the symbol, divided by 10^(snr_db/10)";

pub const PILOT_SEED: u64 = 0x5049_4c4f_5453;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseMode {
    /// One trajectory runs through every symbol of a frame.
    Continuous,
    /// Each symbol draws a fresh trajectory.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKnowledge {
    Genie,
    /// Per-subcarrier LS on a known preamble symbol, ignoring its phase noise.
    PilotLs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub n_sub: usize,
    pub f_sub_hz: f64,
    pub pilot_fraction: f64,
    pub snr_db: f64,
    pub taps: usize,
    pub coherence_bw_hz: f64,
    pub rho: f64,
    pub symbols_per_frame: usize,
    pub wiener: WienerConfig,
    pub phase_mode: PhaseMode,
    pub channel_knowledge: ChannelKnowledge,
    /// Column depth of the per-symbol bit interleaver; 0 or 1 disables it.
    pub interleaver_depth: usize,
    pub traceback: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            n_sub: 128,
            f_sub_hz: 15e3,
            pilot_fraction: 0.08,
            snr_db: 30.0,
            taps: 4,
            coherence_bw_hz: 800e3,
            rho: 0.02,
            symbols_per_frame: 2,
            wiener: WienerConfig::default(),
            phase_mode: PhaseMode::Continuous,
            channel_knowledge: ChannelKnowledge::Genie,
            interleaver_depth: 16,
            traceback: DEFAULT_TRACEBACK,
        }
    }
}

impl LinkConfig {
    pub fn pilot_count(&self) -> usize {
        (self.pilot_fraction * self.n_sub as f64).round() as usize
    }

    /// Checks every invariant for an estimator of dimension `dim` and returns
    /// all violations at once.
    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        let k = self.pilot_count();
        if self.n_sub < 2 {
            v.push(format!("n_sub must be at least 2 (got {})", self.n_sub));
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction < 1.0) {
            v.push(format!("pilot_fraction must lie in (0, 1) (got {})", self.pilot_fraction));
        }
        if dim == 0 {
            v.push("dim must be positive".into());
        }
        if k < dim {
            v.push(format!("pilot count {k} is below the estimator dimension {dim}"));
        }
        if k >= self.n_sub {
            v.push(format!("pilot count {k} leaves no data subcarriers"));
        }
        if self.taps == 0 {
            v.push("taps must be positive".into());
        }
        if !(self.f_sub_hz > 0.0) || !(self.coherence_bw_hz > 0.0) {
            v.push("f_sub_hz and coherence_bw_hz must be positive".into());
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            v.push(format!("rho must be finite and nonnegative (got {})", self.rho));
        }
        if self.symbols_per_frame == 0 {
            v.push("symbols_per_frame must be positive".into());
        }
        if self.snr_db.is_nan() {
            v.push("snr_db is NaN".into());
        }
        let data = self.n_sub.saturating_sub(k);
        if info_len(data * BITS_PER_SYMBOL).map_or(true, |n| n == 0) {
            v.push(format!("{data} data subcarriers cannot carry a terminated codeword"));
        }
        v
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let v = self.violations(dim);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn noise_variance(&self, signal_power: f64) -> f64 {
        if self.snr_db.is_infinite() && self.snr_db > 0.0 {
            0.0
        } else {
            signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

/// `K` evenly spaced pilots starting at subcarrier 0 with fixed QPSK values.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    pub indices: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl PilotPattern {
    pub fn new(n_sub: usize, count: usize) -> Result<Self> {
        if count == 0 || count > n_sub {
            return Err(Error::InvalidArgument(format!("cannot place {count} pilots on {n_sub} subcarriers")));
        }
        let indices: Vec<usize> = (0..count).map(|i| i * n_sub / count).collect();
        let values = qpsk_sequence(PILOT_SEED, count);
        Ok(Self { indices, values })
    }

    /// Every subcarrier is a pilot.
    pub fn full(n_sub: usize) -> Self {
        Self { indices: (0..n_sub).collect(), values: qpsk_sequence(PILOT_SEED, n_sub) }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn data_indices(&self, n_sub: usize) -> Vec<usize> {
        let mut mask = vec![true; n_sub];
        for &i in &self.indices {
            mask[i] = false;
        }
        (0..n_sub).filter(|&i| mask[i]).collect()
    }
}

/// Unit-modulus QPSK values `exp(j (pi/4 + q pi/2))` from a seeded stream.
pub fn qpsk_sequence(seed: u64, len: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let q: u32 = rng.random_range(0..4);
            Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 + q as f64 * std::f64::consts::FRAC_PI_2)
        })
        .collect()
}

/// Column-wise block interleaver on the coded bits of one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(len: usize, depth: usize) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        if depth > 1 {
            perm.sort_by_key(|&i| (i % depth, i / depth));
        }
        Self { perm }
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.perm.iter().map(|&i| x[i]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); y.len()];
        for (j, &i) in self.perm.iter().enumerate() {
            out[i] = y[j];
        }
        out
    }
}

/// `r = V H s + n`, with `V` built from the spectral vector of `theta` and
/// complex Gaussian noise of variance `noise_var` per subcarrier.
///
/// `unit_noise` holds standard complex normal draws (`E|z|^2 = 1`) so that a
/// fixed noise shape can be reused across SNR points.
pub fn transmit_receive(
    dft: &UnitaryDft,
    w: &[Complex64],
    delta: &SpectralVector,
    noise_var: f64,
    unit_noise: &[Complex64],
) -> Vec<Complex64> {
    let mut r = dft.apply_v(delta.as_slice(), w);
    let sigma = noise_var.sqrt();
    for (ri, z) in r.iter_mut().zip(unit_noise) {
        *ri += z * sigma;
    }
    r
}

/// Derotation `y = V_hat^H r`.
pub fn compensate(dft: &UnitaryDft, r: &[Complex64], delta_hat: &[Complex64]) -> Vec<Complex64> {
    dft.apply_v_adjoint(delta_hat, r)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex64::new(a * s, b * s)
        })
        .collect()
}

/// One transmitted and received OFDM symbol.
#[derive(Debug, Clone)]
pub struct OfdmSymbol {
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
    /// Transmitted symbol vector (pilots and data), unit average energy.
    pub s: Vec<Complex64>,
    /// `w = H s`.
    pub w: Vec<Complex64>,
    pub theta: Vec<f64>,
    pub delta: SpectralVector,
    pub received: Vec<Complex64>,
    pub noise_var: f64,
}

#[derive(Debug, Clone)]
pub struct OfdmFrame {
    pub channel: ChannelRealization,
    /// Channel used by the receiver (true or estimated).
    pub channel_rx: Vec<Complex64>,
    pub phase: PhaseNoiseRealization,
    pub symbols: Vec<OfdmSymbol>,
}

/// Link-level machinery shared by all frames of a configuration.
#[derive(Debug, Clone)]
pub struct Link {
    pub cfg: LinkConfig,
    pub dft: UnitaryDft,
    pub pilots: PilotPattern,
    pub data: Vec<usize>,
    pub profile: ChannelProfile,
    pub interleaver: Interleaver,
    pub decoder: ViterbiDecoder,
    pub info_bits_per_symbol: usize,
}

impl Link {
    pub fn new(cfg: LinkConfig, dim: usize) -> Result<Self> {
        cfg.validate(dim)?;
        let dft = UnitaryDft::new(cfg.n_sub)?;
        let pilots = PilotPattern::new(cfg.n_sub, cfg.pilot_count())?;
        let data = pilots.data_indices(cfg.n_sub);
        let profile = ChannelProfile::from_coherence_bandwidth(cfg.taps, cfg.coherence_bw_hz, cfg.n_sub, cfg.f_sub_hz)?;
        let coded = data.len() * BITS_PER_SYMBOL;
        let info_bits_per_symbol = info_len(coded).ok_or_else(|| Error::Config(vec!["no room for a codeword".into()]))?;
        Ok(Self {
            interleaver: Interleaver::new(coded, cfg.interleaver_depth),
            decoder: ViterbiDecoder::new(cfg.traceback),
            cfg,
            dft,
            pilots,
            data,
            profile,
            info_bits_per_symbol,
        })
    }

    /// Draws one frame. A frame's randomness comes from a single stream seeded
    /// by `seed`, consumed in the fixed order channel, phase, then per symbol
    /// bits and noise, so the same seed at another SNR sees the same channel,
    /// phase, bits and noise shape.
    pub fn generate_frame(&self, seed: u64) -> Result<OfdmFrame> {
        let cfg = &self.cfg;
        let n = cfg.n_sub;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channel = rayleigh_channel(&self.profile, n, &mut rng)?;

        let preamble = usize::from(cfg.channel_knowledge == ChannelKnowledge::PilotLs);
        let n_sym = cfg.symbols_per_frame + preamble;
        let phase = match cfg.phase_mode {
            PhaseMode::Continuous => wiener_trajectory(&mut rng, n_sym * n, n, cfg.rho, &cfg.wiener)?,
            PhaseMode::Independent => {
                let mut theta = Vec::with_capacity(n_sym * n);
                let mut increments = Vec::new();
                for _ in 0..n_sym {
                    let p = wiener_trajectory(&mut rng, n, n, cfg.rho, &cfg.wiener)?;
                    theta.extend_from_slice(&p.theta);
                    increments.extend_from_slice(&p.increments);
                }
                PhaseNoiseRealization { theta, increments, rho: cfg.rho, seed }
            }
        };

        let mut symbols = Vec::with_capacity(cfg.symbols_per_frame);
        let mut channel_rx = channel.freq.clone();
        for t in 0..n_sym {
            let theta = phase.symbol(t, n).to_vec();
            let delta = spectral_vector_with(&self.dft, &theta);
            if t < preamble {
                let known = qpsk_sequence(PILOT_SEED ^ 0xa5a5, n);
                let w: Vec<Complex64> = known.iter().zip(&channel.freq).map(|(s, h)| s * h).collect();
                let noise = complex_gaussian(&mut rng, n);
                let nv = cfg.noise_variance(mean_power(&w));
                let r = transmit_receive(&self.dft, &w, &delta, nv, &noise);
                channel_rx = ls_channel_estimate(&self.dft, &r, &known, n / 8);
                continue;
            }
            let info_bits: Vec<u8> = (0..self.info_bits_per_symbol).map(|_| rng.random_range(0..2u8)).collect();
            let coded_bits = conv_encode(&info_bits);
            let mapped = qam16_map(&self.interleaver.interleave(&coded_bits));
            let mut s = vec![Complex64::new(0.0, 0.0); n];
            for (&i, &p) in self.pilots.indices.iter().zip(&self.pilots.values) {
                s[i] = p;
            }
            for (&i, &d) in self.data.iter().zip(&mapped) {
                s[i] = d;
            }
            let w: Vec<Complex64> = s.iter().zip(&channel.freq).map(|(a, h)| a * h).collect();
            let noise = complex_gaussian(&mut rng, n);
            let noise_var = cfg.noise_variance(mean_power(&w));
            let received = transmit_receive(&self.dft, &w, &delta, noise_var, &noise);
            symbols.push(OfdmSymbol { info_bits, coded_bits, s, w, theta, delta, received, noise_var });
        }
        Ok(OfdmFrame { channel, channel_rx, phase, symbols })
    }

    /// Compensates, equalizes and decodes one symbol; returns the decoded
    /// information bits.
    pub fn demodulate(&self, symbol: &OfdmSymbol, channel_rx: &[Complex64], delta_hat: &[Complex64]) -> Vec<u8> {
        let llrs = self.llrs(symbol, channel_rx, delta_hat);
        self.decoder.decode(&self.interleaver.deinterleave(&llrs))
    }

    /// Interleaved-order LLRs of the data subcarriers after compensation.
    pub fn llrs(&self, symbol: &OfdmSymbol, channel_rx: &[Complex64], delta_hat: &[Complex64]) -> Vec<f64> {
        let y = compensate(&self.dft, &symbol.received, delta_hat);
        let nv = symbol.noise_var.max(1e-300);
        let mut llrs = Vec::with_capacity(self.data.len() * BITS_PER_SYMBOL);
        for &i in &self.data {
            llrs.extend_from_slice(&qam16_llr(y[i], channel_rx[i], nv));
        }
        llrs
    }

    /// Known pilot products `w_p = K H s` as seen by the receiver.
    pub fn pilot_products(&self, channel_rx: &[Complex64]) -> Vec<Complex64> {
        self.pilots.indices.iter().zip(&self.pilots.values).map(|(&i, &p)| p * channel_rx[i]).collect()
    }
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Raw per-subcarrier LS `r_k / p_k` smoothed by keeping the first `window`
/// taps of its impulse response.
fn ls_channel_estimate(dft: &UnitaryDft, r: &[Complex64], known: &[Complex64], window: usize) -> Vec<Complex64> {
    let raw: Vec<Complex64> = r.iter().zip(known).map(|(a, p)| a / p).collect();
    let mut h = dft.inverse(&raw);
    for z in h.iter_mut().skip(window.max(1)) {
        *z = Complex64::new(0.0, 0.0);
    }
    dft.forward(&h)
}
