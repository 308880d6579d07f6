//! Gray-labelled 16-QAM with unit average energy and a max-log demapper.
//!
//! Bits `b0 b1` select the in-phase level and `b2 b3` the quadrature level:
//!
//! | bits | level |
//! |------|-------|
//! | 00   | +1    |
//! | 01   | +3    |
//! | 11   | -3    |
//! | 10   | -1    |
//!
//! scaled by `1/sqrt(10)`, so `0000 -> (1 + j)/sqrt(10)`.

use num_complex::Complex64;

pub const BITS_PER_SYMBOL: usize = 4;

fn scale() -> f64 {
    1.0 / 10f64.sqrt()
}

fn level(sign_bit: u8, outer_bit: u8) -> f64 {
    let mag = if outer_bit == 0 { 1.0 } else { 3.0 };
    if sign_bit == 0 {
        mag
    } else {
        -mag
    }
}

/// Maps groups of four bits to symbols.
pub fn qam16_map(bits: &[u8]) -> Vec<Complex64> {
    assert!(bits.len() % BITS_PER_SYMBOL == 0, "bit count must be a multiple of 4");
    let s = scale();
    bits.chunks_exact(BITS_PER_SYMBOL)
        .map(|b| Complex64::new(level(b[0], b[1]) * s, level(b[2], b[3]) * s))
        .collect()
}

/// LLR pair for one axis: `z` is the equalized coordinate and `w` the weight
/// `|gain|^2 / noise_var`.
fn axis_llr(z: f64, w: f64) -> [f64; 2] {
    let s = scale();
    let d = |lvl: f64| {
        let e = z - lvl * s;
        e * e
    };
    let (p1, p3, m1, m3) = (d(1.0), d(3.0), d(-1.0), d(-3.0));
    // positive LLR favours bit 0
    let sign = p1.min(p3) - m1.min(m3);
    let outer = p1.min(m1) - p3.min(m3);
    [-w * sign, -w * outer]
}

/// Max-log LLRs of the four bits carried by `y = gain * s + noise`.
pub fn qam16_llr(y: Complex64, gain: Complex64, noise_var: f64) -> [f64; 4] {
    let g2 = gain.norm_sqr();
    if g2 == 0.0 {
        return [0.0; 4];
    }
    let z = y * gain.conj() / g2;
    let w = g2 / noise_var.max(f64::MIN_POSITIVE);
    let i = axis_llr(z.re, w);
    let q = axis_llr(z.im, w);
    [i[0], i[1], q[0], q[1]]
}

/// Hard decision from LLRs.
pub fn hard_bits(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
}
