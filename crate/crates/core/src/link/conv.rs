//! Rate-1/2, constraint-length-7 convolutional code with generators 133/171
//! (octal) and a soft-decision Viterbi decoder.
//!
//! The shift register holds the six previous input bits; the most significant
//! generator tap multiplies the current input. Blocks are zero-tail terminated.

pub const CONSTRAINT_LENGTH: usize = 7;
pub const GENERATORS: [u8; 2] = [0o133, 0o171];
const MEMORY: usize = CONSTRAINT_LENGTH - 1;
const STATES: usize = 1 << MEMORY;
/// Decision depth of five constraint lengths.
pub const DEFAULT_TRACEBACK: usize = 5 * CONSTRAINT_LENGTH;

fn parity(x: u8) -> u8 {
    (x.count_ones() & 1) as u8
}

/// Output pair for register contents `reg` (bit 6 = current input).
fn branch_output(reg: u8) -> [u8; 2] {
    [parity(reg & GENERATORS[0]), parity(reg & GENERATORS[1])]
}

/// Encodes `bits` and appends six zero flush bits; output length is
/// `2 * (bits.len() + 6)`.
pub fn conv_encode(bits: &[u8]) -> Vec<u8> {
    let mut state: u8 = 0;
    let mut out = Vec::with_capacity(2 * (bits.len() + MEMORY));
    for &b in bits.iter().chain(std::iter::repeat(&0u8).take(MEMORY)) {
        let reg = ((b & 1) << MEMORY) | state;
        out.extend_from_slice(&branch_output(reg));
        state = reg >> 1;
    }
    out
}

/// Number of information bits carried by `coded_len` coded bits.
pub fn info_len(coded_len: usize) -> Option<usize> {
    (coded_len % 2 == 0 && coded_len >= 2 * MEMORY).then(|| coded_len / 2 - MEMORY)
}

/// Soft-decision Viterbi decoder. LLR convention: positive favours bit 0.
#[derive(Debug, Clone)]
pub struct ViterbiDecoder {
    traceback: usize,
    // next state and output pair per (state, input)
    next: [[u8; 2]; STATES],
    out: [[[u8; 2]; 2]; STATES],
}

impl Default for ViterbiDecoder {
    fn default() -> Self {
        Self::new(DEFAULT_TRACEBACK)
    }
}

impl ViterbiDecoder {
    pub fn new(traceback: usize) -> Self {
        let mut next = [[0u8; 2]; STATES];
        let mut out = [[[0u8; 2]; 2]; STATES];
        for s in 0..STATES {
            for u in 0..2 {
                let reg = ((u as u8) << MEMORY) | s as u8;
                next[s][u] = reg >> 1;
                out[s][u] = branch_output(reg);
            }
        }
        Self { traceback: traceback.max(1), next, out }
    }

    pub fn traceback(&self) -> usize {
        self.traceback
    }

    /// Decodes a zero-tail-terminated block and returns the information bits
    /// (tail removed). Bits older than the traceback depth are released by
    /// tracing back from the best current state; the final window is traced
    /// back from the all-zero state. Ties go to the smaller predecessor state,
    /// so all-zero LLRs decode to the all-zero word.
    pub fn decode(&self, llrs: &[f64]) -> Vec<u8> {
        assert!(llrs.len() % 2 == 0, "LLR length must be even");
        let steps = llrs.len() / 2;
        let n_info = steps.saturating_sub(MEMORY);

        let neg_inf = f64::NEG_INFINITY;
        let mut metric = [neg_inf; STATES];
        metric[0] = 0.0;
        // survivor predecessor state per step and state
        let mut pred: Vec<[u8; STATES]> = Vec::with_capacity(steps);
        let mut decided = vec![0u8; steps];
        let mut released = 0usize;

        for t in 0..steps {
            let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
            let mut new_metric = [neg_inf; STATES];
            let mut new_pred = [0u8; STATES];
            for s in 0..STATES {
                let m = metric[s];
                if m == neg_inf {
                    continue;
                }
                for u in 0..2 {
                    let [c0, c1] = self.out[s][u];
                    // max-log correlation metric: +llr/2 for bit 0, -llr/2 for bit 1
                    let bm = if c0 == 0 { l0 } else { -l0 } + if c1 == 0 { l1 } else { -l1 };
                    let cand = m + 0.5 * bm;
                    let ns = self.next[s][u] as usize;
                    // strict comparison keeps the smaller predecessor on ties
                    if cand > new_metric[ns] {
                        new_metric[ns] = cand;
                        new_pred[ns] = s as u8;
                    }
                }
            }
            metric = new_metric;
            pred.push(new_pred);

            if t + 1 >= self.traceback && t + 1 < steps {
                let target = t + 1 - self.traceback;
                if target >= released {
                    let best = best_state(&metric);
                    let bit = self.trace_bit(&pred, best, t, target);
                    decided[target] = bit;
                    released = target + 1;
                }
            }
        }

        // final window from the terminating zero state
        if steps > 0 {
            let mut s = 0usize;
            for t in (released..steps).rev() {
                decided[t] = (s >> (MEMORY - 1)) as u8 & 1;
                s = pred[t][s] as usize;
            }
        }
        decided.truncate(n_info);
        decided
    }

    /// Input bit at step `target` on the survivor ending in `state` at `t`.
    fn trace_bit(&self, pred: &[[u8; STATES]], mut state: usize, t: usize, target: usize) -> u8 {
        for k in (target + 1..=t).rev() {
            state = pred[k][state] as usize;
        }
        // state after step `target` has the input of that step as its top bit
        (state >> (MEMORY - 1)) as u8 & 1
    }
}

fn best_state(metric: &[f64; STATES]) -> usize {
    let mut best = 0;
    for s in 1..STATES {
        if metric[s] > metric[best] {
            best = s;
        }
    }
    best
}

/// Decodes with the default traceback depth.
pub fn viterbi_decode_soft(llrs: &[f64]) -> Vec<u8> {
    ViterbiDecoder::default().decode(llrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_llr(code: &[u8], mag: f64) -> Vec<f64> {
        code.iter().map(|&c| if c == 0 { mag } else { -mag }).collect()
    }

    #[test]
    fn empty_input_is_flush_only() {
        let c = conv_encode(&[]);
        assert_eq!(c, vec![0u8; 12]);
    }

    #[test]
    fn zero_input_gives_zero_codeword() {
        assert!(conv_encode(&[0; 10]).iter().all(|&b| b == 0));
    }

    #[test]
    fn impulse_response_matches_generators() {
        let c = conv_encode(&[1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(c.len(), 26);
        // taps of 133 = 1011011 and 171 = 1111001, MSB first
        let g0 = [1, 0, 1, 1, 0, 1, 1];
        let g1 = [1, 1, 1, 1, 0, 0, 1];
        for k in 0..7 {
            assert_eq!(c[2 * k], g0[k], "g0 tap {k}");
            assert_eq!(c[2 * k + 1], g1[k], "g1 tap {k}");
        }
        assert!(c[14..].iter().all(|&b| b == 0));
    }

    #[test]
    fn clean_llrs_decode_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [1, 5, 34, 35, 36, 100, 230] {
            let bits: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
            let llr = to_llr(&conv_encode(&bits), 10.0);
            assert_eq!(viterbi_decode_soft(&llr), bits, "len {len}");
        }
    }

    #[test]
    fn single_flip_is_corrected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<u8> = (0..44).map(|_| rng.random_range(0..2)).collect();
        let code = conv_encode(&bits);
        assert_eq!(code.len(), 100);
        for pos in [0, 17, 50, 99] {
            let mut llr = to_llr(&code, 10.0);
            llr[pos] = -llr[pos];
            assert_eq!(viterbi_decode_soft(&llr), bits, "flip at {pos}");
        }
    }

    #[test]
    fn zero_llrs_decode_to_zero() {
        let out = viterbi_decode_soft(&[0.0; 200]);
        assert_eq!(out.len(), 94);
        assert!(out.iter().all(|&b| b == 0));
    }

    #[test]
    fn short_traceback_still_inverts_clean_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<u8> = (0..120).map(|_| rng.random_range(0..2)).collect();
        let llr = to_llr(&conv_encode(&bits), 1.0);
        assert_eq!(ViterbiDecoder::new(8).decode(&llr), bits);
    }

    #[test]
    fn info_length() {
        assert_eq!(info_len(472), Some(230));
        assert_eq!(info_len(11), None);
        assert_eq!(info_len(10), None);
    }
}
