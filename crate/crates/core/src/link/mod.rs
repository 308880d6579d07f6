//! Coded 16-QAM OFDM link: convolutional code, Gray mapping, multipath
//! Rayleigh channel and the phase-noise-impaired receive model.

pub mod channel;
pub mod conv;
pub mod ofdm;
pub mod qam;

pub use channel::{rayleigh_channel, ChannelProfile, ChannelRealization};
pub use conv::{conv_encode, viterbi_decode_soft, ViterbiDecoder};
pub use ofdm::{
    compensate, transmit_receive, ChannelKnowledge, Interleaver, Link, LinkConfig, OfdmFrame, OfdmSymbol,
    PhaseMode, PilotPattern, SNR_DEFINITION,
};
pub use qam::{qam16_llr, qam16_map};
