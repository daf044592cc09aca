//! Periodic CAM generation and per-source transmit buffers.
//!
//! The residual-bit counter is the incremental form of
//! `b[n] = p_s - sum of bits delivered since generation`: it is reset to
//! `p_s` when a packet is generated and decremented on every successfully
//! decoded transport block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CamPacket {
    pub source: usize,
    pub seq: u64,
    pub generation_tti: u64,
    pub size_bits: u32,
}

/// Outcome of a generation instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Generated {
    pub packet: CamPacket,
    /// The previous packet, if it was still undelivered and is now dropped.
    pub superseded: Option<CamPacket>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBuffer {
    pub source: usize,
    /// Phase `r` in `[0, period)`.
    pub offset: u64,
    pub period: u64,
    pub packet_bits: u32,
    pub residual_bits: u32,
    pub active: Option<CamPacket>,
    next_seq: u64,
}

impl UserBuffer {
    pub fn new(source: usize, offset: u64, period: u64, packet_bits: u32) -> Self {
        assert!(period > 0, "CAM period must be positive");
        Self {
            source,
            offset: offset % period,
            period,
            packet_bits,
            residual_bits: 0,
            active: None,
            next_seq: 0,
        }
    }

    pub fn is_generation_instant(&self, tti: u64) -> bool {
        tti >= self.offset && (tti - self.offset) % self.period == 0
    }

    /// Creates a new packet when `tti` is a generation instant. An
    /// undelivered predecessor is replaced and its partial progress dropped.
    pub fn maybe_generate(&mut self, tti: u64) -> Option<Generated> {
        if !self.is_generation_instant(tti) {
            return None;
        }
        let superseded = if self.residual_bits > 0 { self.active } else { None };
        let packet = CamPacket {
            source: self.source,
            seq: self.next_seq,
            generation_tti: tti,
            size_bits: self.packet_bits,
        };
        self.next_seq += 1;
        self.active = Some(packet);
        self.residual_bits = self.packet_bits;
        Some(Generated { packet, superseded })
    }

    pub fn consume(&mut self, transmitted_bits: u32, decode_ok: bool) {
        self.residual_bits = consume(self.residual_bits, transmitted_bits, decode_ok);
    }

    pub fn is_delivered(&self) -> bool {
        self.residual_bits == 0
    }

    pub fn packets_generated(&self) -> u64 {
        self.next_seq
    }
}

/// Residual update: successful blocks remove their bits, failed ones nothing.
pub fn consume(residual_bits: u32, transmitted_bits: u32, decode_ok: bool) -> u32 {
    if decode_ok {
        residual_bits.saturating_sub(transmitted_bits)
    } else {
        residual_bits
    }
}

/// Uniform generation phases in `[0, period)`, one per source.
pub fn draw_offsets(n_sources: usize, period: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[0x0ff5e7]));
    (0..n_sources).map(|_| rng.gen_range(0..period)).collect()
}
