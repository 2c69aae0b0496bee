//! Keyed counter-based random streams.
//!
//! Every draw is a pure function of `(seed, time index, particle index,
//! purpose, draw counter)`, computed with the Philox4x32-10 block function.
//! Streams therefore do not depend on thread count, backend or the order in
//! which particles are processed.
//!
//! Counter layout (four 32-bit words): `[block, purpose, particle, time]`;
//! key = `[seed_lo, seed_hi]`. Uniforms take 53 bits from two consecutive
//! words (high word first) and are mapped to the open interval (0, 1).
//! Normals use Box-Muller on two uniforms; the cosine branch is returned
//! first and the sine branch is returned by the following call.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let p0 = u64::from(PHILOX_M0) * u64::from(ctr[0]);
        let p1 = u64::from(PHILOX_M1) * u64::from(ctr[2]);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// What a stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Init = 0,
    Proliferate = 1,
    Innovate = 2,
    Resample = 3,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    key: [u32; 2],
    purpose: u32,
    particle: u32,
    time: u32,
    block: u32,
    buffer: [u32; 4],
    used: usize,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, time: u64, particle: u64, purpose: Purpose) -> Self {
        debug_assert!(time <= u64::from(u32::MAX) && particle <= u64::from(u32::MAX));
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            purpose: purpose as u32,
            particle: particle as u32,
            time: time as u32,
            block: 0,
            buffer: [0; 4],
            used: 4,
            spare_normal: None,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buffer = philox4x32_10([self.block, self.purpose, self.particle, self.time], self.key);
            self.block = self.block.wrapping_add(1);
            self.used = 0;
        }
        let v = self.buffer[self.used];
        self.used += 1;
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = u64::from(self.next_u32());
        let lo = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phase = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * phase.sin());
        r * phase.cos()
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}
