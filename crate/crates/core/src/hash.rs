//! A tiny FNV-1a 64-bit folder for replay-stable state hashes.
//!
//! `std::hash` makes no cross-version stability promise, and the determinism
//! checks compare hashes produced by independent runs, so the simulation
//! hashes its state with this fixed algorithm instead.

#[derive(Debug, Clone)]
pub struct Fnv64 {
    state: u64,
}

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64 { state: 0xcbf2_9ce4_8422_2325 }
    }
}

impl Fnv64 {
    pub fn new() -> Fnv64 {
        Fnv64::default()
    }

    pub fn write_u8(&mut self, b: u8) {
        self.state ^= u64::from(b);
        self.state = self.state.wrapping_mul(0x0000_0100_0000_01b3);
    }

    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.write_u8(b);
        }
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u8(b);
        }
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}
