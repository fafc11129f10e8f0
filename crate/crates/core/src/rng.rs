//! Counter-based, splittable random streams.
//!
//! The generator is SplitMix64 addressed by counter, so any language can
//! reproduce a stream exactly:
//!
//! ```text
//! GOLDEN      = 0x9E3779B97F4A7C15
//! mix(z)      : z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!               z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!               z ^ (z >> 31)                          (wrapping u64 arithmetic)
//! root(seed)  = key mix(seed)
//! derive(k,t) = key mix(k ^ mix(t + GOLDEN))
//! value(k,i)  = mix(k + i * GOLDEN)                   for i = 1, 2, 3, ...
//! ```
//!
//! Derived values:
//! - `f64` in [0,1): `(value >> 11) * 2^-53`
//! - index below `n`: high 64 bits of the 128-bit product `value * n`
//! - standard normal: Box–Muller on two consecutive uniforms,
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)`
//! - string tags are hashed with 64-bit FNV-1a before `derive`.
//!
//! Test vectors (`root(42)`): values 1..=3 are `0x989B3F130A063869`,
//! `0x290DB4BF2570DED7`, `0x2A990BE63A01B2D5`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed), counter: 0 }
    }

    /// Independent child stream; does not advance `self`.
    pub fn derive(&self, tag: u64) -> Stream {
        Stream { key: mix64(self.key ^ mix64(tag.wrapping_add(GOLDEN))), counter: 0 }
    }

    pub fn derive_str(&self, tag: &str) -> Stream {
        self.derive(fnv1a(tag.as_bytes()))
    }

    /// Value at 1-based position `i`, independent of the cursor.
    pub fn at(&self, i: u64) -> u64 {
        mix64(self.key.wrapping_add(i.wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.at(self.counter)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Fisher–Yates shuffle, last index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
