//! Counter-based uniform variates: the value for `(seed, index, dim)` is a
//! pure hash, so any partition of the sample range across workers draws
//! exactly the same numbers.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed.wrapping_add(GOLDEN)),
        }
    }

    /// Derives an independent stream, e.g. one per replicate.
    pub fn stream(&self, id: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(id.wrapping_mul(GOLDEN).wrapping_add(1))),
        }
    }

    #[inline]
    pub fn bits(&self, index: u64, dim: u32) -> u64 {
        let ctr = index
            .wrapping_mul(GOLDEN)
            .wrapping_add((dim as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        mix64(mix64(ctr ^ self.key).wrapping_add(self.key))
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&self, index: u64, dim: u32) -> f64 {
        (self.bits(index, dim) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
