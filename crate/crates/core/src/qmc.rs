//! Sobol points in up to three dimensions with random digital shifts, for
//! replicate-based error estimates.

use crate::rng::CounterRng;

pub const MAX_DIM: usize = 3;
const BITS: usize = 32;

/// (degree, polynomial coefficients, initial direction numbers) for
/// dimensions 2 and 3; dimension 1 is the van der Corput sequence.
const PRIMITIVES: [(usize, u32, [u32; 2]); 2] = [(1, 0, [1, 0]), (2, 1, [1, 3])];

#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "Sobol dimension {dim} unsupported");
        let mut dirs = Vec::with_capacity(dim);
        let mut v0 = [0u32; BITS];
        for (k, v) in v0.iter_mut().enumerate() {
            *v = 1u32 << (BITS - 1 - k);
        }
        dirs.push(v0);
        for &(s, a, m) in PRIMITIVES.iter().take(dim - 1) {
            let mut v = [0u32; BITS];
            for k in 0..s {
                v[k] = m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[k - j];
                    }
                }
                v[k] = x;
            }
            dirs.push(v);
        }
        Self { dirs }
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Raw 32-bit coordinate `d` of point `index` (Gray-code ordering).
    pub fn raw(&self, index: u32, d: usize) -> u32 {
        let mut gray = index ^ (index >> 1);
        let mut x = 0;
        let mut k = 0;
        while gray != 0 {
            if gray & 1 == 1 {
                x ^= self.dirs[d][k];
            }
            gray >>= 1;
            k += 1;
        }
        x
    }
}

/// A digitally shifted copy of the Sobol sequence.
#[derive(Debug, Clone)]
pub struct ShiftedSobol<'a> {
    base: &'a Sobol,
    shift: Vec<u32>,
}

impl<'a> ShiftedSobol<'a> {
    pub fn new(base: &'a Sobol, rng: &CounterRng, replicate: u64) -> Self {
        let stream = rng.stream(replicate);
        let shift = (0..base.dim())
            .map(|d| (stream.bits(0, d as u32) >> 32) as u32)
            .collect();
        Self { base, shift }
    }

    /// Point in the open unit cube.
    pub fn point(&self, index: u32, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.base.dim()) {
            let x = self.base.raw(index, d) ^ self.shift[d];
            *o = (x as f64 + 0.5) / 4_294_967_296.0;
        }
    }
}
