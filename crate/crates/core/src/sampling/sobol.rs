//! Sobol points in up to three dimensions with hash-based Owen scrambling.
//!
//! Direction numbers are the first three Joe–Kuo dimensions. Points are
//! produced in Gray-code order, so index 0 is the origin and indices 1, 2, 3
//! of the first coordinate are 0.5, 0.75, 0.25.
//!
//! Scrambling flips each output bit based only on the more significant
//! bits, which is what nested uniform scrambling requires; it therefore
//! keeps every elementary-interval property of the unscrambled net.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::jets::MAX_DIM;

const BITS: usize = 32;
/// Largest number of points a stream can emit.
pub const MAX_POINTS: u64 = 1 << 32;

/// Joe–Kuo `(s, a, m_1..m_s)` for dimensions 2 and 3; dimension 1 is the
/// van der Corput sequence.
const JOE_KUO: [(u32, u32, &[u32]); 2] = [(1, 0, &[1]), (2, 1, &[1, 3])];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m_init) = JOE_KUO[dim - 1];
    let s = s as usize;
    let mut m = [0u32; BITS];
    m[..s].copy_from_slice(m_init);
    for k in s..BITS {
        let mut mk = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                mk ^= m[k - j] << j;
            }
        }
        m[k] = mk;
    }
    for k in 0..BITS {
        v[k] = m[k] << (BITS - 1 - k);
    }
    v
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Laine–Karras style permutation on bit-reversed integers. Every step
/// only lets lower (reversed) bits influence higher ones.
fn lk_hash(mut x: u32, seed: u32) -> u32 {
    x = x.wrapping_add(seed);
    x ^= x.wrapping_mul(0x6c50_b47c);
    x ^= x.wrapping_mul(0xb82f_1e52);
    x ^= x.wrapping_mul(0xc7af_e638);
    x ^= x.wrapping_mul(0x8d22_f6e6);
    x
}

fn owen_scramble(x: u32, seed: u32) -> u32 {
    lk_hash(x.reverse_bits(), seed).reverse_bits()
}

#[derive(Clone, Debug)]
pub struct SobolStream {
    dim: usize,
    directions: Vec<[u32; BITS]>,
    /// Per-dimension scramble seeds; `None` for the plain sequence.
    scramble: Option<Vec<u32>>,
    seed: u64,
    counter: u64,
}

impl SobolStream {
    /// Owen-scrambled stream.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let mut s = Self::unscrambled(dim)?;
        s.seed = seed;
        s.scramble = Some(
            (0..dim)
                .map(|j| (splitmix64(seed ^ splitmix64(j as u64 + 1)) >> 32) as u32)
                .collect(),
        );
        Ok(s)
    }

    pub fn unscrambled(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Dimension(dim));
        }
        Ok(Self {
            dim,
            directions: (0..dim).map(direction_numbers).collect(),
            scramble: None,
            seed: 0,
            counter: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn is_scrambled(&self) -> bool {
        self.scramble.is_some()
    }

    /// Jumps to an absolute index.
    pub fn set_counter(&mut self, counter: u64) -> Result<()> {
        if counter > MAX_POINTS {
            return Err(Error::CounterOverflow(counter));
        }
        self.counter = counter;
        Ok(())
    }

    /// Integer coordinates of point `index`.
    fn point_bits(&self, index: u64, out: &mut [u32]) {
        let gray = index ^ (index >> 1);
        for (j, o) in out.iter_mut().enumerate() {
            let v = &self.directions[j];
            let mut x = 0u32;
            let mut g = gray;
            let mut k = 0;
            while g != 0 {
                if g & 1 == 1 {
                    x ^= v[k];
                }
                g >>= 1;
                k += 1;
            }
            *o = match &self.scramble {
                Some(seeds) => owen_scramble(x, seeds[j]),
                None => x,
            };
        }
    }

    /// Next `n` points as an `n x d` matrix in `[0, 1)^d`.
    pub fn next_points(&mut self, n: usize) -> Result<Array2<f64>> {
        let end = self.counter + n as u64;
        if end > MAX_POINTS {
            return Err(Error::CounterOverflow(end));
        }
        let mut out = Array2::zeros((n, self.dim));
        let mut bits = [0u32; MAX_DIM];
        for (r, index) in (self.counter..end).enumerate() {
            self.point_bits(index, &mut bits[..self.dim]);
            for j in 0..self.dim {
                out[[r, j]] = bits[j] as f64 / MAX_POINTS as f64;
            }
        }
        self.counter = end;
        Ok(out)
    }
}
