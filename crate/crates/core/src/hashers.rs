//! LSH families for angular distance.
//!
//! Every function maps a vector to an `ℓ`-bit string: one bit for random
//! hyperplanes, `ceil(log2(2d))` bits for the cross-polytope variants. Hashes
//! are evaluated on the normalized `f32` rows.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::dot_f32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HashFamily {
    /// Random hyperplane (sign of a Gaussian projection).
    Hyperplane,
    /// Cross-polytope with a dense Gaussian rotation surrogate.
    CrossPolytope,
    /// Cross-polytope with three rounds of sign flips and a Hadamard transform.
    FhtCrossPolytope,
}

impl HashFamily {
    pub fn name(self) -> &'static str {
        match self {
            HashFamily::Hyperplane => "hp",
            HashFamily::CrossPolytope => "cp",
            HashFamily::FhtCrossPolytope => "fht-cp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hp" => Some(HashFamily::Hyperplane),
            "cp" => Some(HashFamily::CrossPolytope),
            "fht-cp" => Some(HashFamily::FhtCrossPolytope),
            _ => None,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            HashFamily::Hyperplane => 0,
            HashFamily::CrossPolytope => 1,
            HashFamily::FhtCrossPolytope => 2,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(HashFamily::Hyperplane),
            1 => Some(HashFamily::CrossPolytope),
            2 => Some(HashFamily::FhtCrossPolytope),
            _ => None,
        }
    }

    /// Output width `ℓ` of one function at dimension `dim`.
    pub fn bits_per_hash(self, dim: usize) -> u32 {
        match self {
            HashFamily::Hyperplane => 1,
            HashFamily::CrossPolytope | HashFamily::FhtCrossPolytope => ceil_log2(2 * dim.max(1)),
        }
    }

    /// Bytes needed to store one function.
    pub fn function_bytes(self, dim: usize) -> usize {
        match self {
            HashFamily::Hyperplane => dim * 4,
            HashFamily::CrossPolytope => dim * dim * 4,
            HashFamily::FhtCrossPolytope => 3 * dim.max(1).next_power_of_two() * 4,
        }
    }

    pub fn sample<R: Rng>(self, dim: usize, rng: &mut R) -> HashFunction {
        match self {
            HashFamily::Hyperplane => HashFunction::Hyperplane {
                direction: gaussian_vec(dim, rng),
            },
            HashFamily::CrossPolytope => HashFunction::CrossPolytope {
                dim,
                rotation: gaussian_vec(dim * dim, rng),
            },
            HashFamily::FhtCrossPolytope => {
                let work = dim.max(1).next_power_of_two();
                let mut signs = || -> Vec<f32> {
                    (0..work)
                        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                        .collect()
                };
                HashFunction::FhtCrossPolytope {
                    dim,
                    signs: [signs(), signs(), signs()],
                }
            }
        }
    }
}

fn ceil_log2(x: usize) -> u32 {
    usize::BITS - (x - 1).leading_zeros()
}

fn gaussian_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<f32> {
    (0..len)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum HashFunction {
    Hyperplane {
        direction: Vec<f32>,
    },
    /// `rotation` is a row-major `dim × dim` matrix; row `j` is hyperplane `a_j`.
    CrossPolytope {
        dim: usize,
        rotation: Vec<f32>,
    },
    /// Sign vectors have the working length `dim.next_power_of_two()`.
    FhtCrossPolytope {
        dim: usize,
        signs: [Vec<f32>; 3],
    },
}

impl HashFunction {
    pub fn family(&self) -> HashFamily {
        match self {
            HashFunction::Hyperplane { .. } => HashFamily::Hyperplane,
            HashFunction::CrossPolytope { .. } => HashFamily::CrossPolytope,
            HashFunction::FhtCrossPolytope { .. } => HashFamily::FhtCrossPolytope,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            HashFunction::Hyperplane { direction } => direction.len(),
            HashFunction::CrossPolytope { dim, .. }
            | HashFunction::FhtCrossPolytope { dim, .. } => *dim,
        }
    }

    pub fn bits(&self) -> u32 {
        self.family().bits_per_hash(self.dim())
    }

    /// Evaluates the function; the result occupies the low `bits()` bits.
    pub fn hash(&self, v: &[f32]) -> u64 {
        self.hash_with(v, &mut Vec::new())
    }

    /// [`HashFunction::hash`] reusing `scratch` for the Hadamard variant.
    pub fn hash_with(&self, v: &[f32], scratch: &mut Vec<f32>) -> u64 {
        match self {
            HashFunction::Hyperplane { direction } => hp_hash(direction, v),
            HashFunction::CrossPolytope { dim, rotation } => {
                cp_encode((0..*dim).map(|j| dot_f32(&rotation[j * dim..(j + 1) * dim], v)))
            }
            HashFunction::FhtCrossPolytope { signs, .. } => {
                scratch.clear();
                scratch.extend_from_slice(v);
                scratch.resize(signs[0].len(), 0.0);
                for s in signs {
                    for (c, &f) in scratch.iter_mut().zip(s) {
                        *c *= f;
                    }
                    hadamard_in_place(scratch);
                }
                cp_encode(scratch.iter().copied())
            }
        }
    }
}

pub fn hp_hash(direction: &[f32], v: &[f32]) -> u64 {
    (dot_f32(direction, v) >= 0.0) as u64
}

/// Index of the largest absolute value (lowest index on ties), doubled, with
/// the sign in the least significant bit (1 = negative).
pub fn cp_encode<I: Iterator<Item = f32>>(projections: I) -> u64 {
    let mut best = 0usize;
    let mut best_abs = f32::NEG_INFINITY;
    let mut negative = false;
    for (j, y) in projections.enumerate() {
        if y.abs() > best_abs {
            best = j;
            best_abs = y.abs();
            negative = y < 0.0;
        }
    }
    2 * best as u64 + negative as u64
}

/// Unnormalized fast Walsh-Hadamard transform. `x.len()` must be a power of two.
pub fn hadamard_in_place(x: &mut [f32]) {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, w) = (*a, *b);
                *a = u + w;
                *b = u - w;
            }
        }
        h *= 2;
    }
}

/// A bit string of at most 64 bits, most significant bit first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HashCode {
    pub bits: u64,
    pub len: u32,
}

impl HashCode {
    pub fn new(bits: u64, len: u32) -> Self {
        debug_assert!(len <= 64 && (len == 64 || bits >> len == 0));
        HashCode { bits, len }
    }

    /// Appends `len` bits; earlier content moves to more significant positions.
    pub fn push(&mut self, bits: u64, len: u32) {
        assert!(self.len + len <= 64, "hash code exceeds 64 bits");
        self.bits = if len == 64 {
            bits
        } else {
            (self.bits << len) | bits
        };
        self.len += len;
    }

    /// The first `len` bits.
    pub fn prefix(&self, len: u32) -> HashCode {
        let len = len.min(self.len);
        let drop = self.len - len;
        let bits = if drop == 64 { 0 } else { self.bits >> drop };
        HashCode { bits, len }
    }

    /// Left-aligns the code in a 64-bit word.
    pub fn left_aligned(&self) -> u64 {
        if self.len == 0 {
            0
        } else {
            self.bits << (64 - self.len)
        }
    }
}
