//! Per-repetition hash functions under the three construction strategies,
//! together with each strategy's stopping rule.
//!
//! A repetition's code is the concatenation of `K` function outputs, earlier
//! functions in the more significant bits. Strategies differ only in where
//! those `K` functions come from:
//!
//! * independent: `L·K` fresh functions;
//! * pool: a shared pool of `ceil(pool_bits / ℓ)` functions, each repetition
//!   sampling `K` of them without replacement;
//! * tensor: two collections of `√L` tuples of `K/2` functions; repetition
//!   `(j1, j2)` interleaves tuple `j1` of the first collection with tuple `j2`
//!   of the second.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::hashers::{HashCode, HashFamily, HashFunction};
use crate::rng;

pub const DEFAULT_POOL_BITS: usize = 3072;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Independent,
    Pool,
    Tensor,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Independent => "independent",
            Strategy::Pool => "pool",
            Strategy::Tensor => "tensor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "independent" => Some(Strategy::Independent),
            "pool" => Some(Strategy::Pool),
            "tensor" => Some(Strategy::Tensor),
            _ => None,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Strategy::Independent => 0,
            Strategy::Pool => 1,
            Strategy::Tensor => 2,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Strategy::Independent),
            1 => Some(Strategy::Pool),
            2 => Some(Strategy::Tensor),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceConfig {
    pub strategy: Strategy,
    /// Functions concatenated per repetition (`K`).
    pub functions_per_rep: usize,
    /// Number of repetitions (`L`).
    pub repetitions: usize,
    /// Pool size in bits; only read by the pool strategy.
    pub pool_bits: usize,
}

impl SourceConfig {
    pub fn validate(&self, bits_per_hash: u32) -> Result<()> {
        let k = self.functions_per_rep;
        let l = self.repetitions;
        if l == 0 {
            return Err(Error::InvalidConfig(
                "at least one repetition is required".into(),
            ));
        }
        if k as u64 * bits_per_hash as u64 > 64 {
            return Err(Error::InvalidConfig(format!(
                "{k} functions of {bits_per_hash} bits do not fit a 64-bit code"
            )));
        }
        match self.strategy {
            Strategy::Independent => {}
            Strategy::Tensor => {
                if !is_even_power_of_two(l) {
                    return Err(Error::InvalidConfig(format!(
                        "tensoring needs L to be an even power of two, got {l}"
                    )));
                }
                if k == 0 || !k.is_multiple_of(2) {
                    return Err(Error::InvalidConfig(format!(
                        "tensoring needs an even positive K, got {k}"
                    )));
                }
            }
            Strategy::Pool => {
                if self.pool_bits < k * bits_per_hash as usize {
                    return Err(Error::InvalidConfig(format!(
                        "pool of {} bits is smaller than K·ℓ = {}",
                        self.pool_bits,
                        k * bits_per_hash as usize
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn is_even_power_of_two(l: usize) -> bool {
    l.is_power_of_two() && l.trailing_zeros().is_multiple_of(2)
}

/// Largest even power of two not exceeding `l` (0 if `l == 0`).
pub fn floor_even_power_of_two(l: usize) -> usize {
    if l == 0 {
        return 0;
    }
    let exp = (usize::BITS - 1 - l.leading_zeros()) & !1;
    1 << exp
}

#[derive(Clone, Debug)]
pub struct HashSource {
    family: HashFamily,
    dim: usize,
    bits_per_hash: u32,
    config: SourceConfig,
    seed: u64,
    functions: Vec<HashFunction>,
    /// Function indices per repetition, most significant first.
    reps: Vec<Vec<u32>>,
    /// Whether some repetition uses the function (unused pool members are never evaluated).
    used: Vec<bool>,
}

impl HashSource {
    pub fn new(config: SourceConfig, family: HashFamily, dim: usize, seed: u64) -> Result<Self> {
        let bits_per_hash = family.bits_per_hash(dim);
        config.validate(bits_per_hash)?;
        let k = config.functions_per_rep;
        let l = config.repetitions;
        let count = match config.strategy {
            Strategy::Independent => l * k,
            Strategy::Tensor => 2 * isqrt(l) * (k / 2),
            Strategy::Pool => config.pool_bits.div_ceil(bits_per_hash as usize),
        };
        let mut frng = rng::rng(seed, rng::HASH_FUNCTIONS);
        let functions: Vec<HashFunction> =
            (0..count).map(|_| family.sample(dim, &mut frng)).collect();

        let reps: Vec<Vec<u32>> = match config.strategy {
            Strategy::Independent => (0..l)
                .map(|j| (j * k..(j + 1) * k).map(|f| f as u32).collect())
                .collect(),
            Strategy::Tensor => {
                let side = isqrt(l);
                (0..l)
                    .map(|j| {
                        let (j1, j2) = (j / side, j % side);
                        (0..k / 2)
                            .flat_map(|s| {
                                [
                                    tensor_function(side, k, 0, j1, s),
                                    tensor_function(side, k, 1, j2, s),
                                ]
                            })
                            .map(|f| f as u32)
                            .collect()
                    })
                    .collect()
            }
            Strategy::Pool => {
                let mut srng = rng::rng(seed, rng::POOL_SAMPLING);
                (0..l)
                    .map(|_| {
                        index::sample(&mut srng, count, k)
                            .into_iter()
                            .map(|f| f as u32)
                            .collect()
                    })
                    .collect()
            }
        };
        let mut used = vec![false; count];
        for r in &reps {
            for &f in r {
                used[f as usize] = true;
            }
        }
        Ok(HashSource {
            family,
            dim,
            bits_per_hash,
            config,
            seed,
            functions,
            reps,
            used,
        })
    }

    pub fn family(&self) -> HashFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &SourceConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits_per_hash(&self) -> u32 {
        self.bits_per_hash
    }

    pub fn code_bits(&self) -> u32 {
        self.config.functions_per_rep as u32 * self.bits_per_hash
    }

    pub fn repetitions(&self) -> usize {
        self.reps.len()
    }

    pub fn functions(&self) -> &[HashFunction] {
        &self.functions
    }

    pub fn repetition_functions(&self, j: usize) -> &[u32] {
        &self.reps[j]
    }

    /// Side length `√L` of the tensor grid (1 for other strategies).
    pub fn tensor_side(&self) -> usize {
        match self.config.strategy {
            Strategy::Tensor => isqrt(self.config.repetitions),
            _ => 1,
        }
    }

    /// Repetition number of tensor trie `(j1, j2)`.
    pub fn tensor_repetition(&self, j1: usize, j2: usize) -> usize {
        j1 * self.tensor_side() + j2
    }

    /// Function indices of tuple `tuple` in tensor collection `collection`
    /// (0 or 1). Empty for the other strategies.
    pub fn tensor_tuple(&self, collection: usize, tuple: usize) -> Vec<u32> {
        if self.config.strategy != Strategy::Tensor {
            return Vec::new();
        }
        let (side, k) = (self.tensor_side(), self.config.functions_per_rep);
        (0..k / 2)
            .map(|s| tensor_function(side, k, collection, tuple, s) as u32)
            .collect()
    }

    /// Concatenated code of one tensor tuple.
    pub fn tuple_code(&self, collection: usize, tuple: usize, v: &[f32]) -> HashCode {
        let mut code = HashCode::default();
        for f in self.tensor_tuple(collection, tuple) {
            code.push(self.functions[f as usize].hash(v), self.bits_per_hash);
        }
        code
    }

    /// Evaluates every function some repetition uses. Unused slots hold 0.
    pub fn evaluate(&self, v: &[f32]) -> Vec<u64> {
        let mut scratch = Vec::new();
        self.functions
            .iter()
            .zip(&self.used)
            .map(|(f, &u)| if u { f.hash_with(v, &mut scratch) } else { 0 })
            .collect()
    }

    /// Code of repetition `j` from precomputed function outputs.
    pub fn compose(&self, j: usize, outputs: &[u64]) -> HashCode {
        let mut code = HashCode::default();
        for &f in &self.reps[j] {
            code.push(outputs[f as usize], self.bits_per_hash);
        }
        code
    }

    pub fn hash_point(&self, j: usize, v: &[f32]) -> HashCode {
        let mut code = HashCode::default();
        for &f in &self.reps[j] {
            code.push(self.functions[f as usize].hash(v), self.bits_per_hash);
        }
        code
    }

    /// Stopping rule of the configured strategy.
    ///
    /// `depth_bits` is the current prefix length, `searched` the repetitions
    /// scanned at this depth (for tensoring: the grid size `m` completed), and
    /// `collision(b)` a lower bound on the probability that the query and the
    /// current k-th candidate agree on the first `b` bits of one repetition.
    pub fn should_stop<F: Fn(u32) -> f64>(
        &self,
        depth_bits: u32,
        searched: usize,
        have_k: bool,
        collision: F,
        delta: f64,
    ) -> bool {
        if depth_bits == 0 {
            return true;
        }
        if !have_k {
            return false;
        }
        match self.config.strategy {
            Strategy::Independent => independent_criterion(searched, collision(depth_bits), delta),
            Strategy::Tensor => tensor_criterion(searched, collision(depth_bits / 2), delta),
            Strategy::Pool => {
                let depth_functions = depth_bits.div_ceil(self.bits_per_hash);
                pool_criterion(
                    searched,
                    collision(depth_bits),
                    self.functions.len(),
                    depth_functions,
                    collision(self.bits_per_hash),
                    delta,
                )
            }
        }
    }
}

fn isqrt(l: usize) -> usize {
    let mut r = (l as f64).sqrt() as usize;
    while r * r > l {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= l {
        r += 1;
    }
    r
}

/// Index of function `s` of tuple `t` in collection `c`.
fn tensor_function(side: usize, k: usize, c: usize, t: usize, s: usize) -> usize {
    (c * side + t) * (k / 2) + s
}

/// `j ≥ ln(1/δ) / p^i`, with `prefix_prob = p^i`.
pub fn independent_criterion(searched: usize, prefix_prob: f64, delta: f64) -> bool {
    searched as f64 * prefix_prob >= (1.0 / delta).ln()
}

/// `2(1 − p^{i/2})^m ≤ δ`, with `half_prefix_prob = p^{i/2}`.
pub fn tensor_criterion(grid: usize, half_prefix_prob: f64, delta: f64) -> bool {
    2.0 * (1.0 - half_prefix_prob).powi(grid as i32) <= delta
}

/// Expected collisions `j·p^i ≥ e·ln(1/δ)` and pool size `m ≥ 5i²/p`.
pub fn pool_criterion(
    searched: usize,
    prefix_prob: f64,
    pool_functions: usize,
    depth_functions: u32,
    single_prob: f64,
    delta: f64,
) -> bool {
    let expected = searched as f64 * prefix_prob;
    let i = depth_functions as f64;
    expected >= std::f64::consts::E * (1.0 / delta).ln()
        && pool_functions as f64 * single_prob >= 5.0 * i * i
}
