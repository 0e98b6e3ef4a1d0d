//! 64-bit hyperplane sketches and the Hamming-distance candidate filter.

use rayon::prelude::*;

use crate::dataset::{dot_f32, Dataset};
use crate::hashers::HashFamily;
use crate::probability::hp_collision;
use crate::rng;

pub const DEFAULT_SKETCHES: usize = 32;
pub const SKETCH_BITS: u32 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SketchSet {
    dim: usize,
    per_point: usize,
    /// `per_point · 64` hyperplane directions, row-major.
    directions: Vec<f32>,
    /// `n · per_point` sketch words.
    words: Vec<u64>,
}

impl SketchSet {
    pub fn build(dataset: &Dataset, per_point: usize, seed: u64) -> Self {
        assert!(per_point >= 1);
        let dim = dataset.dim();
        let directions = sample_directions(dim, per_point, seed);
        let mut set = SketchSet {
            dim,
            per_point,
            directions,
            words: vec![0; dataset.len() * per_point],
        };
        let mut words = std::mem::take(&mut set.words);
        words
            .par_chunks_mut(per_point)
            .enumerate()
            .for_each(|(i, out)| set.sketch_into(dataset.float_row(i), out));
        set.words = words;
        set
    }

    pub fn per_point(&self) -> usize {
        self.per_point
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.per_point
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, point: usize, slot: usize) -> u64 {
        self.words[point * self.per_point + slot]
    }

    /// Sketch words of an arbitrary unit vector. Bit `b` of word `m` is the
    /// hyperplane hash under direction `m·64 + b`.
    pub fn sketch(&self, v: &[f32]) -> Vec<u64> {
        let mut out = vec![0; self.per_point];
        self.sketch_into(v, &mut out);
        out
    }

    fn sketch_into(&self, v: &[f32], out: &mut [u64]) {
        for (m, word) in out.iter_mut().enumerate() {
            let mut w = 0u64;
            for b in 0..SKETCH_BITS as usize {
                let dir = &self.directions[(m * 64 + b) * self.dim..(m * 64 + b + 1) * self.dim];
                w |= ((dot_f32(dir, v) >= 0.0) as u64) << b;
            }
            *word = w;
        }
    }

    pub fn memory_bytes(&self) -> usize {
        self.words.len() * 8 + self.directions.len() * 4
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    /// Rebuilds the directions from `seed` around stored words.
    pub(crate) fn from_parts(dim: usize, per_point: usize, seed: u64, words: Vec<u64>) -> Self {
        SketchSet {
            dim,
            per_point,
            directions: sample_directions(dim, per_point, seed),
            words,
        }
    }
}

fn sample_directions(dim: usize, per_point: usize, seed: u64) -> Vec<f32> {
    let mut rng = rng::rng(seed, rng::SKETCHES);
    let mut directions = Vec::with_capacity(per_point * 64 * dim);
    for _ in 0..per_point * 64 {
        match HashFamily::Hyperplane.sample(dim, &mut rng) {
            crate::hashers::HashFunction::Hyperplane { direction } => directions.extend(direction),
            _ => unreachable!(),
        }
    }
    directions
}

/// Sketch slot used for candidates of repetition `j`.
pub fn select_sketch(j: usize, per_point: usize) -> usize {
    (rng::mix64(j as u64) % per_point as u64) as usize
}

/// Hamming threshold for a k-th best inner product `ip_k`:
/// `(1+ε)` times the expected sketch distance at that inner product, rounded
/// half up and clamped to `0..=64`.
pub fn threshold_for(ip_k: f64, epsilon: f64) -> u32 {
    let expected = (1.0 + epsilon) * SKETCH_BITS as f64 * (1.0 - hp_collision(ip_k));
    (expected + 0.5).floor().clamp(0.0, SKETCH_BITS as f64) as u32
}

/// Per-query filter state.
#[derive(Clone, Debug)]
pub struct FilterState {
    query: Vec<u64>,
    threshold: u32,
    epsilon: f64,
}

impl FilterState {
    pub fn new(query: Vec<u64>, epsilon: f64) -> Self {
        FilterState {
            query,
            threshold: SKETCH_BITS,
            epsilon,
        }
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn update(&mut self, ip_k: f64) {
        self.threshold = threshold_for(ip_k, self.epsilon);
    }

    pub fn passes(&self, slot: usize, candidate: u64) -> bool {
        (self.query[slot] ^ candidate).count_ones() <= self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset::new(d);
        for _ in 0..n {
            let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ds.insert(&v).unwrap();
        }
        ds
    }

    #[test]
    fn self_and_antipode_distances() {
        let ds = random_dataset(20, 30, 1);
        let sk = SketchSet::build(&ds, 8, 4);
        for i in 0..20 {
            let v = ds.float_row(i);
            let neg: Vec<f32> = v.iter().map(|x| -x).collect();
            let own = sk.sketch(v);
            let anti = sk.sketch(&neg);
            for m in 0..8 {
                assert_eq!(own[m], sk.word(i, m));
                assert_eq!((own[m] ^ anti[m]).count_ones(), 64);
            }
        }
    }

    #[test]
    fn bits_are_hyperplane_hashes() {
        let ds = random_dataset(3, 10, 2);
        let sk = SketchSet::build(&ds, 2, 9);
        for i in 0..3 {
            for m in 0..2 {
                for b in 0..64 {
                    let dir = &sk.directions[(m * 64 + b) * 10..(m * 64 + b + 1) * 10];
                    let expected = crate::hashers::hp_hash(dir, ds.float_row(i));
                    assert_eq!((sk.word(i, m) >> b) & 1, expected);
                }
            }
        }
    }

    #[test]
    fn orthogonal_pair_mean_distance() {
        let mut ds = Dataset::new(2);
        ds.insert(&[1.0, 0.0]).unwrap();
        ds.insert(&[0.0, 1.0]).unwrap();
        let sk = SketchSet::build(&ds, 32, 17);
        let total: u32 = (0..32)
            .map(|m| (sk.word(0, m) ^ sk.word(1, m)).count_ones())
            .sum();
        let mean = total as f64 / 32.0;
        assert!((mean - 32.0).abs() <= 4.0, "mean {mean}");
    }

    #[test]
    fn slot_selection() {
        assert!((0..100).all(|j| select_sketch(j, 1) == 0));
        assert_eq!(select_sketch(17, 32), select_sketch(17, 32));
        // chi-square over 4096 repetitions, 31 degrees of freedom;
        // 61.1 is the 0.999 quantile
        let mut counts = [0usize; 32];
        for j in 0..4096 {
            counts[select_sketch(j, 32)] += 1;
        }
        let expected = 4096.0 / 32.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 61.1, "chi2 {chi2}");
    }

    #[test]
    fn threshold_values() {
        assert_eq!(threshold_for(0.5, 0.0), 21);
        assert_eq!(threshold_for(1.0, 0.0), 0);
        assert_eq!(threshold_for(-1.0, 0.0), 64);
        assert_eq!(threshold_for(0.0, 0.0), 32);
        assert_eq!(threshold_for(0.0, 0.5), 48);
        assert_eq!(threshold_for(0.0, f64::INFINITY), 64);
    }

    #[test]
    fn threshold_tightens_as_candidates_improve() {
        let mut prev = 64;
        for s in 0..=200 {
            let t = threshold_for(-1.0 + s as f64 * 0.01, 0.0);
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn filter_passes() {
        let mut f = FilterState::new(vec![0b1011], 0.0);
        assert!(f.passes(0, !0));
        f.update(1.0);
        assert_eq!(f.threshold(), 0);
        assert!(f.passes(0, 0b1011));
        assert!(!f.passes(0, 0b1010));
    }
}
