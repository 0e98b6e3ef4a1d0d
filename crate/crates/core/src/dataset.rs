//! Vector storage on the unit sphere.
//!
//! Every inserted vector is normalized and kept twice: as `f32` for hashing,
//! table building and exact re-ranking, and as signed 16-bit fixed point for
//! the inner products computed during a query. Fixed-point rows are padded
//! with zeros to a multiple of 16 coordinates so each row starts on a 32-byte
//! boundary and can be consumed by 256-bit loads.

use crate::error::{Error, Result};

/// Number of `i16` lanes in one 32-byte block.
pub const LANES: usize = 16;

/// Scale of the fixed-point representation: a coordinate `c` is stored as
/// `round(c * 2^15)`, clamped to the `i16` range.
pub const FIXED_SCALE: f32 = 32768.0;

/// 32 bytes of fixed-point coordinates. Rows are stored as slices of these so
/// the allocation itself is 32-byte aligned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[repr(C, align(32))]
pub struct Block(pub [i16; LANES]);

pub fn to_fixed(c: f32) -> i16 {
    let scaled = (c * FIXED_SCALE).round();
    scaled.clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

pub fn padded_blocks(dim: usize) -> usize {
    dim.div_ceil(LANES)
}

/// Scales `v` to unit length. Fails on the zero vector.
pub fn normalize(v: &[f32]) -> Result<Vec<f32>> {
    let norm = v
        .iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

fn encode_fixed(unit: &[f32], blocks: usize) -> Vec<Block> {
    let mut row = vec![Block::default(); blocks];
    for (i, &c) in unit.iter().enumerate() {
        row[i / LANES].0[i % LANES] = to_fixed(c);
    }
    row
}

/// A normalized query in both representations.
#[derive(Clone, Debug)]
pub struct Query {
    pub floats: Vec<f32>,
    pub fixed: Vec<Block>,
}

impl Query {
    pub fn new(raw: &[f32], dim: usize) -> Result<Self> {
        if raw.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: raw.len(),
            });
        }
        let floats = normalize(raw)?;
        let fixed = encode_fixed(&floats, padded_blocks(dim));
        Ok(Query { floats, fixed })
    }
}

/// Append-only collection of unit vectors.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    dim: usize,
    len: usize,
    floats: Vec<f32>,
    fixed: Vec<Block>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            ..Default::default()
        }
    }

    /// Builds a dataset from raw rows; the first row fixes the dimension.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut ds = Dataset::new(dim);
        for r in rows {
            ds.insert(r.as_ref())?;
        }
        Ok(ds)
    }

    /// Normalizes `v`, appends it, and returns its point index.
    pub fn insert(&mut self, v: &[f32]) -> Result<usize> {
        if self.len == 0 && self.dim == 0 {
            self.dim = v.len();
        }
        if v.len() != self.dim || self.dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        let unit = normalize(v)?;
        self.fixed
            .extend(encode_fixed(&unit, padded_blocks(self.dim)));
        self.floats.extend_from_slice(&unit);
        self.len += 1;
        Ok(self.len - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks_per_row(&self) -> usize {
        padded_blocks(self.dim)
    }

    pub fn float_row(&self, i: usize) -> &[f32] {
        &self.floats[i * self.dim..(i + 1) * self.dim]
    }

    pub fn fixed_row(&self, i: usize) -> &[Block] {
        let b = self.blocks_per_row();
        &self.fixed[i * b..(i + 1) * b]
    }

    /// Fixed-point inner product between point `i` and a query row.
    pub fn inner_product_fixed(&self, i: usize, q: &[Block]) -> f32 {
        fixed_inner_product(self.fixed_row(i), q)
    }

    /// Inner product of the stored float rows, accumulated in `f64`.
    pub fn inner_product_exact(&self, i: usize, q: &[f32]) -> f64 {
        dot_f64(self.float_row(i), q)
    }

    /// Reassembles a dataset from its serialized float rows.
    pub(crate) fn from_unit_floats(dim: usize, floats: Vec<f32>) -> Self {
        let len = floats.len().checked_div(dim).unwrap_or(0);
        let blocks = padded_blocks(dim);
        let mut fixed = Vec::with_capacity(len * blocks);
        for row in floats.chunks_exact(dim.max(1)).take(len) {
            fixed.extend(encode_fixed(row, blocks));
        }
        Dataset {
            dim,
            len,
            floats,
            fixed,
        }
    }

    pub(crate) fn raw_floats(&self) -> &[f32] {
        &self.floats
    }

    pub fn memory_bytes(&self) -> usize {
        self.floats.len() * 4 + self.fixed.len() * std::mem::size_of::<Block>()
    }
}

pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// `f32` dot product with eight independent accumulators so the loop
/// vectorizes without reassociation flags.
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f32; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f32>() + tail
}

/// Exact integer dot product of two fixed-point rows, as a real in [-1, 1]
/// (up to rounding).
pub fn fixed_inner_product(a: &[Block], b: &[Block]) -> f32 {
    fixed_dot_i64(a, b) as f32 / (1u64 << 30) as f32
}

/// Integer sum of products. Dispatches to AVX2 when the CPU has it; the
/// result is exact either way, so both paths agree bit for bit.
pub fn fixed_dot_i64(a: &[Block], b: &[Block]) -> i64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: feature checked above; Block is 32-byte aligned.
            return unsafe { avx2::dot(a, b) };
        }
    }
    fixed_dot_scalar(a, b)
}

pub fn fixed_dot_scalar(a: &[Block], b: &[Block]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.0.iter()
                .zip(&y.0)
                .map(|(&p, &q)| p as i64 * q as i64)
                .sum::<i64>()
        })
        .sum()
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use super::Block;
    use std::arch::x86_64::*;

    #[target_feature(enable = "avx2")]
    pub unsafe fn dot(a: &[Block], b: &[Block]) -> i64 {
        // madd produces pairwise i32 sums; widen every block so long rows
        // cannot overflow the 32-bit lanes.
        let mut acc = _mm256_setzero_si256();
        for (x, y) in a.iter().zip(b) {
            let va = _mm256_load_si256(x.0.as_ptr() as *const __m256i);
            let vb = _mm256_load_si256(y.0.as_ptr() as *const __m256i);
            let prod = _mm256_madd_epi16(va, vb);
            let lo = _mm256_cvtepi32_epi64(_mm256_castsi256_si128(prod));
            let hi = _mm256_cvtepi32_epi64(_mm256_extracti128_si256(prod, 1));
            acc = _mm256_add_epi64(acc, _mm256_add_epi64(lo, hi));
        }
        let mut lanes = [0i64; 4];
        _mm256_storeu_si256(lanes.as_mut_ptr() as *mut __m256i, acc);
        lanes.iter().sum()
    }
}

/// Angular distance for an inner product, clamped against rounding noise.
pub fn angular_distance(ip: f64) -> f64 {
    ip.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f32> {
        let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        normalize(&v).unwrap()
    }

    #[test]
    fn insert_normalizes() {
        let mut ds = Dataset::new(2);
        assert_eq!(ds.insert(&[3.0, 4.0]).unwrap(), 0);
        let row = ds.float_row(0);
        assert!((row[0] - 0.6).abs() < 1e-7 && (row[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn zero_vector_rejected() {
        let mut ds = Dataset::new(2);
        assert!(matches!(ds.insert(&[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut ds = Dataset::new(0);
        ds.insert(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            ds.insert(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn fixed_point_clamps_one() {
        let mut ds = Dataset::new(3);
        ds.insert(&[1.0, 0.0, 0.0]).unwrap();
        let row = ds.fixed_row(0);
        assert_eq!(&row[0].0[..3], &[32767, 0, 0]);
        assert!(row[0].0[3..].iter().all(|&c| c == 0));
        assert_eq!(to_fixed(-1.0), -32768);
        assert_eq!(to_fixed(0.5), 16384);
    }

    #[test]
    fn rows_are_aligned_and_padded() {
        let mut ds = Dataset::new(20);
        ds.insert(&[1.0; 20]).unwrap();
        ds.insert(&[2.0; 20]).unwrap();
        assert_eq!(ds.blocks_per_row(), 2);
        for i in 0..2 {
            let row = ds.fixed_row(i);
            assert_eq!(row.as_ptr() as usize % 32, 0);
            assert!(row[1].0[4..].iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn self_and_orthogonal_products() {
        let mut ds = Dataset::new(4);
        ds.insert(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        ds.insert(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        ds.insert(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        let q0 = ds.fixed_row(0).to_vec();
        assert!((ds.inner_product_fixed(0, &q0) - 1.0).abs() < 2e-3);
        let q2 = ds.fixed_row(2).to_vec();
        assert_eq!(ds.inner_product_fixed(1, &q2), 0.0);
    }

    #[test]
    fn simd_matches_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 15, 16, 17, 100, 300] {
            let mut ds = Dataset::new(d);
            for _ in 0..50 {
                ds.insert(&random_unit(&mut rng, d)).unwrap();
            }
            for i in 0..50 {
                let q = ds.fixed_row((i * 7) % 50);
                assert_eq!(
                    fixed_dot_i64(ds.fixed_row(i), q),
                    fixed_dot_scalar(ds.fixed_row(i), q)
                );
            }
        }
    }

    #[test]
    fn fixed_close_to_double() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 64;
        let mut worst = 0.0f64;
        for _ in 0..2000 {
            let a = random_unit(&mut rng, d);
            let b = random_unit(&mut rng, d);
            let ds = Dataset::from_rows(std::slice::from_ref(&a)).unwrap();
            let q = Query::new(&b, d).unwrap();
            let err = (ds.inner_product_fixed(0, &q.fixed) as f64 - dot_f64(&a, &b)).abs();
            worst = worst.max(err);
        }
        assert!(worst <= 2e-3, "worst error {worst}");
    }

    #[test]
    fn normalization_is_idempotent_in_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let v = random_unit(&mut rng, 37);
            let mut ds = Dataset::new(37);
            ds.insert(&v).unwrap();
            for (j, &c) in v.iter().enumerate() {
                let stored = ds.fixed_row(0)[j / LANES].0[j % LANES] as i32;
                assert!((stored - to_fixed(c) as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn zero_padding_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for extra in 0..=15 {
            let a = random_unit(&mut rng, 33);
            let b = random_unit(&mut rng, 33);
            let mut ap = a.clone();
            let mut bp = b.clone();
            ap.resize(33 + extra, 0.0);
            bp.resize(33 + extra, 0.0);
            let short = Dataset::from_rows(&[a]).unwrap();
            let long = Dataset::from_rows(&[ap]).unwrap();
            let qs = Query::new(&b, 33).unwrap();
            let ql = Query::new(&bp, 33 + extra).unwrap();
            assert_eq!(
                short.inner_product_fixed(0, &qs.fixed),
                long.inner_product_fixed(0, &ql.fixed)
            );
        }
    }

    #[test]
    fn angular_distance_endpoints() {
        assert_eq!(angular_distance(1.0), 0.0);
        assert!((angular_distance(0.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((angular_distance(-1.0) - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(angular_distance(1.0000001), 0.0);
    }

    #[test]
    fn dot_f32_matches_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 7, 8, 9, 100] {
            let a = random_unit(&mut rng, d);
            let b = random_unit(&mut rng, d);
            assert!((dot_f32(&a, &b) as f64 - dot_f64(&a, &b)).abs() < 1e-5);
        }
    }
}
