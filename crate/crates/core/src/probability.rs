//! Collision-probability lower bounds used by the stopping rules.
//!
//! Hyperplane hashing has the closed form `1 − θ/π`. For the cross-polytope
//! families the probability is tabulated by Monte Carlo on an inner-product
//! grid with step 0.05, separately for every prefix length of the `ℓ`-bit
//! code, and lookups round the inner product down to the grid.

use std::fmt::Write as _;

use crate::hashers::{HashCode, HashFamily};
use crate::rng;

pub const GRID_STEP: f64 = 0.05;
pub const GRID_POINTS: usize = 41;
pub const DEFAULT_SAMPLES: usize = 1000;

pub fn hp_collision(ip: f64) -> f64 {
    1.0 - ip.clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

pub fn grid_value(bucket: usize) -> f64 {
    -1.0 + bucket as f64 * GRID_STEP
}

/// Grid bucket at or below `ip`.
pub fn bucket_of(ip: f64) -> usize {
    let ip = ip.clamp(-1.0, 1.0);
    (((ip + 1.0) / GRID_STEP + 1e-9).floor() as usize).min(GRID_POINTS - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionTable {
    family: HashFamily,
    dim: usize,
    max_bits: u32,
    samples: usize,
    /// Row-major `(max_bits + 1) × GRID_POINTS`.
    estimates: Vec<f64>,
}

impl CollisionTable {
    /// Estimates, for every grid inner product `α` and prefix length
    /// `b ≤ max_bits`, how often `x = e_0` and `y = (α, √(1−α²), 0, …)` agree
    /// on the first `b` bits of a random code. Each cell uses `samples` fresh
    /// draws; codes wider than one function concatenate several.
    pub fn build(family: HashFamily, dim: usize, max_bits: u32, samples: usize, seed: u64) -> Self {
        assert!(dim >= 2, "collision tables need at least two dimensions");
        let ell = family.bits_per_hash(dim);
        let per_code = max_bits.div_ceil(ell).max(1);
        let width = (max_bits + 1) as usize;
        let mut estimates = vec![0.0; width * GRID_POINTS];
        let mut x = vec![0.0f32; dim];
        x[0] = 1.0;
        for bucket in 0..GRID_POINTS {
            let alpha = grid_value(bucket);
            let mut y = vec![0.0f32; dim];
            y[0] = alpha as f32;
            y[1] = (1.0 - alpha * alpha).max(0.0).sqrt() as f32;
            let mut rng = rng::rng(seed, rng::TABLES.wrapping_mul(1 << 20) + bucket as u64);
            let mut hits = vec![0usize; width];
            for _ in 0..samples {
                let mut cx = HashCode::default();
                let mut cy = HashCode::default();
                for _ in 0..per_code {
                    let f = family.sample(dim, &mut rng);
                    cx.push(f.hash(&x), ell);
                    cy.push(f.hash(&y), ell);
                }
                let agree = (cx.bits ^ cy.bits).leading_zeros() - (64 - cx.len);
                for b in 0..=max_bits.min(agree) {
                    hits[b as usize] += 1;
                }
            }
            for b in 0..width {
                estimates[b * GRID_POINTS + bucket] = hits[b] as f64 / samples as f64;
            }
        }
        let mut table = CollisionTable {
            family,
            dim,
            max_bits,
            samples,
            estimates,
        };
        table.make_monotone();
        table
    }

    /// Lowers raw estimates until they are non-increasing in `b` and
    /// non-decreasing in `α`.
    fn make_monotone(&mut self) {
        let width = (self.max_bits + 1) as usize;
        for b in 1..width {
            for a in 0..GRID_POINTS {
                let prev = self.estimates[(b - 1) * GRID_POINTS + a];
                let cell = &mut self.estimates[b * GRID_POINTS + a];
                *cell = cell.min(prev);
            }
        }
        for b in 0..width {
            let row = &mut self.estimates[b * GRID_POINTS..(b + 1) * GRID_POINTS];
            for a in (0..GRID_POINTS - 1).rev() {
                row[a] = row[a].min(row[a + 1]);
            }
        }
    }

    pub fn family(&self) -> HashFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_bits(&self) -> u32 {
        self.max_bits
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn estimate(&self, bits: u32, bucket: usize) -> f64 {
        self.estimates[bits as usize * GRID_POINTS + bucket]
    }

    /// Lower bound for an `ip` rounded down to the grid, at prefix length `bits`.
    pub fn lookup(&self, ip: f64, bits: u32) -> f64 {
        assert!(bits <= self.max_bits);
        self.estimate(bits, bucket_of(ip))
    }

    /// One line per cell: `bits alpha estimate`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in 0..=self.max_bits {
            for a in 0..GRID_POINTS {
                let _ = writeln!(out, "{} {:.2} {:.6}", b, grid_value(a), self.estimate(b, a));
            }
        }
        out
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.estimates
    }

    pub(crate) fn from_raw(
        family: HashFamily,
        dim: usize,
        max_bits: u32,
        samples: usize,
        estimates: Vec<f64>,
    ) -> Option<Self> {
        (estimates.len() == (max_bits as usize + 1) * GRID_POINTS).then_some(CollisionTable {
            family,
            dim,
            max_bits,
            samples,
            estimates,
        })
    }
}

/// Collision lower bound for a repetition prefix of arbitrary length.
#[derive(Clone, Debug, PartialEq)]
pub enum CollisionModel {
    Hyperplane,
    /// Per-function table; prefixes spanning several functions multiply
    /// full-function probabilities.
    Table {
        table: CollisionTable,
        bits_per_hash: u32,
    },
}

impl CollisionModel {
    pub fn for_family(family: HashFamily, dim: usize, seed: u64) -> Self {
        match family {
            HashFamily::Hyperplane => CollisionModel::Hyperplane,
            _ => {
                let ell = family.bits_per_hash(dim);
                CollisionModel::Table {
                    table: CollisionTable::build(family, dim.max(2), ell, DEFAULT_SAMPLES, seed),
                    bits_per_hash: ell,
                }
            }
        }
    }

    /// Lower bound on the probability that two points with inner product
    /// `ip` share the first `bits` bits of a repetition's code.
    pub fn prefix_collision(&self, ip: f64, bits: u32) -> f64 {
        match self {
            CollisionModel::Hyperplane => hp_collision(ip).powi(bits as i32),
            CollisionModel::Table {
                table,
                bits_per_hash,
            } => {
                let whole = bits / bits_per_hash;
                let rest = bits % bits_per_hash;
                table.lookup(ip, *bits_per_hash).powi(whole as i32) * table.lookup(ip, rest)
            }
        }
    }

    pub fn table(&self) -> Option<&CollisionTable> {
        match self {
            CollisionModel::Hyperplane => None,
            CollisionModel::Table { table, .. } => Some(table),
        }
    }

    pub fn memory_bytes(&self) -> usize {
        self.table().map_or(0, |t| t.raw().len() * 8)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hp_closed_form() {
        assert_eq!(hp_collision(1.0), 1.0);
        assert!((hp_collision(0.0) - 0.5).abs() < 1e-15);
        assert!((hp_collision(0.5) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(hp_collision(-1.0), 0.0);
    }

    #[test]
    fn buckets_round_down() {
        assert_eq!(bucket_of(0.97), 39);
        assert!((grid_value(bucket_of(0.97)) - 0.95).abs() < 1e-12);
        assert_eq!(bucket_of(-1.0), 0);
        assert_eq!(bucket_of(1.0), 40);
        for a in 0..GRID_POINTS {
            assert_eq!(bucket_of(grid_value(a)), a);
        }
        assert_eq!(bucket_of(1.5), 40);
    }

    #[test]
    fn table_boundaries() {
        let t = CollisionTable::build(HashFamily::FhtCrossPolytope, 16, 5, 300, 1);
        for b in 0..=5 {
            assert_eq!(t.estimate(b, GRID_POINTS - 1), 1.0);
        }
        for a in 0..GRID_POINTS {
            assert_eq!(t.estimate(0, a), 1.0);
        }
    }

    #[test]
    fn table_is_monotone() {
        let t = CollisionTable::build(HashFamily::CrossPolytope, 8, 4, 400, 3);
        for b in 0..=4 {
            for a in 0..GRID_POINTS {
                let e = t.estimate(b, a);
                assert!((0.0..=1.0).contains(&e));
                if a + 1 < GRID_POINTS {
                    assert!(e <= t.estimate(b, a + 1));
                }
                if b < 4 {
                    assert!(t.estimate(b + 1, a) <= e);
                }
            }
        }
    }

    #[test]
    fn tables_are_deterministic() {
        let a = CollisionTable::build(HashFamily::FhtCrossPolytope, 20, 6, 200, 42);
        let b = CollisionTable::build(HashFamily::FhtCrossPolytope, 20, 6, 200, 42);
        assert_eq!(a, b);
        let c = CollisionTable::build(HashFamily::FhtCrossPolytope, 20, 6, 200, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn hyperplane_table_tracks_closed_form() {
        let t = CollisionTable::build(HashFamily::Hyperplane, 10, 4, 20_000, 8);
        for b in 1..=4 {
            for a in 0..GRID_POINTS {
                let exact = hp_collision(grid_value(a)).powi(b as i32);
                assert!((t.estimate(b, a) - exact).abs() <= 0.02, "b={b} a={a}");
            }
        }
    }

    #[test]
    fn cp_table_matches_large_resample() {
        // cell (ℓ, α = 0) of the 1000-sample table against a 10^5-sample estimate
        let d = 100;
        let ell = HashFamily::FhtCrossPolytope.bits_per_hash(d);
        let small = CollisionTable::build(HashFamily::FhtCrossPolytope, d, ell, DEFAULT_SAMPLES, 1);
        let large = CollisionTable::build(HashFamily::FhtCrossPolytope, d, ell, 100_000, 2);
        let p = large.estimate(ell, 20);
        let se = (p * (1.0 - p) / DEFAULT_SAMPLES as f64).sqrt();
        assert!((small.estimate(ell, 20) - p).abs() <= 3.0 * se + 1e-3);
    }

    #[test]
    fn lookup_monotone() {
        let t = CollisionTable::build(HashFamily::FhtCrossPolytope, 32, 6, 300, 5);
        let mut prev = 0.0;
        for s in 0..=400 {
            let ip = -1.0 + s as f64 * 0.005;
            let v = t.lookup(ip, 3);
            assert!(v >= prev);
            assert!(t.lookup(ip, 4) <= v);
            prev = v;
        }
    }

    #[test]
    fn model_composes_functions() {
        let model = CollisionModel::for_family(HashFamily::FhtCrossPolytope, 16, 3);
        let table = model.table().unwrap();
        let ell = 5;
        let ip = 0.6;
        let one = table.lookup(ip, ell);
        assert_eq!(model.prefix_collision(ip, 2 * ell), one * one);
        assert_eq!(
            model.prefix_collision(ip, ell + 2),
            one * table.lookup(ip, 2)
        );
        assert_eq!(model.prefix_collision(ip, 0), 1.0);
        let hp = CollisionModel::Hyperplane;
        assert!((hp.prefix_collision(0.0, 2) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn text_export() {
        let t = CollisionTable::build(HashFamily::FhtCrossPolytope, 4, 3, 50, 1);
        let text = t.to_text();
        assert_eq!(text.lines().count(), 4 * GRID_POINTS);
        assert!(text.starts_with("0 -1.00 1.000000"));
    }
}
