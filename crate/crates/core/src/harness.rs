//! Evaluation support: exact ground truth, recall, and the synthetic
//! instance on which every query shares one planted nearest neighbor.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{angular_distance, dot_f64, normalize, Dataset};
use crate::error::Result;
use crate::query::QueryResult;
use crate::rng;

pub const DEFAULT_K: usize = 10;

/// Exact neighbors of one query, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthRow {
    pub indices: Vec<u32>,
    pub distances: Vec<f64>,
}

/// Exhaustive top-k by inner product of the float rows; ties go to the
/// smaller index.
pub fn brute_force_knn(dataset: &Dataset, q: &[f32], k: usize) -> Result<TruthRow> {
    let unit = normalize(q)?;
    let mut scored: Vec<(f64, u32)> = (0..dataset.len())
        .map(|i| (dataset.inner_product_exact(i, &unit), i as u32))
        .collect();
    let k = k.min(scored.len());
    let cmp = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, cmp);
    }
    scored.truncate(k);
    scored.sort_by(cmp);
    Ok(TruthRow {
        indices: scored.iter().map(|s| s.1).collect(),
        distances: scored.iter().map(|s| angular_distance(s.0)).collect(),
    })
}

/// Ground truth for many queries, computed in parallel.
pub fn ground_truth<R: AsRef<[f32]> + Sync>(
    dataset: &Dataset,
    queries: &[R],
    k: usize,
) -> Result<Vec<TruthRow>> {
    queries
        .par_iter()
        .map(|q| brute_force_knn(dataset, q.as_ref(), k))
        .collect()
}

/// Fraction of the first `k` true neighbors that appear in `result`.
pub fn recall(result: &[u32], truth: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let truth = &truth[..k.min(truth.len())];
    result.iter().filter(|p| truth.contains(p)).count() as f64 / k as f64
}

pub fn result_recall(result: &QueryResult, truth: &TruthRow, k: usize) -> f64 {
    recall(&result.indices(), &truth.indices, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    /// Total point count; the planted point is the last of them.
    pub n: usize,
    pub queries: usize,
    /// Block dimension; vectors have `3·block_dim` coordinates.
    pub block_dim: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    /// `n` raw rows; the last is the planted neighbor.
    pub points: Vec<Vec<f32>>,
    pub queries: Vec<Vec<f32>>,
}

impl Synthetic {
    pub fn planted(&self) -> usize {
        self.points.len() - 1
    }
}

/// Background points `(0, y_i, z_i)`, planted point `(v, w, 0)`, queries
/// `(v, 0, r_i)`. Blocks have i.i.d. `N(0, 1/(2d))` coordinates except `r_i`,
/// which is a random direction of length exactly `√(1/2)`. The planted point
/// has expected inner product 1/2 with every query, background points 0.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Synthetic {
    let d = spec.block_dim;
    let normal = Normal::new(0.0f64, (1.0 / (2.0 * d as f64)).sqrt()).unwrap();
    let mut rng = rng::rng(spec.seed, 0x5157);
    let block = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> {
        (0..d).map(|_| normal.sample(rng) as f32).collect()
    };
    let zeros = vec![0.0f32; d];
    let mut points = Vec::with_capacity(spec.n);
    for _ in 0..spec.n.saturating_sub(1) {
        let y = block(&mut rng);
        let z = block(&mut rng);
        points.push([zeros.as_slice(), &y, &z].concat());
    }
    let v = block(&mut rng);
    let w = block(&mut rng);
    points.push([v.as_slice(), &w, &zeros].concat());
    let queries = (0..spec.queries)
        .map(|_| {
            let r = block(&mut rng);
            let scale = (0.5 / dot_f64(&r, &r)).sqrt() as f32;
            let r: Vec<f32> = r.iter().map(|x| x * scale).collect();
            [v.as_slice(), &zeros, &r].concat()
        })
        .collect();
    Synthetic { points, queries }
}

/// `count` vectors uniform on the unit sphere in `dim` dimensions.
pub fn random_unit_vectors(count: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = rng::rng(seed, 0x0a11);
    (0..count)
        .map(|_| {
            let v: Vec<f32> = (0..dim)
                .map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal))
                .collect();
            normalize(&v).unwrap_or_else(|_| {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                e
            })
        })
        .collect()
}

pub fn raw_inner_product(a: &[f32], b: &[f32]) -> f64 {
    dot_f64(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_oracle(rows: &[Vec<f32>], q: &[f32], k: usize) -> Vec<u32> {
        // selection by repeated scans for the next best unused point
        let unit = normalize(q).unwrap();
        let units: Vec<Vec<f32>> = rows.iter().map(|r| normalize(r).unwrap()).collect();
        let mut used = vec![false; rows.len()];
        let mut out = Vec::new();
        for _ in 0..k.min(rows.len()) {
            let mut best: Option<(f64, usize)> = None;
            for (i, u) in units.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let ip: f64 = u
                    .iter()
                    .zip(&unit)
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum();
                if best.is_none_or(|(b, _)| ip > b) {
                    best = Some((ip, i));
                }
            }
            let (_, i) = best.unwrap();
            used[i] = true;
            out.push(i as u32);
        }
        out
    }

    #[test]
    fn query_equal_to_point_ranks_first() {
        let rows = random_unit_vectors(50, 10, 1);
        let ds = Dataset::from_rows(&rows).unwrap();
        for i in [0, 17, 49] {
            assert_eq!(
                brute_force_knn(&ds, &rows[i], 3).unwrap().indices[0],
                i as u32
            );
        }
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let ds = Dataset::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let t = brute_force_knn(&ds, &[1.0, 0.0], 2).unwrap();
        assert_eq!(t.indices, vec![1, 2]);
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(
            brute_force_knn(&ds, &[1.0, 0.0], 1).unwrap().indices,
            vec![0]
        );
    }

    #[test]
    fn agrees_with_quadratic_oracle() {
        let rows = random_unit_vectors(100, 12, 4);
        let queries = random_unit_vectors(30, 12, 5);
        let ds = Dataset::from_rows(&rows).unwrap();
        for q in &queries {
            let t = brute_force_knn(&ds, q, 10).unwrap();
            assert_eq!(t.indices, quadratic_oracle(&rows, q, 10));
            assert!(t.distances.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn recall_counts() {
        let truth: Vec<u32> = (0..10).collect();
        assert_eq!(recall(&truth, &truth, 10), 1.0);
        assert_eq!(recall(&(10..20).collect::<Vec<_>>(), &truth, 10), 0.0);
        let mixed: Vec<u32> = (0..7).chain(50..53).collect();
        assert!((recall(&mixed, &truth, 10) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn synthetic_layout() {
        let s = gen_synthetic(&SyntheticSpec {
            n: 50,
            queries: 20,
            block_dim: 10,
            seed: 1,
        });
        assert_eq!(s.points.len(), 50);
        assert_eq!(s.planted(), 49);
        assert!(s.points.iter().chain(&s.queries).all(|p| p.len() == 30));
        assert!(s.points[..49]
            .iter()
            .all(|p| p[..10].iter().all(|&c| c == 0.0)));
        assert!(s.points[49][20..].iter().all(|&c| c == 0.0));
        for q in &s.queries {
            assert_eq!(&q[..10], &s.points[49][..10]);
            assert!(q[10..20].iter().all(|&c| c == 0.0));
            assert!((dot_f64(&q[20..], &q[20..]) - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn synthetic_expectations() {
        // v is shared by all queries of one instance, so average over instances
        let mut planted = 0.0;
        let mut background = 0.0;
        let (mut np, mut nb) = (0, 0);
        for seed in 0..200 {
            let s = gen_synthetic(&SyntheticSpec {
                n: 20,
                queries: 5,
                block_dim: 100,
                seed,
            });
            for q in &s.queries {
                planted += raw_inner_product(q, &s.points[s.planted()]);
                np += 1;
                for p in &s.points[..s.planted()] {
                    background += raw_inner_product(q, p);
                    nb += 1;
                }
            }
        }
        let (planted, background) = (planted / np as f64, background / nb as f64);
        assert!((planted - 0.5).abs() <= 0.02, "{planted}");
        assert!(background.abs() <= 0.02, "{background}");
    }
}
