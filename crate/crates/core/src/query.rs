//! Adaptive k-NN search over a built [`Index`].
//!
//! The search walks prefix lengths from the full code length down to zero.
//! At each length it visits the repetitions in order, pulls the newly
//! colliding points, filters them by sketch distance, and computes
//! fixed-point inner products for the survivors. After every repetition the
//! strategy's stopping rule is evaluated against a lower bound on the
//! collision probability of the current k-th best candidate. Reaching length
//! zero turns into an unfiltered linear scan, so the answer is then exact.

use crate::dataset::{angular_distance, Query};
use crate::error::{Error, Result};
use crate::hash_source::Strategy;
use crate::index::{Index, SearchCursor};
use crate::probability::CollisionModel;
use crate::sketching::{select_sketch, FilterState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub k: usize,
    /// Per-neighbor failure probability; the target recall is `1 − δ`.
    pub delta: f64,
    pub filter: bool,
    /// Slack on the sketch threshold (`τ = (1+ε)·expected distance`).
    pub epsilon: f64,
    /// Record the k-th candidate at every stopping check.
    pub trace: bool,
}

impl SearchOptions {
    pub fn new(k: usize, delta: f64) -> Self {
        SearchOptions {
            k,
            delta,
            filter: true,
            epsilon: 0.0,
            trace: false,
        }
    }

    pub fn with_recall(k: usize, recall: f64) -> Self {
        Self::new(k, 1.0 - recall)
    }

    pub fn filter(mut self, on: bool) -> Self {
        self.filter = on;
        self
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: u32,
    /// Inner product from the float rows.
    pub inner_product: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Prefix length at which the search stopped.
    pub depth: u32,
    /// Repetitions (tensoring: grid side) completed at that depth.
    pub repetitions_at_depth: usize,
    /// Points handed out by the cursor, repeats included.
    pub candidates: usize,
    pub filter_rejections: usize,
    pub distance_computations: usize,
    /// The search fell through to the linear scan.
    pub exhausted: bool,
    /// `k` exceeded the dataset size; every point was returned.
    pub k_truncated: bool,
    /// `(depth, searched, k-th inner product)` per stopping check, when traced.
    pub trace: Vec<(u32, usize, f32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    /// Ascending by distance, ties by point index.
    pub neighbors: Vec<Neighbor>,
    pub diagnostics: Diagnostics,
}

impl QueryResult {
    pub fn indices(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.index).collect()
    }
}

/// De-duplicating top-k tracker: a result buffer of up to `2k` entries and a
/// staging buffer of `k` entries merged in by sorting.
#[derive(Clone, Debug)]
pub struct Accumulator {
    k: usize,
    top: Vec<(u32, f32)>,
    staging: Vec<(u32, f32)>,
}

/// Slack on the admission test: candidates are scored in fixed point, so one
/// slightly below the k-th may still beat it once re-ranked exactly.
pub const ADMISSION_SLACK: f32 = 4e-3;

fn by_ip_then_index(a: &(u32, f32), b: &(u32, f32)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl Accumulator {
    pub fn new(k: usize) -> Self {
        Accumulator {
            k,
            top: Vec::with_capacity(3 * k),
            staging: Vec::with_capacity(k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Inner product of the k-th best point as of the last consolidation.
    pub fn kth(&self) -> Option<f32> {
        self.top.get(self.k - 1).map(|e| e.1)
    }

    pub fn is_full(&self) -> bool {
        self.top.len() >= self.k
    }

    /// Stages a point unless it is clearly worse than the current k-th.
    /// Returns true if the staging buffer filled up and was merged.
    pub fn offer(&mut self, point: u32, ip: f32) -> bool {
        if let Some(kth) = self.kth() {
            if ip < kth - ADMISSION_SLACK {
                return false;
            }
        }
        self.staging.push((point, ip));
        if self.staging.len() >= self.k {
            self.consolidate();
            return true;
        }
        false
    }

    pub fn consolidate(&mut self) {
        if self.staging.is_empty() {
            return;
        }
        self.top.append(&mut self.staging);
        self.top.sort_unstable_by(by_ip_then_index);
        self.top.dedup_by_key(|e| e.0);
        self.top.truncate(2 * self.k);
    }

    /// Consolidated buffer, best first.
    pub fn top(&self) -> &[(u32, f32)] {
        &self.top
    }

    pub fn best_k(&self) -> &[(u32, f32)] {
        &self.top[..self.top.len().min(self.k)]
    }
}

/// Collision lower bound for the k-th candidate at a prefix of `bits` bits.
pub fn current_pk(model: &CollisionModel, kth_ip: f32, bits: u32) -> f64 {
    model.prefix_collision(kth_ip as f64, bits)
}

struct SeenSet(Vec<u64>);

impl SeenSet {
    fn new(n: usize) -> Self {
        SeenSet(vec![0; n.div_ceil(64)])
    }

    fn contains(&self, p: u32) -> bool {
        (self.0[p as usize / 64] >> (p % 64)) & 1 == 1
    }

    fn insert(&mut self, p: u32) {
        self.0[p as usize / 64] |= 1 << (p % 64);
    }
}

struct Engine<'a> {
    index: &'a Index,
    query: Query,
    opts: SearchOptions,
    k: usize,
    acc: Accumulator,
    seen: SeenSet,
    filter: Option<FilterState>,
    cursor: SearchCursor,
    buf: Vec<u32>,
    diag: Diagnostics,
    filtered_kth: Option<f32>,
}

impl<'a> Engine<'a> {
    fn scan_repetition(&mut self, j: usize, depth: u32) {
        self.buf.clear();
        self.cursor
            .retrieve_new(self.index.repetitions(), j, depth, &mut self.buf);
        let sketches = self.index.sketches();
        let slot = select_sketch(j, sketches.per_point());
        let buf = std::mem::take(&mut self.buf);
        for &p in &buf {
            self.diag.candidates += 1;
            if self.seen.contains(p) {
                continue;
            }
            if let Some(f) = &self.filter {
                if !f.passes(slot, sketches.word(p as usize, slot)) {
                    self.diag.filter_rejections += 1;
                    continue;
                }
            }
            self.compute(p);
        }
        self.buf = buf;
        self.acc.consolidate();
        self.refresh_filter();
    }

    fn compute(&mut self, p: u32) {
        self.seen.insert(p);
        self.diag.distance_computations += 1;
        let ip = self
            .index
            .dataset()
            .inner_product_fixed(p as usize, &self.query.fixed);
        if self.acc.offer(p, ip) {
            self.refresh_filter();
        }
    }

    fn refresh_filter(&mut self) {
        let kth = self.acc.kth();
        if kth == self.filtered_kth {
            return;
        }
        self.filtered_kth = kth;
        if let (Some(f), Some(ip)) = (&mut self.filter, kth) {
            f.update(ip as f64);
        }
    }

    fn should_stop(&mut self, depth: u32, searched: usize) -> bool {
        let kth = self.acc.kth();
        if self.opts.trace {
            self.diag
                .trace
                .push((depth, searched, kth.unwrap_or(f32::NAN)));
        }
        let model = self.index.model();
        let ip = kth.unwrap_or(-1.0);
        let stop = self.index.source().should_stop(
            depth,
            searched,
            kth.is_some(),
            |bits| current_pk(model, ip, bits),
            self.opts.delta,
        );
        if stop {
            self.diag.depth = depth;
            self.diag.repetitions_at_depth = searched;
        }
        stop
    }

    fn linear_scan(&mut self) {
        for p in 0..self.index.len() as u32 {
            self.diag.candidates += 1;
            if !self.seen.contains(p) {
                self.compute(p);
            }
        }
        self.acc.consolidate();
        self.diag.exhausted = true;
        self.diag.depth = 0;
        self.diag.repetitions_at_depth = self.index.repetitions().len().min(1);
    }

    fn run_sequential(&mut self) {
        let reps = self.index.repetitions().len();
        for depth in (1..=self.index.config().code_bits).rev() {
            for j in 0..reps {
                self.scan_repetition(j, depth);
                if self.should_stop(depth, j + 1) {
                    return;
                }
            }
        }
        self.linear_scan();
    }

    fn run_tensor(&mut self) {
        let source = self.index.source();
        let side = source.tensor_side();
        let ell = source.bits_per_hash();
        let k = source.config().functions_per_rep as u32;
        let mut i = k;
        while i >= 2 {
            let depth = i * ell;
            for m in 0..side {
                for j in 0..=m {
                    self.scan_repetition(source.tensor_repetition(j, m), depth);
                    if j != m {
                        self.scan_repetition(source.tensor_repetition(m, j), depth);
                    }
                }
                if self.should_stop(depth, m + 1) {
                    return;
                }
            }
            i -= 2;
        }
        self.linear_scan();
    }

    fn finish(self) -> QueryResult {
        let dataset = self.index.dataset();
        let mut ranked: Vec<Neighbor> = self
            .acc
            .top()
            .iter()
            .map(|&(p, _)| {
                let ip = dataset.inner_product_exact(p as usize, &self.query.floats);
                Neighbor {
                    index: p,
                    inner_product: ip,
                    distance: angular_distance(ip),
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.inner_product
                .total_cmp(&a.inner_product)
                .then(a.index.cmp(&b.index))
        });
        ranked.truncate(self.k);
        QueryResult {
            neighbors: ranked,
            diagnostics: self.diag,
        }
    }
}

/// Returns `k` points, each a true k-nearest neighbor of `q` with
/// probability at least `1 − δ`.
pub fn search(index: &Index, q: &[f32], opts: &SearchOptions) -> Result<QueryResult> {
    if index.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if opts.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if !(opts.delta > 0.0 && opts.delta < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1), got {}",
            opts.delta
        )));
    }
    let dataset = index.dataset();
    let query = Query::new(q, dataset.dim())?;
    let n = index.len();
    let k = opts.k.min(n);
    let filter = opts
        .filter
        .then(|| FilterState::new(index.sketches().sketch(&query.floats), opts.epsilon));
    let cursor = index.open_cursor(&query.floats);
    let mut engine = Engine {
        index,
        query,
        opts: *opts,
        k,
        acc: Accumulator::new(k),
        seen: SeenSet::new(n),
        filter,
        cursor,
        buf: Vec::new(),
        diag: Diagnostics {
            k_truncated: opts.k > n,
            ..Default::default()
        },
        filtered_kth: None,
    };
    match index.config().strategy {
        Strategy::Tensor => engine.run_tensor(),
        Strategy::Independent | Strategy::Pool => engine.run_sequential(),
    }
    Ok(engine.finish())
}

/// [`search`] with a target recall `r` in place of `δ = 1 − r`.
pub fn search_recall(index: &Index, q: &[f32], k: usize, recall: f64) -> Result<QueryResult> {
    search(index, q, &SearchOptions::with_recall(k, recall))
}
