//! The LSH forest, flattened.
//!
//! Each repetition is a sorted array of 64-bit tuples: the repetition's hash
//! code left-aligned in the high `code_bits` bits and the point index in the
//! rest. Points sharing a prefix of length `i` with a query form a contiguous
//! range, and shortening the prefix by one bit widens that range on one side.
//! A 2^13-entry table of 13-bit prefix positions narrows the initial binary
//! search.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hash_source::{
    floor_even_power_of_two, HashSource, SourceConfig, Strategy, DEFAULT_POOL_BITS,
};
use crate::hashers::{HashCode, HashFamily};
use crate::probability::CollisionModel;
use crate::rng;
use crate::sketching::{SketchSet, DEFAULT_SKETCHES};

pub const PREFIX_TABLE_BITS: u32 = 13;
pub const PREFIX_TABLE_LEN: usize = (1 << PREFIX_TABLE_BITS) + 1;
pub const DEFAULT_CODE_BITS: u32 = 24;
pub const DEFAULT_SEGMENT: usize = 12;
pub const MAX_REPETITIONS: usize = 4096;
pub const DEFAULT_RECALL: f64 = 0.9;

/// User-facing build parameters. Everything except the memory budget has a
/// default.
#[derive(Clone, Debug)]
pub struct IndexParams {
    pub memory_budget: usize,
    pub family: HashFamily,
    pub strategy: Strategy,
    /// Upper bound on the code length per repetition.
    pub max_code_bits: u32,
    pub segment: usize,
    pub sketches: usize,
    pub pool_bits: usize,
}

impl IndexParams {
    pub fn new(memory_budget: usize) -> Self {
        IndexParams {
            memory_budget,
            family: HashFamily::Hyperplane,
            strategy: Strategy::Pool,
            max_code_bits: DEFAULT_CODE_BITS,
            segment: DEFAULT_SEGMENT,
            sketches: DEFAULT_SKETCHES,
            pool_bits: DEFAULT_POOL_BITS,
        }
    }

    pub fn family(mut self, family: HashFamily) -> Self {
        self.family = family;
        self
    }

    pub fn strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }
}

/// Fully resolved index shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexConfig {
    pub memory_budget: usize,
    pub family: HashFamily,
    pub strategy: Strategy,
    pub functions_per_rep: usize,
    /// Code length `K·ℓ` in bits.
    pub code_bits: u32,
    pub repetitions: usize,
    pub segment: usize,
    pub sketches: usize,
    pub pool_bits: usize,
}

impl IndexConfig {
    pub fn source_config(&self) -> SourceConfig {
        SourceConfig {
            strategy: self.strategy,
            functions_per_rep: self.functions_per_rep,
            repetitions: self.repetitions,
            pool_bits: self.pool_bits,
        }
    }

    /// Same shape with an explicit repetition count, bypassing the budget.
    pub fn with_repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }
}

/// Memory accounting behind [`derive_parameters`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub fixed: usize,
    pub per_repetition: usize,
}

impl CostModel {
    pub fn budget_for(&self, repetitions: usize) -> usize {
        self.fixed + repetitions * self.per_repetition
    }
}

pub fn functions_per_rep(params: &IndexParams, dim: usize) -> usize {
    let ell = params.family.bits_per_hash(dim);
    let k = (params.max_code_bits / ell) as usize;
    match params.strategy {
        Strategy::Tensor => k & !1,
        _ => k,
    }
}

pub fn cost_model(params: &IndexParams, n: usize, dim: usize) -> CostModel {
    let blocks = crate::dataset::padded_blocks(dim);
    let dataset = n * dim * 4 + n * blocks * 32;
    let sketches = n * params.sketches * 8 + params.sketches * 64 * dim * 4;
    let ell = params.family.bits_per_hash(dim);
    let tables = match params.family {
        HashFamily::Hyperplane => 0,
        _ => (ell as usize + 1) * crate::probability::GRID_POINTS * 8,
    };
    let fbytes = params.family.function_bytes(dim);
    let k = functions_per_rep(params, dim);
    let (fixed_functions, rep_functions) = match params.strategy {
        Strategy::Pool => (params.pool_bits.div_ceil(ell as usize) * fbytes, 0),
        _ => (0, k * fbytes),
    };
    CostModel {
        fixed: dataset + sketches + tables + fixed_functions,
        per_repetition: n * 8 + PREFIX_TABLE_LEN * 4 + rep_functions,
    }
}

/// Picks the repetition count that fits the memory budget.
pub fn derive_parameters(params: &IndexParams, n: usize, dim: usize) -> Result<IndexConfig> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let ell = params.family.bits_per_hash(dim);
    let k = functions_per_rep(params, dim);
    if k == 0 {
        return Err(Error::InvalidConfig(format!(
            "max code length {} cannot hold a {}-bit hash{}",
            params.max_code_bits,
            ell,
            if params.strategy == Strategy::Tensor {
                " pair"
            } else {
                ""
            }
        )));
    }
    let code_bits = k as u32 * ell;
    if code_bits > 32 || (n as u64) > (1u64 << (64 - code_bits)) {
        return Err(Error::InvalidConfig(format!(
            "{code_bits}-bit codes leave too few tuple bits for {n} points"
        )));
    }
    if params.segment == 0 || params.sketches == 0 {
        return Err(Error::InvalidConfig(
            "segment size and sketch count must be positive".into(),
        ));
    }
    let cost = cost_model(params, n, dim);
    let minimum = cost.budget_for(1);
    if params.memory_budget < minimum {
        return Err(Error::InsufficientBudget {
            budget: params.memory_budget,
            minimum,
        });
    }
    let mut repetitions =
        ((params.memory_budget - cost.fixed) / cost.per_repetition).min(MAX_REPETITIONS);
    if params.strategy == Strategy::Tensor {
        repetitions = floor_even_power_of_two(repetitions);
    }
    Ok(IndexConfig {
        memory_budget: params.memory_budget,
        family: params.family,
        strategy: params.strategy,
        functions_per_rep: k,
        code_bits,
        repetitions,
        segment: params.segment,
        sketches: params.sketches,
        pool_bits: params.pool_bits,
    })
}

/// One repetition: sorted tuples plus the 13-bit prefix table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Repetition {
    entries: Vec<u64>,
    prefix_table: Vec<u32>,
    code_bits: u32,
}

fn pack(code: HashCode, point: usize) -> u64 {
    code.left_aligned() | point as u64
}

fn prefix_mask(bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        !0u64 << (64 - bits)
    }
}

impl Repetition {
    /// Sorts the tuples and tabulates prefix positions. `tuples` must hold
    /// codes packed by [`Repetition::pack`].
    pub fn from_tuples(mut entries: Vec<u64>, code_bits: u32) -> Self {
        entries.sort_unstable();
        let mut prefix_table = vec![0u32; PREFIX_TABLE_LEN];
        let mut t = 0usize;
        for (p, slot) in prefix_table.iter_mut().enumerate() {
            while t < entries.len() && ((entries[t] >> (64 - PREFIX_TABLE_BITS)) as usize) < p {
                t += 1;
            }
            *slot = t as u32;
        }
        Repetition {
            entries,
            prefix_table,
            code_bits,
        }
    }

    pub fn from_codes(codes: &[HashCode]) -> Self {
        let code_bits = codes.first().map_or(0, |c| c.len);
        Self::from_tuples(
            codes.iter().enumerate().map(|(i, &c)| pack(c, i)).collect(),
            code_bits,
        )
    }

    pub fn pack(code: HashCode, point: usize) -> u64 {
        pack(code, point)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn code_bits(&self) -> u32 {
        self.code_bits
    }

    pub fn point(&self, t: usize) -> usize {
        let index_bits = 64 - self.code_bits;
        (self.entries[t]
            & (if index_bits == 64 {
                !0
            } else {
                (1u64 << index_bits) - 1
            })) as usize
    }

    pub fn code(&self, t: usize) -> HashCode {
        let bits = if self.code_bits == 0 {
            0
        } else {
            self.entries[t] >> (64 - self.code_bits)
        };
        HashCode::new(bits, self.code_bits)
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn prefix_table(&self) -> &[u32] {
        &self.prefix_table
    }

    /// Range of entries sharing the first `bits` bits of `key` (a
    /// left-aligned query code).
    pub fn range(&self, key: u64, bits: u32) -> (usize, usize) {
        let n = self.entries.len();
        if bits == 0 {
            return (0, n);
        }
        let lo_key = key & prefix_mask(bits);
        let hi_key = lo_key.checked_add(1u64 << (64 - bits));
        let slot = |k: u64| (k >> (64 - PREFIX_TABLE_BITS)) as usize;
        if bits <= PREFIX_TABLE_BITS {
            let lo = self.prefix_table[slot(lo_key)] as usize;
            let hi = hi_key.map_or(n, |h| self.prefix_table[slot(h)] as usize);
            return (lo, hi);
        }
        let p = slot(lo_key);
        let (a, b) = (
            self.prefix_table[p] as usize,
            self.prefix_table[p + 1] as usize,
        );
        let bucket = &self.entries[a..b];
        let lo = a + bucket.partition_point(|&e| e < lo_key);
        let hi = match hi_key {
            Some(h) => a + bucket.partition_point(|&e| e < h),
            None => b,
        };
        (lo, hi)
    }

    pub fn memory_bytes(&self) -> usize {
        self.entries.len() * 8 + self.prefix_table.len() * 4
    }
}

/// Per-repetition retrieval state of one query.
#[derive(Clone, Debug)]
struct RepCursor {
    key: u64,
    depth: u32,
    matched: (usize, usize),
    emitted: (usize, usize),
    started: bool,
}

#[derive(Clone, Debug)]
pub struct SearchCursor {
    reps: Vec<RepCursor>,
    segment: usize,
}

impl SearchCursor {
    /// Positions the query in every repetition at full code length.
    pub fn open(repetitions: &[Repetition], codes: &[HashCode], segment: usize) -> Self {
        let reps = repetitions
            .iter()
            .zip(codes)
            .map(|(rep, code)| {
                let key = code.left_aligned();
                let depth = rep.code_bits();
                let matched = rep.range(key, depth);
                RepCursor {
                    key,
                    depth,
                    matched,
                    emitted: (matched.0, matched.0),
                    started: false,
                }
            })
            .collect();
        SearchCursor {
            reps,
            segment: segment.max(1),
        }
    }

    /// Current exact prefix-match range of repetition `j`.
    pub fn matched(&self, j: usize) -> (usize, usize) {
        self.reps[j].matched
    }

    /// Entries emitted so far by repetition `j`, segment spill included.
    pub fn emitted(&self, j: usize) -> (usize, usize) {
        self.reps[j].emitted
    }

    /// Widens repetition `j` to prefix length `depth` and appends the point
    /// indices not emitted before. Entries are fetched in whole segments, so
    /// up to `segment − 1` extra entries may spill over on each side.
    pub fn retrieve_new(
        &mut self,
        repetitions: &[Repetition],
        j: usize,
        depth: u32,
        out: &mut Vec<u32>,
    ) {
        let rep = &repetitions[j];
        let cur = &mut self.reps[j];
        if cur.started && depth >= cur.depth {
            return;
        }
        if depth < cur.depth {
            cur.matched = rep.range(cur.key, depth);
            cur.depth = depth;
        }
        cur.started = true;
        let (lo, hi) = cur.matched;
        let (mut elo, mut ehi) = cur.emitted;
        let b = self.segment;
        if lo < elo {
            let new_lo = elo.saturating_sub((elo - lo).div_ceil(b) * b);
            out.extend((new_lo..elo).map(|t| rep.point(t) as u32));
            elo = new_lo;
        }
        if hi > ehi {
            let new_hi = (ehi + (hi - ehi).div_ceil(b) * b).min(rep.len());
            out.extend((ehi..new_hi).map(|t| rep.point(t) as u32));
            ehi = new_hi;
        }
        cur.emitted = (elo, ehi);
    }
}

/// The built index. Immutable; queries borrow it.
#[derive(Clone, Debug)]
pub struct Index {
    pub(crate) config: IndexConfig,
    pub(crate) seed: u64,
    pub(crate) dataset: Dataset,
    pub(crate) source: HashSource,
    pub(crate) model: CollisionModel,
    pub(crate) sketches: SketchSet,
    pub(crate) repetitions: Vec<Repetition>,
    /// Recall used by callers that do not pass their own.
    pub(crate) default_recall: f64,
}

impl Index {
    /// Derives the shape from the memory budget and builds.
    pub fn build(dataset: Dataset, params: &IndexParams, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let config = derive_parameters(params, dataset.len(), dataset.dim())?;
        Self::build_with_config(dataset, config, seed)
    }

    pub fn build_with_config(dataset: Dataset, config: IndexConfig, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let source = HashSource::new(config.source_config(), config.family, dataset.dim(), seed)?;
        let model = CollisionModel::for_family(
            config.family,
            dataset.dim(),
            rng::derive(seed, rng::TABLES),
        );
        let sketches = SketchSet::build(&dataset, config.sketches, seed);
        let repetitions = build_repetitions(&dataset, &source);
        Ok(Index {
            config,
            seed,
            dataset,
            source,
            model,
            sketches,
            repetitions,
            default_recall: DEFAULT_RECALL,
        })
    }

    pub fn default_recall(&self) -> f64 {
        self.default_recall
    }

    pub fn set_default_recall(&mut self, recall: f64) -> Result<()> {
        if !(recall > 0.0 && recall < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "recall must lie in (0, 1), got {recall}"
            )));
        }
        self.default_recall = recall;
        Ok(())
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn source(&self) -> &HashSource {
        &self.source
    }

    pub fn model(&self) -> &CollisionModel {
        &self.model
    }

    pub fn sketches(&self) -> &SketchSet {
        &self.sketches
    }

    pub fn repetitions(&self) -> &[Repetition] {
        &self.repetitions
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// Codes of `v` in every repetition.
    pub fn query_codes(&self, v: &[f32]) -> Vec<HashCode> {
        let out = self.source.evaluate(v);
        (0..self.repetitions.len())
            .map(|j| self.source.compose(j, &out))
            .collect()
    }

    pub fn open_cursor(&self, v: &[f32]) -> SearchCursor {
        SearchCursor::open(&self.repetitions, &self.query_codes(v), self.config.segment)
    }

    pub fn memory_bytes(&self) -> usize {
        self.dataset.memory_bytes()
            + self.sketches.memory_bytes()
            + self.model.memory_bytes()
            + self
                .repetitions
                .iter()
                .map(Repetition::memory_bytes)
                .sum::<usize>()
            + self.source.functions().len() * self.config.family.function_bytes(self.dataset.dim())
    }
}

pub(crate) fn build_repetitions(dataset: &Dataset, source: &HashSource) -> Vec<Repetition> {
    let l = source.repetitions();
    let n = dataset.len();
    let mut tuples = vec![0u64; n * l];
    tuples.par_chunks_mut(l).enumerate().for_each(|(i, row)| {
        let out = source.evaluate(dataset.float_row(i));
        for (j, t) in row.iter_mut().enumerate() {
            *t = pack(source.compose(j, &out), i);
        }
    });
    let code_bits = source.code_bits();
    (0..l)
        .into_par_iter()
        .map(|j| Repetition::from_tuples((0..n).map(|i| tuples[i * l + j]).collect(), code_bits))
        .collect()
}
