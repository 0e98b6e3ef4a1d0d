//! Parameterless LSH forest for k-nearest-neighbor search on the unit sphere.
//!
//! The index is configured by a memory budget; a query is configured by `k`
//! and a target recall. The query stops as soon as the collision probability
//! of its current k-th candidate proves that each true neighbor would have
//! been found with probability at least the target recall.
//!
//! ```
//! use lshknn::{Dataset, Index, IndexParams, SearchOptions};
//!
//! let rows: Vec<Vec<f32>> = (0..200)
//!     .map(|i| (0..16).map(|j| ((i * 16 + j) as f32).sin()).collect())
//!     .collect();
//! let dataset = Dataset::from_rows(&rows).unwrap();
//! let index = Index::build(dataset, &IndexParams::new(16 << 20), 7).unwrap();
//! let result = lshknn::search(&index, &rows[3], &SearchOptions::with_recall(5, 0.9)).unwrap();
//! assert_eq!(result.neighbors[0].index, 3);
//! ```

pub mod dataset;
pub mod error;
pub mod harness;
pub mod hash_source;
pub mod hashers;
pub mod index;
pub mod io;
pub mod probability;
pub mod query;
pub mod rng;
pub mod serialize;
pub mod sketching;

pub use dataset::{Dataset, Query};
pub use error::{Error, Result};
pub use hash_source::{HashSource, SourceConfig, Strategy};
pub use hashers::{HashCode, HashFamily, HashFunction};
pub use index::{derive_parameters, Index, IndexConfig, IndexParams, Repetition, SearchCursor};
pub use probability::{CollisionModel, CollisionTable};
pub use query::{
    search, search_recall, Accumulator, Diagnostics, Neighbor, QueryResult, SearchOptions,
};
pub use sketching::SketchSet;
