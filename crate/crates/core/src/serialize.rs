//! Index file format (`.lshidx`), little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "LSHKNNIX"
//! version      u32      1
//! rng          u32 len + UTF-8 name of the seeded generator
//! config       u64 budget, u8 family, u8 strategy, u32 K, u32 code bits,
//!              u32 L, u32 segment, u32 sketches, u64 pool bits
//! seed         u64
//! recall       f64 default query recall
//! dataset      u64 n, u32 d, n·d f32 (normalized rows)
//! table        u8 present; if 1: u32 max bits, u32 samples, (max bits+1)·41 f64
//! repetitions  L × (u64 n, n u64 tuples)
//! sketches     u64 word count, words u64
//! ```
//!
//! Hash functions and sketch directions are regenerated from the seed; the
//! 13-bit prefix tables are recomputed from the tuples.

use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::hash_source::{HashSource, Strategy};
use crate::hashers::HashFamily;
use crate::index::{Index, IndexConfig, Repetition};
use crate::probability::{CollisionModel, CollisionTable};
use crate::rng;
use crate::sketching::SketchSet;

pub const MAGIC: &[u8; 8] = b"LSHKNNIX";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "lshidx";

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f32s(&mut self, v: &[f32]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 4);
        v.iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        self.bytes(&buf)
    }
    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        v.iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        self.bytes(&buf)
    }
    fn u64s(&mut self, v: &[u64]) -> Result<()> {
        let mut buf = Vec::with_capacity(v.len() * 8);
        v.iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        self.bytes(&buf)
    }
}

struct In<'a>(&'a [u8]);

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, width: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.checked_mul(width).is_none_or(|b| b > self.0.len()) {
            return Err(Error::Truncated);
        }
        Ok(n)
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::Truncated)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Index {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut o = Out(w);
        o.bytes(MAGIC)?;
        o.u32(VERSION)?;
        o.u32(rng::RNG_ALGORITHM.len() as u32)?;
        o.bytes(rng::RNG_ALGORITHM.as_bytes())?;
        let c = &self.config;
        o.u64(c.memory_budget as u64)?;
        o.u8(c.family.tag())?;
        o.u8(c.strategy.tag())?;
        o.u32(c.functions_per_rep as u32)?;
        o.u32(c.code_bits)?;
        o.u32(c.repetitions as u32)?;
        o.u32(c.segment as u32)?;
        o.u32(c.sketches as u32)?;
        o.u64(c.pool_bits as u64)?;
        o.u64(self.seed)?;
        o.u64(self.default_recall.to_bits())?;
        o.u64(self.dataset.len() as u64)?;
        o.u32(self.dataset.dim() as u32)?;
        o.f32s(self.dataset.raw_floats())?;
        match self.model.table() {
            None => o.u8(0)?,
            Some(t) => {
                o.u8(1)?;
                o.u32(t.max_bits())?;
                o.u32(t.samples() as u32)?;
                o.f64s(t.raw())?;
            }
        }
        for rep in &self.repetitions {
            o.u64(rep.len() as u64)?;
            o.u64s(rep.entries())?;
        }
        o.u64(self.sketches.words().len() as u64)?;
        o.u64s(self.sketches.words())?;
        o.0.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to memory cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = In(bytes);
        let head = &bytes[..MAGIC.len().min(bytes.len())];
        if head != &MAGIC[..head.len()] {
            return Err(Error::Format("bad magic".into()));
        }
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "version {version}, expected {VERSION}"
            )));
        }
        let name_len = r.u32()? as usize;
        let name = r.take(name_len)?;
        if name != rng::RNG_ALGORITHM.as_bytes() {
            return Err(Error::Format(format!(
                "generated with {}, this build uses {}",
                String::from_utf8_lossy(name),
                rng::RNG_ALGORITHM
            )));
        }
        let memory_budget = r.u64()? as usize;
        let family = HashFamily::from_tag(r.u8()?)
            .ok_or_else(|| Error::Format("unknown hash family".into()))?;
        let strategy =
            Strategy::from_tag(r.u8()?).ok_or_else(|| Error::Format("unknown strategy".into()))?;
        let config = IndexConfig {
            memory_budget,
            family,
            strategy,
            functions_per_rep: r.u32()? as usize,
            code_bits: r.u32()?,
            repetitions: r.u32()? as usize,
            segment: r.u32()? as usize,
            sketches: r.u32()? as usize,
            pool_bits: r.u64()? as usize,
        };
        let seed = r.u64()?;
        let default_recall = f64::from_bits(r.u64()?);
        if !(default_recall > 0.0 && default_recall < 1.0) {
            return Err(Error::Format(format!(
                "default recall {default_recall} outside (0, 1)"
            )));
        }
        let n = r.u64()? as usize;
        let dim = r.u32()? as usize;
        let floats = r.f32s(n.checked_mul(dim).ok_or(Error::Truncated)?)?;
        let dataset = Dataset::from_unit_floats(dim, floats);
        let source = HashSource::new(config.source_config(), family, dim, seed)?;
        if source.code_bits() != config.code_bits {
            return Err(Error::Format(
                "code length does not match the hash source".into(),
            ));
        }
        let model = match r.u8()? {
            0 => CollisionModel::Hyperplane,
            1 => {
                let max_bits = r.u32()?;
                let samples = r.u32()? as usize;
                let cells = (max_bits as usize + 1) * crate::probability::GRID_POINTS;
                let table =
                    CollisionTable::from_raw(family, dim, max_bits, samples, r.f64s(cells)?)
                        .ok_or_else(|| Error::Format("collision table shape".into()))?;
                CollisionModel::Table {
                    table,
                    bits_per_hash: family.bits_per_hash(dim),
                }
            }
            t => return Err(Error::Format(format!("unknown table tag {t}"))),
        };
        let mut repetitions = Vec::with_capacity(config.repetitions);
        for _ in 0..config.repetitions {
            let len = r.len(8)?;
            repetitions.push(Repetition::from_tuples(r.u64s(len)?, config.code_bits));
        }
        let words_len = r.len(8)?;
        let words = r.u64s(words_len)?;
        if words_len != n * config.sketches {
            return Err(Error::Format("sketch count mismatch".into()));
        }
        let sketches = SketchSet::from_parts(dim, config.sketches, seed, words);
        Ok(Index {
            config,
            seed,
            dataset,
            source,
            model,
            sketches,
            repetitions,
            default_recall,
        })
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::IndexParams;

    fn small_index() -> Index {
        let rows: Vec<Vec<f32>> = (0..50)
            .map(|i| (0..8).map(|j| ((i * 8 + j) as f32 * 0.61).sin()).collect())
            .collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let mut index = Index::build(
            ds,
            &IndexParams::new(1 << 22).family(HashFamily::FhtCrossPolytope),
            5,
        )
        .unwrap();
        index.set_default_recall(0.75).unwrap();
        index
    }

    #[test]
    fn rejects_empty_and_bad_magic() {
        assert!(matches!(Index::from_bytes(&[]), Err(Error::Truncated)));
        let mut bytes = small_index().to_bytes();
        bytes[0] ^= 0xff;
        assert!(matches!(Index::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = small_index().to_bytes();
        bytes[8] = 2;
        assert!(matches!(Index::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_detected_everywhere() {
        let bytes = small_index().to_bytes();
        for cut in [4, 9, 20, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Index::from_bytes(&bytes[..cut]), Err(Error::Truncated)),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn round_trip_preserves_structure() {
        let index = small_index();
        let back = Index::from_bytes(&index.to_bytes()).unwrap();
        assert_eq!(back.config, index.config);
        assert_eq!(back.default_recall, index.default_recall);
        assert_eq!(back.repetitions, index.repetitions);
        assert_eq!(back.sketches, index.sketches);
        assert_eq!(back.model, index.model);
        assert_eq!(back.dataset.raw_floats(), index.dataset.raw_floats());
        assert_eq!(back.source.functions(), index.source.functions());
        assert_eq!(back.to_bytes(), index.to_bytes());
    }
}
