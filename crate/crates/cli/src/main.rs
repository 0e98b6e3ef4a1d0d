use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lshknn::harness::{gen_synthetic, ground_truth, recall, SyntheticSpec, DEFAULT_K};
use lshknn::io::{read_ivecs, read_vectors, write_ivecs, write_vectors, VectorFormat};
use lshknn::{search, Dataset, HashFamily, Index, IndexParams, SearchOptions, Strategy};

const BENCH_RECALLS: [f64; 6] = [0.1, 0.2, 0.5, 0.7, 0.9, 0.95];

#[derive(Parser)]
#[command(
    name = "lshknn",
    version,
    about = "LSH-forest k-NN index with a target-recall query"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a vector file.
    Build(BuildArgs),
    /// Answer queries against a saved index and write a per-query CSV report.
    Query(QueryArgs),
    /// Build once, then sweep target recalls and report recall and QPS.
    Bench(BenchArgs),
    /// Write the synthetic instance whose planted point is every query's nearest neighbor.
    GenSynthetic(GenArgs),
    /// Exact k nearest neighbors of every query, as ivecs.
    Truth(TruthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Fvecs,
    Text,
}

impl From<Format> for VectorFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Fvecs => VectorFormat::Fvecs,
            Format::Text => VectorFormat::Text,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Hp,
    Cp,
    FhtCp,
}

impl From<Family> for HashFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Hp => HashFamily::Hyperplane,
            Family::Cp => HashFamily::CrossPolytope,
            Family::FhtCp => HashFamily::FhtCrossPolytope,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Independent,
    Pool,
    Tensor,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Independent => Strategy::Independent,
            StrategyArg::Pool => Strategy::Pool,
            StrategyArg::Tensor => Strategy::Tensor,
        }
    }
}

#[derive(Args)]
struct IndexShape {
    /// Memory budget in bytes; K, M, G (powers of 1024) suffixes accepted.
    #[arg(long, value_parser = parse_bytes)]
    space: usize,
    #[arg(long, value_enum, default_value = "hp")]
    family: Family,
    #[arg(long, value_enum, default_value = "pool")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl IndexShape {
    fn params(&self) -> IndexParams {
        IndexParams::new(self.space)
            .family(self.family.into())
            .strategy(self.strategy.into())
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "fvecs")]
    format: Format,
    #[command(flatten)]
    shape: IndexShape,
    /// Default target recall stored with the index.
    #[arg(long, default_value_t = lshknn::index::DEFAULT_RECALL)]
    recall: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "fvecs")]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Target recall; defaults to the one stored at build time.
    #[arg(long)]
    recall: Option<f64>,
    /// Exact neighbors (ivecs) for the recall column.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Disable sketch filtering.
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "fvecs")]
    format: Format,
    #[command(flatten)]
    shape: IndexShape,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = BENCH_RECALLS)]
    recalls: Vec<f64>,
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Total number of points, the planted one included.
    #[arg(long)]
    n: usize,
    /// Block dimension; vectors have 3·d coordinates.
    #[arg(long)]
    d: usize,
    /// Number of queries.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "fvecs")]
    format: Format,
    /// Writes PREFIX.data.<ext> and PREFIX.queries.<ext>.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct TruthArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "fvecs")]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_bytes(s: &str) -> std::result::Result<usize, String> {
    let t = s.trim();
    let t = t
        .strip_suffix("iB")
        .or_else(|| t.strip_suffix('B'))
        .unwrap_or(t);
    let (digits, shift) = match t.chars().last() {
        Some('K' | 'k') => (&t[..t.len() - 1], 10),
        Some('M' | 'm') => (&t[..t.len() - 1], 20),
        Some('G' | 'g') => (&t[..t.len() - 1], 30),
        _ => (t, 0),
    };
    let v: usize = digits
        .trim()
        .parse()
        .map_err(|_| format!("not a byte count: {s}"))?;
    v.checked_mul(1 << shift)
        .ok_or_else(|| format!("byte count overflows: {s}"))
}

fn load_vectors(path: &Path, format: Format) -> Result<Vec<Vec<f32>>> {
    read_vectors(path, format.into()).with_context(|| format!("reading {}", path.display()))
}

fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let rows = load_vectors(path, format)?;
    if rows.is_empty() {
        bail!("{} contains no vectors", path.display());
    }
    Dataset::from_rows(&rows).with_context(|| format!("loading {}", path.display()))
}

fn build(args: BuildArgs) -> Result<()> {
    let dataset = load_dataset(&args.input, args.format)?;
    let (n, d) = (dataset.len(), dataset.dim());
    let started = Instant::now();
    let mut index = Index::build(dataset, &args.shape.params(), args.shape.seed)?;
    index.set_default_recall(args.recall)?;
    let c = index.config();
    println!(
        "built {n} points, d={d}: {} {}, L={}, K={} ({} bits), {} bytes in {:.2}s",
        c.family.name(),
        c.strategy.name(),
        c.repetitions,
        c.functions_per_rep,
        c.code_bits,
        index.memory_bytes(),
        started.elapsed().as_secs_f64()
    );
    index
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn load_truth(path: &Path, queries: usize, k: usize) -> Result<Vec<Vec<u32>>> {
    let rows = read_ivecs(path).with_context(|| format!("reading {}", path.display()))?;
    if rows.len() != queries {
        bail!(
            "{} has {} rows for {queries} queries",
            path.display(),
            rows.len()
        );
    }
    rows.into_iter()
        .map(|r| {
            if r.len() < k {
                bail!("truth rows hold {} neighbors, k is {k}", r.len());
            }
            Ok(r.into_iter().map(|i| i as u32).collect())
        })
        .collect()
}

fn query(args: QueryArgs) -> Result<()> {
    let index =
        Index::load(&args.index).with_context(|| format!("loading {}", args.index.display()))?;
    let queries = load_vectors(&args.queries, args.format)?;
    let truth = args
        .truth
        .as_deref()
        .map(|p| load_truth(p, queries.len(), args.k))
        .transpose()?;
    let target = args.recall.unwrap_or(index.default_recall());
    let opts = SearchOptions::with_recall(args.k, target).filter(!args.no_filter);

    let mut report = String::new();
    report.push_str(if truth.is_some() {
        "query,recall,"
    } else {
        "query,"
    });
    report.push_str("depth,reps_at_depth,candidates,distance_computations\n");
    let mut total_recall = 0.0;
    let mut elapsed = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let started = Instant::now();
        let res = search(&index, q, &opts).with_context(|| format!("query {i}"))?;
        elapsed += started.elapsed().as_secs_f64();
        let _ = write!(report, "{i},");
        if let Some(t) = &truth {
            let r = recall(&res.indices(), &t[i], args.k);
            total_recall += r;
            let _ = write!(report, "{r:.4},");
        }
        let d = &res.diagnostics;
        let _ = writeln!(
            report,
            "{},{},{},{}",
            d.depth, d.repetitions_at_depth, d.candidates, d.distance_computations
        );
    }
    let mean = (!queries.is_empty()).then(|| total_recall / queries.len() as f64);
    if let (Some(mean), true) = (mean, truth.is_some()) {
        let _ = writeln!(report, "# mean_recall {mean:.6}");
    }
    std::fs::write(&args.report, report)
        .with_context(|| format!("writing {}", args.report.display()))?;

    println!("queries: {}", queries.len());
    println!("target recall: {target}");
    if let (Some(mean), true) = (mean, truth.is_some()) {
        println!("mean recall: {mean:.4}");
    }
    println!("qps: {:.1}", queries.len() as f64 / elapsed.max(1e-9));
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let dataset = load_dataset(&args.input, args.format)?;
    let queries = load_vectors(&args.queries, args.format)?;
    if queries.is_empty() {
        bail!("{} contains no queries", args.queries.display());
    }
    let truth = ground_truth(&dataset, &queries, args.k)?;
    let started = Instant::now();
    let index = Index::build(dataset, &args.shape.params(), args.shape.seed)?;
    let c = index.config();
    println!(
        "# {} {}, L={}, K={}, {} bytes, built in {:.2}s",
        c.family.name(),
        c.strategy.name(),
        c.repetitions,
        c.functions_per_rep,
        index.memory_bytes(),
        started.elapsed().as_secs_f64()
    );
    println!("target,recall,qps,distance_computations");
    for &target in &args.recalls {
        let opts = SearchOptions::with_recall(args.k, target).filter(!args.no_filter);
        let mut total = 0.0;
        let mut computations = 0;
        let started = Instant::now();
        for (q, t) in queries.iter().zip(&truth) {
            let res = search(&index, q, &opts)?;
            total += recall(&res.indices(), &t.indices, args.k);
            computations += res.diagnostics.distance_computations;
        }
        let secs = started.elapsed().as_secs_f64();
        let m = queries.len() as f64;
        println!(
            "{target},{:.4},{:.1},{:.1}",
            total / m,
            m / secs.max(1e-9),
            computations as f64 / m
        );
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    if args.n < 2 || args.d == 0 {
        bail!("need n >= 2 and d >= 1");
    }
    let s = gen_synthetic(&SyntheticSpec {
        n: args.n,
        queries: args.m,
        block_dim: args.d,
        seed: args.seed,
    });
    let ext = match args.format {
        Format::Fvecs => "fvecs",
        Format::Text => "txt",
    };
    let data = PathBuf::from(format!("{}.data.{ext}", args.out));
    let queries = PathBuf::from(format!("{}.queries.{ext}", args.out));
    write_vectors(&data, args.format.into(), &s.points)
        .with_context(|| format!("writing {}", data.display()))?;
    write_vectors(&queries, args.format.into(), &s.queries)
        .with_context(|| format!("writing {}", queries.display()))?;
    println!(
        "wrote {} and {}; planted point is {}",
        data.display(),
        queries.display(),
        s.planted()
    );
    Ok(())
}

fn truth(args: TruthArgs) -> Result<()> {
    let dataset = load_dataset(&args.input, args.format)?;
    let queries = load_vectors(&args.queries, args.format)?;
    if args.k > dataset.len() {
        bail!("k = {} exceeds the {} points", args.k, dataset.len());
    }
    let rows = ground_truth(&dataset, &queries, args.k)?;
    let ivecs: Vec<Vec<i32>> = rows
        .iter()
        .map(|r| r.indices.iter().map(|&i| i as i32).collect())
        .collect();
    write_ivecs(&args.out, &ivecs).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Bench(a) => bench(a),
        Command::GenSynthetic(a) => gen(a),
        Command::Truth(a) => truth(a),
    }
}

#[cfg(test)]
mod tests {
    use super::parse_bytes;

    #[test]
    fn byte_counts() {
        assert_eq!(parse_bytes("1048576"), Ok(1 << 20));
        assert_eq!(parse_bytes("64M"), Ok(64 << 20));
        assert_eq!(parse_bytes("2GiB"), Ok(2 << 30));
        assert_eq!(parse_bytes("512KB"), Ok(512 << 10));
        assert!(parse_bytes("lots").is_err());
    }
}
