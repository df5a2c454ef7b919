//! Request streams: IRM sampling, a Markov-modulated generator, trace I/O and
//! Zipf fitting.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{ItemId, PopularityDist, RequestStream};

fn sampler(dist: &PopularityDist) -> WeightedIndex<f64> {
    WeightedIndex::new(dist.probs()).expect("popularity vectors are valid weights")
}

/// `count` independent draws from `dist`.
pub fn sample_irm(dist: &PopularityDist, count: usize, seed: u64) -> RequestStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = sampler(dist);
    RequestStream::from_items((0..count).map(|_| w.sample(&mut rng) as ItemId + 1).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationMode {
    /// Uniformly re-permute every item's rank.
    FullShuffle,
    /// Shuffle a prefix of the rank order of uniform length in `2..=n`.
    TopSwap,
}

/// Re-ranking process: before each request, with probability `shuffle_rate`,
/// the item-to-rank assignment changes per `mode`. Rank probabilities stay
/// fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    pub shuffle_rate: f64,
    pub mode: ModulationMode,
}

impl ModulationSpec {
    pub fn new(shuffle_rate: f64, mode: ModulationMode) -> Result<Self> {
        if !(shuffle_rate > 0.0 && shuffle_rate <= 1.0) {
            return Err(invalid(format!("shuffle rate must lie in (0, 1], got {shuffle_rate}")));
        }
        Ok(Self { shuffle_rate, mode })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedStream {
    pub stream: RequestStream,
    /// Number of re-ranking events.
    pub epochs: usize,
}

pub fn sample_modulated(dist: &PopularityDist, spec: ModulationSpec, count: usize, seed: u64) -> Result<ModulatedStream> {
    let spec = ModulationSpec::new(spec.shuffle_rate, spec.mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = sampler(dist);
    let n = dist.n();
    // `rank_to_item[r]` is the item currently holding rank `r + 1`.
    let mut rank_to_item: Vec<ItemId> = (1..=n as ItemId).collect();
    let mut epochs = 0;
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        if rng.random_bool(spec.shuffle_rate) {
            epochs += 1;
            match spec.mode {
                ModulationMode::FullShuffle => rank_to_item.shuffle(&mut rng),
                ModulationMode::TopSwap if n >= 2 => {
                    let len = rng.random_range(2..=n);
                    rank_to_item[..len].shuffle(&mut rng);
                }
                ModulationMode::TopSwap => {}
            }
        }
        items.push(rank_to_item[w.sample(&mut rng)]);
    }
    Ok(ModulatedStream {
        stream: RequestStream::from_items(items),
        epochs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    /// One opaque key per line.
    Lines,
    /// `timestamp,key` rows without a header.
    Csv,
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lines" => Ok(TraceFormat::Lines),
            "csv" => Ok(TraceFormat::Csv),
            other => Err(invalid(format!("unknown trace format {other:?}; expected lines or csv"))),
        }
    }
}

#[derive(Default)]
struct Densifier {
    ids: HashMap<String, ItemId>,
    keys: Vec<String>,
}

impl Densifier {
    fn id(&mut self, key: &str) -> ItemId {
        if let Some(&id) = self.ids.get(key) {
            return id;
        }
        self.keys.push(key.to_owned());
        let id = self.keys.len() as ItemId;
        self.ids.insert(key.to_owned(), id);
        id
    }
}

/// Reads a trace, mapping keys to ids `1, 2, ...` in order of first appearance.
pub fn read_trace(path: &Path, format: TraceFormat) -> Result<RequestStream> {
    let reader = BufReader::new(File::open(path)?);
    let mut dense = Densifier::default();
    let mut items = Vec::new();
    let mut timestamps = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        match format {
            TraceFormat::Lines => items.push(dense.id(line)),
            TraceFormat::Csv => {
                let parse = |msg: String| Error::Parse { line: i + 1, msg };
                let (ts, key) = line
                    .split_once(',')
                    .ok_or_else(|| parse(format!("expected `timestamp,key`, got {line:?}")))?;
                if key.contains(',') {
                    return Err(parse(format!("expected two fields, got {line:?}")));
                }
                let ts: i64 = ts
                    .trim()
                    .parse()
                    .map_err(|e| parse(format!("bad timestamp {ts:?}: {e}")))?;
                timestamps.push(ts);
                items.push(dense.id(key.trim()));
            }
        }
    }
    Ok(RequestStream {
        items,
        timestamps: (format == TraceFormat::Csv).then_some(timestamps),
        keys: Some(dense.keys),
    })
}

/// Writes `stream` in `format`. Missing keys fall back to the item id and
/// missing timestamps to the request index.
pub fn write_trace(stream: &RequestStream, path: &Path, format: TraceFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (t, &item) in stream.items.iter().enumerate() {
        let key = match &stream.keys {
            Some(keys) => keys[item as usize - 1].clone(),
            None => item.to_string(),
        };
        match format {
            TraceFormat::Lines => writeln!(w, "{key}")?,
            TraceFormat::Csv => {
                let ts = stream.timestamps.as_ref().map_or(t as i64 + 1, |v| v[t]);
                writeln!(w, "{ts},{key}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

const ALPHA_MAX: f64 = 5.0;
const FIT_TOL: f64 = 1e-4;

/// Maximum-likelihood Zipf exponent for the stream's rank-frequency data,
/// by golden-section search on `[0, 5]`.
pub fn fit_zipf(stream: &RequestStream) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty stream".into()));
    }
    let mut counts: HashMap<ItemId, u64> = HashMap::new();
    for &x in &stream.items {
        *counts.entry(x).or_default() += 1;
    }
    let mut freq: Vec<u64> = counts.into_values().collect();
    if freq.len() == 1 {
        log::warn!("degenerate Zipf fit: a single distinct item; returning alpha = {ALPHA_MAX}");
        return Ok(ALPHA_MAX);
    }
    freq.sort_unstable_by(|a, b| b.cmp(a));
    let total: f64 = freq.iter().sum::<u64>() as f64;
    let weighted_log_rank: f64 = freq.iter().enumerate().map(|(r, &f)| f as f64 * ((r + 1) as f64).ln()).sum();
    let n = freq.len();
    let log_lik = |a: f64| {
        let h: f64 = (1..=n).rev().map(|r| (r as f64).powf(-a)).sum();
        -a * weighted_log_rank - total * h.ln()
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, ALPHA_MAX);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (log_lik(x1), log_lik(x2));
    while hi - lo > FIT_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = log_lik(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = log_lik(x1);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical request frequencies over items `1..=n`.
pub fn empirical_frequencies(stream: &RequestStream, n: usize) -> Vec<f64> {
    let mut f = vec![0.0; n];
    for &x in &stream.items {
        if (x as usize) <= n {
            f[x as usize - 1] += 1.0;
        }
    }
    let total = stream.len().max(1) as f64;
    f.iter_mut().for_each(|v| *v /= total);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_zipf;

    #[test]
    fn irm_examples() {
        let point = PopularityDist::new(vec![1.0]).unwrap();
        assert_eq!(sample_irm(&point, 5, 3).items, vec![1; 5]);
        let z = make_zipf(4, 1.0).unwrap();
        let s = sample_irm(&z, 1_000_000, 7);
        let f = empirical_frequencies(&s, 4);
        assert!((f[0] - 0.48).abs() < 0.002, "{}", f[0]);
        assert_eq!(s, sample_irm(&z, 1_000_000, 7));
    }

    #[test]
    fn modulated_examples() {
        let z = make_zipf(4, 1.0).unwrap();
        let spec = ModulationSpec::new(1.0, ModulationMode::FullShuffle).unwrap();
        let s = sample_modulated(&z, spec, 1_000_000, 1).unwrap();
        for f in empirical_frequencies(&s.stream, 4) {
            assert!((f - 0.25).abs() < 0.005, "{f}");
        }
        let spec = ModulationSpec::new(0.01, ModulationMode::TopSwap).unwrap();
        let s = sample_modulated(&z, spec, 100_000, 2).unwrap();
        assert!((900..=1100).contains(&s.epochs), "{}", s.epochs);
        assert!(ModulationSpec::new(0.0, ModulationMode::TopSwap).is_err());
    }

    #[test]
    fn trace_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        std::fs::write(&p, "a\nb\na\n").unwrap();
        assert_eq!(read_trace(&p, TraceFormat::Lines).unwrap().items, vec![1, 2, 1]);
        std::fs::write(&p, "").unwrap();
        assert!(read_trace(&p, TraceFormat::Lines).unwrap().is_empty());
        std::fs::write(&p, "5,x\r\n6,y\r\n").unwrap();
        let s = read_trace(&p, TraceFormat::Csv).unwrap();
        assert_eq!(s.items, vec![1, 2]);
        assert_eq!(s.timestamps, Some(vec![5, 6]));
        std::fs::write(&p, "5,x\nseven,y\n").unwrap();
        assert!(matches!(read_trace(&p, TraceFormat::Csv), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            read_trace(&dir.path().join("missing"), TraceFormat::Lines),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn fit_examples() {
        let z = make_zipf(100, 0.8).unwrap();
        let a = fit_zipf(&sample_irm(&z, 1_000_000, 11)).unwrap();
        assert!((0.75..=0.85).contains(&a), "{a}");
        let u = make_zipf(100, 0.0).unwrap();
        let a = fit_zipf(&sample_irm(&u, 1_000_000, 12)).unwrap();
        assert!((0.0..=0.05).contains(&a), "{a}");
        assert_eq!(fit_zipf(&RequestStream::from_items(vec![1, 1, 1])).unwrap(), 5.0);
    }
}
