//! CSV rows, ordered sinks, sidecars and the bundled analyzer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::stats::{median, sign_test, slope, SignTest};

/// Version tag of every CSV and JSON document written by the harness.
pub const SCHEMA: &str = "netsac-results-v1";

/// Column order of the result CSVs.
pub const RESULT_COLUMNS: [&str; 9] = [
    "run_id", "env", "kappa", "seed", "m", "eval_J", "eval_se", "gap", "wall_ms",
];

/// One evaluated policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub env: String,
    pub kappa: Option<usize>,
    pub seed: u64,
    pub m: Option<usize>,
    #[serde(rename = "eval_J")]
    pub eval_j: f64,
    pub eval_se: f64,
    pub gap: Option<f64>,
    pub wall_ms: Option<u64>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.run_id.clone(),
            self.env.clone(),
            opt(self.kappa),
            self.seed.to_string(),
            opt(self.m),
            self.eval_j.to_string(),
            self.eval_se.to_string(),
            opt(self.gap),
            opt(self.wall_ms),
        ]
    }
}

/// Short content hash of the configuration echo.
pub fn run_id(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Single-writer CSV sink that emits work items in submission-index order.
///
/// Items may arrive out of order from parallel workers; each contiguous
/// prefix is written and flushed as soon as it is complete, so a crash
/// leaves a valid file holding the finished prefix.
pub struct OrderedSink {
    writer: csv::Writer<File>,
    next: usize,
    pending: BTreeMap<usize, Vec<Vec<String>>>,
}

impl OrderedSink {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(OrderedSink {
            writer,
            next: 0,
            pending: BTreeMap::new(),
        })
    }

    pub fn submit(&mut self, index: usize, rows: Vec<Vec<String>>) -> Result<()> {
        self.pending.insert(index, rows);
        while let Some(rows) = self.pending.remove(&self.next) {
            for row in rows {
                self.writer.write_record(&row)?;
            }
            self.next += 1;
        }
        self.writer
            .flush()
            .map_err(|e| Error::Csv(csv::Error::from(e)))
    }
}

/// Writes pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes serialisable rows with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(Error::Config(format!("{} does not have the result columns", path.display())));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// The row with the largest `m` for every `(kappa, seed)`.
pub fn final_rows(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut best: BTreeMap<(Option<usize>, u64), &ResultRow> = BTreeMap::new();
    for r in rows {
        let slot = best.entry((r.kappa, r.seed)).or_insert(r);
        if r.m > slot.m {
            *slot = r;
        }
    }
    best.into_values().cloned().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaSummary {
    pub kappa: usize,
    pub seeds: usize,
    pub median_j: f64,
    pub median_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedComparison {
    pub better: String,
    pub worse: String,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl PairedComparison {
    pub fn new(better: impl Into<String>, worse: impl Into<String>, t: SignTest) -> Self {
        PairedComparison {
            better: better.into(),
            worse: worse.into(),
            wins: t.wins,
            losses: t.losses,
            ties: t.ties,
            p_value: t.p_value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAnalysis {
    pub kappas: Vec<KappaSummary>,
    /// Least-squares slope of `log(median gap)` on `κ` over kappas with a positive median gap.
    pub log_gap_slope: Option<f64>,
    /// Sign tests of final `J` between consecutive kappas, paired by seed.
    pub comparisons: Vec<PairedComparison>,
}

/// Summarises final rows of a κ-sweep.
pub fn analyze(rows: &[ResultRow]) -> SweepAnalysis {
    let finals = final_rows(rows);
    let kappas: BTreeSet<usize> = finals.iter().filter_map(|r| r.kappa).collect();
    let by_kappa = |k: usize| -> BTreeMap<u64, &ResultRow> {
        finals.iter().filter(|r| r.kappa == Some(k)).map(|r| (r.seed, r)).collect()
    };
    let mut summaries = Vec::new();
    for &k in &kappas {
        let cells = by_kappa(k);
        let js: Vec<f64> = cells.values().map(|r| r.eval_j).collect();
        let gaps: Vec<f64> = cells.values().filter_map(|r| r.gap).collect();
        summaries.push(KappaSummary {
            kappa: k,
            seeds: cells.len(),
            median_j: median(&js).unwrap_or(f64::NAN),
            median_gap: if gaps.len() == cells.len() { median(&gaps) } else { None },
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = summaries
        .iter()
        .filter_map(|s| s.median_gap.filter(|g| *g > 0.0).map(|g| (s.kappa as f64, g.ln())))
        .unzip();
    let mut comparisons = Vec::new();
    let ks: Vec<usize> = kappas.iter().copied().collect();
    for pair in ks.windows(2) {
        let (lo, hi) = (by_kappa(pair[0]), by_kappa(pair[1]));
        let (a, b): (Vec<f64>, Vec<f64>) = hi
            .iter()
            .filter_map(|(seed, r)| lo.get(seed).map(|l| (r.eval_j, l.eval_j)))
            .unzip();
        comparisons.push(PairedComparison::new(
            format!("kappa={}", pair[1]),
            format!("kappa={}", pair[0]),
            sign_test(&a, &b),
        ));
    }
    SweepAnalysis {
        kappas: summaries,
        log_gap_slope: slope(&xs, &ys),
        comparisons,
    }
}

/// Appends a line to a text file, creating it if needed.
pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}
