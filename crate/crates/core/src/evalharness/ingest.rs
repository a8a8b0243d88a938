//! Rating-triplet ingestion: chronological binning and per-bin train/test split.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::designs::{Design, DesignFamily, Observation, Panel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub bins: usize,
    pub split: f64,
    pub seed: u64,
    /// Drop rows (users) with fewer ratings than this before binning.
    #[serde(default)]
    pub min_row_count: usize,
    /// Drop columns (items) with fewer ratings than this before binning.
    #[serde(default)]
    pub min_col_count: usize,
}

impl IngestOptions {
    pub fn new(bins: usize, split: f64, seed: u64) -> Self {
        Self {
            bins,
            split,
            seed,
            min_row_count: 0,
            min_col_count: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub train: Panel,
    pub test: Panel,
    /// Original row id of each dense row index.
    pub row_ids: Vec<String>,
    /// Original column id of each dense column index.
    pub col_ids: Vec<String>,
}

#[derive(Debug, Clone)]
struct Rating {
    stamp: String,
    row: String,
    col: String,
    value: f64,
}

fn compare_stamps(a: &str, b: &str, numeric: bool) -> Ordering {
    if numeric {
        let (x, y): (f64, f64) = (a.trim().parse().unwrap_or(0.0), b.trim().parse().unwrap_or(0.0));
        x.total_cmp(&y)
    } else {
        a.cmp(b)
    }
}

fn read_ratings<R: Read>(r: R) -> Result<Vec<Rating>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    let want = ["timestamp", "row", "col", "value"];
    if header.len() != 4 || header.iter().zip(want).any(|(h, w)| h != w) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header timestamp,row,col,value, got {}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let value: f64 = rec[3].parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad value {:?}: {e}", &rec[3]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        out.push(Rating {
            stamp: rec[0].to_string(),
            row: rec[1].to_string(),
            col: rec[2].to_string(),
            value,
        });
    }
    Ok(out)
}

fn apply_count_filters(mut ratings: Vec<Rating>, opts: &IngestOptions) -> Vec<Rating> {
    if opts.min_row_count > 0 {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        ratings.iter().for_each(|r| *counts.entry(r.row.as_str()).or_default() += 1);
        let keep: Vec<bool> = ratings.iter().map(|r| counts[r.row.as_str()] >= opts.min_row_count).collect();
        let mut k = keep.into_iter();
        ratings.retain(|_| k.next().unwrap_or(false));
    }
    if opts.min_col_count > 0 {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        ratings.iter().for_each(|r| *counts.entry(r.col.as_str()).or_default() += 1);
        let keep: Vec<bool> = ratings.iter().map(|r| counts[r.col.as_str()] >= opts.min_col_count).collect();
        let mut k = keep.into_iter();
        ratings.retain(|_| k.next().unwrap_or(false));
    }
    ratings
}

/// Bin sizes for `rows` items in `bins` equal-count bins, remainder to the earliest.
pub fn bin_sizes(rows: usize, bins: usize) -> Vec<usize> {
    (0..bins).map(|k| rows / bins + usize::from(k < rows % bins)).collect()
}

pub fn ingest_triplets_from<R: Read>(r: R, opts: &IngestOptions) -> Result<Ingested> {
    if opts.bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if !(0.0..=1.0).contains(&opts.split) {
        return Err(Error::InvalidArgument(format!("split must lie in [0, 1], got {}", opts.split)));
    }
    let mut ratings = apply_count_filters(read_ratings(r)?, opts);
    if ratings.len() < opts.bins {
        return Err(Error::EmptyBin {
            bin: ratings.len() + 1,
            rows: ratings.len(),
            bins: opts.bins,
        });
    }
    let numeric = ratings.iter().all(|r| r.stamp.trim().parse::<f64>().is_ok());
    ratings.sort_by(|a, b| compare_stamps(&a.stamp, &b.stamp, numeric));

    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let (mut row_ids, mut col_ids) = (Vec::new(), Vec::new());
    let mut cells = Vec::with_capacity(ratings.len());
    for r in &ratings {
        let ri = *row_index.entry(r.row.clone()).or_insert_with(|| {
            row_ids.push(r.row.clone());
            row_ids.len() - 1
        });
        let ci = *col_index.entry(r.col.clone()).or_insert_with(|| {
            col_ids.push(r.col.clone());
            col_ids.len() - 1
        });
        cells.push(Observation {
            design: Design::EntryIndex { row: ri, col: ci },
            y: r.value,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut train, mut test) = (Vec::with_capacity(opts.bins), Vec::with_capacity(opts.bins));
    let mut rest = cells.as_slice();
    for size in bin_sizes(cells.len(), opts.bins) {
        let (bin, tail) = rest.split_at(size);
        rest = tail;
        let mut order: Vec<usize> = (0..bin.len()).collect();
        order.shuffle(&mut rng);
        let n_train = (opts.split * bin.len() as f64).ceil() as usize;
        let mut tr_idx = order[..n_train].to_vec();
        let mut te_idx = order[n_train..].to_vec();
        tr_idx.sort_unstable();
        te_idx.sort_unstable();
        train.push(tr_idx.iter().map(|&i| bin[i].clone()).collect());
        test.push(te_idx.iter().map(|&i| bin[i].clone()).collect());
    }
    let family = DesignFamily::completion(row_ids.len(), col_ids.len());
    Ok(Ingested {
        train: Panel::new(family, train)?,
        test: Panel::new(family, test)?,
        row_ids,
        col_ids,
    })
}

pub fn ingest_triplets(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<Ingested> {
    ingest_triplets_from(File::open(path)?, opts)
}

/// Writes `index,id` rows for an id remapping table.
pub fn write_id_table<W: Write>(w: W, ids: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "id"])?;
    for (i, id) in ids.iter().enumerate() {
        out.write_record([i.to_string(), id.clone()])?;
    }
    out.flush()?;
    Ok(())
}
