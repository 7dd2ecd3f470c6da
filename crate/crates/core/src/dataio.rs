//! Datasets of `(embedding, confidence, outcome)` triples: validation,
//! on-disk formats, seeded splits and the training neighbour bank.
//!
//! Three file formats are supported:
//!
//! * CSV with header `f,y,x0,...,x{d-1}[,delta_true][,group]`
//! * JSONL, one object per line with keys `f`, `y`, `x` and optional
//!   `delta_true`, `group`
//! * a binary columnar layout: magic `CFLD1`, `u64` n, `u64` d, a flags
//!   byte, then little-endian arrays (embeddings row-major, confidences,
//!   outcomes, optional true field, optional group ids as `i64`).
//!
//! Group names, when present, live in a JSON sidecar `<file>.groups.json`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

const MAGIC: &[u8; 5] = b"CFLD1";
const FLAG_TRUE_FIELD: u8 = 0b01;
const FLAG_GROUPS: u8 = 0b10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
    #[serde(alias = "binary")]
    Bin,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
            Format::Bin => "bin",
        }
    }

    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            "bin" | "cfld" => Some(Format::Bin),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            "bin" | "binary" => Ok(Format::Bin),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// Aligned triples plus optional ground truth and group labels.
///
/// Residuals `y - f` are derived on demand and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    embeddings: Array2<f64>,
    confidences: Array1<f64>,
    outcomes: Array1<f64>,
    true_field: Option<Array1<f64>>,
    group_labels: Option<Vec<i64>>,
    group_names: BTreeMap<i64, String>,
}

impl Dataset {
    pub fn new(
        embeddings: Array2<f64>,
        confidences: Array1<f64>,
        outcomes: Array1<f64>,
        true_field: Option<Array1<f64>>,
        group_labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = embeddings.nrows();
        if n == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if embeddings.ncols() == 0 {
            return Err(Error::Data("embedding dimension is zero".into()));
        }
        if confidences.len() != n || outcomes.len() != n {
            return Err(Error::Shape(format!(
                "{n} embeddings but {} confidences and {} outcomes",
                confidences.len(),
                outcomes.len()
            )));
        }
        if let Some(t) = &true_field {
            if t.len() != n {
                return Err(Error::Shape(format!("true field has {} rows, expected {n}", t.len())));
            }
        }
        if let Some(g) = &group_labels {
            if g.len() != n {
                return Err(Error::Shape(format!("group labels have {} rows, expected {n}", g.len())));
            }
        }
        for (i, row) in embeddings.outer_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Row {
                    row: i + 1,
                    msg: "non-finite embedding value".into(),
                });
            }
        }
        for (i, &f) in confidences.iter().enumerate() {
            check_confidence(f).map_err(|msg| Error::Row { row: i + 1, msg })?;
        }
        for (i, &y) in outcomes.iter().enumerate() {
            check_outcome(y).map_err(|msg| Error::Row { row: i + 1, msg })?;
        }
        Ok(Self {
            embeddings,
            confidences,
            outcomes,
            true_field,
            group_labels,
            group_names: BTreeMap::new(),
        })
    }

    pub fn with_group_names(mut self, names: BTreeMap<i64, String>) -> Self {
        self.group_names = names;
        self
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn embeddings(&self) -> &Array2<f64> {
        &self.embeddings
    }

    pub fn confidences(&self) -> &Array1<f64> {
        &self.confidences
    }

    pub fn outcomes(&self) -> &Array1<f64> {
        &self.outcomes
    }

    pub fn true_field(&self) -> Option<&Array1<f64>> {
        self.true_field.as_ref()
    }

    pub fn group_labels(&self) -> Option<&[i64]> {
        self.group_labels.as_deref()
    }

    pub fn group_names(&self) -> &BTreeMap<i64, String> {
        &self.group_names
    }

    /// `y - f` for every row.
    pub fn residuals(&self) -> Array1<f64> {
        &self.outcomes - &self.confidences
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            embeddings: self.embeddings.select(Axis(0), indices),
            confidences: self.confidences.select(Axis(0), indices),
            outcomes: self.outcomes.select(Axis(0), indices),
            true_field: self.true_field.as_ref().map(|t| t.select(Axis(0), indices)),
            group_labels: self
                .group_labels
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
            group_names: self.group_names.clone(),
        }
    }

    /// Same inputs and confidences with replaced outcomes.
    pub fn with_outcomes(&self, outcomes: Array1<f64>) -> Result<Dataset> {
        if outcomes.len() != self.len() {
            return Err(Error::Shape("outcome vector length differs".into()));
        }
        for (i, &y) in outcomes.iter().enumerate() {
            check_outcome(y).map_err(|msg| Error::Row { row: i + 1, msg })?;
        }
        let mut out = self.clone();
        out.outcomes = outcomes;
        Ok(out)
    }

    /// Same rows with the embeddings replaced (e.g. by a learned representation).
    pub fn with_embeddings(&self, embeddings: Array2<f64>) -> Result<Dataset> {
        if embeddings.nrows() != self.len() {
            return Err(Error::Shape("embedding row count differs".into()));
        }
        let mut out = self.clone();
        out.embeddings = embeddings;
        Ok(out)
    }

    /// Concatenate rows of several datasets with equal dimension.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.dim() != first.dim()) {
            return Err(Error::Shape("datasets differ in dimension".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.embeddings.view()).collect();
        let embeddings = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let cat1 = |get: &dyn Fn(&Dataset) -> ArrayView1<f64>| -> Array1<f64> {
            parts.iter().flat_map(|p| get(p).to_vec()).collect()
        };
        let confidences = cat1(&|p| p.confidences.view());
        let outcomes = cat1(&|p| p.outcomes.view());
        let true_field = if parts.iter().all(|p| p.true_field.is_some()) {
            Some(cat1(&|p| p.true_field.as_ref().unwrap().view()))
        } else {
            None
        };
        let group_labels = if parts.iter().all(|p| p.group_labels.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|p| p.group_labels.clone().unwrap())
                    .collect(),
            )
        } else {
            None
        };
        Ok(Dataset::new(embeddings, confidences, outcomes, true_field, group_labels)?
            .with_group_names(first.group_names.clone()))
    }
}

fn check_confidence(f: f64) -> std::result::Result<(), String> {
    if !(0.0..=1.0).contains(&f) {
        return Err(format!("confidence {f} outside [0,1]"));
    }
    Ok(())
}

fn check_outcome(y: f64) -> std::result::Result<(), String> {
    if y != 0.0 && y != 1.0 {
        return Err(format!("outcome {y} is not 0 or 1"));
    }
    Ok(())
}

/// Fractions for a train/validation/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(format!("split fractions must be positive, got {fr:?}")));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Index sets of a three-way split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Partition> {
    spec.validate()?;
    if n < 10 {
        return Err(Error::Data(format!("need at least 10 rows to split, got {n}")));
    }
    let n_val = (n as f64 * spec.val_frac).floor() as usize;
    let n_test = (n as f64 * spec.test_frac).floor() as usize;
    let n_train = n - n_val - n_test;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(spec.seed, Purpose::Split));
    let test = perm.split_off(n_train + n_val);
    let val = perm.split_off(n_train);
    Ok(Partition {
        train: perm,
        val,
        test,
    })
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    let p = split_indices(ds.len(), spec)?;
    Ok(Splits {
        train: ds.subset(&p.train),
        val: ds.subset(&p.val),
        test: ds.subset(&p.test),
    })
}

/// Subsample of the training split that serves as kernel support at
/// validation and test time.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourBank {
    pub embeddings: Array2<f64>,
    pub residuals: Array1<f64>,
    pub source_indices: Vec<usize>,
    pub cap: usize,
}

impl NeighbourBank {
    pub fn len(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }
}

pub const DEFAULT_BANK_CAP: usize = 20_000;

pub fn sample_bank(train: &Dataset, cap: usize, seed: u64) -> Result<NeighbourBank> {
    if cap == 0 {
        return Err(Error::Config("bank cap must be at least 1".into()));
    }
    let n = train.len();
    let source_indices: Vec<usize> = if n <= cap {
        (0..n).collect()
    } else {
        let mut idx = rand::seq::index::sample(&mut rng::stream(seed, Purpose::Bank), n, cap).into_vec();
        idx.sort_unstable();
        idx
    };
    let sub = train.subset(&source_indices);
    Ok(NeighbourBank {
        residuals: sub.residuals(),
        embeddings: sub.embeddings,
        source_indices,
        cap,
    })
}

// ---------------------------------------------------------------------------
// file formats

pub fn load_triples(path: &Path, format: Format) -> Result<Dataset> {
    let ds = match format {
        Format::Csv => read_csv(path)?,
        Format::Jsonl => read_jsonl(path)?,
        Format::Bin => read_bin(path)?,
    };
    let names_path = group_sidecar(path);
    if names_path.exists() {
        let text = std::fs::read_to_string(&names_path).map_err(|e| Error::io(&names_path, e))?;
        let names: BTreeMap<i64, String> = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", names_path.display())))?;
        return Ok(ds.with_group_names(names));
    }
    Ok(ds)
}

pub fn save_triples(ds: &Dataset, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(ds, path)?,
        Format::Jsonl => write_jsonl(ds, path)?,
        Format::Bin => write_bin(ds, path)?,
    }
    if !ds.group_names.is_empty() {
        let names_path = group_sidecar(path);
        let text = serde_json::to_string_pretty(&ds.group_names).expect("group names serialize");
        std::fs::write(&names_path, text).map_err(|e| Error::io(&names_path, e))?;
    }
    Ok(())
}

fn group_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".groups.json");
    PathBuf::from(s)
}

/// Accumulates rows while enforcing a consistent embedding dimension.
#[derive(Default)]
struct RowSink {
    dim: Option<usize>,
    x: Vec<f64>,
    f: Vec<f64>,
    y: Vec<f64>,
    delta: Vec<f64>,
    group: Vec<i64>,
    has_delta: Option<bool>,
    has_group: Option<bool>,
}

impl RowSink {
    fn push(
        &mut self,
        row: usize,
        x: &[f64],
        f: f64,
        y: f64,
        delta: Option<f64>,
        group: Option<i64>,
    ) -> Result<()> {
        let err = |msg: String| Error::Row { row, msg };
        match self.dim {
            None if x.is_empty() => return Err(err("empty embedding".into())),
            None => self.dim = Some(x.len()),
            Some(d) if d != x.len() => {
                return Err(err(format!("embedding has {} values, expected {d}", x.len())))
            }
            _ => {}
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite embedding value".into()));
        }
        check_confidence(f).map_err(err)?;
        check_outcome(y).map_err(err)?;
        for (seen, present, name) in [
            (&mut self.has_delta, delta.is_some(), "delta_true"),
            (&mut self.has_group, group.is_some(), "group"),
        ] {
            match *seen {
                None => *seen = Some(present),
                Some(s) if s != present => {
                    return Err(err(format!("'{name}' present on some rows only")))
                }
                _ => {}
            }
        }
        self.x.extend_from_slice(x);
        self.f.push(f);
        self.y.push(y);
        if let Some(d) = delta {
            self.delta.push(d);
        }
        if let Some(g) = group {
            self.group.push(g);
        }
        Ok(())
    }

    fn finish(self) -> Result<Dataset> {
        let n = self.f.len();
        let d = self.dim.ok_or_else(|| Error::Data("file contains no rows".into()))?;
        let x = Array2::from_shape_vec((n, d), self.x).map_err(|e| Error::Shape(e.to_string()))?;
        let delta = (self.has_delta == Some(true)).then(|| Array1::from(self.delta));
        let group = (self.has_group == Some(true)).then_some(self.group);
        Dataset::new(x, Array1::from(self.f), Array1::from(self.y), delta, group)
    }
}

fn parse_outcome(s: &str) -> std::result::Result<f64, String> {
    match s.trim() {
        "0" | "0.0" | "false" => Ok(0.0),
        "1" | "1.0" | "true" => Ok(1.0),
        other => Err(format!("outcome '{other}' is not 0 or 1")),
    }
}

fn parse_f64(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("cannot parse {what} '{s}'"))
}

fn read_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let f_col = col("f").ok_or_else(|| Error::Data("CSV header lacks column 'f'".into()))?;
    let y_col = col("y").ok_or_else(|| Error::Data("CSV header lacks column 'y'".into()))?;
    let delta_col = col("delta_true");
    let group_col = col("group");
    let mut x_cols = Vec::new();
    while let Some(c) = col(&format!("x{}", x_cols.len())) {
        x_cols.push(c);
    }
    if x_cols.is_empty() {
        return Err(Error::Data("CSV header lacks embedding columns x0..".into()));
    }

    let mut sink = RowSink::default();
    let mut xbuf = Vec::with_capacity(x_cols.len());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row {
            row,
            msg: format!("malformed row: {e}"),
        })?;
        let field = |c: usize| rec.get(c).ok_or_else(|| Error::Row { row, msg: "missing column".into() });
        let to_row = |msg| Error::Row { row, msg };
        xbuf.clear();
        for &c in &x_cols {
            xbuf.push(parse_f64(field(c)?, "embedding").map_err(to_row)?);
        }
        let f = parse_f64(field(f_col)?, "confidence").map_err(to_row)?;
        let y = parse_outcome(field(y_col)?).map_err(to_row)?;
        let delta = match delta_col {
            Some(c) => Some(parse_f64(field(c)?, "delta_true").map_err(to_row)?),
            None => None,
        };
        let group = match group_col {
            Some(c) => Some(
                field(c)?
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| to_row("cannot parse group id".into()))?,
            ),
            None => None,
        };
        sink.push(row, &xbuf, f, y, delta, group)?;
    }
    sink.finish()
}

fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["f".to_string(), "y".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("x{j}")));
    if ds.true_field.is_some() {
        header.push("delta_true".into());
    }
    if ds.group_labels.is_some() {
        header.push("group".into());
    }
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len() {
        // `{}` on f64 prints the shortest string that parses back exactly.
        let mut rec = vec![format!("{}", ds.confidences[i]), format!("{}", ds.outcomes[i] as u8)];
        rec.extend(ds.embeddings.row(i).iter().map(|v| format!("{v}")));
        if let Some(t) = &ds.true_field {
            rec.push(format!("{}", t[i]));
        }
        if let Some(g) = &ds.group_labels {
            rec.push(g[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    f: f64,
    y: serde_json::Value,
    x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<i64>,
}

fn read_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sink = RowSink::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Row {
            row,
            msg: format!("malformed row: {e}"),
        })?;
        let y = match &r.y {
            serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
            serde_json::Value::Bool(b) => f64::from(u8::from(*b)),
            _ => f64::NAN,
        };
        sink.push(row, &r.x, r.f, y, r.delta_true, r.group)?;
    }
    sink.finish()
}

fn write_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..ds.len() {
        let row = JsonRow {
            f: ds.confidences[i],
            y: serde_json::Value::from(ds.outcomes[i] as u8),
            x: ds.embeddings.row(i).to_vec(),
            delta_true: ds.true_field.as_ref().map(|t| t[i]),
            group: ds.group_labels.as_ref().map(|g| g[i]),
        };
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_bin(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut flags = 0u8;
    if ds.true_field.is_some() {
        flags |= FLAG_TRUE_FIELD;
    }
    if ds.group_labels.is_some() {
        flags |= FLAG_GROUPS;
    }
    let mut buf = Vec::with_capacity(22 + 8 * ds.len() * (ds.dim() + 4));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.dim() as u64).to_le_bytes());
    buf.push(flags);
    for v in ds.embeddings.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in ds.confidences.iter().chain(ds.outcomes.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(t) = &ds.true_field {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(g) = &ds.group_labels {
        for v in g {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_bin(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    let mut cur = ByteCursor { bytes: &bytes, pos: 0 };
    if cur.take(5)? != MAGIC {
        return Err(Error::Data("bad magic, expected CFLD1".into()));
    }
    let n = cur.u64()? as usize;
    let d = cur.u64()? as usize;
    let flags = cur.take(1)?[0];
    if n == 0 {
        return Err(Error::Data("binary file holds zero rows".into()));
    }
    let x = cur.f64s(n * d)?;
    let f = cur.f64s(n)?;
    let y = cur.f64s(n)?;
    let delta = if flags & FLAG_TRUE_FIELD != 0 { Some(Array1::from(cur.f64s(n)?)) } else { None };
    let group = if flags & FLAG_GROUPS != 0 {
        Some(
            cur.take(8 * n)?
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(Error::Data(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let x = Array2::from_shape_vec((n, d), x).map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::new(x, Array1::from(f), Array1::from(y), delta, group)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Data("binary file truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * k)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
