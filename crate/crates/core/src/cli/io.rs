//! CSV/TSV readers and writers. The delimiter follows the file extension:
//! `.tsv`, `.tab` and `.txt` are tab-separated, anything else is comma.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use crate::data::{CountMatrix, CovariateMatrix, GroupAssignment};

use super::CliError;

pub fn delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("tsv" | "tab" | "txt") => b'\t',
        _ => b',',
    }
}

/// Header and data rows of a delimited file, with 1-based line numbers.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let display = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter(path))
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{display}: {e}")))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(&display, 1, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(&display, 1, 1, "missing header row".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(&display, line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_err(path: &str, line: usize, column: usize, message: String) -> CliError {
    CliError::Parse { path: path.into(), line, column, message }
}

fn unique_ids(path: &str, table: &Table) -> Result<Vec<String>, CliError> {
    let mut seen = HashMap::new();
    let mut ids = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let id = row[0].clone();
        if id.is_empty() {
            return Err(parse_err(path, *line, 1, "empty sample id".into()));
        }
        if let Some(first) = seen.insert(id.clone(), *line) {
            return Err(parse_err(path, *line, 1, format!("sample id {id} already on line {first}")));
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Counts with strict non-negative integer parsing.
pub fn read_counts(path: &Path) -> Result<CountMatrix, CliError> {
    let display = path.display().to_string();
    let table = read_table(path)?;
    let p = table.header.len() - 1;
    let ids = unique_ids(&display, &table)?;
    let mut values = Array2::<u64>::zeros((table.rows.len(), p));
    for (i, (line, row)) in table.rows.iter().enumerate() {
        for (j, cell) in row[1..].iter().enumerate() {
            values[[i, j]] = cell.parse::<u64>().map_err(|_| {
                if cell.parse::<f64>().is_ok() {
                    CliError::NonIntegerCount { path: display.clone(), line: *line, column: j + 2, value: cell.clone() }
                } else {
                    parse_err(&display, *line, j + 2, format!("expected a count, found {cell:?}"))
                }
            })?;
        }
    }
    Ok(CountMatrix::new(values, ids, table.header[1..].to_vec())?)
}

/// Covariates keyed by sample id.
pub fn read_covariates(path: &Path) -> Result<(Vec<String>, CovariateMatrix), CliError> {
    let display = path.display().to_string();
    let table = read_table(path)?;
    let r = table.header.len() - 1;
    let ids = unique_ids(&display, &table)?;
    let mut values = Array2::<f64>::zeros((table.rows.len(), r));
    for (i, (line, row)) in table.rows.iter().enumerate() {
        for (c, cell) in row[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(&display, *line, c + 2, format!("expected a number, found {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(&display, *line, c + 2, format!("non-finite value {cell}")));
            }
            values[[i, c]] = v;
        }
    }
    Ok((ids, CovariateMatrix::new(values, table.header[1..].to_vec())?))
}

/// Group labels keyed by sample id.
pub fn read_groups(path: &Path) -> Result<(Vec<String>, Vec<usize>), CliError> {
    let display = path.display().to_string();
    let table = read_table(path)?;
    if table.header.len() != 2 {
        return Err(parse_err(&display, 1, 1, "expected columns sample_id, group".into()));
    }
    let ids = unique_ids(&display, &table)?;
    let labels = table
        .rows
        .iter()
        .map(|(line, row)| {
            row[1]
                .parse::<usize>()
                .map_err(|_| parse_err(&display, *line, 2, format!("expected a group label, found {:?}", row[1])))
        })
        .collect::<Result<_, _>>()?;
    Ok((ids, labels))
}

/// Row permutation that puts `ids` into the order of `target`.
pub fn align(target: &[String], ids: &[String], what: &str) -> Result<Vec<usize>, CliError> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut order = Vec::with_capacity(target.len());
    for t in target {
        match index.get(t.as_str()) {
            Some(&i) => order.push(i),
            None => return Err(CliError::UnalignedSampleIds(format!("sample {t} is missing from the {what}"))),
        }
    }
    let known: std::collections::HashSet<&str> = target.iter().map(String::as_str).collect();
    if let Some(extra) = ids.iter().find(|s| !known.contains(s.as_str())) {
        return Err(CliError::UnalignedSampleIds(format!("sample {extra} in the {what} has no counts")));
    }
    Ok(order)
}

/// Counts plus covariates and groups joined on sample id, in count order.
pub fn read_bundle(
    counts: &Path,
    covariates: Option<&Path>,
    groups: &Path,
    reference: usize,
) -> Result<(CountMatrix, CovariateMatrix, GroupAssignment), CliError> {
    let counts = read_counts(counts)?;
    let samples = counts.sample_ids().to_vec();
    let cov = match covariates {
        Some(path) => {
            let (ids, cov) = read_covariates(path)?;
            let order = align(&samples, &ids, "covariates")?;
            cov.select_rows(&order)
        }
        None => CovariateMatrix::empty(samples.len()),
    };
    let (ids, labels) = read_groups(groups)?;
    let order = align(&samples, &ids, "groups")?;
    let groups = GroupAssignment::new(order.iter().map(|&i| labels[i]).collect())?.with_reference(reference)?;
    Ok((counts, cov, groups))
}

pub struct CsvOut {
    inner: csv::Writer<std::fs::File>,
    path: String,
}

impl CsvOut {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let inner = csv::WriterBuilder::new()
            .delimiter(delimiter(path))
            .from_path(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { inner, path: path.display().to_string() })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| CliError::Io(format!("{}: {e}", self.path)))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| CliError::Io(format!("{}: {e}", self.path)))
    }
}

/// Shortest round-trip formatting; `NA` for NaN and missing values.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

pub fn write_counts(path: &Path, counts: &CountMatrix) -> Result<(), CliError> {
    let mut w = CsvOut::create(path)?;
    w.row(std::iter::once("sample_id").chain(counts.feature_ids().iter().map(String::as_str)))?;
    for (i, id) in counts.sample_ids().iter().enumerate() {
        w.row(std::iter::once(id.clone()).chain(counts.sample(i).iter().map(u64::to_string)))?;
    }
    w.finish()
}

pub fn write_covariates(path: &Path, sample_ids: &[String], cov: &CovariateMatrix) -> Result<(), CliError> {
    let mut w = CsvOut::create(path)?;
    w.row(std::iter::once("sample_id").chain(cov.covariate_ids().iter().map(String::as_str)))?;
    for (i, id) in sample_ids.iter().enumerate() {
        w.row(std::iter::once(id.clone()).chain(cov.values().row(i).iter().map(|&v| num(v))))?;
    }
    w.finish()
}

pub fn write_groups(path: &Path, sample_ids: &[String], groups: &GroupAssignment) -> Result<(), CliError> {
    let mut w = CsvOut::create(path)?;
    w.row(["sample_id", "group"])?;
    for (id, g) in sample_ids.iter().zip(groups.labels()) {
        w.row([id.clone(), g.to_string()])?;
    }
    w.finish()
}
