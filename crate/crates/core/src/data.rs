//! Column-oriented training data.
//!
//! Every feature column carries a precomputed ascending sort order so that
//! split search can walk any node's rows in feature order without sorting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl LabelColumn {
    /// Interprets a command-line value: an unsigned integer selects by
    /// 0-based index, anything else by header name.
    pub fn from_arg(arg: &str) -> Self {
        match arg.parse::<usize>() {
            Ok(index) => LabelColumn::Index(index),
            Err(_) => LabelColumn::Name(arg.to_string()),
        }
    }

    fn resolve(&self, header: Option<&[String]>, n_columns: usize) -> Result<usize> {
        match self {
            LabelColumn::Index(index) => {
                // A numeric header name wins over the positional reading.
                if let Some(pos) =
                    header.and_then(|h| h.iter().position(|c| *c == index.to_string()))
                {
                    return Ok(pos);
                }
                if *index < n_columns {
                    Ok(*index)
                } else {
                    Err(Error::LabelColumn(index.to_string()))
                }
            }
            LabelColumn::Name(name) => header
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::LabelColumn(name.clone())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Stop after this many data records.
    pub row_limit: Option<usize>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            row_limit: None,
        }
    }
}

/// A numeric CSV table, stored by column.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub columns: Vec<Vec<f64>>,
    pub n_rows: usize,
}

impl Table {
    pub fn read(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Table> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(options.has_header)
            .trim(csv::Trim::All)
            .from_reader(file);

        let header = if options.has_header {
            let record = reader.headers().map_err(|e| csv_error(0, e))?;
            Some(record.iter().map(str::to_string).collect::<Vec<_>>())
        } else {
            None
        };

        let mut columns: Vec<Vec<f64>> = match &header {
            Some(h) => vec![Vec::new(); h.len()],
            None => Vec::new(),
        };
        let mut n_rows = 0;
        let mut record = csv::StringRecord::new();
        loop {
            if options.row_limit.is_some_and(|limit| n_rows >= limit) {
                break;
            }
            match reader.read_record(&mut record) {
                Ok(true) => {}
                Ok(false) => break,
                Err(e) => return Err(csv_error(n_rows, e)),
            }
            if columns.is_empty() {
                columns = vec![Vec::new(); record.len()];
            }
            if record.len() != columns.len() {
                return Err(Error::Parse {
                    record: n_rows,
                    message: format!("expected {} fields, found {}", columns.len(), record.len()),
                });
            }
            for (column, cell) in record.iter().enumerate() {
                columns[column].push(parse_cell(cell, n_rows, column)?);
            }
            n_rows += 1;
        }
        Ok(Table {
            header,
            columns,
            n_rows,
        })
    }

    /// Removes and returns the label column.
    pub fn take_column(&mut self, label: &LabelColumn) -> Result<Vec<f64>> {
        let index = label.resolve(self.header.as_deref(), self.columns.len())?;
        if let Some(header) = self.header.as_mut() {
            header.remove(index);
        }
        Ok(self.columns.remove(index))
    }
}

fn csv_error(record: usize, err: csv::Error) -> Error {
    Error::Parse {
        record,
        message: err.to_string(),
    }
}

fn parse_cell(cell: &str, record: usize, column: usize) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::MissingValue { record, column });
    }
    let value: f64 = cell.parse().map_err(|_| Error::Parse {
        record,
        message: format!("non-numeric cell {cell:?} in column {column}"),
    })?;
    if value.is_nan() {
        return Err(Error::MissingValue { record, column });
    }
    if value.is_infinite() {
        return Err(Error::Parse {
            record,
            message: format!("infinite value in column {column}"),
        });
    }
    Ok(value)
}

/// Row indices into a [`Dataset`]; unique and in bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSet(Vec<u32>);

impl RowSet {
    pub fn all(n_rows: usize) -> Self {
        RowSet((0..n_rows as u32).collect())
    }

    pub fn new(indices: Vec<u32>, n_rows: usize) -> Result<Self> {
        let mut seen = vec![false; n_rows];
        for &i in &indices {
            let slot = seen.get_mut(i as usize).ok_or_else(|| {
                Error::InvalidConfig(format!("row {i} out of bounds ({n_rows} rows)"))
            })?;
            if *slot {
                return Err(Error::InvalidConfig(format!("row {i} repeated in row set")));
            }
            *slot = true;
        }
        Ok(RowSet(indices))
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    labels: Vec<f64>,
    sort_index: Vec<Vec<u32>>,
    /// Each column's values in `sort_index` order.
    sorted_values: Vec<Vec<f64>>,
}

impl Dataset {
    /// Validates shapes and finiteness, then builds the per-feature sort orders.
    pub fn new(columns: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let n_rows = labels.len();
        if n_rows > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "{n_rows} rows exceed the u32 row index"
            )));
        }
        for (feature, column) in columns.iter().enumerate() {
            if column.len() != n_rows {
                return Err(Error::LengthMismatch(format!(
                    "feature {feature} has {} rows, labels have {n_rows}",
                    column.len()
                )));
            }
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature {feature}, row {row}")));
            }
        }
        if let Some(row) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("label at row {row}")));
        }
        let sort_index: Vec<Vec<u32>> = columns.iter().map(|column| sort_order(column)).collect();
        let sorted_values = columns
            .iter()
            .zip(&sort_index)
            .map(|(column, order)| order.iter().map(|&r| column[r as usize]).collect())
            .collect();
        Ok(Dataset {
            columns,
            labels,
            sort_index,
            sorted_values,
        })
    }

    pub fn from_table(mut table: Table, label: &LabelColumn) -> Result<Self> {
        let labels = table.take_column(label)?;
        Dataset::new(table.columns, labels)
    }

    /// Loads a labelled CSV file. Row order is preserved.
    pub fn load_csv(
        path: impl AsRef<Path>,
        label: &LabelColumn,
        options: &CsvOptions,
    ) -> Result<Self> {
        Dataset::from_table(Table::read(path, options)?, label)
    }

    /// Writes features as `f0..f{m-1}` followed by a `label` column. Values use
    /// the shortest decimal form that parses back to the same bits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write_err = |e| Error::io(path, e);
        let mut header: Vec<String> = (0..self.n_features()).map(|f| format!("f{f}")).collect();
        header.push("label".to_string());
        writeln!(out, "{}", header.join(",")).map_err(write_err)?;
        for row in 0..self.n_rows() {
            let mut line = String::new();
            for column in &self.columns {
                line.push_str(&format!("{},", column[row]));
            }
            line.push_str(&format!("{}", self.labels[row]));
            writeln!(out, "{line}").map_err(write_err)?;
        }
        out.flush().map_err(write_err)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Row indices ordering `feature` ascending; ties keep row order.
    pub fn sort_index(&self, feature: usize) -> &[u32] {
        &self.sort_index[feature]
    }

    pub fn sorted_values(&self, feature: usize) -> &[f64] {
        &self.sorted_values[feature]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    pub fn check_binary_labels(&self) -> Result<()> {
        match self.labels.iter().position(|&y| y != 0.0 && y != 1.0) {
            Some(row) => Err(Error::LabelDomain {
                row,
                value: self.labels[row],
            }),
            None => Ok(()),
        }
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset::new(columns, labels)
    }

    /// Splits into the first `at` rows and the remainder.
    pub fn split_at(&self, at: usize) -> Result<(Dataset, Dataset)> {
        let at = at.min(self.n_rows());
        let head: Vec<usize> = (0..at).collect();
        let tail: Vec<usize> = (at..self.n_rows()).collect();
        Ok((self.select_rows(&head)?, self.select_rows(&tail)?))
    }
}

fn sort_order(column: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..column.len() as u32).collect();
    order.sort_by(|&a, &b| column[a as usize].total_cmp(&column[b as usize]));
    order
}

/// Train, validation and test sets of `n_train`, `n_train / 4` and
/// `n_train / 4` rows, cut in that order from one synthetic draw.
pub fn synthetic_splits(
    n_train: usize,
    n_features: usize,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let quarter = n_train / 4;
    if quarter == 0 {
        return Err(Error::InvalidConfig(format!(
            "synthetic splits need at least 4 training rows, got {n_train}"
        )));
    }
    let all = make_synthetic(n_train + 2 * quarter, n_features, seed)?;
    let (train, rest) = all.split_at(n_train)?;
    let (valid, test) = rest.split_at(quarter)?;
    Ok((train, valid, test))
}

/// Deterministic binary-classification data with a nonlinear decision rule.
///
/// Features are uniform on [-1, 1]. The first (up to) eight features drive a
/// latent score built from sinusoids, pairwise products and a step; the rest
/// are pure noise. Labels threshold the latent score after Gaussian noise and
/// then 5% of them are flipped.
pub fn make_synthetic(n_rows: usize, n_features: usize, seed: u64) -> Result<Dataset> {
    if n_rows < 2 || n_features < 1 {
        return Err(Error::InvalidConfig(format!(
            "synthetic data needs n_rows >= 2 and n_features >= 1, got {n_rows}x{n_features}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let informative = n_features.min(8);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let amplitude: Vec<f64> = (0..informative).map(|_| gauss.sample(&mut rng)).collect();
    let frequency: Vec<f64> = (0..informative)
        .map(|_| rng.random_range(0.5..1.5))
        .collect();
    let interaction: Vec<f64> = (0..informative).map(|_| gauss.sample(&mut rng)).collect();
    let step_at: f64 = rng.random_range(-0.5..0.5);

    let uniform = Uniform::new(-1.0, 1.0).expect("valid range");
    let mut columns = vec![Vec::with_capacity(n_rows); n_features];
    let mut labels = Vec::with_capacity(n_rows);
    let mut x = vec![0.0; n_features];
    for _ in 0..n_rows {
        for (value, column) in x.iter_mut().zip(columns.iter_mut()) {
            *value = uniform.sample(&mut rng);
            column.push(*value);
        }
        let mut latent = 0.0;
        for j in 0..informative {
            latent += amplitude[j] * (std::f64::consts::PI * frequency[j] * x[j]).sin();
            latent += interaction[j] * x[j] * x[(j + 1) % informative];
        }
        if x[0] > step_at {
            latent += 1.0;
        } else {
            latent -= 1.0;
        }
        let noisy = latent + 0.5 * gauss.sample(&mut rng);
        let mut label = if noisy > 0.0 { 1.0 } else { 0.0 };
        if rng.random_bool(0.05) {
            label = 1.0 - label;
        }
        labels.push(label);
    }
    Dataset::new(columns, labels)
}
