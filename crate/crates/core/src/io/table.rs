use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Samples grouped by class; `classes[c]` holds the rows labeled `c + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub classes: Vec<DMatrix<f64>>,
    /// Label of every input row, in file order.
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// File row indices in class-major order, matching the concatenation of `classes`.
    pub fn class_major_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.labels.len()).collect();
        order.sort_by_key(|&i| self.labels[i]);
        order
    }
}

fn records(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let values = rec
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("not a number: {cell:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(rows)
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows = records(text)?;
    let Some((_, first)) = rows.first() else {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    };
    let p = first.len();
    for (line, r) in &rows {
        if r.len() != p {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {p} fields, found {}", r.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.into_iter().flat_map(|(_, r)| r).collect();
    Ok(DMatrix::from_row_slice(flat.len() / p, p, &flat))
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

fn as_label(v: f64, row: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || !v.is_finite() {
        return Err(Error::Schema(format!("row {row}: label {v} is not an integer >= 1")));
    }
    Ok(v as usize)
}

fn check_contiguous(labels: &[usize]) -> Result<usize> {
    let c = labels.iter().copied().max().unwrap_or(0);
    let mut seen = vec![false; c];
    for &l in labels {
        seen[l - 1] = true;
    }
    if let Some(gap) = seen.iter().position(|s| !s) {
        return Err(Error::Schema(format!("labels must cover 1..={c}; label {} is missing", gap + 1)));
    }
    Ok(c)
}

/// Rows of features followed by an integer class label in the last column.
pub fn parse_labeled_csv(text: &str) -> Result<LabeledDataset> {
    let m = parse_matrix_csv(text)?;
    if m.ncols() < 2 {
        return Err(Error::Schema("a labeled file needs at least one feature column and a label column".into()));
    }
    let p = m.ncols() - 1;
    let labels = (0..m.nrows()).map(|i| as_label(m[(i, p)], i + 1)).collect::<Result<Vec<_>>>()?;
    let c = check_contiguous(&labels)?;
    let classes = (1..=c)
        .map(|class| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            DMatrix::from_fn(rows.len(), p, |r, j| m[(rows[r], j)])
        })
        .collect();
    Ok(LabeledDataset { classes, labels })
}

pub fn load_labeled_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_labeled_csv(&fs::read_to_string(path)?)
}

/// One integer label (>= 1) per row.
pub fn parse_labels_csv(text: &str) -> Result<Vec<usize>> {
    let m = parse_matrix_csv(text)?;
    if m.ncols() != 1 {
        return Err(Error::Schema(format!("expected a single label column, found {}", m.ncols())));
    }
    m.iter().enumerate().map(|(i, &v)| as_label(v, i + 1)).collect()
}

pub fn load_labels_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_labels_csv(&fs::read_to_string(path)?)
}

/// Comma-separated rows with shortest round-trip formatting.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
