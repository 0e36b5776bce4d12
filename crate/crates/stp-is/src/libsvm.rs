//! Streaming reader/writer for the LIBSVM sparse text format:
//! `<label> <idx>:<val> <idx>:<val> ...` with 1-based indices, `#`
//! comments and blank lines skipped. The writer emits a canonical form
//! (ascending indices, shortest round-trip float text) so that
//! parse ∘ write is the identity.

use crate::numerics::{DenseVector, SparseMatrix};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: feature index 0 (indices are 1-based)")]
    ZeroIndex { line: usize },
    #[error("line {line}: duplicate feature index {index}")]
    DuplicateIndex { line: usize, index: usize },
    #[error("line {line}: query-id fields are not supported")]
    QueryId { line: usize },
    #[error("--dims {dims} is smaller than max feature index {max_index}")]
    DimsTooSmall { dims: usize, max_index: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: SparseMatrix,
    pub labels: DenseVector,
    /// lines whose feature indices arrived out of order and were sorted
    pub sort_warnings: usize,
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<LabeledDataset, LibsvmError> {
    parse_libsvm_with_dims(reader, None)
}

/// `dims` overrides the inferred column count for datasets whose max
/// feature index underestimates the true dimensionality.
pub fn parse_libsvm_with_dims<R: BufRead>(
    reader: R,
    dims: Option<usize>,
) -> Result<LabeledDataset, LibsvmError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize; // 1-based
    let mut sort_warnings = 0usize;

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        if content.trim().is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let column = |tok: &str| content.find(tok).map(|p| p + 1).unwrap_or(1);
        let label: f64 = label_tok.parse().map_err(|_| LibsvmError::Malformed {
            line: line_no,
            column: column(label_tok),
            message: format!("label `{label_tok}` is not a number"),
        })?;

        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            if tok.starts_with("qid:") {
                return Err(LibsvmError::QueryId { line: line_no });
            }
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| LibsvmError::Malformed {
                line: line_no,
                column: column(tok),
                message: format!("token `{tok}` is not <index>:<value>"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| LibsvmError::Malformed {
                line: line_no,
                column: column(tok),
                message: format!("feature index `{idx_s}` is not an integer"),
            })?;
            if idx == 0 {
                return Err(LibsvmError::ZeroIndex { line: line_no });
            }
            let val: f64 = val_s.parse().map_err(|_| LibsvmError::Malformed {
                line: line_no,
                column: column(tok),
                message: format!("value `{val_s}` is not a number"),
            })?;
            entries.push((idx, val));
        }
        if !entries.windows(2).all(|w| w[0].0 < w[1].0) {
            entries.sort_by_key(|e| e.0);
            for w in entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(LibsvmError::DuplicateIndex {
                        line: line_no,
                        index: w[0].0,
                    });
                }
            }
            sort_warnings += 1;
        }
        if let Some(&(idx, _)) = entries.last() {
            max_index = max_index.max(idx);
        }
        labels.push(label);
        rows.push(entries);
    }

    let cols = match dims {
        Some(d) if d < max_index => {
            return Err(LibsvmError::DimsTooSmall {
                dims: d,
                max_index,
            })
        }
        Some(d) => d,
        None => max_index,
    };
    let triplets = rows
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().map(move |&(idx, v)| (r, idx - 1, v)));
    let x = SparseMatrix::from_triplets(rows.len(), cols, triplets)
        .expect("row/column bounds validated during parse");
    Ok(LabeledDataset {
        x,
        labels,
        sort_warnings,
    })
}

/// Labels equal to `positive_class` become +1, everything else −1.
pub fn binarize_labels(ds: &LabeledDataset, positive_class: f64) -> LabeledDataset {
    LabeledDataset {
        x: ds.x.clone(),
        labels: ds
            .labels
            .iter()
            .map(|&l| if l == positive_class { 1.0 } else { -1.0 })
            .collect(),
        sort_warnings: ds.sort_warnings,
    }
}

/// Canonical writer; floats use Rust's shortest round-trip formatting.
pub fn write_libsvm<W: Write>(ds: &LabeledDataset, mut sink: W) -> Result<(), LibsvmError> {
    for r in 0..ds.x.rows() {
        write!(sink, "{}", ds.labels[r])?;
        for (c, v) in ds.x.row(r) {
            write!(sink, " {}:{}", c + 1, v)?;
        }
        writeln!(sink)?;
    }
    Ok(())
}
