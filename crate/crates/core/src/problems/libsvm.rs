//! Sparse `label idx:val ...` text ingestion (1-based feature indices).

use std::path::Path;

use crate::error::{Error, Result};

/// Dense materialization of a sparse dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    /// Row-major `n × d`.
    pub features: Vec<f64>,
    /// Labels mapped to `±1` (positive → `+1`, otherwise `−1`).
    pub labels: Vec<f64>,
}

pub fn parse_libsvm(text: &str, d_cap: usize) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad label `{label_tok}`"),
        })?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `index:value`, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value `{val}`"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value `{val}`"),
                });
            }
            d = d.max(idx);
            row.push((idx - 1, val));
        }
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no samples".into()));
    }
    if d > d_cap {
        return Err(Error::InvalidDataset(format!(
            "feature dimension {d} exceeds cap {d_cap}"
        )));
    }
    let d = d.max(1);
    let n = rows.len();
    let mut features = vec![0.0; n * d];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * d + j] = v;
        }
    }
    Ok(Dataset {
        n,
        d,
        features,
        labels,
    })
}

pub fn read_libsvm(path: impl AsRef<Path>, d_cap: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_libsvm(&text, d_cap)
}
