use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// A column selected by header name or zero-based position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

impl From<usize> for ColumnRef {
    fn from(i: usize) -> Self {
        ColumnRef::Index(i)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: Option<ColumnRef>,
    pub class_column: Option<ColumnRef>,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: Some(ColumnRef::Name("label".into())),
            class_column: None,
            has_header: true,
        }
    }
}

/// Reads a comma-separated table. Rows whose features are missing or
/// non-finite are dropped and counted in [`Dataset::dropped_rows`].
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&name, &text, opts)
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "na")
}

fn resolve(col: &ColumnRef, header: Option<&[String]>, width: usize) -> Result<usize> {
    match col {
        ColumnRef::Index(i) if *i < width => Ok(*i),
        ColumnRef::Index(i) => Err(Error::MissingColumn(format!("index {i}"))),
        ColumnRef::Name(n) => header
            .and_then(|h| h.iter().position(|c| c == n))
            .ok_or_else(|| Error::MissingColumn(n.clone())),
    }
}

pub fn parse_csv(name: &str, text: &str, opts: &CsvOptions) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let split = |l: &str| l.split(',').map(|c| c.trim().to_string()).collect::<Vec<_>>();

    let mut pending = None;
    let header = if opts.has_header {
        let (_, l) = lines.next().ok_or_else(|| Error::Empty(name.into()))?;
        Some(split(l))
    } else {
        None
    };
    if header.is_none() {
        pending = lines.next();
    }
    let width = match (&header, pending) {
        (Some(h), _) => h.len(),
        (None, Some((_, l))) => split(l).len(),
        (None, None) => return Err(Error::Empty(name.into())),
    };

    let label_col = opts
        .label_column
        .as_ref()
        .map(|c| resolve(c, header.as_deref(), width))
        .transpose()?;
    let class_col = opts
        .class_column
        .as_ref()
        .map(|c| resolve(c, header.as_deref(), width))
        .transpose()?;
    let feature_cols: Vec<usize> = (0..width)
        .filter(|c| Some(*c) != label_col && Some(*c) != class_col)
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut classes = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut dropped = 0;
    let mut n_rows = 0;

    for (line_no, line) in pending.into_iter().chain(lines) {
        let cells = split(line);
        if cells.len() != width {
            return Err(Error::Csv {
                line: line_no,
                message: format!("expected {width} fields, found {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        let mut finite = true;
        for &c in &feature_cols {
            let cell = &cells[c];
            if is_missing(cell) {
                finite = false;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                line: line_no,
                message: format!("unparseable cell {cell:?} in column {c}"),
            })?;
            finite &= v.is_finite();
            row.push(v);
        }
        let label = label_col
            .map(|c| match cells[c].parse::<f64>() {
                Ok(v) if v == 0.0 => Ok(0u8),
                Ok(v) if v == 1.0 => Ok(1u8),
                _ => Err(Error::Csv {
                    line: line_no,
                    message: format!("label {:?} is not 0 or 1", cells[c]),
                }),
            })
            .transpose()?;
        if !finite {
            dropped += 1;
            continue;
        }
        if let Some(c) = class_col {
            let next = class_names.len();
            let id = *class_index.entry(cells[c].clone()).or_insert(next);
            if id == next {
                class_names.push(cells[c].clone());
            }
            classes.push(id);
        }
        if let Some(l) = label {
            labels.push(l);
        }
        values.extend(row);
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Empty(format!("{name}: no data rows")));
    }
    if label_col.is_some() && !labels.contains(&super::NORMAL) {
        return Err(Error::InsufficientData(format!("{name}: no normal samples")));
    }
    let features = Array2::from_shape_vec((n_rows, feature_cols.len()), values)
        .expect("row widths are checked above");
    if dropped > 0 {
        log::warn!("{name}: dropped {dropped} rows with missing or non-finite features");
    }
    Ok(Dataset {
        name: name.to_string(),
        features,
        labels: label_col.map(|_| labels),
        class_ids: class_col.map(|_| classes),
        class_names,
        dropped_rows: dropped,
    })
}

/// Header `x0,..,x{d-1},label` followed by one row per sample; floats use
/// the shortest representation that parses back exactly.
pub fn format_csv(d: &Dataset) -> String {
    let mut out: String = (0..d.n_dims()).map(|j| format!("x{j},")).collect();
    out.push_str("label\n");
    for (i, row) in d.features.rows().into_iter().enumerate() {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        let label = d.labels.as_ref().map_or(0, |l| l[i]);
        out.push_str(&format!("{label}\n"));
    }
    out
}

pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), format_csv(d).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_two_features() {
        let text = "a,b,label\n0.1,0.2,0\n0.3,0.4,0\n5,6,1\n7,8,1\n";
        let d = parse_csv("t", text, &CsvOptions::default()).unwrap();
        assert_eq!(d.n_samples(), 4);
        assert_eq!(d.n_dims(), 2);
        assert_eq!(d.n_anomalies(), 2);
        assert_eq!(d.features[[2, 1]], 6.0);
    }

    #[test]
    fn nan_row_is_dropped() {
        let text = "a,b,label\n0.1,NaN,0\n0.3,0.4,0\n5,6,1\n7,8,1\n";
        let d = parse_csv("t", text, &CsvOptions::default()).unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.dropped_rows, 1);
        assert_eq!(d.features[[0, 0]], 0.3);
    }

    #[test]
    fn class_column_defers_labels() {
        let text = "x,cls\n1,a\n2,a\n3,b\n4,c\n";
        let opts = CsvOptions {
            label_column: None,
            class_column: Some("cls".into()),
            has_header: true,
        };
        let d = parse_csv("t", text, &opts).unwrap();
        assert!(d.labels.is_none());
        assert_eq!(d.class_ids.as_deref(), Some(&[0, 0, 1, 2][..]));
        assert_eq!(d.class_names, vec!["a", "b", "c"]);
    }

    #[test]
    fn headerless_with_index_columns() {
        let text = "1,2,0\n3,4,1\n";
        let opts = CsvOptions {
            label_column: Some(2.into()),
            class_column: None,
            has_header: false,
        };
        let d = parse_csv("t", text, &opts).unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.labels.unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        let opts = CsvOptions::default();
        assert!(matches!(
            parse_csv("t", "a,b\n1,2\n", &opts),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(
            parse_csv("t", "a,label\nx,0\n", &opts),
            Err(Error::Csv { line: 2, .. })
        ));
        assert!(matches!(parse_csv("t", "", &opts), Err(Error::Empty(_))));
        assert!(matches!(
            parse_csv("t", "a,label\n", &opts),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            parse_csv("t", "a,label\n1,2\n", &opts),
            Err(Error::Csv { .. })
        ));
    }

    #[test]
    fn format_round_trips() {
        let d = crate::data::make_synthetic(crate::data::SyntheticKind::Ring, 6, 2, 4);
        let back = parse_csv("ring", &format_csv(&d), &CsvOptions::default()).unwrap();
        assert_eq!(back.features, d.features);
        assert_eq!(back.labels, d.labels);
    }
}
