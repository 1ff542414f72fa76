//! Delimited text input: a header row, a `label` column with values 1 or 2,
//! every other column a numeric feature. Lines starting with `#` are
//! skipped.

use std::path::Path;

use nalgebra::DMatrix;
use road_core::estimation::{Class, LabeledData};

use crate::error::{CliError, CliResult};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone)]
pub struct Table {
    pub features: Vec<String>,
    pub x: DMatrix<f64>,
    pub labels: Option<Vec<Class>>,
}

impl Table {
    pub fn labeled(self, path: &Path) -> CliResult<(Vec<String>, LabeledData)> {
        let y = self.labels.ok_or_else(|| CliError::MissingColumn {
            path: path.to_path_buf(),
            column: LABEL_COLUMN,
        })?;
        Ok((self.features, LabeledData::new(self.x, y)?))
    }
}

pub fn read_table(path: &Path, require_label: bool) -> CliResult<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_table(file, path, require_label)
}

pub fn parse_table(input: impl std::io::Read, path: &Path, require_label: bool) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(csv_line(&e), e.to_string()))?
        .clone();
    let label_at = headers.iter().position(|h| h == LABEL_COLUMN);
    if require_label && label_at.is_none() {
        return Err(CliError::MissingColumn {
            path: path.to_path_buf(),
            column: LABEL_COLUMN,
        });
    }
    let features: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_at)
        .map(|(_, h)| h.to_string())
        .collect();
    if features.is_empty() {
        return Err(parse_err(1, "no feature columns".into()));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(csv_line(&e), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, field) in record.iter().enumerate() {
            if Some(i) == label_at {
                let class = field
                    .parse::<i64>()
                    .ok()
                    .and_then(Class::from_label)
                    .ok_or_else(|| parse_err(line, format!("label must be 1 or 2, got '{field}'")))?;
                labels.push(class);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(line, format!("column '{}': '{field}' is not a number", &headers[i])))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("column '{}': value is not finite", &headers[i])));
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(Table {
        x: DMatrix::from_row_slice(rows, features.len(), &values),
        features,
        labels: label_at.map(|_| labels),
    })
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}
