//! Column-typed tabular data with CSV ingestion and emission.
//!
//! Columns are numeric or categorical. Type inference treats a column as
//! numeric when every value parses as a float; schema hints override it.
//! Floats are emitted with 17 significant digits so a round trip is lossless.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Level strings in order of first appearance plus one code per row.
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn is_numeric(&self) -> bool {
        matches!(self.data, ColumnData::Numeric(_))
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn push_column(&mut self, column: Column) -> Result<()> {
        if !self.columns.is_empty() && column.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                left: column.len(),
                right: self.n_rows,
            });
        }
        self.n_rows = column.len();
        self.columns.push(column);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match &self.column(name)?.data {
            ColumnData::Numeric(v) => Ok(v),
            ColumnData::Categorical { .. } => Err(Error::SchemaMismatch(format!(
                "column `{name}` is categorical, expected numeric"
            ))),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<(&[String], &[usize])> {
        match &self.column(name)?.data {
            ColumnData::Categorical { levels, codes } => Ok((levels, codes)),
            ColumnData::Numeric(_) => Err(Error::SchemaMismatch(format!(
                "column `{name}` is numeric, expected categorical"
            ))),
        }
    }

    /// Treatment indicator coerced to 0/1. Values must be exactly 0 or 1
    /// (as numbers or strings).
    pub fn treatment(&self, name: &str) -> Result<Vec<u8>> {
        let col = self.column(name)?;
        match &col.data {
            ColumnData::Numeric(v) => v
                .iter()
                .enumerate()
                .map(|(row, &x)| {
                    if x == 0.0 {
                        Ok(0)
                    } else if x == 1.0 {
                        Ok(1)
                    } else {
                        Err(Error::NonBinaryTreatment {
                            row,
                            value: format!("{x}"),
                        })
                    }
                })
                .collect(),
            ColumnData::Categorical { levels, codes } => codes
                .iter()
                .enumerate()
                .map(|(row, &c)| match levels[c].trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::NonBinaryTreatment {
                        row,
                        value: other.to_string(),
                    }),
                })
                .collect(),
        }
    }

    /// Row indices belonging to treatment group `group`.
    pub fn group_rows(&self, treatment: &[u8], group: u8) -> Vec<usize> {
        treatment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == group)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn read_csv_path(path: &Path, hints: &HashMap<String, ColumnType>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Dataset::read_csv(file, hints)
    }

    pub fn read_csv<R: Read>(reader: R, hints: &HashMap<String, ColumnType>) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Parse {
                    row: row_idx,
                    column: String::new(),
                    message: format!(
                        "expected {} fields, found {}",
                        headers.len(),
                        record.len()
                    ),
                });
            }
            for (c, field) in record.iter().enumerate() {
                raw[c].push(field.trim().to_string());
            }
        }
        let mut ds = Dataset::new();
        for (c, name) in headers.iter().enumerate() {
            let want = hints.get(name).copied().unwrap_or_else(|| {
                let all_numeric = !raw[c].is_empty()
                    && raw[c].iter().all(|s| s.parse::<f64>().is_ok());
                if all_numeric {
                    ColumnType::Numeric
                } else {
                    ColumnType::Categorical
                }
            });
            let data = match want {
                ColumnType::Numeric => {
                    let mut vals = Vec::with_capacity(raw[c].len());
                    for (row, s) in raw[c].iter().enumerate() {
                        vals.push(s.parse::<f64>().map_err(|e| Error::Parse {
                            row,
                            column: name.clone(),
                            message: e.to_string(),
                        })?);
                    }
                    ColumnData::Numeric(vals)
                }
                ColumnType::Categorical => {
                    let mut levels: Vec<String> = Vec::new();
                    let mut codes = Vec::with_capacity(raw[c].len());
                    for s in &raw[c] {
                        let code = match levels.iter().position(|l| l == s) {
                            Some(i) => i,
                            None => {
                                levels.push(s.clone());
                                levels.len() - 1
                            }
                        };
                        codes.push(code);
                    }
                    ColumnData::Categorical { levels, codes }
                }
            };
            ds.push_column(Column { name: name.clone(), data })?;
        }
        Ok(ds)
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows {
            let fields: Vec<String> = self
                .columns
                .iter()
                .map(|c| match &c.data {
                    ColumnData::Numeric(v) => format_float(v[row]),
                    ColumnData::Categorical { levels, codes } => levels[codes[row]].clone(),
                })
                .collect();
            wtr.write_record(&fields)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// 17 significant digits; round-trips any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
