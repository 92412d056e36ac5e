//! Matrix containers, column centering, and CSV ingestion/emission.
//!
//! CSV files are comma-separated with an optional single header row. Fields
//! must be finite decimal numbers; missing values and NaN are rejected.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Paired design and response matrices with row-sample semantics.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    centered: bool,
}

impl Dataset {
    /// Wraps raw matrices without centering them.
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        validate(&x, &y)?;
        Ok(Dataset {
            x,
            y,
            centered: false,
        })
    }

    /// Wraps and column-centers both matrices.
    pub fn centered(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        validate(&x, &y)?;
        Ok(Dataset {
            x: center_columns(&x),
            y: center_columns(&y),
            centered: true,
        })
    }

    /// Returns a centered copy, or `self` unchanged when already centered.
    pub fn into_centered(self) -> Self {
        if self.centered {
            return self;
        }
        Dataset {
            x: center_columns(&self.x),
            y: center_columns(&self.y),
            centered: true,
        }
    }

    pub fn from_csv(x_path: &Path, y_path: &Path, has_header: bool) -> Result<Self> {
        let x = load_matrix_csv(x_path, has_header)?.matrix;
        let y = load_matrix_csv(y_path, has_header)?.matrix;
        Self::centered(x, y)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Same design, responses with columns reordered by `order`.
    pub fn with_response_order(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.m() || order.iter().any(|&j| j >= self.m()) {
            return Err(Error::InvalidArgument(
                "response order must be a permutation of the columns".into(),
            ));
        }
        let y = DMatrix::from_fn(self.n(), order.len(), |r, c| self.y[(r, order[c])]);
        Ok(Dataset {
            x: self.x.clone(),
            y,
            centered: self.centered,
        })
    }
}

fn validate(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::Dimension("at least two samples are required".into()));
    }
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::Dimension("X and Y need at least one column".into()));
    }
    if !crate::linalg::all_finite(x.as_slice()) {
        return Err(Error::NonFinite("X"));
    }
    if !crate::linalg::all_finite(y.as_slice()) {
        return Err(Error::NonFinite("Y"));
    }
    Ok(())
}

/// Subtracts each column's mean.
pub fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows();
    if n == 0 {
        return out;
    }
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    out
}

/// A parsed CSV matrix and its header labels, when the file had one.
#[derive(Debug, Clone)]
pub struct CsvMatrix {
    pub labels: Option<Vec<String>>,
    pub matrix: DMatrix<f64>,
}

pub fn load_matrix_csv(path: &Path, has_header: bool) -> Result<CsvMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix_csv(file, has_header)
}

/// Parses CSV text from any reader. Row numbers in errors are 1-based file lines.
pub fn parse_matrix_csv<R: Read>(reader: R, has_header: bool) -> Result<CsvMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let labels = if has_header {
        let headers = rdr.headers().map_err(csv_error)?;
        Some(headers.iter().map(str::to_owned).collect::<Vec<_>>())
    } else {
        None
    };

    let mut values = Vec::new();
    let mut rows = 0usize;
    let mut cols = 0usize;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        if rows == 0 {
            cols = record.len();
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                col: Some(c + 1),
                message: format!("'{field}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: Some(c + 1),
                    message: format!("'{field}' is not finite"),
                });
            }
            values.push(value);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("no data rows".into()));
    }
    if let Some(l) = &labels {
        if l.len() != cols {
            return Err(Error::Parse {
                row: 1,
                col: None,
                message: format!("header has {} fields, data rows have {cols}", l.len()),
            });
        }
    }
    Ok(CsvMatrix {
        labels,
        matrix: DMatrix::from_row_slice(rows, cols, &values),
    })
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            row,
            col: None,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => Error::Parse {
            row,
            col: None,
            message: e.to_string(),
        },
    }
}

/// Writes a matrix with shortest round-trip float formatting.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, labels: Option<&[String]>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix(&mut file, m, labels)?;
    file.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>, labels: Option<&[String]>) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != m.ncols() {
            return Err(Error::Dimension(format!(
                "{} labels for {} columns",
                labels.len(),
                m.ncols()
            )));
        }
        writeln!(out, "{}", labels.join(","))?;
    }
    let mut line = String::new();
    for r in 0..m.nrows() {
        line.clear();
        for c in 0..m.ncols() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format_float(m[(r, c)]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Shortest representation that parses back to the identical `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}
