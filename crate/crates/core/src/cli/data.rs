//! Time-series CSV ingestion.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Usable rows required by the test commands.
pub const MIN_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    /// Two columns, a date and a value; `.` or empty values mark gaps.
    Fred,
    /// Named columns: one response and zero or more regressors.
    Generic { response: String, regressors: Vec<String> },
}

impl Schema {
    pub fn parse(name: &str, response: Option<&str>, regressors: &[String]) -> Result<Self> {
        match name {
            "fred" => Ok(Schema::Fred),
            "generic" => Ok(Schema::Generic {
                response: response.unwrap_or("y").to_string(),
                regressors: regressors.to_vec(),
            }),
            other => Err(Error::InvalidParameter(format!("unknown schema '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub dropped_rows: usize,
    pub transforms: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SeriesDataset {
    pub timestamps: Option<Vec<String>>,
    pub y: Vec<f64>,
    pub regressor_names: Vec<String>,
    /// Row-major regressor values, `y.len() × regressor_names.len()`.
    pub regressors: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl SeriesDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `[1, regressors...]`.
    pub fn design_with_intercept(&self) -> DMatrix<f64> {
        let k = self.regressor_names.len();
        DMatrix::from_fn(self.len(), k + 1, |i, j| if j == 0 { 1.0 } else { self.regressors[i][j - 1] })
    }
}

fn parse_number(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("non-numeric value '{field}' in column '{column}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{field}' in column '{column}'"),
        });
    }
    Ok(v)
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f == "."
}

/// Parses CSV text; `min_rows` usable rows are required.
pub fn parse_timeseries_str(text: &str, schema: &Schema, source: &str, min_rows: usize) -> Result<SeriesDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let mut out = SeriesDataset {
        timestamps: None,
        y: Vec::new(),
        regressor_names: Vec::new(),
        regressors: Vec::new(),
        provenance: Provenance {
            source: source.to_string(),
            dropped_rows: 0,
            transforms: Vec::new(),
        },
    };
    match schema {
        Schema::Fred => {
            if header.len() != 2 {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("FRED files have two columns, found {}", header.len()),
                });
            }
            let mut stamps = Vec::new();
            for rec in reader.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                if rec.len() != 2 {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected 2 fields, found {}", rec.len()),
                    });
                }
                if is_missing(&rec[1]) {
                    out.provenance.dropped_rows += 1;
                    continue;
                }
                out.y.push(parse_number(&rec[1], line, &header[1])?);
                stamps.push(rec[0].trim().to_string());
            }
            out.timestamps = Some(stamps);
        }
        Schema::Generic { response, regressors } => {
            let yi = col(response)?;
            let xi: Vec<usize> = regressors.iter().map(|r| col(r)).collect::<Result<_>>()?;
            out.regressor_names = regressors.clone();
            for rec in reader.records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                let field = |i: usize| rec.get(i).unwrap_or("");
                if is_missing(field(yi)) || xi.iter().any(|&i| is_missing(field(i))) {
                    out.provenance.dropped_rows += 1;
                    continue;
                }
                out.y.push(parse_number(field(yi), line, response)?);
                let row = xi
                    .iter()
                    .zip(regressors)
                    .map(|(&i, name)| parse_number(field(i), line, name))
                    .collect::<Result<_>>()?;
                out.regressors.push(row);
            }
        }
    }
    if out.provenance.dropped_rows > 0 {
        out.provenance
            .transforms
            .push(format!("dropped {} rows with missing values", out.provenance.dropped_rows));
    }
    if out.len() < min_rows {
        return Err(Error::InsufficientData {
            what: "usable rows",
            needed: min_rows,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Reads a CSV file; at least [`MIN_ROWS`] usable rows are required.
pub fn parse_timeseries_csv(path: &Path, schema: &Schema) -> Result<SeriesDataset> {
    let text = std::fs::read_to_string(path)?;
    parse_timeseries_str(&text, schema, &path.display().to_string(), MIN_ROWS)
}

/// `rᵢ = log(pᵢ₊₁ / pᵢ)`, optionally negated.
pub fn log_returns(prices: &[f64], negate: bool) -> Result<Vec<f64>> {
    if let Some(p) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain(format!("log returns need positive prices, found {p}")));
    }
    let sign = if negate { -1.0 } else { 1.0 };
    Ok(prices.windows(2).map(|w| sign * (w[1] / w[0]).ln()).collect())
}

/// Reads one positive weight per line (a header line is allowed).
pub fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next_back().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-numeric weight '{field}'"),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fred_missing_values_are_dropped() {
        let text = "DATE,VALUE\n2020-01-01,100\n2020-01-02,.\n2020-01-03,101\n";
        let d = parse_timeseries_str(text, &Schema::Fred, "mem", 1).unwrap();
        assert_eq!(d.y, vec![100.0, 101.0]);
        assert_eq!(d.provenance.dropped_rows, 1);
        assert_eq!(d.timestamps.unwrap(), vec!["2020-01-01", "2020-01-03"]);
    }

    #[test]
    fn non_numeric_value_reports_its_line() {
        let text = "DATE,VALUE\n2020-01-01,100\n2020-01-02,abc\n";
        match parse_timeseries_str(text, &Schema::Fred, "mem", 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let text = "DATE,VALUE\n2020-01-01,100\n";
        assert!(matches!(
            parse_timeseries_str(text, &Schema::Fred, "mem", MIN_ROWS),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn generic_columns_round_trip() {
        let text = "t,y,x\n1,0.125,3.5\n2,-1e-3,4\n";
        let schema = Schema::Generic {
            response: "y".into(),
            regressors: vec!["x".into()],
        };
        let d = parse_timeseries_str(text, &schema, "mem", 1).unwrap();
        assert_eq!(d.y, vec![0.125, -1e-3]);
        assert_eq!(d.regressors, vec![vec![3.5], vec![4.0]]);
        let x = d.design_with_intercept();
        assert_eq!((x.nrows(), x.ncols()), (2, 2));
        let missing = Schema::Generic {
            response: "z".into(),
            regressors: vec![],
        };
        assert!(parse_timeseries_str(text, &missing, "mem", 1).is_err());
    }

    #[test]
    fn log_return_examples() {
        let e = std::f64::consts::E;
        assert!((log_returns(&[1.0, e], false).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((log_returns(&[1.0, e], true).unwrap()[0] + 1.0).abs() < 1e-15);
        assert!(matches!(log_returns(&[1.0, 0.0, 2.0], false), Err(Error::Domain(_))));
    }

    #[test]
    fn vendored_snapshot_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/NASDAQCOM_2013_2018.csv");
        let d = parse_timeseries_csv(&path, &Schema::Fred).unwrap();
        assert_eq!(d.len(), 1510);
        assert!(d.y.iter().all(|v| *v > 0.0));
    }
}
