//! Trajectory CSV files (`t,x1,…,xD`) and their JSON metadata sidecar.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeSeries;
use crate::error::{Error, Result};

/// Optional provenance stored next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SeriesMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `data.csv` → `data.meta.json`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses trajectory CSV text. `origin` only labels error messages.
pub fn parse_csv(reader: impl Read, origin: &Path) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_error(origin, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"t") || names.len() < 2 {
        return Err(parse_error(origin, 1, "header must be `t,x1,...,xD`"));
    }
    for (j, name) in names.iter().enumerate().skip(1) {
        if *name != format!("x{j}") {
            return Err(parse_error(
                origin,
                1,
                format!("column {} must be named `x{j}`, found `{name}`", j + 1),
            ));
        }
    }
    let dim = names.len() - 1;
    let mut t = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
            parse_error(origin, line, e.to_string())
        })?;
        if record.len() != dim + 1 {
            return Err(parse_error(
                origin,
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_error(
                    origin,
                    line,
                    format!("field {} is not a number: `{field}`", j + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    origin,
                    line,
                    format!("field {} is not finite", j + 1),
                ));
            }
            if j == 0 {
                if let Some(&prev) = t.last() {
                    if v <= prev {
                        return Err(parse_error(
                            origin,
                            line,
                            format!("time {v} does not increase past {prev}"),
                        ));
                    }
                }
                t.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if t.is_empty() {
        return Err(parse_error(origin, 2, "no data rows"));
    }
    let x = DMatrix::from_row_slice(t.len(), dim, &values);
    TimeSeries::clean(t, x)
}

/// Reads a trajectory CSV; `sigma_x2` is zero (unknown).
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, path)
}

/// Writes `t,x1,…,xD` with shortest round-trip float formatting.
pub fn write_csv(ts: &TimeSeries, mut out: impl Write) -> std::io::Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=ts.dim()).map(|j| format!("x{j}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..ts.len() {
        write!(out, "{}", ts.t[i])?;
        for j in 0..ts.dim() {
            write!(out, ",{}", ts.x[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_csv(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_csv(ts, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_metadata(text: &str) -> Result<SeriesMetadata> {
    let meta: SeriesMetadata = serde_json::from_str(text)?;
    if let Some(s) = meta.sigma_x {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::invalid("sigma_x must be finite and nonnegative"));
        }
    }
    Ok(meta)
}

pub fn save_metadata(meta: &SeriesMetadata, csv: impl AsRef<Path>) -> Result<()> {
    let path = metadata_path(csv.as_ref());
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Sidecar next to `csv`, if present.
pub fn load_metadata(csv: impl AsRef<Path>) -> Result<Option<SeriesMetadata>> {
    let path = metadata_path(csv.as_ref());
    match fs::read_to_string(&path) {
        Ok(text) => parse_metadata(&text).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TimeSeries> {
        parse_csv(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn parses_minimal_file() {
        let ts = parse("t,x1,x2\n0,1.5,-2\n0.5,3,4e-3\n").unwrap();
        assert_eq!(ts.t, vec![0.0, 0.5]);
        assert_eq!(ts.x[(1, 1)], 4e-3);
        assert!(ts.sigma_x2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reports_line_numbers() {
        match parse("t,x1\n0,1\n1,abc\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("t,x1\n0,1\n0,2\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("does not increase"));
            }
            other => panic!("{other:?}"),
        }
        match parse("t,x1\n0,1\n1,2,3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(parse("time,x1\n0,1\n").is_err());
        assert!(parse("t,x2\n0,1\n").is_err());
        assert!(parse("t\n0\n").is_err());
        assert!(parse("t,x1\n").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn metadata_validation() {
        assert_eq!(parse_metadata("{}").unwrap(), SeriesMetadata::default());
        assert!(parse_metadata(r#"{"sigma_x": -1}"#).is_err());
        assert!(parse_metadata(r#"{"sigma": 1}"#).is_err());
        let m = parse_metadata(r#"{"system": "lorenz", "sigma_x": 0.2, "seed": 7}"#).unwrap();
        assert_eq!(m.seed, Some(7));
    }
}
