use std::path::Path;

use nalgebra::DVector;

use crate::error::{OssirError, Result};
use crate::kernel::Observation;

/// Observations parsed from a CSV file, with the covariate column names.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub covariates: Vec<String>,
    pub observations: Vec<Observation>,
}

fn parse_error(line: usize, message: impl Into<String>) -> OssirError {
    OssirError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a headed CSV. The response is the column named `target`; every
/// other column is a numeric covariate, in file order.
pub fn read_observations(path: &Path, target: &str) -> Result<CsvData> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(parse_error(1, "empty input: no header row"));
    }
    let Some(target_idx) = headers.iter().position(|h| h == target) else {
        return Err(parse_error(
            1,
            format!("response column '{target}' not found in header"),
        ));
    };
    if headers.len() < 2 {
        return Err(parse_error(1, "need at least one covariate column"));
    }
    let covariates: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut observations = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(parse_error(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut x = Vec::with_capacity(covariates.len());
        let mut y = 0.0;
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_error(line, format!("non-numeric value '{cell}' in column '{}'", &headers[i]))
            })?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("non-finite value in column '{}'", &headers[i])));
            }
            if i == target_idx {
                y = v;
            } else {
                x.push(v);
            }
        }
        observations.push(Observation::new(DVector::from_vec(x), y));
    }
    if observations.is_empty() {
        return Err(parse_error(1, "header present but zero data rows"));
    }
    Ok(CsvData {
        covariates,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_target_column_anywhere() {
        let f = write("a,y,b\n1,2,3\n4,5,6\n");
        let d = read_observations(f.path(), "y").unwrap();
        assert_eq!(d.covariates, vec!["a", "b"]);
        assert_eq!(d.observations[1].x.as_slice(), &[4.0, 6.0]);
        assert_eq!(d.observations[1].y, 5.0);
    }

    #[test]
    fn empty_and_header_only_files_fail() {
        let err = read_observations(write("").path(), "y").unwrap_err();
        assert!(matches!(err, OssirError::Parse { line: 1, .. }), "{err}");
        let err = read_observations(write("x1,y\n").path(), "y").unwrap_err();
        assert!(err.to_string().contains("zero data rows"));
    }

    #[test]
    fn bad_cells_report_their_line() {
        let err = read_observations(write("x1,y\n1,2\n3,abc\n").path(), "y").unwrap_err();
        match err {
            OssirError::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other}"),
        }
        let err = read_observations(write("x1,y\n1,2\n3\n").path(), "y").unwrap_err();
        assert!(matches!(err, OssirError::Parse { line: 3, .. }));
    }

    #[test]
    fn missing_target_is_reported() {
        let err = read_observations(write("a,b\n1,2\n").path(), "y").unwrap_err();
        assert!(err.to_string().contains("'y'"));
    }
}
