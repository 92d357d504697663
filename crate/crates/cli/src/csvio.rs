//! Comma-separated time-series files: one header row, first column a period
//! label, remaining columns numeric.

use std::path::Path;

use nalgebra::DMatrix;
use setid_core::moments::SurveySeries;

use crate::error::{io_err, CliError};

#[derive(Debug, Clone)]
pub struct TimeSeriesFile {
    pub periods: Vec<String>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl TimeSeriesFile {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Loads a numeric time-series file; NaN and non-numeric cells are rejected.
pub fn load_timeseries(path: &Path) -> Result<TimeSeriesFile, CliError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(io_err(&display))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(CliError::RaggedRows { path: display, row: 1, expected: 2, got: 0 });
    };
    let header_cells: Vec<&str> = header.split(',').map(str::trim).collect();
    if header_cells.len() < 2 {
        return Err(CliError::RaggedRows {
            path: display,
            row: 1,
            expected: 2,
            got: header_cells.len(),
        });
    }
    let names: Vec<String> = header_cells[1..].iter().map(|s| s.to_string()).collect();
    let n_cols = names.len();

    let mut periods = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols + 1 {
            return Err(CliError::RaggedRows {
                path: display,
                row: row_no,
                expected: n_cols + 1,
                got: cells.len(),
            });
        }
        periods.push(cells[0].to_string());
        let mut row = Vec::with_capacity(n_cols);
        for (c, cell) in cells[1..].iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| CliError::NonNumericCell {
                path: display.clone(),
                row: row_no,
                col: c + 2,
                text: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(CliError::NonNumericCell {
                    path: display.clone(),
                    row: row_no,
                    col: c + 2,
                    text: cell.to_string(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    let t_len = rows.len();
    let mut values = DMatrix::<f64>::zeros(t_len, n_cols);
    for (t, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            values[(t, c)] = *v;
        }
    }
    Ok(TimeSeriesFile { periods, names, values })
}

/// Loads one survey question column, validating shares into [0, 1].
pub fn load_survey(
    path: &Path,
    question: &str,
    target_observables: Vec<usize>,
) -> Result<SurveySeries, CliError> {
    let display = path.display().to_string();
    let file = load_timeseries(path)?;
    let Some(col) = file.column(question) else {
        return Err(CliError::MissingColumn { path: display, name: question.to_string() });
    };
    let mut b = Vec::with_capacity(file.values.nrows());
    for t in 0..file.values.nrows() {
        let v = file.values[(t, col)];
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::SurveyOutOfRange {
                path: display.clone(),
                row: t + 2, // header + 1-based
                col: col + 2,
                value: v,
            });
        }
        b.push(v);
    }
    SurveySeries::new(b, question.to_string(), target_observables)
        .map_err(crate::error::core_err("data"))
}

/// Writes a time-series file with generated period labels when none given.
pub fn write_timeseries(
    path: &Path,
    periods: Option<&[String]>,
    names: &[String],
    values: &DMatrix<f64>,
) -> Result<(), CliError> {
    let display = path.display().to_string();
    let mut out = String::new();
    out.push_str("period");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for t in 0..values.nrows() {
        match periods {
            Some(p) => out.push_str(&p[t]),
            None => out.push_str(&format!("t{}", t + 1)),
        }
        for c in 0..values.ncols() {
            out.push(',');
            out.push_str(&format!("{:.17e}", values[(t, c)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(&display))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn small_well_formed_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "period,a,b\n1999Q1,1.0,2.0\n1999Q2,3.0,4.0\n1999Q3,5.0,6.0\n")
            .unwrap();
        let ts = load_timeseries(&path).unwrap();
        assert_eq!(ts.values.nrows(), 3);
        assert_eq!(ts.values.ncols(), 2);
        assert_eq!(ts.values[(2, 1)], 6.0);
        assert_eq!(ts.periods[0], "1999Q1");
    }

    #[test]
    fn ragged_and_non_numeric_rows_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "period,a\nq1,1.0\nq2,1.0,9\n").unwrap();
        match load_timeseries(&path) {
            Err(CliError::RaggedRows { row: 3, expected: 2, got: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "period,a\nq1,1.0\nq2,oops\n").unwrap();
        match load_timeseries(&path) {
            Err(CliError::NonNumericCell { row: 3, col: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "period,a\nq1,NaN\n").unwrap();
        assert!(load_timeseries(&path).is_err());
    }

    #[test]
    fn survey_out_of_range_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "period,q1\nq1,0.5\nq2,1.2\n").unwrap();
        match load_survey(&path, "q1", vec![0]) {
            Err(CliError::SurveyOutOfRange { row: 3, col: 2, value, .. }) => {
                assert!((value - 1.2).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let m = DMatrix::<f64>::from_fn(13, 3, |_, _| rng.random_range(-5.0..5.0));
        let names = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        write_timeseries(&path, None, &names, &m).unwrap();
        let back = load_timeseries(&path).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.values.nrows(), 13);
        for t in 0..13 {
            for c in 0..3 {
                assert_eq!(back.values[(t, c)], m[(t, c)]);
            }
        }
    }
}
