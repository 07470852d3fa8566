use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DataError, SeriesMatrix};

/// `data.csv` -> `data.labels.csv`.
pub fn label_path_for(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.labels.{}", ext.to_string_lossy()),
        None => format!("{stem}.labels"),
    };
    path.with_file_name(name)
}

/// Writes a `t,<col>...` table with one row per timestep. Values are printed
/// in shortest round-trip form, so reading them back is lossless.
pub fn write_matrix_csv<T: std::fmt::Display>(
    path: &Path,
    columns: &[String],
    rows_by_time: impl Iterator<Item = Vec<T>>,
) -> Result<(), DataError> {
    let mut out = String::from("t");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (t, row) in rows_by_time.enumerate() {
        write!(out, "{t}").unwrap();
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Saves values to `path` and, when present, labels to [`label_path_for`].
pub fn save_csv(series: &SeriesMatrix, path: &Path) -> Result<(), DataError> {
    let v = series.values();
    write_matrix_csv(
        path,
        series.series_ids(),
        (0..series.len()).map(|t| v.column(t).to_vec()),
    )?;
    if let Some(l) = series.labels() {
        write_matrix_csv(
            &label_path_for(path),
            series.series_ids(),
            (0..series.len()).map(|t| l.column(t).to_vec()),
        )?;
    }
    Ok(())
}

fn parse_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), DataError> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let err = |line: usize, msg: String| DataError::Parse {
        path: name.clone(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header".into()))?;
    let mut cols = header.split(',').map(|c| c.trim().to_string());
    if cols.next().as_deref() != Some("t") {
        return Err(err(1, "first header column must be `t`".into()));
    }
    let ids: Vec<String> = cols.collect();
    if ids.is_empty() {
        return Err(err(1, "no series columns".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != ids.len() + 1 {
            return Err(err(
                i + 1,
                format!("expected {} fields, found {}", ids.len() + 1, fields.len()),
            ));
        }
        rows.push(fields[1..].to_vec());
    }
    if rows.is_empty() {
        return Err(err(2, "no data rows".into()));
    }
    Ok((ids, rows))
}

fn parse_cells<T: std::str::FromStr>(
    path: &Path,
    rows: &[Vec<String>],
    m: usize,
) -> Result<Array2<T>, DataError> {
    let t = rows.len();
    let mut cells = Vec::with_capacity(m * t);
    for i in 0..m {
        for (j, row) in rows.iter().enumerate() {
            let v = row[i].parse::<T>().map_err(|_| DataError::Parse {
                path: path.display().to_string(),
                line: j + 2,
                msg: format!("cannot parse {:?}", row[i]),
            })?;
            cells.push(v);
        }
    }
    Ok(Array2::from_shape_vec((m, t), cells).expect("m x t"))
}

/// Loads a series matrix and its sibling label file if one exists.
pub fn load_csv(path: &Path) -> Result<SeriesMatrix, DataError> {
    let (ids, rows) = parse_table(path)?;
    let m = ids.len();
    let values: Array2<f64> = parse_cells(path, &rows, m)?;
    if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(DataError::Parse {
            path: path.display().to_string(),
            line: idx.1 + 2,
            msg: format!("non-finite value {v}"),
        });
    }
    let mut series = SeriesMatrix::with_ids(values, ids.clone())?;
    let lpath = label_path_for(path);
    if lpath.exists() {
        let (lids, lrows) = parse_table(&lpath)?;
        if lids != ids || lrows.len() != rows.len() {
            return Err(DataError::Shape(format!(
                "label file {} does not match {}",
                lpath.display(),
                path.display()
            )));
        }
        let labels: Array2<u8> = parse_cells(&lpath, &lrows, m)?;
        series.set_labels(Some(labels))?;
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let values = Array2::from_shape_fn((3, 7), |(i, j)| {
            (i as f64 + 0.1).powf(j as f64 * 1.37) - 1e-300
        });
        let labels = Array2::from_shape_fn((3, 7), |(i, j)| ((i + j) % 3 == 0) as u8);
        let s = SeriesMatrix::new(values)
            .unwrap()
            .with_labels(labels)
            .unwrap();
        save_csv(&s, &path).unwrap();
        assert!(dir.path().join("d.labels.csv").exists());
        assert_eq!(load_csv(&path).unwrap(), s);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,a,b\n0,1,2\n1,3\n").unwrap();
        match load_csv(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "t,a\n0,1\n1,xyz\n").unwrap();
        match load_csv(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "x,a\n0,1\n").unwrap();
        assert!(load_csv(&path).is_err());
    }
}
