use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::Result;

/// Shortest representation that parses back to the same `f64`.
///
/// Positional notation in the usual range, exponent notation outside it so
/// tiny and huge values stay short.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn csv_line<S: AsRef<str>>(fields: impl IntoIterator<Item = S>) -> String {
    let mut line = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(f.as_ref());
    }
    line.push('\n');
    line
}

pub fn csv_document(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = csv_line(header);
    for row in rows {
        out.push_str(&csv_line(row.into_iter().map(format_number)));
    }
    out
}

/// Left-aligned first column, right-aligned numeric columns.
pub fn aligned_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut emit = |cells: &[String]| {
        for (i, cell) in cells.iter().enumerate().take(cols) {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[i]);
            }
        }
        out.push('\n');
    };
    emit(header);
    for row in rows {
        emit(row);
    }
    out
}

/// Writes `contents` to `path` through a temporary file in the same directory,
/// so the destination is either absent or complete.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes to `path` when given, otherwise to stdout.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Parses CSV produced by [`csv_document`] back into a header and rows.
pub fn parse_csv(text: &str) -> std::result::Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or("empty document")?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|_| format!("row {}: bad number '{f}'", i + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if row.len() != header.len() {
            return Err(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                row.len(),
                header.len()
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_formats() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1000.0), "1000");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(1e-100), "1e-100");
        assert_eq!(format_number(-2.5e20), "-2.5e20");
    }

    proptest! {
        #[test]
        fn numbers_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            prop_assert_eq!(format_number(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }

        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 12)) {
            let header: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
            let rows: Vec<Vec<f64>> = values.chunks(3).map(<[f64]>::to_vec).collect();
            let text = csv_document(&header, rows.clone());
            let (h, parsed) = parse_csv(&text).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(parsed, rows);
        }
    }

    #[test]
    fn table_alignment() {
        let t = aligned_table(
            &["a".into(), "value".into()],
            &[vec!["long name".into(), "1".into()], vec!["x".into(), "22".into()]],
        );
        assert_eq!(t, "a          value\nlong name      1\nx             22\n");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, "a\n1\n").unwrap();
        write_atomic(&path, "b\n2\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "b\n2\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(&dir.path().join("missing/out.csv"), "x").is_err());
    }
}
