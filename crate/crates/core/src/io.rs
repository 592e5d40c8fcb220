//! Matrix files (MatrixMarket and CSV), run manifests and JSON reports.
//!
//! Numbers are written with 17 significant digits, so a write followed by a
//! read reproduces every finite double exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::metrics::ClusterMetrics;
use crate::types::{ContractStats, Mat, Termination};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Mm,
    Csv,
}

impl Format {
    /// `.csv` means CSV, anything else MatrixMarket.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Mm,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Mm => "mm",
            Format::Csv => "csv",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mm" => Ok(Format::Mm),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format '{other}', expected mm or csv"))),
        }
    }
}

/// Reads a dense matrix; the format defaults to the file extension.
pub fn read_matrix(path: &Path, format: Option<Format>) -> Result<Mat> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Mm => parse_matrix_market(BufReader::new(file)),
        Format::Csv => parse_csv(file),
    }
}

/// Writes a dense matrix; the format defaults to the file extension.
pub fn write_matrix(path: &Path, m: &Mat, format: Option<Format>) -> Result<()> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    atomic_write(path, |w| match format {
        Format::Mm => write_matrix_market(w, m),
        Format::Csv => write_csv(w, m),
    })
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.trim().parse().map_err(|_| Error::Parse { line, msg: format!("'{token}' is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite entry '{token}'") });
    }
    Ok(v)
}

fn parse_index(token: &str, bound: usize, line: usize) -> Result<usize> {
    let i: usize = token.parse().map_err(|_| Error::Parse { line, msg: format!("'{token}' is not an index") })?;
    if i == 0 || i > bound {
        return Err(Error::Parse { line, msg: format!("index {i} outside 1..={bound}") });
    }
    Ok(i - 1)
}

/// Parses MatrixMarket `array` or `coordinate` files of real general
/// matrices.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<Mat> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse { line: 1, msg: "missing '%%MatrixMarket matrix' header".into() });
    }
    let dense = match fields[2].as_str() {
        "array" => true,
        "coordinate" => false,
        other => return Err(Error::Parse { line: 1, msg: format!("unsupported layout '{other}'") }),
    };
    if !matches!(fields[3].as_str(), "real" | "integer" | "double") || fields[4] != "general" {
        return Err(Error::Parse { line: 1, msg: format!("unsupported type '{} {}'", fields[3], fields[4]) });
    }
    let mut body = Vec::new();
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('%') {
            body.push((no, t.to_string()));
        }
    }
    let mut body = body.into_iter();
    let (size_line, size) = body.next().ok_or(Error::Parse { line: 1, msg: "missing size line".into() })?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let dim = |i: usize| -> Result<usize> {
        dims.get(i)
            .and_then(|t| t.parse().ok())
            .ok_or(Error::Parse { line: size_line, msg: format!("bad size line '{size}'") })
    };
    let (n, k) = (dim(0)?, dim(1)?);
    let mut m = Mat::zeros(n, k);
    if dense {
        if dims.len() != 2 {
            return Err(Error::Parse { line: size_line, msg: "array size line needs 2 fields".into() });
        }
        let mut count = 0;
        for (no, t) in body {
            if count >= n * k {
                return Err(Error::Parse { line: no, msg: "too many entries".into() });
            }
            m[(count % n, count / n)] = parse_value(&t, no)?;
            count += 1;
        }
        if count != n * k {
            return Err(Error::DimensionMismatch(format!("expected {} entries, found {count}", n * k)));
        }
    } else {
        let nnz = dim(2)?;
        let mut count = 0;
        for (no, t) in body {
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse { line: no, msg: "expected 'row col value'".into() });
            }
            let i = parse_index(parts[0], n, no)?;
            let j = parse_index(parts[1], k, no)?;
            m[(i, j)] = parse_value(parts[2], no)?;
            count += 1;
        }
        if count != nnz {
            return Err(Error::DimensionMismatch(format!("expected {nnz} entries, found {count}")));
        }
    }
    Ok(m)
}

fn parse_csv<R: std::io::Read>(reader: R) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record.iter().map(|f| parse_value(f, line)).collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse { line, msg: format!("{} fields, expected {}", row.len(), first.len()) });
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(n, k, |i, j| rows[i][j]))
}

fn write_matrix_market<W: Write>(w: &mut W, m: &Mat) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

fn write_csv<W: Write>(w: &mut W, m: &Mat) -> Result<()> {
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn atomic_write(path: &Path, body: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// `dir/stem.tag.ext` next to `path`, used for companion matrices such as
/// the known solution of a generated instance.
pub fn companion_path(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("mm");
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

/// What was run, echoed into every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Generator parameters or input paths.
    pub instance: serde_json::Value,
    pub preset: Option<String>,
    pub overrides: serde_json::Value,
    pub seeds: Vec<u64>,
    pub output: Option<String>,
}

/// The JSON document written for a single solve.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub objective: f64,
    pub zeta: f64,
    pub feasi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ClusterMetrics>,
    pub iterations: Iterations,
    pub seconds: f64,
    pub termination: Termination,
    pub contracts: ContractStats,
    pub manifest: RunManifest,
}

#[derive(Clone, Debug, Serialize)]
pub struct Iterations {
    pub outer: usize,
    pub inner: usize,
}

/// Writes any serializable value as one pretty JSON document.
pub fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::identity_nk;
    use proptest::prelude::*;

    #[test]
    fn csv_identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.csv");
        std::fs::write(&p, "1,0\n0,1\n").unwrap();
        let m = read_matrix(&p, None).unwrap();
        assert_eq!(m, Mat::identity(2, 2));
        write_matrix(&p, &m, None).unwrap();
        assert_eq!(read_matrix(&p, None).unwrap(), m);
    }

    #[test]
    fn coordinate_form() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n3 2 2\n1 1 1.0\n2 2 1.0\n";
        let m = parse_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(m, identity_nk(3, 2));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "%%MatrixMarket matrix array real general\n2 1\n1.0\nNaN\n";
        assert_eq!(parse_matrix_market(text.as_bytes()).unwrap_err(), Error::Parse { line: 4, msg: "non-finite entry 'NaN'".into() });
        let err = parse_csv("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        assert!(matches!(parse_csv("1,2\n3\n".as_bytes()), Err(Error::Parse { line: 2, .. })));
        let short = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n";
        assert!(matches!(parse_matrix_market(short.as_bytes()), Err(Error::DimensionMismatch(_))));
        assert!(parse_matrix_market("%%MatrixMarket matrix array real symmetric\n1 1\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn companion_names() {
        assert_eq!(companion_path(Path::new("/t/inst.mm"), "xstar"), PathBuf::from("/t/inst.xstar.mm"));
    }

    proptest! {
        #[test]
        fn bit_identical_round_trip(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 6)) {
            let m = Mat::from_column_slice(3, 2, &vals);
            let dir = tempfile::tempdir().unwrap();
            for name in ["m.mm", "m.csv"] {
                let p = dir.path().join(name);
                write_matrix(&p, &m, None).unwrap();
                let back = read_matrix(&p, None).unwrap();
                prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }
}
