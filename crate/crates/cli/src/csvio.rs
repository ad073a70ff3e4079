//! CSV matrix I/O: rows are observations, values are written with 17
//! significant digits so reading a written file reproduces every bit.
//! Writes go to a temp file in the target directory and are renamed into
//! place, so failures never leave partial output.

use equicorr::Mat;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub fn read_matrix(path: &Path, header: bool) -> Result<Mat<f64>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        if i == 0 && header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| {
                    format!("{}: line {}: '{}' is not a number", path.display(), i + 1, tok.trim())
                })
            })
            .collect::<Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(format!(
                    "{}: line {} has {} fields, expected {w}",
                    path.display(),
                    i + 1,
                    row.len()
                ));
            }
            _ => {}
        }
        rows.push(row);
    }
    let w = width.ok_or_else(|| format!("{}: no data rows", path.display()))?;
    if w == 0 {
        return Err(format!("{}: empty rows", path.display()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(rows.len(), w, &flat))
}

pub fn format_matrix(m: &Mat<f64>, header: bool) -> String {
    let mut out = String::new();
    if header {
        let names: Vec<String> = (0..m.ncols()).map(|k| format!("c{k}")).collect();
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn write_atomic(path: &Path, content: &str) -> Result<(), String> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| format!("cannot create temp file in {}: {e}", dir.display()))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    tmp.persist(path).map_err(|e| format!("cannot move into {}: {e}", path.display()))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &Mat<f64>, header: bool) -> Result<(), String> {
    write_atomic(path, &format_matrix(m, header))
}
