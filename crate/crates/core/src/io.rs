//! CSV interchange.
//!
//! - Dataset: header `s1[,s2],y,x_1..x_p`.
//! - Truth sidecar: header `s1[,s2],w0`.
//! - Predictions: header `s1[,s2],y_mean,y_median,y_lo95,y_hi95,w_mean,w_lo95,w_hi95,w_median`,
//!   plus `p_mean` for probit fits.

use std::path::Path;

use nalgebra::DMatrix;

use crate::predict::PredictionDraws;
use crate::{Coord, Error, Result};

/// Raw columns of a dataset file, before model-specific validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub dim: usize,
    pub locations: Vec<Coord>,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn dim_of(header: &csv::StringRecord, path: &Path) -> Result<usize> {
    match (header.get(0), header.get(1)) {
        (Some("s1"), Some("s2")) => Ok(2),
        (Some("s1"), Some(_)) => Ok(1),
        _ => Err(Error::Data(format!("{}: header must start with s1[,s2]", path.display()))),
    }
}

fn parse(field: &str, row: usize, path: &Path) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("{}: row {row}: bad number '{field}'", path.display())))
}

fn coord(values: &[f64], dim: usize) -> Coord {
    if dim == 2 {
        [values[0], values[1]]
    } else {
        [values[0], 0.0]
    }
}

/// Read a dataset file.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?.clone();
    let dim = dim_of(&header, path)?;
    if header.get(dim) != Some("y") {
        return Err(Error::Data(format!("{}: expected column 'y' after the coordinates", path.display())));
    }
    let p = header.len() - dim - 1;
    for (k, name) in header.iter().skip(dim + 1).enumerate() {
        if name != format!("x_{}", k + 1) {
            return Err(Error::Data(format!("{}: expected predictor column 'x_{}', found '{name}'", path.display(), k + 1)));
        }
    }
    let mut locations = Vec::new();
    let mut y = Vec::new();
    let mut xs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec.iter().map(|f| parse(f, row + 1, path)).collect::<Result<_>>()?;
        locations.push(coord(&vals, dim));
        y.push(vals[dim]);
        xs.extend_from_slice(&vals[dim + 1..]);
    }
    let n = y.len();
    Ok(Table { dim, locations, y, x: DMatrix::from_row_slice(n, p, &xs) })
}

fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|a| format!("s{a}")).collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}

fn push_coord(rec: &mut Vec<String>, s: &Coord, dim: usize) {
    rec.extend(s[..dim].iter().map(|v| v.to_string()));
}

/// Write a dataset file.
pub fn write_table(path: &Path, dim: usize, locations: &[Coord], y: &[f64], x: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = coord_header(dim);
    header.push("y".into());
    header.extend((1..=x.ncols()).map(|k| format!("x_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..y.len() {
        let mut rec = Vec::with_capacity(header.len());
        push_coord(&mut rec, &locations[i], dim);
        rec.push(y[i].to_string());
        rec.extend(x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a truth sidecar.
pub fn write_truth(path: &Path, dim: usize, locations: &[Coord], w0: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = coord_header(dim);
    header.push("w0".into());
    w.write_record(&header).map_err(csv_err)?;
    for (s, v) in locations.iter().zip(w0) {
        let mut rec = Vec::with_capacity(dim + 1);
        push_coord(&mut rec, s, dim);
        rec.push(v.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a truth sidecar: locations and `w0`.
pub fn read_truth(path: &Path) -> Result<(Vec<Coord>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?.clone();
    let dim = dim_of(&header, path)?;
    if header.len() != dim + 1 || header.get(dim) != Some("w0") {
        return Err(Error::Data(format!("{}: truth file must be s1[,s2],w0", path.display())));
    }
    let mut locs = Vec::new();
    let mut w0 = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec.iter().map(|f| parse(f, row + 1, path)).collect::<Result<_>>()?;
        locs.push(coord(&vals, dim));
        w0.push(vals[dim]);
    }
    Ok((locs, w0))
}

/// Write prediction summaries; `p_mean` is appended when `probit` is set.
pub fn write_predictions(path: &Path, dim: usize, draws: &PredictionDraws, probit: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = coord_header(dim);
    header.extend(
        ["y_mean", "y_median", "y_lo95", "y_hi95", "w_mean", "w_lo95", "w_hi95", "w_median"].map(String::from),
    );
    if probit {
        header.push("p_mean".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..draws.len() {
        let ys = draws.y_summary(i)?;
        let ws = draws.w_summary(i)?;
        let mut rec = Vec::with_capacity(header.len());
        push_coord(&mut rec, &draws.locations[i], dim);
        for v in [ys.mean, ys.median, ys.lo95, ys.hi95, ws.mean, ws.lo95, ws.hi95, ws.median] {
            rec.push(v.to_string());
        }
        if probit {
            rec.push(draws.p_mean(i).to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Named columns of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub dim: usize,
    pub locations: Vec<Coord>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl PredictionTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| &v[..])
    }
}

pub fn read_predictions(path: &Path) -> Result<PredictionTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?.clone();
    let dim = dim_of(&header, path)?;
    let mut columns: Vec<(String, Vec<f64>)> = header.iter().skip(dim).map(|h| (h.to_string(), Vec::new())).collect();
    let mut locations = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec.iter().map(|f| parse(f, row + 1, path)).collect::<Result<_>>()?;
        locations.push(coord(&vals, dim));
        for (k, col) in columns.iter_mut().enumerate() {
            col.1.push(vals[dim + k]);
        }
    }
    Ok(PredictionTable { dim, locations, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, -0.25]);
        let locs = vec![[0.1, 0.2], [0.3, 0.4]];
        write_table(&path, 2, &locs, &[1.5, 1e-300], &x).unwrap();
        let t = read_table(&path).unwrap();
        assert_eq!((t.dim, t.locations, t.y, t.x), (2, locs, vec![1.5, 1e-300], x));
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("s1,s2,y,x_1,x_2\n"));
    }

    #[test]
    fn one_dimensional_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_truth(&path, 1, &[[2.0, 0.0]], &[0.75]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "s1,w0\n2,0.75\n");
        assert_eq!(read_truth(&path).unwrap(), (vec![[2.0, 0.0]], vec![0.75]));
    }

    #[test]
    fn malformed_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Data(_))));
        std::fs::write(&path, "s1,y,x_1\n0.5,abc,1\n").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Data(_))));
        std::fs::write(&path, "s1,y,x_2\n0.5,1,1\n").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Data(_))));
        assert!(matches!(read_table(&dir.path().join("missing.csv")), Err(Error::Data(_))));
    }
}
