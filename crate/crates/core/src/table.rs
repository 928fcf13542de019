//! Row-aligned observations `(X, D, Y, U)` and their CSV form.
//!
//! On disk the header is `x1..x{d_x},d,y,u1..u{d_u}`; `d` is written as
//! `0`/`1` and floats use the shortest round-trip decimal representation.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{NeteError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    x: Array2<f64>,
    d: Array1<f64>,
    y: Array1<f64>,
    u: Array2<f64>,
}

/// l1 norm of a nonnegative noise vector.
pub fn l1_norm(u: ArrayView1<'_, f64>) -> f64 {
    u.iter().map(|v| v.abs()).sum()
}

impl ObservationTable {
    pub fn new(x: Array2<f64>, d: Array1<f64>, y: Array1<f64>, u: Array2<f64>) -> Result<Self> {
        let n = x.nrows();
        if d.len() != n || y.len() != n || u.nrows() != n {
            return Err(NeteError::InvalidTable(format!(
                "column lengths differ: X {}, D {}, Y {}, U {}",
                n,
                d.len(),
                y.len(),
                u.nrows()
            )));
        }
        if u.ncols() == 0 {
            return Err(NeteError::InvalidTable("U needs at least one column".into()));
        }
        if let Some(i) = d.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(NeteError::InvalidTable(format!(
                "treatment must be 0 or 1, row {i} has {}",
                d[i]
            )));
        }
        if let Some(v) = u.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(NeteError::InvalidTable(format!(
                "noise entries must be finite and positive, found {v}"
            )));
        }
        if let Some(v) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
            return Err(NeteError::InvalidTable(format!("non-finite value {v}")));
        }
        Ok(Self { x, d, y, u })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_u(&self) -> usize {
        self.u.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn d(&self) -> &Array1<f64> {
        &self.d
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn norms(&self) -> Vec<f64> {
        self.u.rows().into_iter().map(l1_norm).collect()
    }

    /// Noise directions `U / ||U||` (rows on the unit l1 simplex).
    pub fn angles(&self) -> Array2<f64> {
        let mut s = self.u.clone();
        for mut row in s.rows_mut() {
            let norm = l1_norm(row.view());
            row.mapv_inplace(|v| v / norm);
        }
        s
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            d: self.d.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            u: self.u.select(Axis(0), rows),
        }
    }

    /// Rows with `||U|| > t`.
    pub fn exceedances(&self, t: f64) -> Self {
        let rows: Vec<usize> = self
            .norms()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > t)
            .map(|(i, _)| i)
            .collect();
        self.select(&rows)
    }

    pub fn header(&self) -> Vec<String> {
        (1..=self.d_x())
            .map(|j| format!("x{j}"))
            .chain(["d".to_string(), "y".to_string()])
            .chain((1..=self.d_u()).map(|j| format!("u{j}")))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        let mut record = Vec::with_capacity(self.d_x() + 2 + self.d_u());
        for i in 0..self.len() {
            record.clear();
            record.extend(self.x.row(i).iter().map(|v| v.to_string()));
            record.push(if self.d[i] == 1.0 { "1" } else { "0" }.to_string());
            record.push(self.y[i].to_string());
            record.extend(self.u.row(i).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| NeteError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| NeteError::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R, source: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let layout = Layout::from_header(&header, source)?;

        let mut x = Vec::new();
        let mut d = Vec::new();
        let mut y = Vec::new();
        let mut u = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let line = row as u64 + 2;
            let record = record?;
            if record.len() != header.len() {
                return Err(NeteError::Parse {
                    path: source.to_path_buf(),
                    line,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let parse = |idx: usize| -> Result<f64> {
                record[idx].parse::<f64>().map_err(|_| NeteError::Parse {
                    path: source.to_path_buf(),
                    line,
                    message: format!("column `{}`: cannot parse `{}`", &header[idx], &record[idx]),
                })
            };
            for &c in &layout.x {
                x.push(parse(c)?);
            }
            let dv = parse(layout.d)?;
            if dv != 0.0 && dv != 1.0 {
                return Err(NeteError::Parse {
                    path: source.to_path_buf(),
                    line,
                    message: format!("treatment must be 0 or 1, found {dv}"),
                });
            }
            d.push(dv);
            y.push(parse(layout.y)?);
            for &c in &layout.u {
                u.push(parse(c)?);
            }
        }
        let n = y.len();
        let shape_err = |e: ndarray::ShapeError| NeteError::InvalidTable(e.to_string());
        Self::new(
            Array2::from_shape_vec((n, layout.x.len()), x).map_err(shape_err)?,
            Array1::from(d),
            Array1::from(y),
            Array2::from_shape_vec((n, layout.u.len()), u).map_err(shape_err)?,
        )
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| NeteError::io(path, e))?;
        Self::read_csv(file, path)
    }
}

struct Layout {
    x: Vec<usize>,
    d: usize,
    y: usize,
    u: Vec<usize>,
}

impl Layout {
    fn from_header(header: &csv::StringRecord, source: &Path) -> Result<Self> {
        let bad = |message: String| NeteError::Parse {
            path: source.to_path_buf(),
            line: 1,
            message,
        };
        let numbered = |prefix: &str| -> Vec<(usize, usize)> {
            let mut cols: Vec<(usize, usize)> = header
                .iter()
                .enumerate()
                .filter_map(|(i, name)| {
                    name.strip_prefix(prefix)
                        .and_then(|rest| rest.parse::<usize>().ok())
                        .map(|num| (num, i))
                })
                .collect();
            cols.sort_unstable();
            cols
        };
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| bad(format!("missing column `{name}`")))
        };
        let x = numbered("x");
        let u = numbered("u");
        for (cols, prefix) in [(&x, "x"), (&u, "u")] {
            if cols.iter().enumerate().any(|(pos, (num, _))| *num != pos + 1) {
                return Err(bad(format!("columns {prefix}1..{prefix}k must be contiguous")));
            }
        }
        if u.is_empty() {
            return Err(bad("missing noise columns u1..".into()));
        }
        let layout = Layout {
            x: x.into_iter().map(|(_, i)| i).collect(),
            d: find("d")?,
            y: find("y")?,
            u: u.into_iter().map(|(_, i)| i).collect(),
        };
        let used = layout.x.len() + layout.u.len() + 2;
        if used != header.len() {
            return Err(bad(format!("unexpected extra columns in header ({} used of {})", used, header.len())));
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> ObservationTable {
        ObservationTable::new(
            array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]],
            array![1.0, 0.0, 1.0],
            array![2.5, -1.0, 1e-17],
            array![[1.0, 3.0], [0.5, 0.5], [10.0, 2.0]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_columns() {
        let t = small();
        assert!(ObservationTable::new(t.x.clone(), array![1.0, 2.0, 0.0], t.y.clone(), t.u.clone()).is_err());
        assert!(ObservationTable::new(t.x.clone(), t.d.clone(), t.y.clone(), array![[1.0], [0.0], [1.0]]).is_err());
        assert!(ObservationTable::new(t.x.clone(), array![1.0, 0.0], t.y.clone(), t.u.clone()).is_err());
    }

    #[test]
    fn norms_angles_and_tail() {
        let t = small();
        assert_eq!(t.norms(), vec![4.0, 1.0, 12.0]);
        let s = t.angles();
        for row in s.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
        let tail = t.exceedances(1.0);
        assert_eq!(tail.len(), 2);
        assert_eq!(tail.y()[0], 2.5);
        assert_eq!(t.exceedances(12.0).len(), 0);
    }

    #[test]
    fn csv_round_trip() {
        let t = small();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,d,y,u1,u2\n"));
        let back = ObservationTable::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let src = "x1,d,y,u1\n0.1,1,2,3\n0.2,1,oops,3\n";
        let err = ObservationTable::read_csv(src.as_bytes(), Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, NeteError::Parse { line: 3, .. }), "{err}");
        let src = "x1,d,y,u1\n0.1,2,2,3\n";
        assert!(ObservationTable::read_csv(src.as_bytes(), Path::new("t.csv")).is_err());
        let src = "x1,d,y\n0.1,1,2\n";
        assert!(ObservationTable::read_csv(src.as_bytes(), Path::new("t.csv")).is_err());
    }
}
