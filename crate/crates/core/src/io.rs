//! CSV formats for spheroid lists and section ellipse tables.
//!
//! Angles are in radians. Floats are written in shortest round-trip form,
//! so a written file reads back bit-identically.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data, Error, Result};
use crate::sectioning::SectionEllipse;
use crate::simulate::Spheroid;

/// Largest accepted gap between a stored shape factor and `C/A`.
pub const SHAPE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Serialize, Deserialize)]
struct SpheroidRow {
    cx: f64,
    cy: f64,
    cz: f64,
    ax: f64,
    ay: f64,
    az: f64,
    a: f64,
    c: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
struct EllipseRow {
    id: u64,
    x: f64,
    y: f64,
    A: f64,
    C: f64,
    S: f64,
    alpha: f64,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_err(source: csv::Error) -> Error {
    Error::Csv {
        path: "<output>".into(),
        source,
    }
}

/// Writes `cx, cy, cz, ax, ay, az, a, c` rows.
pub fn write_spheroids<W: Write>(out: W, spheroids: &[Spheroid]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in spheroids {
        w.serialize(SpheroidRow {
            cx: s.center[0],
            cy: s.center[1],
            cz: s.center[2],
            ax: s.axis[0],
            ay: s.axis[1],
            az: s.axis[2],
            a: s.a,
            c: s.c,
        })
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| write_err(e.into()))
}

/// Reads spheroids; `name` labels errors.
pub fn read_spheroids_from<R: Read>(input: R, name: &Path) -> Result<Vec<Spheroid>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| csv_err(name, e))?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: SpheroidRow = rec.deserialize(Some(&headers)).map_err(|e| csv_err(name, e))?;
        let axis = [row.ax, row.ay, row.az];
        let mut s = Spheroid::new([row.cx, row.cy, row.cz], axis, row.a, row.c)
            .map_err(|e| data(format!("{} line {line}: {e}", name.display())))?;
        // keep stored unit axes bit for bit instead of renormalizing them
        if (axis.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12 {
            s.axis = axis;
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_spheroids(path: &Path) -> Result<Vec<Spheroid>> {
    read_spheroids_from(open(path)?, path)
}

/// Writes `id, x, y, A, C, S, alpha` rows with ids counted from one.
pub fn write_ellipses<W: Write>(out: W, ellipses: &[SectionEllipse]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, e) in ellipses.iter().enumerate() {
        w.serialize(EllipseRow {
            id: i as u64 + 1,
            x: e.center[0],
            y: e.center[1],
            A: e.major,
            C: e.minor,
            S: e.shape,
            alpha: e.alpha,
        })
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| write_err(e.into()))
}

/// Reads an ellipse table. The shape column must agree with `C/A` to
/// within [`SHAPE_TOLERANCE`]; the ratio itself is what is kept.
pub fn read_ellipses_from<R: Read>(input: R, name: &Path) -> Result<Vec<SectionEllipse>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(|e| csv_err(name, e))?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: EllipseRow = rec.deserialize(Some(&headers)).map_err(|e| csv_err(name, e))?;
        let at = |msg: String| data(format!("{} line {line}: {msg}", name.display()));
        let e = SectionEllipse::new([row.x, row.y], row.A, row.C, row.alpha).map_err(|e| at(e.to_string()))?;
        if !((row.S - e.shape).abs() <= SHAPE_TOLERANCE) {
            return Err(at(format!("S = {} disagrees with C/A = {}", row.S, e.shape)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn read_ellipses(path: &Path) -> Result<Vec<SectionEllipse>> {
    read_ellipses_from(open(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spheroid_round_trip_is_exact() {
        let s = vec![
            Spheroid::new([0.1, -2.0 / 3.0, 1e-9], [0.3, 0.4, 0.5], 0.7, 0.123456789).unwrap(),
            Spheroid::new([5.0, 5.0, 5.0], [0.0, 0.0, 1.0], 1.0, 1.0).unwrap(),
        ];
        let mut buf = Vec::new();
        write_spheroids(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cx,cy,cz,ax,ay,az,a,c\n"));
        let back = read_spheroids_from(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn ellipse_round_trip_is_exact() {
        let e = vec![
            SectionEllipse::new([1.0, 2.0], 0.3, 0.1, 0.25).unwrap(),
            SectionEllipse::new([-1.5, 0.0], 1.0 / 3.0, 0.2, 1.5).unwrap(),
        ];
        let mut buf = Vec::new();
        write_ellipses(&mut buf, &e).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,x,y,A,C,S,alpha\n1,"));
        assert_eq!(read_ellipses_from(&buf[..], Path::new("mem")).unwrap(), e);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "id,x,y,A,C,S,alpha\n1,0,0,0.3,0.1,0.3333,0.2\n2,0,0,0.1,0.3,3,0.2\n";
        let err = read_ellipses_from(text.as_bytes(), Path::new("t.csv")).unwrap_err().to_string();
        assert!(err.contains("t.csv line 3"), "{err}");

        let text = "id,x,y,A,C,S,alpha\n1,0,0,0.3,0.1,0.5,0.2\n";
        let err = read_ellipses_from(text.as_bytes(), Path::new("t.csv")).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("disagrees"), "{err}");

        let text = "id,x,y,A,C,S,alpha\n1,0,0,0.3,0.1,0.3333,0.2\n2,0,0,abc,0.1,0.3,0.2\n";
        let err = read_ellipses_from(text.as_bytes(), Path::new("t.csv")).unwrap_err().to_string();
        assert!(err.contains("line: 3"), "{err}");

        let text = "cx,cy,cz,ax,ay,az,a,c\n0,0,0,0,0,0,1,1\n";
        let err = read_spheroids_from(text.as_bytes(), Path::new("s.csv")).unwrap_err().to_string();
        assert!(err.contains("s.csv line 2"), "{err}");
    }
}
