use std::path::Path;

use super::LossSeries;
use crate::error::{Error, Result};
use crate::materials::BVec;

const LOSS_HEADER: [&str; 2] = ["t_s", "p_w_per_m"];
const FIELD_HEADER: [&str; 8] = ["step", "t_s", "tri_id", "cx", "cy", "bx", "by", "jz"];
const PROBE_HEADER: [&str; 7] = ["x_m", "y_m", "t_s", "bx", "by", "bx_macro", "by_macro"];

/// One triangle of a field dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldRow {
    pub step: usize,
    pub t: f64,
    pub tri: usize,
    pub cx: f64,
    pub cy: f64,
    pub bx: f64,
    pub by: f64,
    pub jz: f64,
}

/// Flux density history at one point. `b` is the finest available field
/// (mesoscale reconstruction or fullscale), `b_macro` the homogenised one.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeSeries {
    pub point: [f64; 2],
    pub t: Vec<f64>,
    pub b: Vec<BVec>,
    pub b_macro: Vec<BVec>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}"))),
    }
}

fn bad_data(path: &Path, msg: String) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, msg))
}

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn write_rows<const N: usize>(path: &Path, header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if found.len() < header.len() || found.iter().zip(header).any(|(a, b)| a != b) {
        return Err(bad_data(path, format!("expected header {header:?}, found {found:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let vals = header
            .iter()
            .enumerate()
            .map(|(c, name)| {
                rec.get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| bad_data(path, format!("row {}: bad `{name}`", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(vals);
    }
    Ok(out)
}

/// `t_s,p_w_per_m`.
pub fn write_losses(series: &LossSeries, path: &Path) -> Result<()> {
    write_rows(path, LOSS_HEADER, series.t.iter().zip(&series.p).map(|(&t, &p)| [num(t), num(p)]))
}

pub fn read_losses(path: &Path) -> Result<LossSeries> {
    let mut s = LossSeries::default();
    for r in read_rows(path, &LOSS_HEADER)? {
        s.push(r[0], r[1]);
    }
    Ok(s)
}

/// `step,t_s,tri_id,cx,cy,bx,by,jz`, rows in the given order.
pub fn write_fields(rows: &[FieldRow], path: &Path) -> Result<()> {
    write_rows(
        path,
        FIELD_HEADER,
        rows.iter().map(|r| {
            [
                r.step.to_string(),
                num(r.t),
                r.tri.to_string(),
                num(r.cx),
                num(r.cy),
                num(r.bx),
                num(r.by),
                num(r.jz),
            ]
        }),
    )
}

pub fn read_fields(path: &Path) -> Result<Vec<FieldRow>> {
    Ok(read_rows(path, &FIELD_HEADER)?
        .into_iter()
        .map(|r| FieldRow {
            step: r[0] as usize,
            t: r[1],
            tri: r[2] as usize,
            cx: r[3],
            cy: r[4],
            bx: r[5],
            by: r[6],
            jz: r[7],
        })
        .collect())
}

/// Probe locations, `x_m,y_m`.
pub fn read_probe_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    Ok(read_rows(path, &["x_m", "y_m"])?.into_iter().map(|r| [r[0], r[1]]).collect())
}

/// `x_m,y_m,t_s,bx,by,bx_macro,by_macro`, grouped by probe.
pub fn write_probe_series(series: &[ProbeSeries], path: &Path) -> Result<()> {
    let rows = series.iter().flat_map(|s| {
        (0..s.t.len()).map(move |k| {
            [
                num(s.point[0]),
                num(s.point[1]),
                num(s.t[k]),
                num(s.b[k].x),
                num(s.b[k].y),
                num(s.b_macro[k].x),
                num(s.b_macro[k].y),
            ]
        })
    });
    write_rows(path, PROBE_HEADER, rows)
}

pub fn read_probe_series(path: &Path) -> Result<Vec<ProbeSeries>> {
    let mut out: Vec<ProbeSeries> = Vec::new();
    for r in read_rows(path, &PROBE_HEADER)? {
        let point = [r[0], r[1]];
        let idx = match out.iter().position(|s| s.point == point) {
            Some(i) => i,
            None => {
                out.push(ProbeSeries {
                    point,
                    ..Default::default()
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.t.push(r[2]);
        s.b.push(BVec::new(r[3], r[4]));
        s.b_macro.push(BVec::new(r[5], r[6]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        write_losses(&LossSeries::default(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t_s,p_w_per_m\n");
        assert!(read_losses(&path).unwrap().is_empty());
    }

    #[test]
    fn losses_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        let mut s = LossSeries::default();
        for k in 0..50 {
            let t = k as f64 * (1.0 / 3.0) * 1e-3;
            s.push(t, (t * 1234.567).sin().powi(2) * 0.1 + 1e-300 * k as f64);
        }
        write_losses(&s, &path).unwrap();
        assert_eq!(read_losses(&path).unwrap(), s);
        assert!(!std::fs::read_to_string(&path).unwrap().contains('\r'));
    }

    #[test]
    fn fields_and_probes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<FieldRow> = (0..6)
            .map(|i| FieldRow {
                step: i / 3,
                t: 0.1 * (i / 3) as f64,
                tri: i % 3,
                cx: 1.0 / (i + 1) as f64,
                cy: -2e-5,
                bx: 0.3,
                by: -std::f64::consts::PI,
                jz: 1e7 / 7.0,
            })
            .collect();
        let path = dir.path().join("fields.csv");
        write_fields(&rows, &path).unwrap();
        assert_eq!(read_fields(&path).unwrap(), rows);

        let probes = vec![
            ProbeSeries {
                point: [5e-5, 5e-5],
                t: vec![0.0, 0.5],
                b: vec![BVec::new(0.1, 0.2), BVec::new(1.0 / 3.0, 0.0)],
                b_macro: vec![BVec::new(0.0, 0.2), BVec::new(0.3, 0.1)],
            },
            ProbeSeries {
                point: [3.5e-4, 3.5e-4],
                t: vec![0.0],
                b: vec![BVec::new(-0.1, 0.2)],
                b_macro: vec![BVec::new(7.0, 0.0)],
            },
        ];
        let path = dir.path().join("probes.csv");
        write_probe_series(&probes, &path).unwrap();
        assert_eq!(read_probe_series(&path).unwrap(), probes);
    }

    #[test]
    fn probe_points_accept_spaced_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "x_m, y_m\n5e-5, 2.5e-5\n").unwrap();
        assert_eq!(read_probe_points(&path).unwrap(), vec![[5e-5, 2.5e-5]]);
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(matches!(read_probe_points(&path), Err(Error::Io { .. })));
    }
}
