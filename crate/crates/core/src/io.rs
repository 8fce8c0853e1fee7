//! CSV field serialization with JSON grid headers.
//!
//! One row per node: the index tuple, then the node's values. Complex
//! entries are written as re,im pairs. Floats carry 17 significant digits,
//! which round-trips f64 exactly; the stated interface tolerance is 1e-15.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::matrix::{c, CMat, RMat};

/// What one node's value block contains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueKind {
    Scalar,
    ScalarTriple,
    Vector3,
    RealMatrix { rows: usize, cols: usize },
    ComplexMatrix { rows: usize, cols: usize },
}

/// JSON header accompanying a CSV field dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub grid: GridSpec,
    pub value: ValueKind,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row(out: &mut dyn Write, idx: &[usize], values: &[f64]) -> Result<()> {
    let mut row = String::with_capacity(values.len() * 25 + idx.len() * 4);
    for (k, i) in idx.iter().enumerate() {
        if k > 0 {
            row.push(',');
        }
        row.push_str(&i.to_string());
    }
    for v in values {
        row.push(',');
        row.push_str(&fmt_f64(*v));
    }
    row.push('\n');
    out.write_all(row.as_bytes())?;
    Ok(())
}

fn parse_row(line: &str, ndim: usize, expect: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut idx = Vec::with_capacity(ndim);
    let mut values = Vec::with_capacity(expect);
    for (k, tok) in line.split(',').enumerate() {
        if k < ndim {
            idx.push(
                tok.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad index {tok:?}: {e}")))?,
            );
        } else {
            values.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value {tok:?}: {e}")))?,
            );
        }
    }
    if idx.len() != ndim || values.len() != expect {
        return Err(Error::Parse(format!(
            "row has {} indices and {} values, expected {ndim} and {expect}",
            idx.len(),
            values.len()
        )));
    }
    Ok((idx, values))
}

/// Write a field whose nodes flatten to `width` f64 values through `emit`.
fn write_field_csv<V: Clone>(
    field: &Field<V>,
    width: usize,
    emit: impl Fn(&V, &mut Vec<f64>),
    out: &mut dyn Write,
) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(width);
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        buf.clear();
        emit(&field.values()[flat], &mut buf);
        debug_assert_eq!(buf.len(), width);
        write_row(out, &idx, &buf)?;
    }
    Ok(())
}

fn read_field_csv<V: Clone>(
    grid: &GridSpec,
    width: usize,
    build: impl Fn(&[f64]) -> V,
    input: &mut dyn BufRead,
) -> Result<Field<V>> {
    let mut slots: Vec<Option<V>> = vec![None; grid.len()];
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, values) = parse_row(&line, grid.ndim(), width)?;
        let flat = grid.flat_index(&idx);
        slots[flat] = Some(build(&values));
    }
    let values: Option<Vec<V>> = slots.into_iter().collect();
    match values {
        Some(v) => Field::new(grid.clone(), v),
        None => Err(Error::Parse("missing rows in field CSV".into())),
    }
}

pub fn write_scalar_csv(field: &Field<f64>, out: &mut dyn Write) -> Result<()> {
    write_field_csv(field, 1, |v, buf| buf.push(*v), out)
}

pub fn read_scalar_csv(grid: &GridSpec, input: &mut dyn BufRead) -> Result<Field<f64>> {
    read_field_csv(grid, 1, |v| v[0], input)
}

/// q, r₁, r₂ style triples in one file.
pub fn write_triple_csv(
    a: &Field<f64>,
    b: &Field<f64>,
    c3: &Field<f64>,
    out: &mut dyn Write,
) -> Result<()> {
    let grid = a.grid();
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        write_row(
            out,
            &idx,
            &[a.values()[flat], b.values()[flat], c3.values()[flat]],
        )?;
    }
    Ok(())
}

pub fn read_triple_csv(
    grid: &GridSpec,
    input: &mut dyn BufRead,
) -> Result<(Field<f64>, Field<f64>, Field<f64>)> {
    let combined = read_field_csv(grid, 3, |v| [v[0], v[1], v[2]], input)?;
    Ok((
        combined.map(|v| v[0]),
        combined.map(|v| v[1]),
        combined.map(|v| v[2]),
    ))
}

pub fn write_vector3_csv(
    field: &Field<nalgebra::Vector3<f64>>,
    out: &mut dyn Write,
) -> Result<()> {
    write_field_csv(field, 3, |v, buf| buf.extend([v.x, v.y, v.z]), out)
}

pub fn read_vector3_csv(
    grid: &GridSpec,
    input: &mut dyn BufRead,
) -> Result<Field<nalgebra::Vector3<f64>>> {
    read_field_csv(grid, 3, |v| nalgebra::Vector3::new(v[0], v[1], v[2]), input)
}

pub fn write_rmat_csv(field: &Field<RMat>, out: &mut dyn Write) -> Result<()> {
    let (rows, cols) = {
        let m = &field.values()[0];
        (m.nrows(), m.ncols())
    };
    write_field_csv(
        field,
        rows * cols,
        |m, buf| {
            for r in 0..rows {
                for cc in 0..cols {
                    buf.push(m[(r, cc)]);
                }
            }
        },
        out,
    )
}

pub fn read_rmat_csv(
    grid: &GridSpec,
    rows: usize,
    cols: usize,
    input: &mut dyn BufRead,
) -> Result<Field<RMat>> {
    read_field_csv(
        grid,
        rows * cols,
        |v| RMat::from_fn(rows, cols, |r, cc| v[r * cols + cc]),
        input,
    )
}

pub fn write_cmat_csv(field: &Field<CMat>, out: &mut dyn Write) -> Result<()> {
    let (rows, cols) = {
        let m = &field.values()[0];
        (m.nrows(), m.ncols())
    };
    write_field_csv(
        field,
        2 * rows * cols,
        |m, buf| {
            for r in 0..rows {
                for cc in 0..cols {
                    buf.push(m[(r, cc)].re);
                    buf.push(m[(r, cc)].im);
                }
            }
        },
        out,
    )
}

pub fn read_cmat_csv(
    grid: &GridSpec,
    rows: usize,
    cols: usize,
    input: &mut dyn BufRead,
) -> Result<Field<CMat>> {
    read_field_csv(
        grid,
        2 * rows * cols,
        |v| CMat::from_fn(rows, cols, |r, cc| c(v[2 * (r * cols + cc)], v[2 * (r * cols + cc) + 1])),
        input,
    )
}

/// Serialized form of a simple dressing element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimpleElementJson {
    pub alpha: [f64; 2],
    /// row-major, re/im interleaved
    pub pi: Vec<f64>,
    pub n: usize,
}

impl SimpleElementJson {
    pub fn from_element(e: &crate::dressing::SimpleElement) -> Self {
        let n = e.n();
        let mut pi = Vec::with_capacity(2 * n * n);
        for r in 0..n {
            for cc in 0..n {
                pi.push(e.pi()[(r, cc)].re);
                pi.push(e.pi()[(r, cc)].im);
            }
        }
        Self {
            alpha: [e.alpha().re, e.alpha().im],
            pi,
            n,
        }
    }

    pub fn to_element(&self) -> Result<crate::dressing::SimpleElement> {
        let n = self.n;
        if self.pi.len() != 2 * n * n {
            return Err(Error::Parse("pi length mismatch".into()));
        }
        let pi = CMat::from_fn(n, n, |r, cc| {
            c(self.pi[2 * (r * n + cc)], self.pi[2 * (r * n + cc) + 1])
        });
        crate::dressing::SimpleElement::new(c(self.alpha[0], self.alpha[1]), pi)
    }
}

/// Surface report rows: node index, E,F,G,L,M,N,K.
pub fn write_surface_report_csv(
    report: &crate::surfaces::SurfaceReport,
    out: &mut dyn Write,
) -> Result<()> {
    let grid = report.e.grid();
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        write_row(
            out,
            &idx,
            &[
                report.e.values()[flat],
                report.f.values()[flat],
                report.g.values()[flat],
                report.l.values()[flat],
                report.m.values()[flat],
                report.n.values()[flat],
                report.gauss.values()[flat],
            ],
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_roundtrip() {
        let grid = GridSpec::new(vec![4, 5], vec![-1.0, 0.25], vec![0.5, 0.1]).unwrap();
        let header = FieldHeader {
            grid: grid.clone(),
            value: ValueKind::ComplexMatrix { rows: 2, cols: 2 },
            extra: serde_json::json!({"convention": "q_st=sin q cos q"}),
        };
        let text = serde_json::to_string_pretty(&header).unwrap();
        let parsed: FieldHeader = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.grid, grid);
        assert_eq!(parsed.value, header.value);
    }

    proptest! {
        #[test]
        fn scalar_csv_roundtrip_is_exact(values in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let grid = GridSpec::new(vec![4, 3], vec![0.0, 0.0], vec![0.1, 0.1]).unwrap();
            let field = Field::new(grid.clone(), values).unwrap();
            let mut buf = Vec::new();
            write_scalar_csv(&field, &mut buf).unwrap();
            let parsed = read_scalar_csv(&grid, &mut buf.as_slice()).unwrap();
            for (a, b) in field.values().iter().zip(parsed.values()) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }

        #[test]
        fn cmat_csv_roundtrip_is_exact(values in proptest::collection::vec(-1e3f64..1e3, 9 * 8)) {
            let grid = GridSpec::new(vec![3, 3], vec![0.0, 0.0], vec![0.1, 0.1]).unwrap();
            let mats: Vec<CMat> = values
                .chunks(8)
                .map(|ch| CMat::from_fn(2, 2, |r, cc| c(ch[2 * (r * 2 + cc)], ch[2 * (r * 2 + cc) + 1])))
                .collect();
            let field = Field::new(grid.clone(), mats).unwrap();
            let mut buf = Vec::new();
            write_cmat_csv(&field, &mut buf).unwrap();
            let parsed = read_cmat_csv(&grid, 2, 2, &mut buf.as_slice()).unwrap();
            for (a, b) in field.values().iter().zip(parsed.values()) {
                prop_assert!(crate::matrix::fro_norm(&(a - b)) <= 1e-12);
            }
        }
    }

    #[test]
    fn simple_element_json_roundtrip() {
        let e = crate::dressing::SimpleElement::from_direction(
            c(0.3, 0.8),
            &[c(1.0, 0.0), c(0.2, -0.4)],
        )
        .unwrap();
        let json = SimpleElementJson::from_element(&e);
        let text = serde_json::to_string(&json).unwrap();
        let back: SimpleElementJson = serde_json::from_str(&text).unwrap();
        let e2 = back.to_element().unwrap();
        assert!((e.alpha() - e2.alpha()).norm() < 1e-15);
        assert!(crate::matrix::fro_norm(&(e.pi() - e2.pi())) < 1e-14);
    }
}
