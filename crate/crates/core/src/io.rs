//! File formats: nodal fields and designs as CSV, reports as JSON.
//!
//! Numbers are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fem::{Mesh, NodalField};
use crate::guidepost::{DesignVariables, GuidepostShape};

/// Tolerance when matching CSV coordinates against mesh nodes.
const COORD_TOL: f64 = 1e-9;

/// Writes `x,y,value`, one row per node in node order.
pub fn write_field_csv(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    check_len(mesh.n_nodes(), values.len())?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (x, v) in mesh.nodes().iter().zip(values) {
        w.write_record([x[0].to_string(), x[1].to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a field written by [`write_field_csv`] for the same mesh.
pub fn read_field_csv(path: &Path, mesh: &Mesh) -> Result<NodalField> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(Error::invalid(format!(
            "{}: expected header x,y,value, found {:?}",
            path.display(),
            headers
        )));
    }
    let mut values = Vec::with_capacity(mesh.n_nodes());
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "{}: bad number on data row {}",
                        path.display(),
                        i + 1
                    ))
                })
        };
        let (x, y, v) = (parse(0)?, parse(1)?, parse(2)?);
        let node = mesh.nodes().get(i).ok_or_else(|| {
            Error::invalid(format!(
                "{}: more rows than the {} mesh nodes",
                path.display(),
                mesh.n_nodes()
            ))
        })?;
        if (node[0] - x).abs() > COORD_TOL || (node[1] - y).abs() > COORD_TOL {
            return Err(Error::invalid(format!(
                "{}: row {} is at ({x}, {y}) but node {i} is at ({}, {})",
                path.display(),
                i + 1,
                node[0],
                node[1]
            )));
        }
        values.push(v);
    }
    check_len(mesh.n_nodes(), values.len())?;
    NodalField::new(values)
}

/// Writes `index,shape,r1[,r2]`, one row per guidepost.
pub fn write_design_csv(path: &Path, z: &DesignVariables) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match z.shape() {
        GuidepostShape::Circle => w.write_record(["index", "shape", "r1", "r2"])?,
        GuidepostShape::Strip => w.write_record(["index", "shape", "r1"])?,
    }
    for i in 0..z.count() {
        let mut rec = vec![i.to_string(), z.shape().to_string()];
        rec.extend(z.position(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_design_csv(path: &Path) -> Result<DesignVariables> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut shape = None;
    let mut z = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || {
            Error::invalid(format!(
                "{}: malformed design row {}",
                path.display(),
                i + 1
            ))
        };
        let index: usize = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(bad)?;
        if index != i {
            return Err(Error::invalid(format!(
                "{}: guidepost rows out of order (row {} has index {index})",
                path.display(),
                i + 1
            )));
        }
        let s: GuidepostShape = rec.get(1).ok_or_else(bad)?.parse()?;
        if shape.is_some_and(|prev| prev != s) {
            return Err(Error::invalid(format!(
                "{}: mixed guidepost shapes",
                path.display()
            )));
        }
        shape = Some(s);
        for k in 0..s.dim() {
            z.push(
                rec.get(2 + k)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(bad)?,
            );
        }
    }
    let shape =
        shape.ok_or_else(|| Error::invalid(format!("{}: no guideposts", path.display())))?;
    DesignVariables::new(shape, z)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
