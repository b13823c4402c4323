use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform right-triangle triangulation of the rectangle `[0, l1] x [0, l2]`.
///
/// Nodes are numbered row-major: node `(i, j)` sits at `(i * l1 / nx, j * l2 / ny)`
/// and has index `j * (nx + 1) + i`. Each grid cell is cut along its
/// lower-left to upper-right diagonal into two counter-clockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    l1: f64,
    l2: f64,
    nx: usize,
    ny: usize,
    h: f64,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn rectangle(l1: f64, l2: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(l1 > 0.0 && l1.is_finite()) || !(l2 > 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!(
                "domain lengths must be positive, got ({l1}, {l2})"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!(
                "cell counts must be at least 1, got ({nx}, {ny})"
            )));
        }
        let dx = l1 / nx as f64;
        let dy = l2 / ny as f64;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            // pin the last row/column to the exact edge length
            let y = if j == ny { l2 } else { j as f64 * dy };
            for i in 0..=nx {
                let x = if i == nx { l1 } else { i as f64 * dx };
                nodes.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                elements.push([n00, n10, n11]);
                elements.push([n00, n11, n01]);
            }
        }
        Ok(Self {
            l1,
            l2,
            nx,
            ny,
            h: dx.max(dy),
            nodes,
            elements,
        })
    }

    /// Mesh whose cell size does not exceed `h` along either axis.
    pub fn with_max_spacing(l1: f64, l2: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!(
                "mesh spacing must be positive, got {h}"
            )));
        }
        let nx = ((l1 / h) - 1e-9).ceil().max(1.0) as usize;
        let ny = ((l2 / h) - 1e-9).ceil().max(1.0) as usize;
        Self::rectangle(l1, l2, nx, ny)
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Largest cell edge along the axes.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Signed area of element `e` (positive for counter-clockwise orientation).
    pub fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Nodal interpolant of a pointwise function.
    pub fn interpolate(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&[x, y]| g(x, y)).collect()
    }

    /// Writes `id,x,y` rows to `nodes.csv` and `id,n0,n1,n2` rows to `elements.csv` in `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let node_path = dir.join("nodes.csv");
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&node_path).map_err(|e| Error::io(&node_path, e))?,
        );
        writeln!(w, "id,x,y").map_err(|e| Error::io(&node_path, e))?;
        for (i, [x, y]) in self.nodes.iter().enumerate() {
            writeln!(w, "{i},{x:?},{y:?}").map_err(|e| Error::io(&node_path, e))?;
        }
        let elem_path = dir.join("elements.csv");
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&elem_path).map_err(|e| Error::io(&elem_path, e))?,
        );
        writeln!(w, "id,n0,n1,n2").map_err(|e| Error::io(&elem_path, e))?;
        for (i, [a, b, c]) in self.elements.iter().enumerate() {
            writeln!(w, "{i},{a},{b},{c}").map_err(|e| Error::io(&elem_path, e))?;
        }
        Ok(())
    }
}
