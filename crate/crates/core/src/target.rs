//! Target morphologies `u_d`: analytic strip patterns and `-1/+1` rasters.
//!
//! Raster text format: one row of cells per line, cells separated by
//! whitespace or commas, each `-1` or `1`. The first line is the top row
//! (largest `x2`). Nodes take the value of the cell containing them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Mesh, NodalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// strips run along `x2`, repeating in `x1`
    #[default]
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetSpec {
    /// `+1` strips of width `spacing / 2` centered at `offset + k spacing`, `-1` elsewhere
    Strips {
        spacing: f64,
        #[serde(default = "default_offset")]
        offset: f64,
        #[serde(default)]
        orientation: Orientation,
    },
    Raster {
        path: std::path::PathBuf,
    },
}

fn default_offset() -> f64 {
    0.5
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TargetSpec::Strips {
                spacing, offset, ..
            } => {
                if !(*spacing > 0.0 && offset.is_finite()) {
                    return Err(Error::Config {
                        field: "target.spacing".into(),
                        message: format!("must be positive, got {spacing}"),
                    });
                }
                Ok(())
            }
            TargetSpec::Raster { path } => {
                if !path.exists() {
                    return Err(Error::Config {
                        field: "target.path".into(),
                        message: format!("{} does not exist", path.display()),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn evaluate(&self, mesh: &Mesh) -> Result<NodalField> {
        self.validate()?;
        match self {
            TargetSpec::Strips {
                spacing,
                offset,
                orientation,
            } => Ok(strip_target(mesh, *spacing, *offset, *orientation)),
            TargetSpec::Raster { path } => Raster::load(path)?.sample(mesh),
        }
    }
}

pub fn strip_target(
    mesh: &Mesh,
    spacing: f64,
    offset: f64,
    orientation: Orientation,
) -> NodalField {
    NodalField::from_vec(mesh.interpolate(|x, y| {
        let s = match orientation {
            Orientation::Vertical => x,
            Orientation::Horizontal => y,
        };
        let k = ((s - offset) / spacing).round();
        if (s - offset - k * spacing).abs() < 0.25 * spacing {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Grid of `-1/+1` cells covering the domain; `cells[row][col]`, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub cells: Vec<Vec<i8>>,
}

impl Raster {
    pub fn new(cells: Vec<Vec<i8>>) -> Result<Self> {
        let rows = cells.len();
        let cols = cells.first().map_or(0, Vec::len);
        if rows < 2 || cols < 2 {
            return Err(Error::invalid(format!(
                "raster must be at least 2x2, got {rows}x{cols}"
            )));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::invalid(format!(
                    "raster row {r} has {} cells, expected {cols}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| v.abs() != 1) {
                return Err(Error::invalid(format!(
                    "raster row {r} holds {v}; cells must be -1 or 1"
                )));
            }
        }
        Ok(Self { cells })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<i8>().map_err(|_| {
                        Error::invalid(format!("raster line {}: bad cell '{t}'", line_no + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(row);
        }
        Self::new(cells)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.cells {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn cols(&self) -> usize {
        self.cells[0].len()
    }

    /// Nearest-cell transfer to the mesh nodes; values are exactly `-1` or `1`.
    pub fn sample(&self, mesh: &Mesh) -> Result<NodalField> {
        let (rows, cols) = (self.rows(), self.cols());
        Ok(NodalField::from_vec(mesh.interpolate(|x, y| {
            let c = ((x / mesh.l1() * cols as f64).floor() as isize).clamp(0, cols as isize - 1)
                as usize;
            let r_from_bottom = ((y / mesh.l2() * rows as f64).floor() as isize)
                .clamp(0, rows as isize - 1) as usize;
            f64::from(self.cells[rows - 1 - r_from_bottom][c])
        })))
    }
}

/// Approximate T-junction target on `[0, L] x [0, 7L/6]`: vertical lamellae of
/// period `L/3` above mid-height meet horizontal lamellae below. The geometry
/// is hand-traced, not exact.
pub fn junction_raster(cols: usize, rows: usize) -> Result<Raster> {
    let cells = (0..rows)
        .map(|r| {
            let y = 1.0 - (r as f64 + 0.5) / rows as f64; // fraction of the height, 1 at the top
            (0..cols)
                .map(|c| {
                    let x = (c as f64 + 0.5) / cols as f64;
                    let phase = if y > 0.5 {
                        (3.0 * x).fract()
                    } else {
                        (3.0 * 7.0 / 6.0 * y).fract()
                    };
                    if (phase - 0.5).abs() < 0.25 {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect();
    Raster::new(cells)
}

/// Approximate jog target on `[0, L] x [0, 7L/6]`: vertical lamellae of period
/// `L/3` whose upper half is shifted sideways by a quarter period.
pub fn jog_raster(cols: usize, rows: usize) -> Result<Raster> {
    let cells = (0..rows)
        .map(|r| {
            let y = 1.0 - (r as f64 + 0.5) / rows as f64;
            (0..cols)
                .map(|c| {
                    let x = (c as f64 + 0.5) / cols as f64;
                    let shift = if y > 0.5 { 0.25 } else { 0.0 };
                    let phase = (3.0 * x + shift).fract();
                    if (phase - 0.5).abs() < 0.25 {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect();
    Raster::new(cells)
}
