//! Self-describing text grid files.
//!
//! Layout:
//!
//! ```text
//! stepgl-grid 1
//! kind polar
//! <key> <value>
//! section <name> <rows> <column names...>
//! <one row of whitespace-separated values per line>
//! end
//! ```
//!
//! Values are written in shortest round-trip form, so a reload reproduces
//! every bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gldomain::{GlProblem, GlState};
use crate::halfplane::HalfDiskMesh;

const MAGIC: &str = "stepgl-grid 1";

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub name: String,
    pub columns: Vec<String>,
    /// Row-major, `rows × columns.len()` values.
    pub values: Vec<f64>,
}

impl GridSection {
    pub fn rows(&self) -> usize {
        self.values.len() / self.columns.len().max(1)
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.columns.len();
        self.values.iter().skip(c).step_by(w).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFile {
    pub kind: String,
    pub header: BTreeMap<String, String>,
    pub sections: Vec<GridSection>,
}

fn corrupt(path: &str, reason: impl Into<String>) -> Error {
    Error::CorruptFile {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl GridFile {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Self::default()
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.header.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, name: &str, columns: &[&str], values: Vec<f64>) -> &mut Self {
        self.sections.push(GridSection {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            values,
        });
        self
    }

    pub fn section(&self, name: &str) -> Option<&GridSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn header_f64(&self, key: &str) -> Option<f64> {
        self.header.get(key)?.parse().ok()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{MAGIC}\nkind {}\n", self.kind);
        for (k, v) in &self.header {
            let _ = writeln!(out, "{k} {v}");
        }
        for s in &self.sections {
            let _ = writeln!(out, "section {} {} {}", s.name, s.rows(), s.columns.join(" "));
            for row in s.values.chunks(s.columns.len().max(1)) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    /// Parses `text`; `path` only labels errors.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(corrupt(path, "missing format line"));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| corrupt(path, "missing kind line"))?;
        let mut grid = GridFile::new(kind);
        let mut finished = false;
        while let Some(line) = lines.next() {
            if line == "end" {
                finished = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("section ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().ok_or_else(|| corrupt(path, "section without name"))?;
                let rows: usize = parts
                    .next()
                    .and_then(|r| r.parse().ok())
                    .ok_or_else(|| corrupt(path, format!("section {name} without row count")))?;
                let columns: Vec<String> = parts.map(str::to_string).collect();
                if columns.is_empty() {
                    return Err(corrupt(path, format!("section {name} without columns")));
                }
                let mut values = Vec::with_capacity(rows * columns.len());
                for r in 0..rows {
                    let row = lines
                        .next()
                        .ok_or_else(|| corrupt(path, format!("section {name} truncated at row {r} of {rows}")))?;
                    let before = values.len();
                    for tok in row.split_whitespace() {
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| corrupt(path, format!("section {name} row {r}: bad value `{tok}`")))?;
                        values.push(v);
                    }
                    if values.len() - before != columns.len() {
                        return Err(corrupt(
                            path,
                            format!("section {name} row {r}: expected {} values", columns.len()),
                        ));
                    }
                }
                grid.sections.push(GridSection {
                    name: name.to_string(),
                    columns,
                    values,
                });
            } else {
                let (k, v) = line
                    .split_once(' ')
                    .ok_or_else(|| corrupt(path, format!("malformed header line `{line}`")))?;
                grid.header.insert(k.to_string(), v.to_string());
            }
        }
        if !finished {
            return Err(corrupt(path, "missing end marker"));
        }
        Ok(grid)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn complex_plane(values: &[Complex64]) -> Vec<f64> {
    values.iter().flat_map(|v| [v.re, v.im]).collect()
}

fn points_plane(points: &[[f64; 2]]) -> Vec<f64> {
    points.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Grid file for a GL state: node coordinates, `ψ`, the node values of `A`
/// and the link line integrals that define `A` exactly.
pub fn gl_state_grid(state: &GlState, problem: &GlProblem) -> GridFile {
    let g = &problem.geometry;
    let mesh = &problem.mesh;
    let mut grid = GridFile::new("polar");
    grid.set("kappa", format!("{:e}", problem.kappa))
        .set("H", format!("{:e}", problem.h))
        .set("b", format!("{:e}", problem.b))
        .set("a", format!("{:e}", g.a))
        .set("rho", format!("{:e}", g.rho))
        .set("chord_offset", format!("{:e}", g.chord_offset))
        .set("n_theta", mesh.n_theta)
        .set("rings", mesh.rings())
        .set("nodes", mesh.len())
        .set("energy", format!("{:e}", state.energy));
    let a_nodes = mesh.node_vectors(&state.links);
    grid.push("radii", &["r"], mesh.radii.clone())
        .push("points", &["x", "y"], points_plane(&mesh.lattice.points))
        .push("psi", &["re", "im"], complex_plane(&state.psi))
        .push("A", &["ax", "ay"], points_plane(&a_nodes))
        .push("links", &["a"], state.links.clone());
    grid
}

/// Rebuilds a GL state written by [`gl_state_grid`] on `problem`'s mesh.
pub fn load_gl_state(grid: &GridFile, problem: &GlProblem, path: &str) -> Result<GlState> {
    if grid.kind != "polar" {
        return Err(corrupt(path, format!("expected a polar grid, found {}", grid.kind)));
    }
    let psi = grid
        .section("psi")
        .ok_or_else(|| corrupt(path, "missing psi section"))?;
    let links = grid
        .section("links")
        .ok_or_else(|| corrupt(path, "missing links section"))?;
    let psi: Vec<Complex64> = psi.values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
    problem.state(psi, links.values.clone(), None)
}

/// Grid file for a field on a half-disk mesh of the effective model.
pub fn halfdisk_grid(mesh: &HalfDiskMesh, u: &[Complex64], header: &[(&str, String)]) -> GridFile {
    let mut grid = GridFile::new("halfdisk");
    grid.set("radius", format!("{:e}", mesh.radius))
        .set("spacing", format!("{:e}", mesh.spacing))
        .set("alpha", format!("{:e}", mesh.alpha))
        .set("nodes", mesh.len());
    for (k, v) in header {
        grid.set(k, v);
    }
    grid.push("points", &["x", "y"], points_plane(&mesh.lattice.points))
        .push("u", &["re", "im"], complex_plane(u));
    grid
}
