//! Output formats: legacy ASCII VTK, per-step CSV statistics and PGM masks.
//!
//! Reals are printed with 17 significant digits, so files are exact and
//! byte-identical for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::MeshGrid;
use crate::physics::Species;
use crate::simulation::StepReport;

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Legacy VTK unstructured grid with any number of nodal scalar fields.
pub fn vtk_string(mesh: &MeshGrid, fields: &[(&str, &[f64])], title: &str) -> Result<String> {
    let cells: Vec<&[usize]> = mesh.elements().collect();
    let cell_type = if mesh.dim() == 2 { VTK_TRIANGLE } else { VTK_TETRA };
    vtk_from_parts(mesh.nodes(), &cells, cell_type, fields, title)
}

pub const VTK_TRIANGLE: u8 = 5;
pub const VTK_TETRA: u8 = 10;

/// [`vtk_string`] for an explicit point list and cells of one type.
pub fn vtk_from_parts<C: AsRef<[usize]>>(
    points: &[[f64; 3]],
    cells: &[C],
    cell_type: u8,
    fields: &[(&str, &[f64])],
    title: &str,
) -> Result<String> {
    let n = points.len();
    for (name, f) in fields {
        if f.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "field {name} has {} values for {n} nodes",
                f.len()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK field name {name:?}")));
        }
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(title.lines().next().unwrap_or(""));
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in points {
        let _ = writeln!(s, "{} {} {}", real(p[0]), real(p[1]), real(p[2]));
    }
    let total: usize = cells.iter().map(|c| c.as_ref().len() + 1).sum();
    let _ = writeln!(s, "CELLS {} {total}", cells.len());
    for el in cells {
        let el = el.as_ref();
        s.push_str(&el.len().to_string());
        for v in el {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in cells {
        let _ = writeln!(s, "{cell_type}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {n}");
        for (name, f) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            s.push_str("LOOKUP_TABLE default\n");
            for v in *f {
                s.push_str(&real(*v));
                s.push('\n');
            }
        }
    }
    Ok(s)
}

pub fn write_field_vtk(mesh: &MeshGrid, field: &[f64], name: &str, path: &Path) -> Result<()> {
    write_fields_vtk(mesh, &[(name, field)], path)
}

pub fn write_fields_vtk(mesh: &MeshGrid, fields: &[(&str, &[f64])], path: &Path) -> Result<()> {
    let text = vtk_string(mesh, fields, "chmorph")?;
    write_file(path, &text)
}

/// Contents of a legacy VTK file written by this module.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Same geometry with a new set of fields.
    pub fn to_vtk_string(&self, fields: &[(&str, &[f64])], title: &str) -> Result<String> {
        let cell_type = self.cell_types.first().copied().unwrap_or(VTK_TRIANGLE);
        if self.cell_types.iter().any(|&t| t != cell_type) {
            return Err(Error::InvalidArgument("mixed cell types are not supported".into()));
        }
        vtk_from_parts(&self.points, &self.cells, cell_type, fields, title)
    }

    /// `(nx, ny)` when the points form a planar tensor grid numbered with
    /// x fastest.
    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        let first = self.points.first()?;
        if self.points.iter().any(|p| p[2] != 0.0) {
            return None;
        }
        let nx = self.points.iter().take_while(|p| p[1] == first[1]).count();
        if nx == 0 || self.points.len() % nx != 0 {
            return None;
        }
        let ny = self.points.len() / nx;
        let regular = self.points.iter().enumerate().all(|(k, p)| {
            let (i, j) = (k % nx, k / nx);
            p[0] == self.points[i][0] && p[1] == self.points[j * nx][1]
        });
        regular.then_some((nx, ny))
    }
}

pub fn parse_vtk(text: &str) -> std::result::Result<VtkData, String> {
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| -> std::result::Result<(usize, &str), String> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| format!("unexpected end of file, expected {what}"))
    };
    let (_, header) = next("header")?;
    if !header.starts_with("# vtk DataFile") {
        return Err("missing VTK header".into());
    }
    next("title")?;
    let (l, fmt) = next("format")?;
    if fmt.trim() != "ASCII" {
        return Err(format!("line {l}: only ASCII files are supported"));
    }
    let (l, ds) = next("dataset")?;
    if ds.trim() != "DATASET UNSTRUCTURED_GRID" {
        return Err(format!("line {l}: expected an unstructured grid"));
    }

    let count = |l: usize, line: &str, keyword: &str| -> std::result::Result<usize, String> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(format!("line {l}: expected {keyword}"));
        }
        parts
            .next()
            .ok_or_else(|| format!("line {l}: missing count"))?
            .parse::<usize>()
            .map_err(|e| format!("line {l}: {e}"))
    };
    let parse_real = |l: usize, s: &str| s.parse::<f64>().map_err(|e| format!("line {l}: {e}"));

    let (l, line) = next("POINTS")?;
    let np = count(l, line, "POINTS")?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let (l, line) = next("point")?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| parse_real(l, s))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() != 3 {
            return Err(format!("line {l}: expected 3 coordinates"));
        }
        points.push([v[0], v[1], v[2]]);
    }
    let (l, line) = next("CELLS")?;
    let nc = count(l, line, "CELLS")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (l, line) = next("cell")?;
        let v: Vec<usize> = line
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| format!("line {l}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if v.is_empty() || v[0] + 1 != v.len() || v[1..].iter().any(|&i| i >= np) {
            return Err(format!("line {l}: malformed cell"));
        }
        cells.push(v[1..].to_vec());
    }
    let (l, line) = next("CELL_TYPES")?;
    count(l, line, "CELL_TYPES")?;
    let mut cell_types = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (l, line) = next("cell type")?;
        cell_types.push(line.trim().parse::<u8>().map_err(|e| format!("line {l}: {e}"))?);
    }
    let mut fields = Vec::new();
    if let Ok((l, line)) = next("POINT_DATA") {
        let n = count(l, line, "POINT_DATA")?;
        if n != np {
            return Err(format!("line {l}: POINT_DATA count {n} differs from {np} points"));
        }
        while let Ok((l, line)) = next("SCALARS") {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 2 || parts[0] != "SCALARS" {
                return Err(format!("line {l}: expected SCALARS"));
            }
            let name = parts[1].to_string();
            let (l, lut) = next("LOOKUP_TABLE")?;
            if !lut.starts_with("LOOKUP_TABLE") {
                return Err(format!("line {l}: expected LOOKUP_TABLE"));
            }
            let mut values = Vec::with_capacity(np);
            for _ in 0..np {
                let (l, line) = next("value")?;
                values.push(parse_real(l, line.trim())?);
            }
            fields.push((name, values));
        }
    }
    Ok(VtkData {
        points,
        cells,
        cell_types,
        fields,
    })
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub const STATS_HEADER: &str = "step,species,iterations,residual,seconds";

/// One row per species per step.
pub fn stats_csv(reports: &[StepReport]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for r in reports {
        for (species, rep) in Species::BOTH.iter().zip(&r.reports) {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.step,
                species.name(),
                rep.iterations,
                real(rep.residual_norm),
                real(rep.wall_time)
            );
        }
    }
    s
}

pub fn write_stats(reports: &[StepReport], path: &Path) -> Result<()> {
    write_file(path, &stats_csv(reports))
}

/// Plain ASCII graymap of a 0/1 nodal mask on a 2D grid, top row first.
pub fn pgm_string(mesh: &MeshGrid, mask: &[u8]) -> Result<String> {
    if mesh.dim() != 2 {
        return Err(Error::InvalidArgument("PGM output needs a 2D mesh".into()));
    }
    pgm_from_grid(mesh.counts()[0], mesh.counts()[1], mask)
}

/// [`pgm_string`] for a mask numbered with x fastest on an `nx` by `ny` grid.
pub fn pgm_from_grid(nx: usize, ny: usize, mask: &[u8]) -> Result<String> {
    if mask.len() != nx * ny {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} values for {} nodes",
            mask.len(),
            nx * ny
        )));
    }
    let mut s = format!("P2\n{nx} {ny}\n255\n");
    for j in (0..ny).rev() {
        let row: Vec<&str> = (0..nx)
            .map(|i| if mask[i + nx * j] != 0 { "255" } else { "0" })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    Ok(s)
}

pub fn write_pgm(mesh: &MeshGrid, mask: &[u8], path: &Path) -> Result<()> {
    let text = pgm_string(mesh, mask)?;
    write_file(path, &text)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

/// `dir/name_000123.vtk`.
pub fn snapshot_path(dir: &Path, name: &str, step: usize) -> PathBuf {
    dir.join(format!("{name}_{step:06}.vtk"))
}
