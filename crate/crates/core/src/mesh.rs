//! Uniform simplicial meshes of rectangular boxes.
//!
//! Nodes are numbered lexicographically with `x` fastest, then `y`, then `z`.
//! Each 2D cell is cut along its lower-left to upper-right diagonal; each 3D
//! cell is split into the six Kuhn tetrahedra that share its main diagonal.
//! The `y` axis is the film height: the bottom face `y = 0` is the substrate
//! and the top face `y = L_y` is where solvent evaporates. Lateral faces carry
//! no tag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tagged boundary portion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    /// `y = L_y`, evaporation surface.
    Top,
    /// `y = 0`, substrate contact.
    Bottom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshGrid {
    dim: usize,
    extents: Vec<f64>,
    counts: Vec<usize>,
    nodes: Vec<[f64; 3]>,
    elements: Vec<usize>,
    facets_top: Vec<usize>,
    facets_bottom: Vec<usize>,
}

/// Kuhn decomposition of the unit cube: every tetrahedron walks from corner
/// 000 to corner 111 along one permutation of the axes.
const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl MeshGrid {
    /// Builds a uniform mesh of `[0, L_x] x [0, L_y] (x [0, L_z])` with
    /// `counts[a]` grid points along axis `a`.
    pub fn new(dim: usize, extents: &[f64], counts: &[usize]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(Error::InvalidMesh(format!(
                "expected {dim} extents and counts, got {} and {}",
                extents.len(),
                counts.len()
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c < 2) {
            return Err(Error::InvalidMesh(format!(
                "every axis needs at least 2 grid points, got {c}"
            )));
        }
        if let Some(l) = extents.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidMesh(format!("extents must be positive, got {l}")));
        }

        let nx = counts[0];
        let ny = counts[1];
        let nz = if dim == 3 { counts[2] } else { 1 };
        let coord = |axis: usize, i: usize| extents[axis] * i as f64 / (counts[axis] - 1) as f64;

        let mut nodes = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let z = if dim == 3 { coord(2, k) } else { 0.0 };
                    nodes.push([coord(0, i), coord(1, j), z]);
                }
            }
        }

        let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let mut elements = Vec::new();
        if dim == 2 {
            elements.reserve(6 * (nx - 1) * (ny - 1));
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let (a, b, c, d) = (id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), id(i, j + 1, 0));
                    elements.extend_from_slice(&[a, b, c]);
                    elements.extend_from_slice(&[a, c, d]);
                }
            }
        } else {
            elements.reserve(24 * (nx - 1) * (ny - 1) * (nz - 1));
            for k in 0..nz - 1 {
                for j in 0..ny - 1 {
                    for i in 0..nx - 1 {
                        for path in KUHN_PATHS {
                            let mut corner = [i, j, k];
                            let mut tet = [id(i, j, k), 0, 0, 0];
                            for (step, &axis) in path.iter().enumerate() {
                                corner[axis] += 1;
                                tet[step + 1] = id(corner[0], corner[1], corner[2]);
                            }
                            let vol = simplex_measure(3, &tet.map(|n| nodes[n]));
                            if vol < 0.0 {
                                tet.swap(2, 3);
                            }
                            elements.extend_from_slice(&tet);
                        }
                    }
                }
            }
        }

        let mut mesh = MeshGrid {
            dim,
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            nodes,
            elements,
            facets_top: Vec::new(),
            facets_bottom: Vec::new(),
        };
        mesh.tag_boundary();
        Ok(mesh)
    }

    fn tag_boundary(&mut self) {
        let npe = self.nodes_per_element();
        let ny = self.counts[1];
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        for e in 0..self.num_elements() {
            let el = self.element(e);
            for skip in 0..npe {
                let facet: Vec<usize> = (0..npe).filter(|&l| l != skip).map(|l| el[l]).collect();
                let js: Vec<usize> = facet.iter().map(|&n| self.grid_index(n)[1]).collect();
                if js.iter().all(|&j| j == 0) {
                    bottom.extend_from_slice(&facet);
                } else if js.iter().all(|&j| j == ny - 1) {
                    top.extend_from_slice(&facet);
                }
            }
        }
        self.facets_top = top;
        self.facets_bottom = bottom;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> [f64; 3] {
        self.nodes[n]
    }

    /// Flat connectivity, `nodes_per_element()` entries per element.
    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.nodes_per_element();
        &self.elements[e * npe..(e + 1) * npe]
    }

    pub fn elements(&self) -> std::slice::ChunksExact<'_, usize> {
        self.elements.chunks_exact(self.nodes_per_element())
    }

    /// Facets (edges in 2D, triangles in 3D) on the tagged face.
    pub fn boundary_facets(&self, face: Face) -> std::slice::ChunksExact<'_, usize> {
        let flat = match face {
            Face::Top => &self.facets_top,
            Face::Bottom => &self.facets_bottom,
        };
        flat.chunks_exact(self.dim)
    }

    /// Sorted, de-duplicated nodes lying on the tagged face.
    pub fn boundary_nodes(&self, face: Face) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.boundary_facets(face).flatten().copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Integer grid position `(i, j, k)` of a node.
    pub fn grid_index(&self, n: usize) -> [usize; 3] {
        let nx = self.counts[0];
        let ny = self.counts[1];
        [n % nx, (n / nx) % ny, n / (nx * ny)]
    }

    /// Signed volume (area in 2D) of element `e`.
    pub fn element_volume(&self, e: usize) -> f64 {
        let el = self.element(e);
        let mut pts = [[0.0; 3]; 4];
        for (p, &n) in pts.iter_mut().zip(el) {
            *p = self.nodes[n];
        }
        simplex_measure(self.dim, &pts[..el.len()])
    }

    /// Length (2D) or area (3D) of a boundary facet.
    pub fn facet_measure(&self, facet: &[usize]) -> f64 {
        let p: Vec<[f64; 3]> = facet.iter().map(|&n| self.nodes[n]).collect();
        match self.dim {
            2 => norm3(sub3(p[1], p[0])),
            _ => 0.5 * norm3(cross3(sub3(p[1], p[0]), sub3(p[2], p[0]))),
        }
    }
}

/// Free-function form of [`MeshGrid::new`].
pub fn build_mesh(dim: usize, extents: &[f64], counts: &[usize]) -> Result<MeshGrid> {
    MeshGrid::new(dim, extents, counts)
}

pub(crate) fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Signed measure of a triangle (`dim = 2`) or tetrahedron (`dim = 3`).
pub(crate) fn simplex_measure(dim: usize, p: &[[f64; 3]]) -> f64 {
    let e1 = sub3(p[1], p[0]);
    let e2 = sub3(p[2], p[0]);
    if dim == 2 {
        0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
    } else {
        let e3 = sub3(p[3], p[0]);
        let c = cross3(e2, e3);
        (e1[0] * c[0] + e1[1] * c[1] + e1[2] * c[2]) / 6.0
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn smallest_square() {
        let m = MeshGrid::new(2, &[1.0, 1.0], &[2, 2]).unwrap();
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.boundary_facets(Face::Top).count(), 1);
        assert_eq!(m.boundary_facets(Face::Bottom).count(), 1);
        let mut bottom: Vec<usize> = m.boundary_facets(Face::Bottom).next().unwrap().to_vec();
        bottom.sort();
        assert_eq!(bottom, vec![0, 1]);
        assert_eq!(m.node(0), [0.0, 0.0, 0.0]);
        assert_eq!(m.node(1), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn counts_match_formulas() {
        let m = MeshGrid::new(2, &[10.0, 2.5], &[100, 50]).unwrap();
        assert_eq!(m.num_nodes(), 5000);
        assert_eq!(m.num_elements(), 2 * 99 * 49);
        assert_eq!(m.num_elements(), 9702);

        let m = MeshGrid::new(3, &[10.0, 2.5, 10.0], &[30, 15, 30]).unwrap();
        assert_eq!(m.num_nodes(), 13500);
        assert_eq!(m.num_elements(), 6 * 29 * 14 * 29);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MeshGrid::new(1, &[1.0], &[3]).is_err());
        assert!(MeshGrid::new(4, &[1.0; 4], &[3; 4]).is_err());
        assert!(MeshGrid::new(2, &[1.0, 1.0], &[1, 3]).is_err());
        assert!(MeshGrid::new(2, &[1.0, 0.0], &[3, 3]).is_err());
        assert!(MeshGrid::new(2, &[1.0, 1.0], &[3]).is_err());
    }

    #[test]
    fn top_edges_cover_width() {
        let m = MeshGrid::new(2, &[10.0, 2.5], &[100, 50]).unwrap();
        assert_eq!(m.boundary_facets(Face::Top).count(), 99);
        let len: f64 = m.boundary_facets(Face::Top).map(|f| m.facet_measure(f)).sum();
        assert!((len - 10.0).abs() < 1e-12);
        for f in m.boundary_facets(Face::Top) {
            assert!(f.iter().all(|&n| m.node(n)[1] == 2.5));
        }
    }

    #[test]
    fn bottom_area_3d() {
        let m = MeshGrid::new(3, &[10.0, 2.5, 10.0], &[30, 15, 30]).unwrap();
        let area: f64 = m.boundary_facets(Face::Bottom).map(|f| m.facet_measure(f)).sum();
        assert!((area - 100.0).abs() < 1e-10);
        for f in m.boundary_facets(Face::Bottom) {
            assert!(f.iter().all(|&n| m.node(n)[1] == 0.0));
        }
    }

    fn check_volumes_and_facets(m: &MeshGrid) {
        let expected: f64 = m.extents().iter().product();
        let mut total = 0.0;
        for e in 0..m.num_elements() {
            let v = m.element_volume(e);
            assert!(v > 0.0, "element {e} has volume {v}");
            total += v;
        }
        assert!((total - expected).abs() <= 1e-12 * expected);

        let mut shared: HashMap<Vec<usize>, usize> = HashMap::new();
        for el in m.elements() {
            for skip in 0..el.len() {
                let mut f: Vec<usize> = (0..el.len()).filter(|&l| l != skip).map(|l| el[l]).collect();
                f.sort();
                *shared.entry(f).or_default() += 1;
            }
        }
        let mut tagged: Vec<Vec<usize>> = m
            .boundary_facets(Face::Top)
            .chain(m.boundary_facets(Face::Bottom))
            .map(|f| {
                let mut f = f.to_vec();
                f.sort();
                f
            })
            .collect();
        for f in &tagged {
            assert_eq!(shared[f], 1);
        }
        let n_tagged = tagged.len();
        tagged.sort();
        tagged.dedup();
        assert_eq!(tagged.len(), n_tagged, "top and bottom facets overlap");
        for (f, count) in &shared {
            let on_boundary = (0..m.dim()).any(|axis| {
                let g: Vec<usize> = f.iter().map(|&n| m.grid_index(n)[axis]).collect();
                g.iter().all(|&i| i == 0) || g.iter().all(|&i| i == m.counts()[axis] - 1)
            });
            assert_eq!(*count, if on_boundary { 1 } else { 2 }, "facet {f:?}");
        }
    }

    #[test]
    fn geometry_invariants_2d() {
        check_volumes_and_facets(&MeshGrid::new(2, &[10.0, 2.5], &[7, 5]).unwrap());
        check_volumes_and_facets(&MeshGrid::new(2, &[1.0, 3.0], &[2, 9]).unwrap());
    }

    #[test]
    fn geometry_invariants_3d() {
        check_volumes_and_facets(&MeshGrid::new(3, &[10.0, 2.5, 10.0], &[4, 3, 5]).unwrap());
        check_volumes_and_facets(&MeshGrid::new(3, &[1.0, 1.0, 1.0], &[2, 2, 2]).unwrap());
    }

    #[test]
    fn deterministic() {
        let a = MeshGrid::new(3, &[1.0, 2.0, 3.0], &[4, 5, 3]).unwrap();
        let b = MeshGrid::new(3, &[1.0, 2.0, 3.0], &[4, 5, 3]).unwrap();
        assert_eq!(a, b);
    }
}
