//! P1 finite-element matrices on a [`MeshGrid`].
//!
//! Element matrices use closed-form integrals of products of barycentric
//! coordinates, so assembly involves no quadrature rule. Elements are visited
//! in mesh order, which makes the assembled values bit-reproducible and
//! exactly symmetric.

use crate::mesh::{sub3, Face, MeshGrid};
use crate::sparse::CsrMatrix;

/// Gradients of the barycentric coordinates of a simplex, plus its volume.
pub(crate) fn p1_gradients(dim: usize, p: &[[f64; 3]]) -> (Vec<[f64; 3]>, f64) {
    let e1 = sub3(p[1], p[0]);
    let e2 = sub3(p[2], p[0]);
    let mut g = vec![[0.0; 3]; dim + 1];
    let det;
    if dim == 2 {
        det = e1[0] * e2[1] - e1[1] * e2[0];
        g[1] = [e2[1] / det, -e2[0] / det, 0.0];
        g[2] = [-e1[1] / det, e1[0] / det, 0.0];
    } else {
        let e3 = sub3(p[3], p[0]);
        let c23 = cross(e2, e3);
        det = e1[0] * c23[0] + e1[1] * c23[1] + e1[2] * c23[2];
        let c31 = cross(e3, e1);
        let c12 = cross(e1, e2);
        for (gi, c) in g[1..].iter_mut().zip([c23, c31, c12]) {
            *gi = [c[0] / det, c[1] / det, c[2] / det];
        }
    }
    for a in 0..3 {
        g[0][a] = -(1..=dim).map(|i| g[i][a]).sum::<f64>();
    }
    let factorial = if dim == 2 { 2.0 } else { 6.0 };
    (g, det.abs() / factorial)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `\int psi_a psi_b` over a `k`-simplex of measure `meas`.
#[inline]
fn p1_mass_entry(k: usize, meas: f64, a: usize, b: usize) -> f64 {
    let denom = ((k + 1) * (k + 2)) as f64;
    if a == b {
        2.0 * meas / denom
    } else {
        meas / denom
    }
}

fn element_pattern(n: usize, groups: std::slice::ChunksExact<'_, usize>) -> CsrMatrix {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for g in groups {
        for &i in g {
            rows[i].extend_from_slice(g);
        }
    }
    CsrMatrix::from_pattern(n, n, rows)
}

/// Consistent mass matrix `M_ij = \int psi_i psi_j dx`.
pub fn assemble_mass(mesh: &MeshGrid) -> CsrMatrix {
    let dim = mesh.dim();
    let mut m = element_pattern(mesh.num_nodes(), mesh.elements());
    for (e, el) in mesh.elements().enumerate() {
        let vol = mesh.element_volume(e);
        for (a, &i) in el.iter().enumerate() {
            for (b, &j) in el.iter().enumerate() {
                m.add_to(i, j, p1_mass_entry(dim, vol, a, b));
            }
        }
    }
    m
}

/// Stiffness matrix `K_ij = \int grad psi_i . grad psi_j dx`.
pub fn assemble_stiffness(mesh: &MeshGrid) -> CsrMatrix {
    let dim = mesh.dim();
    let mut k = element_pattern(mesh.num_nodes(), mesh.elements());
    let mut pts = [[0.0; 3]; 4];
    for el in mesh.elements() {
        for (p, &n) in pts.iter_mut().zip(el) {
            *p = mesh.node(n);
        }
        let (g, vol) = p1_gradients(dim, &pts[..el.len()]);
        for (a, &i) in el.iter().enumerate() {
            for (b, &j) in el.iter().enumerate() {
                let d = g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2];
                k.add_to(i, j, vol * d);
            }
        }
    }
    k
}

/// Surface mass matrix `B_ij = \int_Gamma psi_i psi_j dsigma` over the tagged
/// face. Rows and columns of nodes off the face are empty.
pub fn assemble_boundary_mass(mesh: &MeshGrid, face: Face) -> CsrMatrix {
    let k = mesh.dim() - 1;
    let mut b = element_pattern(mesh.num_nodes(), mesh.boundary_facets(face));
    for f in mesh.boundary_facets(face) {
        let meas = mesh.facet_measure(f);
        for (a, &i) in f.iter().enumerate() {
            for (c, &j) in f.iter().enumerate() {
                b.add_to(i, j, p1_mass_entry(k, meas, a, c));
            }
        }
    }
    b
}

/// Surface load `\int_Gamma g psi_i dsigma` with `g` interpolated at the
/// nodes, i.e. `B g`. Only values at face nodes are read.
pub fn assemble_boundary_load(boundary_mass: &CsrMatrix, g: &[f64]) -> Vec<f64> {
    boundary_mass.mul_vec(g)
}

/// The four matrices every time step needs.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub boundary_top: CsrMatrix,
    pub boundary_bottom: CsrMatrix,
}

impl FemMatrices {
    pub fn assemble(mesh: &MeshGrid) -> Self {
        Self {
            mass: assemble_mass(mesh),
            stiffness: assemble_stiffness(mesh),
            boundary_top: assemble_boundary_mass(mesh, Face::Top),
            boundary_bottom: assemble_boundary_mass(mesh, Face::Bottom),
        }
    }

    pub fn boundary(&self, face: Face) -> &CsrMatrix {
        match face {
            Face::Top => &self.boundary_top,
            Face::Bottom => &self.boundary_bottom,
        }
    }
}
