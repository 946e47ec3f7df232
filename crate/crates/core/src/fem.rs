//! Piecewise linear Lagrange elements on a [`SurfaceMesh`].
//!
//! Geometry is taken from the flat triangles of the mesh. Local matrices use
//! the closed forms for P1 elements: mass `A/12 * [[2,1,1],[1,2,1],[1,1,2]]`
//! and stiffness `(e_i . e_j) / (4A)` with `e_i` the edge opposite vertex `i`.

use thiserror::Error;

use crate::linalg::SparseMatrix;
use crate::mesh::{dot, SurfaceMesh};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("field belongs to a different mesh")]
    MeshMismatch,
    #[error("field length {found} does not match vertex count {expected}")]
    Length { expected: usize, found: usize },
    #[error("non-finite value {value} at vertex {vertex}")]
    NonFinite { vertex: usize, value: f64 },
    #[error("zero denominator in relative error norm")]
    ZeroDenominator,
}

/// Vertex-indexed P1 coefficients, tied to the mesh they were created on.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    values: Vec<f64>,
    mesh_id: u64,
}

impl NodalField {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != mesh.num_vertices() {
            return Err(FemError::Length {
                expected: mesh.num_vertices(),
                found: values.len(),
            });
        }
        if let Some((vertex, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FemError::NonFinite { vertex, value });
        }
        Ok(NodalField {
            values,
            mesh_id: mesh.id(),
        })
    }

    pub fn constant(mesh: &SurfaceMesh, value: f64) -> Self {
        NodalField {
            values: vec![value; mesh.num_vertices()],
            mesh_id: mesh.id(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn belongs_to(&self, mesh: &SurfaceMesh) -> bool {
        self.mesh_id == mesh.id() && self.values.len() == mesh.num_vertices()
    }

    pub(crate) fn check(&self, mesh: &SurfaceMesh) -> Result<(), FemError> {
        if self.belongs_to(mesh) {
            Ok(())
        } else {
            Err(FemError::MeshMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparsity pattern of the vertex graph plus diagonal, shared by every
/// matrix assembled on one mesh.
fn pattern_triplets(mesh: &SurfaceMesh) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(mesh.num_vertices() + 2 * mesh.edges().len());
    for i in 0..mesh.num_vertices() {
        t.push((i, i, 0.0));
    }
    for &[a, b] in mesh.edges() {
        t.push((a, b, 0.0));
        t.push((b, a, 0.0));
    }
    t
}

fn assemble_local<F>(mesh: &SurfaceMesh, local: F) -> SparseMatrix
where
    F: Fn(usize) -> [[f64; 3]; 3],
{
    let mut t = pattern_triplets(mesh);
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let m = local(k);
        for a in 0..3 {
            for b in 0..3 {
                t.push((tri[a], tri[b], m[a][b]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_vertices(), &t).expect("mesh indices are validated")
}

pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Local stiffness from the edge vectors opposite each vertex.
pub fn local_stiffness(area: f64, edges: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = dot(edges[a], edges[b]) / (4.0 * area);
        }
    }
    k
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &SurfaceMesh) -> SparseMatrix {
    assemble_local(mesh, |k| local_mass(mesh.geometry()[k].area))
}

/// P1 stiffness matrix of the Laplace-Beltrami operator.
pub fn assemble_stiffness(mesh: &SurfaceMesh) -> SparseMatrix {
    assemble_local(mesh, |k| {
        let g = &mesh.geometry()[k];
        local_stiffness(g.area, &g.edges)
    })
}

/// Mass matrix weighted by a P1 coefficient `w`: entry `(i, j)` is
/// `int w_h chi_i chi_j`, integrated exactly.
pub fn assemble_weighted_mass(mesh: &SurfaceMesh, weight: &[f64]) -> SparseMatrix {
    assemble_local(mesh, |k| {
        let tri = mesh.triangles()[k];
        let area = mesh.geometry()[k].area;
        let w = [weight[tri[0]], weight[tri[1]], weight[tri[2]]];
        let wsum = w[0] + w[1] + w[2];
        // int l_a l_b l_c = 2A a!b!c!/(a+b+c+2)!
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = if a == b {
                    area / 30.0 * (2.0 * w[a] + wsum)
                } else {
                    area / 60.0 * (w[a] + w[b] + wsum)
                };
            }
        }
        m
    })
}

/// Row sums of the consistent mass matrix.
pub fn lumped_mass(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut l = vec![0.0; mesh.num_vertices()];
    for (tri, g) in mesh.triangles().iter().zip(mesh.geometry()) {
        for &v in tri {
            l[v] += g.area / 3.0;
        }
    }
    l
}

/// Lagrange interpolation of a pointwise function.
pub fn interpolate<F>(mesh: &SurfaceMesh, f: F) -> Result<NodalField, FemError>
where
    F: Fn(&[f64; 3]) -> f64,
{
    NodalField::new(mesh, mesh.vertices().iter().map(f).collect())
}

/// Operators shared by every step on one mesh.
#[derive(Debug, Clone)]
pub struct FemSpace {
    pub mesh: SurfaceMesh,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub lumped: Vec<f64>,
}

impl FemSpace {
    pub fn new(mesh: SurfaceMesh) -> Self {
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh);
        let lumped = lumped_mass(&mesh);
        FemSpace {
            mesh,
            mass,
            stiffness,
            lumped,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn area(&self) -> f64 {
        self.mesh.area()
    }

    /// Diagonal matrix in the shared sparsity pattern.
    pub fn diagonal(&self, d: &[f64]) -> SparseMatrix {
        SparseMatrix::diagonal_with_pattern_of(&self.mass, d)
            .expect("diagonal matches vertex count")
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        // 1^T M c equals the lumped-weighted sum exactly.
        self.lumped.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// `int_Gamma_h f_h = 1^T M c`.
pub fn integrate(field: &NodalField, mesh: &SurfaceMesh) -> Result<f64, FemError> {
    field.check(mesh)?;
    Ok(lumped_mass(mesh)
        .iter()
        .zip(field.values())
        .map(|(w, v)| w * v)
        .sum())
}

/// Relative errors `(e_inf, e_1)` of `numeric` against the interpolant of
/// `exact`: maximum norm relative to the vertex maximum of `|exact|`, and the
/// discrete H1 norm `x^T (M + K) x` relative to that of the interpolant.
pub fn error_norms<F>(
    numeric: &NodalField,
    exact: F,
    space: &FemSpace,
) -> Result<(f64, f64), FemError>
where
    F: Fn(&[f64; 3]) -> f64,
{
    numeric.check(&space.mesh)?;
    let ih = interpolate(&space.mesh, exact)?;
    let diff: Vec<f64> = ih
        .values()
        .iter()
        .zip(numeric.values())
        .map(|(a, b)| a - b)
        .collect();
    let exact_max = ih.max_abs();
    let h1 = |x: &[f64]| {
        (space.mass.inner(x, x) + space.stiffness.inner(x, x))
            .max(0.0)
            .sqrt()
    };
    let h1_exact = h1(ih.values());
    if exact_max == 0.0 || h1_exact == 0.0 {
        return Err(FemError::ZeroDenominator);
    }
    let e_inf = diff.iter().fold(0.0f64, |m, v| m.max(v.abs())) / exact_max;
    Ok((e_inf, h1(&diff) / h1_exact))
}
