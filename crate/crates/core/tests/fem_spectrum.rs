mod common;

use nalgebra::DMatrix;
use raftfem::{build_refined_sphere, FemSpace};

#[test]
fn sphere_spectrum_matches_spherical_harmonics() {
    let space = FemSpace::new(build_refined_sphere(5).unwrap());
    let eig = common::lowest_generalized_eigenvalues(&space, 16);
    assert!(eig[0].abs() < 1e-8, "lowest eigenvalue {}", eig[0]);
    let groups = [(1..4, 2.0), (4..9, 6.0), (9..16, 12.0)];
    for (range, exact) in groups {
        for i in range {
            assert!(
                (eig[i] - exact).abs() < 0.02 * exact,
                "eigenvalue {i}: {} vs {exact}",
                eig[i]
            );
        }
    }
}

#[test]
fn mass_matrix_admits_cholesky() {
    for level in 0..3 {
        let space = FemSpace::new(build_refined_sphere(level).unwrap());
        let dense = space.mass.to_dense();
        let n = dense.len();
        let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
        assert!(m.cholesky().is_some(), "level {level}");
    }
}
