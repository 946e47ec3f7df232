mod common;

use raftfem::benchmarks::ManufacturedProblem;

#[test]
fn closed_form_forcing_matches_finite_differences() {
    let prob = ManufacturedProblem::default();
    let (f1, f2) = common::forcing_mismatch(&prob);
    println!("relative mismatch F1 {f1:.3e}, F2 {f2:.3e}");
    assert!(f1 < 1e-6, "F1 mismatch {f1:e}");
    assert!(f2 < 1e-6, "F2 mismatch {f2:e}");
}

#[test]
fn forcing_oracle_at_wider_interface() {
    let mut prob = ManufacturedProblem::default();
    prob.eps = 0.1;
    prob.params.eps = 0.1;
    let (f1, f2) = common::forcing_mismatch(&prob);
    assert!(f1 < 1e-6 && f2 < 1e-6, "{f1:e} {f2:e}");
}

#[test]
fn sample_points_straddle_the_front() {
    let prob = ManufacturedProblem::default();
    let pts = common::forcing_sample_points(prob.beta, prob.eps, prob.t_end);
    assert_eq!(pts.len(), 20);
    let inside = pts
        .iter()
        .filter(|(th, t)| prob.exact_phi_angle(*th, *t).abs() < 0.99)
        .count();
    assert!(inside >= 10);
}
