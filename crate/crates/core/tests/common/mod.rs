#![allow(dead_code)]

use astro_float::{BigFloat, Consts, RoundingMode};
use nalgebra::{DMatrix, SymmetricEigen};
use raftfem::linalg::SparseLu;
use raftfem::{FemSpace, SparseMatrix};

fn dense_product(a: &SparseMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut y = vec![0.0; x.nrows()];
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        a.matvec_into(&col, &mut y);
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// Smallest `k` eigenvalues of `K x = lambda M x` by shift-inverted subspace
/// iteration on `(K + M)^{-1} M` with Rayleigh-Ritz projection.
pub fn lowest_generalized_eigenvalues(space: &FemSpace, k: usize) -> Vec<f64> {
    let n = space.num_vertices();
    let block = k + 8;
    let shifted =
        SparseMatrix::linear_combination(&[(1.0, &space.stiffness), (1.0, &space.mass)]).unwrap();
    let lu = SparseLu::factor(&shifted).unwrap();
    let mut x = DMatrix::from_fn(n, block, |i, j| {
        ((i * 7919 + j * 104729) % 1000) as f64 / 1000.0 - 0.5
    });
    let mut ritz = vec![0.0; block];
    for _ in 0..200 {
        let mx = dense_product(&space.mass, &x);
        let mut y = DMatrix::zeros(n, block);
        let mut sol = vec![0.0; n];
        for j in 0..block {
            let rhs: Vec<f64> = mx.column(j).iter().copied().collect();
            lu.solve_into(&rhs, &mut sol);
            y.column_mut(j).copy_from_slice(&sol);
        }
        // Rayleigh-Ritz for (K, M) on span(y).
        let ky = dense_product(&space.stiffness, &y);
        let my = dense_product(&space.mass, &y);
        let kr = y.transpose() * &ky;
        let mr = y.transpose() * &my;
        let mr = (&mr + mr.transpose()) * 0.5;
        let l = mr
            .cholesky()
            .expect("Ritz mass matrix is positive definite")
            .l();
        let linv = l.clone().try_inverse().unwrap();
        let red = &linv * ((&kr + kr.transpose()) * 0.5) * linv.transpose();
        let eig = SymmetricEigen::new(red);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let coeffs = linv.transpose() * &eig.eigenvectors;
        let mut next = DMatrix::zeros(n, block);
        for (dst, &src) in order.iter().enumerate() {
            next.set_column(dst, &(&y * coeffs.column(src)));
        }
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let change = values
            .iter()
            .zip(&ritz)
            .take(k)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ritz = values;
        x = next;
        if change < 1e-10 {
            break;
        }
    }
    ritz.truncate(k);
    ritz
}

/// Independent finite-difference evaluation of the manufactured forcing,
/// built only from the tanh profile: central differences with one
/// Richardson extrapolation for every derivative, carried out in 256-bit
/// floating point so that nesting the differences loses no accuracy.
pub struct FdForcing {
    pub beta: f64,
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub mass: f64,
    pub vol_bulk: f64,
    pub h: f64,
}

const PREC: usize = 256;

#[derive(Clone)]
struct Hp(BigFloat);

thread_local! {
    static CONSTS: std::cell::RefCell<Consts> = std::cell::RefCell::new(Consts::new().unwrap());
}

impl Hp {
    fn new(x: f64) -> Self {
        Hp(BigFloat::from_f64(x, PREC))
    }
    fn add(&self, o: &Hp) -> Hp {
        Hp(self.0.add(&o.0, PREC, RM))
    }
    fn sub(&self, o: &Hp) -> Hp {
        Hp(self.0.sub(&o.0, PREC, RM))
    }
    fn mul(&self, o: &Hp) -> Hp {
        Hp(self.0.mul(&o.0, PREC, RM))
    }
    fn div(&self, o: &Hp) -> Hp {
        Hp(self.0.div(&o.0, PREC, RM))
    }
    fn scale(&self, s: f64) -> Hp {
        self.mul(&Hp::new(s))
    }
    fn tanh(&self) -> Hp {
        CONSTS.with(|c| Hp(self.0.tanh(PREC, RM, &mut c.borrow_mut())))
    }
    fn cot(&self) -> Hp {
        CONSTS.with(|c| {
            let mut c = c.borrow_mut();
            Hp(self
                .0
                .cos(PREC, RM, &mut c)
                .div(&self.0.sin(PREC, RM, &mut c), PREC, RM))
        })
    }
    fn to_f64(&self) -> f64 {
        self.0.to_string().parse().unwrap()
    }
}

const RM: RoundingMode = RoundingMode::ToEven;

impl FdForcing {
    fn phi_hp(&self, theta: &Hp, t: &Hp) -> Hp {
        let width = Hp::new(2.0).0.sqrt(PREC, RM);
        let width = Hp(width).scale(self.eps);
        theta.add(&Hp::new(self.beta)).sub(t).div(&width).tanh()
    }

    pub fn phi(&self, theta: f64, t: f64) -> f64 {
        self.phi_hp(&Hp::new(theta), &Hp::new(t)).to_f64()
    }

    fn richardson(&self, d: impl Fn(&Hp) -> Hp) -> Hp {
        let h = Hp::new(self.h);
        let coarse = d(&h);
        let fine = d(&h.scale(0.5));
        fine.scale(4.0).sub(&coarse).scale(1.0 / 3.0)
    }

    fn d1(&self, f: &impl Fn(&Hp) -> Hp, x: &Hp) -> Hp {
        self.richardson(|h| f(&x.add(h)).sub(&f(&x.sub(h))).div(&h.scale(2.0)))
    }

    fn d2(&self, f: &impl Fn(&Hp) -> Hp, x: &Hp) -> Hp {
        self.richardson(|h| {
            f(&x.add(h))
                .sub(&f(x).scale(2.0))
                .add(&f(&x.sub(h)))
                .div(&h.mul(h))
        })
    }

    fn laplace(&self, f: &impl Fn(&Hp) -> Hp, theta: &Hp) -> Hp {
        self.d2(f, theta).add(&theta.cot().mul(&self.d1(f, theta)))
    }

    fn mu_hp(&self, theta: &Hp, t: &Hp) -> Hp {
        let p = self.phi_hp(theta, t);
        let dw = p.mul(&p).mul(&p).sub(&p);
        let lap = self.laplace(&|s: &Hp| self.phi_hp(s, t), theta);
        lap.scale(-self.eps).add(&dw.scale(1.0 / self.eps))
    }

    pub fn f1(&self, theta: f64, t: f64) -> f64 {
        let (th, t) = (Hp::new(theta), Hp::new(t));
        let dt = self.d1(&|s: &Hp| self.phi_hp(&th, s), &t);
        dt.sub(&self.laplace(&|s: &Hp| self.mu_hp(s, &t), &th))
            .to_f64()
    }

    /// Membrane cholesterol mass by composite Simpson in the polar angle.
    pub fn int_v(&self, t: f64) -> f64 {
        let n = 200_000;
        let dx = std::f64::consts::PI / n as f64;
        let width = std::f64::consts::SQRT_2 * self.eps;
        let f =
            |s: f64| std::f64::consts::PI * s.sin() * (1.0 + ((s + self.beta - t) / width).tanh());
        let mut sum = f(0.0) + f(std::f64::consts::PI);
        for i in 1..n {
            sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * dx);
        }
        sum * dx / 3.0
    }

    pub fn f2(&self, theta: f64, t: f64) -> f64 {
        let u = (self.mass - self.int_v(t)) / self.vol_bulk;
        let th = Hp::new(theta);
        let v = 0.5 * (1.0 + self.phi(theta, t));
        let dv = self.d1(&|s: &Hp| self.phi_hp(&th, s), &Hp::new(t)).to_f64() * 0.5;
        dv - (self.c1 * u * (1.0 - v) - self.c2 * v)
    }
}
/// Twenty `(theta, t)` pairs across the front and the time interval.
pub fn forcing_sample_points(beta: f64, eps: f64, t_end: f64) -> Vec<(f64, f64)> {
    let width = std::f64::consts::SQRT_2 * eps;
    (0..20)
        .map(|i| {
            let t = t_end * (i as f64 + 0.5) / 20.0;
            let offset = -2.5 + 5.0 * ((i * 7) % 20) as f64 / 19.0;
            (t - beta + offset * width, t)
        })
        .collect()
}

/// Largest relative mismatch `|a - b| / max(|b|, 1)` between the closed-form
/// and finite-difference forcings over the sample points.
pub fn forcing_mismatch(prob: &raftfem::benchmarks::ManufacturedProblem) -> (f64, f64) {
    let fd = FdForcing {
        beta: prob.beta,
        eps: prob.eps,
        c1: prob.params.c1,
        c2: prob.params.c2,
        mass: prob.params.mass,
        vol_bulk: prob.params.vol_bulk,
        h: 1e-4,
    };
    let mut worst = (0.0f64, 0.0f64);
    for (theta, t) in forcing_sample_points(prob.beta, prob.eps, prob.t_end) {
        let a1 = prob.forcing_phi(theta, t);
        let b1 = fd.f1(theta, t);
        let a2 = prob.forcing_v_with_u(theta, t, prob.exact_u(t));
        let b2 = fd.f2(theta, t);
        worst.0 = worst.0.max((a1 - b1).abs() / b1.abs().max(1.0));
        worst.1 = worst.1.max((a2 - b2).abs() / b2.abs().max(1.0));
    }
    worst
}
