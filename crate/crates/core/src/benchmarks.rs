//! Validation problems: a manufactured solution with forcing on the unit
//! sphere, the scalar ODE satisfied by the membrane cholesterol mass, and the
//! comparison of stationary states with Ohta-Kawasaki dynamics.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

use crate::fem::{error_norms, FemError, FemSpace, NodalField};
use crate::mesh::{build_refined_sphere, MeshError};
use crate::model::{double_well, make_perturbation, u_equilibrium, ExchangeLaw, ModelParams};
use crate::stepper::{
    run, DiagnosticsRecord, Forcing, RunControl, RunOutput, SimState, StepError, StepperConfig,
    StopReason, Variant,
};
use crate::topology::connected_components;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("run stopped early at t = {t:.6e}: {source}")]
    Incomplete {
        t: f64,
        #[source]
        source: StepError,
    },
    #[error("invalid benchmark setup: {0}")]
    Setup(String),
}

/// Travelling tanh front `phi = tanh((theta + beta - t) / (sqrt(2) eps))` in
/// the polar angle `theta = arccos x3`, with `v = (1 + phi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedProblem {
    pub beta: f64,
    pub eps: f64,
    pub t_end: f64,
    pub params: ModelParams,
}

impl Default for ManufacturedProblem {
    fn default() -> Self {
        let params = ModelParams::default();
        ManufacturedProblem {
            beta: -PI / 4.0,
            eps: params.eps,
            t_end: PI / 4.0,
            params,
        }
    }
}

/// Values of `tanh(s)` and its first four derivatives in `s`.
fn tanh_derivatives(s: f64) -> [f64; 5] {
    let t = s.tanh();
    let d = 1.0 - t * t;
    [
        t,
        d,
        -2.0 * t * d,
        (6.0 * t * t - 2.0) * d,
        (16.0 * t - 24.0 * t * t * t) * d,
    ]
}

pub fn polar_angle(x: &[f64; 3]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    (x[2] / r).clamp(-1.0, 1.0).acos()
}

impl ManufacturedProblem {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let lo = -self.beta;
        let hi = self.t_end - self.beta;
        if !(self.eps > 0.0 && self.t_end >= 0.0 && lo > 0.0 && hi < PI) {
            return Err(BenchmarkError::Setup(format!(
                "front position t - beta must stay in (0, pi) on [0, {}], got [{lo}, {hi}]",
                self.t_end
            )));
        }
        if self.params.exchange != ExchangeLaw::Reaction {
            return Err(BenchmarkError::Setup(
                "manufactured problem uses the reaction law".into(),
            ));
        }
        Ok(())
    }

    fn slope(&self) -> f64 {
        1.0 / (SQRT_2 * self.eps)
    }

    /// `phi` and its first four derivatives in the polar angle.
    pub fn phi_profile(&self, theta: f64, t: f64) -> [f64; 5] {
        let k = self.slope();
        let d = tanh_derivatives((theta + self.beta - t) * k);
        [
            d[0],
            k * d[1],
            k * k * d[2],
            k.powi(3) * d[3],
            k.powi(4) * d[4],
        ]
    }

    pub fn exact_phi_angle(&self, theta: f64, t: f64) -> f64 {
        ((theta + self.beta - t) * self.slope()).tanh()
    }

    pub fn exact_phi(&self, x: &[f64; 3], t: f64) -> f64 {
        self.exact_phi_angle(polar_angle(x), t)
    }

    pub fn exact_v(&self, x: &[f64; 3], t: f64) -> f64 {
        0.5 * (1.0 + self.exact_phi(x, t))
    }

    /// `mu = -eps Lap phi + W'(phi) / eps` together with its first two
    /// derivatives in the polar angle. Near the poles the limits
    /// `cot f' -> f''` and `Lap f -> 2 f''` are used.
    pub fn mu_profile(&self, theta: f64, t: f64) -> [f64; 3] {
        let [p, p1, p2, p3, p4] = self.phi_profile(theta, t);
        let eps = self.eps;
        let (_, dw, ddw) = double_well(p);
        let s = theta.sin();
        if s.abs() < 1e-6 {
            let mu = -eps * 2.0 * p2 + dw / eps;
            let mu2 = -eps * (4.0 / 3.0 * p4 - 2.0 / 3.0 * p2) + ddw * p2 / eps;
            return [mu, 0.0, mu2];
        }
        let cot = theta.cos() / s;
        let csc2 = 1.0 / (s * s);
        let mu = -eps * (p2 + cot * p1) + dw / eps;
        let mu1 = -eps * (p3 + cot * p2 - csc2 * p1) + ddw * p1 / eps;
        let mu2 = -eps * (p4 + cot * p3 - 2.0 * csc2 * p2 + 2.0 * csc2 * cot * p1)
            + (6.0 * p * p1 * p1 + ddw * p2) / eps;
        [mu, mu1, mu2]
    }

    /// Membrane cholesterol mass `int_{S^2} v(., t)`.
    pub fn exact_int_v(&self, t: f64) -> f64 {
        let f = |theta: f64| 2.0 * PI * theta.sin() * 0.5 * (1.0 + self.exact_phi_angle(theta, t));
        // Split at the front so the adaptive rule sees the layer.
        let front = (t - self.beta).clamp(0.0, PI);
        adaptive_simpson(&f, 0.0, front, 1e-11) + adaptive_simpson(&f, front, PI, 1e-11)
    }

    pub fn exact_u(&self, t: f64) -> f64 {
        (self.params.mass - self.exact_int_v(t)) / self.params.vol_bulk
    }

    /// Forcing `F1` of the lipid equation at polar angle `theta`.
    pub fn forcing_phi(&self, theta: f64, t: f64) -> f64 {
        let p1 = self.phi_profile(theta, t)[1];
        let dt_phi = -p1;
        let [_, mu1, mu2] = self.mu_profile(theta, t);
        let s = theta.sin();
        let lap_mu = if s.abs() < 1e-6 {
            2.0 * mu2
        } else {
            mu2 + theta.cos() / s * mu1
        };
        dt_phi - lap_mu
    }

    /// Forcing `F2 = dv/dt - q(u(t), v)` of the cholesterol equation, given
    /// the bulk concentration `u` at time `t`.
    pub fn forcing_v_with_u(&self, theta: f64, t: f64, u: f64) -> f64 {
        let [p, p1, ..] = self.phi_profile(theta, t);
        let v = 0.5 * (1.0 + p);
        let q = self.params.c1 * u * (1.0 - v) - self.params.c2 * v;
        -0.5 * p1 - q
    }

    /// `(F1, F2)` at a point of the unit sphere.
    pub fn forcing(&self, x: &[f64; 3], t: f64) -> (f64, f64) {
        let theta = polar_angle(x);
        (
            self.forcing_phi(theta, t),
            self.forcing_v_with_u(theta, t, self.exact_u(t)),
        )
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

impl Forcing for ManufacturedProblem {
    fn sources(&self, space: &FemSpace, t: f64) -> (Vec<f64>, Vec<f64>) {
        let u = self.exact_u(t);
        space
            .mesh
            .vertices()
            .iter()
            .map(|x| {
                let theta = polar_angle(x);
                (
                    self.forcing_phi(theta, t),
                    self.forcing_v_with_u(theta, t, u),
                )
            })
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub num_vertices: usize,
    pub e_inf: f64,
    pub e_1: f64,
    pub steps: usize,
}

/// Manufactured-solution run on one refinement level, returning the
/// relative errors at the final time.
pub fn convergence_level(
    level: u32,
    prob: &ManufacturedProblem,
    cfg: &StepperConfig,
) -> Result<ConvergenceRow, BenchmarkError> {
    prob.validate()?;
    let space = FemSpace::new(build_refined_sphere(level)?);
    let mut params = prob.params;
    params.eps = prob.eps;
    let phi0 = crate::fem::interpolate(&space.mesh, |x| prob.exact_phi(x, 0.0))?;
    let v0 = crate::fem::interpolate(&space.mesh, |x| prob.exact_v(x, 0.0))?;
    let state = SimState::new(&space, phi0, v0, &params);
    let mut cfg = *cfg;
    cfg.variant = Variant::Reduced;
    let out = run(
        state,
        &params,
        &space,
        &cfg,
        &RunControl::until(prob.t_end),
        Some(prob),
    )?;
    if let Some(e) = out.failure {
        return Err(BenchmarkError::Incomplete {
            t: out.final_state.t,
            source: e,
        });
    }
    let (e_inf, e_1) = error_norms(
        &out.final_state.phi,
        |x| prob.exact_phi(x, prob.t_end),
        &space,
    )?;
    Ok(ConvergenceRow {
        level,
        num_vertices: space.num_vertices(),
        e_inf,
        e_1,
        steps: out.diagnostics.len(),
    })
}

/// Convergence table over `levels`; a failing level does not stop the
/// others.
pub fn run_convergence(
    levels: &[u32],
    prob: &ManufacturedProblem,
    cfg: &StepperConfig,
) -> Vec<(u32, Result<ConvergenceRow, BenchmarkError>)> {
    levels
        .iter()
        .map(|&l| (l, convergence_level(l, prob, cfg)))
        .collect()
}

/// Coefficients of `z' = a0 - a1 z + a2 z^2` for the membrane cholesterol
/// mass `z = int v` under the reaction law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntVOde {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl IntVOde {
    pub fn new(params: &ModelParams, area: f64) -> Self {
        let (c1, c2, m, b) = (params.c1, params.c2, params.mass, params.vol_bulk);
        IntVOde {
            a0: c1 * m * area / b,
            a1: c1 * area / b + c2 + c1 * m / b,
            a2: c1 / b,
        }
    }

    pub fn rhs(&self, z: f64) -> f64 {
        self.a0 - self.a1 * z + self.a2 * z * z
    }

    /// Stationary membrane mass `M - |B| u_inf`.
    pub fn stationary_point(params: &ModelParams, area: f64) -> f64 {
        params.mass - params.vol_bulk * u_equilibrium(params, area)
    }

    fn rk4(&self, z: f64, h: f64, steps: usize) -> f64 {
        let mut z = z;
        for _ in 0..steps {
            let k1 = self.rhs(z);
            let k2 = self.rhs(z + 0.5 * h * k1);
            let k3 = self.rhs(z + 0.5 * h * k2);
            let k4 = self.rhs(z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        z
    }

    /// Advances `z` by `dt`, halving the RK4 step until two successive
    /// refinements agree to `1e-10` (relative to `max(|z|, 1)`).
    pub fn advance(&self, z: f64, dt: f64) -> f64 {
        if dt == 0.0 {
            return z;
        }
        // Start inside the RK4 stability region of the linearization.
        let stiffness = self.a1 + 2.0 * self.a2 * z.abs();
        let mut steps = ((dt.abs() * stiffness).ceil() as usize).max(1);
        let mut prev = self.rk4(z, dt / steps as f64, steps);
        loop {
            steps *= 2;
            let next = self.rk4(z, dt / steps as f64, steps);
            if (next - prev).abs() <= 1e-10 * next.abs().max(1.0) || steps >= 1 << 26 {
                return next;
            }
            prev = next;
        }
    }
}

/// Oracle trajectory of `int v` at the given increasing times, starting
/// from `z0` at `times[0]`.
pub fn ode_int_v(z0: f64, params: &ModelParams, area: f64, times: &[f64]) -> Vec<f64> {
    let ode = IntVOde::new(params, area);
    let mut out = Vec::with_capacity(times.len());
    let mut z = z0;
    let mut t_prev = times.first().copied().unwrap_or(0.0);
    for &t in times {
        z = ode.advance(z, t - t_prev);
        out.push(z);
        t_prev = t;
    }
    out
}

#[derive(Debug)]
pub struct IntVValidation {
    pub max_deviation: f64,
    pub times: Vec<f64>,
    pub fem: Vec<f64>,
    pub oracle: Vec<f64>,
    pub run: RunOutput,
}

/// Runs the reduced system from `phi_hat + R`, `v = v0` and compares the
/// discrete `int v_h` after every accepted step with the ODE oracle started
/// from `int v_h(0)` on the discrete surface area.
pub fn validate_int_v(
    level: u32,
    params: &ModelParams,
    t_end: f64,
    initial: &InitialData,
    cfg: &StepperConfig,
) -> Result<IntVValidation, BenchmarkError> {
    let space = FemSpace::new(build_refined_sphere(level)?);
    let state = initial.state(&space, params);
    let z0 = space.integrate(state.v.values());
    let mut cfg = *cfg;
    cfg.variant = Variant::Reduced;
    let out = run(state, params, &space, &cfg, &RunControl::until(t_end), None)?;
    if let Some(e) = out.failure {
        return Err(BenchmarkError::Incomplete {
            t: out.final_state.t,
            source: e,
        });
    }
    let mut times = vec![0.0];
    let mut fem = vec![z0];
    for d in &out.diagnostics {
        times.push(d.t);
        fem.push(d.int_v);
    }
    let oracle = ode_int_v(z0, params, space.area(), &times);
    let max_deviation = fem
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(IntVValidation {
        max_deviation,
        times,
        fem,
        oracle,
        run: out,
    })
}

/// `phi = phi_hat + R` with a seeded zero-mean perturbation `R`, `v = v0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub phi_hat: f64,
    pub v0: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            phi_hat: -0.5,
            v0: 0.25,
            amplitude: 1e-3,
            seed: 1,
        }
    }
}

impl InitialData {
    pub fn state(&self, space: &FemSpace, params: &ModelParams) -> SimState {
        let r = make_perturbation(space, self.amplitude, self.seed);
        SimState::uniform(space, self.phi_hat, self.v0, Some(&r), params)
    }
}

#[derive(Debug, Clone)]
pub struct OkComparison {
    /// `||phi_red - phi_ok|| / ||phi_red||` in the lumped `L^2` norm.
    pub l2_relative: f64,
    pub linf: f64,
    pub sigma: f64,
    pub components_reduced: usize,
    pub components_ok: usize,
    pub reduced_stationary: bool,
    pub ok_stationary: bool,
    pub reduced: SimState,
    pub ok: SimState,
    pub ok_diagnostics: Vec<DiagnosticsRecord>,
}

/// Runs the reduced system towards an almost stationary state, then
/// continues from its `phi` with Ohta-Kawasaki dynamics (strength `sigma`,
/// defaulting to the value implied by the reaction parameters) and compares
/// the two stationary fields.
pub fn compare_ok_stationary(
    space: &FemSpace,
    params: &ModelParams,
    initial: &InitialData,
    cfg: &StepperConfig,
    t_max: f64,
    sigma: Option<f64>,
) -> Result<OkComparison, BenchmarkError> {
    let reduced = reduced_stationary(space, params, initial, cfg, t_max)?;
    continue_with_ok(space, params, &reduced, cfg, t_max, sigma)
}

/// Reduced-system run to stationarity (or `t_max`).
pub fn reduced_stationary(
    space: &FemSpace,
    params: &ModelParams,
    initial: &InitialData,
    cfg: &StepperConfig,
    t_max: f64,
) -> Result<RunOutput, BenchmarkError> {
    let mut cfg = *cfg;
    cfg.variant = Variant::Reduced;
    let out = run(
        initial.state(space, params),
        params,
        space,
        &cfg,
        &RunControl::until_stationary(t_max),
        None,
    )?;
    if let Some(e) = out.failure {
        return Err(BenchmarkError::Incomplete {
            t: out.final_state.t,
            source: e,
        });
    }
    Ok(out)
}

/// Ohta-Kawasaki continuation of a finished reduced run; see
/// [`compare_ok_stationary`].
pub fn continue_with_ok(
    space: &FemSpace,
    params: &ModelParams,
    reduced: &RunOutput,
    cfg: &StepperConfig,
    t_max: f64,
    sigma: Option<f64>,
) -> Result<OkComparison, BenchmarkError> {
    let mut ok_params = *params;
    ok_params.sigma_override = Some(sigma.unwrap_or_else(|| params.effective_sigma(space.area())));
    let mut cfg = *cfg;
    cfg.variant = Variant::OhtaKawasaki;
    let mut start = reduced.final_state.clone();
    start.t = 0.0;
    let out = run(
        start,
        &ok_params,
        space,
        &cfg,
        &RunControl::until_stationary(t_max),
        None,
    )?;
    if let Some(e) = out.failure {
        return Err(BenchmarkError::Incomplete {
            t: out.final_state.t,
            source: e,
        });
    }
    let a = reduced.final_state.phi.values();
    let b = out.final_state.phi.values();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let l2 = |x: &[f64]| {
        x.iter()
            .zip(&space.lumped)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    };
    let count = |f: &NodalField| connected_components(f, 0.0, space).map(|c| c.len());
    Ok(OkComparison {
        l2_relative: l2(&diff) / l2(a),
        linf: diff.iter().fold(0.0f64, |m, d| m.max(d.abs())),
        sigma: ok_params.sigma_override.unwrap_or_default(),
        components_reduced: count(&reduced.final_state.phi)?,
        components_ok: count(&out.final_state.phi)?,
        reduced_stationary: reduced.stop_reason == StopReason::Stationary,
        ok_stationary: out.stop_reason == StopReason::Stationary,
        reduced: reduced.final_state.clone(),
        ok: out.final_state,
        ok_diagnostics: out.diagnostics,
    })
}
