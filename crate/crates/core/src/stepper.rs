//! Semi-implicit time stepping for the reduced raft system and its
//! Ohta-Kawasaki and energy-decreasing variants, plus the adaptive driver.
//!
//! Each step solves one linear block system in the unknowns
//! `(phi, mu, v)` at the new time level. The double-well term is linearized
//! around the previous state and the bulk concentration `u` is lagged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{assemble_weighted_mass, FemSpace, NodalField};
use crate::linalg::{
    conjugate_gradient, zero_mean_project, BlockSystem, LinalgError, LinearSolver, SolveStats,
    SolverConfig, SparseMatrix,
};
use crate::model::{
    compute_u, double_well, free_energy, ok_sigma, ExchangeLaw, FreeEnergy, ModelParams,
};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("linear solve failed at t = {t:.6e}, tau = {tau:.3e}: {source}")]
    Solver {
        t: f64,
        tau: f64,
        #[source]
        source: LinalgError,
    },
    #[error("non-finite {field} after step at t = {t:.6e}")]
    NonFinite { field: &'static str, t: f64 },
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Reduced,
    OhtaKawasaki,
    EnergyDecreasing,
}

/// Quadrature for the terms that depend nonlinearly on the old state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Nodal quadrature (mass lumping).
    Lumped,
    /// Exact integration of the P1 interpolant.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    /// First step size.
    pub tau_init: f64,
    /// Largest ratio between consecutive step sizes.
    pub max_growth: f64,
    /// `tau = adapt_const / max_rate`, clamped to `[tau_min, tau_max]`.
    pub adapt_const: f64,
    pub stationary_tol: f64,
    pub stationary_steps: usize,
    pub solver: SolverConfig,
    pub quadrature: Quadrature,
    pub variant: Variant,
    /// Constant `S >= 0` added to `W''` in the linearized chemical
    /// potential, i.e. `W'(p) + (W''(p) + S)(phi - p)`. Zero reproduces the
    /// plain linearization; `S = 1` makes the implicit part convex.
    pub stabilization: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            tau_min: 1e-7,
            tau_max: 1e-2,
            tau_init: 1e-6,
            max_growth: 1.2,
            adapt_const: 2e-4,
            stationary_tol: 1e-4,
            stationary_steps: 50,
            solver: SolverConfig::default(),
            quadrature: Quadrature::Lumped,
            variant: Variant::Reduced,
            stabilization: 0.0,
        }
    }
}

impl StepperConfig {
    /// Constant step size `tau`.
    pub fn fixed(tau: f64) -> Self {
        StepperConfig {
            tau_min: tau,
            tau_max: tau,
            tau_init: tau,
            ..Default::default()
        }
    }

    /// Steps growing geometrically by `max_growth` from `tau_init` up to
    /// `tau_max`, ignoring the rate of change of `phi`, with the implicit
    /// part convexified by `stabilization = 1`.
    pub fn ramp(tau_init: f64, tau_max: f64) -> Self {
        StepperConfig {
            tau_init,
            tau_max,
            adapt_const: f64::INFINITY,
            stabilization: 1.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |m: String| Err(StepError::Config(m));
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_max) {
            return bad(format!(
                "need 0 < tau_min <= tau_max, got {} and {}",
                self.tau_min, self.tau_max
            ));
        }
        if !(self.adapt_const > 0.0) {
            return bad(format!(
                "adapt_const must be positive, got {}",
                self.adapt_const
            ));
        }
        if !(self.tau_init > 0.0) {
            return bad(format!("tau_init must be positive, got {}", self.tau_init));
        }
        if !(self.max_growth >= 1.0) {
            return bad(format!("max_growth must be >= 1, got {}", self.max_growth));
        }
        if !(self.stabilization >= 0.0 && self.stabilization.is_finite()) {
            return bad(format!(
                "stabilization must be finite and >= 0, got {}",
                self.stabilization
            ));
        }
        if !(self.stationary_tol >= 0.0) || self.stationary_steps == 0 {
            return bad("stationary_tol must be >= 0 and stationary_steps > 0".into());
        }
        self.solver
            .validate()
            .map_err(|e| StepError::Config(e.to_string()))
    }
}

/// Snapshot of the discrete evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub phi: NodalField,
    pub v: NodalField,
    pub mu: NodalField,
    pub u: f64,
    pub t: f64,
    /// Size of the step that produced this state (0 initially).
    pub tau: f64,
}

impl SimState {
    /// Initial state at `t = 0` with `u` from the mass constraint and a
    /// nodal approximation of the chemical potential `mu`.
    pub fn new(space: &FemSpace, phi: NodalField, v: NodalField, params: &ModelParams) -> Self {
        let u = compute_u(&v, params, space);
        let mu = chemical_potential(space, phi.values(), v.values(), params);
        SimState {
            phi,
            v,
            mu,
            u,
            t: 0.0,
            tau: 0.0,
        }
    }

    /// `phi = phi_hat + perturbation`, `v` constant.
    pub fn uniform(
        space: &FemSpace,
        phi_hat: f64,
        v0: f64,
        perturbation: Option<&NodalField>,
        params: &ModelParams,
    ) -> Self {
        let mut phi = vec![phi_hat; space.num_vertices()];
        if let Some(p) = perturbation {
            for (a, b) in phi.iter_mut().zip(p.values()) {
                *a += b;
            }
        }
        let phi = NodalField::new(&space.mesh, phi).expect("finite initial data");
        Self::new(space, phi, NodalField::constant(&space.mesh, v0), params)
    }
}

/// `mu = -eps Lap phi + W'(phi)/eps - (2v - 1 - phi)/delta` with the
/// Laplacian recovered through the lumped mass.
pub fn chemical_potential(
    space: &FemSpace,
    phi: &[f64],
    v: &[f64],
    params: &ModelParams,
) -> NodalField {
    let mut kphi = vec![0.0; phi.len()];
    space.stiffness.matvec_into(phi, &mut kphi);
    let mu = (0..phi.len())
        .map(|i| {
            params.eps * kphi[i] / space.lumped[i] + double_well(phi[i]).1 / params.eps
                - (2.0 * v[i] - 1.0 - phi[i]) / params.delta
        })
        .collect();
    NodalField::new(&space.mesh, mu).unwrap_or_else(|_| NodalField::constant(&space.mesh, f64::NAN))
}

/// Source terms added to the lipid and membrane-cholesterol equations.
pub trait Forcing {
    /// Nodal values of the two sources at time `t`.
    fn sources(&self, space: &FemSpace, t: f64) -> (Vec<f64>, Vec<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub solve: SolveStats,
    /// Retries with halved step size before acceptance.
    pub retries: usize,
}

struct Quad<'a> {
    space: &'a FemSpace,
    kind: Quadrature,
    stabilization: f64,
}

impl Quad<'_> {
    /// Matrix of `int g_h phi eta`.
    fn matrix(&self, g: &[f64]) -> SparseMatrix {
        match self.kind {
            Quadrature::Lumped => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(&self.space.lumped)
                    .map(|(g, w)| g * w)
                    .collect();
                self.space.diagonal(&d)
            }
            Quadrature::Consistent => assemble_weighted_mass(&self.space.mesh, g),
        }
    }

    /// Load vector of `int r_h eta`.
    fn vector(&self, r: &[f64]) -> Vec<f64> {
        match self.kind {
            Quadrature::Lumped => r
                .iter()
                .zip(&self.space.lumped)
                .map(|(r, w)| r * w)
                .collect(),
            Quadrature::Consistent => {
                let mut out = vec![0.0; r.len()];
                self.space.mass.matvec_into(r, &mut out);
                out
            }
        }
    }
}

fn lin(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
    SparseMatrix::linear_combination(terms).expect("operators share the vertex count")
}

/// Blocks of the Cahn-Hilliard part shared by every variant: rows for
/// `phi` and `mu`. Returns `(A_phiphi, A_phimu, A_muphi, A_mumu, rhs_phi,
/// rhs_mu)` with the coupling to `v` left to the caller.
#[allow(clippy::type_complexity)]
fn cahn_hilliard_rows(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    quad: &Quad,
) -> (
    SparseMatrix,
    SparseMatrix,
    SparseMatrix,
    SparseMatrix,
    Vec<f64>,
    Vec<f64>,
) {
    let (m, k) = (&space.mass, &space.stiffness);
    let phi = state.phi.values();
    let (ddw, rhs_w): (Vec<f64>, Vec<f64>) = phi
        .iter()
        .map(|&p| {
            let (_, dw, ddw) = double_well(p);
            let ddw = ddw + quad.stabilization;
            (ddw, ddw * p - dw)
        })
        .unzip();
    let nonlinear = quad.matrix(&ddw);
    let a_pp = m.scaled(1.0 / tau);
    let a_pm = k.clone();
    let a_mp = lin(&[(params.eps, k), (1.0 / params.eps, &nonlinear)]);
    let a_mm = m.scaled(-1.0);
    let mut rhs_phi = vec![0.0; phi.len()];
    m.matvec_into(phi, &mut rhs_phi);
    rhs_phi.iter_mut().for_each(|r| *r /= tau);
    let rhs_mu: Vec<f64> = quad.vector(&rhs_w).iter().map(|r| r / params.eps).collect();
    (a_pp, a_pm, a_mp, a_mm, rhs_phi, rhs_mu)
}

/// Assembles the block system for the reduced model with the reaction or
/// energy-decreasing exchange law.
pub fn assemble_reduced_system(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
    forcing: Option<(&[f64], &[f64])>,
) -> BlockSystem {
    let n = space.num_vertices();
    let quad = Quad {
        space,
        kind: cfg.quadrature,
        stabilization: cfg.stabilization,
    };
    let (m, k) = (&space.mass, &space.stiffness);
    let delta = params.delta;
    let (a_pp, a_pm, a_mp_ch, a_mm, mut rhs_phi, mut rhs_mu) =
        cahn_hilliard_rows(state, tau, params, space, &quad);

    let a_mp = lin(&[(1.0, &a_mp_ch), (1.0 / delta, m)]);
    let a_mv = m.scaled(-2.0 / delta);
    for (r, w) in rhs_mu.iter_mut().zip(&space.lumped) {
        *r -= w / delta;
    }

    let u = state.u;
    let ones = vec![1.0; n];
    let (a_vp, a_vv, rhs_v_exchange) = match params.exchange {
        ExchangeLaw::Reaction => {
            let rate = params.c1 * u + params.c2;
            let reaction = quad.matrix(&vec![rate; n]);
            let a_vv = lin(&[(1.0 / tau, m), (4.0 / delta, k), (1.0, &reaction)]);
            let load: Vec<f64> = quad
                .vector(&ones)
                .iter()
                .map(|w| params.c1 * u * w)
                .collect();
            (k.scaled(-2.0 / delta), a_vv, load)
        }
        ExchangeLaw::EnergyDecreasing => {
            // -q = c (2/delta)(2v - 1 - phi) - c u, implicit in (v, phi).
            let c = params.c;
            let q = quad.matrix(&ones);
            let a_vp = lin(&[(-2.0 / delta, k), (-2.0 * c / delta, &q)]);
            let a_vv = lin(&[(1.0 / tau, m), (4.0 / delta, k), (4.0 * c / delta, &q)]);
            let load: Vec<f64> = quad
                .vector(&ones)
                .iter()
                .map(|w| (2.0 * c / delta + c * u) * w)
                .collect();
            (a_vp, a_vv, load)
        }
    };
    let mut rhs_v = vec![0.0; n];
    m.matvec_into(state.v.values(), &mut rhs_v);
    for (r, l) in rhs_v.iter_mut().zip(&rhs_v_exchange) {
        *r = *r / tau + l;
    }
    if let Some((f1, f2)) = forcing {
        for i in 0..n {
            rhs_phi[i] += space.lumped[i] * f1[i];
            rhs_v[i] += space.lumped[i] * f2[i];
        }
    }

    let mut sys = BlockSystem::new(3, n);
    let blocks = [
        (0, 0, a_pp),
        (0, 1, a_pm),
        (1, 0, a_mp),
        (1, 1, a_mm),
        (1, 2, a_mv),
        (2, 0, a_vp),
        (2, 2, a_vv),
    ];
    for (r, c, b) in blocks {
        sys.set_block(r, c, b)
            .expect("blocks sized by vertex count");
    }
    sys.rhs_block_mut(0).copy_from_slice(&rhs_phi);
    sys.rhs_block_mut(1).copy_from_slice(&rhs_mu);
    sys.rhs_block_mut(2).copy_from_slice(&rhs_v);
    sys
}

fn initial_guess(state: &SimState, blocks: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(blocks * state.phi.len());
    x.extend_from_slice(state.phi.values());
    x.extend_from_slice(state.mu.values());
    if blocks == 3 {
        x.extend_from_slice(state.v.values());
    }
    x
}

fn solve_system(
    sys: &BlockSystem,
    guess: Vec<f64>,
    solver: &mut LinearSolver,
    t: f64,
    tau: f64,
) -> Result<(Vec<f64>, SolveStats), StepError> {
    let a = sys.flatten();
    let mut x = guess;
    let stats = solver
        .solve(&a, &sys.rhs, &mut x)
        .map_err(|source| StepError::Solver { t, tau, source })?;
    Ok((x, stats))
}

fn field(
    space: &FemSpace,
    values: &[f64],
    name: &'static str,
    t: f64,
) -> Result<NodalField, StepError> {
    NodalField::new(&space.mesh, values.to_vec())
        .map_err(|_| StepError::NonFinite { field: name, t })
}

/// One step of the reduced system (reaction or energy-decreasing law as
/// selected by `params.exchange`), with optional source terms evaluated at
/// the new time.
pub fn step_reduced_with(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
    forcing: Option<&dyn Forcing>,
    solver: &mut LinearSolver,
) -> Result<(SimState, SolveStats), StepError> {
    let t_new = state.t + tau;
    let sources = forcing.map(|f| f.sources(space, t_new));
    let sys = assemble_reduced_system(
        state,
        tau,
        params,
        space,
        cfg,
        sources.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
    );
    let (x, stats) = solve_system(&sys, initial_guess(state, 3), solver, state.t, tau)?;
    let n = space.num_vertices();
    let phi = field(space, &x[..n], "phi", t_new)?;
    let mu = field(space, &x[n..2 * n], "mu", t_new)?;
    let v = field(space, &x[2 * n..], "v", t_new)?;
    let u = compute_u(&v, params, space);
    if u < 0.0 {
        log::warn!("bulk concentration negative (u = {u:.4e}) at t = {t_new:.6e}");
    }
    Ok((
        SimState {
            phi,
            v,
            mu,
            u,
            t: t_new,
            tau,
        },
        stats,
    ))
}

/// One step of the reduced system with the reaction exchange law.
pub fn step_reduced(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
) -> Result<(SimState, SolveStats), StepError> {
    if params.exchange != ExchangeLaw::Reaction {
        return Err(StepError::Config(
            "step_reduced requires the reaction exchange law".into(),
        ));
    }
    step_reduced_with(
        state,
        tau,
        params,
        space,
        cfg,
        None,
        &mut LinearSolver::new(cfg.solver),
    )
}

/// One step with the energy-decreasing exchange `q = -c (theta - u)`.
pub fn step_energy_decreasing(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
) -> Result<(SimState, SolveStats), StepError> {
    if params.exchange != ExchangeLaw::EnergyDecreasing {
        return Err(StepError::Config(
            "energy-decreasing step requires that exchange law".into(),
        ));
    }
    step_reduced_with(
        state,
        tau,
        params,
        space,
        cfg,
        None,
        &mut LinearSolver::new(cfg.solver),
    )
}

/// Mean-field potential `z` with `K z = M (phi - mean(phi))` and zero
/// weighted mean, i.e. `z = (-Lap)^{-1} (phi - mean(phi))`.
pub fn ok_potential(space: &FemSpace, phi: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = phi.len();
    let centered = zero_mean_project(phi, &space.lumped);
    let mut rhs = vec![0.0; n];
    space.mass.matvec_into(&centered, &mut rhs);
    // Remove rounding so the right side lies in the range of K.
    let mean = rhs.iter().sum::<f64>() / n as f64;
    rhs.iter_mut().for_each(|r| *r -= mean);
    let out = conjugate_gradient(&space.stiffness, &rhs, &vec![0.0; n], 1e-11, 20 * n)?;
    Ok(zero_mean_project(&out.x, &space.lumped))
}

/// Ohta-Kawasaki energy: Cahn-Hilliard part plus `sigma/2 z^T K z`.
pub fn ok_energy(
    space: &FemSpace,
    phi: &[f64],
    params: &ModelParams,
    sigma: f64,
) -> Result<f64, LinalgError> {
    let z = ok_potential(space, phi)?;
    let ch = 0.5 * params.eps * space.stiffness.inner(phi, phi)
        + space
            .lumped
            .iter()
            .zip(phi)
            .map(|(w, &p)| w * double_well(p).0 / params.eps)
            .sum::<f64>();
    Ok(ch + 0.5 * sigma * space.stiffness.inner(&z, &z))
}

/// Assembles the two-block Cahn-Hilliard system with the lagged nonlocal
/// term `sigma * z(phi_old)` in the chemical potential.
pub fn assemble_ok_system(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
    sigma: f64,
) -> Result<BlockSystem, LinalgError> {
    let n = space.num_vertices();
    let quad = Quad {
        space,
        kind: cfg.quadrature,
        stabilization: cfg.stabilization,
    };
    let (a_pp, a_pm, a_mp, a_mm, rhs_phi, mut rhs_mu) =
        cahn_hilliard_rows(state, tau, params, space, &quad);
    if sigma != 0.0 {
        let z = ok_potential(space, state.phi.values())?;
        let mut mz = vec![0.0; n];
        space.mass.matvec_into(&z, &mut mz);
        for (r, s) in rhs_mu.iter_mut().zip(mz) {
            *r -= sigma * s;
        }
    }
    let mut sys = BlockSystem::new(2, n);
    for (r, c, b) in [(0, 0, a_pp), (0, 1, a_pm), (1, 0, a_mp), (1, 1, a_mm)] {
        sys.set_block(r, c, b)?;
    }
    sys.rhs_block_mut(0).copy_from_slice(&rhs_phi);
    sys.rhs_block_mut(1).copy_from_slice(&rhs_mu);
    Ok(sys)
}

/// One Ohta-Kawasaki step. `v` and `u` are carried over unchanged.
pub fn step_ok(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
) -> Result<(SimState, SolveStats), StepError> {
    let sigma = params.effective_sigma(space.area());
    step_ok_with_sigma(
        state,
        tau,
        params,
        space,
        cfg,
        sigma,
        &mut LinearSolver::new(cfg.solver),
    )
}

pub fn step_ok_with_sigma(
    state: &SimState,
    tau: f64,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
    sigma: f64,
    solver: &mut LinearSolver,
) -> Result<(SimState, SolveStats), StepError> {
    let t_new = state.t + tau;
    let sys = assemble_ok_system(state, tau, params, space, cfg, sigma).map_err(|source| {
        StepError::Solver {
            t: state.t,
            tau,
            source,
        }
    })?;
    let (x, stats) = solve_system(&sys, initial_guess(state, 2), solver, state.t, tau)?;
    let n = space.num_vertices();
    let phi = field(space, &x[..n], "phi", t_new)?;
    let mu = field(space, &x[n..], "mu", t_new)?;
    Ok((
        SimState {
            phi,
            v: state.v.clone(),
            mu,
            u: state.u,
            t: t_new,
            tau,
        },
        stats,
    ))
}

/// Step size inversely proportional to the previous maximal rate of change
/// of `phi`, clamped to the configured bounds.
pub fn adapt_tau(prev_max_rate: f64, config: &StepperConfig) -> f64 {
    let rate = prev_max_rate.max(f64::MIN_POSITIVE);
    (config.adapt_const / rate).clamp(config.tau_min, config.tau_max)
}

/// Per-step scalars recorded by [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub int_phi: f64,
    pub int_v: f64,
    pub u: f64,
    pub energy_surface: f64,
    pub energy_bulk: f64,
    pub energy_total: f64,
    pub max_rate: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 12] = [
        "step",
        "t",
        "tau",
        "int_phi",
        "int_v",
        "u",
        "energy_surface",
        "energy_bulk",
        "energy_total",
        "max_rate",
        "solver_iterations",
        "solver_residual",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EndTime,
    Stationary,
    MaxSteps,
    Failed,
}

#[derive(Debug, Clone)]
pub struct RunControl {
    pub t_end: f64,
    pub stop_on_stationary: bool,
    pub max_steps: usize,
    /// Sorted times at which to keep a copy of the state; steps are
    /// shortened to land on them.
    pub snapshot_times: Vec<f64>,
}

impl RunControl {
    pub fn until(t_end: f64) -> Self {
        RunControl {
            t_end,
            stop_on_stationary: false,
            max_steps: usize::MAX,
            snapshot_times: Vec::new(),
        }
    }

    pub fn until_stationary(t_max: f64) -> Self {
        RunControl {
            stop_on_stationary: true,
            ..Self::until(t_max)
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub final_state: SimState,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<SimState>,
    pub stop_reason: StopReason,
    /// Set when a step kept failing after the retries; the other fields hold
    /// the partial results up to the failure.
    pub failure: Option<StepError>,
}

impl RunOutput {
    /// Largest per-step change of `int phi`.
    pub fn max_lipid_drift(&self, initial_int_phi: f64) -> f64 {
        let mut prev = initial_int_phi;
        let mut worst = 0.0f64;
        for d in &self.diagnostics {
            worst = worst.max((d.int_phi - prev).abs());
            prev = d.int_phi;
        }
        worst
    }
}

const MAX_RETRIES: usize = 5;

/// Evolution with adaptive steps until `t_end`, stationarity or the step
/// cap. A failing step is retried with halved step size up to five times.
pub fn run(
    initial: SimState,
    params: &ModelParams,
    space: &FemSpace,
    cfg: &StepperConfig,
    control: &RunControl,
    forcing: Option<&dyn Forcing>,
) -> Result<RunOutput, StepError> {
    cfg.validate()?;
    params
        .validate()
        .map_err(|e| StepError::Config(e.to_string()))?;
    match (cfg.variant, params.exchange) {
        (Variant::EnergyDecreasing, ExchangeLaw::Reaction)
        | (Variant::Reduced, ExchangeLaw::EnergyDecreasing) => {
            return Err(StepError::Config(format!(
                "variant {:?} is inconsistent with exchange law {:?}",
                cfg.variant, params.exchange
            )))
        }
        _ => {}
    }
    let sigma = match cfg.variant {
        Variant::OhtaKawasaki => params
            .sigma_override
            .unwrap_or_else(|| ok_sigma(params, space.area())),
        _ => 0.0,
    };

    let mut solver = LinearSolver::new(cfg.solver);
    let mut state = initial;
    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending_snapshots: Vec<f64> = control
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s >= state.t)
        .collect();
    pending_snapshots.sort_by(f64::total_cmp);
    if pending_snapshots.first() == Some(&state.t) {
        snapshots.push(state.clone());
        pending_snapshots.remove(0);
    }
    let mut tau = cfg.tau_init.clamp(cfg.tau_min, cfg.tau_max);
    let mut quiet_steps = 0usize;
    let time_eps = 1e-12 * control.t_end.abs().max(1.0);

    let mut stop_reason = StopReason::EndTime;
    let mut failure = None;
    let mut step_index = 0usize;
    while state.t < control.t_end - time_eps {
        if step_index >= control.max_steps {
            stop_reason = StopReason::MaxSteps;
            break;
        }
        let mut target = control.t_end;
        if let Some(&s) = pending_snapshots.first() {
            target = target.min(s);
        }
        let mut tau_try = tau.min(target - state.t);
        if target - state.t - tau_try < 1e-3 * tau_try {
            tau_try = target - state.t;
        }

        let mut attempt = 0;
        let accepted = loop {
            let result = match cfg.variant {
                Variant::Reduced | Variant::EnergyDecreasing => {
                    step_reduced_with(&state, tau_try, params, space, cfg, forcing, &mut solver)
                }
                Variant::OhtaKawasaki => {
                    step_ok_with_sigma(&state, tau_try, params, space, cfg, sigma, &mut solver)
                }
            };
            match result {
                Ok(ok) => break Some((ok, attempt)),
                Err(e) if attempt < MAX_RETRIES => {
                    solver.reset();
                    log::warn!(
                        "step failed ({e}); retrying with tau = {:.3e}",
                        tau_try / 2.0
                    );
                    attempt += 1;
                    tau_try /= 2.0;
                }
                Err(e) => {
                    failure = Some(e);
                    break None;
                }
            }
        };
        let Some(((next, stats), retries)) = accepted else {
            stop_reason = StopReason::Failed;
            break;
        };
        step_index += 1;

        let max_rate = next
            .phi
            .values()
            .iter()
            .zip(state.phi.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / tau_try;
        let energy = match cfg.variant {
            Variant::OhtaKawasaki => {
                let e = ok_energy(space, next.phi.values(), params, sigma).unwrap_or(f64::NAN);
                FreeEnergy {
                    surface: e,
                    bulk: 0.0,
                    total: e,
                }
            }
            _ => free_energy(next.phi.values(), next.v.values(), next.u, params, space),
        };
        diagnostics.push(DiagnosticsRecord {
            step: step_index,
            t: next.t,
            tau: tau_try,
            int_phi: space.integrate(next.phi.values()),
            int_v: space.integrate(next.v.values()),
            u: next.u,
            energy_surface: energy.surface,
            energy_bulk: energy.bulk,
            energy_total: energy.total,
            max_rate,
            solver_iterations: stats.iterations,
            solver_residual: stats.residual,
        });
        if step_index % 500 == 0 {
            log::debug!(
                "step {step_index}: t = {:.6e}, tau = {tau_try:.3e}, rate = {max_rate:.3e}",
                next.t
            );
        }
        state = next;
        if let Some(&s) = pending_snapshots.first() {
            if state.t >= s - time_eps {
                snapshots.push(state.clone());
                pending_snapshots.remove(0);
            }
        }

        quiet_steps = if max_rate < cfg.stationary_tol {
            quiet_steps + 1
        } else {
            0
        };
        if control.stop_on_stationary && quiet_steps >= cfg.stationary_steps {
            stop_reason = StopReason::Stationary;
            break;
        }
        let base = if retries > 0 { tau_try } else { tau };
        tau = adapt_tau(max_rate, cfg)
            .min(base * cfg.max_growth)
            .max(cfg.tau_min);
    }
    Ok(RunOutput {
        final_state: state,
        diagnostics,
        snapshots,
        stop_reason,
        failure,
    })
}

/// Membrane-cholesterol mass implied by a bulk concentration.
pub fn membrane_mass_from_u(u: f64, params: &ModelParams) -> f64 {
    params.mass - params.vol_bulk * u
}
