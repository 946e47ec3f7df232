//! Physics of the reduced raft model: parameters, potentials, exchange laws,
//! the nonlocal bulk concentration and the free energy.

use std::f64::consts::PI;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{FemSpace, NodalField};
use crate::linalg::zero_mean_project;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} must be {requirement}, got {value}")]
    OutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// Law for the cholesterol flux between bulk and membrane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExchangeLaw {
    /// `q = c1 u (1 - v) - c2 v`.
    Reaction,
    /// `q = -c (theta - u)`.
    EnergyDecreasing,
}

/// Model constants. Interface coefficients `gamma`, `D_phi`, `D_v` are fixed
/// to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub eps: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    /// Total cholesterol mass.
    #[serde(rename = "total_mass")]
    pub mass: f64,
    /// Bulk volume.
    #[serde(rename = "bulk_volume")]
    pub vol_bulk: f64,
    pub exchange: ExchangeLaw,
    pub sigma_override: Option<f64>,
}

impl Default for ModelParams {
    /// Baseline set: `c1 = c2 = 500`, `eps = delta = 0.02`, `M = 5|B|` with
    /// `|B| = 4 pi / 3` (unit ball).
    fn default() -> Self {
        let vol_bulk = 4.0 * PI / 3.0;
        ModelParams {
            eps: 0.02,
            delta: 0.02,
            c1: 500.0,
            c2: 500.0,
            c: 500.0,
            mass: 5.0 * vol_bulk,
            vol_bulk,
            exchange: ExchangeLaw::Reaction,
            sigma_override: None,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::OutOfRange {
                    name,
                    requirement: "positive",
                    value,
                })
            }
        };
        let nonneg = |name, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::OutOfRange {
                    name,
                    requirement: "nonnegative",
                    value,
                })
            }
        };
        positive("eps", self.eps)?;
        positive("delta", self.delta)?;
        positive("total_mass", self.mass)?;
        positive("bulk_volume", self.vol_bulk)?;
        match self.exchange {
            ExchangeLaw::Reaction => {
                nonneg("c1", self.c1)?;
                nonneg("c2", self.c2)?;
            }
            ExchangeLaw::EnergyDecreasing => nonneg("c", self.c)?,
        }
        if let Some(s) = self.sigma_override {
            nonneg("sigma_override", s)?;
        }
        Ok(())
    }

    /// Ohta-Kawasaki strength: the override if set, otherwise [`ok_sigma`].
    pub fn effective_sigma(&self, area: f64) -> f64 {
        self.sigma_override.unwrap_or_else(|| ok_sigma(self, area))
    }
}

/// `W = (1 - phi^2)^2 / 4` with its first two derivatives.
pub fn double_well(phi: f64) -> (f64, f64, f64) {
    let s = 1.0 - phi * phi;
    (0.25 * s * s, phi * phi * phi - phi, 3.0 * phi * phi - 1.0)
}

/// Cholesterol chemical potential `(2/delta)(2v - 1 - phi)`.
pub fn theta_of(v: f64, phi: f64, delta: f64) -> f64 {
    2.0 / delta * (2.0 * v - 1.0 - phi)
}

/// Bulk concentration fixed by cholesterol conservation,
/// `u = (M - int v) / |B|`.
pub fn compute_u(v: &NodalField, params: &ModelParams, space: &FemSpace) -> f64 {
    debug_assert!(v.belongs_to(&space.mesh));
    u_from_membrane_mass(space.integrate(v.values()), params)
}

pub fn u_from_membrane_mass(int_v: f64, params: &ModelParams) -> f64 {
    (params.mass - int_v) / params.vol_bulk
}

pub fn exchange_q(u: f64, v: f64, phi: f64, params: &ModelParams) -> f64 {
    match params.exchange {
        ExchangeLaw::Reaction => params.c1 * u * (1.0 - v) - params.c2 * v,
        ExchangeLaw::EnergyDecreasing => -params.c * (theta_of(v, phi, params.delta) - u),
    }
}

/// Coefficients `(a, b, c)` of `p(z) = a z^2 + b z + c` whose positive zero is
/// the limit of `u(t)` under the reaction law.
pub fn equilibrium_polynomial(params: &ModelParams, area: f64) -> (f64, f64, f64) {
    let (c1, c2, vb) = (params.c1, params.c2, params.vol_bulk);
    (
        -c1,
        c1 * (params.mass - area) / vb - c2,
        c2 * params.mass / vb,
    )
}

/// Long-time bulk concentration under the reaction law (closed form).
pub fn u_equilibrium(params: &ModelParams, area: f64) -> f64 {
    let (c1, c2, vb) = (params.c1, params.c2, params.vol_bulk);
    if c1 == 0.0 {
        // p is linear: -c2 z + c2 M/|B|.
        return params.mass / vb;
    }
    let half = 0.5 * ((params.mass - area) / vb - c2 / c1);
    half + (half * half + c2 * params.mass / (c1 * vb)).sqrt()
}

/// `c1 u_inf + c2` from its closed form in the model data.
pub fn effective_exchange_rate(params: &ModelParams, area: f64) -> f64 {
    let (c1, c2, vb) = (params.c1, params.c2, params.vol_bulk);
    let b = c2 + params.mass / vb * c1 - area / vb * c1;
    0.5 * b + (0.25 * b * b + c1 * c2 * area / vb).sqrt()
}

/// Ohta-Kawasaki nonlocal strength `sigma = (c1 u_inf + c2) / 4`.
pub fn ok_sigma(params: &ModelParams, area: f64) -> f64 {
    effective_exchange_rate(params, area) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub surface: f64,
    pub bulk: f64,
    pub total: f64,
}

/// Surface energy with nodal quadrature for the potential and coupling
/// terms; bulk energy `|B| u^2 / 2` for the spatially constant `u`.
pub fn free_energy(
    phi: &[f64],
    v: &[f64],
    u: f64,
    params: &ModelParams,
    space: &FemSpace,
) -> FreeEnergy {
    let gradient = 0.5 * params.eps * space.stiffness.inner(phi, phi);
    let local: f64 = space
        .lumped
        .iter()
        .zip(phi.iter().zip(v))
        .map(|(w, (&p, &q))| {
            let c = 2.0 * q - 1.0 - p;
            w * (double_well(p).0 / params.eps + c * c / (2.0 * params.delta))
        })
        .sum();
    let surface = gradient + local;
    let bulk = 0.5 * params.vol_bulk * u * u;
    FreeEnergy {
        surface,
        bulk,
        total: surface + bulk,
    }
}

/// Deterministic zero-mean perturbation with values in
/// `[-amplitude, amplitude]`. Vertex `i` draws from a ChaCha stream keyed by
/// `seed` at word position `2 i`, so values do not depend on traversal order.
pub fn make_perturbation(space: &FemSpace, amplitude: f64, seed: u64) -> NodalField {
    let n = space.num_vertices();
    if amplitude == 0.0 {
        return NodalField::constant(&space.mesh, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            rng.set_word_pos(2 * i as u128);
            let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
            amplitude * (2.0 * unit - 1.0)
        })
        .collect();
    let mut values = zero_mean_project(&raw, &space.lumped);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > amplitude {
        let s = amplitude / peak;
        values.iter_mut().for_each(|v| *v *= s);
    }
    NodalField::new(&space.mesh, values).expect("finite by construction")
}
