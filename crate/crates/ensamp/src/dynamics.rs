//! Toy simulation kernel: overdamped Langevin dynamics on analytic
//! potentials. Stands in for a real MD engine so whole sampling workflows
//! run end to end at desk scale, while keeping the phenomenology that
//! matters here — metastable wells separated by barriers of several kT.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{replica_rng, Replica, ReplicaId};

/// Müller–Brown constants, standard published values.
const MB_A: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
const MB_AX: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
const MB_BX: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
const MB_CX: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
const MB_X0: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
const MB_Y0: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("integration diverged at step {step}: non-finite position (dt too large?)")]
    Diverged { step: usize },
    #[error("replica dimension {got} does not match potential dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("unknown potential `{0}`")]
    UnknownPotential(String),
}

/// Analytic potential energy surfaces.
///
/// Double wells use `V(x) = h (x^2 - 1)^2`, minima at x = ±1 and barrier
/// height `h` at x = 0; with temperature 1 the `barrier` parameter reads
/// directly in kT. The 2d variant adds a transverse term `4 h y^2`, whose
/// curvature matches the wells' x-curvature `8h`, so each well is an
/// isotropic basin and the barrier direction is the only soft mode.
/// Müller–Brown has two main basins connected by two distinct saddle
/// routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Potential {
    DoubleWell1d { barrier: f64 },
    DoubleWell2d { barrier: f64 },
    MuellerBrown,
}

impl Potential {
    pub fn from_name(name: &str, barrier: f64) -> Result<Self, DynamicsError> {
        match name {
            "double_well_1d" => Ok(Potential::DoubleWell1d { barrier }),
            "double_well_2d" => Ok(Potential::DoubleWell2d { barrier }),
            "mueller_brown" => Ok(Potential::MuellerBrown),
            other => Err(DynamicsError::UnknownPotential(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::DoubleWell1d { .. } => "double_well_1d",
            Potential::DoubleWell2d { .. } => "double_well_2d",
            Potential::MuellerBrown => "mueller_brown",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::DoubleWell1d { .. } => 1,
            Potential::DoubleWell2d { .. } | Potential::MuellerBrown => 2,
        }
    }

    /// Canonical start point: the left well for double wells, the deepest
    /// minimum for Müller–Brown.
    pub fn default_start(&self) -> Vec<f64> {
        match self {
            Potential::DoubleWell1d { .. } => vec![-1.0],
            Potential::DoubleWell2d { .. } => vec![-1.0, 0.0],
            Potential::MuellerBrown => vec![-0.558, 1.442],
        }
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        match self {
            Potential::DoubleWell1d { barrier } => {
                let u = x[0] * x[0] - 1.0;
                barrier * u * u
            }
            Potential::DoubleWell2d { barrier } => {
                let u = x[0] * x[0] - 1.0;
                barrier * u * u + 4.0 * barrier * x[1] * x[1]
            }
            Potential::MuellerBrown => {
                let (px, py) = (x[0], x[1]);
                let mut v = 0.0;
                for k in 0..4 {
                    let dx = px - MB_X0[k];
                    let dy = py - MB_Y0[k];
                    v += MB_A[k]
                        * (MB_AX[k] * dx * dx + MB_BX[k] * dx * dy + MB_CX[k] * dy * dy).exp();
                }
                v
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Potential::DoubleWell1d { barrier } => {
                vec![4.0 * barrier * x[0] * (x[0] * x[0] - 1.0)]
            }
            Potential::DoubleWell2d { barrier } => {
                vec![
                    4.0 * barrier * x[0] * (x[0] * x[0] - 1.0),
                    8.0 * barrier * x[1],
                ]
            }
            Potential::MuellerBrown => {
                let (px, py) = (x[0], x[1]);
                let (mut gx, mut gy) = (0.0, 0.0);
                for k in 0..4 {
                    let dx = px - MB_X0[k];
                    let dy = py - MB_Y0[k];
                    let e = MB_A[k]
                        * (MB_AX[k] * dx * dx + MB_BX[k] * dx * dy + MB_CX[k] * dy * dy).exp();
                    gx += e * (2.0 * MB_AX[k] * dx + MB_BX[k] * dy);
                    gy += e * (MB_BX[k] * dx + 2.0 * MB_CX[k] * dy);
                }
                vec![gx, gy]
            }
        }
    }
}

/// Integration parameters for one propagation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LangevinParams {
    pub n_steps: usize,
    pub dt: f64,
    pub kt: f64,
    pub friction: f64,
    pub stride: usize,
}

impl LangevinParams {
    pub fn new(n_steps: usize, dt: f64, kt: f64, friction: f64, stride: usize) -> Self {
        assert!(dt > 0.0 && kt > 0.0 && friction > 0.0 && stride >= 1);
        LangevinParams {
            n_steps,
            dt,
            kt,
            friction,
            stride,
        }
    }
}

/// Positions of one replica sampled along a propagation. `frames` holds the
/// configuration at step 0 and then every `stride` steps; `final_config` is
/// the position after the last step (equal to the last frame whenever
/// `stride` divides `n_steps`). Diffusion-map analysis reads only
/// `final_config`; complementary-coordinates analysis reads all frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub replica_id: ReplicaId,
    pub frames: Vec<Vec<f64>>,
    pub final_config: Vec<f64>,
}

/// Euler–Maruyama update for overdamped Langevin dynamics:
/// `x <- x - (dt/friction) grad V(x) + sqrt(2 kT dt / friction) xi`
/// with `xi` standard normal per coordinate, drawn from the counter-based
/// stream keyed on `(seed, replica id)`. The replica's weight is untouched.
pub fn propagate(
    replica: &Replica,
    potential: &Potential,
    params: &LangevinParams,
    seed: u64,
) -> Result<Trajectory, DynamicsError> {
    if replica.config.len() != potential.dim() {
        return Err(DynamicsError::DimensionMismatch {
            got: replica.config.len(),
            expected: potential.dim(),
        });
    }
    let mut rng = replica_rng(seed, replica.id);
    let mobility = params.dt / params.friction;
    let noise = (2.0 * params.kt * params.dt / params.friction).sqrt();

    let mut x = replica.config.clone();
    let mut frames = Vec::with_capacity(params.n_steps / params.stride + 2);
    frames.push(x.clone());
    for step in 1..=params.n_steps {
        let grad = potential.gradient(&x);
        for (xi, gi) in x.iter_mut().zip(&grad) {
            let z: f64 = rng.sample(StandardNormal);
            *xi += -mobility * gi + noise * z;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::Diverged { step });
        }
        if step % params.stride == 0 {
            frames.push(x.clone());
        }
    }
    Ok(Trajectory {
        replica_id: replica.id,
        frames,
        final_config: x,
    })
}

/// Trajectory text format: the ensemble line format with a frame index
/// column inserted after the weight — header `dim n_frames`, then
/// `id weight frame c1 .. c_dim` per frame.
pub fn write_trajectory_text(traj: &Trajectory, weight: f64) -> String {
    let dim = traj.final_config.len();
    let mut out = String::new();
    writeln!(out, "{} {}", dim, traj.frames.len()).unwrap();
    for (i, frame) in traj.frames.iter().enumerate() {
        write!(out, "{} {} {}", traj.replica_id, weight, i).unwrap();
        for c in frame {
            write!(out, " {}", c).unwrap();
        }
        out.push('\n');
    }
    out
}
