//! Overdamped Brownian dynamics of field-driven colloids.
//!
//! Hydrodynamics are free-draining: the diffusivity tensor is `D0·I`, so
//! its divergence vanishes and each coordinate receives independent
//! Gaussian noise of variance `2·D0·dt`.

mod energy;
mod trajectory;

pub use energy::{
    dipole_dipole_energy, dipole_field_energy, p2, pair_electrostatic_energy, total_energy,
    total_forces, Interactions,
};
pub use trajectory::{read_trajectory, write_trajectory};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::rng::{self, Rng};
use crate::Vec2;

/// Planar positions of all particles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfiguration {
    pub positions: Vec<Vec2>,
    pub params_ref: String,
    pub time: f64,
}

impl ParticleConfiguration {
    pub fn new(positions: Vec<Vec2>, params_ref: impl Into<String>, time: f64) -> Self {
        Self {
            positions,
            params_ref: params_ref.into(),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.positions.len() != n {
            return Err(Error::Domain(format!(
                "configuration has {} particles, expected {n}",
                self.positions.len()
            )));
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|r| !(r.x.is_finite() && r.y.is_finite()))
        {
            return Err(Error::Domain(format!("particle {i} has a non-finite position")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<ParticleConfiguration>,
    pub save_interval: f64,
    pub dt: f64,
}

/// Largest change of the screened-repulsion exponent `κ r` allowed per
/// drift step before the step is refined.
const MAX_EXPONENT_STEP: f64 = 0.5;
const MAX_SPLIT: usize = 64;
const MAX_REFINEMENT_DEPTH: usize = 6;

/// Euler-Maruyama integrator for the particle system. Steps whose drift
/// would jump across the steep short-range repulsion are refined into
/// equal sub-steps.
#[derive(Debug, Clone)]
pub struct BrownianDynamics {
    interactions: Interactions,
    mobility: f64,
    d0: f64,
    n_particles: usize,
    params_ref: String,
    noise_scale: f64,
    external_velocity: Vec2,
}

impl BrownianDynamics {
    pub fn new(p: &PhysicalParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            interactions: Interactions::new(p)?,
            mobility: p.d0 / p.temperature_kt,
            d0: p.d0,
            n_particles: p.n_particles,
            params_ref: p.hash(),
            noise_scale: 1.0,
            external_velocity: Vec2::zeros(),
        })
    }

    /// Multiplies the Brownian displacement; 0 gives deterministic descent.
    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    /// Adds a uniform drift velocity to every particle.
    pub fn with_external_velocity(mut self, v: Vec2) -> Self {
        self.external_velocity = v;
        self
    }

    pub fn params_ref(&self) -> &str {
        &self.params_ref
    }

    fn check_dt(dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        Ok(())
    }

    fn advance(
        &self,
        positions: &mut [Vec2],
        forces: &mut [Vec2],
        dt: f64,
        n_steps: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        for _ in 0..n_steps {
            self.interactions.forces_into(positions, forces)?;
            self.advance_interval(positions, forces, dt, 0, rng)?;
        }
        if positions.iter().any(|r| !(r.x.is_finite() && r.y.is_finite())) {
            return Err(Error::Numerical("non-finite position after integration".into()));
        }
        Ok(())
    }

    /// One Euler-Maruyama step of length `h` with `forces` evaluated at
    /// `positions`. When the largest drift displacement would move the
    /// screened repulsion by more than `MAX_EXPONENT_STEP` e-folds, the
    /// interval is split into equal sub-steps instead.
    fn advance_interval(
        &self,
        positions: &mut [Vec2],
        forces: &mut [Vec2],
        h: f64,
        depth: usize,
        rng: &mut Rng,
    ) -> Result<()> {
        let drift_h = self.mobility * h;
        let f_max = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let exponent_step = drift_h * f_max * self.interactions.kappa();
        if exponent_step > MAX_EXPONENT_STEP {
            if depth >= MAX_REFINEMENT_DEPTH || !exponent_step.is_finite() {
                return Err(Error::Numerical(format!(
                    "step refinement did not converge (drift displacement {})",
                    drift_h * f_max
                )));
            }
            let m = ((exponent_step / MAX_EXPONENT_STEP).ceil() as usize).min(MAX_SPLIT);
            for k in 0..m {
                if k > 0 {
                    self.interactions.forces_into(positions, forces)?;
                }
                self.advance_interval(positions, forces, h / m as f64, depth + 1, rng)?;
            }
            return Ok(());
        }
        let amplitude = self.noise_scale * (2.0 * self.d0 * h).sqrt();
        let shift = self.external_velocity * h;
        for (r, f) in positions.iter_mut().zip(forces.iter()) {
            let xi = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            *r += drift_h * f + shift + amplitude * xi;
        }
        Ok(())
    }

    /// One step `r + (D0/kT) F dt + sqrt(2 D0 dt) ξ`.
    pub fn step(
        &self,
        c: &ParticleConfiguration,
        dt: f64,
        rng: &mut Rng,
    ) -> Result<ParticleConfiguration> {
        self.evolve(c, dt, 1, rng)
    }

    /// Advances `n_steps` steps of size `dt`.
    pub fn evolve(
        &self,
        c: &ParticleConfiguration,
        dt: f64,
        n_steps: usize,
        rng: &mut Rng,
    ) -> Result<ParticleConfiguration> {
        Self::check_dt(dt)?;
        let mut positions = c.positions.clone();
        let mut forces = vec![Vec2::zeros(); positions.len()];
        self.advance(&mut positions, &mut forces, dt, n_steps, rng)?;
        Ok(ParticleConfiguration {
            positions,
            params_ref: self.params_ref.clone(),
            time: c.time + n_steps as f64 * dt,
        })
    }

    /// Integrates to `horizon`, storing a frame every `save_interval`
    /// (the initial configuration is frame 0).
    pub fn simulate(
        &self,
        c0: &ParticleConfiguration,
        horizon: f64,
        dt: f64,
        save_interval: f64,
        rng: &mut Rng,
    ) -> Result<Trajectory> {
        Self::check_dt(dt)?;
        c0.validate(self.n_particles)?;
        let steps_per_save = steps_for(save_interval, dt)?;
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::Domain(format!("horizon must be non-negative, got {horizon}")));
        }
        let n_saves = (horizon / save_interval + 1e-9).floor() as usize;
        let mut positions = c0.positions.clone();
        let mut forces = vec![Vec2::zeros(); positions.len()];
        let mut frames = Vec::with_capacity(n_saves + 1);
        frames.push(ParticleConfiguration {
            positions: positions.clone(),
            params_ref: self.params_ref.clone(),
            time: c0.time,
        });
        for k in 1..=n_saves {
            self.advance(&mut positions, &mut forces, dt, steps_per_save, rng)?;
            frames.push(ParticleConfiguration {
                positions: positions.clone(),
                params_ref: self.params_ref.clone(),
                time: c0.time + k as f64 * save_interval,
            });
        }
        Ok(Trajectory {
            frames,
            save_interval,
            dt,
        })
    }

    /// Independent endpoints after evolving `c` for duration `h`; replica
    /// `k` draws its noise from the stream `(seed, k)`.
    pub fn burst(
        &self,
        c: &ParticleConfiguration,
        n_replicas: usize,
        h: f64,
        dt: f64,
        seed: u64,
    ) -> Result<Vec<ParticleConfiguration>> {
        Self::check_dt(dt)?;
        if h < dt {
            return Err(Error::Domain(format!("burst duration {h} is shorter than dt {dt}")));
        }
        let n_steps = (h / dt).round() as usize;
        (0..n_replicas)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(seed, &[k as u64]);
                self.evolve(c, dt, n_steps, &mut rng)
            })
            .collect()
    }
}

/// Number of `dt` steps in `interval`, which must be an integer multiple.
pub fn steps_for(interval: f64, dt: f64) -> Result<usize> {
    let ratio = interval / dt;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-6 * n {
        return Err(Error::Domain(format!(
            "interval {interval} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(n as usize)
}

/// Uniform random non-overlapping placement inside a disk.
pub fn random_configuration(
    n: usize,
    disk_radius: f64,
    min_separation: f64,
    params_ref: &str,
    rng: &mut Rng,
) -> Result<ParticleConfiguration> {
    let mut positions: Vec<Vec2> = Vec::with_capacity(n);
    let max_attempts = 10_000 * n.max(1);
    let mut attempts = 0;
    while positions.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Config(format!(
                "cannot place {n} particles with separation {min_separation} in radius {disk_radius}"
            )));
        }
        let rad = disk_radius * rng.random::<f64>().sqrt();
        let ang = std::f64::consts::TAU * rng.random::<f64>();
        let cand = Vec2::new(rad * ang.cos(), rad * ang.sin());
        if positions.iter().all(|p| (p - cand).norm() >= min_separation) {
            positions.push(cand);
        }
    }
    Ok(ParticleConfiguration::new(positions, params_ref, 0.0))
}
