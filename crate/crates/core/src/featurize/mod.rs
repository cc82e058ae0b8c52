//! Permutation- and rigid-motion-invariant density features.
//!
//! A configuration is canonically ordered, centered, matched to the
//! reference by polar order, rotated onto it with Kabsch, and converted to a
//! normalized Gaussian KDE on the pipeline-wide grid.

mod kabsch;
mod kde;

pub use kabsch::{
    alignment_residual, kabsch_align, kabsch_rotation, rotate, AlignedConfiguration,
};
pub use kde::{
    configuration_bandwidth, densities_to_text, kde_density, kde_with_bandwidth, mean_axis_std,
    parse_densities, read_densities, scott_bandwidth, write_densities, DensityField, GridSpec,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bd::{read_trajectory, ParticleConfiguration};
use crate::error::{Error, Result};
use crate::order::radius_of_gyration;
use crate::Vec2;

/// Default number of grid nodes per axis.
pub const GRID_SIZE: usize = 64;
/// Relative dilation of the reference bounding box.
pub const GRID_DILATION: f64 = 0.5;

pub fn center_points(points: &[Vec2]) -> Vec<Vec2> {
    if points.is_empty() {
        return Vec::new();
    }
    let mean = points.iter().sum::<Vec2>() / points.len() as f64;
    points.iter().map(|p| p - mean).collect()
}

/// Translates the configuration so its centroid is at the origin.
pub fn center(c: &ParticleConfiguration) -> ParticleConfiguration {
    ParticleConfiguration {
        positions: center_points(&c.positions),
        ..c.clone()
    }
}

/// Lexicographic order on raw coordinates; makes every later floating-point
/// reduction independent of the input row order.
pub fn canonical_order(points: &[Vec2]) -> Vec<Vec2> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    sorted
}

/// Orders centered points by (angle, radius), with angles measured from the
/// direction of the particle farthest from the centroid so the order turns
/// with the configuration.
pub fn polar_order(points: &[Vec2]) -> Vec<Vec2> {
    let Some(anchor) = points
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
    else {
        return Vec::new();
    };
    let base = anchor.y.atan2(anchor.x);
    let tau = std::f64::consts::TAU;
    let key = |p: &Vec2| {
        let a = (p.y.atan2(p.x) - base).rem_euclid(tau);
        // the anchor itself sits at angle 0
        if a >= tau - 1e-12 {
            0.0
        } else {
            a
        }
    };
    let mut keyed: Vec<(f64, f64, Vec2)> = points.iter().map(|p| (key(p), p.norm(), *p)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keyed.into_iter().map(|(_, _, p)| p).collect()
}

/// Index of the configuration with smallest Rg (earliest on ties).
pub fn select_reference(configs: &[ParticleConfiguration]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in configs.iter().enumerate() {
        let rg = radius_of_gyration(&c.positions);
        if best.is_none_or(|(_, b)| rg < b) {
            best = Some((i, rg));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Empty("no configurations to select a reference from".into()))
}

/// Alignment reference plus the shared density grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    /// Centered, polar-ordered reference positions.
    pub reference: Vec<[f64; 2]>,
    pub reference_id: String,
    pub grid_size: usize,
    pub half_width: f64,
}

impl Featurizer {
    /// Grid from the reference bounding box dilated by `dilation`.
    pub fn new(reference: &ParticleConfiguration, reference_id: &str, grid_size: usize, dilation: f64) -> Self {
        let centered = polar_order(&center_points(&canonical_order(&reference.positions)));
        let extent = centered
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max);
        Self {
            reference: centered.iter().map(|p| [p.x, p.y]).collect(),
            reference_id: reference_id.to_string(),
            grid_size,
            half_width: extent * (1.0 + dilation),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::square(self.half_width, self.grid_size)
    }

    pub fn reference_points(&self) -> Vec<Vec2> {
        self.reference.iter().map(|p| Vec2::new(p[0], p[1])).collect()
    }

    /// Centers, orders and rotates a configuration onto the reference.
    pub fn align(&self, positions: &[Vec2]) -> Result<AlignedConfiguration> {
        let ordered = polar_order(&center_points(&canonical_order(positions)));
        kabsch_align(&ordered, &self.reference_points(), &self.reference_id)
    }

    /// Smallest half-width keeping `aligned` three bandwidths inside.
    pub fn required_half_width(aligned: &AlignedConfiguration) -> Result<f64> {
        let bw = configuration_bandwidth(&aligned.positions)?;
        let extent = aligned
            .positions
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max);
        Ok(extent + 3.0 * bw)
    }

    /// Widens the grid so every configuration fits inside its margin.
    pub fn widen_to_cover(&mut self, configs: &[ParticleConfiguration]) -> Result<()> {
        for c in configs {
            let aligned = self.align(&c.positions)?;
            // small slack so the boundary particle passes the margin test
            let need = Self::required_half_width(&aligned)? * (1.0 + 1e-9);
            self.half_width = self.half_width.max(need);
        }
        Ok(())
    }

    pub fn featurize(&self, positions: &[Vec2]) -> Result<DensityField> {
        let aligned = self.align(positions)?;
        kde_density(&aligned.positions, &self.grid())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::table::write_text(path, &serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&crate::table::read_text(path)?)?)
    }
}

/// Frames from an externally recorded trajectory, rescaled into simulation
/// units, plus the index of their own min-Rg reference.
#[derive(Debug, Clone)]
pub struct ExternalFrames {
    pub frames: Vec<ParticleConfiguration>,
    pub reference_index: usize,
}

/// Reads an external trajectory file and multiplies positions by
/// `radius_scale`. Particle counts may differ from the simulations.
pub fn ingest_external(path: &Path, radius_scale: f64) -> Result<ExternalFrames> {
    if !(radius_scale.is_finite() && radius_scale > 0.0) {
        return Err(Error::Domain(format!("radius scale must be positive, got {radius_scale}")));
    }
    let traj = read_trajectory(path)?;
    let frames: Vec<ParticleConfiguration> = traj
        .frames
        .into_iter()
        .map(|f| ParticleConfiguration {
            positions: f.positions.iter().map(|p| p * radius_scale).collect(),
            ..f
        })
        .collect();
    let reference_index = select_reference(&frames)?;
    Ok(ExternalFrames {
        frames,
        reference_index,
    })
}

/// Ratio that maps the external reference radius onto the simulation one.
pub fn radius_ratio(simulation_reference: &[Vec2], external_reference: &[Vec2]) -> Result<f64> {
    let sim = radius_of_gyration(simulation_reference);
    let ext = radius_of_gyration(external_reference);
    if !(ext > 0.0) {
        return Err(Error::Degenerate("external reference has zero radius".into()));
    }
    Ok(sim / ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = crate::rng::rng_from_seed(seed);
        (0..n)
            .map(|_| Vec2::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)))
            .collect()
    }

    fn config(points: Vec<Vec2>) -> ParticleConfiguration {
        ParticleConfiguration::new(points, "t", 0.0)
    }

    #[test]
    fn centering_cases() {
        let pts = center_points(&random_points(30, 1));
        assert_eq!(center_points(&[Vec2::new(1.0, 1.0), Vec2::new(-1.0, -1.0)])[0], Vec2::new(1.0, 1.0));
        let shifted: Vec<Vec2> = pts.iter().map(|p| p + Vec2::new(3.0, -1.0)).collect();
        let back = center(&config(shifted));
        for (a, b) in back.positions.iter().zip(&pts) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let centroid = back.positions.iter().sum::<Vec2>() / 30.0;
        assert!(centroid.norm() <= 1e-12);
    }

    #[test]
    fn reference_selection_prefers_earliest_minimum() {
        let small = config(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
        let large = config(vec![Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0)]);
        assert_eq!(select_reference(&[large.clone(), small.clone(), small]).unwrap(), 1);
        assert!(select_reference(&[]).is_err());
    }

    fn featurizer_for(points: &[Vec2]) -> Featurizer {
        let mut f = Featurizer::new(&config(points.to_vec()), "ref", GRID_SIZE, GRID_DILATION);
        f.half_width = 14.0;
        f
    }

    #[test]
    fn featurization_is_permutation_invariant_bitwise() {
        let reference = random_points(25, 2);
        let feat = featurizer_for(&reference);
        let pts = random_points(25, 3);
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut crate::rng::rng_from_seed(4));
        let a = feat.featurize(&pts).unwrap();
        let b = feat.featurize(&shuffled).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn featurization_is_rigid_motion_invariant() {
        let reference = random_points(25, 5);
        let feat = featurizer_for(&reference);
        for seed in 0..5 {
            let pts = random_points(25, 10 + seed);
            let moved: Vec<Vec2> = rotate(&pts, 0.3 + seed as f64)
                .into_iter()
                .map(|p| p + Vec2::new(1.5, -0.7))
                .collect();
            let a = feat.featurize(&pts).unwrap();
            let b = feat.featurize(&moved).unwrap();
            let sup = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(sup <= 1e-3, "sup-norm {sup}");
        }
    }

    #[test]
    fn aligning_reference_to_itself_is_identity() {
        let reference = random_points(20, 6);
        let feat = featurizer_for(&reference);
        let a = feat.align(&reference).unwrap();
        assert_relative_eq!(a.rotation, nalgebra::Matrix2::identity(), epsilon = 1e-12);
    }

    #[test]
    fn widening_covers_dilute_configurations() {
        let reference = random_points(20, 7);
        let mut feat = Featurizer::new(&config(reference), "ref", 32, GRID_DILATION);
        let dilute = config(random_points(20, 8).into_iter().map(|p| 3.0 * p).collect());
        assert!(feat.featurize(&dilute.positions).is_err());
        feat.widen_to_cover(std::slice::from_ref(&dilute)).unwrap();
        assert!(feat.featurize(&dilute.positions).is_ok());
    }

    #[test]
    fn external_ingest_rescales_and_picks_reference() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.traj");
        std::fs::write(&path, "0 0 0 4 0 0 4\n1 0 0 2 0 0 2\n2 0 0 3 0 0 3\n").unwrap();
        let ext = ingest_external(&path, 0.5).unwrap();
        assert_eq!(ext.frames.len(), 3);
        assert_eq!(ext.reference_index, 1);
        assert_eq!(ext.frames[0].positions[1], Vec2::new(2.0, 0.0));
        std::fs::write(&path, "0 0 0 4\n").unwrap();
        assert!(ingest_external(&path, 0.5).is_err());
        let ratio = radius_ratio(&[Vec2::new(-2.0, 0.0), Vec2::new(2.0, 0.0)], &[Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)]).unwrap();
        assert_eq!(ratio, 2.0);
    }
}
