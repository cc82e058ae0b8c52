//! Pipeline configuration as a flat key-value file.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::params::PhysicalParams;
use crate::table::sha256_hex;

/// Every pipeline key with its default and a one-line description, in the
/// order written by [`PipelineConfig::to_kv_text`].
pub const CONFIG_REFERENCE: &[(&str, &str)] = &[
    ("voltages", "normalized voltages V*, comma separated"),
    ("trajectories_per_voltage", "sampling trajectories per voltage (full scale: about 1500 initial conditions in total)"),
    ("frames_per_trajectory", "saved frames after the initial one; one frame interval is one latent time unit"),
    ("save_interval", "frame interval in reduced time a^2/D0"),
    ("dt", "Brownian dynamics step in reduced time"),
    ("diff_substeps", "a second frame is saved save_interval/diff_substeps after each frame; gives h_diff = 1/diff_substeps"),
    ("init_spread_min", "smallest initial disk radius, in units of the close-packed disk radius (at least 1.4)"),
    ("init_spread_max", "largest initial disk radius, in units of the close-packed disk radius"),
    ("rg_threshold", "frames with Rg / Rg_hex(N) above this are discarded (full scale: 1.39)"),
    ("corpus_target", "corpus size after (Rg, psi6) histogram capping (full scale: about 11000)"),
    ("histogram_bins", "bins per axis of the (Rg, psi6) histogram"),
    ("grid_size", "density grid points per axis (full scale: 64)"),
    ("dmaps_eigenpairs", "eigenpairs computed, including the trivial one"),
    ("dmaps_epsilon", "kernel scale; 'auto' uses the median squared distance"),
    ("selection_threshold", "local linear regression residual above which an eigenvector counts as new"),
    ("km_anchors", "Kramers-Moyal anchors per voltage"),
    ("km_replicas", "burst replicas per anchor"),
    ("nn_epoch_scale", "multiplier on the fixed-voltage training schedule (200 + 1000 epochs)"),
    ("nn_param_epoch_scale", "multiplier on the parameter-dependent schedule (1000 + 5000 + 1000 epochs)"),
    ("nn_learning_rate", "Adam learning rate"),
    ("nn_validation_fraction", "held-out fraction of snapshot pairs"),
    ("nn_z_threshold", "displacement z-score above which a pair is an outlier"),
    ("n_paths", "eSDE paths per model in comparisons"),
    ("compare_bd_paths", "Brownian dynamics replicas from the common initial condition"),
    ("compare_frames", "length of comparison paths in frames"),
    ("integration_step", "eSDE Euler-Maruyama step in latent time; 1/integration_step must be an integer"),
    ("potential_grid", "nodes per axis of coefficient, potential and comparison grids"),
    ("potential_substeps", "midpoint sub-steps per ray in the potential integral"),
    ("uq_models", "ensemble members per voltage"),
    ("uq_bootstrap", "resample each member's training pairs with replacement"),
    ("external_trajectories", "trajectory files to restrict; empty uses a held-out simulated trajectory"),
    ("external_radius_scale", "factor mapping external coordinates to particle radii"),
    ("seed", "master seed; every stage derives its own streams from it"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub physical: PhysicalParams,
    pub voltages: Vec<f64>,
    pub trajectories_per_voltage: usize,
    pub frames_per_trajectory: usize,
    pub save_interval: f64,
    pub dt: f64,
    pub diff_substeps: usize,
    pub init_spread_min: f64,
    pub init_spread_max: f64,
    pub rg_threshold: f64,
    pub corpus_target: usize,
    pub histogram_bins: usize,
    pub grid_size: usize,
    pub dmaps_eigenpairs: usize,
    pub dmaps_epsilon: Option<f64>,
    pub selection_threshold: f64,
    pub km_anchors: usize,
    pub km_replicas: usize,
    pub nn_epoch_scale: f64,
    pub nn_param_epoch_scale: f64,
    pub nn_learning_rate: f64,
    pub nn_validation_fraction: f64,
    pub nn_z_threshold: f64,
    pub n_paths: usize,
    pub compare_bd_paths: usize,
    pub compare_frames: usize,
    pub integration_step: f64,
    pub potential_grid: usize,
    pub potential_substeps: usize,
    pub uq_models: usize,
    pub uq_bootstrap: bool,
    pub external_trajectories: Vec<PathBuf>,
    pub external_radius_scale: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            physical: PhysicalParams::default(),
            voltages: vec![0.5, 0.6, 0.7, 0.8],
            trajectories_per_voltage: 36,
            frames_per_trajectory: 200,
            save_interval: 0.02,
            dt: 1e-5,
            diff_substeps: 8,
            init_spread_min: super::sample::MIN_SPREAD,
            init_spread_max: 2.0,
            // short desk compressions leave the weakest field loose
            rg_threshold: 2.0,
            corpus_target: 3000,
            histogram_bins: 20,
            // restriction cost scales with the grid area; the full grid is featurize::GRID_SIZE
            grid_size: 32,
            dmaps_eigenpairs: 10,
            dmaps_epsilon: None,
            selection_threshold: 0.5,
            km_anchors: 30,
            km_replicas: 32,
            nn_epoch_scale: 0.2,
            nn_param_epoch_scale: 0.02,
            nn_learning_rate: 1e-3,
            nn_validation_fraction: 0.1,
            nn_z_threshold: 3.0,
            n_paths: 100,
            compare_bd_paths: 10,
            compare_frames: 100,
            integration_step: 0.125,
            potential_grid: 20,
            potential_substeps: 200,
            uq_models: 20,
            uq_bootstrap: true,
            external_trajectories: Vec::new(),
            external_radius_scale: 1.0,
            seed: 1,
        }
    }
}

impl PipelineConfig {
    /// A few seconds end to end; for tests.
    pub fn tiny() -> Self {
        Self {
            physical: PhysicalParams {
                n_particles: 8,
                ..PhysicalParams::default()
            },
            voltages: vec![0.5, 0.8],
            trajectories_per_voltage: 3,
            frames_per_trajectory: 20,
            save_interval: 0.004,
            diff_substeps: 4,
            rg_threshold: 3.0,
            corpus_target: 100,
            histogram_bins: 5,
            grid_size: 24,
            dmaps_eigenpairs: 6,
            selection_threshold: 0.0,
            km_anchors: 4,
            km_replicas: 4,
            nn_epoch_scale: 0.01,
            nn_param_epoch_scale: 0.001,
            n_paths: 5,
            compare_bd_paths: 2,
            compare_frames: 5,
            integration_step: 0.25,
            potential_grid: 6,
            potential_substeps: 20,
            uq_models: 2,
            ..Self::default()
        }
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        let physical = PhysicalParams::from_kv(kv)?;
        let epsilon = match kv.raw("dmaps_epsilon") {
            None | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("cannot parse `dmaps_epsilon = {v}`")))?),
        };
        let cfg = Self {
            physical,
            voltages: kv.get_list("voltages")?.unwrap_or(d.voltages),
            trajectories_per_voltage: kv.get_or("trajectories_per_voltage", d.trajectories_per_voltage)?,
            frames_per_trajectory: kv.get_or("frames_per_trajectory", d.frames_per_trajectory)?,
            save_interval: kv.get_or("save_interval", d.save_interval)?,
            dt: kv.get_or("dt", d.dt)?,
            diff_substeps: kv.get_or("diff_substeps", d.diff_substeps)?,
            init_spread_min: kv.get_or("init_spread_min", d.init_spread_min)?,
            init_spread_max: kv.get_or("init_spread_max", d.init_spread_max)?,
            rg_threshold: kv.get_or("rg_threshold", d.rg_threshold)?,
            corpus_target: kv.get_or("corpus_target", d.corpus_target)?,
            histogram_bins: kv.get_or("histogram_bins", d.histogram_bins)?,
            grid_size: kv.get_or("grid_size", d.grid_size)?,
            dmaps_eigenpairs: kv.get_or("dmaps_eigenpairs", d.dmaps_eigenpairs)?,
            dmaps_epsilon: epsilon,
            selection_threshold: kv.get_or("selection_threshold", d.selection_threshold)?,
            km_anchors: kv.get_or("km_anchors", d.km_anchors)?,
            km_replicas: kv.get_or("km_replicas", d.km_replicas)?,
            nn_epoch_scale: kv.get_or("nn_epoch_scale", d.nn_epoch_scale)?,
            nn_param_epoch_scale: kv.get_or("nn_param_epoch_scale", d.nn_param_epoch_scale)?,
            nn_learning_rate: kv.get_or("nn_learning_rate", d.nn_learning_rate)?,
            nn_validation_fraction: kv.get_or("nn_validation_fraction", d.nn_validation_fraction)?,
            nn_z_threshold: kv.get_or("nn_z_threshold", d.nn_z_threshold)?,
            n_paths: kv.get_or("n_paths", d.n_paths)?,
            compare_bd_paths: kv.get_or("compare_bd_paths", d.compare_bd_paths)?,
            compare_frames: kv.get_or("compare_frames", d.compare_frames)?,
            integration_step: kv.get_or("integration_step", d.integration_step)?,
            potential_grid: kv.get_or("potential_grid", d.potential_grid)?,
            potential_substeps: kv.get_or("potential_substeps", d.potential_substeps)?,
            uq_models: kv.get_or("uq_models", d.uq_models)?,
            uq_bootstrap: kv.get_or("uq_bootstrap", d.uq_bootstrap)?,
            external_trajectories: kv
                .get_list::<String>("external_trajectories")?
                .unwrap_or_default()
                .into_iter()
                .map(PathBuf::from)
                .collect(),
            external_radius_scale: kv.get_or("external_radius_scale", d.external_radius_scale)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvMap::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        if self.voltages.is_empty() {
            return Err(Error::Config("at least one voltage is required".into()));
        }
        if self.voltages.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("voltages must be positive".into()));
        }
        let counts = [
            ("trajectories_per_voltage", self.trajectories_per_voltage),
            ("frames_per_trajectory", self.frames_per_trajectory),
            ("diff_substeps", self.diff_substeps),
            ("corpus_target", self.corpus_target),
            ("histogram_bins", self.histogram_bins),
            ("grid_size", self.grid_size),
            ("km_anchors", self.km_anchors),
            ("n_paths", self.n_paths),
            ("compare_bd_paths", self.compare_bd_paths),
            ("compare_frames", self.compare_frames),
            ("potential_grid", self.potential_grid),
            ("potential_substeps", self.potential_substeps),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.km_replicas < 2 {
            return Err(Error::Config("km_replicas must be at least 2".into()));
        }
        if self.dmaps_eigenpairs < 3 {
            return Err(Error::Config("dmaps_eigenpairs must be at least 3".into()));
        }
        if self.uq_models < 2 {
            return Err(Error::Config("uq_models must be at least 2".into()));
        }
        let positive = [
            ("save_interval", self.save_interval),
            ("dt", self.dt),
            ("init_spread_min", self.init_spread_min),
            ("rg_threshold", self.rg_threshold),
            ("nn_epoch_scale", self.nn_epoch_scale),
            ("nn_param_epoch_scale", self.nn_param_epoch_scale),
            ("nn_learning_rate", self.nn_learning_rate),
            ("nn_z_threshold", self.nn_z_threshold),
            ("integration_step", self.integration_step),
            ("external_radius_scale", self.external_radius_scale),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        if self.init_spread_min < super::sample::MIN_SPREAD {
            return Err(Error::Config(format!(
                "init_spread_min must be at least {}, got {}",
                super::sample::MIN_SPREAD,
                self.init_spread_min
            )));
        }
        if self.init_spread_max < self.init_spread_min {
            return Err(Error::Config("init_spread_max is below init_spread_min".into()));
        }
        if !(self.nn_validation_fraction > 0.0 && self.nn_validation_fraction < 1.0) {
            return Err(Error::Config("nn_validation_fraction must lie in (0, 1)".into()));
        }
        if !(self.selection_threshold >= 0.0) {
            return Err(Error::Config("selection_threshold must be non-negative".into()));
        }
        if let Some(e) = self.dmaps_epsilon {
            if !(e > 0.0) {
                return Err(Error::Config("dmaps_epsilon must be positive".into()));
            }
        }
        crate::bd::steps_for(self.save_interval, self.dt)?;
        crate::bd::steps_for(self.save_interval / self.diff_substeps as f64, self.dt)?;
        self.integration_substeps()?;
        Ok(())
    }

    /// Euler-Maruyama steps per latent time unit.
    pub fn integration_substeps(&self) -> Result<usize> {
        let r = 1.0 / self.integration_step;
        let n = r.round();
        if n < 1.0 || (r - n).abs() > 1e-9 * n {
            return Err(Error::Config(format!(
                "1/integration_step must be an integer, got {}",
                self.integration_step
            )));
        }
        Ok(n as usize)
    }

    pub fn h_diff(&self) -> f64 {
        1.0 / self.diff_substeps as f64
    }

    pub fn to_kv_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let values: Vec<String> = vec![
            list(&self.voltages),
            self.trajectories_per_voltage.to_string(),
            self.frames_per_trajectory.to_string(),
            self.save_interval.to_string(),
            self.dt.to_string(),
            self.diff_substeps.to_string(),
            self.init_spread_min.to_string(),
            self.init_spread_max.to_string(),
            self.rg_threshold.to_string(),
            self.corpus_target.to_string(),
            self.histogram_bins.to_string(),
            self.grid_size.to_string(),
            self.dmaps_eigenpairs.to_string(),
            self.dmaps_epsilon.map_or("auto".into(), |e| e.to_string()),
            self.selection_threshold.to_string(),
            self.km_anchors.to_string(),
            self.km_replicas.to_string(),
            self.nn_epoch_scale.to_string(),
            self.nn_param_epoch_scale.to_string(),
            self.nn_learning_rate.to_string(),
            self.nn_validation_fraction.to_string(),
            self.nn_z_threshold.to_string(),
            self.n_paths.to_string(),
            self.compare_bd_paths.to_string(),
            self.compare_frames.to_string(),
            self.integration_step.to_string(),
            self.potential_grid.to_string(),
            self.potential_substeps.to_string(),
            self.uq_models.to_string(),
            self.uq_bootstrap.to_string(),
            self
                .external_trajectories
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(", "),
            self.external_radius_scale.to_string(),
            self.seed.to_string(),
        ];
        let mut out = String::from("# physical parameters\n");
        let mut phys = self.physical.clone();
        phys.v_star = self.voltages[0];
        for line in phys.to_kv_text().lines().filter(|l| !l.starts_with("V_star")) {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("\n# pipeline\n");
        for ((key, doc), value) in CONFIG_REFERENCE.iter().zip(values) {
            out.push_str(&format!("# {doc}\n{key} = {value}\n"));
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_kv_text().as_bytes())
    }

    pub fn params_at(&self, vi: usize) -> PhysicalParams {
        self.physical.with_v_star(self.voltages[vi])
    }
}
