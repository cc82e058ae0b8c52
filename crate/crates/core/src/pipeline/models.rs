//! Coefficient estimation and the analyses built on the fitted models.

use rayon::prelude::*;

use super::{column, simulate_from, Corpus, Pipeline};
use crate::bd::BrownianDynamics;
use crate::dmaps::{lift_nearest, LatentPoint, PointSource};
use crate::error::{Error, Result};
use crate::free_energy::{effective_potential_from, PotentialSettings};
use crate::grid::Grid2;
use crate::km::{km_point_estimate, TabulatedModel};
use crate::nn::{compare_models, ensemble_uq, train_two_stage, Architecture, TrainConfig, TrainedModel};
use crate::pipeline::paths::{compare_paths, envelope, esde_paths, Envelope};
use crate::rng::{derive_seed, stream};
use crate::sde::EsdeModel;
use crate::table::Table;
use crate::Vec2;

/// Seed tag of the parameter-dependent model.
const PARAM_TAG: u64 = 1000;

pub fn km_file(vi: usize) -> String {
    format!("km_v{vi}.txt")
}

pub fn nn_file(vi: usize) -> String {
    format!("nn_v{vi}.json")
}

pub const NN_PARAM_FILE: &str = "nn_param.json";

/// Greedy farthest-point selection of `k` indices, starting from the point
/// nearest the centroid.
pub fn farthest_points(points: &[Vec2], k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let c = points.iter().sum::<Vec2>() / points.len() as f64;
    let first = (0..points.len())
        .min_by(|&a, &b| (points[a] - c).norm_squared().total_cmp(&(points[b] - c).norm_squared()))
        .unwrap_or(0);
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while chosen.len() < k.min(points.len()) {
        let (next, d) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        if d <= 0.0 {
            break;
        }
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min((p - points[next]).norm_squared());
        }
    }
    chosen
}

fn bounding_grid(points: &[Vec2], n: usize) -> Result<Grid2> {
    let finite: Vec<Vec2> = points.iter().copied().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    Grid2::covering(&finite, n, 0.0, false)
}

fn nearest_node(grid: &Grid2, x: Vec2) -> usize {
    (0..grid.len())
        .min_by(|&a, &b| (grid.node(a) - x).norm_squared().total_cmp(&(grid.node(b) - x).norm_squared()))
        .unwrap_or(0)
}

impl Pipeline {
    pub fn train_config(&self, seed: u64, param: bool) -> TrainConfig {
        let base = if param {
            TrainConfig::parameter_dependent(seed).scaled_epochs(self.cfg.nn_param_epoch_scale)
        } else {
            TrainConfig::fixed_voltage(seed).scaled_epochs(self.cfg.nn_epoch_scale)
        };
        TrainConfig {
            learning_rate: self.cfg.nn_learning_rate,
            z_threshold: self.cfg.nn_z_threshold,
            validation_fraction: self.cfg.nn_validation_fraction,
            ..base
        }
    }

    // ---- fit-km ----

    /// Short fine-scale bursts from configurations lifted at anchors spread
    /// over each voltage's embedding.
    pub fn fit_km(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let r = self.restrictor_with(&corpus)?;
        let emb = r.dmaps.embeddings();
        let mut outputs = Vec::new();
        let mut summary = Table::new(&["voltage", "anchor", "phi1", "phi2", "n_endpoints"]);
        for vi in 0..self.cfg.voltages.len() {
            let members = corpus.of_voltage(vi);
            let pts: Vec<Vec2> = members.iter().map(|&i| emb[i].as_vec()).collect();
            let chosen = farthest_points(&pts, self.cfg.km_anchors);
            let bd = BrownianDynamics::new(&self.cfg.params_at(vi))?;
            let mut model = TabulatedModel { anchors: Vec::new(), drift: Vec::new(), sigma: Vec::new(), h: 1.0, p: self.cfg.voltages[vi] };
            for (a, &ci) in chosen.iter().enumerate() {
                let x0 = pts[ci];
                let config = lift_nearest(&r.dmaps, &LatentPoint::new(x0.x, x0.y, PointSource::Training), &corpus.configs)?;
                let seed = derive_seed(self.cfg.seed, &[2, vi as u64, a as u64]);
                let ends = bd.burst(config, self.cfg.km_replicas, self.cfg.save_interval, self.cfg.dt, seed)?;
                let latent: Vec<Vec2> = r.restrict_all(&ends).into_iter().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
                summary.push(vec![vi as f64, a as f64, x0.x, x0.y, latent.len() as f64]);
                // anchors whose bursts mostly leave the embedded region are dropped
                if let Ok((d, s)) = km_point_estimate(&latent, x0, 1.0) {
                    model.anchors.push(x0);
                    model.drift.push(d);
                    model.sigma.push(s);
                }
            }
            model.validate().map_err(|e| Error::Anchor { anchor: 0, source: Box::new(e) })?;
            model.save(&self.path(&km_file(vi)))?;
            outputs.push(km_file(vi));
        }
        self.write_table("km_summary.txt", &summary, &mut outputs)?;
        self.record("fit-km", self.cfg.seed, &["corpus.txt".into(), "dmaps.json".into()], &outputs)
    }

    pub fn load_km(&self, vi: usize) -> Result<TabulatedModel> {
        TabulatedModel::load(&self.path(&km_file(vi)))
    }

    // ---- fit-nn ----

    /// One fixed-voltage network pair per voltage and one
    /// parameter-dependent pair over all voltages.
    pub fn fit_nn(&self) -> Result<()> {
        let mut outputs = Vec::new();
        let mut inputs = Vec::new();
        let mut all_drift = Vec::new();
        let mut all_diff = Vec::new();
        let per_voltage: Vec<_> = (0..self.cfg.voltages.len())
            .map(|vi| self.snapshot_pairs(vi))
            .collect::<Result<_>>()?;
        for vi in 0..self.cfg.voltages.len() {
            inputs.extend((0..self.cfg.trajectories_per_voltage).map(|j| super::latent_file(vi, j)));
        }
        let trained: Vec<TrainedModel> = per_voltage
            .par_iter()
            .enumerate()
            .map(|(vi, (drift, diff))| {
                let tc = self.train_config(derive_seed(self.cfg.seed, &[5, vi as u64]), false);
                train_two_stage(drift, diff, &Architecture::fixed_voltage(), &tc)
            })
            .collect::<Result<_>>()?;
        for (vi, m) in trained.iter().enumerate() {
            m.save(&self.path(&nn_file(vi)))?;
            outputs.push(nn_file(vi));
            self.write_table(&format!("nn_v{vi}_loss.txt"), &m.curve_table(), &mut outputs)?;
        }
        for (d, f) in per_voltage {
            all_drift.extend(d);
            all_diff.extend(f);
        }
        let tc = self.train_config(derive_seed(self.cfg.seed, &[5, PARAM_TAG]), true);
        let m = train_two_stage(&all_drift, &all_diff, &Architecture::parameter_dependent(), &tc)?;
        m.save(&self.path(NN_PARAM_FILE))?;
        outputs.push(NN_PARAM_FILE.to_string());
        self.write_table("nn_param_loss.txt", &m.curve_table(), &mut outputs)?;
        self.record("fit-nn", self.cfg.seed, &inputs, &outputs)
    }

    pub fn load_nn(&self, vi: usize) -> Result<TrainedModel> {
        TrainedModel::load(&self.path(&nn_file(vi)))
    }

    pub fn load_nn_param(&self) -> Result<TrainedModel> {
        TrainedModel::load(&self.path(NN_PARAM_FILE))
    }

    /// Corpus frame of voltage `vi` at the 90th percentile of Rg.
    pub fn start_frame(&self, corpus: &Corpus, vi: usize) -> Result<usize> {
        let mut members = corpus.of_voltage(vi);
        if members.is_empty() {
            return Err(Error::Empty(format!("no corpus frames at voltage index {vi}")));
        }
        members.sort_by(|&a, &b| corpus.records[a].rg_norm.total_cmp(&corpus.records[b].rg_norm).then(a.cmp(&b)));
        Ok(members[(0.9 * (members.len() - 1) as f64).floor() as usize])
    }

    // ---- integrate ----

    /// Fine-scale and eSDE path envelopes from a common start, the
    /// parameter-dependent model across voltages, and eSDE paths next to
    /// each external trajectory.
    pub fn integrate(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let r = self.restrictor_with(&corpus)?;
        let emb = r.dmaps.embeddings();
        let substeps = self.cfg.integration_substeps()?;
        let param = self.load_nn_param()?;
        let mut outputs = Vec::new();
        let mut start = Vec2::zeros();
        for vi in 0..self.cfg.voltages.len() {
            let p = self.cfg.voltages[vi];
            let s = self.start_frame(&corpus, vi)?;
            let x0 = emb[s].as_vec();
            start = x0;
            let bd = BrownianDynamics::new(&self.cfg.params_at(vi))?;
            let bd_paths: Vec<Vec<Vec2>> = (0..self.cfg.compare_bd_paths)
                .map(|k| {
                    let mut rng = stream(self.cfg.seed, &[3, vi as u64, k as u64]);
                    let (coarse, _) = simulate_from(&bd, &self.cfg, &corpus.configs[s], self.cfg.compare_frames, false, &mut rng)?;
                    Ok(r.restrict_all(&coarse.frames))
                })
                .collect::<Result<_>>()?;
            let km = self.load_km(vi)?;
            let nn = self.load_nn(vi)?;
            let models: [(&str, &dyn EsdeModel); 3] = [("km", &km), ("nn", &nn.model), ("nn_param", &param.model)];
            let cmp = compare_paths(
                &models,
                &bd_paths,
                self.cfg.n_paths,
                x0,
                self.cfg.compare_frames,
                substeps,
                p,
                derive_seed(self.cfg.seed, &[4, vi as u64]),
            )?;
            self.write_table(&format!("paths_v{vi}.txt"), &cmp.to_table(), &mut outputs)?;
        }

        let mut t = Table::new(&["time"]);
        for k in 0..=self.cfg.compare_frames {
            t.push(vec![k as f64]);
        }
        for (vi, &p) in self.cfg.voltages.iter().enumerate() {
            let paths = esde_paths(&param.model, start, self.cfg.compare_frames, substeps, self.cfg.n_paths, derive_seed(self.cfg.seed, &[4, PARAM_TAG]), p)?;
            envelope(&paths, 1.0)?.push_columns(&format!("v{vi}"), &mut t);
        }
        self.write_table("param_paths.txt", &t, &mut outputs)?;

        let p_ext = *self.cfg.voltages.last().unwrap_or(&0.0);
        for k in 0..self.external_files().len() {
            let ext = self.external_latent(k)?;
            let Some(x0) = ext.iter().copied().find(|p| p.x.is_finite() && p.y.is_finite()) else {
                continue;
            };
            let n_frames = ext.len().saturating_sub(1);
            let paths = esde_paths(&param.model, x0, n_frames, substeps, self.cfg.n_paths, derive_seed(self.cfg.seed, &[4, 2 * PARAM_TAG, k as u64]), p_ext)?;
            let mut t = Table::new(&["time", "external_phi1", "external_phi2"]);
            for (i, x) in ext.iter().enumerate() {
                t.push(vec![i as f64, x.x, x.y]);
            }
            envelope(&paths, 1.0)?.push_columns("nn_param", &mut t);
            self.write_table(&format!("external_paths_{k}.txt"), &t, &mut outputs)?;
        }
        self.record(
            "integrate",
            self.cfg.seed,
            &["dmaps.json".into(), NN_PARAM_FILE.into()],
            &outputs,
        )
    }

    pub fn read_envelope(&self, rel: &str, name: &str) -> Result<Envelope> {
        let t = self.read_table(rel)?;
        let get = |c: &str, s: &str| column(&t, &format!("{name}_{c}_{s}"));
        let pair = |s: &str| -> Result<Vec<Vec2>> {
            Ok(get("phi1", s)?.into_iter().zip(get("phi2", s)?).map(|(a, b)| Vec2::new(a, b)).collect())
        };
        let times = column(&t, "time")?;
        let count = vec![0; times.len()];
        Ok(Envelope { times, mean: pair("mean")?, min: pair("min")?, max: pair("max")?, count })
    }

    // ---- free-energy ----

    /// Grid over the whole embedding; the zero of each potential is the
    /// node nearest the centroid of that voltage's corpus frames.
    pub fn potential_grid(&self) -> Result<Grid2> {
        bounding_grid(&self.embedding()?, self.cfg.potential_grid)
    }

    pub fn free_energy(&self) -> Result<()> {
        let emb = self.embedding()?;
        let records = super::records_from_table(&self.read_table("corpus.txt")?)?;
        let grid = self.potential_grid()?;
        let settings = PotentialSettings { substeps: self.cfg.potential_substeps, ..PotentialSettings::default() };
        let param = self.load_nn_param()?;
        let mut outputs = Vec::new();
        let mut diag = Table::new(&["voltage", "model", "loop_residue", "loop_scale", "divergence_ratio", "n_flagged"]);
        for (vi, &p) in self.cfg.voltages.iter().enumerate() {
            let pts: Vec<Vec2> = records.iter().zip(&emb).filter(|(r, _)| r.voltage == vi).map(|(_, x)| *x).collect();
            if pts.is_empty() {
                return Err(Error::Empty(format!("no corpus frames at voltage index {vi}")));
            }
            let c = pts.iter().sum::<Vec2>() / pts.len() as f64;
            let reference = nearest_node(&grid, c);
            let nn = self.load_nn(vi)?;
            for (m, (name, model)) in [("nn", &nn.model), ("param", &param.model)].into_iter().enumerate() {
                let field = effective_potential_from(model, &grid, reference, p, &settings)?;
                let rel = if name == "nn" { format!("potential_v{vi}.txt") } else { format!("potential_param_v{vi}.txt") };
                field.write(&self.path(&rel))?;
                outputs.push(rel);
                let d = field.diagnostics;
                let flagged = field.flagged.iter().filter(|&&f| f).count();
                diag.push(vec![vi as f64, m as f64, d.loop_residue, d.loop_scale, d.divergence_ratio, flagged as f64]);
            }
        }
        self.write_table("potential_diagnostics.txt", &diag, &mut outputs)?;
        self.record("free-energy", self.cfg.seed, &["embedding.txt".into(), NN_PARAM_FILE.into()], &outputs)
    }

    // ---- compare ----

    /// Grid over the KM anchors of voltage `vi`, where both estimators
    /// are backed by data.
    pub fn comparison_grid(&self, vi: usize) -> Result<Grid2> {
        bounding_grid(&self.load_km(vi)?.anchors, self.cfg.potential_grid)
    }

    pub fn compare(&self) -> Result<()> {
        let mut outputs = Vec::new();
        let mut summary = Table::new(&["voltage", "mean_d_nu1", "mean_d_nu2", "mean_d_sigma1", "mean_d_sigma2"]);
        for (vi, &p) in self.cfg.voltages.iter().enumerate() {
            let km = self.load_km(vi)?;
            let nn = self.load_nn(vi)?;
            let grid = self.comparison_grid(vi)?;
            let cmp = compare_models(&nn.model, &km, &grid, p)?;
            self.write_table(&format!("comparison_v{vi}.txt"), &cmp.node_table(), &mut outputs)?;
            let mut row = vec![vi as f64];
            row.extend(cmp.means);
            summary.push(row);
        }
        self.write_table("comparison_summary.txt", &summary, &mut outputs)?;
        self.record("compare", self.cfg.seed, &[], &outputs)
    }

    // ---- uq ----

    /// Ensembles of fixed-voltage models, each member on its own resample.
    pub fn uq(&self) -> Result<()> {
        let mut outputs = Vec::new();
        let mut summary = Table::new(&[
            "voltage",
            "members",
            "failures",
            "mean_std_nu1",
            "mean_std_nu2",
            "mean_std_sigma1",
            "mean_std_sigma2",
        ]);
        for (vi, &p) in self.cfg.voltages.iter().enumerate() {
            let (drift, diff) = self.snapshot_pairs(vi)?;
            let tc = TrainConfig {
                bootstrap: self.cfg.uq_bootstrap,
                ..self.train_config(derive_seed(self.cfg.seed, &[8, vi as u64]), false)
            };
            let grid = self.comparison_grid(vi)?;
            let uq = ensemble_uq(&drift, &diff, &Architecture::fixed_voltage(), &tc, self.cfg.uq_models, &grid, p)?;
            self.write_table(&format!("uq_v{vi}_grid.txt"), &uq.on_grid.to_table(), &mut outputs)?;
            self.write_table(&format!("uq_v{vi}_data.txt"), &uq.on_data.to_table(), &mut outputs)?;
            let mut row = vec![vi as f64, uq.models.len() as f64, uq.failures.len() as f64];
            row.extend(uq.on_grid.mean_std());
            summary.push(row);
        }
        self.write_table("uq_summary.txt", &summary, &mut outputs)?;
        self.record("uq", self.cfg.seed, &[], &outputs)
    }
}
