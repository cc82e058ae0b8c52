//! End-to-end workflow: sampling, featurization, embedding, restriction,
//! coefficient estimation and analysis. Every stage reads its inputs from
//! and writes its outputs to one output directory, and records both with
//! their hashes in the run manifest.

mod config;
mod manifest;
mod models;
mod paths;
pub mod plots;
mod report;
mod sample;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{PipelineConfig, CONFIG_REFERENCE};
pub use manifest::{RunManifest, StageRecord, MANIFEST_FILE};
pub use paths::{compare_paths, envelope, esde_paths, Envelope, PathComparison};
pub use sample::{
    frame_records, initial_configuration, records_from_table, records_table, simulate_from, simulate_trajectory,
    subsample_uniform, FrameRecord, SampledTrajectory, RECORD_COLUMNS,
};

use crate::bd::{read_trajectory, write_trajectory, BrownianDynamics, ParticleConfiguration, Trajectory};
use crate::dmaps::{DiffusionMapModel, DmapsSettings, SelectionSettings};
use crate::error::{Error, Result};
use crate::featurize::{ingest_external, select_reference, write_densities, Featurizer, GRID_DILATION};
use crate::order::{hexagonal_rg, order_parameters, OrderSettings};
use crate::rng::stream;
use crate::sde::SnapshotPair;
use crate::table::{sha256_hex, write_text, Table};
use crate::Vec2;

pub const CONFIG_FILE: &str = "config.txt";
const HELDOUT_FILE: &str = "external/heldout.traj";

pub fn trajectory_file(vi: usize, j: usize) -> String {
    format!("trajectories/v{vi}_t{j:03}.traj")
}

pub fn fine_file(vi: usize, j: usize) -> String {
    format!("trajectories/v{vi}_t{j:03}.fine.traj")
}

pub fn latent_file(vi: usize, j: usize) -> String {
    format!("latent/v{vi}_t{j:03}.txt")
}

/// Order parameters of every frame of a trajectory.
pub fn order_table(traj: &Trajectory) -> Table {
    let settings = OrderSettings::default();
    let mut t = Table::new(&["frame", "time", "rg", "rg_norm", "psi6", "c6"]);
    for (k, f) in traj.frames.iter().enumerate() {
        let o = order_parameters(&f.positions, &settings);
        t.push(vec![k as f64, f.time, o.rg, o.rg / hexagonal_rg(f.len()), o.psi6, o.c6]);
    }
    t
}

/// Featurizer and embedding together, mapping configurations to latent
/// points. Configurations above the Rg threshold or failing restriction
/// map to NaN.
pub struct Restrictor {
    pub featurizer: Featurizer,
    pub dmaps: DiffusionMapModel,
    pub rg_threshold: f64,
}

impl Restrictor {
    pub fn try_restrict(&self, positions: &[Vec2]) -> Result<Vec2> {
        let rg_norm = crate::order::radius_of_gyration(positions) / hexagonal_rg(positions.len());
        if rg_norm > self.rg_threshold {
            return Err(Error::Domain(format!("normalized Rg {rg_norm} above the threshold")));
        }
        let f = self.featurizer.featurize(positions)?;
        Ok(self.dmaps.nystrom_restrict(&f.values)?.as_vec())
    }

    pub fn restrict(&self, positions: &[Vec2]) -> Vec2 {
        self.try_restrict(positions).unwrap_or(Vec2::new(f64::NAN, f64::NAN))
    }

    pub fn restrict_all(&self, frames: &[ParticleConfiguration]) -> Vec<Vec2> {
        frames.par_iter().map(|f| self.restrict(&f.positions)).collect()
    }
}

/// Corpus frames with their configurations, in corpus order.
pub struct Corpus {
    pub records: Vec<FrameRecord>,
    pub configs: Vec<ParticleConfiguration>,
}

impl Corpus {
    pub fn of_voltage(&self, vi: usize) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].voltage == vi).collect()
    }
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

impl Pipeline {
    /// Validates the configuration and writes it into `out`.
    pub fn new(cfg: PipelineConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_text(&out.join(CONFIG_FILE), &cfg.to_kv_text())?;
        Ok(Self { cfg, out: out.to_path_buf() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn mkdir(&self, rel: &str) -> Result<()> {
        let p = self.path(rel);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))
    }

    fn record(&self, stage: &str, seed: u64, inputs: &[String], outputs: &[String]) -> Result<()> {
        let mut m = RunManifest::load_or_new(&self.out, &self.cfg.hash(), self.cfg.seed)?;
        m.record(&self.out, stage, seed, inputs, outputs)?;
        m.save(&self.out)
    }

    fn write_table(&self, rel: &str, t: &Table, outputs: &mut Vec<String>) -> Result<()> {
        t.write(&self.path(rel))?;
        outputs.push(rel.to_string());
        Ok(())
    }

    fn read_table(&self, rel: &str) -> Result<Table> {
        Table::read(&self.path(rel))
    }

    fn n_voltages(&self) -> usize {
        self.cfg.voltages.len()
    }

    fn all_trajectories(&self) -> Vec<(usize, usize)> {
        (0..self.n_voltages())
            .flat_map(|vi| (0..self.cfg.trajectories_per_voltage).map(move |j| (vi, j)))
            .collect()
    }

    /// External trajectory files, or the held-out simulation when none
    /// are configured.
    pub fn external_files(&self) -> Vec<PathBuf> {
        if self.cfg.external_trajectories.is_empty() {
            vec![self.path(HELDOUT_FILE)]
        } else {
            self.cfg.external_trajectories.clone()
        }
    }

    // ---- simulate ----

    /// Fine-scale trajectories at every voltage, their order parameters
    /// and the histogram-uniform training corpus.
    pub fn simulate(&self) -> Result<()> {
        self.mkdir("trajectories")?;
        let trajs: Vec<SampledTrajectory> = self
            .all_trajectories()
            .into_par_iter()
            .map(|(vi, j)| simulate_trajectory(&self.cfg, vi, j))
            .collect::<Result<_>>()?;
        let mut outputs = Vec::new();
        let mut records = Vec::new();
        for t in &trajs {
            let (c, f) = (trajectory_file(t.voltage, t.index), fine_file(t.voltage, t.index));
            write_trajectory(&self.path(&c), &t.coarse)?;
            write_trajectory(&self.path(&f), &t.fine)?;
            outputs.extend([c, f]);
            records.extend(frame_records(t));
        }
        self.write_table("order_params.txt", &records_table(&records), &mut outputs)?;

        let passing: Vec<FrameRecord> = records.iter().copied().filter(|r| r.rg_norm <= self.cfg.rg_threshold).collect();
        if passing.is_empty() {
            return Err(Error::Empty(format!(
                "no frame has normalized Rg at or below {}",
                self.cfg.rg_threshold
            )));
        }
        let pts: Vec<(f64, f64)> = passing.iter().map(|r| (r.rg_norm, r.psi6)).collect();
        let (keep, cap) = subsample_uniform(&pts, self.cfg.histogram_bins, self.cfg.corpus_target, self.cfg.seed)?;
        let corpus: Vec<FrameRecord> = keep.iter().map(|&i| passing[i]).collect();
        self.write_table("corpus.txt", &records_table(&corpus), &mut outputs)?;
        let mut summary = Table::new(&["n_frames", "n_passing", "n_corpus", "bin_cap"]);
        summary.push(vec![records.len() as f64, passing.len() as f64, corpus.len() as f64, cap as f64]);
        self.write_table("corpus_summary.txt", &summary, &mut outputs)?;

        if self.cfg.external_trajectories.is_empty() {
            self.mkdir("external")?;
            let vi = self.n_voltages() - 1;
            let bd = BrownianDynamics::new(&self.cfg.params_at(vi))?;
            let mut rng = stream(self.cfg.seed, &[6]);
            let c0 = initial_configuration(&self.cfg, bd.params_ref(), &mut rng)?;
            let (coarse, _) = simulate_from(&bd, &self.cfg, &c0, self.cfg.compare_frames, false, &mut rng)?;
            write_trajectory(&self.path(HELDOUT_FILE), &coarse)?;
            outputs.push(HELDOUT_FILE.to_string());
        }
        self.record("simulate", self.cfg.seed, &[CONFIG_FILE.to_string()], &outputs)
    }

    /// Order parameters of all sampled trajectories, or of one given file.
    pub fn order_params(&self, input: Option<&Path>) -> Result<PathBuf> {
        match input {
            Some(path) => {
                let t = order_table(&read_trajectory(path)?);
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
                let rel = format!("order_params_{stem}.txt");
                t.write(&self.path(&rel))?;
                Ok(self.path(&rel))
            }
            None => {
                let mut records = Vec::new();
                let mut inputs = Vec::new();
                for (vi, j) in self.all_trajectories() {
                    let rel = trajectory_file(vi, j);
                    let coarse = read_trajectory(&self.path(&rel))?;
                    records.extend(frame_records(&SampledTrajectory {
                        voltage: vi,
                        index: j,
                        fine: Trajectory { frames: Vec::new(), ..coarse.clone() },
                        coarse,
                    }));
                    inputs.push(rel);
                }
                let mut outputs = Vec::new();
                self.write_table("order_params.txt", &records_table(&records), &mut outputs)?;
                self.record("order-params", self.cfg.seed, &inputs, &outputs)?;
                Ok(self.path("order_params.txt"))
            }
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let records = records_from_table(&self.read_table("corpus.txt")?)?;
        let mut cache: BTreeMap<(usize, usize), Trajectory> = BTreeMap::new();
        let mut configs = Vec::with_capacity(records.len());
        for r in &records {
            let key = (r.voltage, r.trajectory);
            if !cache.contains_key(&key) {
                cache.insert(key, read_trajectory(&self.path(&trajectory_file(r.voltage, r.trajectory)))?);
            }
            let frame = cache[&key]
                .frames
                .get(r.frame)
                .ok_or_else(|| Error::parse(&self.path("corpus.txt"), format!("frame {} missing from its trajectory", r.frame)))?;
            configs.push(frame.clone());
        }
        Ok(Corpus { records, configs })
    }

    // ---- featurize ----

    /// Fixes the reference frame and grid. Corpus densities are
    /// recomputed from the featurizer when needed; their hash is kept
    /// in `densities.sha256`.
    pub fn featurize(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let r = select_reference(&corpus.configs)?;
        let rec = corpus.records[r];
        let id = format!("v{}_t{:03}_f{}", rec.voltage, rec.trajectory, rec.frame);
        let mut f = Featurizer::new(&corpus.configs[r], &id, self.cfg.grid_size, GRID_DILATION);
        f.widen_to_cover(&corpus.configs)?;
        f.save(&self.path("featurizer.json"))?;
        let fields = self.fields_with(&f, &corpus)?;
        write_text(&self.path("densities.sha256"), &format!("{}\n", crate::dmaps::fields_hash(&fields)))?;
        self.record(
            "featurize",
            self.cfg.seed,
            &["corpus.txt".into()],
            &["featurizer.json".into(), "densities.sha256".into()],
        )
    }

    /// Densities of an arbitrary trajectory with the fitted featurizer.
    pub fn featurize_file(&self, input: &Path, output: &Path) -> Result<()> {
        let f = Featurizer::load(&self.path("featurizer.json"))?;
        let traj = read_trajectory(input)?;
        let fields = traj.frames.par_iter().map(|c| f.featurize(&c.positions)).collect::<Result<Vec<_>>>()?;
        write_densities(output, &fields)
    }

    fn fields_with(&self, f: &Featurizer, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
        corpus
            .configs
            .par_iter()
            .map(|c| f.featurize(&c.positions).map(|d| d.values))
            .collect()
    }

    // ---- dmaps ----

    pub fn dmaps_settings(&self) -> DmapsSettings {
        DmapsSettings {
            epsilon: self.cfg.dmaps_epsilon,
            n_eigenpairs: self.cfg.dmaps_eigenpairs,
            selection: SelectionSettings { threshold: self.cfg.selection_threshold, ..SelectionSettings::default() },
        }
    }

    pub fn dmaps(&self) -> Result<()> {
        let corpus = self.load_corpus()?;
        let f = Featurizer::load(&self.path("featurizer.json"))?;
        let fields = self.fields_with(&f, &corpus)?;
        let model = DiffusionMapModel::fit(fields, &self.dmaps_settings())?;
        model.save(&self.path("dmaps.json"))?;
        let mut outputs = vec!["dmaps.json".to_string()];
        let mut emb = Table::new(&["phi1", "phi2", "voltage", "v_star", "rg_norm", "psi6"]);
        for (i, (p, r)) in model.embeddings().iter().zip(&corpus.records).enumerate() {
            debug_assert_eq!(i, emb.rows.len());
            emb.push(vec![p.phi1, p.phi2, r.voltage as f64, self.cfg.voltages[r.voltage], r.rg_norm, r.psi6]);
        }
        self.write_table("embedding.txt", &emb, &mut outputs)?;
        let mut eig = Table::new(&["index", "eigenvalue", "residual", "selected"]);
        for (k, &l) in model.eigenvalues.iter().enumerate() {
            let res = model.residuals.get(k).copied().unwrap_or(f64::NAN);
            eig.push(vec![k as f64, l, res, f64::from(u8::from(model.selected.contains(&k)))]);
        }
        self.write_table("eigenvalues.txt", &eig, &mut outputs)?;
        self.record(
            "dmaps",
            self.cfg.seed,
            &["corpus.txt".into(), "featurizer.json".into()],
            &outputs,
        )
    }

    /// Featurizer and embedding with training densities re-attached.
    pub fn restrictor(&self) -> Result<Restrictor> {
        let corpus = self.load_corpus()?;
        self.restrictor_with(&corpus)
    }

    pub fn restrictor_with(&self, corpus: &Corpus) -> Result<Restrictor> {
        let featurizer = Featurizer::load(&self.path("featurizer.json"))?;
        let mut dmaps = DiffusionMapModel::load(&self.path("dmaps.json"))?;
        dmaps.attach_training(self.fields_with(&featurizer, corpus)?)?;
        Ok(Restrictor { featurizer, dmaps, rg_threshold: self.cfg.rg_threshold })
    }

    pub fn embedding(&self) -> Result<Vec<Vec2>> {
        let t = self.read_table("embedding.txt")?;
        let (a, b) = (column(&t, "phi1")?, column(&t, "phi2")?);
        Ok(a.into_iter().zip(b).map(|(x, y)| Vec2::new(x, y)).collect())
    }

    // ---- restrict ----

    /// Latent coordinates of every coarse and fine frame, and of the
    /// external trajectories.
    pub fn restrict(&self) -> Result<()> {
        let r = self.restrictor()?;
        self.mkdir("latent")?;
        let mut inputs = vec!["featurizer.json".to_string(), "dmaps.json".to_string()];
        let mut outputs = Vec::new();
        for (vi, j) in self.all_trajectories() {
            let (cr, fr) = (trajectory_file(vi, j), fine_file(vi, j));
            let coarse = read_trajectory(&self.path(&cr))?;
            let fine = read_trajectory(&self.path(&fr))?;
            let xc = r.restrict_all(&coarse.frames);
            let xf = r.restrict_all(&fine.frames);
            let mut t = Table::new(&["time", "phi1", "phi2", "fine_phi1", "fine_phi2"]);
            for (k, a) in xc.iter().enumerate() {
                let b = xf.get(k).copied().unwrap_or(Vec2::new(f64::NAN, f64::NAN));
                t.push(vec![k as f64, a.x, a.y, b.x, b.y]);
            }
            self.write_table(&latent_file(vi, j), &t, &mut outputs)?;
            inputs.extend([cr, fr]);
        }
        for (k, path) in self.external_files().iter().enumerate() {
            let ext = ingest_external(path, self.cfg.external_radius_scale)?;
            let x = r.restrict_all(&ext.frames);
            let mut t = Table::new(&["time", "phi1", "phi2"]);
            for (i, p) in x.iter().enumerate() {
                t.push(vec![i as f64, p.x, p.y]);
            }
            self.write_table(&format!("latent/external_{k}.txt"), &t, &mut outputs)?;
        }
        self.record("restrict", self.cfg.seed, &inputs, &outputs)
    }

    /// Drift pairs one frame apart and diffusivity pairs one fine step
    /// apart, both at the voltage's control parameter.
    pub fn snapshot_pairs(&self, vi: usize) -> Result<(Vec<SnapshotPair>, Vec<SnapshotPair>)> {
        let p = self.cfg.voltages[vi];
        let h_diff = self.cfg.h_diff();
        let (mut drift, mut diff) = (Vec::new(), Vec::new());
        for j in 0..self.cfg.trajectories_per_voltage {
            let t = self.read_table(&latent_file(vi, j))?;
            let (a1, a2, f1, f2) = (column(&t, "phi1")?, column(&t, "phi2")?, column(&t, "fine_phi1")?, column(&t, "fine_phi2")?);
            for k in 0..a1.len() {
                let x = Vec2::new(a1[k], a2[k]);
                if k + 1 < a1.len() {
                    if let Ok(q) = SnapshotPair::new(x, Vec2::new(a1[k + 1], a2[k + 1]), 1.0, p) {
                        drift.push(q);
                    }
                }
                if let Ok(q) = SnapshotPair::new(x, Vec2::new(f1[k], f2[k]), h_diff, p) {
                    diff.push(q);
                }
            }
        }
        if drift.is_empty() || diff.is_empty() {
            return Err(Error::Empty(format!("no finite snapshot pairs at voltage index {vi}")));
        }
        Ok((drift, diff))
    }

    pub fn external_latent(&self, k: usize) -> Result<Vec<Vec2>> {
        let t = self.read_table(&format!("latent/external_{k}.txt"))?;
        let (a, b) = (column(&t, "phi1")?, column(&t, "phi2")?);
        Ok(a.into_iter().zip(b).map(|(x, y)| Vec2::new(x, y)).collect())
    }

    /// Every stage except the ensemble uncertainty study.
    pub fn run_all(&self) -> Result<()> {
        self.simulate()?;
        self.featurize()?;
        self.dmaps()?;
        self.restrict()?;
        self.fit_km()?;
        self.fit_nn()?;
        self.integrate()?;
        self.free_energy()?;
        self.compare()?;
        self.report()
    }
}

pub(crate) fn column(t: &Table, name: &str) -> Result<Vec<f64>> {
    t.column(name)
        .ok_or_else(|| Error::Parse { path: PathBuf::new(), reason: format!("missing column {name}") })
}

/// Content hash of all files written by the recorded stages, for
/// reproducibility checks.
pub fn outputs_digest(dir: &Path) -> Result<String> {
    let m = RunManifest::load_or_new(dir, "", 0)?;
    let mut s = String::new();
    for (stage, rec) in &m.stages {
        for (name, hash) in &rec.outputs {
            s.push_str(&format!("{stage} {name} {hash}\n"));
        }
    }
    Ok(sha256_hex(s.as_bytes()))
}
