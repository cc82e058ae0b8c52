//! Figures and their tables under `figures/`.

use super::models::NN_PARAM_FILE;
use super::{column, plots, Pipeline};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::sde::EsdeModel;
use crate::table::Table;
use crate::Vec2;

/// Control-parameter samples in the coefficient sweep.
const SWEEP_POINTS: usize = 21;
/// Arrows drawn per drift figure.
const MAX_ARROWS: usize = 200;

fn pairs(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    a.iter().copied().zip(b.iter().copied()).collect()
}

fn grid_from(t: &Table) -> Result<Grid2> {
    let uniq = |v: Vec<f64>| {
        let mut v: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let (xs, ys) = (uniq(column(t, "phi1")?), uniq(column(t, "phi2")?));
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::Degenerate("table does not hold a grid".into()));
    }
    Grid2::uniform(xs[0], xs[xs.len() - 1], ys[0], ys[ys.len() - 1], xs.len(), ys.len())
}

fn diffusion_row(model: &dyn EsdeModel, x: Vec2, p: f64) -> Result<Vec<f64>> {
    let c = model.evaluate(x, p)?;
    let d = c.sigma2();
    Ok(vec![c.drift.x, c.drift.y, d[(0, 0)], d[(1, 0)], d[(1, 1)]])
}

impl Pipeline {
    fn fig(&self, name: &str) -> std::path::PathBuf {
        self.path(&format!("figures/{name}"))
    }

    fn copy_table(&self, from: &str, to: &str, outputs: &mut Vec<String>) -> Result<Table> {
        let t = self.read_table(from)?;
        self.write_table(&format!("figures/{to}"), &t, outputs)?;
        Ok(t)
    }

    fn svg(&self, name: &str, outputs: &mut Vec<String>) -> std::path::PathBuf {
        outputs.push(format!("figures/{name}"));
        self.fig(name)
    }

    fn envelope_plot(&self, t: &Table, name: &str, title: &str, models: &[String], outputs: &mut Vec<String>) -> Result<()> {
        let time = column(t, "time")?;
        for coord in ["phi1", "phi2"] {
            let mut series = Vec::new();
            let mut thin = Vec::new();
            for m in models {
                for (s, is_thin) in [("mean", false), ("min", true), ("max", true)] {
                    series.push((format!("{m} {s}"), pairs(&time, &column(t, &format!("{m}_{coord}_{s}"))?)));
                    thin.push(is_thin);
                }
            }
            let path = self.svg(&format!("{name}_{coord}.svg"), outputs);
            plots::lines(&path, &format!("{title} ({coord})"), ("time", coord), &series, &thin)?;
        }
        Ok(())
    }

    /// Writes every figure whose inputs exist; all but the ensemble maps
    /// are required.
    pub fn report(&self) -> Result<()> {
        self.mkdir("figures")?;
        let mut outputs = Vec::new();
        let nv = self.cfg.voltages.len();

        // embedding coloured by order parameters
        let emb = self.copy_table("embedding.txt", "fig3_embedding.txt", &mut outputs)?;
        let (p1, p2) = (column(&emb, "phi1")?, column(&emb, "phi2")?);
        let pts = pairs(&p1, &p2);
        for (c, label) in [("rg_norm", "normalized Rg"), ("psi6", "psi6")] {
            let path = self.svg(&format!("fig3_embedding_{c}.svg"), &mut outputs);
            plots::scatter(&path, &format!("embedding coloured by {label}"), ("phi1", "phi2"), &pts, &column(&emb, c)?)?;
        }

        // drift fields
        let voltage = column(&emb, "voltage")?;
        let grid = self.potential_grid()?;
        for vi in 0..nv {
            let p = self.cfg.voltages[vi];
            let nn = self.load_nn(vi)?;
            let members: Vec<usize> = (0..pts.len()).filter(|&i| voltage[i] as usize == vi).collect();
            let stride = members.len().div_ceil(MAX_ARROWS).max(1);
            let mut t = Table::new(&["phi1", "phi2", "nu1", "nu2"]);
            for &i in members.iter().step_by(stride) {
                let x = Vec2::new(p1[i], p2[i]);
                let c = EsdeModel::evaluate(&nn.model, x, p)?;
                t.push(vec![x.x, x.y, c.drift.x, c.drift.y]);
            }
            self.write_table(&format!("figures/fig4_drift_v{vi}.txt"), &t, &mut outputs)?;
            let at = pairs(&column(&t, "phi1")?, &column(&t, "phi2")?);
            let vecs = pairs(&column(&t, "nu1")?, &column(&t, "nu2")?);
            let len = 0.05 * grid.spacing().0.abs() * grid.nx() as f64;
            let path = self.svg(&format!("fig4_drift_v{vi}.svg"), &mut outputs);
            plots::arrows(&path, &format!("network drift, V* = {p}"), &at, &vecs, len)?;

            let km = self.load_km(vi)?;
            let path = self.svg(&format!("fig4_km_drift_v{vi}.svg"), &mut outputs);
            let at: Vec<(f64, f64)> = km.anchors.iter().map(|a| (a.x, a.y)).collect();
            let vecs: Vec<(f64, f64)> = km.drift.iter().map(|d| (d.x, d.y)).collect();
            plots::arrows(&path, &format!("Kramers-Moyal drift, V* = {p}"), &at, &vecs, len)?;
            self.write_table(&format!("figures/fig4_km_v{vi}.txt"), &km.to_table(), &mut outputs)?;

            // coefficient surfaces
            let mut t = Table::new(&["phi1", "phi2", "nu1", "nu2", "d11", "d21", "d22"]);
            for k in 0..grid.len() {
                let x = grid.node(k);
                let mut row = vec![x.x, x.y];
                row.extend(diffusion_row(&nn.model, x, p)?);
                t.push(row);
            }
            self.write_table(&format!("figures/fig5_coefficients_v{vi}.txt"), &t, &mut outputs)?;
            let speed: Vec<f64> = t.rows.iter().map(|r| r[2].hypot(r[3])).collect();
            let trace: Vec<f64> = t.rows.iter().map(|r| r[4] + r[6]).collect();
            let path = self.svg(&format!("fig5_drift_norm_v{vi}.svg"), &mut outputs);
            plots::heatmap(&path, &format!("|drift|, V* = {p}"), &grid, &speed)?;
            let path = self.svg(&format!("fig5_diffusion_trace_v{vi}.svg"), &mut outputs);
            plots::heatmap(&path, &format!("trace of diffusion, V* = {p}"), &grid, &trace)?;

            // path envelopes
            let t = self.copy_table(&format!("paths_v{vi}.txt"), &format!("fig6_paths_v{vi}.txt"), &mut outputs)?;
            let models: Vec<String> = ["bd", "km", "nn", "nn_param"].iter().map(|s| s.to_string()).collect();
            self.envelope_plot(&t, &format!("fig6_paths_v{vi}"), &format!("paths, V* = {p}"), &models, &mut outputs)?;

            // potentials
            for (src, dst, label) in [
                (format!("potential_v{vi}.txt"), format!("fig9_potential_v{vi}"), "fixed-voltage"),
                (format!("potential_param_v{vi}.txt"), format!("fig9_potential_param_v{vi}"), "parameter-dependent"),
            ] {
                let t = self.copy_table(&src, &format!("{dst}.txt"), &mut outputs)?;
                let g = grid_from(&t)?;
                let path = self.svg(&format!("{dst}.svg"), &mut outputs);
                plots::heatmap(&path, &format!("effective potential ({label}), V* = {p}"), &g, &column(&t, "G")?)?;
            }
        }

        // parameter-dependent model across voltages
        let t = self.copy_table("param_paths.txt", "fig7_param_paths.txt", &mut outputs)?;
        let names: Vec<String> = (0..nv).map(|vi| format!("v{vi}")).collect();
        let time = column(&t, "time")?;
        for coord in ["phi1", "phi2"] {
            let series: Vec<(String, Vec<(f64, f64)>)> = names
                .iter()
                .zip(&self.cfg.voltages)
                .map(|(n, p)| Ok((format!("V* = {p}"), pairs(&time, &column(&t, &format!("{n}_{coord}_mean"))?))))
                .collect::<Result<_>>()?;
            let path = self.svg(&format!("fig7_param_paths_{coord}.svg"), &mut outputs);
            plots::lines(&path, &format!("parameter-dependent mean paths ({coord})"), ("time", coord), &series, &vec![false; series.len()])?;
        }

        // coefficients against the control parameter at the embedding centre
        let param = self.load_nn_param()?;
        let centre = Vec2::new(p1.iter().sum::<f64>(), p2.iter().sum::<f64>()) / p1.len().max(1) as f64;
        let lo = self.cfg.voltages.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.cfg.voltages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sweep = Table::new(&["p", "nu1", "nu2", "d11", "d21", "d22"]);
        for k in 0..SWEEP_POINTS {
            let p = lo + (hi - lo) * k as f64 / (SWEEP_POINTS - 1) as f64;
            let mut row = vec![p];
            row.extend(diffusion_row(&param.model, centre, p)?);
            sweep.push(row);
        }
        self.write_table("figures/fig8_param_sweep.txt", &sweep, &mut outputs)?;
        let mut fixed = Table::new(&["p", "nu1", "nu2", "d11", "d21", "d22", "km_nu1", "km_nu2", "km_d11", "km_d22"]);
        for (vi, &p) in self.cfg.voltages.iter().enumerate() {
            let mut row = vec![p];
            row.extend(diffusion_row(&self.load_nn(vi)?.model, centre, p)?);
            let km = self.load_km(vi)?;
            let (d, s) = km.nn_evaluate(centre);
            row.extend([d.x, d.y, s.x * s.x, s.y * s.y]);
            fixed.push(row);
        }
        self.write_table("figures/fig8_fixed_voltage.txt", &fixed, &mut outputs)?;
        let sp = column(&sweep, "p")?;
        let fp = column(&fixed, "p")?;
        for (c, label) in [("nu1", "drift 1"), ("nu2", "drift 2"), ("d11", "diffusion 11"), ("d22", "diffusion 22")] {
            let series = vec![
                ("parameter-dependent".to_string(), pairs(&sp, &column(&sweep, c)?)),
                ("fixed-voltage".to_string(), pairs(&fp, &column(&fixed, c)?)),
                ("Kramers-Moyal".to_string(), pairs(&fp, &column(&fixed, &format!("km_{c}"))?)),
            ];
            let path = self.svg(&format!("fig8_{c}.svg"), &mut outputs);
            plots::lines(&path, &format!("{label} at the embedding centre"), ("V*", c), &series, &[false, false, false])?;
        }

        // external trajectories against the parameter-dependent model
        for k in 0..self.external_files().len() {
            let rel = format!("external_paths_{k}.txt");
            if !self.path(&rel).exists() {
                continue;
            }
            let t = self.copy_table(&rel, &format!("fig10_external_{k}.txt"), &mut outputs)?;
            let time = column(&t, "time")?;
            for coord in ["phi1", "phi2"] {
                let mut series = vec![("external".to_string(), pairs(&time, &column(&t, &format!("external_{coord}"))?))];
                for s in ["mean", "min", "max"] {
                    series.push((format!("eSDE {s}"), pairs(&time, &column(&t, &format!("nn_param_{coord}_{s}"))?)));
                }
                let path = self.svg(&format!("fig10_external_{k}_{coord}.svg"), &mut outputs);
                plots::lines(&path, &format!("external trajectory ({coord})"), ("time", coord), &series, &[false, false, true, true])?;
            }
        }

        // ensemble spread, when available
        for vi in 0..nv {
            let rel = format!("uq_v{vi}_grid.txt");
            if !self.path(&rel).exists() {
                continue;
            }
            let t = self.copy_table(&rel, &format!("fig12_uq_v{vi}.txt"), &mut outputs)?;
            let g = grid_from(&t)?;
            let nu: Vec<f64> = column(&t, "nu1_std")?.iter().zip(column(&t, "nu2_std")?).map(|(a, b)| a.hypot(b)).collect();
            let s11 = column(&t, "s11_std")?;
            let s22 = column(&t, "s22_std")?;
            for (name, label, v) in [("fig12", "drift", nu), ("fig13", "diffusivity 11", s11), ("fig14", "diffusivity 22", s22)] {
                let path = self.svg(&format!("{name}_uq_v{vi}.svg"), &mut outputs);
                plots::heatmap(&path, &format!("ensemble std of {label}"), &g, &v)?;
            }
        }
        self.record("report", self.cfg.seed, &["embedding.txt".into(), NN_PARAM_FILE.into()], &outputs)
    }
}
