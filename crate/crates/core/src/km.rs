//! Kramers-Moyal drift and diagonal diffusivity from bursts.

use std::path::Path;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sde::{Coefficients, EsdeModel};
use crate::table::{header_fields, Table};
use crate::Vec2;

/// `ν*_i = ⟨Δx_i⟩/h` and `σ*_i = sqrt(⟨Δx_i²⟩/h)` from burst endpoints.
///
/// The second moment is not centered, so a drift `d` over `h` adds `d²/h`
/// to `σ*²`; this finite-`h` bias is left uncorrected.
pub fn km_point_estimate(endpoints: &[Vec2], x0: Vec2, h: f64) -> Result<(Vec2, Vec2)> {
    if endpoints.is_empty() {
        return Err(Error::Empty("burst has no endpoints".into()));
    }
    if endpoints.len() < 2 {
        return Err(Error::Domain("a burst needs at least two endpoints".into()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Domain(format!("burst duration must be positive, got {h}")));
    }
    let n = endpoints.len() as f64;
    let mut first = Vec2::zeros();
    let mut second = Vec2::zeros();
    for e in endpoints {
        let d = e - x0;
        first += d;
        second += d.component_mul(&d);
    }
    let drift = first / (n * h);
    let sigma = (second / (n * h)).map(f64::sqrt);
    Ok((drift, sigma))
}

/// Per-anchor Kramers-Moyal estimates, evaluated by nearest anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedModel {
    pub anchors: Vec<Vec2>,
    pub drift: Vec<Vec2>,
    /// Diagonal diffusivity factor per anchor.
    pub sigma: Vec<Vec2>,
    pub h: f64,
    pub p: f64,
}

/// Runs `burst_fn(anchor_index, anchor, n_replicas)` at every anchor and
/// estimates coefficients from the returned latent endpoints.
pub fn km_field<F>(anchors: &[Vec2], burst_fn: F, n_replicas: usize, h: f64, p: f64) -> Result<TabulatedModel>
where
    F: Fn(usize, Vec2, usize) -> Result<Vec<Vec2>> + Sync,
{
    if anchors.is_empty() {
        return Err(Error::Empty("no anchors".into()));
    }
    let estimates: Vec<(Vec2, Vec2)> = anchors
        .par_iter()
        .enumerate()
        .map(|(i, &x0)| {
            burst_fn(i, x0, n_replicas)
                .and_then(|ends| km_point_estimate(&ends, x0, h))
                .map_err(|e| Error::Anchor {
                    anchor: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let (drift, sigma) = estimates.into_iter().unzip();
    Ok(TabulatedModel {
        anchors: anchors.to_vec(),
        drift,
        sigma,
        h,
        p,
    })
}

impl TabulatedModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.anchors.len();
        if n == 0 {
            return Err(Error::Empty("tabulated model has no anchors".into()));
        }
        if self.drift.len() != n || self.sigma.len() != n {
            return Err(Error::Domain("anchor, drift and diffusivity counts differ".into()));
        }
        if self.sigma.iter().any(|s| !(s.x >= 0.0 && s.y >= 0.0)) {
            return Err(Error::Domain("negative diffusivity entry".into()));
        }
        Ok(())
    }

    /// Index of the nearest anchor, lowest index on ties.
    pub fn nearest(&self, x: Vec2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.anchors.iter().enumerate() {
            let d = (a - x).norm_squared();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Values at the nearest anchor.
    pub fn nn_evaluate(&self, x: Vec2) -> (Vec2, Vec2) {
        let i = self.nearest(x);
        (self.drift[i], self.sigma[i])
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["phi1", "phi2", "nu1", "nu2", "sigma11", "sigma22"]);
        for ((a, d), s) in self.anchors.iter().zip(&self.drift).zip(&self.sigma) {
            t.push(vec![a.x, a.y, d.x, d.y, s.x, s.y]);
        }
        t
    }

    pub fn to_text(&self) -> String {
        format!(
            "# esde-km h={} p={}\n{}",
            crate::table::fmt_f64(self.h),
            crate::table::fmt_f64(self.p),
            self.to_table().to_text()
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::table::write_text(path, &self.to_text())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut h = f64::NAN;
        let mut p = f64::NAN;
        if let Some(first) = text.lines().next() {
            for (k, v) in header_fields(first) {
                let val = v.parse::<f64>().map_err(|_| Error::parse(path, format!("bad header value {v}")))?;
                match k.as_str() {
                    "h" => h = val,
                    "p" => p = val,
                    _ => {}
                }
            }
        }
        let body: String = text.lines().filter(|l| !l.starts_with("# esde-km")).collect::<Vec<_>>().join("\n");
        let table = Table::parse(&body, path)?;
        let col = |name: &str| table.column(name).ok_or_else(|| Error::parse(path, format!("missing column {name}")));
        let (x, y, n1, n2, s1, s2) = (col("phi1")?, col("phi2")?, col("nu1")?, col("nu2")?, col("sigma11")?, col("sigma22")?);
        let model = Self {
            anchors: x.iter().zip(&y).map(|(a, b)| Vec2::new(*a, *b)).collect(),
            drift: n1.iter().zip(&n2).map(|(a, b)| Vec2::new(*a, *b)).collect(),
            sigma: s1.iter().zip(&s2).map(|(a, b)| Vec2::new(*a, *b)).collect(),
            h,
            p,
        };
        model.validate().map_err(|e| Error::parse(path, e.to_string()))?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::table::read_text(path)?, path)
    }
}

impl EsdeModel for TabulatedModel {
    fn evaluate(&self, x: Vec2, _p: f64) -> Result<Coefficients> {
        if self.anchors.is_empty() {
            return Err(Error::Empty("tabulated model has no anchors".into()));
        }
        let (drift, s) = self.nn_evaluate(x);
        Ok(Coefficients {
            drift,
            sigma: Matrix2::new(s.x, 0.0, 0.0, s.y),
        })
    }
}
