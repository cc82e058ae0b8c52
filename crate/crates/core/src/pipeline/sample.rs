//! Seeded trajectory sampling, order-parameter filtering and histogram
//! subsampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::config::PipelineConfig;
use crate::bd::{random_configuration, steps_for, BrownianDynamics, ParticleConfiguration, Trajectory};
use crate::error::{Error, Result};
use crate::order::{hexagonal_rg, order_parameters, OrderSettings};
use crate::rng::{stream, Rng};
use crate::table::Table;

/// Closest center distance allowed in initial placements.
const MIN_INITIAL_SEPARATION: f64 = 2.05;
/// Smallest placement disk, in close-packed radii. Random sequential
/// placement jams near half the hexagonal packing fraction.
pub const MIN_SPREAD: f64 = 1.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub voltage: usize,
    pub index: usize,
    /// Frames every `save_interval`.
    pub coarse: Trajectory,
    /// Frame `k` lies `save_interval / diff_substeps` after coarse frame `k`.
    pub fine: Trajectory,
}

/// Uniform placement in a disk whose radius is a random multiple of the
/// close-packed radius.
pub fn initial_configuration(cfg: &PipelineConfig, params_ref: &str, rng: &mut Rng) -> Result<ParticleConfiguration> {
    let n = cfg.physical.n_particles;
    // area of N hexagonally packed unit disks is 2√3 N
    let packed = (2.0 * 3f64.sqrt() * n as f64 / std::f64::consts::PI).sqrt();
    let spread = if cfg.init_spread_max > cfg.init_spread_min {
        rng.random_range(cfg.init_spread_min..cfg.init_spread_max)
    } else {
        cfg.init_spread_min
    };
    random_configuration(n, spread * packed, MIN_INITIAL_SEPARATION, params_ref, rng)
}

/// Coarse and fine frames from `c0`, `n_frames` coarse intervals long.
pub fn simulate_from(
    bd: &BrownianDynamics,
    cfg: &PipelineConfig,
    c0: &ParticleConfiguration,
    n_frames: usize,
    with_fine: bool,
    rng: &mut Rng,
) -> Result<(Trajectory, Trajectory)> {
    let total = steps_for(cfg.save_interval, cfg.dt)?;
    let first = steps_for(cfg.save_interval / cfg.diff_substeps as f64, cfg.dt)?;
    let mut coarse = vec![c0.clone()];
    let mut fine = Vec::new();
    let mut c = c0.clone();
    for _ in 0..n_frames {
        if with_fine {
            let f = bd.evolve(&c, cfg.dt, first, rng)?;
            c = bd.evolve(&f, cfg.dt, total - first, rng)?;
            fine.push(f);
        } else {
            c = bd.evolve(&c, cfg.dt, total, rng)?;
        }
        coarse.push(c.clone());
    }
    if with_fine {
        fine.push(bd.evolve(&c, cfg.dt, first, rng)?);
    }
    // exact frame times, independent of step accumulation
    for (k, f) in coarse.iter_mut().enumerate() {
        f.time = c0.time + k as f64 * cfg.save_interval;
    }
    for (k, f) in fine.iter_mut().enumerate() {
        f.time = c0.time + (k as f64 + 1.0 / cfg.diff_substeps as f64) * cfg.save_interval;
    }
    let wrap = |frames| Trajectory { frames, save_interval: cfg.save_interval, dt: cfg.dt };
    Ok((wrap(coarse), wrap(fine)))
}

pub fn simulate_trajectory(cfg: &PipelineConfig, voltage: usize, index: usize) -> Result<SampledTrajectory> {
    let bd = BrownianDynamics::new(&cfg.params_at(voltage))?;
    let mut rng = stream(cfg.seed, &[1, voltage as u64, index as u64]);
    let c0 = initial_configuration(cfg, bd.params_ref(), &mut rng)?;
    let (coarse, fine) = simulate_from(&bd, cfg, &c0, cfg.frames_per_trajectory, true, &mut rng)?;
    Ok(SampledTrajectory { voltage, index, coarse, fine })
}

/// Order parameters of one coarse frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub voltage: usize,
    pub trajectory: usize,
    pub frame: usize,
    pub rg: f64,
    pub rg_norm: f64,
    pub psi6: f64,
    pub c6: f64,
}

pub fn frame_records(t: &SampledTrajectory) -> Vec<FrameRecord> {
    let settings = OrderSettings::default();
    t.coarse
        .frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let o = order_parameters(&f.positions, &settings);
            FrameRecord {
                voltage: t.voltage,
                trajectory: t.index,
                frame: k,
                rg: o.rg,
                rg_norm: o.rg / hexagonal_rg(f.len()),
                psi6: o.psi6,
                c6: o.c6,
            }
        })
        .collect()
}

pub const RECORD_COLUMNS: [&str; 7] = ["voltage", "trajectory", "frame", "rg", "rg_norm", "psi6", "c6"];

pub fn records_table(records: &[FrameRecord]) -> Table {
    let mut t = Table::new(&RECORD_COLUMNS);
    for r in records {
        t.push(vec![r.voltage as f64, r.trajectory as f64, r.frame as f64, r.rg, r.rg_norm, r.psi6, r.c6]);
    }
    t
}

pub fn records_from_table(t: &Table) -> Result<Vec<FrameRecord>> {
    if t.columns != RECORD_COLUMNS {
        return Err(Error::Config(format!("unexpected frame table columns {:?}", t.columns)));
    }
    Ok(t.rows
        .iter()
        .map(|r| FrameRecord {
            voltage: r[0] as usize,
            trajectory: r[1] as usize,
            frame: r[2] as usize,
            rg: r[3],
            rg_norm: r[4],
            psi6: r[5],
            c6: r[6],
        })
        .collect())
}

/// Greedy per-bin capping on a `bins × bins` histogram over the bounding
/// box of `points`: every bin keeps at most `cap` points, with `cap` the
/// largest value whose total stays within `target`. Within a bin the kept
/// points are a seeded random subset. Returns sorted indices and the cap.
pub fn subsample_uniform(points: &[(f64, f64)], bins: usize, target: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    if points.is_empty() {
        return Err(Error::Empty("no frames left to subsample".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let bin = |v: f64, lo: f64, hi: f64| -> usize {
        if hi > lo {
            (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry((bin(p.0, x0, x1), bin(p.1, y0, y1))).or_default().push(i);
    }
    let total = |c: usize| cells.values().map(|v| v.len().min(c)).sum::<usize>();
    let max_count = cells.values().map(Vec::len).max().unwrap_or(0);
    let cap = if total(max_count) <= target {
        max_count
    } else {
        // largest cap within the target; at least one point per bin
        let (mut lo, mut hi) = (1, max_count);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if total(mid) <= target {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    };
    let mut rng = stream(seed, &[7]);
    let mut keep = Vec::new();
    for members in cells.values_mut() {
        members.shuffle(&mut rng);
        keep.extend(members.iter().take(cap));
    }
    keep.sort_unstable();
    Ok((keep, cap))
}
