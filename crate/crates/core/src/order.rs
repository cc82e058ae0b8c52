//! Collective order parameters: radius of gyration and bond-orientational
//! order.
//!
//! Neighbors are all particles within a distance cutoff. For particle `j`
//! the local bond order is `ψ6,j = (1/n_j) Σ_k exp(6iθ_jk)`; isolated
//! particles contribute zero.

use crate::Vec2;

/// Default neighbor cutoff in particle radii.
pub const NEIGHBOR_CUTOFF: f64 = 2.5;
/// Default bond-coherence threshold for C6.
pub const COHERENCE_THRESHOLD: f64 = 0.32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderParams {
    pub rg: f64,
    pub psi6: f64,
    pub c6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSettings {
    pub neighbor_cutoff: f64,
    pub coherence_threshold: f64,
}

impl Default for OrderSettings {
    fn default() -> Self {
        Self {
            neighbor_cutoff: NEIGHBOR_CUTOFF,
            coherence_threshold: COHERENCE_THRESHOLD,
        }
    }
}

pub fn order_parameters(positions: &[Vec2], settings: &OrderSettings) -> OrderParams {
    let local = local_bond_order(positions, settings.neighbor_cutoff);
    OrderParams {
        rg: radius_of_gyration(positions),
        psi6: global_from_local(&local),
        c6: c6_from_local(positions, &local, settings),
    }
}

pub fn radius_of_gyration(positions: &[Vec2]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<Vec2>() / n;
    (positions.iter().map(|r| (r - mean).norm_squared()).sum::<f64>() / n).sqrt()
}

fn neighbors(positions: &[Vec2], j: usize, cutoff: f64) -> impl Iterator<Item = usize> + '_ {
    let rj = positions[j];
    positions
        .iter()
        .enumerate()
        .filter(move |&(k, rk)| k != j && (rk - rj).norm() < cutoff)
        .map(|(k, _)| k)
}

/// Complex `ψ6,j` as `(re, im)` for every particle.
pub fn local_bond_order(positions: &[Vec2], cutoff: f64) -> Vec<(f64, f64)> {
    (0..positions.len())
        .map(|j| {
            let (mut re, mut im, mut count) = (0.0, 0.0, 0usize);
            for k in neighbors(positions, j, cutoff) {
                let d = positions[k] - positions[j];
                let angle = 6.0 * d.y.atan2(d.x);
                re += angle.cos();
                im += angle.sin();
                count += 1;
            }
            if count == 0 {
                (0.0, 0.0)
            } else {
                (re / count as f64, im / count as f64)
            }
        })
        .collect()
}

fn global_from_local(local: &[(f64, f64)]) -> f64 {
    if local.is_empty() {
        return 0.0;
    }
    let n = local.len() as f64;
    let (re, im) = local
        .iter()
        .fold((0.0, 0.0), |(a, b), &(re, im)| (a + re, b + im));
    (re / n).hypot(im / n)
}

/// Global six-fold bond order `|⟨ψ6,j⟩|`.
pub fn psi6_global(positions: &[Vec2], neighbor_cutoff: f64) -> f64 {
    global_from_local(&local_bond_order(positions, neighbor_cutoff))
}

fn c6_from_local(positions: &[Vec2], local: &[(f64, f64)], settings: &OrderSettings) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let total: f64 = (0..positions.len())
        .map(|j| {
            let (aj, bj) = local[j];
            let mj = aj.hypot(bj);
            if mj == 0.0 {
                return 0.0;
            }
            let coherent = neighbors(positions, j, settings.neighbor_cutoff)
                .filter(|&k| {
                    let (ak, bk) = local[k];
                    let mk = ak.hypot(bk);
                    // Re(ψj conj(ψk)) / |ψj||ψk|
                    mk > 0.0 && (aj * ak + bj * bk) / (mj * mk) >= settings.coherence_threshold
                })
                .count();
            coherent.min(6) as f64 / 6.0
        })
        .sum();
    total / positions.len() as f64
}

/// Ensemble mean of the fraction of six-fold coherent neighbors.
pub fn c6_ensemble(positions: &[Vec2], neighbor_cutoff: f64, coherence_threshold: f64) -> f64 {
    let settings = OrderSettings {
        neighbor_cutoff,
        coherence_threshold,
    };
    c6_from_local(positions, &local_bond_order(positions, neighbor_cutoff), &settings)
}

/// The `n` triangular-lattice sites closest to the origin.
pub fn hexagonal_cluster(n: usize, spacing: f64) -> Vec<Vec2> {
    let reach = ((n as f64).sqrt() as i64) + 3;
    let a1 = Vec2::new(spacing, 0.0);
    let a2 = Vec2::new(0.5 * spacing, 0.5 * 3f64.sqrt() * spacing);
    let mut sites: Vec<Vec2> = (-reach..=reach)
        .flat_map(|i| (-reach..=reach).map(move |j| i as f64 * a1 + j as f64 * a2))
        .collect();
    sites.sort_by(|a, b| {
        a.norm_squared()
            .total_cmp(&b.norm_squared())
            .then(a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)))
    });
    sites.truncate(n);
    sites
}

/// Radius of gyration of the close-packed cluster of `n` particles at
/// contact, the reference length for normalized Rg.
pub fn hexagonal_rg(n: usize) -> f64 {
    radius_of_gyration(&hexagonal_cluster(n, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn rotate(points: &[Vec2], angle: f64, shift: Vec2) -> Vec<Vec2> {
        let (s, c) = angle.sin_cos();
        points
            .iter()
            .map(|p| Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift)
            .collect()
    }

    #[test]
    fn rg_simple_cases() {
        assert_eq!(radius_of_gyration(&[Vec2::new(1.0, 1.0); 4]), 0.0);
        assert_eq!(radius_of_gyration(&[Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)]), 1.0);
    }

    #[test]
    fn rg_matches_two_pass_formula() {
        let mut rng = crate::rng::rng_from_seed(11);
        let pts: Vec<Vec2> = (0..40)
            .map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let two_pass = (pts.iter().map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2)).sum::<f64>() / n).sqrt();
        assert_relative_eq!(radius_of_gyration(&pts), two_pass, max_relative = 1e-12);
        let scaled: Vec<Vec2> = pts.iter().map(|p| 2.5 * p).collect();
        assert_relative_eq!(radius_of_gyration(&scaled), 2.5 * two_pass, max_relative = 1e-12);
    }

    #[test]
    fn hexagonal_patch_is_ordered() {
        let hex = hexagonal_cluster(61, 2.0);
        assert!(psi6_global(&hex, NEIGHBOR_CUTOFF) >= 0.99);
        let c6 = c6_ensemble(&hex, NEIGHBOR_CUTOFF, COHERENCE_THRESHOLD);
        // boundary particles have fewer than six neighbors
        assert!(c6 > 0.75 && c6 <= 1.0, "{c6}");
        // interior fraction dominates for large patches
        let big = hexagonal_cluster(1000, 2.0);
        assert!(c6_ensemble(&big, NEIGHBOR_CUTOFF, COHERENCE_THRESHOLD) > 0.9);
    }

    #[test]
    fn square_lattice_is_not_hexatic() {
        let sq: Vec<Vec2> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Vec2::new(2.0 * i as f64, 2.0 * j as f64)))
            .collect();
        assert!(psi6_global(&sq, NEIGHBOR_CUTOFF) <= 0.3);
    }

    #[test]
    fn single_particle_has_no_order() {
        let one = [Vec2::new(0.0, 0.0)];
        assert_eq!(psi6_global(&one, NEIGHBOR_CUTOFF), 0.0);
        assert_eq!(c6_ensemble(&one, NEIGHBOR_CUTOFF, COHERENCE_THRESHOLD), 0.0);
    }

    #[test]
    fn ideal_gas_has_low_order() {
        // Monte-Carlo oracle: uniform gas, 100 seeds
        let mut psi_sum = 0.0;
        let mut c6_sum = 0.0;
        for seed in 0..100 {
            let mut rng = crate::rng::stream(99, &[seed]);
            let side = (200.0f64 * 30.0).sqrt();
            let pts: Vec<Vec2> = (0..200)
                .map(|_| Vec2::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
                .collect();
            psi_sum += psi6_global(&pts, NEIGHBOR_CUTOFF);
            c6_sum += c6_ensemble(&pts, NEIGHBOR_CUTOFF, COHERENCE_THRESHOLD);
        }
        assert!(psi_sum / 100.0 <= 0.2, "{}", psi_sum / 100.0);
        assert!(c6_sum / 100.0 <= 0.1, "{}", c6_sum / 100.0);
    }

    #[test]
    fn order_invariant_under_rigid_motion() {
        let mut rng = crate::rng::rng_from_seed(5);
        let pts: Vec<Vec2> = (0..50)
            .map(|_| Vec2::new(rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)))
            .collect();
        let s = OrderSettings::default();
        let a = order_parameters(&pts, &s);
        let b = order_parameters(&rotate(&pts, 0.7, Vec2::new(3.0, -4.0)), &s);
        assert_relative_eq!(a.rg, b.rg, max_relative = 1e-12);
        assert_relative_eq!(a.psi6, b.psi6, epsilon = 1e-12);
        assert_relative_eq!(a.c6, b.c6, epsilon = 1e-12);
        assert!((0.0..=1.0 + 1e-9).contains(&a.psi6) && (0.0..=1.0).contains(&a.c6));
    }

    #[test]
    fn hexagonal_rg_grows_with_size() {
        let small = hexagonal_rg(7);
        // six neighbors at distance 2 plus the center
        assert_relative_eq!(small, (6.0 * 4.0 / 7.0f64).sqrt(), max_relative = 1e-12);
        assert!(hexagonal_rg(30) > small);
    }
}
