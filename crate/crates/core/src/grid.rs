//! Rectangular node grids in latent space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// Node grid, row-major with rows along `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// Axis of `n` nodes covering `[lo, hi]` (widened to contain 0) with the
/// origin exactly on a node.
fn axis_through_origin(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = (lo.min(0.0), hi.max(0.0));
    let step = (hi - lo) / (n - 1) as f64;
    if step == 0.0 {
        return vec![0.0; n];
    }
    let i0 = (-lo / step).round() as i64;
    (0..n as i64).map(|i| (i - i0) as f64 * step).collect()
}

impl Grid2 {
    pub fn uniform(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::check(xmin, xmax, ymin, ymax, nx, ny)?;
        Ok(Self {
            xs: axis(xmin, xmax, nx),
            ys: axis(ymin, ymax, ny),
        })
    }

    /// Grid over the given bounds whose nodes include the origin.
    pub fn through_origin(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::check(xmin, xmax, ymin, ymax, nx, ny)?;
        if nx < 2 || ny < 2 {
            return Err(Error::Domain("a grid through the origin needs two nodes per axis".into()));
        }
        Ok(Self {
            xs: axis_through_origin(xmin, xmax, nx),
            ys: axis_through_origin(ymin, ymax, ny),
        })
    }

    /// Bounding box of `points`, padded by `pad` of its extent per side.
    pub fn covering(points: &[Vec2], n: usize, pad: f64, through_origin: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("no points to cover".into()));
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        let (px, py) = (pad * (xmax - xmin), pad * (ymax - ymin));
        if through_origin {
            Self::through_origin(xmin - px, xmax + px, ymin - py, ymax + py, n, n)
        } else {
            Self::uniform(xmin - px, xmax + px, ymin - py, ymax + py, n, n)
        }
    }

    fn check(xmin: f64, xmax: f64, ymin: f64, ymax: f64, nx: usize, ny: usize) -> Result<()> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain("grid needs at least one node per axis".into()));
        }
        if ![xmin, xmax, ymin, ymax].iter().all(|v| v.is_finite()) || xmin > xmax || ymin > ymax {
            return Err(Error::Domain(format!("invalid grid bounds [{xmin}, {xmax}] x [{ymin}, {ymax}]")));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    pub fn node(&self, k: usize) -> Vec2 {
        Vec2::new(self.xs[k % self.nx()], self.ys[k / self.nx()])
    }

    pub fn nodes(&self) -> Vec<Vec2> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Index of the node at the origin, if any.
    pub fn origin_index(&self) -> Option<usize> {
        let ix = self.xs.iter().position(|&x| x == 0.0)?;
        let iy = self.ys.iter().position(|&y| y == 0.0)?;
        Some(self.index(ix, iy))
    }

    pub fn spacing(&self) -> (f64, f64) {
        let d = |v: &[f64]| if v.len() > 1 { v[1] - v[0] } else { 0.0 };
        (d(&self.xs), d(&self.ys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_layout() {
        let g = Grid2::uniform(0.0, 1.0, -1.0, 1.0, 3, 5).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.node(g.index(2, 4)), Vec2::new(1.0, 1.0));
        assert!(Grid2::uniform(1.0, 0.0, 0.0, 1.0, 3, 3).is_err());
    }

    proptest! {
        #[test]
        fn origin_is_always_a_node(lo in -5.0f64..2.0, w in 0.1f64..6.0, n in 2usize..40) {
            let g = Grid2::through_origin(lo, lo + w, lo, lo + w, n, n).unwrap();
            let k = g.origin_index();
            prop_assert!(k.is_some());
            prop_assert_eq!(g.node(k.unwrap()), Vec2::zeros());
            prop_assert_eq!(g.nx(), n);
        }
    }
}
