//! Gaussian kernel density fields on a fixed square grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::table::{fmt_f64, header_fields, parse_floats, read_text, write_text};
use crate::Vec2;

/// `G×G` nodes spanning `[xmin, xmax] × [ymin, ymax]` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub size: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl GridSpec {
    pub fn square(half_width: f64, size: usize) -> Self {
        Self {
            size,
            xmin: -half_width,
            xmax: half_width,
            ymin: -half_width,
            ymax: half_width,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.xmax - self.xmin) / (self.size - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.ymax - self.ymin) / (self.size - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.xmin + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.ymin + j as f64 * self.dy()
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || !(self.xmax > self.xmin) || !(self.ymax > self.ymin) {
            return Err(Error::Config(format!("invalid density grid {self:?}")));
        }
        Ok(())
    }
}

/// Normalized density values, row-major with rows indexed by y.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub grid: GridSpec,
    pub bandwidth: f64,
}

impl DensityField {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.size + ix]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

/// Scott's rule `σ · n^(-1/(d+4))`.
pub fn scott_bandwidth(n: usize, d: usize, sigma: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("Scott's rule needs at least two samples, got {n}")));
    }
    Ok(sigma * (n as f64).powf(-1.0 / (d as f64 + 4.0)))
}

/// Mean of the per-axis sample standard deviations.
pub fn mean_axis_std(points: &[Vec2]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mean = points.iter().sum::<Vec2>() / n;
    let var = points
        .iter()
        .map(|p| (p - mean).component_mul(&(p - mean)))
        .sum::<Vec2>()
        / (n - 1.0);
    0.5 * (var.x.sqrt() + var.y.sqrt())
}

/// Bandwidth used for a configuration: Scott's rule in two dimensions.
pub fn configuration_bandwidth(points: &[Vec2]) -> Result<f64> {
    let bw = scott_bandwidth(points.len(), 2, mean_axis_std(points))?;
    if !(bw > 0.0) {
        return Err(Error::Degenerate("zero spread, bandwidth vanishes".into()));
    }
    Ok(bw)
}

/// Isotropic Gaussian KDE at the grid nodes, renormalized so the Riemann
/// sum is one. Every particle must lie at least three bandwidths inside
/// the grid.
pub fn kde_density(points: &[Vec2], grid: &GridSpec) -> Result<DensityField> {
    grid.validate()?;
    let bw = configuration_bandwidth(points)?;
    kde_with_bandwidth(points, grid, bw)
}

pub fn kde_with_bandwidth(points: &[Vec2], grid: &GridSpec, bw: f64) -> Result<DensityField> {
    let margin = 3.0 * bw;
    for (index, p) in points.iter().enumerate() {
        if p.x - margin < grid.xmin
            || p.x + margin > grid.xmax
            || p.y - margin < grid.ymin
            || p.y + margin > grid.ymax
            || !p.x.is_finite()
            || !p.y.is_finite()
        {
            return Err(Error::OutsideGrid {
                index,
                x: p.x,
                y: p.y,
            });
        }
    }
    let g = grid.size;
    let inv = -0.5 / (bw * bw);
    let mut values = vec![0.0; g * g];
    let mut fx = vec![0.0; g];
    let mut fy = vec![0.0; g];
    for p in points {
        for i in 0..g {
            fx[i] = (inv * (grid.x(i) - p.x).powi(2)).exp();
            fy[i] = (inv * (grid.y(i) - p.y).powi(2)).exp();
        }
        for (j, row) in values.chunks_exact_mut(g).enumerate() {
            let wy = fy[j];
            for (v, wx) in row.iter_mut().zip(&fx) {
                *v += wy * wx;
            }
        }
    }
    let total = values.iter().sum::<f64>() * grid.cell_area();
    if !(total > 0.0) {
        return Err(Error::Numerical("density vanishes on the grid".into()));
    }
    let scale = 1.0 / total;
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(DensityField {
        values,
        grid: *grid,
        bandwidth: bw,
    })
}

const TAG: &str = "esde-density";

pub fn densities_to_text(fields: &[DensityField]) -> String {
    let mut out = String::new();
    for f in fields {
        let g = &f.grid;
        let _ = writeln!(
            out,
            "# {TAG} g={} xmin={} xmax={} ymin={} ymax={} bandwidth={}",
            g.size,
            fmt_f64(g.xmin),
            fmt_f64(g.xmax),
            fmt_f64(g.ymin),
            fmt_f64(g.ymax),
            fmt_f64(f.bandwidth)
        );
        for row in f.values.chunks_exact(g.size) {
            let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn write_densities(path: &Path, fields: &[DensityField]) -> Result<()> {
    write_text(path, &densities_to_text(fields))
}

pub fn parse_densities(text: &str, path: &Path) -> Result<Vec<DensityField>> {
    let mut fields = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((lineno, header)) = lines.next() {
        if !header.starts_with('#') || !header.contains(TAG) {
            return Err(Error::parse(path, format!("line {}: expected density header", lineno + 1)));
        }
        let mut size = 0usize;
        let mut nums = [f64::NAN; 5];
        for (k, v) in header_fields(header) {
            let bad = || Error::parse(path, format!("line {}: bad value {k}={v}", lineno + 1));
            match k.as_str() {
                "g" => size = v.parse().map_err(|_| bad())?,
                "xmin" => nums[0] = v.parse().map_err(|_| bad())?,
                "xmax" => nums[1] = v.parse().map_err(|_| bad())?,
                "ymin" => nums[2] = v.parse().map_err(|_| bad())?,
                "ymax" => nums[3] = v.parse().map_err(|_| bad())?,
                "bandwidth" => nums[4] = v.parse().map_err(|_| bad())?,
                _ => {}
            }
        }
        if size < 2 || nums.iter().any(|v| v.is_nan()) {
            return Err(Error::parse(path, format!("line {}: incomplete header", lineno + 1)));
        }
        let mut values = Vec::with_capacity(size * size);
        for _ in 0..size {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| Error::parse(path, "truncated density record"))?;
            let row = parse_floats(row).map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 1)))?;
            if row.len() != size {
                return Err(Error::parse(path, format!("line {}: expected {size} values", ln + 1)));
            }
            values.extend(row);
        }
        fields.push(DensityField {
            values,
            grid: GridSpec {
                size,
                xmin: nums[0],
                xmax: nums[1],
                ymin: nums[2],
                ymax: nums[3],
            },
            bandwidth: nums[4],
        });
    }
    Ok(fields)
}

pub fn read_densities(path: &Path) -> Result<Vec<DensityField>> {
    parse_densities(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn scott_values() {
        assert_relative_eq!(scott_bandwidth(10_000, 2, 1.0).unwrap(), 0.215_443_469, epsilon = 1e-8);
        assert_relative_eq!(
            scott_bandwidth(10_000, 2, 1.0).unwrap(),
            10_000f64.powf(-1.0 / 6.0),
            max_relative = 1e-15
        );
        assert_eq!(scott_bandwidth(5, 2, 0.0).unwrap(), 0.0);
        assert!(scott_bandwidth(1, 2, 1.0).is_err());
    }

    #[test]
    fn single_blob_peaks_at_center() {
        let grid = GridSpec::square(4.0, 65);
        let f = kde_with_bandwidth(&[Vec2::zeros()], &grid, 0.5).unwrap();
        let (argmax, _) = f
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(argmax, 32 * 65 + 32);
        // symmetric under reflection
        assert_relative_eq!(f.at(10, 32), f.at(54, 32), max_relative = 1e-12);
        assert_relative_eq!(f.at(32, 10), f.at(32, 54), max_relative = 1e-12);
        assert_relative_eq!(f.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_particles_give_two_maxima() {
        let grid = GridSpec::square(8.0, 64);
        let pts = [Vec2::new(-3.0, 0.5), Vec2::new(3.0, -1.0)];
        let bw = 0.5;
        let f = kde_with_bandwidth(&pts, &grid, bw).unwrap();
        let mixture = |x: f64, y: f64| {
            pts.iter()
                .map(|p| (-((x - p.x).powi(2) + (y - p.y).powi(2)) / (2.0 * bw * bw)).exp())
                .sum::<f64>()
        };
        let is_max = |v: &dyn Fn(usize, usize) -> f64, ix: usize, iy: usize| {
            let c = v(ix, iy);
            (-1i64..=1).all(|dx| {
                (-1i64..=1).all(|dy| {
                    (dx == 0 && dy == 0) || c > v((ix as i64 + dx) as usize, (iy as i64 + dy) as usize)
                })
            })
        };
        let field = |ix: usize, iy: usize| f.at(ix, iy);
        let oracle = |ix: usize, iy: usize| mixture(grid.x(ix), grid.y(iy));
        let mut found = Vec::new();
        for iy in 1..63 {
            for ix in 1..63 {
                assert_eq!(is_max(&field, ix, iy), is_max(&oracle, ix, iy));
                if is_max(&field, ix, iy) {
                    found.push((ix, iy));
                }
            }
        }
        assert_eq!(found.len(), 2);
        for p in &pts {
            let ix = ((p.x - grid.xmin) / grid.dx()).round() as usize;
            let iy = ((p.y - grid.ymin) / grid.dy()).round() as usize;
            assert!(found.contains(&(ix, iy)));
        }
    }

    #[test]
    fn outside_margin_is_rejected_with_index() {
        let grid = GridSpec::square(4.0, 32);
        let pts = [Vec2::zeros(), Vec2::new(3.9, 0.0)];
        match kde_with_bandwidth(&pts, &grid, 0.5) {
            Err(Error::OutsideGrid { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn densities_round_trip() {
        let grid = GridSpec::square(5.0, 8);
        let f = kde_density(&[Vec2::new(0.3, 0.1), Vec2::new(-0.5, 0.2)], &grid).unwrap();
        let text = densities_to_text(&[f.clone(), f.clone()]);
        let back = parse_densities(&text, Path::new("d")).unwrap();
        assert_eq!(back, vec![f.clone(), f]);
        assert!(parse_densities("# esde-density g=8\n", Path::new("d")).is_err());
    }

    proptest! {
        #[test]
        fn density_is_normalized_and_nonnegative(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..20)
        ) {
            let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            prop_assume!(mean_axis_std(&pts) > 1e-3);
            let grid = GridSpec::square(20.0, 64);
            let f = kde_density(&pts, &grid).unwrap();
            prop_assert!(f.values.iter().all(|&v| v >= 0.0));
            prop_assert!((f.integral() - 1.0).abs() <= 1e-6);
        }
    }
}
