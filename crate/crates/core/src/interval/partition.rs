use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::rational::{ceil, rat, serde_rational, Rational};
use super::sampled::SampledFunction;
use crate::error::{Error, Result};

/// Largest `δ₀ = j/M` such that grid points closer than `δ₀` have values differing by less
/// than `eps` for every function in `fs`. Never below `1/M`.
pub fn modulus_delta(fs: &[SampledFunction], eps: f64) -> Result<Rational> {
    let Some(first) = fs.first() else {
        return Err(Error::OutOfRange("modulus_delta needs a nonempty family".into()));
    };
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("eps must be positive, got {eps}")));
    }
    let grid = first.grid();
    for f in fs {
        grid.check_same(&f.grid())?;
    }
    let m = grid.m();
    // Comparisons are made against a slightly shrunken bound so that rounding in the grid
    // values never lets a pair sit exactly on the bound.
    let bound = eps - 1e-12 * eps.max(1.0);
    let mut j = 1;
    let mut running = 0.0f64;
    for s in 1..=m {
        let osc = fs.iter().fold(0.0f64, |acc, f| {
            let v = f.values();
            (0..=m - s).fold(acc, |acc, i| acc.max((v[i + s] - v[i]).abs()))
        });
        running = running.max(osc);
        if running < bound {
            j = s + 1;
        } else {
            break;
        }
    }
    Ok(rat(j.min(m) as i128, m as i128))
}

/// Uniform `δ₀`-dense grid indices `0 = x_1 < ... < x_n = M` with `n = ⌈1/δ₀⌉ + 1`.
pub fn dense_points(delta0: Rational, grid: Grid) -> Result<Vec<usize>> {
    let m = grid.m() as i128;
    if delta0 < rat(1, m) || delta0 > rat(1, 1) {
        return Err(Error::OutOfRange(format!(
            "delta0 = {delta0} outside [1/{m}, 1]"
        )));
    }
    let segments = ceil(&delta0.recip());
    Ok((0..=segments)
        .map(|i| ((2 * i * m + segments) / (2 * segments)) as usize)
        .collect())
}

/// Borel partition of the grid into connected cells `X_1..X_n` around representatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    grid: Grid,
    reps: Vec<usize>,
    starts: Vec<usize>,
    #[serde(with = "serde_rational")]
    radius: Rational,
}

/// Voronoi cells around `points`. A grid point at equal distance from two representatives
/// belongs to the upper cell, so cells are `[mid_{i-1}, mid_i)`.
pub fn make_partition(points: &[usize], grid: Grid, radius: Rational) -> Result<CellPartition> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegeneratePartition(n));
    }
    if points[0] != 0 || points[n - 1] != grid.m() {
        return Err(Error::OutOfRange(
            "representatives must start at 0 and end at 1".into(),
        ));
    }
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::OutOfRange(
            "representatives must be strictly increasing".into(),
        ));
    }
    let mut starts = Vec::with_capacity(n + 1);
    starts.push(0);
    for w in points.windows(2) {
        starts.push((w[0] + w[1]).div_ceil(2));
    }
    starts.push(grid.len());
    let partition = CellPartition {
        grid,
        reps: points.to_vec(),
        starts,
        radius,
    };
    partition.verify()?;
    Ok(partition)
}

impl CellPartition {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.reps.len()
    }

    /// Representative grid indices.
    pub fn reps(&self) -> &[usize] {
        &self.reps
    }

    pub fn rep_point(&self, i: usize) -> f64 {
        self.grid.point(self.reps[i])
    }

    pub fn rep_exact(&self, i: usize) -> Rational {
        self.grid.point_exact(self.reps[i])
    }

    pub fn radius(&self) -> Rational {
        self.radius
    }

    pub fn cell(&self, i: usize) -> Range<usize> {
        self.starts[i]..self.starts[i + 1]
    }

    pub fn cells(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n()).map(|i| self.cell(i))
    }

    pub fn cell_of(&self, index: usize) -> usize {
        self.starts.partition_point(|&s| s <= index) - 1
    }

    /// Checks cover, disjointness, membership of representatives and the radius bound.
    pub fn verify(&self) -> Result<()> {
        let m = self.grid.m() as i128;
        let mut next = 0;
        for (i, cell) in self.cells().enumerate() {
            if cell.start != next || cell.is_empty() {
                return Err(Error::OutOfRange(format!("cell {i} is empty or misplaced")));
            }
            if !cell.contains(&self.reps[i]) {
                return Err(Error::OutOfRange(format!(
                    "representative {i} outside its cell"
                )));
            }
            for x in cell.clone() {
                let d = (x as i128 - self.reps[i] as i128).abs();
                if rat(d, m) >= self.radius {
                    return Err(Error::OutOfRange(format!(
                        "grid point {x}/{m} is not within {} of representative {i}",
                        self.radius
                    )));
                }
            }
            next = cell.end;
        }
        if next != self.grid.len() {
            return Err(Error::OutOfRange("cells do not cover the grid".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(m: usize) -> Grid {
        Grid::new(m).unwrap()
    }

    #[test]
    fn modulus_examples() {
        let g = grid(100);
        let one = SampledFunction::constant(g, 1.0);
        assert_eq!(modulus_delta(&[one], 0.05).unwrap(), rat(1, 1));
        let id = SampledFunction::from_fn(g, |x| x);
        assert_eq!(modulus_delta(&[id.clone()], 0.05).unwrap(), rat(1, 20));
        let half = SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0);
        assert_eq!(modulus_delta(&[half.clone()], 0.05).unwrap(), rat(1, 10));
        assert_eq!(modulus_delta(&[half, id], 0.05).unwrap(), rat(1, 20));
    }

    #[test]
    fn modulus_floor_is_grid_step() {
        let g = grid(10);
        let steep = SampledFunction::from_fn(g, |x| 100.0 * x);
        assert_eq!(modulus_delta(&[steep], 0.05).unwrap(), rat(1, 10));
    }

    #[test]
    fn dense_point_examples() {
        let g = grid(100);
        assert_eq!(dense_points(rat(1, 1), g).unwrap(), vec![0, 100]);
        assert_eq!(dense_points(rat(1, 2), g).unwrap(), vec![0, 50, 100]);
        assert_eq!(
            dense_points(rat(3, 10), g).unwrap(),
            vec![0, 25, 50, 75, 100]
        );
        assert!(dense_points(rat(1, 200), g).is_err());
    }

    #[test]
    fn partition_examples() {
        let g = grid(100);
        let p = make_partition(&[0, 100], g, rat(1, 1)).unwrap();
        assert_eq!(p.cell(0), 0..50);
        assert_eq!(p.cell(1), 50..101);
        let p = make_partition(&[0, 50, 100], g, rat(1, 2)).unwrap();
        assert_eq!(p.cells().collect::<Vec<_>>(), vec![0..25, 25..75, 75..101]);
        assert_eq!(p.cell_of(24), 0);
        assert_eq!(p.cell_of(25), 1);
        assert_eq!(p.cell_of(100), 2);
        assert!(matches!(
            make_partition(&[0], g, rat(1, 1)),
            Err(Error::DegeneratePartition(1))
        ));
    }

    proptest! {
        #[test]
        fn partitions_from_dense_points_are_valid(m in 2usize..300, num in 1i128..300, den in 1i128..300) {
            let g = grid(m);
            let d0 = rat(num, den);
            prop_assume!(d0 >= rat(1, m as i128) && d0 <= rat(1, 1));
            let pts = dense_points(d0, g).unwrap();
            let p = make_partition(&pts, g, d0).unwrap();
            prop_assert!(p.verify().is_ok());
            for x in 0..=m {
                let c = p.cell_of(x);
                prop_assert!(p.cell(c).contains(&x));
            }
        }

        #[test]
        fn modulus_monotone(seed in proptest::collection::vec(-1.0f64..1.0, 41), e1 in 0.01f64..1.0, e2 in 0.01f64..1.0) {
            let g = grid(40);
            let f = SampledFunction::new(g, seed.clone()).unwrap();
            let h = SampledFunction::from_fn(g, |x| x * x);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(modulus_delta(&[f.clone()], lo).unwrap() <= modulus_delta(&[f.clone()], hi).unwrap());
            prop_assert!(modulus_delta(&[f.clone(), h], lo).unwrap() <= modulus_delta(&[f], lo).unwrap());
        }

        #[test]
        fn modulus_is_sound(seed in proptest::collection::vec(-1.0f64..1.0, 31), eps in 0.01f64..1.0) {
            let g = grid(30);
            let f = SampledFunction::new(g, seed).unwrap();
            let d0 = modulus_delta(&[f.clone()], eps).unwrap();
            let j = (d0 * rat(30, 1)).to_integer() as usize;
            for i in 0..=30 {
                for k in i..=30 {
                    if k - i < j && k - i >= 1 && j > 1 {
                        prop_assert!((f.at(k) - f.at(i)).abs() < eps);
                    }
                }
            }
        }
    }
}
