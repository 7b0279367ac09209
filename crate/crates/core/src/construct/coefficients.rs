use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::interval::rational::to_f64;
use crate::interval::{rat, CellPartition, Rational, SampledFunction};
use crate::markov::MarkovKernel;
use crate::relations::{RationalSnapshot, SnapshotDeviation};

/// `λ_i(y) = μ_y(X_i)` on the grid, one sampled function per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub partition: CellPartition,
    pub lambdas: Vec<SampledFunction>,
    /// Exact values at `y = 0` and `y = 1` once snapped.
    pub exact_ends: Option<(Vec<Rational>, Vec<Rational>)>,
}

pub fn build_coefficients(kernel: &MarkovKernel, partition: &CellPartition) -> Result<CoefficientField> {
    kernel.grid().check_same(&partition.grid())?;
    let grid = kernel.grid();
    let n = partition.n();
    let mut values = vec![Vec::with_capacity(grid.len()); n];
    for y in 0..grid.len() {
        let row = kernel.row(y);
        for (i, cell) in partition.cells().enumerate() {
            values[i].push(row[cell].iter().sum());
        }
    }
    let lambdas = values
        .into_iter()
        .map(|v| SampledFunction::new(grid, v))
        .collect::<Result<_>>()?;
    Ok(CoefficientField {
        partition: partition.clone(),
        lambdas,
        exact_ends: None,
    })
}

impl CoefficientField {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn at(&self, i: usize, y: usize) -> f64 {
        self.lambdas[i].at(y)
    }

    /// `Σ_i λ_i(y) f(x_i)`.
    pub fn combine(&self, f: &SampledFunction) -> SampledFunction {
        let grid = f.grid();
        let fx: Vec<f64> = self.partition.reps().iter().map(|&r| f.at(r)).collect();
        let values = (0..grid.len())
            .map(|y| self.lambdas.iter().zip(&fx).map(|(l, v)| l.at(y) * v).sum())
            .collect();
        SampledFunction::new(grid, values).expect("grid length")
    }

    /// `max_{f, y} |φ(f)(y) − Σ_i λ_i(y) f(x_i)|`.
    pub fn error(&self, kernel: &MarkovKernel, fs: &[SampledFunction]) -> Result<f64> {
        let mut worst = 0.0f64;
        for f in fs {
            let lhs = kernel.apply(f)?;
            worst = worst.max(crate::interval::sup_distance(&lhs, &self.combine(f))?);
        }
        Ok(worst)
    }

    /// Fails with the offending point when the error reaches `bound`.
    pub fn check_bound(&self, kernel: &MarkovKernel, fs: &[SampledFunction], bound: f64) -> Result<f64> {
        let grid = kernel.grid();
        let mut worst = (0.0f64, 0usize);
        for f in fs {
            let diff = kernel.apply(f)?.sub(&self.combine(f))?;
            for (y, v) in diff.values().iter().enumerate() {
                if v.abs() > worst.0 {
                    worst = (v.abs(), y);
                }
            }
        }
        if worst.0 >= bound {
            return Err(Error::CoefficientBound {
                error: worst.0,
                bound,
                y: grid.point(worst.1),
            });
        }
        Ok(worst.0)
    }
}

/// Sets `λ(0) = r` and `λ(1) = s` exactly and spreads half of each correction onto the
/// adjacent grid point (less when that would make a weight negative).
///
/// Fails when `2·eta·sup_f ‖f‖` reaches the remaining Step-I slack.
pub fn snap_endpoints(
    field: &CoefficientField,
    snapshot: &RationalSnapshot,
    slack: f64,
    sup: f64,
) -> Result<CoefficientField> {
    let n = field.n();
    if snapshot.n() != n {
        return Err(Error::DegeneratePartition(snapshot.n()));
    }
    let eta = to_f64(&snapshot.eta);
    if 2.0 * eta * sup >= slack {
        return Err(Error::EtaTooLarge {
            eta: snapshot.eta,
            detail: format!("2 eta sup|f| = {} reaches the slack {slack}", 2.0 * eta * sup),
        });
    }
    let grid = field.partition.grid();
    let m = grid.m();
    let mut values: Vec<Vec<f64>> = field.lambdas.iter().map(|l| l.values().to_vec()).collect();
    for (end, inner, target) in [(0usize, 1usize, &snapshot.r), (m, m - 1, &snapshot.s)] {
        let corr: Vec<f64> = (0..n).map(|i| to_f64(&target[i]) - values[i][end]).collect();
        let mut w = 0.5f64;
        for i in 0..n {
            if corr[i] < 0.0 && values[i][inner] + w * corr[i] < 0.0 {
                w = w.min(values[i][inner] / -corr[i]);
            }
        }
        if inner != 0 && inner != m {
            for i in 0..n {
                values[i][inner] = (values[i][inner] + w * corr[i]).max(0.0);
            }
        }
        for i in 0..n {
            values[i][end] = to_f64(&target[i]);
        }
    }
    let lambdas = values
        .into_iter()
        .map(|v| SampledFunction::new(grid, v))
        .collect::<Result<_>>()?;
    Ok(CoefficientField {
        partition: field.partition.clone(),
        lambdas,
        exact_ends: Some((snapshot.r.clone(), snapshot.s.clone())),
    })
}

/// The endpoint configuration forced when the subspace is mapped into itself: `μ₀` sits on the
/// cell of 0 and `μ₁` on the cell of 1.
pub fn concentrated_snapshot(n: usize, eta: Rational) -> RationalSnapshot {
    let mut r = vec![Rational::zero(); n];
    let mut s = vec![Rational::zero(); n];
    r[0] = Rational::one();
    s[n - 1] = Rational::one();
    RationalSnapshot {
        r,
        s,
        eta,
        exact: true,
        deviation: SnapshotDeviation {
            max_r: 0.0,
            max_s: 0.0,
            r1_minus_mu0: 0.0,
            within_eta: true,
            relation_residual: 0.0,
        },
    }
}

pub(crate) fn unit_eta() -> Rational {
    rat(1, 1_000_000_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{dense_points, make_partition, Grid};

    fn setup(m: usize, d0: Rational) -> (Grid, CellPartition) {
        let g = Grid::new(m).unwrap();
        let p = make_partition(&dense_points(d0, g).unwrap(), g, d0).unwrap();
        (g, p)
    }

    #[test]
    fn identity_gives_cell_indicators() {
        let (g, p) = setup(100, rat(1, 2));
        let field = build_coefficients(&MarkovKernel::identity(g), &p).unwrap();
        for y in 0..=100 {
            let c = p.cell_of(y);
            for i in 0..3 {
                assert_eq!(field.at(i, y), if i == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn squares_at_point_six() {
        let (g, p) = setup(100, rat(1, 2));
        assert_eq!(p.cells().collect::<Vec<_>>(), vec![0..25, 25..75, 75..101]);
        let k = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        assert_eq!((field.at(0, 60), field.at(1, 60), field.at(2, 60)), (0.0, 1.0, 0.0));
    }

    #[test]
    fn example2_endpoint_row() {
        let (g, p) = setup(400, rat(1, 2));
        let k = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        assert_eq!((field.at(0, 0), field.at(1, 0), field.at(2, 0)), (0.75, 0.0, 0.25));
    }

    #[test]
    fn coefficient_bound_holds_for_modulus_partition() {
        let g = Grid::new(400).unwrap();
        let fs = vec![
            SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0),
            SampledFunction::from_fn(g, |x| (1.0 + x * x) / 2.0),
        ];
        let d0 = crate::interval::modulus_delta(&fs, 0.05 / 4.0).unwrap();
        let p = make_partition(&dense_points(d0, g).unwrap(), g, d0).unwrap();
        let k = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        let e = field.check_bound(&k, &fs, 0.05 / 4.0).unwrap();
        assert!(e < 0.0125);
        let coarse = make_partition(&[0, 400], g, rat(1, 1)).unwrap();
        let field = build_coefficients(&k, &coarse).unwrap();
        assert!(matches!(
            field.check_bound(&k, &fs, 0.0125),
            Err(Error::CoefficientBound { .. })
        ));
    }

    #[test]
    fn snapping_sets_exact_endpoints() {
        let (g, p) = setup(100, rat(1, 2));
        let k = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        let snap = concentrated_snapshot(3, rat(1, 1000));
        let same = snap_endpoints(&field, &crate::relations::rational_snapshot(
            &crate::relations::CellMasses::from_kernel(&k, &p).unwrap(), rat(1, 100), rat(1, 2), rat(5, 7)).unwrap(), 0.1, 1.0).unwrap();
        assert_eq!(same.lambdas, field.lambdas);
        let moved = snap_endpoints(&field, &snap, 0.1, 1.0).unwrap();
        assert_eq!(moved.at(0, 0), 1.0);
        assert_eq!(moved.at(2, 100), 1.0);
        for y in 0..=100 {
            let s: f64 = (0..3).map(|i| moved.at(i, y)).sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!((0..3).all(|i| moved.at(i, y) >= 0.0));
        }
        assert!((moved.at(0, 1) - (0.75 + 0.125)).abs() < 1e-12);
        assert!(matches!(
            snap_endpoints(&field, &concentrated_snapshot(3, rat(1, 2)), 0.1, 1.0),
            Err(Error::EtaTooLarge { .. })
        ));
    }

    #[test]
    fn snapping_small_correction() {
        let (g, p) = setup(100, rat(1, 2));
        let mut field = build_coefficients(&MarkovKernel::example2(g, 3.0, 1.0).unwrap(), &p).unwrap();
        let mut v = field.lambdas[0].values().to_vec();
        v[0] = 0.749;
        field.lambdas[0] = SampledFunction::new(g, v).unwrap();
        let mut v = field.lambdas[2].values().to_vec();
        v[0] = 0.251;
        field.lambdas[2] = SampledFunction::new(g, v).unwrap();
        let mut snap = concentrated_snapshot(3, rat(1, 1000));
        snap.r = vec![rat(3, 4), rat(0, 1), rat(1, 4)];
        snap.s = vec![rat(1, 4), rat(0, 1), rat(3, 4)];
        let out = snap_endpoints(&field, &snap, 0.1, 1.0).unwrap();
        assert_eq!(out.at(0, 0), 0.75);
        assert!((out.at(0, 1) - field.at(0, 1)).abs() <= 0.001);
        assert!((out.at(2, 1) - field.at(2, 1)).abs() <= 0.001);
    }
}
