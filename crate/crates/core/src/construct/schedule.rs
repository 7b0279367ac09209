use num_traits::{Signed, Zero};

use super::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::interval::{Grid, Rational, SampledFunction};

/// Ordered blocks `(l_j(y), x′_j)` with `Σ_j l_j(y) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSchedule {
    pub grid: Grid,
    /// Grid index of each block's target point.
    pub targets: Vec<usize>,
    pub widths: Vec<SampledFunction>,
    /// Exact widths at `y = 0` and `y = 1`.
    pub exact_ends: (Vec<Rational>, Vec<Rational>),
}

impl BlockSchedule {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `Σ_j l_j(y) f(x′_j)`.
    pub fn combine(&self, f: &SampledFunction) -> SampledFunction {
        let fx: Vec<f64> = self.targets.iter().map(|&t| f.at(t)).collect();
        let values = (0..self.grid.len())
            .map(|y| self.widths.iter().zip(&fx).map(|(l, v)| l.at(y) * v).sum())
            .collect();
        SampledFunction::new(self.grid, values).expect("grid length")
    }
}

fn exact_ends(field: &CoefficientField) -> Result<&(Vec<Rational>, Vec<Rational>)> {
    field
        .exact_ends
        .as_ref()
        .ok_or_else(|| Error::OutOfRange("coefficient field endpoints are not snapped".into()))
}

/// One block per cell, in cell order: block `i` carries `x_i` with width `λ_i`.
pub fn same_schedule(field: &CoefficientField) -> Result<BlockSchedule> {
    let ends = exact_ends(field)?.clone();
    Ok(BlockSchedule {
        grid: field.partition.grid(),
        targets: field.partition.reps().to_vec(),
        widths: field.lambdas.clone(),
        exact_ends: ends,
    })
}

/// `2n` blocks: block `2i−1` carries `x_{i+1}` with width `λ_{i+1}`; block `2i` carries 0 with
/// width `max{0, min{λ_1(y) − λ_1(1) − Σ_{previous even}, λ_{i+1}(1) − λ_{i+1}(y)}}`; block
/// `2n−1` carries 0 with the remaining width and block `2n` is empty.
pub fn interleave_coefficients(field: &CoefficientField) -> Result<BlockSchedule> {
    let (r, s) = exact_ends(field)?;
    let n = field.n();
    for i in 1..n {
        if r[i] > s[i] {
            return Err(Error::Monotonicity {
                index: i + 1,
                detail: format!("lambda(0) = {} > lambda(1) = {}", r[i], s[i]),
            });
        }
    }
    if r[0] < s[0] {
        return Err(Error::Monotonicity {
            index: 1,
            detail: format!("lambda_1(0) = {} < lambda_1(1) = {}", r[0], s[0]),
        });
    }
    let grid = field.partition.grid();
    let m = grid.m();
    let reps = field.partition.reps();
    let mut targets = Vec::with_capacity(2 * n);
    for i in 1..n {
        targets.push(reps[i]);
        targets.push(reps[0]);
    }
    targets.push(reps[0]);
    targets.push(reps[0]);

    let mut widths = vec![Vec::with_capacity(grid.len()); 2 * n];
    for y in 0..=m {
        let lam = |i: usize| field.at(i, y);
        let top = |i: usize| field.at(i, m);
        let mut used = 0.0;
        let mut odd_total = 0.0;
        for i in 1..n {
            widths[2 * (i - 1)].push(lam(i));
            odd_total += lam(i);
            let slack = (lam(0) - top(0) - used).min(top(i) - lam(i)).max(0.0);
            widths[2 * (i - 1) + 1].push(slack);
            used += slack;
        }
        widths[2 * n - 2].push((1.0 - odd_total - used).max(0.0));
        widths[2 * n - 1].push(0.0);
    }

    let exact = |lam: &[Rational]| -> Vec<Rational> {
        let mut out = Vec::with_capacity(2 * n);
        let mut used = Rational::zero();
        let mut odd_total = Rational::zero();
        for i in 1..n {
            out.push(lam[i]);
            odd_total += lam[i];
            let slack = (lam[0] - s[0] - used).min(s[i] - lam[i]).max(Rational::zero());
            out.push(slack);
            used += slack;
        }
        out.push(Rational::from_integer(1) - odd_total - used);
        out.push(Rational::zero());
        out
    };
    let ends = (exact(r), exact(s));
    if ends.0.iter().chain(&ends.1).any(|w| w.is_negative()) {
        return Err(Error::Monotonicity {
            index: 0,
            detail: "negative endpoint width".into(),
        });
    }
    let widths = widths
        .into_iter()
        .map(|v| SampledFunction::new(grid, v))
        .collect::<Result<_>>()?;
    Ok(BlockSchedule {
        grid,
        targets,
        widths,
        exact_ends: ends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::coefficients::{build_coefficients, concentrated_snapshot, snap_endpoints};
    use crate::interval::{dense_points, make_partition, rat, sup_distance};
    use crate::markov::MarkovKernel;
    use crate::relations::{rational_snapshot, CellMasses};

    fn example2_field() -> CoefficientField {
        let g = Grid::new(100).unwrap();
        let p = make_partition(&dense_points(rat(1, 2), g).unwrap(), g, rat(1, 2)).unwrap();
        let k = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        let masses = CellMasses::from_kernel(&k, &p).unwrap();
        let snap = rational_snapshot(&masses, rat(1, 100), rat(1, 2), rat(5, 7)).unwrap();
        snap_endpoints(&field, &snap, 0.1, 1.0).unwrap()
    }

    #[test]
    fn interleaved_widths_at_zero() {
        let sched = interleave_coefficients(&example2_field()).unwrap();
        let w: Vec<Rational> = sched.exact_ends.0.clone();
        assert_eq!(w, vec![rat(0, 1), rat(0, 1), rat(1, 4), rat(1, 2), rat(1, 4), rat(0, 1)]);
        let f64s: Vec<f64> = sched.widths.iter().map(|l| l.at(0)).collect();
        assert_eq!(f64s, vec![0.0, 0.0, 0.25, 0.5, 0.25, 0.0]);
        assert_eq!(sched.targets, vec![50, 0, 100, 0, 0, 0]);
        // even breakpoints agree at both ends
        let (a, b) = &sched.exact_ends;
        let mut ga = Rational::zero();
        let mut gb = Rational::zero();
        for j in 0..a.len() {
            ga += a[j];
            gb += b[j];
            if j % 2 == 1 {
                assert_eq!(ga, gb);
            }
        }
    }

    #[test]
    fn representation_identity() {
        let field = example2_field();
        let sched = interleave_coefficients(&field).unwrap();
        let g = field.partition.grid();
        let probes: Vec<SampledFunction> = (0..8)
            .map(|k| SampledFunction::from_fn(g, move |x| ((k + 1) as f64 * x).sin() + k as f64 * x * x))
            .collect();
        for f in &probes {
            let d = sup_distance(&sched.combine(f), &field.combine(f)).unwrap();
            assert!(d < 1e-12, "{d}");
        }
        for y in 0..=100 {
            let s: f64 = sched.widths.iter().map(|l| l.at(y)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrated_field_has_no_slack() {
        let g = Grid::new(50).unwrap();
        let p = make_partition(&dense_points(rat(1, 4), g).unwrap(), g, rat(1, 4)).unwrap();
        let k = MarkovKernel::identity(g);
        let field = snap_endpoints(
            &build_coefficients(&k, &p).unwrap(),
            &concentrated_snapshot(p.n(), rat(1, 1000)),
            0.1,
            1.0,
        )
        .unwrap();
        let sched = interleave_coefficients(&field).unwrap();
        for j in (1..sched.len()).step_by(2) {
            // all of λ_1(0) = 1 drains into the zero block that follows x_n
            assert_eq!(sched.exact_ends.0[j].is_zero(), j != sched.len() - 3, "{j}");
            assert!(sched.exact_ends.1[j].is_zero());
        }
    }

    #[test]
    fn constant_field_has_zero_even_blocks() {
        let g = Grid::new(50).unwrap();
        let p = make_partition(&dense_points(rat(1, 2), g).unwrap(), g, rat(1, 2)).unwrap();
        let rows = vec![vec![1.0 / 51.0; 51]; 51];
        let k = MarkovKernel::from_rows(g, rows).unwrap();
        let field = build_coefficients(&k, &p).unwrap();
        let ends: Vec<Rational> = (0..3).map(|i| crate::interval::rational::recover(field.at(i, 0), 1000, 1e-12).unwrap()).collect();
        let mut snap = concentrated_snapshot(3, rat(1, 1000));
        snap.r = ends.clone();
        snap.s = ends;
        let field = snap_endpoints(&field, &snap, 0.1, 1.0).unwrap();
        let sched = interleave_coefficients(&field).unwrap();
        for j in [1, 3] {
            assert!(sched.widths[j].values().iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn monotonicity_violation() {
        let mut field = example2_field();
        let (r, s) = field.exact_ends.clone().unwrap();
        field.exact_ends = Some((s, r));
        assert!(matches!(
            interleave_coefficients(&field),
            Err(Error::Monotonicity { .. })
        ));
    }
}
