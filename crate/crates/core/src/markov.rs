//! Discretized Markov operators: one probability vector over the grid per grid point `y`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::rational::serde_rational;
use crate::interval::{rat, Grid, Rational, SampledFunction};
use crate::subspace::{test_function, SubspaceSpec, TestKind};

const KERNEL_TOL: f64 = 1e-12;

/// Probability weights on the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "measure has {} weights for {} grid points",
                weights.len(),
                grid.len()
            )));
        }
        let m = Self { grid, weights };
        let (dev, neg) = m.deviation();
        if dev > KERNEL_TOL || neg < -KERNEL_TOL {
            return Err(Error::InvalidKernel {
                row_sum: dev,
                negative: neg,
            });
        }
        Ok(m)
    }

    pub fn point_mass(grid: Grid, x: f64) -> Self {
        let mut weights = vec![0.0; grid.len()];
        deposit(&mut weights, grid, x, 1.0);
        Self { grid, weights }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, cells: Range<usize>) -> f64 {
        self.weights[cells].iter().sum()
    }

    pub fn integrate(&self, f: &SampledFunction) -> f64 {
        self.weights
            .iter()
            .zip(f.values())
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, v)| w * v)
            .sum()
    }

    fn deviation(&self) -> (f64, f64) {
        let sum: f64 = self.weights.iter().sum();
        let neg = self.weights.iter().copied().fold(0.0f64, f64::min);
        ((sum - 1.0).abs(), neg)
    }
}

/// Adds `w` at position `x`, split linearly between the bracketing grid points.
fn deposit(row: &mut [f64], grid: Grid, x: f64, w: f64) {
    let m = grid.m();
    let s = x.clamp(0.0, 1.0) * m as f64;
    let i = (s.floor() as usize).min(m - 1);
    let frac = s - i as f64;
    if frac == 0.0 {
        row[i] += w;
    } else if frac == 1.0 {
        row[i + 1] += w;
    } else {
        row[i] += w * (1.0 - frac);
        row[i + 1] += w * frac;
    }
}

/// Row-stochastic `(M+1) × (M+1)` matrix; row `i` is the measure `μ_{y_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    grid: Grid,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelReport {
    pub max_row_sum_deviation: f64,
    pub most_negative: f64,
    pub pass: bool,
}

impl MarkovKernel {
    /// Builds and validates a kernel from its rows.
    pub fn from_rows(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let kernel = Self::from_rows_unvalidated(grid, rows)?;
        let report = kernel.validate();
        if !report.pass {
            return Err(Error::InvalidKernel {
                row_sum: report.max_row_sum_deviation,
                negative: report.most_negative,
            });
        }
        Ok(kernel)
    }

    /// Shape-checked only; call [`MarkovKernel::validate`] before trusting it.
    pub fn from_rows_unvalidated(grid: Grid, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != grid.len() || rows.iter().any(|r| r.len() != grid.len()) {
            return Err(Error::InvalidGrid(format!(
                "kernel must be {0} x {0}",
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn identity(grid: Grid) -> Self {
        Self::from_composition(&SampledFunction::from_fn(grid, |x| x)).expect("identity is in range")
    }

    /// `T(f) = f ∘ λ`.
    pub fn from_composition(lam: &SampledFunction) -> Result<Self> {
        Self::from_weighted_compositions(
            std::slice::from_ref(lam),
            &[SampledFunction::constant(lam.grid(), 1.0)],
        )
    }

    /// `T(f) = Σ w_i f∘λ_i / Σ w_i`.
    pub fn from_weighted_compositions(
        maps: &[SampledFunction],
        weights: &[SampledFunction],
    ) -> Result<Self> {
        if maps.is_empty() || maps.len() != weights.len() {
            return Err(Error::OutOfRange(
                "need one weight function per map".into(),
            ));
        }
        let grid = maps[0].grid();
        for f in maps.iter().chain(weights) {
            grid.check_same(&f.grid())?;
        }
        let n = grid.len();
        let mut data = vec![0.0; n * n];
        for y in 0..n {
            let total: f64 = weights.iter().map(|w| w.at(y)).sum();
            if let Some(w) = weights.iter().find(|w| w.at(y) < 0.0) {
                return Err(Error::OutOfRange(format!(
                    "negative weight {} at y = {}",
                    w.at(y),
                    grid.point(y)
                )));
            }
            if !(total > 0.0) {
                return Err(Error::ZeroWeight { y: grid.point(y) });
            }
            let row = &mut data[y * n..(y + 1) * n];
            for (lam, w) in maps.iter().zip(weights) {
                let x = lam.at(y);
                if !(-KERNEL_TOL..=1.0 + KERNEL_TOL).contains(&x) {
                    return Err(Error::RangeViolation {
                        y: grid.point(y),
                        value: x,
                    });
                }
                deposit(row, grid, x, w.at(y) / total);
            }
        }
        Ok(Self { grid, data })
    }

    /// `T(f) = (k₁ f∘λ₁ + k₂ f∘λ₂)/(k₁ + k₂)` with `λ₁ = id`, `λ₂ = 1 - x`.
    pub fn example2(grid: Grid, k1: f64, k2: f64) -> Result<Self> {
        Self::from_weighted_compositions(
            &[
                SampledFunction::from_fn(grid, |x| x),
                SampledFunction::from_fn(grid, |x| 1.0 - x),
            ],
            &[
                SampledFunction::constant(grid, k1),
                SampledFunction::constant(grid, k2),
            ],
        )
    }

    /// Three-point variant of [`MarkovKernel::example2`]: the extra map is the constant `1/2`
    /// with weight `s(t) = (k₁α + k₂)(1-t) + (k₂α + k₁)t`.
    pub fn example3(grid: Grid, spec: &SubspaceSpec, k1: f64, k2: f64) -> Result<Self> {
        let alpha = spec.alpha_f64();
        Self::from_weighted_compositions(
            &[
                SampledFunction::from_fn(grid, |x| x),
                SampledFunction::from_fn(grid, |x| 1.0 - x),
                SampledFunction::constant(grid, 0.5),
            ],
            &[
                SampledFunction::constant(grid, k1),
                SampledFunction::constant(grid, k2),
                SampledFunction::from_fn(grid, |t| {
                    (k1 * alpha + k2) * (1.0 - t) + (k2 * alpha + k1) * t
                }),
            ],
        )
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[y * n..(y + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.grid.len())
    }

    pub fn measure(&self, y: usize) -> DiscreteMeasure {
        DiscreteMeasure {
            grid: self.grid,
            weights: self.row(y).to_vec(),
        }
    }

    pub fn validate(&self) -> KernelReport {
        let mut dev = 0.0f64;
        let mut neg = 0.0f64;
        for row in self.rows() {
            let sum: f64 = row.iter().sum();
            dev = dev.max((sum - 1.0).abs());
            neg = row.iter().copied().fold(neg, f64::min);
        }
        KernelReport {
            max_row_sum_deviation: dev,
            most_negative: neg,
            pass: dev <= KERNEL_TOL && neg >= -KERNEL_TOL,
        }
    }

    /// `φ(f)(y) = Σ_x μ_y(x) f(x)`.
    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction> {
        self.grid.check_same(&f.grid())?;
        let values = self
            .rows()
            .map(|row| {
                row.iter()
                    .zip(f.values())
                    .filter(|(w, _)| **w != 0.0)
                    .map(|(w, v)| w * v)
                    .sum()
            })
            .collect();
        SampledFunction::new(self.grid, values)
    }

    /// `(μ₀, μ₁)`, the rows at `y = 0` and `y = 1`.
    pub fn endpoint_measures(&self) -> (DiscreteMeasure, DiscreteMeasure) {
        (self.measure(0), self.measure(self.grid.m()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InducedRatio {
    pub beta: f64,
    pub defect: f64,
    pub probes: usize,
}

/// Estimates `φ(f)(0)/φ(f)(1)` over random piecewise-linear members of `spec_in` with
/// `f(1) ∈ [1/2, 2]` and nonnegative interior values.
pub fn induced_ratio(
    kernel: &MarkovKernel,
    spec_in: &SubspaceSpec,
    basis_size: usize,
    seed: u64,
) -> Result<InducedRatio> {
    if basis_size < 3 {
        return Err(Error::OutOfRange(format!(
            "basis_size must be at least 3, got {basis_size}"
        )));
    }
    let grid = kernel.grid();
    let alpha = spec_in.alpha_f64();
    let (mu0, mu1) = kernel.endpoint_measures();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(basis_size);
    for _ in 0..basis_size {
        let f1: f64 = rng.gen_range(0.5..=2.0);
        let knots: Vec<f64> = (0..7).map(|_| rng.gen_range(0.0..=2.0)).collect();
        let f = SampledFunction::from_fn(grid, |x| {
            if x == 0.0 {
                return alpha * f1;
            }
            if x == 1.0 {
                return f1;
            }
            let s = x * 8.0;
            let i = s.floor() as usize;
            let at = |j: usize| match j {
                0 => alpha * f1,
                8 => f1,
                j => knots[j - 1],
            };
            at(i) + (s - i as f64) * (at(i + 1) - at(i))
        });
        let top = mu1.integrate(&f);
        if top.abs() < 1e-9 {
            continue;
        }
        ratios.push(mu0.integrate(&f) / top);
    }
    if ratios.is_empty() {
        return Err(Error::RatioUndefined);
    }
    let beta = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let defect = ratios.iter().fold(0.0f64, |acc, r| acc.max((r - beta).abs()));
    Ok(InducedRatio {
        beta,
        defect,
        probes: ratios.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationWitness {
    pub kind: TestKind,
    #[serde(with = "serde_rational")]
    pub param: Rational,
    /// `|φ(w)(0) - α φ(w)(1)|`.
    pub defect: f64,
    #[serde(skip)]
    pub function: SampledFunction,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub mass0: f64,
    pub mass1: f64,
    pub witness: Option<ConcentrationWitness>,
}

/// `μ₀({0})`, `μ₁({1})` and, when either falls short of 1, the test function with the largest
/// preservation defect.
pub fn concentration_check(kernel: &MarkovKernel, spec: &SubspaceSpec) -> Result<ConcentrationReport> {
    let grid = kernel.grid();
    let m = grid.m();
    let (mu0, mu1) = kernel.endpoint_measures();
    let mass0 = mu0.weights()[0];
    let mass1 = mu1.weights()[m];
    let mut witness = None;
    if mass0 < 1.0 - 1e-9 || mass1 < 1.0 - 1e-9 {
        let alpha = spec.alpha_f64();
        let mut best: Option<ConcentrationWitness> = None;
        let lower = (1..=m).map(|j| (TestKind::Lower, j));
        let upper = (1..m).map(|j| (TestKind::Upper, j));
        for (kind, j) in lower.chain(upper) {
            let param = rat(j as i128, m as i128);
            let w = test_function(kind, param, spec, grid)?;
            let defect = (mu0.integrate(&w) - alpha * mu1.integrate(&w)).abs();
            if best.as_ref().map_or(true, |b| defect > b.defect) {
                best = Some(ConcentrationWitness {
                    kind,
                    param,
                    defect,
                    function: w,
                });
            }
        }
        witness = best.filter(|b| b.defect > 0.0);
    }
    Ok(ConcentrationReport {
        mass0,
        mass1,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::sup_distance;
    use proptest::prelude::*;

    fn grid(m: usize) -> Grid {
        Grid::new(m).unwrap()
    }

    #[test]
    fn composition_rows() {
        let g = grid(4);
        let id = MarkovKernel::identity(g);
        for y in 0..=4 {
            let mut e = vec![0.0; 5];
            e[y] = 1.0;
            assert_eq!(id.row(y), &e[..]);
        }
        let sq = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        assert_eq!(sq.row(2), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        let zero = MarkovKernel::from_composition(&SampledFunction::constant(g, 0.0)).unwrap();
        assert!(zero.rows().all(|r| r[0] == 1.0));
        let bad = MarkovKernel::from_composition(&SampledFunction::constant(g, 1.5));
        assert!(matches!(bad, Err(Error::RangeViolation { .. })));
    }

    #[test]
    fn off_grid_mass_is_split() {
        let g = grid(4);
        let k = MarkovKernel::from_composition(&SampledFunction::constant(g, 0.3)).unwrap();
        let r = k.row(0);
        assert!((r[1] - 0.8).abs() < 1e-12 && (r[2] - 0.2).abs() < 1e-12);
        let f = SampledFunction::from_fn(g, |x| 2.0 * x + 1.0);
        assert!((k.apply(&f).unwrap().at(3) - 1.6).abs() < 1e-12);
    }

    #[test]
    fn weighted_compositions() {
        let g = grid(8);
        let single = MarkovKernel::from_weighted_compositions(
            &[SampledFunction::from_fn(g, |x| x * x)],
            &[SampledFunction::constant(g, 1.0)],
        )
        .unwrap();
        assert_eq!(
            single,
            MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap()
        );
        let ex2 = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        let (mu0, mu1) = ex2.endpoint_measures();
        assert_eq!(mu0.weights()[0], 0.75);
        assert_eq!(mu0.weights()[8], 0.25);
        assert_eq!(mu1.weights()[0], 0.25);
        assert_eq!(mu1.weights()[8], 0.75);
        let f = SampledFunction::from_fn(g, |x| x);
        assert_eq!(ex2.apply(&f).unwrap().at(0), 0.25);
        let zero = MarkovKernel::from_weighted_compositions(
            &[SampledFunction::from_fn(g, |x| x)],
            &[SampledFunction::constant(g, 0.0)],
        );
        assert!(matches!(zero, Err(Error::ZeroWeight { .. })));
    }

    #[test]
    fn validation() {
        let g = grid(4);
        let report = MarkovKernel::identity(g).validate();
        assert!(report.pass);
        assert_eq!(report.max_row_sum_deviation, 0.0);
        assert_eq!(report.most_negative, 0.0);
        let mut rows: Vec<Vec<f64>> = MarkovKernel::identity(g).rows().map(<[f64]>::to_vec).collect();
        rows[2] = vec![0.0, 0.0, 1.0, 0.1, -0.1];
        let k = MarkovKernel::from_rows_unvalidated(g, rows.clone()).unwrap();
        let report = k.validate();
        assert!(!report.pass);
        assert_eq!(report.most_negative, -0.1);
        assert!(MarkovKernel::from_rows(g, rows).is_err());
        assert!(MarkovKernel::example2(g, 3.0, 1.0).unwrap().validate().pass);
    }

    #[test]
    fn apply_composition_squares() {
        let g = grid(16);
        let sq = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let image = sq.apply(&SampledFunction::from_fn(g, |x| x)).unwrap();
        for (i, y) in g.points().enumerate() {
            // (i/16)^2 is a grid point when i is a multiple of 4
            if i % 4 == 0 {
                assert_eq!(image.at(i), y * y);
            }
        }
    }

    #[test]
    fn endpoint_measures_of_constant_rows() {
        let g = grid(4);
        let rows = vec![vec![0.2; 5]; 5];
        let k = MarkovKernel::from_rows(g, rows).unwrap();
        let (a, b) = k.endpoint_measures();
        assert_eq!(a, b);
        let sq = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let (a, b) = sq.endpoint_measures();
        assert_eq!(a.weights()[0], 1.0);
        assert_eq!(b.weights()[4], 1.0);
    }

    #[test]
    fn induced_ratio_examples() {
        let g = grid(100);
        let spec = SubspaceSpec::new(rat(1, 2)).unwrap();
        let sq = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let r = induced_ratio(&sq, &spec, 16, 7).unwrap();
        assert!((r.beta - 0.5).abs() < 1e-12 && r.defect < 1e-12);

        let spec = SubspaceSpec::from_integers(2, 2).unwrap();
        let ex2 = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        let r = induced_ratio(&ex2, &spec, 16, 7).unwrap();
        let (a, k, k1, k2) = (2.0, 2.0, 3.0, 1.0);
        let b = (k1 * a + k2 * a + k2 * k) / (k1 - k2);
        assert_eq!(b, 5.0);
        assert!((r.beta - b / (b + k)).abs() < 1e-10);
        assert!(r.defect < 1e-10);

        let mut rows = vec![vec![0.0; 101]; 101];
        for (y, row) in rows.iter_mut().enumerate() {
            row[(y + 37) % 101] = 1.0;
        }
        let shuffled = MarkovKernel::from_rows(g, rows).unwrap();
        let r = induced_ratio(&shuffled, &SubspaceSpec::new(rat(1, 2)).unwrap(), 16, 7).unwrap();
        assert!(r.defect > 0.1);
    }

    #[test]
    fn example3_ratio_is_constant() {
        let g = grid(100);
        let spec = SubspaceSpec::from_integers(1, 1).unwrap();
        let (k1, k2) = (3.0, 1.0);
        let k = MarkovKernel::example3(g, &spec, k1, k2).unwrap();
        assert!(k.validate().pass);
        let r = induced_ratio(&k, &spec, 24, 3).unwrap();
        // member f: T(f)(0) ∝ s0 (f(1) + f(1/2)), T(f)(1) ∝ s1 (f(1) + f(1/2))
        let (s0, s1) = (k1 * 0.5 + k2, k2 * 0.5 + k1);
        let expected = s0 * (k1 + k2 + s1) / (s1 * (k1 + k2 + s0));
        assert!((r.beta - expected).abs() < 1e-12);
        assert!(r.defect < 1e-12);
    }

    #[test]
    fn concentration_examples() {
        let g = grid(100);
        let spec = SubspaceSpec::new(rat(1, 2)).unwrap();
        let sq = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x)).unwrap();
        let r = concentration_check(&sq, &spec).unwrap();
        assert_eq!((r.mass0, r.mass1), (1.0, 1.0));
        assert!(r.witness.is_none());

        let mut rows: Vec<Vec<f64>> = MarkovKernel::identity(g).rows().map(<[f64]>::to_vec).collect();
        rows[0] = vec![0.0; 101];
        rows[0][0] = 0.5;
        rows[0][50] = 0.5;
        let k = MarkovKernel::from_rows(g, rows).unwrap();
        let r = concentration_check(&k, &spec).unwrap();
        assert_eq!(r.mass0, 0.5);
        let w = r.witness.unwrap();
        assert!((w.defect - 0.25).abs() < 1e-12);
        let image = k.apply(&w.function).unwrap();
        assert!((image.first() - 0.5 * image.last()).abs() > 0.2);
    }

    proptest! {
        #[test]
        fn apply_is_linear_positive_unital(
            knots in proptest::collection::vec(0.0f64..1.0, 5),
            a in proptest::collection::vec(0.0f64..3.0, 21),
            b in proptest::collection::vec(-3.0f64..3.0, 21),
            c in -2.0f64..2.0,
        ) {
            let g = grid(20);
            let lam = SampledFunction::from_fn(g, |x| {
                let s = x * 4.0;
                let i = (s.floor() as usize).min(3);
                knots[i] + (s - i as f64) * (knots[i + 1] - knots[i])
            });
            let k = MarkovKernel::from_composition(&lam).unwrap();
            let fa = SampledFunction::new(g, a).unwrap();
            let fb = SampledFunction::new(g, b).unwrap();
            prop_assert!(k.apply(&fa).unwrap().values().iter().all(|&v| v >= 0.0));
            let one = k.apply(&SampledFunction::constant(g, 1.0)).unwrap();
            prop_assert!(one.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
            let lhs = k.apply(&fa.add(&fb.scale(c)).unwrap()).unwrap();
            let rhs = k.apply(&fa).unwrap().add(&k.apply(&fb).unwrap().scale(c)).unwrap();
            prop_assert!(sup_distance(&lhs, &rhs).unwrap() < 1e-12);
        }

        #[test]
        fn endpoint_fixing_compositions_preserve(
            knots in proptest::collection::vec(0.0f64..1.0, 3),
            vals in proptest::collection::vec(-2.0f64..2.0, 41),
            num in 1i128..9,
        ) {
            let g = grid(40);
            let spec = SubspaceSpec::new(rat(num, 10)).unwrap();
            let pts = [0.0, knots[0], knots[1], knots[2], 1.0];
            let lam = SampledFunction::from_fn(g, |x| {
                let s = x * 4.0;
                let i = (s.floor() as usize).min(3);
                pts[i] + (s - i as f64) * (pts[i + 1] - pts[i])
            });
            let k = MarkovKernel::from_composition(&lam).unwrap();
            let r = concentration_check(&k, &spec).unwrap();
            prop_assert_eq!((r.mass0, r.mass1), (1.0, 1.0));
            prop_assert!(r.witness.is_none());
            let id = k.apply(&SampledFunction::from_fn(g, |x| x)).unwrap();
            prop_assert_eq!(id.first(), 0.0);
            let mut v = vals;
            v[0] = spec.alpha_f64() * v[40];
            let member = SampledFunction::new(g, v).unwrap();
            prop_assert!(spec.is_member(&k.apply(&member).unwrap()));
        }
    }
}
