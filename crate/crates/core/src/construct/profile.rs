use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::schedule::BlockSchedule;
use super::select::IndexSet;
use crate::error::{Error, Result};
use crate::interval::rational::{serde_rational, serde_rational_vec, to_f64};
use crate::interval::{Grid, Rational};

/// Which end of `[0,1]` an exact evaluation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Zero,
    One,
}

/// Trapezoid profile `h(y, t)`: on block `j`, `h = x′_j · min(1, (t−G_{j−1})/δ, (G_j−t)/δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProfile {
    grid: Grid,
    #[serde(with = "serde_rational")]
    delta: Rational,
    targets: Vec<usize>,
    /// `G_1(y), …, G_J(y)` for every grid `y`, row-major.
    breaks: Vec<f64>,
    #[serde(with = "serde_rational_vec")]
    breaks_zero: Vec<Rational>,
    #[serde(with = "serde_rational_vec")]
    breaks_one: Vec<Rational>,
}

/// `d / N₁` as used by every evaluation path.
#[inline]
pub fn t_of(d: u64, n1: u64) -> f64 {
    d as f64 / n1 as f64
}

#[inline]
fn trapezoid(x: f64, t: f64, lo: f64, hi: f64, delta: f64) -> f64 {
    let up = (t - lo) / delta;
    let down = (hi - t) / delta;
    (x * up.min(down).min(1.0)).max(0.0)
}

fn cumulative(widths: &[Rational]) -> Vec<Rational> {
    let mut acc = Rational::zero();
    widths
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Largest `d` in `[lo, hi]` with `pred(d)`, for `pred` true on a prefix; `lo − 1` if none.
fn last_true(lo: u64, hi: u64, pred: impl Fn(u64) -> bool) -> u64 {
    let (mut a, mut b) = (lo, hi + 1);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    a - 1
}

/// Appends `count` copies of `value`, merging with the previous run.
fn push_run<T: PartialEq>(runs: &mut Vec<(T, u64)>, value: T, count: u64) {
    if count == 0 {
        return;
    }
    match runs.last_mut() {
        Some((v, c)) if *v == value => *c += count,
        _ => runs.push((value, count)),
    }
}

pub fn build_profile(schedule: &BlockSchedule, delta: Rational) -> TransportProfile {
    let grid = schedule.grid;
    let j = schedule.len();
    let breaks_zero = cumulative(&schedule.exact_ends.0);
    let breaks_one = cumulative(&schedule.exact_ends.1);
    let mut breaks = Vec::with_capacity(grid.len() * j);
    for y in 0..grid.len() {
        if y == 0 || y == grid.m() {
            let exact = if y == 0 { &breaks_zero } else { &breaks_one };
            breaks.extend(exact.iter().map(to_f64));
        } else {
            let mut acc = 0.0f64;
            for w in &schedule.widths {
                acc = (acc + w.at(y)).min(1.0);
                breaks.push(acc);
            }
        }
        *breaks.last_mut().expect("nonempty schedule") = 1.0;
    }
    TransportProfile {
        grid,
        delta,
        targets: schedule.targets.clone(),
        breaks,
        breaks_zero,
        breaks_one,
    }
}

impl TransportProfile {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn delta(&self) -> Rational {
        self.delta
    }

    pub fn delta_f64(&self) -> f64 {
        to_f64(&self.delta)
    }

    pub fn blocks(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// `G_1(y), …, G_J(y)` at grid index `y`.
    pub fn breaks(&self, y: usize) -> &[f64] {
        let j = self.blocks();
        &self.breaks[y * j..(y + 1) * j]
    }

    pub fn exact_breaks(&self, end: End) -> &[Rational] {
        match end {
            End::Zero => &self.breaks_zero,
            End::One => &self.breaks_one,
        }
    }

    fn bounds(g: &[f64], j: usize) -> (f64, f64) {
        (if j == 0 { 0.0 } else { g[j - 1] }, g[j])
    }

    /// Block containing `t`: the first `j` with `G_j ≥ t`.
    pub fn block_of(&self, y: usize, t: f64) -> usize {
        let g = self.breaks(y);
        g.partition_point(|&b| b < t).min(g.len() - 1)
    }

    pub fn eval(&self, y: usize, t: f64) -> f64 {
        let j = self.block_of(y, t);
        let (lo, hi) = Self::bounds(self.breaks(y), j);
        trapezoid(self.grid.point(self.targets[j]), t, lo, hi, self.delta_f64())
    }

    pub fn eval_exact(&self, end: End, t: Rational) -> Rational {
        let g = self.exact_breaks(end);
        let j = g.partition_point(|b| *b < t).min(g.len() - 1);
        let lo = if j == 0 { Rational::zero() } else { g[j - 1] };
        let up = (t - lo) / self.delta;
        let down = (g[j] - t) / self.delta;
        let s = up.min(down).min(Rational::one()).max(Rational::zero());
        self.grid.point_exact(self.targets[j]) * s
    }

    /// Endpoint breakpoints scaled by `N₁`; fails unless all are integers.
    pub fn scaled(&self, n1: u64) -> Result<ScaledEnds> {
        let n = Rational::from_integer(n1 as i128);
        let scale = |v: &[Rational]| -> Result<Vec<i128>> {
            v.iter()
                .map(|g| {
                    let s = g * n;
                    if s.is_integer() {
                        Ok(s.to_integer())
                    } else {
                        Err(Error::NonIntegralScaling(n1))
                    }
                })
                .collect()
        };
        let dn = self.delta * n;
        if !dn.is_integer() {
            return Err(Error::NonIntegralScaling(n1));
        }
        Ok(ScaledEnds {
            n1,
            delta: dn.to_integer(),
            zero: scale(&self.breaks_zero)?,
            one: scale(&self.breaks_one)?,
        })
    }

    /// Values `h(y, d/N₁)` for `d ∈ D` in increasing order, run-length encoded.
    pub fn column(&self, y: usize, n1: u64, d: &IndexSet) -> Vec<(f64, u64)> {
        let g = self.breaks(y);
        let delta = self.delta_f64();
        let mut runs = Vec::new();
        let mut start = 1u64;
        for j in 0..g.len() {
            if start > n1 {
                break;
            }
            let (lo, hi) = Self::bounds(g, j);
            let end = if j + 1 == g.len() {
                n1
            } else {
                last_true(start, n1, |e| t_of(e, n1) <= hi)
            };
            if end < start {
                continue;
            }
            let x = self.grid.point(self.targets[j]);
            if x == 0.0 {
                push_run(&mut runs, 0.0, d.count_in(start, end));
            } else {
                // plateau is [p0, p1]
                let p0 = last_true(start, end, |e| (t_of(e, n1) - lo) / delta < 1.0) + 1;
                let p1 = last_true(start, end, |e| (hi - t_of(e, n1)) / delta >= 1.0);
                let pointwise = |runs: &mut Vec<(f64, u64)>, a: u64, b: u64| {
                    for (u, v) in d.clip(a, b) {
                        for e in u..=v {
                            push_run(runs, trapezoid(x, t_of(e, n1), lo, hi, delta), 1);
                        }
                    }
                };
                if p0 <= p1 {
                    pointwise(&mut runs, start, p0 - 1);
                    push_run(&mut runs, x, d.count_in(p0, p1));
                    pointwise(&mut runs, p1 + 1, end);
                } else {
                    pointwise(&mut runs, start, end);
                }
            }
            start = end + 1;
        }
        runs
    }

    /// Exact endpoint column over `D`, run-length encoded.
    pub fn column_exact(&self, end: End, scaled: &ScaledEnds, d: &IndexSet) -> Vec<(Rational, u64)> {
        let gamma = scaled.side(end);
        let dn = scaled.delta;
        let mut runs = Vec::new();
        let mut prev = 0i128;
        for (j, &g) in gamma.iter().enumerate() {
            let (lo, hi) = ((prev + 1).max(1) as u64, g.min(scaled.n1 as i128));
            if hi < lo as i128 {
                prev = prev.max(g);
                continue;
            }
            let hi = hi as u64;
            let x = self.grid.point_exact(self.targets[j]);
            if x.is_zero() {
                push_run(&mut runs, x, d.count_in(lo, hi));
            } else {
                let value = |e: u64| -> Rational {
                    let e = e as i128;
                    let s = Rational::new((e - prev).min(g - e), dn).min(Rational::one());
                    x * s
                };
                let p0 = (prev + dn).max(lo as i128) as u64;
                let p1 = (g - dn).min(hi as i128);
                let pointwise = |runs: &mut Vec<(Rational, u64)>, a: u64, b: u64| {
                    for (u, v) in d.clip(a, b) {
                        for e in u..=v {
                            push_run(runs, value(e), 1);
                        }
                    }
                };
                if p1 >= p0 as i128 {
                    let p1 = p1 as u64;
                    pointwise(&mut runs, lo, p0 - 1);
                    push_run(&mut runs, x, d.count_in(p0, p1));
                    pointwise(&mut runs, p1 + 1, hi);
                } else {
                    pointwise(&mut runs, lo, hi);
                }
            }
            prev = g;
        }
        runs
    }
}

/// Endpoint breakpoints `Γ_j = G_j N₁` and `Δ = δN₁` as integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledEnds {
    pub n1: u64,
    pub delta: i128,
    pub zero: Vec<i128>,
    pub one: Vec<i128>,
}

impl ScaledEnds {
    pub fn side(&self, end: End) -> &[i128] {
        match end {
            End::Zero => &self.zero,
            End::One => &self.one,
        }
    }
}

/// Expands run-length values.
pub fn expand<T: Clone>(runs: &[(T, u64)]) -> Vec<T> {
    runs.iter()
        .flat_map(|(v, c)| std::iter::repeat(v.clone()).take(*c as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{rat, SampledFunction};
    use proptest::prelude::*;

    fn two_blocks(delta: Rational) -> TransportProfile {
        let g = Grid::new(4).unwrap();
        let half = SampledFunction::constant(g, 0.5);
        let sched = BlockSchedule {
            grid: g,
            targets: vec![0, 4],
            widths: vec![half.clone(), half],
            exact_ends: (vec![rat(1, 2), rat(1, 2)], vec![rat(1, 2), rat(1, 2)]),
        };
        build_profile(&sched, delta)
    }

    #[test]
    fn trapezoid_examples() {
        let p = two_blocks(rat(1, 8));
        for y in 0..=4 {
            assert_eq!(p.eval(y, 0.75), 1.0);
            assert_eq!(p.eval(y, 9.0 / 16.0), 0.5);
            assert_eq!(p.eval(y, 0.3), 0.0);
        }
        assert_eq!(p.eval_exact(End::Zero, rat(3, 4)), rat(1, 1));
        assert_eq!(p.eval_exact(End::One, rat(9, 16)), rat(1, 2));
        assert_eq!(p.eval_exact(End::One, rat(15, 16)), rat(1, 2));
    }

    #[test]
    fn width_two_delta_reaches_target() {
        let p = two_blocks(rat(1, 4));
        assert_eq!(p.eval(2, 0.75), 1.0);
        assert_eq!(p.eval_exact(End::Zero, rat(3, 4)), rat(1, 1));
        let p = two_blocks(rat(1, 2));
        assert_eq!(p.eval_exact(End::Zero, rat(3, 4)), rat(1, 2));
    }

    #[test]
    fn columns_match_pointwise() {
        let p = two_blocks(rat(1, 8));
        let n1 = 64;
        let d = IndexSet::new(vec![(3, 20), (30, 64)]).unwrap();
        for y in 0..=4 {
            let col = expand(&p.column(y, n1, &d));
            let direct: Vec<f64> = d.iter().map(|e| p.eval(y, t_of(e, n1))).collect();
            assert_eq!(col, direct);
        }
        let sc = p.scaled(n1).unwrap();
        for end in [End::Zero, End::One] {
            let col = expand(&p.column_exact(end, &sc, &d));
            let direct: Vec<Rational> = d.iter().map(|e| p.eval_exact(end, rat(e as i128, n1 as i128))).collect();
            assert_eq!(col, direct);
        }
        assert!(p.scaled(63).is_err());
    }

    fn profile_strategy() -> impl Strategy<Value = (TransportProfile, u64)> {
        (
            prop::collection::vec((0usize..=8, 0u32..6), 1..6),
            prop::collection::vec(0u32..6, 1..6),
            1i128..5,
        )
            .prop_map(|(blocks, interior, k)| {
                let g = Grid::new(8).unwrap();
                let total: u32 = blocks.iter().map(|b| b.1).sum::<u32>().max(1);
                let mut ends: Vec<Rational> = blocks.iter().map(|b| rat(b.1 as i128, total as i128)).collect();
                if blocks.iter().all(|b| b.1 == 0) {
                    *ends.last_mut().unwrap() = rat(1, 1);
                }
                let widths = blocks
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let w = interior.get(i).copied().unwrap_or(1) as f64;
                        SampledFunction::from_fn(g, |y| (1.0 - y) * to_f64(&ends[i]) + y * w / 10.0)
                    })
                    .collect();
                let sched = BlockSchedule {
                    grid: g,
                    targets: blocks.iter().map(|b| b.0).collect(),
                    widths,
                    exact_ends: (ends.clone(), ends),
                };
                let n1 = (total as u64) * 24 * k as u64;
                (build_profile(&sched, rat(1, 4 * k)), n1)
            })
    }

    proptest! {
        #[test]
        fn lipschitz_and_range((p, n1) in profile_strategy()) {
            let full = IndexSet::full(n1);
            let inv = 1.0 / p.delta_f64();
            for y in 0..=8 {
                let g = p.breaks(y);
                prop_assert!(g.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(*g.last().unwrap(), 1.0);
                let col = expand(&p.column(y, n1, &full));
                prop_assert_eq!(col.len() as u64, n1);
                for w in col.windows(2) {
                    prop_assert!((w[1] - w[0]).abs() <= inv / n1 as f64 + 1e-12);
                }
                prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            let sc = p.scaled(n1).unwrap();
            let exact = expand(&p.column_exact(End::Zero, &sc, &full));
            let approx = expand(&p.column(0, n1, &full));
            for (e, a) in exact.iter().zip(&approx) {
                prop_assert!((to_f64(e) - a).abs() < 1e-12);
            }
        }
    }
}
