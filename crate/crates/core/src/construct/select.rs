use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Rational;
use crate::relations::RationalSnapshot;
use crate::subspace::Realization;

/// Sorted, disjoint inclusive ranges of `t`-indices `d` (maps `h(·, d/N₁)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet {
    ranges: Vec<(u64, u64)>,
}

impl IndexSet {
    /// Drops empty ranges and merges touching ones; fails on overlap.
    pub fn new(mut ranges: Vec<(u64, u64)>) -> Result<Self> {
        ranges.retain(|(a, b)| a <= b);
        ranges.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
        for (a, b) in ranges {
            if let Some(last) = out.last_mut() {
                if a <= last.1 {
                    return Err(Error::Malformed(format!("overlapping index ranges at {a}")));
                }
                if a == last.1 + 1 {
                    last.1 = b;
                    continue;
                }
            }
            out.push((a, b));
        }
        Ok(Self { ranges: out })
    }

    pub fn full(n1: u64) -> Self {
        Self {
            ranges: vec![(1, n1)],
        }
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|(a, b)| b - a + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, d: u64) -> bool {
        let i = self.ranges.partition_point(|r| r.1 < d);
        i < self.ranges.len() && self.ranges[i].0 <= d
    }

    /// `|[lo, hi] ∩ D|`.
    pub fn count_in(&self, lo: u64, hi: u64) -> u64 {
        if lo > hi {
            return 0;
        }
        let start = self.ranges.partition_point(|r| r.1 < lo);
        self.ranges[start..]
            .iter()
            .take_while(|r| r.0 <= hi)
            .map(|r| r.1.min(hi) - r.0.max(lo) + 1)
            .sum()
    }

    /// The pieces of `[lo, hi] ∩ D`.
    pub fn clip(&self, lo: u64, hi: u64) -> impl Iterator<Item = (u64, u64)> + '_ {
        let start = self.ranges.partition_point(|r| r.1 < lo);
        self.ranges[start..]
            .iter()
            .take_while(move |r| r.0 <= hi && lo <= hi)
            .map(move |r| (r.0.max(lo), r.1.min(hi)))
    }

    /// The `i`-th element (0-based).
    pub fn nth(&self, mut i: u64) -> Option<u64> {
        for &(a, b) in &self.ranges {
            let len = b - a + 1;
            if i < len {
                return Some(a + i);
            }
            i -= len;
        }
        None
    }

    pub fn last(&self) -> Option<u64> {
        self.ranges.last().map(|r| r.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.ranges.iter().flat_map(|&(a, b)| a..=b)
    }
}

/// `D = {⌈δN₁⌉, …, ⌊(1−δ)N₁⌋}`.
pub fn select_indices_same(n1: u64, delta: Rational) -> Result<IndexSet> {
    let n1r = Rational::from_integer(n1 as i128);
    if delta * n1r < Rational::from_integer(1) {
        return Err(Error::EmptySelection(format!("N1 delta = {} < 1", delta * n1r)));
    }
    if delta >= Rational::new(1, 2) {
        return Err(Error::EmptySelection(format!("delta = {delta} >= 1/2")));
    }
    let lo = (delta * n1r).ceil().to_integer() as u64;
    let hi = ((Rational::from_integer(1) - delta) * n1r).floor().to_integer() as u64;
    IndexSet::new(vec![(lo, hi)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossCase {
    /// `μ₀(X_n) = 0`.
    I,
    /// `μ₀(X_n) > 0`.
    II,
}

/// Maps dropped per block: `m` counted at `y = 0`, `z` at `y = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionTallies {
    /// `(m, z)` for each interior cell with positive mass, in cell order.
    pub interior: Vec<(i128, i128)>,
    pub m_n: i128,
    pub z_n: i128,
    pub m_1: i128,
    pub z_1: i128,
}

impl ExclusionTallies {
    /// `a(b+k) m₁ + (a+k)(b+k) m_n − b(a z₁ + (a+k) z_n)`; zero when the dropped maps
    /// keep the boundary relation.
    pub fn boundary_residual(&self, re: &Realization) -> i128 {
        let (a, k, b) = (re.a, re.k, re.b);
        a * (b + k) * self.m_1 + (a + k) * (b + k) * self.m_n - b * (a * self.z_1 + (a + k) * self.z_n)
    }

    /// `max |m_i (b+k) − z_i b|` over interior cells.
    pub fn interior_residual(&self, re: &Realization) -> i128 {
        self.interior
            .iter()
            .map(|(m, z)| (m * (re.b + re.k) - z * re.b).abs())
            .max()
            .unwrap_or(0)
    }
}

/// Closed-form exclusion counts for `Δ = δN₁`.
pub fn exclusion_formulas(case: CrossCase, tau: usize, delta_n1: i128, re: &Realization) -> ExclusionTallies {
    let (a, k, b) = (re.a, re.k, re.b);
    let t = tau as i128;
    let d = delta_n1;
    let interior = vec![(2 * d * (b - a) * b, 2 * d * (b - a) * (b + k)); tau];
    match case {
        CrossCase::I if tau == 0 => {
            let e = 2 * d * a * (b + k);
            let z = 2 * d * (b - a) * (b + k);
            ExclusionTallies {
                interior,
                m_n: 0,
                z_n: e,
                m_1: e + z,
                z_1: z,
            }
        }
        CrossCase::I => ExclusionTallies {
            interior,
            m_n: 0,
            z_n: 2 * d * a * t * (b + k),
            m_1: 2 * d * (a + k) * t * b,
            z_1: 0,
        },
        CrossCase::II => ExclusionTallies {
            interior,
            m_n: 2 * d * (b - a) * b,
            z_n: 2 * d * (a * t + b) * (b + k),
            m_1: 2 * d * b * (a + k) * (1 + t),
            z_1: 0,
        },
    }
}

/// Which representative a selected map hits at each end: `None` is the point 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Designation {
    pub start: u64,
    pub end: u64,
    pub cell0: usize,
    pub cell1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSelection {
    pub indices: IndexSet,
    pub exclusions: ExclusionTallies,
    pub case: CrossCase,
    pub tau: usize,
    /// Intended endpoint cells for every selected range (cell 0 is the point 0).
    pub designations: Vec<Designation>,
}

fn scaled(x: Rational, n1: i128) -> Result<i128> {
    let v = x * n1;
    if !v.is_integer() {
        return Err(Error::NonIntegralScaling(n1 as u64));
    }
    Ok(v.to_integer())
}

/// Index selection for `β > α`: keeps the maps whose endpoint values sit on their block's
/// representative, dropping them in the proportions that keep the boundary relation.
pub fn select_indices_cross(
    snapshot: &RationalSnapshot,
    n1: u64,
    delta: Rational,
    re: &Realization,
) -> Result<CrossSelection> {
    let (a, k, b) = (re.a, re.k, re.b);
    if a == b {
        return Err(Error::SameSubspace);
    }
    let n1i = n1 as i128;
    let dn = scaled(delta, n1i)?;
    let n = snapshot.n();
    let r: Vec<i128> = snapshot.r.iter().map(|x| scaled(*x, n1i)).collect::<Result<_>>()?;
    let s: Vec<i128> = snapshot.s.iter().map(|x| scaled(*x, n1i)).collect::<Result<_>>()?;
    let tau = snapshot.tau();
    let case = if snapshot.r[n - 1].is_zero() { CrossCase::I } else { CrossCase::II };

    let mut ranges: Vec<Designation> = Vec::new();
    let mut push = |lo: i128, hi: i128, c0: usize, c1: usize, what: &str| -> Result<i128> {
        if hi < lo - 1 {
            return Err(Error::ExclusionOverflow {
                block: what.to_string(),
                count: lo - 1 - hi,
                width: 0,
            });
        }
        if hi >= lo {
            ranges.push(Designation {
                start: lo as u64,
                end: hi as u64,
                cell0: c0,
                cell1: c1,
            });
        }
        Ok((hi - lo + 1).max(0))
    };

    let trim = dn * (b - a) * b;
    let mut prev = 0i128;
    let mut interior = Vec::new();
    for i in 1..n - 1 {
        if s[i] == 0 {
            continue;
        }
        if r[i] == 0 {
            return Err(Error::ExclusionOverflow {
                block: format!("cell {}", i + 1),
                count: trim,
                width: 0,
            });
        }
        let big_r = prev + r[i];
        let big_s = prev + s[i];
        let both = push(prev + trim + 1, big_r - trim, i, i, &format!("cell {}", i + 1))?;
        let upper = push(big_r + 1, big_s - 2 * dn * (b - a) * k, 0, i, &format!("cell {} slack", i + 1))?;
        interior.push((r[i] - both, s[i] - both - upper));
        prev = big_s;
    }
    let last = n - 1;
    let s_n = prev + s[last];
    let (m_n, z_n, zero_trim) = match case {
        CrossCase::I => {
            let y = if tau == 0 { dn * a * (b + k) } else { dn * (b + k) * a * tau as i128 };
            let kept = push(prev + y + 1, s_n - y, 0, last, "cell n")?;
            let zt = if tau == 0 { 2 * dn * (b - a) * (b + k) } else { 0 };
            (0, s[last] - kept, zt)
        }
        CrossCase::II => {
            let r_n = prev + r[last];
            let t = tau as i128;
            let both = push(prev + trim + 1, r_n - trim, last, last, "cell n")?;
            let w = 2 * dn * (a * b * t + a * k * t + b * k + a * b);
            let upper = push(r_n + 1, s_n - w, 0, last, "cell n slack")?;
            (r[last] - both, s[last] - both - upper, 0)
        }
    };
    push(s_n + zero_trim + 1, n1i, 0, 0, "zero region")?;
    let designations = ranges;
    let indices = IndexSet::new(designations.iter().map(|d| (d.start, d.end)).collect())?;
    let dropped = n1i - indices.len() as i128;
    let m_sum: i128 = interior.iter().map(|(m, _)| m).sum();
    let z_sum: i128 = interior.iter().map(|(_, z)| z).sum();
    let tallies = ExclusionTallies {
        interior,
        m_n,
        z_n,
        m_1: dropped - m_sum - m_n,
        z_1: dropped - z_sum - z_n,
    };
    let expected = exclusion_formulas(case, tau, dn, re);
    if tallies != expected {
        return Err(Error::Malformed(format!(
            "exclusion counts {tallies:?} differ from the closed form {expected:?}"
        )));
    }
    if tallies.boundary_residual(re) != 0 || tallies.interior_residual(re) != 0 {
        return Err(Error::Malformed("exclusion counts break the boundary relation".into()));
    }
    Ok(CrossSelection {
        indices,
        exclusions: tallies,
        case,
        tau,
        designations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::coefficients::concentrated_snapshot;
    use crate::interval::rat;

    #[test]
    fn index_set_ops() {
        let d = IndexSet::new(vec![(5, 7), (1, 2), (3, 3), (10, 9)]).unwrap();
        assert_eq!(d.ranges(), &[(1, 3), (5, 7)]);
        assert_eq!(d.len(), 6);
        assert!(d.contains(3) && !d.contains(4) && d.contains(7) && !d.contains(8));
        assert_eq!(d.count_in(2, 6), 4);
        assert_eq!(d.nth(3), Some(5));
        assert_eq!(d.nth(6), None);
        assert_eq!(d.clip(2, 6).collect::<Vec<_>>(), vec![(2, 3), (5, 6)]);
        assert!(IndexSet::new(vec![(1, 5), (5, 6)]).is_err());
    }

    #[test]
    fn same_examples() {
        let d = select_indices_same(100, rat(1, 10)).unwrap();
        assert_eq!(d.ranges(), &[(10, 90)]);
        assert_eq!(d.len(), 81);
        let d = select_indices_same(20, rat(1, 4)).unwrap();
        assert_eq!(d.ranges(), &[(5, 15)]);
        assert_eq!(d.len(), 11);
        assert!(select_indices_same(100, rat(1, 2)).is_err());
        for (n1, del) in [(1000u64, rat(1, 7)), (999, rat(2, 9)), (12345, rat(1, 100))] {
            let nn = select_indices_same(n1, del).unwrap().len() as i128;
            assert!(Rational::from_integer(n1 as i128 - nn) <= del * rat(2 * n1 as i128, 1) + rat(1, 1));
        }
    }

    #[test]
    fn closed_forms() {
        let re = Realization { a: 1, k: 1, b: 3 };
        let t = exclusion_formulas(CrossCase::I, 1, 100, &re);
        assert_eq!(t.interior, vec![(1200, 1600)]);
        assert_eq!((t.m_n, t.z_n, t.m_1, t.z_1), (0, 800, 1200, 0));
        // α m₁ + m_n = ½·1200 = 600 = ¾·800 = β z_n
        assert_eq!(t.boundary_residual(&re), 0);
        assert_eq!(t.interior_residual(&re), 0);
        let t = exclusion_formulas(CrossCase::II, 0, 1, &re);
        assert_eq!((t.m_1, t.m_n, t.z_n, t.z_1), (12, 12, 24, 0));
        assert_eq!(t.boundary_residual(&re), 0);
        let t = exclusion_formulas(CrossCase::I, 0, 3, &re);
        assert_eq!(t.boundary_residual(&re), 0);
        for tau in 0..5 {
            for (a, k, b) in [(1, 1, 2), (2, 2, 5), (1, 2, 3), (3, 5, 7)] {
                let re = Realization { a, k, b };
                for case in [CrossCase::I, CrossCase::II] {
                    let t = exclusion_formulas(case, tau, 7, &re);
                    assert_eq!(t.boundary_residual(&re), 0, "{case:?} {tau} {a} {k} {b}");
                    assert_eq!(t.interior_residual(&re), 0);
                }
            }
        }
    }

    #[test]
    fn printed_case_two_m1_breaks_identity() {
        for re in [Realization { a: 1, k: 1, b: 3 }, Realization { a: 2, k: 2, b: 5 }] {
            for tau in 0..4i128 {
                let mut t = exclusion_formulas(CrossCase::II, tau as usize, 1, &re);
                t.m_1 = 2 * (re.a + re.k) * (re.a + tau) * re.b;
                assert_eq!(t.boundary_residual(&re) == 0, re.a == 1);
            }
        }
    }

    fn snapshot(r: Vec<Rational>, s: Vec<Rational>) -> RationalSnapshot {
        let mut snap = concentrated_snapshot(r.len(), rat(1, 100));
        snap.r = r;
        snap.s = s;
        snap
    }

    #[test]
    fn example2_case_two() {
        let re = Realization { a: 2, k: 2, b: 5 };
        let snap = snapshot(
            vec![rat(3, 4), rat(0, 1), rat(1, 4)],
            vec![rat(1, 4), rat(0, 1), rat(3, 4)],
        );
        let sel = select_indices_cross(&snap, 486_440, rat(1, 12_161), &re).unwrap();
        assert_eq!(sel.case, CrossCase::II);
        assert_eq!(sel.tau, 0);
        let e = &sel.exclusions;
        assert_eq!((e.m_n, e.z_n, e.m_1, e.z_1), (1200, 2800, 1600, 0));
        assert_eq!(sel.indices.len(), 486_440 - 2800);
    }

    #[test]
    fn case_one_with_interior_mass() {
        // α = 1/2, β = 3/4: interior r = 3/4 s; last cell r_n = 0 needs s_n = θ = 1/3
        let re = Realization { a: 1, k: 1, b: 3 };
        let s = vec![rat(1, 6), rat(1, 2), rat(1, 3)];
        let r = crate::relations::r_from_s(&s, rat(1, 2), rat(3, 4));
        assert_eq!(r[2], rat(0, 1));
        let snap = snapshot(r, s);
        let sel = select_indices_cross(&snap, 120_000, rat(1, 1200), &re).unwrap();
        assert_eq!(sel.case, CrossCase::I);
        assert_eq!(sel.tau, 1);
        assert_eq!(sel.exclusions, exclusion_formulas(CrossCase::I, 1, 100, &re));
    }

    #[test]
    fn overflow_is_reported() {
        let re = Realization { a: 2, k: 2, b: 5 };
        let snap = snapshot(
            vec![rat(3, 4), rat(0, 1), rat(1, 4)],
            vec![rat(1, 4), rat(0, 1), rat(3, 4)],
        );
        assert!(matches!(
            select_indices_cross(&snap, 400, rat(1, 20), &re),
            Err(Error::ExclusionOverflow { .. })
        ));
        assert!(matches!(
            select_indices_cross(&snap, 400, rat(1, 3), &re),
            Err(Error::NonIntegralScaling(_))
        ));
        let same = Realization { a: 1, k: 1, b: 1 };
        assert!(matches!(
            select_indices_cross(&snap, 400, rat(1, 20), &same),
            Err(Error::SameSubspace)
        ));
    }
}
