//! Independent checks of a constructed family against the kernel it approximates.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::family::{count_values, EigenvalueFamily, MapFamily};
use crate::construct::profile::End;
use crate::construct::IndexSet;
use crate::error::{Error, Result};
use crate::interval::rational::to_f64;
use crate::interval::{Rational, SampledFunction};
use crate::markov::MarkovKernel;
use crate::relations::{boundary_count_identity, r_from_s, CellMasses, EndpointCounts};

/// Upper limit on the number of tuples `snapshot_oracle` will enumerate.
pub const ORACLE_LIMIT: u128 = 100_000_000;

mod serde_counts {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use crate::interval::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(m: &BTreeMap<Rational, u64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (format_rational(k), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Rational, u64>, D::Error> {
        BTreeMap::<String, u64>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| Ok((parse_rational(&k).map_err(serde::de::Error::custom)?, v)))
            .collect()
    }
}

/// Exact multiplicities of the endpoint values `h_d(0)` and `h_d(1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryTally {
    #[serde(with = "serde_counts")]
    pub c0: BTreeMap<Rational, u64>,
    #[serde(with = "serde_counts")]
    pub c1: BTreeMap<Rational, u64>,
    #[serde(rename = "N")]
    pub n: u64,
}

impl BoundaryTally {
    pub fn from_runs(zero: &[(Rational, u64)], one: &[(Rational, u64)]) -> Self {
        Self {
            c0: count_values(zero),
            c1: count_values(one),
            n: zero.iter().map(|r| r.1).sum(),
        }
    }

    /// Counts at 0, at 1 and at every other point that occurs on either side.
    pub fn counts(&self) -> (EndpointCounts, EndpointCounts) {
        let (zero, one) = (Rational::zero(), Rational::one());
        let mut inner: Vec<Rational> = self.c0.keys().chain(self.c1.keys()).copied().collect();
        inner.retain(|p| *p != zero && *p != one);
        inner.sort();
        inner.dedup();
        let side = |c: &BTreeMap<Rational, u64>| {
            let get = |p: &Rational| c.get(p).copied().unwrap_or(0) as i128;
            EndpointCounts {
                at_zero: get(&zero),
                at_one: get(&one),
                interior: inner.iter().map(get).collect(),
            }
        };
        (side(&self.c0), side(&self.c1))
    }
}

/// Tallies endpoint values, rejecting any that is not a representative point.
pub fn boundary_tally(family: &dyn MapFamily) -> Result<BoundaryTally> {
    let reps = family.representatives();
    let mut sides = Vec::new();
    for end in [End::Zero, End::One] {
        let runs = family.endpoint_column(end)?;
        let mut at = 0u64;
        for (v, c) in &runs {
            if reps.binary_search(v).is_err() {
                return Err(Error::NonRepresentative { index: at, value: *v });
            }
            at += c;
        }
        sides.push(runs);
    }
    let tally = BoundaryTally::from_runs(&sides[0], &sides[1]);
    if tally.c1.values().sum::<u64>() != tally.n || tally.n != family.count() {
        return Err(Error::Malformed("endpoint counts do not match the family size".into()));
    }
    Ok(tally)
}

pub fn certify_boundary(tally: &BoundaryTally, alpha: Rational, beta: Rational) -> bool {
    let (c0, c1) = tally.counts();
    boundary_count_identity(&c0, &c1, alpha, beta)
}

/// `y ↦ (1/N) Σ_d f(h_d(y))` for each `f`.
pub fn averages(family: &dyn MapFamily, fs: &[SampledFunction]) -> Result<Vec<SampledFunction>> {
    let grid = family.grid();
    for f in fs {
        grid.check_same(&f.grid())?;
    }
    let n = family.count() as f64;
    let cols: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let col = family.column(y);
            fs.iter()
                .map(|f| col.iter().map(|(v, c)| *c as f64 * f.eval(*v)).sum::<f64>() / n)
                .collect()
        })
        .collect();
    fs.iter()
        .enumerate()
        .map(|(i, _)| SampledFunction::new(grid, cols.iter().map(|c| c[i]).collect()))
        .collect()
}

/// `max_{f, y} |φ(f)(y) − (1/N) Σ_d f(h_d(y))|`.
pub fn sup_error(kernel: &MarkovKernel, family: &dyn MapFamily, fs: &[SampledFunction]) -> Result<f64> {
    let avgs = averages(family, fs)?;
    let mut worst = 0.0f64;
    for (f, avg) in fs.iter().zip(&avgs) {
        worst = worst.max(crate::interval::sup_distance(&kernel.apply(f)?, avg)?);
    }
    Ok(worst)
}

/// The four stage errors, each a sup over `f` and grid `y`:
/// kernel vs. block sum, block sum vs. `∫ f(h(y,t)) dt`, that integral vs. the Riemann sum over
/// all `N₁` indices, and the full Riemann average vs. the average over the kept indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets(pub [f64; 4]);

impl Budgets {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

pub fn budgets(kernel: &MarkovKernel, family: &EigenvalueFamily, fs: &[SampledFunction]) -> Result<Budgets> {
    let profile = &family.profile;
    let grid = profile.grid();
    let delta = profile.delta_f64();
    let full = IndexSet::full(family.n1);
    let n1 = family.n1 as f64;
    let images: Vec<SampledFunction> = fs.iter().map(|f| kernel.apply(f)).collect::<Result<_>>()?;
    let anti: Vec<_> = fs.iter().map(|f| f.antiderivative()).collect();
    let targets: Vec<f64> = profile.targets().iter().map(|&t| grid.point(t)).collect();
    let per_y: Vec<[f64; 4]> = (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let g = profile.breaks(y);
            let all = profile.column(y, family.n1, &full);
            let kept = family.column(y);
            let mut out = [0.0f64; 4];
            for (i, f) in fs.iter().enumerate() {
                let mut block_sum = 0.0;
                let mut integral = 0.0;
                let mut lo = 0.0;
                for (j, &hi) in g.iter().enumerate() {
                    let w = hi - lo;
                    let x = targets[j];
                    lo = hi;
                    if w <= 0.0 {
                        continue;
                    }
                    block_sum += w * f.eval(x);
                    if x == 0.0 {
                        integral += w * f.eval(0.0);
                        continue;
                    }
                    let up = delta.min(w / 2.0);
                    let peak = x * (w / (2.0 * delta)).min(1.0);
                    integral += 2.0 * up * (anti[i].at(peak) - anti[i].at(0.0)) / peak + (w - 2.0 * up) * f.eval(peak);
                }
                let riemann = all.iter().map(|(v, c)| *c as f64 * f.eval(*v)).sum::<f64>() / n1;
                let avg = kept.iter().map(|(v, c)| *c as f64 * f.eval(*v)).sum::<f64>() / family.n as f64;
                let phi = images[i].at(y);
                let errs = [
                    (phi - block_sum).abs(),
                    (block_sum - integral).abs(),
                    (integral - riemann).abs(),
                    (riemann - avg).abs(),
                ];
                for k in 0..4 {
                    out[k] = out[k].max(errs[k]);
                }
            }
            out
        })
        .collect();
    let mut b = [0.0f64; 4];
    for row in per_y {
        for k in 0..4 {
            b[k] = b[k].max(row[k]);
        }
    }
    Ok(Budgets(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub sup_error: f64,
    pub eps: f64,
    pub budgets: Option<Budgets>,
    pub boundary_ok: bool,
    pub tally: BoundaryTally,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "N1")]
    pub n1: Option<u64>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.sup_error < self.eps && self.boundary_ok
    }
}

/// Certificate for an arbitrary family; stage budgets are left out.
pub fn certify_family(
    kernel: &MarkovKernel,
    family: &dyn MapFamily,
    fs: &[SampledFunction],
    eps: f64,
    alpha: Rational,
    beta: Rational,
) -> Result<Certificate> {
    let tally = boundary_tally(family)?;
    Ok(Certificate {
        sup_error: sup_error(kernel, family, fs)?,
        eps,
        budgets: None,
        boundary_ok: certify_boundary(&tally, alpha, beta),
        n: family.count(),
        tally,
        n1: None,
    })
}

pub fn certify(
    kernel: &MarkovKernel,
    family: &EigenvalueFamily,
    fs: &[SampledFunction],
    eps: f64,
    alpha: Rational,
    beta: Rational,
) -> Result<Certificate> {
    let mut cert = certify_family(kernel, family, fs, eps, alpha, beta)?;
    cert.budgets = Some(budgets(kernel, family, fs)?);
    cert.n1 = Some(family.n1);
    Ok(cert)
}

/// Reduced fractions `p/q` with `q ≤ max_den` in `[lo, hi]`, ascending.
fn fractions_in(lo: Rational, hi: Rational, max_den: i128) -> Vec<Rational> {
    let mut out: Vec<Rational> = (1..=max_den)
        .flat_map(|q| {
            let a = (lo * q).ceil().to_integer();
            let b = (hi * q).floor().to_integer();
            (a..=b).map(move |p| Rational::new(p, q))
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Every `(r, s)` with `s_i ∈ [μ₁(X_i), μ₁(X_i) + η]` of denominator at most `max_den` for
/// `i ≥ 2`, `s_1` and `r` fixed by the relations, and all entries in `[0, 1]`.
pub fn snapshot_oracle(
    masses: &CellMasses,
    alpha: Rational,
    beta: Rational,
    eta: Rational,
    max_den: i128,
) -> Result<Vec<(Vec<Rational>, Vec<Rational>)>> {
    let n = masses.n();
    if n > 4 || max_den > 50 || max_den < 1 {
        return Err(Error::OutOfRange(format!(
            "oracle needs n <= 4 and max_den in 1..=50, got n = {n}, max_den = {max_den}"
        )));
    }
    let (_, mu1) = masses
        .exact()
        .ok_or_else(|| Error::Malformed("oracle needs rational masses".into()))?;
    let one = Rational::one();
    let candidates: Vec<Vec<Rational>> = (1..n)
        .map(|i| fractions_in(mu1[i], (mu1[i] + eta).min(one), max_den))
        .collect();
    let size = candidates.iter().map(|c| c.len() as u128).product::<u128>();
    if size > ORACLE_LIMIT {
        return Err(Error::SearchTooLarge(size));
    }
    let mut found = Vec::new();
    let mut idx = vec![0usize; n - 1];
    if candidates.iter().any(|c| c.is_empty()) {
        return Ok(found);
    }
    loop {
        let mut s = vec![Rational::zero(); n];
        for (i, &k) in idx.iter().enumerate() {
            s[i + 1] = candidates[i][k];
        }
        s[0] = one - s[1..].iter().sum::<Rational>();
        if !s[0].is_negative() {
            let r = r_from_s(&s, alpha, beta);
            if r.iter().all(|x| !x.is_negative() && *x <= one) {
                found.push((r, s));
            }
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(found);
            }
            idx[pos] += 1;
            if idx[pos] < candidates[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Largest `|avg(0) − β avg(1)|` over `members` (values at the tally's points).
pub fn boundary_defect(tally: &BoundaryTally, beta: Rational, member: impl Fn(&Rational) -> Rational) -> Rational {
    let avg = |c: &BTreeMap<Rational, u64>| -> Rational {
        c.iter()
            .map(|(p, k)| member(p) * Rational::from_integer(*k as i128))
            .sum::<Rational>()
            / Rational::from_integer(tally.n as i128)
    };
    (avg(&tally.c0) - beta * avg(&tally.c1)).abs()
}

pub fn tally_f64(tally: &BoundaryTally) -> BTreeMap<String, f64> {
    tally
        .c0
        .iter()
        .map(|(p, c)| (format!("c0@{}", to_f64(p)), *c as f64))
        .chain(tally.c1.iter().map(|(p, c)| (format!("c1@{}", to_f64(p)), *c as f64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::family::{assemble_family, MatrixFamily, Selection};
    use crate::construct::profile::build_profile;
    use crate::construct::schedule::BlockSchedule;
    use crate::construct::select::select_indices_same;
    use crate::interval::{rat, Grid};
    use crate::relations::rational_snapshot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tally(c0: &[(Rational, u64)], c1: &[(Rational, u64)]) -> BoundaryTally {
        BoundaryTally::from_runs(c0, c1)
    }

    #[test]
    fn identity_family_has_zero_error() {
        let g = Grid::new(10).unwrap();
        let k = MarkovKernel::identity(g);
        let rows = vec![g.points().collect::<Vec<_>>()];
        let fam = MatrixFamily::new(g, rows, None, vec![rat(0, 1), rat(1, 1)]).unwrap();
        let fs = vec![SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0)];
        assert_eq!(sup_error(&k, &fam, &fs).unwrap(), 0.0);
        let cert = certify_family(&k, &fam, &fs, 0.1, rat(1, 2), rat(1, 2)).unwrap();
        assert!(cert.passed());
    }

    #[test]
    fn corrupted_map_raises_error() {
        let g = Grid::new(10).unwrap();
        let k = MarkovKernel::identity(g);
        let id: Vec<f64> = g.points().collect();
        let mut fam = MatrixFamily::new(g, vec![id; 4], None, vec![rat(0, 1), rat(1, 1)]).unwrap();
        let fs = vec![SampledFunction::from_fn(g, |x| x)];
        fam.rows_mut()[2] = vec![0.0; 11];
        assert!(sup_error(&k, &fam, &fs).unwrap() >= 0.25 - 1e-12);
    }

    #[test]
    fn off_representative_endpoint_is_named() {
        let g = Grid::new(10).unwrap();
        let id: Vec<f64> = g.points().collect();
        let mut fam = MatrixFamily::new(g, vec![id; 4], None, vec![rat(0, 1), rat(1, 1)]).unwrap();
        fam.ends_mut()[3].1 = rat(9, 10);
        match boundary_tally(&fam) {
            Err(Error::NonRepresentative { index, value }) => {
                assert_eq!(index, 3);
                assert_eq!(value, rat(9, 10));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tally_examples() {
        let t = tally(&[(rat(0, 1), 81)], &[(rat(1, 1), 81)]);
        assert!(certify_boundary(&t, rat(1, 2), rat(1, 2)));
        // snapshot (29,0,11)/(12,0,28) on points 0, 1/2, 1 for α = 1/2, β = 3/4
        let t = tally(&[(rat(0, 1), 29), (rat(1, 1), 11)], &[(rat(0, 1), 12), (rat(1, 1), 28)]);
        assert!(certify_boundary(&t, rat(1, 2), rat(3, 4)));
        let t = tally(
            &[(rat(0, 1), 29), (rat(1, 2), 3), (rat(1, 1), 11)],
            &[(rat(0, 1), 12), (rat(1, 2), 4), (rat(1, 1), 28)],
        );
        assert!(certify_boundary(&t, rat(1, 2), rat(3, 4)));
        let t = tally(
            &[(rat(0, 1), 29), (rat(1, 2), 3), (rat(1, 1), 11)],
            &[(rat(0, 1), 12), (rat(1, 2), 5), (rat(1, 1), 28)],
        );
        assert!(!certify_boundary(&t, rat(1, 2), rat(3, 4)));
    }

    #[test]
    fn tally_json_uses_rational_keys() {
        let t = tally(&[(rat(1, 2), 3)], &[(rat(1, 1), 3)]);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"c0":{"1/2":3},"c1":{"1/1":3},"N":3}"#);
        assert_eq!(serde_json::from_str::<BoundaryTally>(&s).unwrap(), t);
    }

    /// Random members `f(0) = α f(1)` with rational values at the tally points.
    fn random_member(rng: &mut ChaCha8Rng, alpha: Rational) -> impl Fn(&Rational) -> Rational {
        let f1 = rat(rng.gen_range(-20..20), rng.gen_range(1..7));
        let slope = rat(rng.gen_range(-20..20), rng.gen_range(1..7));
        let curve = rat(rng.gen_range(-20..20), rng.gen_range(1..7));
        move |x: &Rational| {
            if x.is_zero() {
                alpha * f1
            } else if x.is_one() {
                f1
            } else {
                slope * x + curve * x * x
            }
        }
    }

    #[test]
    fn identity_iff_members_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (alpha, beta) = (rat(1, 2), rat(3, 4));
        let pts = [rat(0, 1), rat(1, 3), rat(2, 3), rat(1, 1)];
        let mut trues = 0;
        for _ in 0..300 {
            // tallies scaled from exact snapshots; half get a unit perturbation
            let counts: Vec<i128> = (0..4).map(|_| 4 * rng.gen_range(0..6)).collect();
            let total: i128 = counts.iter().sum();
            if total == 0 {
                continue;
            }
            let sv: Vec<Rational> = counts.iter().map(|c| rat(*c, total)).collect();
            let rv = r_from_s(&sv, alpha, beta);
            let scaled: Vec<Rational> = rv.iter().map(|x| x * total).collect();
            if scaled.iter().any(|x| !x.is_integer() || x.is_negative()) {
                continue;
            }
            let mut c1: Vec<(Rational, u64)> = pts.iter().copied().zip(counts.iter().map(|c| *c as u64)).collect();
            let mut c0: Vec<(Rational, u64)> =
                pts.iter().copied().zip(scaled.iter().map(|x| x.to_integer() as u64)).collect();
            if rng.gen_bool(0.5) {
                let (j, k) = (rng.gen_range(0..4), rng.gen_range(0..4));
                if j != k && c1[k].1 > 0 {
                    c1[j].1 += 1;
                    c1[k].1 -= 1;
                }
            }
            c0.retain(|c| c.1 > 0);
            c1.retain(|c| c.1 > 0);
            let n0: u64 = c0.iter().map(|c| c.1).sum();
            let n1: u64 = c1.iter().map(|c| c.1).sum();
            if n0 != n1 || n0 == 0 {
                continue;
            }
            c0.sort();
            c1.sort();
            let t = tally(&c0, &c1);
            let claimed = certify_boundary(&t, alpha, beta);
            let all_zero = (0..100).all(|_| {
                let f = random_member(&mut rng, alpha);
                boundary_defect(&t, beta, f).is_zero()
            });
            assert_eq!(claimed, all_zero, "{t:?}");
            trues += claimed as usize;
        }
        assert!(trues > 10);
    }

    #[test]
    fn oracle_examples() {
        let (alpha, beta) = (rat(1, 2), rat(3, 4));
        let m = CellMasses::from_exact(&[rat(29, 40), rat(0, 1), rat(11, 40)], &[rat(3, 10), rat(0, 1), rat(7, 10)]).unwrap();
        let set = snapshot_oracle(&m, alpha, beta, rat(1, 20), 50).unwrap();
        assert!(set.contains(&(
            vec![rat(29, 40), rat(0, 1), rat(11, 40)],
            vec![rat(3, 10), rat(0, 1), rat(7, 10)]
        )));
        let snap = rational_snapshot(&m, rat(1, 20), alpha, beta).unwrap();
        assert!(set.contains(&(snap.r.clone(), snap.s.clone())));

        // θ = 1/3: μ₁(X_n) = 1/5 is more than η below it
        let m = CellMasses::from_exact(&[rat(1, 1), rat(0, 1), rat(0, 1)], &[rat(4, 5), rat(0, 1), rat(1, 5)]).unwrap();
        assert!(snapshot_oracle(&m, alpha, beta, rat(1, 20), 50).unwrap().is_empty());
        assert!(rational_snapshot(&m, rat(1, 20), alpha, beta).is_err());

        let m = CellMasses::from_exact(&[rat(1, 4); 4], &[rat(1, 4); 4]).unwrap();
        assert!(matches!(
            snapshot_oracle(&m, alpha, beta, rat(1, 1), 50),
            Err(Error::SearchTooLarge(_))
        ));
    }

    #[test]
    fn theorem1_family_certifies() {
        let g = Grid::new(20).unwrap();
        let sched = BlockSchedule {
            grid: g,
            targets: vec![0, 20],
            widths: vec![SampledFunction::from_fn(g, |y| 1.0 - y), SampledFunction::from_fn(g, |y| y)],
            exact_ends: (vec![rat(1, 1), rat(0, 1)], vec![rat(0, 1), rat(1, 1)]),
        };
        let p = build_profile(&sched, rat(1, 50));
        let d = select_indices_same(5000, rat(1, 50)).unwrap();
        let fam = assemble_family(p, 5000, rat(1, 2), vec![rat(0, 1), rat(1, 1)], Selection::same(d, 0, 1)).unwrap();
        // the kernel μ_y = (1−y)δ₀ + y δ₁ is the block sum exactly
        let rows = (0..=20)
            .map(|i| {
                let y = i as f64 / 20.0;
                let mut r = vec![0.0; 21];
                r[0] = 1.0 - y;
                r[20] += y;
                r
            })
            .collect();
        let k = MarkovKernel::from_rows(g, rows).unwrap();
        let fs = vec![SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0)];
        let cert = certify(&k, &fam, &fs, 0.1, rat(1, 2), rat(1, 2)).unwrap();
        let b = cert.budgets.unwrap();
        assert!(b.0[0] < 1e-12, "{b:?}");
        assert!(cert.sup_error <= b.total() + 1e-12);
        assert!(cert.passed(), "{cert:?}");
        assert_eq!(cert.tally.c0, BTreeMap::from([(rat(0, 1), fam.n)]));
    }
}
