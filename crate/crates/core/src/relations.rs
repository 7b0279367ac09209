//! Distribution of the endpoint measures over a cell partition, the exact rational
//! snapshot of those masses, and the integer count identity for endpoint tallies.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::rational::{ceil, lcm_all, recover, serde_rational, simplest_in, to_f64};
use crate::interval::{rat, CellPartition, Rational};
use crate::markov::MarkovKernel;

const MASS_TOL: f64 = 1e-12;
const RECOVER_DEN: i128 = 10_000;

/// `μ₀(X_i)` and `μ₁(X_i)` for each cell; index 0 is the cell of `x = 0`, index `n-1` the cell of `x = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMasses {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

impl CellMasses {
    pub fn new(mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        if mu0.len() != mu1.len() || mu0.len() < 2 {
            return Err(Error::DegeneratePartition(mu0.len().min(mu1.len())));
        }
        for (name, v) in [("mu0", &mu0), ("mu1", &mu1)] {
            let sum: f64 = v.iter().sum();
            if v.iter().any(|&x| x < -MASS_TOL) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::OutOfRange(format!(
                    "{name} is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self { mu0, mu1 })
    }

    pub fn from_exact(mu0: &[Rational], mu1: &[Rational]) -> Result<Self> {
        Self::new(mu0.iter().map(to_f64).collect(), mu1.iter().map(to_f64).collect())
    }

    pub fn from_kernel(kernel: &MarkovKernel, partition: &CellPartition) -> Result<Self> {
        kernel.grid().check_same(&partition.grid())?;
        let (m0, m1) = kernel.endpoint_measures();
        Self::new(
            partition.cells().map(|c| m0.mass(c)).collect(),
            partition.cells().map(|c| m1.mass(c)).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.mu0.len()
    }

    /// Exact masses, when every entry is a short fraction (denominator ≤ 10⁴) and each
    /// vector sums to exactly 1.
    pub fn exact(&self) -> Option<(Vec<Rational>, Vec<Rational>)> {
        let conv = |v: &[f64]| -> Option<Vec<Rational>> {
            let out: Option<Vec<Rational>> = v
                .iter()
                .map(|&x| recover(x, RECOVER_DEN, 1e-12).filter(|r| !r.is_negative()))
                .collect();
            out.filter(|o| o.iter().sum::<Rational>() == Rational::one())
        };
        Some((conv(&self.mu0)?, conv(&self.mu1)?))
    }
}

/// Residuals of the four families of relations between `μ₀` and `μ₁` cell masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `|μ₀(X_i) − β μ₁(X_i)|` for the interior cells.
    pub interior: Vec<f64>,
    /// `|α μ₀(X_1) + μ₀(X_n) − β(α μ₁(X_1) + μ₁(X_n))|`.
    pub boundary: f64,
    /// `|μ₀(X_1) − β μ₁(X_1) − (1−β)/(1−α)|`.
    pub first_cell: f64,
    /// `|μ₀(X_n) − β μ₁(X_n) + α(1−β)/(1−α)|`.
    pub last_cell: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.interior
            .iter()
            .copied()
            .chain([self.boundary, self.first_cell, self.last_cell])
            .fold(0.0, f64::max)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (i, r) in self.interior.iter().enumerate() {
            out.insert(format!("interior_{}", i + 2), *r);
        }
        out.insert("boundary".into(), self.boundary);
        out.insert("first_cell".into(), self.first_cell);
        out.insert("last_cell".into(), self.last_cell);
        out
    }
}

pub fn check_relations(masses: &CellMasses, alpha: Rational, beta: Rational) -> Residuals {
    let (a, b) = (to_f64(&alpha), to_f64(&beta));
    let n = masses.n();
    let (m0, m1) = (&masses.mu0, &masses.mu1);
    let c = (1.0 - b) / (1.0 - a);
    Residuals {
        interior: (1..n - 1).map(|i| (m0[i] - b * m1[i]).abs()).collect(),
        boundary: (a * m0[0] + m0[n - 1] - b * (a * m1[0] + m1[n - 1])).abs(),
        first_cell: (m0[0] - b * m1[0] - c).abs(),
        last_cell: (m0[n - 1] - b * m1[n - 1] + a * c).abs(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Feasibility {
    Feasible,
    /// `μ₀(X_1) = β μ₁(X_1) + forcing ≥ forcing > 1` for any admissible masses.
    Infeasible {
        #[serde(with = "serde_rational")]
        forcing: Rational,
    },
}

pub fn feasibility(alpha: Rational, beta: Rational) -> Feasibility {
    if beta < alpha {
        Feasibility::Infeasible {
            forcing: (Rational::one() - beta) / (Rational::one() - alpha),
        }
    } else {
        Feasibility::Feasible
    }
}

/// Lower bound on the first-cell residual over all probability masses when `β < α`:
/// `(1−β)/(1−α) − 1`. Zero when feasible.
pub fn first_cell_residual_floor(alpha: Rational, beta: Rational) -> Rational {
    let f = (Rational::one() - beta) / (Rational::one() - alpha) - Rational::one();
    if f.is_positive() {
        f
    } else {
        Rational::zero()
    }
}

/// Distance of a snapshot from the masses it approximates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotDeviation {
    pub max_r: f64,
    pub max_s: f64,
    /// `r_1 − μ₀(X_1)`, reported with its sign.
    pub r1_minus_mu0: f64,
    /// Every `|r_i − μ₀(X_i)|` and `|s_i − μ₁(X_i)|` is at most `eta`.
    pub within_eta: bool,
    /// Largest relation residual of the input masses.
    pub relation_residual: f64,
}

/// Exact rationals `r_i`, `s_i` close to the cell masses and satisfying the relations exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalSnapshot {
    #[serde(serialize_with = "ser_vec")]
    pub r: Vec<Rational>,
    #[serde(serialize_with = "ser_vec")]
    pub s: Vec<Rational>,
    #[serde(with = "serde_rational")]
    pub eta: Rational,
    /// The masses were short fractions and were used as given.
    pub exact: bool,
    pub deviation: SnapshotDeviation,
}

fn ser_vec<S: serde::Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(crate::interval::format_rational))
}

impl RationalSnapshot {
    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn denominators(&self) -> Vec<i128> {
        self.r.iter().chain(&self.s).map(|x| *x.denom()).collect()
    }

    /// Interior cells with `r_i > 0`.
    pub fn tau(&self) -> usize {
        self.r[1..self.n() - 1].iter().filter(|x| x.is_positive()).count()
    }
}

fn ceil_tol(x: f64) -> i128 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as i128
    } else {
        x.ceil() as i128
    }
}

/// `r` derived from `s`: `r_i = β s_i` inside, `r_n = β s_n − α(1−β)/(1−α)`, `r_1` by remainder.
pub fn r_from_s(s: &[Rational], alpha: Rational, beta: Rational) -> Vec<Rational> {
    let n = s.len();
    let c = alpha * (Rational::one() - beta) / (Rational::one() - alpha);
    let mut r: Vec<Rational> = s.iter().map(|x| beta * x).collect();
    r[n - 1] -= c;
    r[0] = Rational::one() - r[1..].iter().sum::<Rational>();
    r
}

pub fn rational_snapshot(
    masses: &CellMasses,
    eta: Rational,
    alpha: Rational,
    beta: Rational,
) -> Result<RationalSnapshot> {
    if let Feasibility::Infeasible { forcing } = feasibility(alpha, beta) {
        return Err(Error::Infeasible {
            alpha,
            beta,
            forcing,
        });
    }
    if !eta.is_positive() {
        return Err(Error::OutOfRange(format!("eta must be positive, got {eta}")));
    }
    let n = masses.n();
    let one = Rational::one();
    let theta = alpha * (one - beta) / (beta * (one - alpha));
    let exact = masses.exact();
    let mut s = vec![Rational::zero(); n];
    if let Some((_, mu1)) = &exact {
        s[1..n - 1].copy_from_slice(&mu1[1..n - 1]);
        let last = mu1[n - 1];
        s[n - 1] = if last >= theta {
            last
        } else {
            let hi = (last + eta).min(last + mu1[0]);
            simplest_in(&theta, &hi).ok_or_else(|| {
                Error::NoSnapshot(format!(
                    "mu_1(X_n) = {last} is more than eta below the threshold {theta}"
                ))
            })?
        };
    } else {
        let den = ceil(&(Rational::from_integer(n as i128) / eta));
        for i in 1..n {
            s[i] = rat(ceil_tol(masses.mu1[i] * den as f64), den);
        }
        let t = rat(ceil(&(theta * den)), den);
        if t > s[n - 1] {
            s[n - 1] = t;
        }
        if to_f64(&s[n - 1]) - masses.mu1[n - 1] > to_f64(&eta) + 1e-12 {
            return Err(Error::NoSnapshot(format!(
                "mu_1(X_n) = {} is more than eta below the threshold {theta}",
                masses.mu1[n - 1]
            )));
        }
    }
    s[0] = one - s[1..].iter().sum::<Rational>();
    if s[0].is_negative() {
        return Err(Error::EtaTooLarge {
            eta,
            detail: format!("s_1 = {} < 0", s[0]),
        });
    }
    let r = r_from_s(&s, alpha, beta);
    if let Some(bad) = r.iter().chain(&s).find(|x| x.is_negative() || **x > one) {
        return Err(Error::EtaTooLarge {
            eta,
            detail: format!("snapshot entry {bad} outside [0,1]"),
        });
    }
    let dev = |v: &[Rational], m: &[f64]| {
        v.iter()
            .zip(m)
            .fold(0.0f64, |acc, (x, y)| acc.max((to_f64(x) - y).abs()))
    };
    let (max_r, max_s) = (dev(&r, &masses.mu0), dev(&s, &masses.mu1));
    let eta_f = to_f64(&eta);
    let deviation = SnapshotDeviation {
        max_r,
        max_s,
        r1_minus_mu0: to_f64(&r[0]) - masses.mu0[0],
        within_eta: max_r <= eta_f + 1e-12 && max_s <= eta_f + 1e-12,
        relation_residual: check_relations(masses, alpha, beta).max(),
    };
    Ok(RationalSnapshot {
        r,
        s,
        eta,
        exact: exact.is_some(),
        deviation,
    })
}

/// Exact counts of endpoint values: at `x = 0`, at `x = 1`, and at each interior representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointCounts {
    pub at_zero: i128,
    pub at_one: i128,
    pub interior: Vec<i128>,
}

impl EndpointCounts {
    pub fn total(&self) -> i128 {
        self.at_zero + self.at_one + self.interior.iter().sum::<i128>()
    }
}

/// True iff averaged endpoint evaluations with counts `c0` at `y = 0` and `c1` at `y = 1`
/// satisfy `avg₀(f) = β avg₁(f)` for every `f` with `f(0) = α f(1)`.
pub fn boundary_count_identity(
    c0: &EndpointCounts,
    c1: &EndpointCounts,
    alpha: Rational,
    beta: Rational,
) -> bool {
    if c0.interior.len() != c1.interior.len() {
        return false;
    }
    let int = Rational::from_integer;
    let interior_ok = c0
        .interior
        .iter()
        .zip(&c1.interior)
        .all(|(a, b)| int(*a) == beta * int(*b));
    interior_ok
        && alpha * int(c0.at_zero) + int(c0.at_one)
            == beta * (alpha * int(c1.at_zero) + int(c1.at_one))
}

/// Smallest multiple of `lcm(den δ, denominators)` strictly greater than `1/(δ δ₀)`.
pub fn select_modulus_n1(
    delta: Rational,
    delta0: Rational,
    denominators: &[i128],
    cap: u64,
) -> Result<u64> {
    if !delta.is_positive() || !delta0.is_positive() {
        return Err(Error::OutOfRange("delta and delta0 must be positive".into()));
    }
    let too_big = |n1: u128| Error::CapExceeded { n1, cap };
    let mut l: i128 = *delta.denom();
    for &d in denominators {
        l = lcm_all([l, d]);
        if l as u128 > cap as u128 {
            return Err(too_big(l as u128));
        }
    }
    let need = (delta * delta0).recip();
    let q = (need / l).floor().to_integer() + 1;
    let n1 = q.checked_mul(l).ok_or_else(|| too_big(u128::MAX))?;
    if n1 as u128 > cap as u128 {
        return Err(too_big(n1 as u128));
    }
    Ok(n1 as u64)
}
