//! Boundary-ratio subspaces `C[0,1]_α = {f : f(0) = α f(1)}`.

use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::rational::{serde_rational, to_f64};
use crate::interval::{rat, Grid, Rational, SampledFunction};

/// Subspace `C[0,1]_α` with an integer realization `α = a/(a+k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceSpec {
    #[serde(with = "serde_rational")]
    alpha: Rational,
    a: i128,
    k: i128,
}

impl SubspaceSpec {
    /// Uses the smallest realization `a = p`, `k = q - p` for `α = p/q`.
    pub fn new(alpha: Rational) -> Result<Self> {
        if alpha <= Rational::zero() || alpha >= Rational::one() {
            return Err(Error::OutOfRange(format!("alpha = {alpha} not in (0,1)")));
        }
        Ok(Self {
            alpha,
            a: *alpha.numer(),
            k: alpha.denom() - alpha.numer(),
        })
    }

    pub fn from_integers(a: i128, k: i128) -> Result<Self> {
        if a <= 0 || k <= 0 {
            return Err(Error::OutOfRange(format!("need a, k > 0, got ({a}, {k})")));
        }
        Ok(Self {
            alpha: rat(a, a + k),
            a,
            k,
        })
    }

    pub fn alpha(&self) -> Rational {
        self.alpha
    }

    pub fn alpha_f64(&self) -> f64 {
        to_f64(&self.alpha)
    }

    pub fn a(&self) -> i128 {
        self.a
    }

    pub fn k(&self) -> i128 {
        self.k
    }

    /// `|f(0) - α f(1)| ≤ 1e-12 (1 + |f(1)|)`.
    pub fn is_member(&self, f: &SampledFunction) -> bool {
        self.defect(f) <= 1e-12 * (1.0 + f.last().abs())
    }

    pub fn defect(&self, f: &SampledFunction) -> f64 {
        (f.first() - self.alpha_f64() * f.last()).abs()
    }

    pub fn is_member_exact(&self, f0: Rational, f1: Rational) -> bool {
        f0 == self.alpha * f1
    }
}

/// Common integer realization `α = a/(a+k)`, `β = b/(b+k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub a: i128,
    pub k: i128,
    pub b: i128,
}

impl Realization {
    pub fn alpha(&self) -> Rational {
        rat(self.a, self.a + self.k)
    }

    pub fn beta(&self) -> Rational {
        rat(self.b, self.b + self.k)
    }
}

/// Smallest `k` making both `kα/(1-α)` and `kβ/(1-β)` integers.
pub fn realize_integers(alpha: Rational, beta: Rational) -> Result<Realization> {
    SubspaceSpec::new(alpha)?;
    SubspaceSpec::new(beta)?;
    if beta < alpha {
        return Err(Error::Infeasible {
            alpha,
            beta,
            forcing: (Rational::one() - beta) / (Rational::one() - alpha),
        });
    }
    let ra = alpha / (Rational::one() - alpha);
    let rb = beta / (Rational::one() - beta);
    let k = ra.denom().lcm(rb.denom());
    Ok(Realization {
        a: (ra * k).to_integer(),
        k,
        b: (rb * k).to_integer(),
    })
}

/// Splits `f = λ + g` with `g` in the subspace; `g(0)` is set to `α g(1)` exactly.
pub fn decompose(f: &SampledFunction, spec: &SubspaceSpec) -> (f64, SampledFunction) {
    let alpha = spec.alpha_f64();
    let lambda = (f.first() - alpha * f.last()) / (1.0 - alpha);
    let mut values = f.shift(-lambda).into_values();
    values[0] = alpha * values[values.len() - 1];
    let g = SampledFunction::new(f.grid(), values).expect("same grid");
    (lambda, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// `α` at 0, ramping to 1 at `δ`, then 1.
    Lower,
    /// 1 up to `1 - σ`, ramping to `1/α` at 1.
    Upper,
}

/// Exact grid values of a test function. `param` must be a grid point; lower tests need
/// `0 < δ ≤ 1`, upper tests `0 < σ < 1` (`σ = 0` would be discontinuous).
pub fn test_function_exact(
    kind: TestKind,
    param: Rational,
    spec: &SubspaceSpec,
    grid: Grid,
) -> Result<Vec<Rational>> {
    let j = grid
        .index_of(&param)
        .ok_or_else(|| Error::OutOfRange(format!("test parameter {param} is not a grid point")))?;
    let m = grid.m();
    let alpha = spec.alpha();
    let one = Rational::one();
    match kind {
        TestKind::Lower => {
            if j == 0 {
                return Err(Error::OutOfRange("lower test needs delta > 0".into()));
            }
            Ok((0..=m)
                .map(|i| {
                    if i >= j {
                        one
                    } else {
                        alpha + (one - alpha) * rat(i as i128, j as i128)
                    }
                })
                .collect())
        }
        TestKind::Upper => {
            if j == 0 || j >= m {
                return Err(Error::OutOfRange(format!(
                    "upper test needs 0 < sigma < 1, got {param}"
                )));
            }
            let top = alpha.recip();
            let start = m - j;
            Ok((0..=m)
                .map(|i| {
                    if i <= start {
                        one
                    } else {
                        one + (top - one) * rat((i - start) as i128, j as i128)
                    }
                })
                .collect())
        }
    }
}

pub fn test_function(
    kind: TestKind,
    param: Rational,
    spec: &SubspaceSpec,
    grid: Grid,
) -> Result<SampledFunction> {
    let exact = test_function_exact(kind, param, spec, grid)?;
    SampledFunction::new(grid, exact.iter().map(to_f64).collect())
}

/// A few subspace members used to probe linearity: hats at interior grid points and the
/// lower test ramp over the whole interval.
fn spanning_probe(spec: &SubspaceSpec, grid: Grid) -> Vec<SampledFunction> {
    let m = grid.m();
    let mut out = vec![test_function(TestKind::Lower, Rational::one(), spec, grid).expect("delta = 1")];
    for c in [m / 4, m / 2, 3 * m / 4].into_iter().filter(|&c| c > 0 && c < m) {
        out.push(SampledFunction::from_fn(grid, |x| {
            (1.0 - (x - grid.point(c)).abs() * m as f64).max(0.0)
        }));
    }
    out
}

/// Canonical unital extension `f = λ + g ↦ λ + φ(g)` of a linear map on the subspace.
pub struct Extension<F> {
    phi: F,
    spec: SubspaceSpec,
}

pub fn extend_map<F>(phi: F, spec: SubspaceSpec, grid: Grid) -> Result<Extension<F>>
where
    F: Fn(&SampledFunction) -> SampledFunction,
{
    let probes = spanning_probe(&spec, grid);
    let coeffs = [1.5, -0.75, 2.0, 0.5];
    let mut combo = SampledFunction::constant(grid, 0.0);
    let mut expected = SampledFunction::constant(grid, 0.0);
    let mut scale = 1.0f64;
    for (p, c) in probes.iter().zip(coeffs) {
        let image = phi(p);
        scale = scale.max(image.sup_norm());
        combo = combo.add(&p.scale(c))?;
        expected = expected.add(&image.scale(c))?;
    }
    let defect = crate::interval::sup_distance(&phi(&combo), &expected)?;
    let zero = phi(&SampledFunction::constant(grid, 0.0)).sup_norm();
    let defect = defect.max(zero);
    if defect > 1e-9 * scale {
        return Err(Error::Nonlinear { defect });
    }
    Ok(Extension { phi, spec })
}

impl<F> Extension<F>
where
    F: Fn(&SampledFunction) -> SampledFunction,
{
    pub fn apply(&self, f: &SampledFunction) -> SampledFunction {
        let (lambda, g) = decompose(f, &self.spec);
        (self.phi)(&g).shift(lambda)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendibilityWitness {
    pub kind: TestKind,
    #[serde(with = "serde_rational")]
    pub param: Rational,
    pub y: f64,
    pub value: f64,
    #[serde(skip)]
    pub function: SampledFunction,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendibilityReport {
    pub extendible: bool,
    /// `inf` of `φ(γ_σ)(y)` over the swept upper tests and grid `y`.
    pub upper_inf: f64,
    /// `sup` of `φ(e_δ)(y)` over the swept lower tests and grid `y`.
    pub lower_sup: f64,
    /// Parameters are swept on the grid, so the extremes are bracketed to within one step.
    pub parameter_step: f64,
    pub witness: Option<ExtendibilityWitness>,
}

/// Sweeps lower tests over `δ = 1/M..1` and upper tests over `σ = 1/M..(M-1)/M`.
pub fn check_extendibility<F>(phi: F, spec: &SubspaceSpec, grid: Grid) -> Result<ExtendibilityReport>
where
    F: Fn(&SampledFunction) -> SampledFunction,
{
    const TOL: f64 = 1e-12;
    let m = grid.m() as i128;
    let mut upper_inf = f64::INFINITY;
    let mut lower_sup = f64::NEG_INFINITY;
    let mut worst: Option<(f64, ExtendibilityWitness)> = None;
    let consider = |kind: TestKind, j: i128, worst: &mut Option<(f64, ExtendibilityWitness)>| -> Result<(usize, f64)> {
        let param = rat(j, m);
        let t = test_function(kind, param, spec, grid)?;
        let image = phi(&t);
        let (idx, violation, value) = match kind {
            TestKind::Lower => {
                let (i, v) = image
                    .values()
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
                (i, v - 1.0, v)
            }
            TestKind::Upper => {
                let (i, v) = image.min_value();
                (i, 1.0 - v, v)
            }
        };
        if violation > TOL && worst.as_ref().map_or(true, |(w, _)| violation > *w) {
            *worst = Some((
                violation,
                ExtendibilityWitness {
                    kind,
                    param,
                    y: grid.point(idx),
                    value,
                    function: t,
                },
            ));
        }
        Ok((idx, value))
    };
    for j in 1..=m {
        let (_, v) = consider(TestKind::Lower, j, &mut worst)?;
        lower_sup = lower_sup.max(v);
    }
    for j in 1..m {
        let (_, v) = consider(TestKind::Upper, j, &mut worst)?;
        upper_inf = upper_inf.min(v);
    }
    Ok(ExtendibilityReport {
        extendible: worst.is_none(),
        upper_inf,
        lower_sup,
        parameter_step: 1.0 / m as f64,
        witness: worst.map(|(_, w)| w),
    })
}

/// The norm-one map `φ(g)(x) = g(x₀)(a + kx)/(a + k)`, positive on the subspace.
pub fn point_evaluation_map(
    spec: SubspaceSpec,
    x0: f64,
) -> impl Fn(&SampledFunction) -> SampledFunction {
    move |g: &SampledFunction| {
        let v = g.eval(x0);
        let (a, k) = (spec.a() as f64, spec.k() as f64);
        SampledFunction::from_fn(g.grid(), |x| v * (a + k * x) / (a + k))
    }
}

/// The function `f` with `f = 0` on `[0, x₀]` and `f(x) = k(x-1)/(1-x₀) + k` after, whose
/// extended image under [`point_evaluation_map`] is `ak(x-1)/(a+k)`.
pub fn remark_function(spec: &SubspaceSpec, x0: f64, grid: Grid) -> SampledFunction {
    let k = spec.k() as f64;
    SampledFunction::from_fn(grid, |x| {
        if x <= x0 {
            0.0
        } else {
            k * (x - 1.0) / (1.0 - x0) + k
        }
    })
}
