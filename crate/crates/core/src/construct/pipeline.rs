use num_traits::{Signed, Zero};
use serde::Serialize;

use super::coefficients::{build_coefficients, concentrated_snapshot, snap_endpoints, unit_eta};
use super::family::{assemble_family, EigenvalueFamily, Selection};
use super::profile::build_profile;
use super::schedule::{interleave_coefficients, same_schedule};
use super::select::{select_indices_cross, select_indices_same};
use crate::certify::{certify, Certificate};
use crate::error::{Error, Result, StageExt};
use crate::interval::rational::to_f64;
use crate::interval::{dense_points, make_partition, modulus_delta, rat, Rational, SampledFunction};
use crate::markov::{induced_ratio, MarkovKernel};
use crate::relations::{feasibility, rational_snapshot, select_modulus_n1, CellMasses, Feasibility, RationalSnapshot};
use crate::subspace::{realize_integers, Realization, SubspaceSpec};

pub const DEFAULT_CAP_N1: u64 = 10_000_000;
pub const DEFAULT_CAP_DENOMINATOR: i128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Same,
    Cross,
}

#[derive(Debug, Clone, Copy)]
pub struct ApproxOptions {
    /// Multiplies the selected `N₁`.
    pub n1_multiplier: u64,
    pub cap_n1: u64,
    /// Largest snapshot denominator accepted.
    pub cap_denominator: i128,
    /// Return an error carrying the certificate when it fails.
    pub verify: bool,
    pub seed: u64,
    pub probes: usize,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self {
            n1_multiplier: 1,
            cap_n1: DEFAULT_CAP_N1,
            cap_denominator: DEFAULT_CAP_DENOMINATOR,
            verify: true,
            seed: 0,
            probes: 16,
        }
    }
}

/// Everything chosen along the way.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub mode: Mode,
    #[serde(with = "crate::interval::rational::serde_rational")]
    pub alpha: Rational,
    #[serde(with = "crate::interval::rational::serde_rational")]
    pub beta: Rational,
    pub realization: Realization,
    pub induced_beta: f64,
    pub eps: f64,
    pub sup_norm: f64,
    #[serde(with = "crate::interval::rational::serde_rational")]
    pub delta0: Rational,
    pub cells: usize,
    pub step1_error: f64,
    pub snapshot: RationalSnapshot,
    #[serde(with = "crate::interval::rational::serde_rational")]
    pub delta: Rational,
    #[serde(rename = "N1")]
    pub n1: u64,
    #[serde(rename = "N")]
    pub n: u64,
}

#[derive(Debug, Clone)]
pub struct Approximation {
    pub family: EigenvalueFamily,
    pub certificate: Certificate,
    pub report: BuildReport,
}

/// Smallest `m` with `1/m < 1/v`, allowing for rounding in `v`.
fn strict_floor(v: f64) -> u64 {
    (v * (1.0 + 1e-9)).floor() as u64 + 1
}

/// Smallest `m` with `1/m ≤ 1/v`.
fn loose_ceil(v: f64) -> u64 {
    (v * (1.0 - 1e-9)).ceil().max(1.0) as u64
}

/// `c δ < x` (strict) or `c δ ≤ x` with `δ = 1/m`: the smallest admissible `m`.
fn mass_bound(c: i128, x: Rational, strict: bool, what: &str) -> Result<u64> {
    if c == 0 {
        return Ok(1);
    }
    if !x.is_positive() {
        return Err(Error::NoFeasibleDelta {
            cap: 0,
            detail: format!("{what}: mass {x} leaves no room"),
        });
    }
    let v = Rational::from_integer(c) / x;
    let m = if strict { v.floor().to_integer() + 1 } else { v.ceil().to_integer() };
    Ok(m.max(1) as u64)
}

/// Inputs to [`choose_delta`].
#[derive(Debug, Clone, Copy)]
pub struct DeltaInputs<'a> {
    pub mode: Mode,
    pub eps: f64,
    pub sup: f64,
    pub n: usize,
    pub realization: Realization,
    pub snapshot: &'a RationalSnapshot,
    pub cap: u64,
}

/// Largest `δ = 1/m` meeting the error and plateau-width constraints of the mode.
pub fn choose_delta(inp: DeltaInputs<'_>) -> Result<Rational> {
    let DeltaInputs {
        mode,
        eps,
        sup,
        n,
        realization: re,
        snapshot,
        cap,
    } = inp;
    if !(eps > 0.0) || n < 2 {
        return Err(Error::OutOfRange(format!("choose_delta needs eps > 0 and n >= 2, got {eps}, {n}")));
    }
    let sup = sup.max(f64::MIN_POSITIVE);
    let mut m: u64 = 3;
    let mut bump = |v: u64| m = m.max(v);
    let (a, k, b) = (re.a, re.k, re.b);
    match mode {
        Mode::Same => {
            bump(strict_floor(16.0 * n as f64 * sup / eps));
            bump(loose_ceil(20.0 * sup / eps));
        }
        Mode::Cross => {
            let tau = snapshot.tau() as i128;
            let (r, s) = (&snapshot.r, &snapshot.s);
            let last = n - 1;
            bump(strict_floor(32.0 * n as f64 * sup / eps));
            bump(loose_ceil(16.0 * (1 + tau) as f64 * ((b + k) * b) as f64 * sup / eps));
            let interior = (1..last).filter(|&i| r[i].is_positive());
            if r[last].is_zero() {
                for i in interior {
                    bump(mass_bound(3 * b * (b - a), r[i], false, "interior cell")?);
                }
                bump(mass_bound(3 * (a + k) * b * tau, r[0], false, "first cell")?);
                bump(mass_bound(3 * (b + k) * a * tau, s[last], false, "last cell")?);
                if tau == 0 {
                    bump(mass_bound(2 * a * (b + k), s[last], false, "last cell")?);
                    bump(mass_bound(2 * (b - a) * (b + k), s[0], false, "first cell")?);
                }
            } else {
                for i in interior {
                    bump(mass_bound(3 * b * (b - a), r[i], true, "interior cell")?);
                }
                bump(mass_bound(3 * b * (b - a), r[last], true, "last cell")?);
                bump(mass_bound(3 * (a + k) * (b + b * tau), r[0], true, "first cell")?);
                bump(mass_bound(3 * (b + k) * (a * tau + b), s[last], true, "last cell")?);
                bump(mass_bound(
                    2 * (a * b * tau + a * k * tau + b * k + a * b),
                    s[last] - r[last],
                    false,
                    "last cell slack",
                )?);
            }
        }
    }
    if m > cap {
        return Err(Error::NoFeasibleDelta {
            cap,
            detail: format!("constraints need delta <= 1/{m}"),
        });
    }
    Ok(rat(1, m as i128))
}

/// `g(x) = f(x) + (α f(1) − f(0))(1 − x)`, a member of `C[0,1]_α` agreeing with `f` at 1.
pub fn project(f: &SampledFunction, spec: &SubspaceSpec) -> SampledFunction {
    let c = spec.alpha_f64() * f.last() - f.first();
    let grid = f.grid();
    let mut values: Vec<f64> = f
        .values()
        .iter()
        .zip(grid.points())
        .map(|(v, x)| v + c * (1.0 - x))
        .collect();
    values[0] = spec.alpha_f64() * f.last();
    SampledFunction::new(grid, values).expect("grid length")
}

/// Runs the whole construction: an average of eigenvalue maps within `eps` of the kernel on
/// `fs`, carrying `C[0,1]_α` into `C[0,1]_β` in the same ratio as the kernel.
pub fn approximate(
    kernel: &MarkovKernel,
    fs: &[SampledFunction],
    eps: f64,
    alpha: Rational,
    beta: Rational,
    opts: ApproxOptions,
) -> Result<Approximation> {
    let grid = kernel.grid();
    let spec = SubspaceSpec::new(alpha).stage("validate")?;
    SubspaceSpec::new(beta).stage("validate")?;
    if fs.is_empty() || !(eps > 0.0) {
        return Err(Error::OutOfRange("need a nonempty function family and eps > 0".into())).stage("validate");
    }
    for (i, f) in fs.iter().enumerate() {
        grid.check_same(&f.grid()).stage("validate")?;
        if !spec.is_member(f) {
            return Err(Error::OutOfRange(format!(
                "function {i} is not in the subspace: |f(0) - alpha f(1)| = {:e}",
                spec.defect(f)
            )))
            .stage("validate");
        }
    }
    let report = kernel.validate();
    if !report.pass {
        return Err(Error::InvalidKernel {
            row_sum: report.max_row_sum_deviation,
            negative: report.most_negative,
        })
        .stage("validate");
    }
    if let Feasibility::Infeasible { forcing } = feasibility(alpha, beta) {
        return Err(Error::Infeasible { alpha, beta, forcing }).stage("feasibility");
    }
    let re = realize_integers(alpha, beta).stage("feasibility")?;
    let ratio = induced_ratio(kernel, &spec, opts.probes, opts.seed).stage("induced_ratio")?;
    let tol = 2.0 / grid.m() as f64;
    if (ratio.beta - to_f64(&beta)).abs() > tol || ratio.defect > tol {
        return Err(Error::NotPreserving(format!(
            "induced ratio {} (spread {:e}) differs from beta = {beta}",
            ratio.beta, ratio.defect
        )))
        .stage("induced_ratio");
    }
    let mode = if alpha == beta { Mode::Same } else { Mode::Cross };
    let sup = fs.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
    let quarter = eps / 4.0;

    let delta0 = modulus_delta(fs, quarter).stage("modulus")?;
    let points = dense_points(delta0, grid).stage("partition")?;
    let partition = make_partition(&points, grid, delta0).stage("partition")?;
    let n = partition.n();
    let field = build_coefficients(kernel, &partition).stage("coefficients")?;
    let step1 = field.check_bound(kernel, fs, quarter).stage("coefficients")?;
    let slack = quarter - step1;

    let masses = CellMasses::from_kernel(kernel, &partition).stage("snapshot")?;
    let snapshot = match mode {
        Mode::Same => {
            if masses.mu0[0] < 1.0 - 1e-9 || masses.mu1[n - 1] < 1.0 - 1e-9 {
                return Err(Error::NotPreserving(format!(
                    "endpoint measures are not concentrated: mu_0(X_1) = {}, mu_1(X_n) = {}",
                    masses.mu0[0],
                    masses.mu1[n - 1]
                )))
                .stage("snapshot");
            }
            concentrated_snapshot(n, unit_eta())
        }
        Mode::Cross => {
            let eta = rat(1, (4.0 * sup / slack).ceil().max(1.0) as i128);
            rational_snapshot(&masses, eta, alpha, beta).stage("snapshot")?
        }
    };
    if let Some(d) = snapshot.denominators().into_iter().find(|d| *d > opts.cap_denominator) {
        return Err(Error::EtaTooLarge {
            eta: snapshot.eta,
            detail: format!("snapshot denominator {d} exceeds the cap {}", opts.cap_denominator),
        })
        .stage("snapshot");
    }
    let snapped = snap_endpoints(&field, &snapshot, slack, sup).stage("snapshot")?;
    snapped.check_bound(kernel, fs, quarter).stage("snapshot")?;
    let schedule = match mode {
        Mode::Same => same_schedule(&snapped),
        Mode::Cross => interleave_coefficients(&snapped),
    }
    .stage("schedule")?;

    let delta = choose_delta(DeltaInputs {
        mode,
        eps,
        sup,
        n,
        realization: re,
        snapshot: &snapshot,
        cap: opts.cap_n1,
    })
    .stage("choose_delta")?;
    let base = select_modulus_n1(delta, delta0, &snapshot.denominators(), opts.cap_n1).stage("select_n1")?;
    let n1 = base
        .checked_mul(opts.n1_multiplier.max(1))
        .filter(|v| *v <= opts.cap_n1)
        .ok_or(Error::CapExceeded {
            n1: base as u128 * opts.n1_multiplier as u128,
            cap: opts.cap_n1,
        })
        .stage("select_n1")?;

    let profile = build_profile(&schedule, delta);
    let selection: Selection = match mode {
        Mode::Same => Selection::same(select_indices_same(n1, delta).stage("selection")?, 0, n - 1),
        Mode::Cross => select_indices_cross(&snapshot, n1, delta, &re).stage("selection")?.into(),
    };
    let reps: Vec<Rational> = (0..n).map(|i| partition.rep_exact(i)).collect();
    let family = assemble_family(profile, n1, delta0, reps, selection).stage("assemble")?;

    let certificate = certify(kernel, &family, fs, eps, alpha, beta).stage("certify")?;
    if opts.verify && !certificate.passed() {
        return Err(Error::CertificateFailed(Box::new(certificate))).stage("certify");
    }
    let report = BuildReport {
        mode,
        alpha,
        beta,
        realization: re,
        induced_beta: ratio.beta,
        eps,
        sup_norm: sup,
        delta0,
        cells: n,
        step1_error: step1,
        snapshot,
        delta,
        n1,
        n: family.n,
    };
    Ok(Approximation {
        family,
        certificate,
        report,
    })
}
