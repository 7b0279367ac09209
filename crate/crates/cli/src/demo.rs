//! Worked examples and full runs. Every library operation called along the way is recorded in
//! `ops.json` as `{op: [demos]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use clap::ValueEnum;
use markov_mimic::certify::{boundary_tally, certify, certify_boundary, snapshot_oracle, sup_error};
use markov_mimic::construct::{
    approximate, assemble_family, build_coefficients, build_profile, choose_delta, interleave_coefficients,
    project, select_indices_cross, select_indices_same, snap_endpoints, ApproxOptions, DeltaInputs, Mode,
};
use markov_mimic::error::StageExt;
use markov_mimic::interval::rational::{lcm_all, to_f64};
use markov_mimic::interval::{
    dense_points, make_partition, modulus_delta, rat, sup_distance, Grid, Rational, SampledFunction,
};
use markov_mimic::io::write_json;
use markov_mimic::markov::{concentration_check, induced_ratio, MarkovKernel};
use markov_mimic::relations::{
    boundary_count_identity, check_relations, feasibility, r_from_s, rational_snapshot, select_modulus_n1,
    CellMasses, EndpointCounts, Feasibility,
};
use markov_mimic::subspace::{
    check_extendibility, decompose, extend_map, point_evaluation_map, realize_integers, remark_function,
    test_function, SubspaceSpec, TestKind,
};
use serde_json::{json, Value};

use crate::commands::{summary, write_build, write_plots};
use crate::{CliError, Common};

const DEMO_GRID: usize = 400;
const EPS_THEOREM1: f64 = 0.05;
const EPS_THEOREM2: f64 = 0.1;
const PROBES: usize = 16;
const EXACT_TOL: f64 = 1e-12;
const ORACLE_MAX_DEN: i128 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum DemoName {
    Example1,
    Example2,
    Example3,
    RemarkExtendibility,
    Theorem1,
    Theorem2,
    All,
}

impl DemoName {
    fn label(self) -> &'static str {
        match self {
            DemoName::Example1 => "example1",
            DemoName::Example2 => "example2",
            DemoName::Example3 => "example3",
            DemoName::RemarkExtendibility => "remark-extendibility",
            DemoName::Theorem1 => "theorem1",
            DemoName::Theorem2 => "theorem2",
            DemoName::All => "all",
        }
    }
}

/// Stages run inside `approximate`.
const PIPELINE_OPS: &[&str] = &[
    "validate_kernel",
    "feasibility",
    "realize_integers",
    "induced_ratio",
    "modulus_delta",
    "dense_points",
    "make_partition",
    "build_coefficients",
    "rational_snapshot",
    "snap_endpoints",
    "interleave_coefficients",
    "choose_delta",
    "select_modulus_N1",
    "build_profile",
    "select_indices_same",
    "select_indices_cross",
    "assemble_family",
    "sup_error",
    "boundary_tally",
    "certify_boundary",
    "apply",
];

#[derive(Default)]
struct Ops {
    current: &'static str,
    seen: BTreeMap<&'static str, BTreeSet<&'static str>>,
}

impl Ops {
    fn hit(&mut self, names: &[&'static str]) {
        for n in names {
            self.seen.entry(n).or_default().insert(self.current);
        }
    }
}

struct Ctx<'a> {
    grid: Grid,
    seed: u64,
    eps: Option<f64>,
    dir: &'a Path,
    ops: Ops,
}

struct Outcome {
    passed: bool,
    detail: Value,
}

fn half() -> SubspaceSpec {
    SubspaceSpec::new(rat(1, 2)).expect("1/2 is admissible")
}

fn thm_fs(g: Grid) -> Vec<SampledFunction> {
    vec![
        SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0),
        SampledFunction::from_fn(g, |x| (1.0 + x * x) / 2.0),
    ]
}

fn tol(g: Grid) -> f64 {
    2.0 / g.m() as f64
}

fn example1(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    cx.ops.hit(&["from_composition", "validate_kernel", "apply", "sup_distance", "endpoint_measures"]);
    let kernel = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x))?;
    let valid = kernel.validate();
    let f = SampledFunction::from_fn(g, |x| (1.0 + x) / 2.0);
    let expected = SampledFunction::from_fn(g, |x| (1.0 + x * x) / 2.0);
    let dist = sup_distance(&kernel.apply(&f)?, &expected)?;
    let (mu0, mu1) = kernel.endpoint_measures();
    cx.ops.hit(&["concentration_check", "induced_ratio"]);
    let conc = concentration_check(&kernel, &half())?;
    let ratio = induced_ratio(&kernel, &half(), PROBES, cx.seed)?;
    println!("  T(f) = f(x^2): kernel valid {}, |T(f) - f(x^2)| = {dist:e}", valid.pass);
    println!(
        "  mu_0({{0}}) = {}, mu_1({{1}}) = {}, induced ratio {:.6}",
        mu0.weights()[0],
        mu1.weights()[g.m()],
        ratio.beta
    );
    let passed = valid.pass
        && dist < EXACT_TOL
        && conc.mass0 == 1.0
        && conc.mass1 == 1.0
        && conc.witness.is_none()
        && (ratio.beta - 0.5).abs() <= tol(g);
    Ok(Outcome {
        passed,
        detail: json!({
            "kernel": valid,
            "apply_error": dist,
            "concentration": conc,
            "induced_ratio": ratio,
        }),
    })
}

fn example2(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    cx.ops.hit(&["from_weighted_compositions", "validate_kernel", "endpoint_measures"]);
    let kernel = MarkovKernel::from_weighted_compositions(
        &[SampledFunction::from_fn(g, |x| x), SampledFunction::from_fn(g, |x| 1.0 - x)],
        &[SampledFunction::constant(g, 3.0), SampledFunction::constant(g, 1.0)],
    )?;
    let valid = kernel.validate();
    let (mu0, _) = kernel.endpoint_measures();
    let row0 = (mu0.weights()[0], mu0.weights()[g.m()]);
    cx.ops.hit(&["induced_ratio", "realize_integers", "concentration_check", "feasibility"]);
    let ratio = induced_ratio(&kernel, &half(), PROBES, cx.seed)?;
    let re = realize_integers(rat(1, 2), rat(5, 7))?;
    let conc = concentration_check(&kernel, &half())?;
    let feasible = feasibility(rat(1, 2), rat(5, 7)) == Feasibility::Feasible;
    println!("  T(f) = (3 f + f(1-x))/4: row at 0 = {} d_0 + {} d_1", row0.0, row0.1);
    println!(
        "  induced ratio {:.6} (5/7 = {:.6}), (a, k, b) = ({}, {}, {})",
        ratio.beta,
        5.0 / 7.0,
        re.a,
        re.k,
        re.b
    );
    if let Some(w) = &conc.witness {
        println!("  not concentrated: {:?} test at {} has defect {:.6}", w.kind, w.param, w.defect);
    }
    let passed = valid.pass
        && row0 == (0.75, 0.25)
        && (ratio.beta - 5.0 / 7.0).abs() <= tol(g)
        && (re.a, re.k, re.b) == (2, 2, 5)
        && conc.witness.is_some()
        && feasible;
    Ok(Outcome {
        passed,
        detail: json!({
            "kernel": valid,
            "row_at_zero": [row0.0, row0.1],
            "induced_ratio": ratio,
            "realization": re,
            "concentration": conc,
        }),
    })
}

fn example3(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    let spec = SubspaceSpec::from_integers(1, 1)?;
    cx.ops.hit(&["from_weighted_compositions", "validate_kernel", "induced_ratio"]);
    let kernel = MarkovKernel::example3(g, &spec, 3.0, 1.0)?;
    let valid = kernel.validate();
    let ratio = induced_ratio(&kernel, &spec, PROBES, cx.seed)?;
    println!(
        "  three-map kernel valid {}; induced ratio {:.6} with spread {:e}",
        valid.pass, ratio.beta, ratio.defect
    );
    Ok(Outcome {
        passed: valid.pass && ratio.defect <= tol(g),
        detail: json!({ "kernel": valid, "induced_ratio": ratio }),
    })
}

fn remark(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    let spec = SubspaceSpec::from_integers(1, 1)?;
    cx.ops.hit(&["check_extendibility", "extend_map", "decompose", "test_function"]);
    let phi = point_evaluation_map(spec, 0.5);
    let report = check_extendibility(&phi, &spec, g)?;
    let ext = extend_map(&phi, spec, g)?;
    let f = remark_function(&spec, 0.5, g);
    let (lambda, _) = decompose(&f, &spec);
    let image = ext.apply(&f);
    let (at, min) = image.min_value();
    let expected = -((spec.a() * spec.k()) as f64) / ((spec.a() + spec.k()) as f64);
    let witness = report.witness.as_ref();
    let recheck = match witness {
        Some(w) => {
            let t = test_function(w.kind, w.param, &spec, g)?;
            let v = phi(&t).eval(w.y);
            (v - w.value).abs() < EXACT_TOL
        }
        None => false,
    };
    let endpoint = |gf: &SampledFunction| {
        let v = gf.last();
        SampledFunction::from_fn(gf.grid(), |x| v * (0.5 + 0.5 * x))
    };
    let control = check_extendibility(endpoint, &spec, g)?;
    if let Some(w) = witness {
        let kind = match w.kind {
            TestKind::Lower => "lower",
            TestKind::Upper => "upper",
        };
        println!(
            "  phi(g)(x) = g(1/2)(1 + x)/2 is not extendible: {kind} test at {} gives {:.6} at y = {}",
            w.param, w.value, w.y
        );
    }
    println!("  extended image minimum {min:.6} at x = {} (expected {expected})", g.point(at));
    println!("  the x0 = 1 variant is extendible: {}", control.extendible);
    let passed = !report.extendible
        && recheck
        && at == 0
        && (min - expected).abs() <= 1.0 / g.m() as f64
        && control.extendible;
    Ok(Outcome {
        passed,
        detail: json!({
            "report": report,
            "decomposition_lambda": lambda,
            "image_minimum": min,
            "image_argmin": g.point(at),
            "expected_minimum": expected,
            "control": control,
        }),
    })
}

fn theorem1(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    let eps = cx.eps.unwrap_or(EPS_THEOREM1);
    let kernel = MarkovKernel::from_composition(&SampledFunction::from_fn(g, |x| x * x))?;
    let fs = thm_fs(g);
    cx.ops.hit(&["from_composition", "approximate"]);
    cx.ops.hit(PIPELINE_OPS);
    let opts = ApproxOptions { seed: cx.seed, verify: false, ..ApproxOptions::default() };
    let out = approximate(&kernel, &fs, eps, rat(1, 2), rat(1, 2), opts)?;
    let dir = cx.dir.join("theorem1");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(e.into()))?;
    write_build(&dir, "family", &out)?;
    write_plots(&dir, &kernel, &out.family, &fs)?;
    let d = select_indices_same(out.family.n1, out.report.delta)?;
    println!("  {}", summary(&out.certificate));
    Ok(Outcome {
        passed: out.certificate.passed() && d.len() == out.family.n,
        detail: json!({ "certificate": out.certificate, "report": out.report }),
    })
}

fn counts(v: &[Rational], scale: i128) -> EndpointCounts {
    let c: Vec<i128> = v.iter().map(|x| (x * scale).to_integer()).collect();
    let n = c.len();
    EndpointCounts {
        at_zero: c[0],
        at_one: c[n - 1],
        interior: c[1..n - 1].to_vec(),
    }
}

/// Runs each stage by hand, then compares with `approximate`.
fn theorem2(cx: &mut Ctx) -> Result<Outcome, CliError> {
    let g = cx.grid;
    let eps = cx.eps.unwrap_or(EPS_THEOREM2);
    let (alpha, beta) = (rat(1, 2), rat(5, 7));
    let spec = half();
    let kernel = MarkovKernel::example2(g, 3.0, 1.0)?;
    let fs: Vec<SampledFunction> = thm_fs(g).iter().map(|f| project(f, &spec)).collect();
    let sup = fs.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
    let quarter = eps / 4.0;
    cx.ops.hit(&[
        "realize_integers",
        "modulus_delta",
        "dense_points",
        "make_partition",
        "build_coefficients",
        "check_relations",
        "rational_snapshot",
        "snap_endpoints",
        "interleave_coefficients",
        "choose_delta",
        "select_modulus_N1",
        "build_profile",
        "select_indices_cross",
        "assemble_family",
        "sup_error",
        "boundary_tally",
        "certify_boundary",
    ]);
    let re = realize_integers(alpha, beta).stage("feasibility")?;
    let delta0 = modulus_delta(&fs, quarter).stage("modulus")?;
    let partition = make_partition(&dense_points(delta0, g)?, g, delta0).stage("partition")?;
    let n = partition.n();
    let field = build_coefficients(&kernel, &partition).stage("coefficients")?;
    let step1 = field.check_bound(&kernel, &fs, quarter).stage("coefficients")?;
    let masses = CellMasses::from_kernel(&kernel, &partition)?;
    let residual = check_relations(&masses, alpha, beta).max();
    let eta = rat(1, (4.0 * sup / (quarter - step1)).ceil().max(1.0) as i128);
    let snapshot = rational_snapshot(&masses, eta, alpha, beta).stage("snapshot")?;
    let snapped = snap_endpoints(&field, &snapshot, quarter - step1, sup).stage("snapshot")?;
    let schedule = interleave_coefficients(&snapped).stage("schedule")?;
    let delta = choose_delta(DeltaInputs {
        mode: Mode::Cross,
        eps,
        sup,
        n,
        realization: re,
        snapshot: &snapshot,
        cap: options_cap(),
    })?;
    let n1 = select_modulus_n1(delta, delta0, &snapshot.denominators(), options_cap())?;
    let profile = build_profile(&schedule, delta);
    let selection = select_indices_cross(&snapshot, n1, delta, &re)?;
    let exclusions = (selection.exclusions.boundary_residual(&re), selection.exclusions.interior_residual(&re));
    let reps: Vec<Rational> = (0..n).map(|i| partition.rep_exact(i)).collect();
    let family = assemble_family(profile, n1, delta0, reps, selection.into())?;
    let err = sup_error(&kernel, &family, &fs)?;
    let tally = boundary_tally(&family)?;
    let exact = certify_boundary(&tally, alpha, beta);
    println!(
        "  by hand: {n} cells, relation residual {residual:e}, delta = {delta}, N1 = {n1}, N = {}",
        family.n
    );
    println!(
        "  sup_error {err:.6} < {eps}, boundary exact {exact}, exclusion residuals {}/{}",
        exclusions.0, exclusions.1
    );

    cx.ops.hit(&["approximate"]);
    cx.ops.hit(PIPELINE_OPS);
    let opts = ApproxOptions { seed: cx.seed, verify: false, ..ApproxOptions::default() };
    let out = approximate(&kernel, &fs, eps, alpha, beta, opts)?;
    let dir = cx.dir.join("theorem2");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(e.into()))?;
    write_build(&dir, "family", &out)?;
    write_plots(&dir, &kernel, &out.family, &fs)?;
    let same = out.family.n == family.n && out.family.n1 == n1;
    let by_hand = certify(&kernel, &family, &fs, eps, alpha, beta)?;
    println!("  approximate: {} (matches by hand: {same})", summary(&out.certificate));

    let oracle = oracle_check(cx)?;
    let passed = err < eps
        && exact
        && exclusions == (0, 0)
        && same
        && by_hand == out.certificate
        && out.certificate.passed()
        && oracle.0;
    Ok(Outcome {
        passed,
        detail: json!({
            "certificate": out.certificate,
            "report": out.report,
            "by_hand": { "sup_error": err, "boundary_ok": exact, "N": family.n, "N1": n1 },
            "exclusion_residuals": [exclusions.0, exclusions.1],
            "oracle": oracle.1,
        }),
    })
}

fn options_cap() -> u64 {
    ApproxOptions::default().cap_n1
}

/// A three-cell snapshot compared with the exhaustive oracle and the count identity.
fn oracle_check(cx: &mut Ctx) -> Result<(bool, Value), CliError> {
    let (alpha, beta) = (rat(1, 2), rat(5, 7));
    cx.ops.hit(&["rational_snapshot", "snapshot_oracle", "boundary_count_identity"]);
    let s = vec![rat(1, 4), rat(1, 4), rat(1, 2)];
    let r = r_from_s(&s, alpha, beta);
    let masses = CellMasses::from_exact(&r, &s)?;
    let eta = rat(1, 10);
    let snap = rational_snapshot(&masses, eta, alpha, beta)?;
    let found = snapshot_oracle(&masses, alpha, beta, eta, ORACLE_MAX_DEN)?;
    let scale = lcm_all(snap.denominators());
    let identity = boundary_count_identity(&counts(&snap.r, scale), &counts(&snap.s, scale), alpha, beta);
    println!(
        "  oracle: {} snapshots with denominators <= {ORACLE_MAX_DEN}; count identity at scale {scale}: {identity}",
        found.len()
    );
    let fmt = |v: &[Rational]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    Ok((
        !found.is_empty() && identity,
        json!({
            "r": fmt(&snap.r),
            "s": fmt(&snap.s),
            "oracle_count": found.len(),
            "identity": identity,
            "r1_minus_mu0": snap.deviation.r1_minus_mu0,
            "mu0_first": to_f64(&r[0]),
        }),
    ))
}

pub fn run(name: DemoName, common: &Common) -> Result<(), CliError> {
    let grid = Grid::new(common.grid.unwrap_or(DEMO_GRID)).map_err(|e| crate::config::ConfigError {
        field: "--grid".into(),
        message: e.to_string(),
    })?;
    std::fs::create_dir_all(&common.out_dir).map_err(|e| CliError::Io(e.into()))?;
    let mut cx = Ctx {
        grid,
        seed: common.seed.unwrap_or(0),
        eps: common.eps,
        dir: &common.out_dir,
        ops: Ops::default(),
    };
    let names: Vec<DemoName> = match name {
        DemoName::All => DemoName::value_variants().iter().copied().filter(|d| *d != DemoName::All).collect(),
        d => vec![d],
    };
    let mut results = BTreeMap::new();
    let mut failed = Vec::new();
    for d in names {
        println!("{}", d.label());
        cx.ops.current = d.label();
        cx.ops.hit(&["run"]);
        let out = match d {
            DemoName::Example1 => example1(&mut cx),
            DemoName::Example2 => example2(&mut cx),
            DemoName::Example3 => example3(&mut cx),
            DemoName::RemarkExtendibility => remark(&mut cx),
            DemoName::Theorem1 => theorem1(&mut cx),
            DemoName::Theorem2 => theorem2(&mut cx),
            DemoName::All => unreachable!(),
        }?;
        println!("  {}", if out.passed { "ok" } else { "FAILED" });
        if !out.passed {
            failed.push(d.label());
        }
        write_json(&cx.dir.join(format!("{}.json", d.label())), &json!({ "passed": out.passed, "detail": out.detail }))
            .map_err(CliError::Io)?;
        results.insert(d.label(), out.passed);
    }
    write_json(&cx.dir.join("ops.json"), &json!({ "ops": cx.ops.seen, "demos": results })).map_err(CliError::Io)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Certificate(format!("demo checks failed: {}", failed.join(", "))))
    }
}

