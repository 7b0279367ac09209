use std::path::{Path, PathBuf};

use markov_mimic::certify::{averages, certify, certify_family, Certificate};
use markov_mimic::construct::{approximate, ApproxOptions, Approximation, EigenvalueFamily};
use markov_mimic::error::StageExt;
use markov_mimic::interval::{dense_points, make_partition, modulus_delta, parse_rational, rat, Grid, Rational, SampledFunction};
use markov_mimic::io::{read_family_csv, read_json, write_family, write_json, write_plot_csv};
use markov_mimic::markov::{concentration_check, induced_ratio, InducedRatio, KernelReport, MarkovKernel};
use markov_mimic::relations::{check_relations, feasibility, CellMasses, Feasibility};
use markov_mimic::subspace::{check_extendibility, realize_integers, Realization, SubspaceSpec};
use markov_mimic::Error;
use serde::Serialize;

use crate::config::{ConfigError, Resolved, RunConfig};
use crate::{CliError, Common};

const ANALYZE_GRID: usize = 400;
const ANALYZE_PROBES: usize = 16;

fn load(common: &Common) -> Result<Resolved, CliError> {
    let path = common.config.as_ref().ok_or_else(|| ConfigError {
        field: "--config".into(),
        message: "a configuration file is required".into(),
    })?;
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, common);
    Ok(cfg.resolve(&base_dir(path))?)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn apply_overrides(cfg: &mut RunConfig, common: &Common) {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = common.grid {
        cfg.grid = m;
    }
    if let Some(e) = common.eps {
        cfg.eps = e;
    }
}

fn out_dir(common: &Common) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&common.out_dir).map_err(|e| CliError::Io(e.into()))?;
    Ok(&common.out_dir)
}

pub fn options(r: &Resolved) -> ApproxOptions {
    ApproxOptions {
        cap_n1: r.caps.n1,
        cap_denominator: r.caps.denominator,
        seed: r.seed,
        verify: false,
        ..ApproxOptions::default()
    }
}

/// `plot_{i}.csv` with `y, φ(f_i)(y), avg_i(y)`.
pub fn write_plots(dir: &Path, kernel: &MarkovKernel, fam: &EigenvalueFamily, fs: &[SampledFunction]) -> Result<(), CliError> {
    let avgs = averages(fam, fs)?;
    for (i, (f, avg)) in fs.iter().zip(&avgs).enumerate() {
        write_plot_csv(&dir.join(format!("plot_{i}.csv")), &kernel.apply(f)?, avg).map_err(CliError::Io)?;
    }
    Ok(())
}

pub fn write_build(dir: &Path, stem: &str, out: &Approximation) -> Result<bool, CliError> {
    let csv = write_family(dir, stem, &out.family).map_err(CliError::Io)?;
    write_json(&dir.join("certificate.json"), &out.certificate).map_err(CliError::Io)?;
    write_json(&dir.join("report.json"), &out.report).map_err(CliError::Io)?;
    Ok(csv)
}

pub fn summary(c: &Certificate) -> String {
    let n1 = c.n1.map_or_else(|| "-".to_string(), |v| v.to_string());
    format!(
        "sup_error {} (eps {}), boundary exact {}, N = {}, N1 = {n1}",
        c.sup_error, c.eps, c.boundary_ok, c.n
    )
}

fn check(c: &Certificate) -> Result<(), CliError> {
    if c.passed() {
        Ok(())
    } else {
        Err(CliError::Certificate(summary(c)))
    }
}

pub fn build(common: &Common) -> Result<(), CliError> {
    let r = load(common)?;
    let out = approximate(&r.kernel, &r.functions, r.eps, r.alpha, r.beta, options(&r))?;
    let dir = out_dir(common)?;
    let csv = write_build(dir, "family", &out)?;
    write_plots(dir, &r.kernel, &out.family, &r.functions)?;
    println!("{}", summary(&out.certificate));
    if !csv {
        println!("family.csv skipped: N (M+1) above the CSV cap; family.json carries the profile");
    }
    check(&out.certificate)
}

pub fn verify(common: &Common, family: &Path) -> Result<(), CliError> {
    let r = load(common)?;
    let ext = family.extension().and_then(|e| e.to_str()).unwrap_or("");
    let cert = match ext {
        "json" => {
            let fam: EigenvalueFamily = read_json(family).map_err(|e| ConfigError {
                field: "--family".into(),
                message: e.to_string(),
            })?;
            certify(&r.kernel, &fam, &r.functions, r.eps, r.alpha, r.beta).stage("certify")?
        }
        "csv" => {
            let fam = read_family_csv(family).map_err(|e| ConfigError {
                field: "--family".into(),
                message: e.to_string(),
            })?;
            certify_family(&r.kernel, &fam, &r.functions, r.eps, r.alpha, r.beta).stage("certify")?
        }
        other => {
            return Err(ConfigError {
                field: "--family".into(),
                message: format!("expected a .json or .csv family, got {other:?}"),
            }
            .into())
        }
    };
    write_json(&out_dir(common)?.join("certificate.json"), &cert).map_err(CliError::Io)?;
    println!("{}", summary(&cert));
    check(&cert)
}

#[derive(Serialize)]
struct EndpointMeasure {
    mass_at_endpoint: f64,
    /// `[x, weight]` for every atom.
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct Analysis {
    alpha: String,
    beta: String,
    grid: usize,
    realization: Realization,
    kernel: KernelReport,
    mu0: EndpointMeasure,
    mu1: EndpointMeasure,
    concentration: markov_mimic::markov::ConcentrationReport,
    induced_ratio: Option<InducedRatio>,
    cells: usize,
    residuals: std::collections::BTreeMap<String, f64>,
    max_residual: f64,
    extendibility: markov_mimic::subspace::ExtendibilityReport,
}

fn ratio_arg(cli: Option<&str>, cfg: Option<&str>, name: &str) -> Result<Rational, CliError> {
    let s = cli.or(cfg).ok_or_else(|| ConfigError {
        field: format!("--{name}"),
        message: "required without a config".into(),
    })?;
    Ok(parse_rational(s).map_err(|e| ConfigError {
        field: format!("--{name}"),
        message: e.to_string(),
    })?)
}

pub fn analyze(common: &Common, alpha: Option<&str>, beta: Option<&str>) -> Result<(), CliError> {
    let cfg = match &common.config {
        Some(p) => {
            let mut c = RunConfig::load(p)?;
            apply_overrides(&mut c, common);
            Some((c, base_dir(p)))
        }
        None => None,
    };
    let a = ratio_arg(alpha, cfg.as_ref().map(|c| c.0.alpha.as_str()), "alpha")?;
    let b = ratio_arg(beta, cfg.as_ref().map(|c| c.0.beta.as_str()), "beta")?;
    let spec = SubspaceSpec::new(a).map_err(|e| ConfigError {
        field: "alpha".into(),
        message: e.to_string(),
    })?;
    SubspaceSpec::new(b).map_err(|e| ConfigError {
        field: "beta".into(),
        message: e.to_string(),
    })?;
    if let Feasibility::Infeasible { forcing } = feasibility(a, b) {
        return Err(Error::Infeasible { alpha: a, beta: b, forcing }).stage("feasibility").map_err(Into::into);
    }
    let realization = realize_integers(a, b).stage("feasibility")?;

    let (kernel, fs, eps, seed) = match cfg {
        Some((mut c, base)) => {
            c.alpha = markov_mimic::interval::format_rational(&a);
            c.beta = markov_mimic::interval::format_rational(&b);
            let r = c.resolve(&base)?;
            (r.kernel, r.functions, r.eps, r.seed)
        }
        None => {
            let g = Grid::new(common.grid.unwrap_or(ANALYZE_GRID)).map_err(|e| ConfigError {
                field: "--grid".into(),
                message: e.to_string(),
            })?;
            (MarkovKernel::identity(g), Vec::new(), common.eps.unwrap_or(0.1), common.seed.unwrap_or(0))
        }
    };
    let grid = kernel.grid();
    let m = grid.m() as i128;
    let report = analysis(&kernel, &spec, a, b, realization, &fs, eps, seed, m)?;
    write_json(&out_dir(common)?.join("analysis.json"), &report).map_err(CliError::Io)?;
    println!("feasible: (a, k, b) = ({}, {}, {})", realization.a, realization.k, realization.b);
    println!(
        "kernel valid {}; mu_0({{0}}) = {}, mu_1({{1}}) = {}",
        report.kernel.pass, report.mu0.mass_at_endpoint, report.mu1.mass_at_endpoint
    );
    match &report.induced_ratio {
        Some(r) => println!("induced ratio {} (spread {:e}, {} probes)", r.beta, r.defect, r.probes),
        None => println!("induced ratio undefined"),
    }
    println!("{} cells, max relation residual {:e}", report.cells, report.max_residual);
    println!(
        "extendible {}: inf upper {}, sup lower {}",
        report.extendibility.extendible, report.extendibility.upper_inf, report.extendibility.lower_sup
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analysis(
    kernel: &MarkovKernel,
    spec: &SubspaceSpec,
    a: Rational,
    b: Rational,
    realization: Realization,
    fs: &[SampledFunction],
    eps: f64,
    seed: u64,
    m: i128,
) -> Result<Analysis, CliError> {
    let grid = kernel.grid();
    let (mu0, mu1) = kernel.endpoint_measures();
    let atoms = |w: &[f64]| -> Vec<(f64, f64)> {
        w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (grid.point(i), *v)).collect()
    };
    let delta0 = if fs.is_empty() {
        rat(1, 10).max(rat(1, m))
    } else {
        modulus_delta(fs, eps / 4.0).stage("modulus")?
    };
    let partition = make_partition(&dense_points(delta0, grid).stage("partition")?, grid, delta0).stage("partition")?;
    let masses = CellMasses::from_kernel(kernel, &partition).stage("analyze")?;
    let residuals = check_relations(&masses, a, b);
    let induced = match induced_ratio(kernel, spec, ANALYZE_PROBES, seed) {
        Ok(r) => Some(r),
        Err(Error::RatioUndefined) => None,
        Err(e) => return Err(e.into()),
    };
    let phi = |g: &SampledFunction| kernel.apply(g).expect("same grid");
    Ok(Analysis {
        alpha: markov_mimic::interval::format_rational(&a),
        beta: markov_mimic::interval::format_rational(&b),
        grid: grid.m(),
        realization,
        kernel: kernel.validate(),
        mu0: EndpointMeasure {
            mass_at_endpoint: mu0.weights()[0],
            atoms: atoms(mu0.weights()),
        },
        mu1: EndpointMeasure {
            mass_at_endpoint: mu1.weights()[grid.m()],
            atoms: atoms(mu1.weights()),
        },
        concentration: concentration_check(kernel, spec).stage("analyze")?,
        induced_ratio: induced,
        cells: masses.n(),
        max_residual: residuals.max(),
        residuals: residuals.to_map(),
        extendibility: check_extendibility(phi, spec, grid).stage("analyze")?,
    })
}
