//! Run configuration: JSON with grid, subspace ratios, tolerance, functions and kernel.

use std::fmt;
use std::path::{Path, PathBuf};

use markov_mimic::construct::{DEFAULT_CAP_DENOMINATOR, DEFAULT_CAP_N1};
use markov_mimic::interval::{parse_rational, Grid, Rational, SampledFunction};
use markov_mimic::io::read_function_csv;
use markov_mimic::markov::MarkovKernel;
use markov_mimic::subspace::SubspaceSpec;
use serde::{Deserialize, Serialize};

pub const CAP_ENV: &str = "MARKOV_MIMIC_CAP_N1";

/// Configuration problem, reported with the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.to_string(),
    }
}

/// `{"poly": [c0, c1, ...]}`, `{"pwl": [[x, y], ...]}` or `{"csv": "path"}`.
/// In `poly` and `pwl` one `null` entry may stand for the value that makes `f(0) = α f(1)`;
/// for `pwl` only the values at `x = 0` or `x = 1` may be left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionSpec {
    Poly(Vec<Option<f64>>),
    Pwl(Vec<(f64, Option<f64>)>),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Identity,
    /// `T(f) = f ∘ λ`.
    Example1 { lambda: FunctionSpec },
    /// `T(f) = (k₁ f + k₂ f(1 − ·))/(k₁ + k₂)`.
    Example2 { k1: f64, k2: f64 },
    /// Example 2 plus the constant map `1/2`, weighted to keep `C[0,1]_α` invariant.
    Example3 { k1: f64, k2: f64 },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default = "default_cap_n1")]
    pub n1: u64,
    #[serde(default = "default_cap_den")]
    pub denominator: i128,
}

fn default_cap_n1() -> u64 {
    DEFAULT_CAP_N1
}

fn default_cap_den() -> i128 {
    DEFAULT_CAP_DENOMINATOR
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            n1: DEFAULT_CAP_N1,
            denominator: DEFAULT_CAP_DENOMINATOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: usize,
    pub alpha: String,
    pub beta: String,
    pub eps: f64,
    pub functions: Vec<FunctionSpec>,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub caps: Caps,
}

/// Everything the pipeline needs, parsed and checked.
pub struct Resolved {
    pub alpha: Rational,
    pub beta: Rational,
    pub eps: f64,
    pub functions: Vec<SampledFunction>,
    pub kernel: MarkovKernel,
    pub seed: u64,
    pub caps: Caps,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| err(format!("line {} column {}", e.line(), e.column()), e))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Parses every field; relative CSV paths are taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved, ConfigError> {
        let grid = Grid::new(self.grid).map_err(|e| err("grid", e))?;
        let alpha = parse_rational(&self.alpha).map_err(|e| err("alpha", e))?;
        let beta = parse_rational(&self.beta).map_err(|e| err("beta", e))?;
        let spec = SubspaceSpec::new(alpha).map_err(|e| err("alpha", e))?;
        SubspaceSpec::new(beta).map_err(|e| err("beta", e))?;
        if !(self.eps > 0.0) {
            return Err(err("eps", format!("must be positive, got {}", self.eps)));
        }
        if self.functions.is_empty() {
            return Err(err("functions", "at least one function is required"));
        }
        let functions = self
            .functions
            .iter()
            .enumerate()
            .map(|(i, f)| build_function(f, &spec, grid, base, &format!("functions[{i}]"), true))
            .collect::<Result<Vec<_>, _>>()?;
        let kernel = build_kernel(&self.kernel, &spec, grid, base)?;
        let mut caps = self.caps.clone();
        if let Ok(v) = std::env::var(CAP_ENV) {
            caps.n1 = v.trim().parse().map_err(|_| err(CAP_ENV, format!("not an integer: {v:?}")))?;
        }
        Ok(Resolved {
            alpha,
            beta,
            eps: self.eps,
            functions,
            kernel,
            seed: self.seed,
            caps,
        })
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Builds the sampled function; with `member`, enforces `f(0) = α f(1)`.
pub fn build_function(
    spec_f: &FunctionSpec,
    spec: &SubspaceSpec,
    grid: Grid,
    base: &Path,
    field: &str,
    member: bool,
) -> Result<SampledFunction, ConfigError> {
    let alpha = spec.alpha_f64();
    let f = match spec_f {
        FunctionSpec::Poly(c) => {
            if c.is_empty() {
                return Err(err(field, "empty coefficient list"));
            }
            let holes: Vec<usize> = (0..c.len()).filter(|&i| c[i].is_none()).collect();
            let mut coeffs: Vec<f64> = c.iter().map(|v| v.unwrap_or(0.0)).collect();
            match holes.as_slice() {
                [] => {}
                [0] if member => {
                    let rest: f64 = coeffs[1..].iter().sum();
                    coeffs[0] = alpha * rest / (1.0 - alpha);
                }
                [j] if member => {
                    let rest: f64 = coeffs.iter().sum();
                    coeffs[*j] = coeffs[0] / alpha - rest;
                }
                _ => return Err(err(field, "at most one null coefficient, and only for subspace members")),
            }
            SampledFunction::from_fn(grid, |x| poly_eval(&coeffs, x))
        }
        FunctionSpec::Pwl(points) => {
            if points.len() < 2 || points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
                return Err(err(field, "breakpoints must start at x = 0 and end at x = 1"));
            }
            if points.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(err(field, "breakpoints must be strictly increasing"));
            }
            let last = points.len() - 1;
            let holes: Vec<usize> = (0..points.len()).filter(|&i| points[i].1.is_none()).collect();
            let mut ys: Vec<f64> = points.iter().map(|p| p.1.unwrap_or(0.0)).collect();
            match holes.as_slice() {
                [] => {}
                [0] if member => ys[0] = alpha * ys[last],
                [j] if member && *j == last => ys[last] = ys[0] / alpha,
                _ => return Err(err(field, "only the value at x = 0 or x = 1 may be null")),
            }
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            SampledFunction::from_fn(grid, |x| {
                let i = xs.partition_point(|v| *v <= x).clamp(1, last);
                let (x0, x1) = (xs[i - 1], xs[i]);
                ys[i - 1] + (x - x0) / (x1 - x0) * (ys[i] - ys[i - 1])
            })
        }
        FunctionSpec::Csv(p) => {
            let path = resolve_path(base, p);
            let file = std::fs::File::open(&path).map_err(|e| err(field, format!("{}: {e}", path.display())))?;
            let f = read_function_csv(file, &path.display().to_string()).map_err(|e| err(field, e))?;
            if f.grid() != grid {
                return Err(err(field, format!("sampled on M = {}, config grid is {}", f.grid().m(), grid.m())));
            }
            f
        }
    };
    if member && !spec.is_member(&f) {
        return Err(err(
            field,
            format!("f(0) = {} but alpha f(1) = {}; not in the subspace", f.first(), alpha * f.last()),
        ));
    }
    Ok(f)
}

pub fn build_kernel(k: &KernelSpec, spec: &SubspaceSpec, grid: Grid, base: &Path) -> Result<MarkovKernel, ConfigError> {
    let field = "kernel";
    match k {
        KernelSpec::Identity => Ok(MarkovKernel::identity(grid)),
        KernelSpec::Example1 { lambda } => {
            let lam = build_function(lambda, spec, grid, base, "kernel.lambda", false)?;
            MarkovKernel::from_composition(&lam).map_err(|e| err(field, e))
        }
        KernelSpec::Example2 { k1, k2 } => MarkovKernel::example2(grid, *k1, *k2).map_err(|e| err(field, e)),
        KernelSpec::Example3 { k1, k2 } => MarkovKernel::example3(grid, spec, *k1, *k2).map_err(|e| err(field, e)),
        KernelSpec::Csv { path } => {
            let path = resolve_path(base, path);
            let kernel = markov_mimic::io::read_kernel_csv(&path).map_err(|e| err("kernel.path", e))?;
            if kernel.grid() != grid {
                return Err(err("kernel.path", format!("kernel has M = {}, config grid is {}", kernel.grid().m(), grid.m())));
            }
            Ok(kernel)
        }
    }
}
