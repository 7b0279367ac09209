use super::grid::Grid;
use crate::error::{Error, Result};

/// Continuous function on `[0,1]` given by its values on a uniform grid, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("non-finite value at grid index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.grid.m()]
    }

    /// Piecewise-linear evaluation; `x` is clamped to `[0,1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.grid.m();
        let s = x.clamp(0.0, 1.0) * m as f64;
        let i = (s.floor() as usize).min(m - 1);
        let frac = s - i as f64;
        if frac == 0.0 {
            return self.values[i];
        }
        if frac == 1.0 {
            return self.values[i + 1];
        }
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min_value(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Cumulative integrals `F(x_i) = ∫_0^{x_i} f`, exact for the interpolant.
    pub fn antiderivative(&self) -> Antiderivative<'_> {
        let h = 1.0 / self.grid.m() as f64;
        let mut cum = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cum.push(acc);
        }
        Antiderivative { f: self, cum }
    }
}

/// Exact antiderivative of a piecewise-linear interpolant.
pub struct Antiderivative<'a> {
    f: &'a SampledFunction,
    cum: Vec<f64>,
}

impl Antiderivative<'_> {
    pub fn at(&self, x: f64) -> f64 {
        let m = self.f.grid.m();
        let s = x.clamp(0.0, 1.0) * m as f64;
        let i = (s.floor() as usize).min(m - 1);
        let u = (s - i as f64) / m as f64;
        let v0 = self.f.values[i];
        let slope = (self.f.values[i + 1] - v0) * m as f64;
        self.cum[i] + u * v0 + 0.5 * slope * u * u
    }

    /// `∫_a^b f`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.at(b) - self.at(a)
    }
}

/// Sup-norm distance over the grid.
pub fn sup_distance(f: &SampledFunction, g: &SampledFunction) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    Ok(f
        .values
        .iter()
        .zip(&g.values)
        .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
}
