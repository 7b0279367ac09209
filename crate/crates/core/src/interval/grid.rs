use serde::{Deserialize, Serialize};

use super::rational::{rat, Rational};
use crate::error::{Error, Result};

/// Uniform grid `{i/M : i = 0..=M}` on `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need M >= 2, got {m}")));
        }
        Ok(Self { m })
    }

    /// Number of subintervals.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of grid points, `M + 1`.
    pub fn len(&self) -> usize {
        self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.m {
            1.0
        } else {
            i as f64 / self.m as f64
        }
    }

    pub fn point_exact(&self, i: usize) -> Rational {
        rat(i as i128, self.m as i128)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.m).map(|i| self.point(i))
    }

    /// Index of the grid point equal to `x`, if `x` lies on the grid.
    pub fn index_of(&self, x: &Rational) -> Option<usize> {
        let scaled = x * Rational::from_integer(self.m as i128);
        if scaled.is_integer() && scaled >= Rational::from_integer(0) && scaled <= Rational::from_integer(self.m as i128) {
            Some(scaled.to_integer() as usize)
        } else {
            None
        }
    }

    /// Nearest grid index to `x`, clamped to `[0, M]`.
    pub fn snap(&self, x: f64) -> usize {
        let i = (x * self.m as f64).round();
        i.clamp(0.0, self.m as f64) as usize
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                left: self.m,
                right: other.m,
            });
        }
        Ok(())
    }
}
