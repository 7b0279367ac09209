use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::profile::{t_of, End, TransportProfile};
use super::select::{CrossCase, CrossSelection, Designation, ExclusionTallies, IndexSet};
use crate::certify::BoundaryTally;
use crate::error::{Error, Result};
use crate::interval::rational::{recover, serde_rational, serde_rational_vec, to_f64};
use crate::interval::{Grid, Rational, SampledFunction};

/// A finite family of maps `y ↦ h_d(y)` on the grid, averaged with equal weights.
pub trait MapFamily: Sync {
    fn grid(&self) -> Grid;

    /// Number of maps `N`.
    fn count(&self) -> u64;

    /// Values of all maps at grid index `y`, run-length encoded in map order.
    fn column(&self, y: usize) -> Vec<(f64, u64)>;

    /// Exact values at `y = 0` or `y = 1`, run-length encoded in map order.
    fn endpoint_column(&self, end: End) -> Result<Vec<(Rational, u64)>>;

    /// Points the endpoint values are allowed to take.
    fn representatives(&self) -> Vec<Rational>;

    /// The `i`-th map.
    fn map(&self, i: u64) -> Option<SampledFunction>;
}

/// Which indices were kept and where each kept map must land at the two ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: IndexSet,
    pub designations: Vec<Designation>,
    pub cross: Option<CrossMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMeta {
    pub case: CrossCase,
    pub tau: usize,
    pub exclusions: ExclusionTallies,
}

impl Selection {
    /// Every kept map runs from cell `first` at `y = 0` to cell `last` at `y = 1`.
    pub fn same(indices: IndexSet, first: usize, last: usize) -> Self {
        let designations = indices
            .ranges()
            .iter()
            .map(|&(start, end)| Designation {
                start,
                end,
                cell0: first,
                cell1: last,
            })
            .collect();
        Self {
            indices,
            designations,
            cross: None,
        }
    }
}

impl From<CrossSelection> for Selection {
    fn from(c: CrossSelection) -> Self {
        Self {
            indices: c.indices,
            designations: c.designations,
            cross: Some(CrossMeta {
                case: c.case,
                tau: c.tau,
                exclusions: c.exclusions,
            }),
        }
    }
}

/// `φ_d(f) = f ∘ h(·, d/N₁)` for `d ∈ D`; maps are evaluated on demand from the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueFamily {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "N1")]
    pub n1: u64,
    #[serde(with = "serde_rational")]
    pub delta0: Rational,
    /// Exact representative points `x_1, …, x_n`.
    #[serde(with = "serde_rational_vec")]
    pub points: Vec<Rational>,
    pub selection: Selection,
    pub tally: BoundaryTally,
    pub profile: TransportProfile,
}

fn exact_runs(profile: &TransportProfile, n1: u64, end: End, d: &IndexSet) -> Result<Vec<(Rational, u64)>> {
    let scaled = profile.scaled(n1)?;
    Ok(profile.column_exact(end, &scaled, d))
}

/// Builds the family and checks that every kept map hits its designated point exactly.
pub fn assemble_family(
    profile: TransportProfile,
    n1: u64,
    delta0: Rational,
    points: Vec<Rational>,
    selection: Selection,
) -> Result<EigenvalueFamily> {
    let d = &selection.indices;
    if d.is_empty() {
        return Err(Error::EmptySelection("no t-indices selected".into()));
    }
    if d.last().is_some_and(|l| l > n1) || d.ranges()[0].0 == 0 {
        return Err(Error::OutOfRange(format!("indices must lie in 1..={n1}")));
    }
    let scaled = profile.scaled(n1)?;
    for des in &selection.designations {
        let range = IndexSet::new(vec![(des.start, des.end)])?;
        for (end, cell) in [(End::Zero, des.cell0), (End::One, des.cell1)] {
            let expected = points[cell];
            let mut at = des.start;
            for (value, count) in profile.column_exact(end, &scaled, &range) {
                if value != expected {
                    return Err(Error::PlateauViolation {
                        index: at,
                        found: value,
                        expected,
                    });
                }
                at += count;
            }
        }
    }
    let c0 = profile.column_exact(End::Zero, &scaled, d);
    let c1 = profile.column_exact(End::One, &scaled, d);
    let tally = BoundaryTally::from_runs(&c0, &c1);
    Ok(EigenvalueFamily {
        n: d.len(),
        n1,
        delta0,
        points,
        selection,
        tally,
        profile,
    })
}

impl EigenvalueFamily {
    pub fn indices(&self) -> &IndexSet {
        &self.selection.indices
    }

    /// Dense `N × (M+1)` values.
    pub fn to_matrix(&self) -> Result<MatrixFamily> {
        let grid = self.grid();
        let mut rows = vec![Vec::with_capacity(grid.len()); self.n as usize];
        for y in 0..grid.len() {
            let mut i = 0usize;
            for (v, c) in self.column(y) {
                for _ in 0..c {
                    rows[i].push(v);
                    i += 1;
                }
            }
        }
        let ends0 = super::profile::expand(&self.endpoint_column(End::Zero)?);
        let ends1 = super::profile::expand(&self.endpoint_column(End::One)?);
        MatrixFamily::new(grid, rows, Some(ends0.into_iter().zip(ends1).collect()), self.representatives())
    }
}

impl MapFamily for EigenvalueFamily {
    fn grid(&self) -> Grid {
        self.profile.grid()
    }

    fn count(&self) -> u64 {
        self.n
    }

    fn column(&self, y: usize) -> Vec<(f64, u64)> {
        let m = self.grid().m();
        if y == 0 || y == m {
            let end = if y == 0 { End::Zero } else { End::One };
            let runs = exact_runs(&self.profile, self.n1, end, self.indices()).expect("checked at assembly");
            let mut out: Vec<(f64, u64)> = Vec::with_capacity(runs.len());
            for (v, c) in runs {
                let v = to_f64(&v);
                match out.last_mut() {
                    Some((w, k)) if *w == v => *k += c,
                    _ => out.push((v, c)),
                }
            }
            out
        } else {
            self.profile.column(y, self.n1, self.indices())
        }
    }

    fn endpoint_column(&self, end: End) -> Result<Vec<(Rational, u64)>> {
        exact_runs(&self.profile, self.n1, end, self.indices())
    }

    fn representatives(&self) -> Vec<Rational> {
        let mut pts = self.points.clone();
        pts.push(Rational::from_integer(0));
        pts.push(Rational::from_integer(1));
        pts.sort();
        pts.dedup();
        pts
    }

    fn map(&self, i: u64) -> Option<SampledFunction> {
        let d = self.indices().nth(i)?;
        let grid = self.grid();
        let t = t_of(d, self.n1);
        let tr = Rational::new(d as i128, self.n1 as i128);
        let values = (0..grid.len())
            .map(|y| match y {
                0 => to_f64(&self.profile.eval_exact(End::Zero, tr)),
                y if y == grid.m() => to_f64(&self.profile.eval_exact(End::One, tr)),
                y => self.profile.eval(y, t),
            })
            .collect();
        SampledFunction::new(grid, values).ok()
    }
}

/// A family given by explicit map values, e.g. read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    grid: Grid,
    rows: Vec<Vec<f64>>,
    /// Exact `(h(0), h(1))` per map.
    ends: Vec<(Rational, Rational)>,
    representatives: Vec<Rational>,
}

impl MatrixFamily {
    /// Without exact endpoints, values are recovered as fractions with denominator at most `M`.
    pub fn new(
        grid: Grid,
        rows: Vec<Vec<f64>>,
        ends: Option<Vec<(Rational, Rational)>>,
        representatives: Vec<Rational>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySelection("family has no maps".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != grid.len() {
                return Err(Error::Malformed(format!(
                    "map {i} has {} values, expected {}",
                    r.len(),
                    grid.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite() || **v < -1e-12 || **v > 1.0 + 1e-12) {
                return Err(Error::Malformed(format!("map {i} takes value {v} outside [0,1]")));
            }
        }
        let ends = match ends {
            Some(e) if e.len() == rows.len() => e,
            Some(e) => {
                return Err(Error::Malformed(format!("{} endpoint pairs for {} maps", e.len(), rows.len())))
            }
            None => {
                let m = grid.m() as i128;
                let rec = |i: usize, v: f64| {
                    recover(v, m, 1e-9)
                        .ok_or_else(|| Error::Malformed(format!("map {i}: endpoint value {v} is not a grid fraction")))
                };
                rows.iter()
                    .enumerate()
                    .map(|(i, r)| Ok((rec(i, r[0])?, rec(i, r[r.len() - 1])?)))
                    .collect::<Result<_>>()?
            }
        };
        Ok(Self {
            grid,
            rows,
            ends,
            representatives,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.rows
    }

    pub fn ends_mut(&mut self) -> &mut [(Rational, Rational)] {
        &mut self.ends
    }
}

impl MapFamily for MatrixFamily {
    fn grid(&self) -> Grid {
        self.grid
    }

    fn count(&self) -> u64 {
        self.rows.len() as u64
    }

    fn column(&self, y: usize) -> Vec<(f64, u64)> {
        let mut out: Vec<(f64, u64)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((v, c)) if *v == r[y] => *c += 1,
                _ => out.push((r[y], 1)),
            }
        }
        out
    }

    fn endpoint_column(&self, end: End) -> Result<Vec<(Rational, u64)>> {
        Ok(self
            .ends
            .iter()
            .map(|(a, b)| (if end == End::Zero { *a } else { *b }, 1))
            .collect())
    }

    fn representatives(&self) -> Vec<Rational> {
        self.representatives.clone()
    }

    fn map(&self, i: u64) -> Option<SampledFunction> {
        let r = self.rows.get(i as usize)?;
        SampledFunction::new(self.grid, r.clone()).ok()
    }
}

/// Counts of each distinct value in a run list.
pub fn count_values(runs: &[(Rational, u64)]) -> BTreeMap<Rational, u64> {
    let mut out = BTreeMap::new();
    for (v, c) in runs {
        *out.entry(*v).or_insert(0) += c;
    }
    out
}
