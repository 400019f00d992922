//! Gridded densities and the overlap metrics defined on them.
//!
//! Every density in this crate lives on a shared [`SupportGrid`]. Overlap of
//! two densities is the integral of their pointwise minimum; total variation
//! distance is half the integral of the absolute difference. For normalized
//! densities the two are complementary: OVL + TV = 1.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed on the unit integral of a normalized density.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Minimum number of grid points for a continuous support grid.
pub const MIN_GRID_POINTS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    /// Uniform grid over a real interval; integrals use the trapezoid rule.
    Continuous,
    /// Lattice of atoms carrying probability mass; integrals are plain sums.
    Discrete,
}

/// Uniform evaluation grid shared by a family of densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportGrid {
    lower: f64,
    upper: f64,
    points: usize,
    step: f64,
    kind: GridKind,
}

impl SupportGrid {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "lower {lower} must be below upper {upper}"
            )));
        }
        if points < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_GRID_POINTS} points, got {points}"
            )));
        }
        let step = (upper - lower) / (points - 1) as f64;
        Ok(SupportGrid { lower, upper, points, step, kind: GridKind::Continuous })
    }

    /// Grid of probability-mass atoms at `lower + i * step`.
    pub fn discrete(lower: f64, step: f64, points: usize) -> Result<Self> {
        if !lower.is_finite() || !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidGrid("atoms need a finite positive step".into()));
        }
        if points < 2 {
            return Err(Error::InvalidGrid("need at least 2 atoms".into()));
        }
        let upper = lower + step * (points - 1) as f64;
        Ok(SupportGrid { lower, upper, points, step, kind: GridKind::Discrete })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn position(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        self.lower + self.step * i as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.position(i))
    }

    /// Integral of `values` against this grid: trapezoid rule on continuous
    /// grids, plain sum of atom masses on discrete grids.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points);
        match self.kind {
            GridKind::Continuous => {
                let inner: f64 = values.iter().sum();
                let ends = 0.5 * (values[0] + values[self.points - 1]);
                self.step * (inner - ends)
            }
            GridKind::Discrete => values.iter().sum(),
        }
    }
}

/// Labeled collection of raw posterior draws for one subgroup.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSet {
    label: String,
    draws: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, draws: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if draws.is_empty() {
            return Err(Error::TooFewDraws { label });
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFiniteDraw { label });
        }
        Ok(SampleSet { label, draws })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }
}

/// Density evaluated on a shared grid, normalized to unit mass.
///
/// `degenerate` marks spike densities produced from zero-spread samples; the
/// values are still normalized but should be treated as a warning sign.
#[derive(Clone, Debug)]
pub struct GriddedDensity {
    grid: Arc<SupportGrid>,
    values: Vec<f64>,
    degenerate: bool,
}

impl GriddedDensity {
    /// Validates and renormalizes raw non-negative values to unit integral.
    pub fn new(grid: Arc<SupportGrid>, values: Vec<f64>) -> Result<Self> {
        Self::with_flag(grid, values, false)
    }

    pub(crate) fn with_flag(
        grid: Arc<SupportGrid>,
        mut values: Vec<f64>,
        degenerate: bool,
    ) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.points(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidDensity);
        }
        let mass = grid.integrate(&values);
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::InvalidDensity);
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(GriddedDensity { grid, values, degenerate })
    }

    /// Wraps values that are already normalized (within [`NORMALIZATION_TOL`])
    /// without rescaling them. Used where exact value preservation matters.
    pub(crate) fn from_normalized(
        grid: Arc<SupportGrid>,
        values: Vec<f64>,
        degenerate: bool,
    ) -> Result<Self> {
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDensity);
        }
        Ok(GriddedDensity { grid, values, degenerate })
    }

    pub fn grid(&self) -> &Arc<SupportGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

fn check_same_grid(f: &GriddedDensity, g: &GriddedDensity) -> Result<()> {
    if f.grid.as_ref() != g.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Overlap of two densities on a shared grid: the integral of their
/// pointwise minimum, clamped to [0, 1].
pub fn ovl(f: &GriddedDensity, g: &GriddedDensity) -> Result<f64> {
    check_same_grid(f, g)?;
    let min: Vec<f64> = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a.min(*b))
        .collect();
    Ok(f.grid.integrate(&min).clamp(0.0, 1.0))
}

/// Total variation distance: half the integral of the absolute difference.
/// For unit-mass densities this equals 1 - ovl.
pub fn total_variation(f: &GriddedDensity, g: &GriddedDensity) -> Result<f64> {
    check_same_grid(f, g)?;
    let absdiff: Vec<f64> = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok((0.5 * f.grid.integrate(&absdiff)).clamp(0.0, 1.0))
}

/// Pointwise arithmetic mean of member densities.
///
/// The mean of unit-mass members already has unit mass, so values are not
/// rescaled; the mean of a single member reproduces it exactly.
pub fn mixture_mean(members: &[&GriddedDensity]) -> Result<GriddedDensity> {
    let first = members.first().ok_or(Error::EmptyCluster)?;
    for m in &members[1..] {
        check_same_grid(first, m)?;
    }
    let n = members.len() as f64;
    let mut values = vec![0.0; first.grid.points()];
    for m in members {
        for (acc, v) in values.iter_mut().zip(&m.values) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v /= n;
    }
    GriddedDensity::from_normalized(
        first.grid.clone(),
        values,
        members.iter().any(|m| m.degenerate),
    )
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Normal pdf restricted to a grid and renormalized.
    pub fn gridded_normal(grid: &Arc<SupportGrid>, mu: f64, sigma: f64) -> GriddedDensity {
        let values: Vec<f64> = grid
            .positions()
            .map(|t| {
                let z = (t - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        GriddedDensity::new(grid.clone(), values).unwrap()
    }

    /// Uniform density on [lo, hi] restricted to a grid.
    pub fn gridded_uniform(grid: &Arc<SupportGrid>, lo: f64, hi: f64) -> GriddedDensity {
        let values: Vec<f64> = grid
            .positions()
            .map(|t| if t >= lo && t <= hi { 1.0 } else { 0.0 })
            .collect();
        GriddedDensity::new(grid.clone(), values).unwrap()
    }
}
