use std::fmt;
use std::sync::Arc;

use crate::env::MountainCarState;
use crate::error::{invalid_arg, Result};

/// A fixed basis `phi(x) = (phi_1(x), ..., phi_d(x))` with `|phi_j| <= bound()`.
pub trait FeatureMap<S: ?Sized>: Send + Sync {
    fn dim(&self) -> usize;

    /// Sup-norm bound `L` on every basis function.
    fn bound(&self) -> f64;

    /// Writes `phi(x)` into `out`, which has length `dim()`.
    fn write(&self, x: &S, out: &mut [f64]);

    fn features(&self, x: &S) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write(x, &mut out);
        out
    }

    fn dot(&self, x: &S, weights: &[f64]) -> f64 {
        self.features(x).iter().zip(weights).map(|(f, w)| f * w).sum()
    }
}

pub type SharedFeatures<S> = Arc<dyn FeatureMap<S>>;

impl<S: ?Sized> fmt::Debug for dyn FeatureMap<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureMap(dim = {})", self.dim())
    }
}

/// Indicator features over a finite set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    pub n: usize,
}

impl FeatureMap<usize> for OneHot {
    fn dim(&self) -> usize {
        self.n
    }

    fn bound(&self) -> f64 {
        1.0
    }

    fn write(&self, x: &usize, out: &mut [f64]) {
        out.fill(0.0);
        out[*x] = 1.0;
    }
}

/// Arbitrary features over a finite state set, given as a table `phi[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFeatures {
    rows: Vec<Vec<f64>>,
    dim: usize,
    bound: f64,
}

impl TableFeatures {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(invalid_arg("feature table rows must share a positive length"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid_arg("feature table has a non-finite entry"));
        }
        let bound = rows.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self { rows, dim, bound })
    }
}

impl FeatureMap<usize> for TableFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn write(&self, x: &usize, out: &mut [f64]) {
        out.copy_from_slice(&self.rows[*x]);
    }
}

/// State-action features built as `n_actions` stacked copies of a state basis:
/// the block for action `a` holds `phi(s)`, every other block is zero.
pub struct StackedActions<S> {
    base: SharedFeatures<S>,
    n_actions: usize,
}

impl<S> StackedActions<S> {
    pub fn new(base: SharedFeatures<S>, n_actions: usize) -> Self {
        Self { base, n_actions }
    }
}

impl<S> FeatureMap<(S, usize)> for StackedActions<S> {
    fn dim(&self) -> usize {
        self.base.dim() * self.n_actions
    }

    fn bound(&self) -> f64 {
        self.base.bound()
    }

    fn write(&self, x: &(S, usize), out: &mut [f64]) {
        let d = self.base.dim();
        out.fill(0.0);
        self.base.write(&x.0, &mut out[x.1 * d..(x.1 + 1) * d]);
    }
}

/// Gaussian radial basis functions on an evenly spaced grid, plus an optional
/// constant feature.
///
/// Centres sit at the cell midpoints of a regular partition of the box. With
/// `sigma = None` each bandwidth is half the centre spacing along its axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfGrid {
    centers: Vec<Vec<f64>>,
    sigmas: Vec<f64>,
    bias: bool,
}

impl RbfGrid {
    pub fn new(lows: &[f64], highs: &[f64], shape: &[usize], sigma: Option<&[f64]>, bias: bool) -> Result<Self> {
        let dims = lows.len();
        if dims == 0 || highs.len() != dims || shape.len() != dims {
            return Err(invalid_arg("RBF grid bounds and shape must share a dimension"));
        }
        if shape.contains(&0) || lows.iter().zip(highs).any(|(l, h)| !(h > l)) {
            return Err(invalid_arg("RBF grid needs a non-empty box and positive shape"));
        }
        let spacing: Vec<f64> = (0..dims).map(|i| (highs[i] - lows[i]) / shape[i] as f64).collect();
        let sigmas = match sigma {
            Some(s) if s.len() == dims && s.iter().all(|v| *v > 0.0) => s.to_vec(),
            Some(_) => return Err(invalid_arg("RBF bandwidths must be positive, one per axis")),
            None => spacing.iter().map(|h| h / 2.0).collect(),
        };
        let total: usize = shape.iter().product();
        let centers = (0..total)
            .map(|mut code| {
                let mut c = vec![0.0; dims];
                for i in (0..dims).rev() {
                    let k = code % shape[i];
                    code /= shape[i];
                    c[i] = lows[i] + (k as f64 + 0.5) * spacing[i];
                }
                c
            })
            .collect();
        Ok(Self { centers, sigmas, bias })
    }

    /// The mountain-car box with a `rows x cols` grid over (position, velocity).
    pub fn mountain_car(rows: usize, cols: usize, bias: bool) -> Result<Self> {
        Self::new(&[-1.2, -0.07], &[0.6, 0.07], &[rows, cols], None, bias)
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn eval_point(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.centers) {
            let r2: f64 = x
                .iter()
                .zip(c)
                .zip(&self.sigmas)
                .map(|((xi, ci), si)| ((xi - ci) / si).powi(2))
                .sum();
            *o = (-0.5 * r2).exp();
        }
        if self.bias {
            out[self.centers.len()] = 1.0;
        }
    }
}

impl FeatureMap<[f64]> for RbfGrid {
    fn dim(&self) -> usize {
        self.centers.len() + usize::from(self.bias)
    }

    fn bound(&self) -> f64 {
        1.0
    }

    fn write(&self, x: &[f64], out: &mut [f64]) {
        self.eval_point(x, out);
    }
}

impl FeatureMap<MountainCarState> for RbfGrid {
    fn dim(&self) -> usize {
        self.centers.len() + usize::from(self.bias)
    }

    fn bound(&self) -> f64 {
        1.0
    }

    fn write(&self, x: &MountainCarState, out: &mut [f64]) {
        self.eval_point(&x.coords(), out);
    }
}
