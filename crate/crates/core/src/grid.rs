//! Uniform rectangular grids, dense fields over them, and finite-difference
//! stencils.
//!
//! Storage is row-major with the last axis fastest. All stencils are central
//! in the interior with one-sided closures of the same order at the
//! boundary, so polynomial exactness holds up to the stencil order on the
//! whole grid including edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CMat, RMat, RVec};

/// Rectangular sampling of ℝⁿ with uniform spacing per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dims: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() != origin.len() || dims.len() != spacing.len() {
            return Err(Error::InvalidGrid(format!(
                "dims/origin/spacing lengths {}/{}/{} disagree",
                dims.len(),
                origin.len(),
                spacing.len()
            )));
        }
        for (axis, &n) in dims.iter().enumerate() {
            if n < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {n} nodes, need at least 3"
                )));
            }
        }
        for (axis, &h) in spacing.iter().enumerate() {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} spacing {h} is not positive"
                )));
            }
        }
        Ok(Self {
            dims,
            origin,
            spacing,
        })
    }

    /// Square 2-d grid covering [lo, hi]² with `n` nodes per axis.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let h = (hi - lo) / (n as f64 - 1.0);
        Self::new(vec![n, n], vec![lo, lo], vec![h, h])
    }

    /// Cube [lo, hi]^d with `n` nodes per axis.
    pub fn cube(lo: f64, hi: f64, n: usize, d: usize) -> Result<Self> {
        let h = (hi - lo) / (n as f64 - 1.0);
        Self::new(vec![n; d], vec![lo; d], vec![h; d])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat-index stride of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.dims[axis + 1..].iter().product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.ndim());
        let mut flat = 0;
        for (axis, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[axis]);
            flat = flat * self.dims[axis] + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for axis in (0..self.ndim()).rev() {
            idx[axis] = flat % self.dims[axis];
            flat /= self.dims[axis];
        }
        idx
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * i as f64
    }

    pub fn node_coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    /// Node nearest to the given point (componentwise rounding, clamped).
    pub fn nearest_node(&self, point: &[f64]) -> Vec<usize> {
        point
            .iter()
            .enumerate()
            .map(|(axis, &p)| {
                let u = (p - self.origin[axis]) / self.spacing[axis];
                (u.round().max(0.0) as usize).min(self.dims[axis] - 1)
            })
            .collect()
    }

    /// Flat indices of the nodes whose `axis`-index is zero: one per grid
    /// line along `axis`.
    pub fn line_starts(&self, axis: usize) -> Vec<usize> {
        let stride = self.stride(axis);
        let n = self.dims[axis];
        let total = self.len();
        let mut starts = Vec::with_capacity(total / n);
        let block = stride * n;
        let mut base = 0;
        while base < total {
            for off in 0..stride {
                starts.push(base + off);
            }
            base += block;
        }
        starts
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Dense field of values over a grid, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<V> {
    grid: GridSpec,
    values: Vec<V>,
}

impl<V: Clone> Field<V> {
    pub fn new(grid: GridSpec, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, value: V) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> V + Sync) -> Self
    where
        V: Send,
    {
        let values: Vec<V> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let idx = grid.multi_index(flat);
                f(&grid.node_coords(&idx))
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    pub fn at(&self, idx: &[usize]) -> &V {
        &self.values[self.grid.flat_index(idx)]
    }

    pub fn at_flat(&self, flat: usize) -> &V {
        &self.values[flat]
    }

    pub fn map<W: Clone + Send>(&self, f: impl Fn(&V) -> W + Sync) -> Field<W>
    where
        V: Sync,
    {
        Field {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Clone + Sync, W: Clone + Send>(
        &self,
        other: &Field<U>,
        f: impl Fn(&V, &U) -> W + Sync,
    ) -> Result<Field<W>>
    where
        V: Sync,
    {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch(
                "zip_map over different grids".to_string(),
            ));
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }
}

/// Values a finite-difference stencil can combine linearly.
pub trait StencilValue: Clone + Send + Sync {
    fn zero_like(&self) -> Self;
    fn scale_mut(&mut self, a: f64);
    /// self += a·x
    fn axpy(&mut self, a: f64, x: &Self);
}

impl StencilValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn scale_mut(&mut self, a: f64) {
        *self *= a;
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
}

impl StencilValue for nalgebra::Vector3<f64> {
    fn zero_like(&self) -> Self {
        nalgebra::Vector3::zeros()
    }
    fn scale_mut(&mut self, a: f64) {
        *self *= a;
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
}

impl StencilValue for CMat {
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn scale_mut(&mut self, a: f64) {
        self.iter_mut().for_each(|z| *z *= a);
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x.iter()).for_each(|(z, w)| *z += w * a);
    }
}

impl StencilValue for RMat {
    fn zero_like(&self) -> Self {
        RMat::zeros(self.nrows(), self.ncols())
    }
    fn scale_mut(&mut self, a: f64) {
        self.iter_mut().for_each(|z| *z *= a);
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x.iter()).for_each(|(z, w)| *z += w * a);
    }
}

impl StencilValue for RVec {
    fn zero_like(&self) -> Self {
        RVec::zeros(self.nrows())
    }
    fn scale_mut(&mut self, a: f64) {
        self.iter_mut().for_each(|z| *z *= a);
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x.iter()).for_each(|(z, w)| *z += w * a);
    }
}

/// Requested order of accuracy for difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accuracy {
    Two,
    Four,
}

impl Accuracy {
    fn order(self) -> usize {
        match self {
            Accuracy::Two => 2,
            Accuracy::Four => 4,
        }
    }
}

fn first_derivative_stencil(k: usize, n: usize, acc: Accuracy) -> (Vec<usize>, Vec<f64>) {
    match acc {
        Accuracy::Two => {
            if k == 0 {
                (vec![0, 1, 2], vec![-1.5, 2.0, -0.5])
            } else if k == n - 1 {
                (vec![n - 3, n - 2, n - 1], vec![0.5, -2.0, 1.5])
            } else {
                (vec![k - 1, k + 1], vec![-0.5, 0.5])
            }
        }
        Accuracy::Four => {
            if k == 0 {
                (
                    vec![0, 1, 2, 3, 4],
                    vec![-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
                )
            } else if k == 1 {
                (
                    vec![0, 1, 2, 3, 4],
                    vec![-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0],
                )
            } else if k == n - 2 {
                (
                    vec![n - 5, n - 4, n - 3, n - 2, n - 1],
                    vec![-1.0 / 12.0, 0.5, -1.5, 5.0 / 6.0, 0.25],
                )
            } else if k == n - 1 {
                (
                    vec![n - 5, n - 4, n - 3, n - 2, n - 1],
                    vec![0.25, -4.0 / 3.0, 3.0, -4.0, 25.0 / 12.0],
                )
            } else {
                (
                    vec![k - 2, k - 1, k + 1, k + 2],
                    vec![1.0 / 12.0, -2.0 / 3.0, 2.0 / 3.0, -1.0 / 12.0],
                )
            }
        }
    }
}

fn second_derivative_stencil(k: usize, n: usize) -> (Vec<usize>, Vec<f64>) {
    if k == 0 {
        (vec![0, 1, 2, 3], vec![2.0, -5.0, 4.0, -1.0])
    } else if k == n - 1 {
        (vec![n - 4, n - 3, n - 2, n - 1], vec![-1.0, 4.0, -5.0, 2.0])
    } else {
        (vec![k - 1, k, k + 1], vec![1.0, -2.0, 1.0])
    }
}

/// ∂f/∂x_axis with central differences in the interior and one-sided
/// closures of the same order at the boundary.
pub fn partial_derivative<V: StencilValue>(
    f: &Field<V>,
    axis: usize,
    acc: Accuracy,
) -> Result<Field<V>> {
    let grid = f.grid();
    if axis >= grid.ndim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dims: grid.ndim(),
        });
    }
    let n = grid.dims()[axis];
    if n < acc.order() + 1 {
        return Err(Error::GridTooSmall {
            axis,
            len: n,
            needed: acc.order() + 1,
        });
    }
    let h = grid.spacing()[axis];
    let stride = grid.stride(axis);
    let inv_h = 1.0 / h;
    let values: Vec<V> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let k = (flat / stride) % n;
            let line_base = flat - k * stride;
            let (nodes, weights) = first_derivative_stencil(k, n, acc);
            let mut out = f.values()[flat].zero_like();
            for (node, w) in nodes.iter().zip(weights.iter()) {
                out.axpy(w * inv_h, &f.values()[line_base + node * stride]);
            }
            out
        })
        .collect();
    Field::new(grid.clone(), values)
}

/// ∂²f/∂x_axis² with the dedicated 3-point interior / 4-point one-sided
/// second-order stencils (exact on cubics at interior nodes).
pub fn second_derivative<V: StencilValue>(f: &Field<V>, axis: usize) -> Result<Field<V>> {
    let grid = f.grid();
    if axis >= grid.ndim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dims: grid.ndim(),
        });
    }
    let n = grid.dims()[axis];
    if n < 4 {
        return Err(Error::GridTooSmall {
            axis,
            len: n,
            needed: 4,
        });
    }
    let h = grid.spacing()[axis];
    let stride = grid.stride(axis);
    let inv_h2 = 1.0 / (h * h);
    let values: Vec<V> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let k = (flat / stride) % n;
            let line_base = flat - k * stride;
            let (nodes, weights) = second_derivative_stencil(k, n);
            let mut out = f.values()[flat].zero_like();
            for (node, w) in nodes.iter().zip(weights.iter()) {
                out.axpy(w * inv_h2, &f.values()[line_base + node * stride]);
            }
            out
        })
        .collect();
    Field::new(grid.clone(), values)
}

/// Multilinear interpolation of the field at an arbitrary point of the
/// grid's bounding box.
pub fn sample<V: StencilValue>(f: &Field<V>, point: &[f64]) -> Result<V> {
    let grid = f.grid();
    if point.len() != grid.ndim() {
        return Err(Error::OutOfDomain {
            point: point.to_vec(),
        });
    }
    let d = grid.ndim();
    let mut cell = vec![0usize; d];
    let mut frac = vec![0.0f64; d];
    for axis in 0..d {
        let u = (point[axis] - grid.origin()[axis]) / grid.spacing()[axis];
        let n = grid.dims()[axis];
        if u < -1e-9 || u > (n - 1) as f64 + 1e-9 {
            return Err(Error::OutOfDomain {
                point: point.to_vec(),
            });
        }
        let i = (u.floor().max(0.0) as usize).min(n - 2);
        cell[axis] = i;
        frac[axis] = u - i as f64;
    }
    let mut out = f.values()[0].zero_like();
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = vec![0usize; d];
        for axis in 0..d {
            if corner >> axis & 1 == 1 {
                idx[axis] = cell[axis] + 1;
                w *= frac[axis];
            } else {
                idx[axis] = cell[axis];
                w *= 1.0 - frac[axis];
            }
        }
        if w != 0.0 {
            out.axpy(w, f.at(&idx));
        }
    }
    Ok(out)
}

/// Cumulative line integral G[k] ≈ ∫ g dx from node 0 to node k at fourth
/// order: composite trapezoid plus the Euler-Maclaurin endpoint correction
/// −h²/12·(g'(x_k) − g'(x_0)) with g' from second-order stencils.
pub fn cumulative_integral<V: StencilValue>(values: &[V], h: f64) -> Vec<V> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = values[0].zero_like();
    out.push(acc.clone());
    for k in 1..n {
        acc.axpy(0.5 * h, &values[k - 1]);
        acc.axpy(0.5 * h, &values[k]);
        out.push(acc.clone());
    }
    if n >= 3 {
        let deriv_at = |k: usize| -> V {
            let (nodes, weights) = first_derivative_stencil(k, n, Accuracy::Two);
            let mut d = values[0].zero_like();
            for (node, w) in nodes.iter().zip(weights.iter()) {
                d.axpy(w / h, &values[*node]);
            }
            d
        };
        let g0 = deriv_at(0);
        let corr = h * h / 12.0;
        for (k, item) in out.iter_mut().enumerate().skip(1) {
            let gk = deriv_at(k);
            item.axpy(-corr, &gk);
            item.axpy(corr, &g0);
        }
    }
    out
}

/// Max of a per-node magnitude over the whole field.
pub fn max_over<V: Clone + Sync>(f: &Field<V>, magnitude: impl Fn(&V) -> f64 + Sync) -> f64 {
    f.values()
        .par_iter()
        .map(|v| magnitude(v))
        .reduce(|| 0.0, f64::max)
}

impl Field<f64> {
    pub fn max_abs(&self) -> f64 {
        max_over(self, |v| v.abs())
    }
}

impl Field<CMat> {
    pub fn max_fro(&self) -> f64 {
        max_over(self, crate::matrix::fro_norm)
    }
}
