//! Connections θ = Σ Bᵢ dxᵢ, curvature residuals, parallel-frame
//! integration, and λ-derivatives of frame families.
//!
//! A connection is flat when F_ij = ∂ᵢB_j − ∂_jBᵢ + [Bᵢ, B_j] vanishes for
//! every axis pair; everything downstream verifies generated objects through
//! this residual.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{max_over, partial_derivative, Accuracy, Field, GridSpec};
use crate::matrix::{commutator, fro_norm, CMat};
use crate::sweep::{integrate_sweep, SweepOptions, SweepOrder};
use crate::tolerances;

/// Matrix-valued connection 1-form on a grid: one coefficient field per
/// coordinate direction, optionally tagged with the spectral parameter it
/// was evaluated at.
#[derive(Debug, Clone)]
pub struct Connection {
    grid: GridSpec,
    coeffs: Vec<Field<CMat>>,
    lambda: Option<Complex64>,
}

impl Connection {
    pub fn new(grid: GridSpec, coeffs: Vec<Field<CMat>>, lambda: Option<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.ndim() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficient fields for a {}-dimensional grid",
                coeffs.len(),
                grid.ndim()
            )));
        }
        let mut size = None;
        for (axis, c) in coeffs.iter().enumerate() {
            if !c.grid().same_shape(&grid) {
                return Err(Error::GridMismatch(format!(
                    "coefficient field {axis} lives on a different grid"
                )));
            }
            for m in c.values().iter().take(1) {
                if m.nrows() != m.ncols() {
                    return Err(Error::ShapeMismatch(
                        "connection coefficients must be square".into(),
                    ));
                }
                match size {
                    None => size = Some(m.nrows()),
                    Some(s) if s == m.nrows() => {}
                    Some(s) => {
                        return Err(Error::ShapeMismatch(format!(
                            "coefficient {axis} is {}×{}, expected {s}×{s}",
                            m.nrows(),
                            m.ncols()
                        )))
                    }
                }
            }
        }
        Ok(Self {
            grid,
            coeffs,
            lambda,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeff(&self, axis: usize) -> &Field<CMat> {
        &self.coeffs[axis]
    }

    pub fn coeffs(&self) -> &[Field<CMat>] {
        &self.coeffs
    }

    pub fn lambda(&self) -> Option<Complex64> {
        self.lambda
    }

    pub fn matrix_dim(&self) -> usize {
        self.coeffs[0].values()[0].nrows()
    }
}

/// Curvature residual of one axis pair.
#[derive(Debug, Clone)]
pub struct PairResidual {
    pub axes: (usize, usize),
    pub field: Field<CMat>,
    pub max_norm: f64,
}

/// All pairwise curvature residuals F_ij, i < j.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub pairs: Vec<PairResidual>,
}

impl CurvatureReport {
    pub fn max_norm(&self) -> f64 {
        self.pairs.iter().map(|p| p.max_norm).fold(0.0, f64::max)
    }

    pub fn is_flat_within(&self, tol: f64) -> bool {
        self.max_norm() <= tol
    }
}

/// F_ij = ∂ᵢB_j − ∂_jBᵢ + [Bᵢ, B_j] for every pair i < j.
pub fn curvature_residual(theta: &Connection) -> Result<CurvatureReport> {
    let d = theta.grid().ndim();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let di_bj = partial_derivative(theta.coeff(j), i, Accuracy::Two)?;
            let dj_bi = partial_derivative(theta.coeff(i), j, Accuracy::Two)?;
            let bi = theta.coeff(i);
            let bj = theta.coeff(j);
            let values: Vec<CMat> = (0..theta.grid().len())
                .into_par_iter()
                .map(|flat| {
                    &di_bj.values()[flat] - &dj_bi.values()[flat]
                        + commutator(&bi.values()[flat], &bj.values()[flat])
                })
                .collect();
            let field = Field::new(theta.grid().clone(), values)?;
            let max_norm = max_over(&field, fro_norm);
            pairs.push(PairResidual {
                axes: (i, j),
                field,
                max_norm,
            });
        }
    }
    Ok(CurvatureReport { pairs })
}

/// Quick flatness number: max over axis pairs and nodes of ‖F_ij‖.
pub fn flatness_defect(theta: &Connection) -> Result<f64> {
    Ok(curvature_residual(theta)?.max_norm())
}

/// Parallel frame: per-node invertible matrices E with E⁻¹dE = θ and
/// E(basepoint) = initial.
#[derive(Debug, Clone)]
pub struct Frame {
    grid: GridSpec,
    values: Vec<CMat>,
    basepoint: Vec<usize>,
    initial: CMat,
    /// curvature defect of the integrated connection, when it was checked
    pub flatness_defect: Option<f64>,
}

impl Frame {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn at(&self, idx: &[usize]) -> &CMat {
        &self.values[self.grid.flat_index(idx)]
    }

    pub fn at_flat(&self, flat: usize) -> &CMat {
        &self.values[flat]
    }

    pub fn basepoint(&self) -> &[usize] {
        &self.basepoint
    }

    pub fn initial(&self) -> &CMat {
        &self.initial
    }

    pub fn matrix_dim(&self) -> usize {
        self.initial.nrows()
    }

    pub fn min_abs_det(&self) -> f64 {
        self.values
            .par_iter()
            .map(|m| m.determinant().norm())
            .reduce(|| f64::INFINITY, f64::min)
    }

    pub fn as_field(&self) -> Field<CMat> {
        Field::new(self.grid.clone(), self.values.clone()).expect("frame sizes agree")
    }

    /// Max Frobenius distance to another frame on the same grid.
    pub fn max_distance(&self, other: &Frame) -> Result<f64> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::GridMismatch("frame comparison".into()));
        }
        Ok(self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| fro_norm(&(a - b)))
            .reduce(|| 0.0, f64::max))
    }
}

/// Options for frame integration.
#[derive(Debug, Clone, Copy)]
pub struct FrameOptions {
    pub sweep: SweepOptions,
    /// compute the curvature residual and stash it on the frame; the
    /// integration itself never fails on a non-flat connection
    pub check_flatness: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            sweep: SweepOptions::default(),
            check_flatness: true,
        }
    }
}

impl FrameOptions {
    pub fn quiet() -> Self {
        Self {
            sweep: SweepOptions::default(),
            check_flatness: false,
        }
    }

    pub fn with_order(mut self, order: SweepOrder) -> Self {
        self.sweep.order = order;
        self
    }
}

/// Solve E⁻¹∂ᵢE = Bᵢ by line-by-line RK4 in the given axis order, with
/// E(basepoint) = initial.
pub fn integrate_frame(
    theta: &Connection,
    initial: &CMat,
    basepoint: &[usize],
    order: SweepOrder,
) -> Result<Frame> {
    integrate_frame_with(theta, initial, basepoint, FrameOptions::default().with_order(order))
}

pub fn integrate_frame_with(
    theta: &Connection,
    initial: &CMat,
    basepoint: &[usize],
    opts: FrameOptions,
) -> Result<Frame> {
    let n = theta.matrix_dim();
    if initial.nrows() != n || initial.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "initial frame is {}×{}, connection is {n}×{n}",
            initial.nrows(),
            initial.ncols()
        )));
    }
    let det = initial.determinant().norm();
    if det < tolerances::FRAME_DET_FLOOR {
        return Err(Error::SingularInitial { det });
    }
    let flatness = if opts.check_flatness {
        Some(flatness_defect(theta)?)
    } else {
        None
    };
    let coeff_refs: Vec<&Field<CMat>> = theta.coeffs().iter().collect();
    let values = integrate_sweep(
        theta.grid(),
        &coeff_refs,
        basepoint,
        initial.clone(),
        opts.sweep,
        |_axis, e: &CMat, b: &CMat| e * b,
    )?;
    let frame = Frame {
        grid: theta.grid().clone(),
        values,
        basepoint: basepoint.to_vec(),
        initial: initial.clone(),
        flatness_defect: flatness,
    };
    let min_det = frame.min_abs_det();
    if min_det < tolerances::FRAME_DET_FLOOR {
        return Err(Error::Degenerate {
            count: 1,
            total: frame.grid.len(),
            context: format!("frame determinant collapsed to {min_det:.3e}"),
        });
    }
    Ok(frame)
}

/// Difference between the two sweep policies, the discretization defect of
/// frame integration on a (numerically) flat connection.
pub fn path_discrepancy(theta: &Connection, initial: &CMat, basepoint: &[usize]) -> Result<f64> {
    let fwd = integrate_frame_with(theta, initial, basepoint, FrameOptions::quiet())?;
    let rev = integrate_frame_with(
        theta,
        initial,
        basepoint,
        FrameOptions::quiet().with_order(SweepOrder::ReverseOrdered),
    )?;
    fwd.max_distance(&rev)
}

/// ∂E/∂λ·E⁻¹ at λ₀ by a central difference over two integrated frames at
/// λ₀ ± dλ.
pub fn lambda_derivative_frame(
    family: &dyn Fn(Complex64) -> Result<Connection>,
    lambda0: Complex64,
    dlambda: f64,
    initial: &CMat,
    basepoint: &[usize],
    opts: FrameOptions,
) -> Result<Field<CMat>> {
    if dlambda == 0.0 {
        return Err(Error::ZeroParameter { name: "dlambda" });
    }
    let dl = Complex64::new(dlambda, 0.0);
    let plus = integrate_frame_with(&family(lambda0 + dl)?, initial, basepoint, opts)?;
    let minus = integrate_frame_with(&family(lambda0 - dl)?, initial, basepoint, opts)?;
    let center = integrate_frame_with(&family(lambda0)?, initial, basepoint, opts)?;
    let scale = Complex64::new(1.0 / (2.0 * dlambda), 0.0);
    let values: Vec<CMat> = (0..center.grid().len())
        .into_par_iter()
        .map(|flat| {
            let diff = (plus.at_flat(flat) - minus.at_flat(flat)) * scale;
            let inv = center
                .at_flat(flat)
                .clone()
                .try_inverse()
                .expect("frame determinant already checked");
            diff * inv
        })
        .collect();
    Field::new(center.grid().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{cr, mat_exp, C_I, C_ONE, C_ZERO};
    use crate::sweep::MidpointRule;

    fn diag2(a: Complex64, b: Complex64) -> CMat {
        CMat::from_row_slice(2, 2, &[a, C_ZERO, C_ZERO, b])
    }

    #[test]
    fn constant_commuting_diagonal_connection_is_flat() {
        let grid = GridSpec::square(0.0, 1.0, 11).unwrap();
        let b1 = Field::constant(grid.clone(), diag2(cr(1.0), cr(2.0)));
        let b2 = Field::constant(grid.clone(), diag2(cr(-0.5), cr(0.25)));
        let theta = Connection::new(grid, vec![b1, b2], None).unwrap();
        let report = curvature_residual(&theta).unwrap();
        assert!(report.max_norm() < 1e-14);
    }

    /// g(x) = exp(x₁X + x₂Y) with non-commuting X, Y; θ = g⁻¹dg is exactly
    /// flat, so the residual is pure discretization error, O(h²).
    fn pure_gauge_connection(n: usize) -> Connection {
        let grid = GridSpec::square(0.0, 1.0, n).unwrap();
        let x = CMat::from_row_slice(2, 2, &[C_ZERO, cr(0.5), C_ZERO, C_ZERO]);
        let y = CMat::from_row_slice(2, 2, &[C_ZERO, C_ZERO, cr(0.5), C_ZERO]);
        let g_at = |s: f64, t: f64| mat_exp(&(&x * cr(s) + &y * cr(t)));
        // exact directional derivatives of exp are awkward; sample g and use
        // a very fine central difference in the smooth parameter instead
        let eps = 1e-6;
        let b1 = Field::from_fn(grid.clone(), |p| {
            let g = g_at(p[0], p[1]);
            let dg = (g_at(p[0] + eps, p[1]) - g_at(p[0] - eps, p[1])) * cr(0.5 / eps);
            g.try_inverse().unwrap() * dg
        });
        let b2 = Field::from_fn(grid.clone(), |p| {
            let g = g_at(p[0], p[1]);
            let dg = (g_at(p[0], p[1] + eps) - g_at(p[0], p[1] - eps)) * cr(0.5 / eps);
            g.try_inverse().unwrap() * dg
        });
        Connection::new(grid, vec![b1, b2], None).unwrap()
    }

    #[test]
    fn pure_gauge_residual_decays_at_second_order() {
        let r1 = curvature_residual(&pure_gauge_connection(11)).unwrap().max_norm();
        let r2 = curvature_residual(&pure_gauge_connection(21)).unwrap().max_norm();
        let r4 = curvature_residual(&pure_gauge_connection(41)).unwrap().max_norm();
        let order12 = (r1 / r2).log2();
        let order24 = (r2 / r4).log2();
        assert!(order12 >= 1.8, "observed order {order12} (r1={r1:.3e}, r2={r2:.3e})");
        assert!(order24 >= 1.8, "observed order {order24} (r2={r2:.3e}, r4={r4:.3e})");
    }

    #[test]
    fn frame_of_constant_connection_is_exponential() {
        let grid = GridSpec::new(vec![101, 3], vec![0.0, 0.0], vec![0.01, 1.0]).unwrap();
        let a = CMat::from_row_slice(2, 2, &[C_ZERO, cr(1.0), cr(-1.0), C_ZERO]);
        let b1 = Field::constant(grid.clone(), a.clone());
        let b2 = Field::constant(grid.clone(), CMat::zeros(2, 2));
        let theta = Connection::new(grid.clone(), vec![b1, b2], None).unwrap();
        let init = CMat::identity(2, 2);
        let frame = integrate_frame(&theta, &init, &[0, 0], SweepOrder::AxisOrdered).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..101 {
            let x = grid.coord(0, k);
            let expected = mat_exp(&(&a * cr(x)));
            max_err = max_err.max(fro_norm(&(frame.at(&[k, 0]) - expected)));
        }
        assert!(max_err < 1e-8, "max err {max_err}");
        assert!(frame.flatness_defect.unwrap() < 1e-12);
    }

    #[test]
    fn frame_of_zero_connection_is_constant() {
        let grid = GridSpec::square(-1.0, 1.0, 9).unwrap();
        let z = Field::constant(grid.clone(), CMat::zeros(2, 2));
        let theta = Connection::new(grid, vec![z.clone(), z], None).unwrap();
        let init = CMat::from_row_slice(2, 2, &[cr(2.0), C_ONE, C_ZERO, cr(0.5)]);
        let frame = integrate_frame(&theta, &init, &[4, 4], SweepOrder::AxisOrdered).unwrap();
        for v in frame.values() {
            assert!(fro_norm(&(v - &init)) < 1e-14);
        }
    }

    #[test]
    fn singular_initial_rejected() {
        let grid = GridSpec::square(0.0, 1.0, 5).unwrap();
        let z = Field::constant(grid.clone(), CMat::zeros(2, 2));
        let theta = Connection::new(grid, vec![z.clone(), z], None).unwrap();
        let singular = CMat::from_row_slice(2, 2, &[C_ONE, C_ONE, C_ONE, C_ONE]);
        assert!(matches!(
            integrate_frame(&theta, &singular, &[0, 0], SweepOrder::AxisOrdered),
            Err(Error::SingularInitial { .. })
        ));
    }

    #[test]
    fn flat_connection_path_independence() {
        // unit domain, h = 1e-2, genuinely non-commuting pure gauge
        let theta = pure_gauge_connection(101);
        let init = CMat::identity(2, 2);
        let disc = path_discrepancy(&theta, &init, &[0, 0]).unwrap();
        assert!(
            disc <= tolerances::PATH_INDEPENDENCE_TOL,
            "path discrepancy {disc}"
        );
        // the reported bound K·(residual + h⁴)
        let res = flatness_defect(&theta).unwrap();
        let h: f64 = 0.01;
        assert!(disc <= tolerances::PATH_DISCREPANCY_FACTOR * (res + h.powi(4)));
    }

    #[test]
    fn frame_determinant_preserved_for_tracefree_connection() {
        let theta = pure_gauge_connection(101);
        let init = CMat::identity(2, 2);
        let frame = integrate_frame(&theta, &init, &[0, 0], SweepOrder::AxisOrdered).unwrap();
        let max_det_err = frame
            .values()
            .iter()
            .map(|m| (m.determinant() - C_ONE).norm())
            .fold(0.0, f64::max);
        assert!(max_det_err <= tolerances::DET_DRIFT_TOL, "det drift {max_det_err}");
    }

    /// Vacuum sine-Gordon frames are diagonal exponentials; the λ-derivative
    /// has the closed form diag(−is − it/(4λ²), is + it/(4λ²)).
    fn vacuum_family(grid: &GridSpec) -> impl Fn(Complex64) -> Result<Connection> + '_ {
        move |lambda: Complex64| {
            let b_s = Field::constant(grid.clone(), diag2(-C_I * lambda, C_I * lambda));
            let w = C_I / (lambda * cr(4.0));
            let b_t = Field::constant(grid.clone(), diag2(w, -w));
            Connection::new(grid.clone(), vec![b_s, b_t], Some(lambda))
        }
    }

    #[test]
    fn lambda_derivative_matches_vacuum_closed_form() {
        let grid = GridSpec::square(-1.0, 1.0, 201).unwrap();
        let family = vacuum_family(&grid);
        let init = CMat::identity(2, 2);
        let bp = [100, 100];
        let lambda0 = cr(1.0);
        let dl = 1e-4;
        let out = lambda_derivative_frame(&family, lambda0, dl, &init, &bp, FrameOptions::quiet())
            .unwrap();
        // at the basepoint E(x₀, λ) = I for every λ, so the derivative is 0
        assert!(fro_norm(out.at(&bp)) < 1e-10);
        let mut max_err: f64 = 0.0;
        for flat in 0..grid.len() {
            let idx = grid.multi_index(flat);
            let s = grid.coord(0, idx[0]);
            let t = grid.coord(1, idx[1]);
            let d11 = Complex64::new(0.0, -s - t / 4.0);
            let expected = diag2(d11, -d11);
            max_err = max_err.max(fro_norm(&(out.at_flat(flat) - expected)));
        }
        assert!(max_err <= 1e-8, "max err {max_err}");
    }

    #[test]
    fn halving_dlambda_quarters_the_error() {
        let grid = GridSpec::square(-1.0, 1.0, 21).unwrap();
        let family = vacuum_family(&grid);
        let init = CMat::identity(2, 2);
        let bp = [10, 10];
        // use a larger dλ so the finite-difference term dominates RK4 error
        let err_at = |dl: f64| {
            let out =
                lambda_derivative_frame(&family, cr(1.0), dl, &init, &bp, FrameOptions::quiet())
                    .unwrap();
            let mut max_err: f64 = 0.0;
            for flat in 0..grid.len() {
                let idx = grid.multi_index(flat);
                let s = grid.coord(0, idx[0]);
                let t = grid.coord(1, idx[1]);
                let d11 = Complex64::new(0.0, -s - t / 4.0);
                let expected = diag2(d11, -d11);
                max_err = max_err.max(fro_norm(&(out.at_flat(flat) - expected)));
            }
            max_err
        };
        let e1 = err_at(0.05);
        let e2 = err_at(0.025);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_dlambda_rejected() {
        let grid = GridSpec::square(-1.0, 1.0, 5).unwrap();
        let family = vacuum_family(&grid);
        let init = CMat::identity(2, 2);
        assert!(matches!(
            lambda_derivative_frame(&family, cr(1.0), 0.0, &init, &[0, 0], FrameOptions::quiet()),
            Err(Error::ZeroParameter { .. })
        ));
    }

    #[test]
    fn cubic_midpoint_rule_available_for_frames() {
        let theta = pure_gauge_connection(41);
        let init = CMat::identity(2, 2);
        let mut opts = FrameOptions::quiet();
        opts.sweep.midpoint = MidpointRule::Cubic;
        let frame = integrate_frame_with(&theta, &init, &[0, 0], opts).unwrap();
        assert_eq!(frame.values().len(), 41 * 41);
    }
}
