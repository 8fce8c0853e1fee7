//! Sine-Gordon machinery in asymptotic coordinates (s, t): seed solutions,
//! the ODE Bäcklund transform, the algebraic permutability formula, Lie
//! transforms, and the su(2) Lax pair.
//!
//! The equation convention is q_st = sin q cos q throughout, the one the
//! Lax pair below is flat for. Axis 0 of every grid is s, axis 1 is t.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{partial_derivative, sample, Accuracy, Field, GridSpec};
use crate::matrix::{c, cr, CMat};
use crate::sweep::{integrate_sweep, MidpointRule, SweepOptions, SweepOrder};
use crate::tolerances;
use crate::zero_curvature::Connection;

/// Bäcklund parameter μ ≠ 0; geometrically μ = tan(θ/2) for the congruence
/// angle θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtParam {
    mu: f64,
}

impl BtParam {
    pub fn new(mu: f64) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(Error::ZeroParameter { name: "mu" });
        }
        Ok(Self { mu })
    }

    pub fn mu(self) -> f64 {
        self.mu
    }
}

/// A scalar field q(s,t) together with its sine-Gordon residual report.
#[derive(Debug, Clone)]
pub struct SgeSolution {
    q: Field<f64>,
    residual_max: f64,
    verified: bool,
    mu_history: Vec<f64>,
}

impl SgeSolution {
    /// Wrap a sampled field, computing its residual. `verified` is set iff
    /// the max residual is within the default tolerance.
    pub fn from_field(q: Field<f64>) -> Result<Self> {
        Self::with_history(q, Vec::new())
    }

    pub fn with_history(q: Field<f64>, mu_history: Vec<f64>) -> Result<Self> {
        if q.grid().ndim() != 2 {
            return Err(Error::InvalidGrid(
                "sine-Gordon solutions live on 2-d (s,t) grids".into(),
            ));
        }
        let residual_max = sge_residual(&q)?.max_abs();
        Ok(Self {
            verified: residual_max <= tolerances::RESIDUAL_TOL,
            q,
            residual_max,
            mu_history,
        })
    }

    pub fn vacuum(grid: GridSpec) -> Result<Self> {
        Self::from_field(Field::constant(grid, 0.0))
    }

    pub fn q(&self) -> &Field<f64> {
        &self.q
    }

    pub fn grid(&self) -> &GridSpec {
        self.q.grid()
    }

    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn verified(&self) -> bool {
        self.verified
    }

    pub fn mu_history(&self) -> &[f64] {
        &self.mu_history
    }

    pub fn require_verified(&self) -> Result<()> {
        if self.verified {
            Ok(())
        } else {
            Err(Error::NotASolution {
                check: "sge residual",
                value: self.residual_max,
                tol: tolerances::RESIDUAL_TOL,
            })
        }
    }

    /// Node index closest to (s,t) = (0,0), the default basepoint for
    /// transforms anchored at the origin.
    pub fn origin_node(&self) -> Vec<usize> {
        self.grid().nearest_node(&[0.0, 0.0])
    }
}

/// Residual field q_st − sin q cos q, the mixed partial taken by composing
/// the central differences in s and t.
pub fn sge_residual(q: &Field<f64>) -> Result<Field<f64>> {
    let q_s = partial_derivative(q, 0, Accuracy::Two)?;
    let q_st = partial_derivative(&q_s, 1, Accuracy::Two)?;
    q_st.zip_map(q, |qst, qv| qst - qv.sin() * qv.cos())
}

/// Closed-form 1-soliton value α(s,t) = 2 arctan(exp(μs + t/μ)). The
/// exponent is clamped at ±700; beyond that the arctan has saturated to its
/// limit anyway.
pub fn one_soliton_value(mu: f64, s: f64, t: f64) -> f64 {
    let arg = (mu * s + t / mu).clamp(-700.0, 700.0);
    2.0 * arg.exp().atan()
}

/// Closed-form 1-soliton sampled on a grid.
pub fn one_soliton(grid: GridSpec, mu: BtParam) -> Result<SgeSolution> {
    let m = mu.mu();
    let q = Field::from_fn(grid, |p| one_soliton_value(m, p[0], p[1]));
    SgeSolution::with_history(q, vec![m])
}

/// Defects of the first-order Bäcklund system for a candidate pair
/// (q*, q): max |(q*+q)_s − μ sin(q*−q)| and max |(q*−q)_t − μ⁻¹ sin(q*+q)|,
/// derivatives by central differences.
pub fn bt_defect(qstar: &Field<f64>, q: &Field<f64>, mu: BtParam) -> Result<(f64, f64)> {
    let m = mu.mu();
    let sum = qstar.zip_map(q, |a, b| a + b)?;
    let diff = qstar.zip_map(q, |a, b| a - b)?;
    let sum_s = partial_derivative(&sum, 0, Accuracy::Two)?;
    let diff_t = partial_derivative(&diff, 1, Accuracy::Two)?;
    let defect_s = sum_s
        .zip_map(&diff, |ds, dv| ds - m * dv.sin())?
        .max_abs();
    let defect_t = diff_t
        .zip_map(&sum, |dt, sv| dt - sv.sin() / m)?
        .max_abs();
    Ok((defect_s, defect_t))
}

/// Integration controls for the Bäcklund ODE system.
#[derive(Debug, Clone, Copy)]
pub struct BtOptions {
    /// RK4 substeps per grid cell; the effective step is h/substeps.
    pub substeps: usize,
    pub midpoint: MidpointRule,
}

impl Default for BtOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            midpoint: MidpointRule::Cubic,
        }
    }
}

/// Diagnostics attached to a Bäcklund output.
#[derive(Debug, Clone, Copy)]
pub struct BtReport {
    /// defect of the s-equation of the output pair
    pub eq_s_defect: f64,
    /// defect of the t-equation of the output pair
    pub eq_t_defect: f64,
    /// sup difference between the two integration orders
    pub path_defect: f64,
}

/// Solve (q*+q)_s = μ sin(q*−q), (q*−q)_t = μ⁻¹ sin(q*+q) for q* by RK4
/// along the s-line through the origin node and then along t-lines, with
/// q*(0,0) = qstar0. The seed must be a verified solution; the reverse
/// integration order is run as a compatibility diagnostic.
pub fn backlund(
    q: &SgeSolution,
    mu: BtParam,
    qstar0: f64,
    opts: BtOptions,
) -> Result<(SgeSolution, BtReport)> {
    q.require_verified()?;
    let m = mu.mu();
    let grid = q.grid().clone();
    let q_s = partial_derivative(q.q(), 0, Accuracy::Two)?;
    let q_t = partial_derivative(q.q(), 1, Accuracy::Two)?;
    let coeff_s = q.q().zip_map(&q_s, |a, b| (*a, *b))?;
    let coeff_t = q.q().zip_map(&q_t, |a, b| (*a, *b))?;
    let basepoint = q.origin_node();
    let rhs = move |axis: usize, qs: &f64, cv: &(f64, f64)| -> f64 {
        let (qv, dq) = *cv;
        match axis {
            0 => -dq + m * (qs - qv).sin(),
            _ => dq + (qs + qv).sin() / m,
        }
    };
    let sweep = SweepOptions {
        order: SweepOrder::AxisOrdered,
        midpoint: opts.midpoint,
        substeps: opts.substeps,
    };
    let coeffs = [&coeff_s, &coeff_t];
    let values = integrate_sweep(&grid, &coeffs, &basepoint, qstar0, sweep, &rhs)?;
    let values_rev = integrate_sweep(
        &grid,
        &coeffs,
        &basepoint,
        qstar0,
        SweepOptions {
            order: SweepOrder::ReverseOrdered,
            ..sweep
        },
        &rhs,
    )?;
    let path_defect = values
        .par_iter()
        .zip(values_rev.par_iter())
        .map(|(a, b)| (a - b).abs())
        .reduce(|| 0.0, f64::max);
    let qstar = Field::new(grid, values)?;
    let (eq_s_defect, eq_t_defect) = bt_defect(&qstar, q.q(), mu)?;
    let mut history = q.mu_history().to_vec();
    history.push(m);
    let solution = SgeSolution::with_history(qstar, history)?;
    Ok((
        solution,
        BtReport {
            eq_s_defect,
            eq_t_defect,
            path_defect,
        },
    ))
}

/// Continuous branch of v ↦ arctan(k·tan(v)): equals atan2(k sin v, cos v)
/// plus the winding correction that keeps it continuous in v and zero at 0.
fn scaled_angle(k: f64, v: f64) -> f64 {
    if k < 0.0 {
        // tan Φ = k tan v = |k| tan(−v)
        return scaled_angle(-k, -v);
    }
    let principal = (k * v.sin()).atan2(v.cos());
    let winding = ((v - principal) / (2.0 * std::f64::consts::PI)).round();
    principal + 2.0 * std::f64::consts::PI * winding
}

/// Bianchi permutability: the fourth solution of the Bäcklund quadrilateral,
/// tan((q₃−q₀)/2) = k·tan((q₁−q₂)/2), evaluated pointwise on the branch
/// continuous in (q₁−q₂)/2.
///
/// μ₁, μ₂ are the parameters of the first-order systems joining q₁, q₂ to
/// the seed q₀ (the same μ that `backlund` takes). With that normalization
/// the coefficient closing the quadrilateral is k = (μ₁+μ₂)/(μ₂−μ₁): the
/// output then solves the μ₂-system against q₁ and the μ₁-system against
/// q₂, which is checked by the tests. (Writing the transform parameters as
/// μᵢ = tan(θᵢ/2) in congruence angles, k = (cot(θ₁/2)+cot(θ₂/2))/
/// (cot(θ₁/2)−cot(θ₂/2)).)
pub fn permutability(
    q0: &SgeSolution,
    q1: &SgeSolution,
    q2: &SgeSolution,
    mu1: BtParam,
    mu2: BtParam,
) -> Result<SgeSolution> {
    if !q0.grid().same_shape(q1.grid()) || !q0.grid().same_shape(q2.grid()) {
        return Err(Error::GridMismatch("permutability inputs".into()));
    }
    let (m1, m2) = (mu1.mu(), mu2.mu());
    if m1 == m2 || m1 == -m2 {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: format!("permutability needs μ₁ ≠ ±μ₂, got {m1} and {m2}"),
        });
    }
    let k = (m1 + m2) / (m2 - m1);
    let half = q1.q().zip_map(q2.q(), |a, b| 0.5 * (a - b))?;
    let q3 = q0.q().zip_map(&half, |q0v, u| q0v + 2.0 * scaled_angle(k, *u))?;
    let mut history = q0.mu_history().to_vec();
    history.extend_from_slice(&[m1, m2]);
    SgeSolution::with_history(q3, history)
}

/// Lie transform q̃(s,t) = q(r·s, t/r). With no target grid the output grid
/// is the exactly rescaled one, so values transfer node-to-node; with a
/// target grid the source is resampled bilinearly (points must stay inside
/// the source domain).
pub fn lie_transform(
    q: &SgeSolution,
    r: f64,
    target: Option<GridSpec>,
) -> Result<SgeSolution> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::ZeroParameter { name: "r" });
    }
    match target {
        None => {
            let g = q.grid();
            let (n_s, n_t) = (g.dims()[0], g.dims()[1]);
            let (h_s, h_t) = (g.spacing()[0], g.spacing()[1]);
            let (o_s, o_t) = (g.origin()[0], g.origin()[1]);
            // node i of the new s-axis must satisfy r·s̃ᵢ = s-node; for
            // negative r the axis orientation flips
            let (new_o_s, flip_s) = if r > 0.0 {
                (o_s / r, false)
            } else {
                ((o_s + (n_s - 1) as f64 * h_s) / r, true)
            };
            let (new_o_t, flip_t) = if r > 0.0 {
                (o_t * r, false)
            } else {
                ((o_t + (n_t - 1) as f64 * h_t) * r, true)
            };
            let new_grid = GridSpec::new(
                vec![n_s, n_t],
                vec![new_o_s, new_o_t],
                vec![h_s / r.abs(), h_t * r.abs()],
            )?;
            let mut values = Vec::with_capacity(q.q().values().len());
            for i in 0..n_s {
                let si = if flip_s { n_s - 1 - i } else { i };
                for j in 0..n_t {
                    let tj = if flip_t { n_t - 1 - j } else { j };
                    values.push(*q.q().at(&[si, tj]));
                }
            }
            SgeSolution::with_history(Field::new(new_grid, values)?, q.mu_history().to_vec())
        }
        Some(new_grid) => {
            let src = q.q();
            let mut values = Vec::with_capacity(new_grid.len());
            for flat in 0..new_grid.len() {
                let idx = new_grid.multi_index(flat);
                let s = new_grid.coord(0, idx[0]);
                let t = new_grid.coord(1, idx[1]);
                values.push(sample(src, &[r * s, t / r])?);
            }
            SgeSolution::with_history(Field::new(new_grid, values)?, q.mu_history().to_vec())
        }
    }
}

/// Multi-soliton built on the Bianchi lattice: level-1 solutions are
/// closed-form 1-solitons, higher levels come from the permutability
/// formula applied recursively, starting from the vacuum. Every
/// intermediate must come out residual-verified.
pub fn multi_soliton(grid: GridSpec, mus: &[BtParam]) -> Result<SgeSolution> {
    if mus.is_empty() {
        return SgeSolution::vacuum(grid);
    }
    for (i, a) in mus.iter().enumerate() {
        for b in mus.iter().skip(i + 1) {
            if (a.mu().abs() - b.mu().abs()).abs() < 1e-14 {
                return Err(Error::InvalidParameter {
                    name: "mus",
                    reason: format!("|μ| values must be distinct, got {} and {}", a.mu(), b.mu()),
                });
            }
        }
    }
    fn build(grid: &GridSpec, mus: &[BtParam], subset: &[usize]) -> Result<SgeSolution> {
        match subset.len() {
            0 => SgeSolution::vacuum(grid.clone()),
            1 => one_soliton(grid.clone(), mus[subset[0]]),
            _ => {
                let a = subset[subset.len() - 1];
                let b = subset[subset.len() - 2];
                let rest: Vec<usize> = subset[..subset.len() - 2].to_vec();
                let mut with_a = rest.clone();
                with_a.push(a);
                let mut with_b = rest.clone();
                with_b.push(b);
                let q0 = build(grid, mus, &rest)?;
                let q1 = build(grid, mus, &with_a)?;
                let q2 = build(grid, mus, &with_b)?;
                let q3 = permutability(&q0, &q1, &q2, mus[a], mus[b])?;
                q3.require_verified()?;
                Ok(q3)
            }
        }
    }
    let subset: Vec<usize> = (0..mus.len()).collect();
    build(&grid, mus, &subset)
}

/// su(2) Lax pair of the solution: θ_λ = [[−iλ, −q_s],[q_s, iλ]] ds +
/// (i/4λ)[[cos 2q, −sin 2q],[−sin 2q, −cos 2q]] dt. Flat for every λ ≠ 0
/// exactly when q solves the equation; su(2)-valued for real λ.
pub fn sge_lax(q: &SgeSolution, lambda: Complex64) -> Result<Connection> {
    if lambda.norm() == 0.0 {
        return Err(Error::ZeroParameter { name: "lambda" });
    }
    let q_s = partial_derivative(q.q(), 0, Accuracy::Two)?;
    let b_s = q_s.map(|&qs| {
        CMat::from_row_slice(
            2,
            2,
            &[
                -Complex64::i() * lambda,
                cr(-qs),
                cr(qs),
                Complex64::i() * lambda,
            ],
        )
    });
    let w = Complex64::i() / (lambda * 4.0);
    let b_t = q.q().map(|&qv| {
        let (s2, c2) = (2.0 * qv).sin_cos();
        CMat::from_row_slice(2, 2, &[w * c2, -w * s2, -w * s2, -w * c2])
    });
    Connection::new(q.grid().clone(), vec![b_s, b_t], Some(lambda))
}

/// Entrywise su(2)-reality defect of a connection: max ‖B*(λ̄) + B(λ)‖ over
/// nodes and axes. For the Lax pair above with real λ the two connections
/// coincide, so this is max ‖B* + B‖.
pub fn su2_reality_defect(theta: &Connection) -> f64 {
    let mut max = 0.0f64;
    for axis in 0..theta.grid().ndim() {
        let m = theta
            .coeff(axis)
            .values()
            .par_iter()
            .map(|b| crate::matrix::fro_norm(&(b.adjoint() + b)))
            .reduce(|| 0.0, f64::max);
        max = max.max(m);
    }
    max
}

pub use crate::matrix::su2_to_r3;

/// Convenience: 2×2 complex entry shorthand used by tests.
pub fn c2(re: f64, im: f64) -> Complex64 {
    c(re, im)
}
