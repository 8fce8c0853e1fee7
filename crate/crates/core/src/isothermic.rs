//! Isothermic surface data (q, r₁, r₂): the Gauss-Codazzi system
//!   q_{x₁x₁} + q_{x₂x₂} + r₁r₂ = 0,
//!   (r₁)_{x₂} = q_{x₂} r₂,
//!   (r₂)_{x₁} = q_{x₁} r₁,
//! its Christoffel involution (q, r₁, r₂) ↦ (−q, r₁, −r₂), the 5×5 Lax
//! pair, and reconstruction of the Christoffel pair of surfaces from
//! parallel frames by two routes (closed 1-form, λ-derivative block).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{partial_derivative, second_derivative, Accuracy, Field, GridSpec};
use crate::matrix::{complexify, cr, CMat, RMat};
use crate::surfaces::{fundamental_forms, ImmersionField, Provenance, SurfaceReport};
use crate::sweep::integrate_potential;
use crate::tolerances;
use crate::zero_curvature::{integrate_frame_with, Connection, FrameOptions};

/// Scalar data of an isothermic surface in conformal line-of-curvature
/// coordinates, with its residual report.
#[derive(Debug, Clone)]
pub struct IsothermicData {
    q: Field<f64>,
    r1: Field<f64>,
    r2: Field<f64>,
    residuals: [f64; 3],
    verified: bool,
}

impl IsothermicData {
    pub fn new(q: Field<f64>, r1: Field<f64>, r2: Field<f64>) -> Result<Self> {
        if q.grid().ndim() != 2 {
            return Err(Error::InvalidGrid("isothermic data lives on 2-d grids".into()));
        }
        if !q.grid().same_shape(r1.grid()) || !q.grid().same_shape(r2.grid()) {
            return Err(Error::GridMismatch("q, r1, r2".into()));
        }
        let max_q = q.max_abs();
        if max_q > 20.0 {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: format!("|q| up to {max_q:.2} would overflow e^q scales"),
            });
        }
        let residuals = iso_residual(&q, &r1, &r2)?;
        let max = residuals[0].max(residuals[1]).max(residuals[2]);
        Ok(Self {
            q,
            r1,
            r2,
            residuals,
            verified: max <= tolerances::RESIDUAL_TOL,
        })
    }

    /// The unit cylinder seed (q, r₁, r₂) = (0, 1, 0).
    pub fn cylinder(grid: GridSpec) -> Result<Self> {
        Self::new(
            Field::constant(grid.clone(), 0.0),
            Field::constant(grid.clone(), 1.0),
            Field::constant(grid, 0.0),
        )
    }

    /// The flat plane seed (0, 0, 0).
    pub fn plane(grid: GridSpec) -> Result<Self> {
        Self::new(
            Field::constant(grid.clone(), 0.0),
            Field::constant(grid.clone(), 0.0),
            Field::constant(grid, 0.0),
        )
    }

    pub fn q(&self) -> &Field<f64> {
        &self.q
    }

    pub fn r1(&self) -> &Field<f64> {
        &self.r1
    }

    pub fn r2(&self) -> &Field<f64> {
        &self.r2
    }

    pub fn grid(&self) -> &GridSpec {
        self.q.grid()
    }

    pub fn residuals(&self) -> [f64; 3] {
        self.residuals
    }

    pub fn residual_max(&self) -> f64 {
        self.residuals[0].max(self.residuals[1]).max(self.residuals[2])
    }

    pub fn verified(&self) -> bool {
        self.verified
    }

    pub fn require_verified(&self) -> Result<()> {
        if self.verified {
            Ok(())
        } else {
            Err(Error::NotASolution {
                check: "isothermic Gauss-Codazzi residual",
                value: self.residual_max(),
                tol: tolerances::RESIDUAL_TOL,
            })
        }
    }

    pub fn origin_node(&self) -> Vec<usize> {
        self.grid().nearest_node(&[0.0, 0.0])
    }
}

/// Max norms of the three residual groups.
pub fn iso_residual(q: &Field<f64>, r1: &Field<f64>, r2: &Field<f64>) -> Result<[f64; 3]> {
    let q11 = second_derivative(q, 0)?;
    let q22 = second_derivative(q, 1)?;
    let q1 = partial_derivative(q, 0, Accuracy::Two)?;
    let q2 = partial_derivative(q, 1, Accuracy::Two)?;
    let r1_2 = partial_derivative(r1, 1, Accuracy::Two)?;
    let r2_1 = partial_derivative(r2, 0, Accuracy::Two)?;
    let mut g = [0.0f64; 3];
    for flat in 0..q.grid().len() {
        g[0] = g[0].max(
            (q11.values()[flat] + q22.values()[flat] + r1.values()[flat] * r2.values()[flat])
                .abs(),
        );
        g[1] = g[1].max((r1_2.values()[flat] - q2.values()[flat] * r2.values()[flat]).abs());
        g[2] = g[2].max((r2_1.values()[flat] - q1.values()[flat] * r1.values()[flat]).abs());
    }
    Ok(g)
}

/// The Christoffel involution at the data level: (q, r₁, r₂) ↦ (−q, r₁, −r₂).
pub fn christoffel_dual_data(d: &IsothermicData) -> Result<IsothermicData> {
    IsothermicData::new(
        d.q().map(|v| -v),
        d.r1().clone(),
        d.r2().map(|v| -v),
    )
}

/// The 5×5 Lax connection θ_λ = [[w, λD],[−λJDᵀ, τ]]:
/// w the o(3) block built from (q, r₁, r₂), τ = [[0,−dq],[−dq,0]],
/// D = [diag(dx₁,dx₂); 0], J = diag(1,−1).
pub fn iso_lax(d: &IsothermicData, lambda: Complex64) -> Result<Connection> {
    let q1 = partial_derivative(d.q(), 0, Accuracy::Two)?;
    let q2 = partial_derivative(d.q(), 1, Accuracy::Two)?;
    let grid = d.grid().clone();
    let mut coeffs = Vec::with_capacity(2);
    for axis in 0..2 {
        let mut values = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let (qx1, qx2) = (q1.values()[flat], q2.values()[flat]);
            let (r1v, r2v) = (d.r1().values()[flat], d.r2().values()[flat]);
            let mut b = RMat::zeros(5, 5);
            if axis == 0 {
                b[(0, 1)] = qx2;
                b[(1, 0)] = -qx2;
                b[(0, 2)] = r1v;
                b[(2, 0)] = -r1v;
                b[(3, 4)] = -qx1;
                b[(4, 3)] = -qx1;
            } else {
                b[(0, 1)] = -qx1;
                b[(1, 0)] = qx1;
                b[(1, 2)] = r2v;
                b[(2, 1)] = -r2v;
                b[(3, 4)] = -qx2;
                b[(4, 3)] = -qx2;
            }
            let mut cb = complexify(&b);
            // λ-blocks: top-right λD and bottom-left −λJDᵀ
            cb[(axis, 3 + axis)] = lambda;
            let j_sign = if axis == 0 { 1.0 } else { -1.0 };
            cb[(3 + axis, axis)] = -lambda * j_sign;
            values.push(cb);
        }
        coeffs.push(Field::new(grid.clone(), values)?);
    }
    Connection::new(grid, coeffs, Some(lambda))
}

/// Reality defects of the Lax pair: (conjugation defect at real λ,
/// I_{3,2}-twist defect between θ_{−λ} and θ_λ).
pub fn iso_lax_reality_defect(d: &IsothermicData, lambda: f64) -> Result<(f64, f64)> {
    let plus = iso_lax(d, cr(lambda))?;
    let minus = iso_lax(d, cr(-lambda))?;
    let mut conj_defect = 0.0f64;
    for axis in 0..2 {
        conj_defect = conj_defect.max(crate::grid::max_over(
            plus.coeff(axis),
            crate::matrix::max_imag_entry,
        ));
    }
    let sig = crate::matrix::signature_matrix(3, 2);
    let mut twist_defect = 0.0f64;
    for axis in 0..2 {
        for (bp, bm) in plus
            .coeff(axis)
            .values()
            .iter()
            .zip(minus.coeff(axis).values().iter())
        {
            let twisted = &sig * bm * &sig;
            twist_defect = twist_defect.max(crate::matrix::fro_norm(&(twisted - bp)));
        }
    }
    Ok((conj_defect, twist_defect))
}

/// A Christoffel pair of surfaces on a shared grid.
#[derive(Debug, Clone)]
pub struct ChristoffelPair {
    pub f: ImmersionField,
    pub f_dual: ImmersionField,
}

/// Reconstruction diagnostics shared by both methods.
#[derive(Debug, Clone, Copy)]
pub struct PairDiagnostics {
    /// closedness defect of the integrated 1-form (method 1) or off-block
    /// leakage of the λ-derivative (method 2)
    pub structure_defect: f64,
}

/// The o(3) frame g₁ (integrated, normalized at the basepoint) and the
/// hyperbolic factor g₂(q) = [[cosh q, −sinh q],[−sinh q, cosh q]] taken in
/// closed form.
fn frame_blocks(d: &IsothermicData) -> Result<Field<RMat>> {
    let q1 = partial_derivative(d.q(), 0, Accuracy::Two)?;
    let q2 = partial_derivative(d.q(), 1, Accuracy::Two)?;
    let grid = d.grid().clone();
    let mut coeffs = Vec::with_capacity(2);
    for axis in 0..2 {
        let mut values = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let (qx1, qx2) = (q1.values()[flat], q2.values()[flat]);
            let (r1v, r2v) = (d.r1().values()[flat], d.r2().values()[flat]);
            let mut b = RMat::zeros(3, 3);
            if axis == 0 {
                b[(0, 1)] = qx2;
                b[(1, 0)] = -qx2;
                b[(0, 2)] = r1v;
                b[(2, 0)] = -r1v;
            } else {
                b[(0, 1)] = -qx1;
                b[(1, 0)] = qx1;
                b[(1, 2)] = r2v;
                b[(2, 1)] = -r2v;
            }
            values.push(complexify(&b));
        }
        coeffs.push(Field::new(grid.clone(), values)?);
    }
    let theta = Connection::new(grid.clone(), coeffs, None)?;
    let frame = integrate_frame_with(
        &theta,
        &CMat::identity(3, 3),
        &d.origin_node(),
        FrameOptions::quiet(),
    )?;
    Field::new(
        grid,
        frame
            .values()
            .iter()
            .map(crate::matrix::real_part)
            .collect(),
    )
}

fn pair_from_y(y: &Field<RMat>, grid: &GridSpec) -> Result<ChristoffelPair> {
    let f = Field::new(
        grid.clone(),
        y.values()
            .iter()
            .map(|m| nalgebra::Vector3::new(m[(0, 0)] + m[(0, 1)], m[(1, 0)] + m[(1, 1)], m[(2, 0)] + m[(2, 1)]))
            .collect(),
    )?;
    let f_dual = Field::new(
        grid.clone(),
        y.values()
            .iter()
            .map(|m| nalgebra::Vector3::new(m[(0, 0)] - m[(0, 1)], m[(1, 0)] - m[(1, 1)], m[(2, 0)] - m[(2, 1)]))
            .collect(),
    )?;
    Ok(ChristoffelPair {
        f: ImmersionField::new(f, Provenance::Christoffel)?,
        f_dual: ImmersionField::new(f_dual, Provenance::Christoffel)?,
    })
}

/// Method 1: integrate the o(3) frame at λ = 0, form the closed 1-form
/// ζ = g₁·[δ;0]·[[cosh q, sinh q],[sinh q, cosh q]], verify dζ = 0,
/// integrate Y with dY = ζ, and return Y·[[1,1],[1,−1]] as the pair.
pub fn christoffel_pair_method1(
    d: &IsothermicData,
) -> Result<(ChristoffelPair, PairDiagnostics)> {
    d.require_verified()?;
    let grid = d.grid().clone();
    let g1 = frame_blocks(d)?;
    // ζ per axis as 3×2 matrices
    let zeta1 = g1.zip_map(d.q(), |g, qv| {
        let (ch, sh) = (qv.cosh(), qv.sinh());
        RMat::from_fn(3, 2, |r, c| g[(r, 0)] * if c == 0 { ch } else { sh })
    })?;
    let zeta2 = g1.zip_map(d.q(), |g, qv| {
        let (ch, sh) = (qv.cosh(), qv.sinh());
        RMat::from_fn(3, 2, |r, c| g[(r, 1)] * if c == 0 { sh } else { ch })
    })?;
    // closedness: ∂₂ζ₁ − ∂₁ζ₂
    let d2z1 = partial_derivative(&zeta1, 1, Accuracy::Two)?;
    let d1z2 = partial_derivative(&zeta2, 0, Accuracy::Two)?;
    let mut structure_defect = 0.0f64;
    for flat in 0..grid.len() {
        structure_defect = structure_defect
            .max((d2z1.values()[flat].clone() - &d1z2.values()[flat]).norm());
    }
    if structure_defect > tolerances::RESIDUAL_TOL {
        return Err(Error::NotASolution {
            check: "dζ = 0",
            value: structure_defect,
            tol: tolerances::RESIDUAL_TOL,
        });
    }
    let y = integrate_potential(&grid, &[&zeta1, &zeta2], &d.origin_node())?;
    Ok((pair_from_y(&y, &grid)?, PairDiagnostics { structure_defect }))
}

/// Method 2: λ-derivative of the 5×5 parallel frame at λ = 0. The
/// derivative lies in the off-diagonal block [[0, Z],[−JZᵀ, 0]]; the pair
/// is Z·[[1,1],[1,−1]]. The frame carries initial data diag(I₃, g₂(q(x₀)))
/// so the hyperbolic block matches Method 1's closed form.
pub fn christoffel_pair_method2(
    d: &IsothermicData,
) -> Result<(ChristoffelPair, PairDiagnostics)> {
    d.require_verified()?;
    let grid = d.grid().clone();
    let basepoint = d.origin_node();
    let q0 = *d.q().at(&basepoint);
    let mut init = CMat::identity(5, 5);
    init[(3, 3)] = cr(q0.cosh());
    init[(3, 4)] = cr(-q0.sinh());
    init[(4, 3)] = cr(-q0.sinh());
    init[(4, 4)] = cr(q0.cosh());
    let family = |lambda: Complex64| iso_lax(d, lambda);
    let deriv = crate::zero_curvature::lambda_derivative_frame(
        &family,
        cr(0.0),
        tolerances::LAMBDA_STEP,
        &init,
        &basepoint,
        FrameOptions::quiet(),
    )?;
    // leakage outside the expected block structure
    let mut structure_defect = 0.0f64;
    let mut z_values = Vec::with_capacity(grid.len());
    for m in deriv.values() {
        let mut leak = 0.0f64;
        for r in 0..5 {
            for c in 0..5 {
                let in_p_block = (r < 3 && c >= 3) || (r >= 3 && c < 3);
                if !in_p_block {
                    leak += m[(r, c)].norm_sqr();
                }
            }
        }
        structure_defect = structure_defect.max(leak.sqrt());
        z_values.push(RMat::from_fn(3, 2, |r, c| m[(r, 3 + c)].re));
    }
    let z = Field::new(grid.clone(), z_values)?;
    Ok((pair_from_y(&z, &grid)?, PairDiagnostics { structure_defect }))
}

/// Verification of a pair against the data: fundamental-form patterns
/// I = e^{2q}(dx₁²+dx₂²), II = e^q(r₁dx₁²+r₂dx₂²) and the duals with
/// (e^{−q}, r₁, −r₂), plus parallelism of tangent planes, conformality,
/// and alignment of principal directions with the coordinate axes.
#[derive(Debug, Clone, Copy)]
pub struct PairReport {
    pub metric_defect: f64,
    pub dual_metric_defect: f64,
    pub ii_defect: f64,
    pub dual_ii_defect: f64,
    pub conformality_defect: f64,
    pub normal_alignment_defect: f64,
    pub principal_angle_defect: f64,
}

fn metric_defect_against(report: &SurfaceReport, scale: &Field<f64>) -> f64 {
    let mut max = 0.0f64;
    for flat in 0..scale.grid().len() {
        let s = scale.values()[flat];
        max = max
            .max((report.e.values()[flat] - s).abs())
            .max((report.g.values()[flat] - s).abs())
            .max(report.f.values()[flat].abs());
    }
    max
}

/// max over the sign choice: II should be ±(l_target, 0, n_target).
fn ii_defect_against(
    report: &SurfaceReport,
    l_target: &Field<f64>,
    n_target: &Field<f64>,
) -> f64 {
    let mut plus = 0.0f64;
    let mut minus = 0.0f64;
    for flat in 0..l_target.grid().len() {
        let (lt, nt) = (l_target.values()[flat], n_target.values()[flat]);
        let (l, m, n) = (
            report.l.values()[flat],
            report.m.values()[flat],
            report.n.values()[flat],
        );
        plus = plus.max((l - lt).abs()).max((n - nt).abs()).max(m.abs());
        minus = minus.max((l + lt).abs()).max((n + nt).abs()).max(m.abs());
    }
    plus.min(minus)
}

pub fn verify_pair(pair: &ChristoffelPair, d: &IsothermicData) -> Result<PairReport> {
    let rep = fundamental_forms(&pair.f)?;
    let rep_dual = fundamental_forms(&pair.f_dual)?;
    let grid = d.grid();

    let e2q = d.q().map(|qv| (2.0 * qv).exp());
    let em2q = d.q().map(|qv| (-2.0 * qv).exp());
    let metric_defect = metric_defect_against(&rep, &e2q);
    let dual_metric_defect = metric_defect_against(&rep_dual, &em2q);

    let l_t = d.q().zip_map(d.r1(), |qv, r| qv.exp() * r)?;
    let n_t = d.q().zip_map(d.r2(), |qv, r| qv.exp() * r)?;
    let l_dual_t = d.q().zip_map(d.r1(), |qv, r| (-qv).exp() * r)?;
    let n_dual_t = d.q().zip_map(d.r2(), |qv, r| -(-qv).exp() * r)?;
    let ii_defect = ii_defect_against(&rep, &l_t, &n_t);
    let dual_ii_defect = ii_defect_against(&rep_dual, &l_dual_t, &n_dual_t);

    // conformality: |F| relative to (E+G)/2
    let mut conformality_defect = 0.0f64;
    for flat in 0..grid.len() {
        let scale = 0.5 * (rep.e.values()[flat] + rep.g.values()[flat]);
        conformality_defect = conformality_defect.max(rep.f.values()[flat].abs() / scale);
    }

    // parallel tangent planes: normals aligned up to sign
    let mut normal_alignment_defect = 0.0f64;
    for flat in 0..grid.len() {
        if *rep.regular.at_flat(flat) && *rep_dual.regular.at_flat(flat) {
            let dot = rep.normal.values()[flat]
                .dot(&rep_dual.normal.values()[flat])
                .abs();
            normal_alignment_defect = normal_alignment_defect.max(1.0 - dot);
        }
    }

    // principal directions along coordinate axes: 2φ = atan2(2M, L−N),
    // measured to the nearest axis (mod π/2, since either axis counts and
    // the normal orientation can negate L−N)
    let mut principal_angle_defect = 0.0f64;
    let quarter = std::f64::consts::FRAC_PI_2;
    for flat in 0..grid.len() {
        let (l, m, n) = (
            rep.l.values()[flat],
            rep.m.values()[flat],
            rep.n.values()[flat],
        );
        if (l - n).abs() > 0.1 {
            let phi = 0.5 * (2.0 * m).atan2(l - n);
            let folded = phi.rem_euclid(quarter);
            principal_angle_defect = principal_angle_defect.max(folded.min(quarter - folded));
        }
    }

    Ok(PairReport {
        metric_defect,
        dual_metric_defect,
        ii_defect,
        dual_ii_defect,
        conformality_defect,
        normal_alignment_defect,
        principal_angle_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::max_point_distance;
    use crate::zero_curvature::flatness_defect;

    fn grid() -> GridSpec {
        GridSpec::square(-1.0, 1.0, 101).unwrap()
    }

    #[test]
    fn residuals_of_seed_data() {
        let d0 = IsothermicData::plane(grid()).unwrap();
        assert_eq!(d0.residual_max(), 0.0);
        let d1 = IsothermicData::cylinder(grid()).unwrap();
        assert_eq!(d1.residual_max(), 0.0);
        // generic perturbation breaks the system
        let g = grid();
        let bad = IsothermicData::new(
            Field::from_fn(g.clone(), |p| 0.3 * (p[0] * 2.0).sin() * p[1]),
            Field::constant(g.clone(), 1.0),
            Field::constant(g, 0.5),
        )
        .unwrap();
        assert!(bad.residual_max() > 0.05);
        assert!(!bad.verified());
    }

    #[test]
    fn dual_is_an_involution_preserving_residuals() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let dual = christoffel_dual_data(&d).unwrap();
        // (0,1,0) is a fixed point of the involution
        assert_eq!(dual.q().values(), d.q().values());
        assert_eq!(dual.r1().values(), d.r1().values());
        assert_eq!(dual.r2().values(), d.r2().values());
        let twice = christoffel_dual_data(&dual).unwrap();
        assert_eq!(twice.q().values(), d.q().values());
        assert!(dual.verified());
    }

    #[test]
    fn lax_flatness_characterizes_solutions() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        for lam in [0.5, 1.0, -0.7, 2.0, 0.1] {
            let theta = iso_lax(&d, cr(lam)).unwrap();
            let defect = flatness_defect(&theta).unwrap();
            assert!(defect <= 1e-12, "λ={lam}: {defect}");
        }
        let g = grid();
        let bad = IsothermicData::new(
            Field::from_fn(g.clone(), |p| 0.3 * (2.0 * p[0]).sin() * p[1]),
            Field::constant(g.clone(), 1.0),
            Field::constant(g, 0.5),
        )
        .unwrap();
        for lam in [0.5, 1.0, -0.7, 2.0, 0.1] {
            let theta = iso_lax(&bad, cr(lam)).unwrap();
            assert!(flatness_defect(&theta).unwrap() > 1e-2);
        }
    }

    #[test]
    fn lax_reality_and_zero_lambda_block_structure() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let (conj, twist) = iso_lax_reality_defect(&d, 0.8).unwrap();
        assert!(conj <= 1e-12 && twist <= 1e-12, "reality {conj}, twist {twist}");
        let theta0 = iso_lax(&d, cr(0.0)).unwrap();
        for axis in 0..2 {
            for b in theta0.coeff(axis).values().iter().take(3) {
                for r in 0..3 {
                    for c in 3..5 {
                        assert_eq!(b[(r, c)], crate::matrix::C_ZERO);
                        assert_eq!(b[(c, r)], crate::matrix::C_ZERO);
                    }
                }
            }
        }
    }

    #[test]
    fn method1_reconstructs_the_cylinder_pair() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let (pair, diag) = christoffel_pair_method1(&d).unwrap();
        assert!(diag.structure_defect <= 1e-3, "dζ = {}", diag.structure_defect);
        // analytic cylinder through the origin with axis e₂
        let g = d.grid().clone();
        let mut max_err: f64 = 0.0;
        let mut max_err_dual: f64 = 0.0;
        for flat in 0..g.len() {
            let idx = g.multi_index(flat);
            let (x1, x2) = (g.coord(0, idx[0]), g.coord(1, idx[1]));
            let expected = nalgebra::Vector3::new(x1.sin(), x2, x1.cos() - 1.0);
            let expected_dual = nalgebra::Vector3::new(x1.sin(), -x2, x1.cos() - 1.0);
            max_err = max_err.max((pair.f.points().values()[flat] - expected).norm());
            max_err_dual =
                max_err_dual.max((pair.f_dual.points().values()[flat] - expected_dual).norm());
        }
        assert!(max_err <= 1e-6, "cylinder error {max_err}");
        assert!(max_err_dual <= 1e-6, "dual cylinder error {max_err_dual}");
    }

    #[test]
    fn methods_agree_up_to_translation() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let (p1, _) = christoffel_pair_method1(&d).unwrap();
        let (p2, diag2) = christoffel_pair_method2(&d).unwrap();
        assert!(
            diag2.structure_defect <= 1e-8,
            "off-block leakage {}",
            diag2.structure_defect
        );
        // both are anchored at the basepoint, so the translation is zero
        let df = max_point_distance(&p1.f, &p2.f).unwrap();
        let dd = max_point_distance(&p1.f_dual, &p2.f_dual).unwrap();
        assert!(df <= 1e-6, "f disagreement {df}");
        assert!(dd <= 1e-6, "dual disagreement {dd}");
        // basepoint value is zero for method 2 as well
        let bp = d.origin_node();
        assert!(p2.f.points().at(&bp).norm() < 1e-9);
    }

    #[test]
    fn pair_verification_matches_the_stated_forms() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let (pair, _) = christoffel_pair_method1(&d).unwrap();
        let report = verify_pair(&pair, &d).unwrap();
        assert!(report.metric_defect <= 1e-3, "I defect {}", report.metric_defect);
        assert!(
            report.dual_metric_defect <= 1e-3,
            "dual I defect {}",
            report.dual_metric_defect
        );
        assert!(report.ii_defect <= 1e-3, "II defect {}", report.ii_defect);
        assert!(
            report.dual_ii_defect <= 1e-3,
            "dual II defect {}",
            report.dual_ii_defect
        );
        assert!(
            report.conformality_defect <= 1e-3,
            "conformality {}",
            report.conformality_defect
        );
        assert!(
            report.normal_alignment_defect <= 1e-3,
            "normals {}",
            report.normal_alignment_defect
        );
        assert!(
            report.principal_angle_defect <= 1e-2,
            "principal angle {}",
            report.principal_angle_defect
        );
    }

    #[test]
    fn dual_of_dual_reconstructs_the_original() {
        let d = IsothermicData::cylinder(grid()).unwrap();
        let twice = christoffel_dual_data(&christoffel_dual_data(&d).unwrap()).unwrap();
        let (p1, _) = christoffel_pair_method1(&d).unwrap();
        let (p2, _) = christoffel_pair_method1(&twice).unwrap();
        let diff = max_point_distance(&p1.f, &p2.f).unwrap();
        assert!(diff <= 1e-4, "dual-of-dual drift {diff}");
    }

    #[test]
    fn methods_require_verified_data() {
        let g = grid();
        let bad = IsothermicData::new(
            Field::from_fn(g.clone(), |p| 0.2 * p[0] * p[1]),
            Field::constant(g.clone(), 1.0),
            Field::constant(g, 0.0),
        )
        .unwrap();
        assert!(christoffel_pair_method1(&bad).is_err());
        assert!(christoffel_pair_method2(&bad).is_err());
    }

    #[test]
    fn seed_clamp_rejects_extreme_q() {
        let g = grid();
        let huge = IsothermicData::new(
            Field::constant(g.clone(), 25.0),
            Field::constant(g.clone(), 0.0),
            Field::constant(g, 0.0),
        );
        assert!(huge.is_err());
    }
}
