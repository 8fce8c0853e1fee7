//! Surfaces in ℝ³ reconstructed from frames: the λ-derivative (Sym)
//! immersion of a sine-Gordon solution, discrete fundamental forms with
//! Gaussian curvature, the dressing-induced Bäcklund transform of the
//! surface, and Wavefront OBJ export.

use std::io::Write as IoWrite;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    max_over, partial_derivative, second_derivative, Accuracy, Field, GridSpec,
};
use crate::matrix::{cr, su2_to_r3, CMat};
use crate::sge::{sge_lax, SgeSolution};
use crate::tolerances;
use crate::zero_curvature::{integrate_frame_with, lambda_derivative_frame, FrameOptions};

/// Where an immersion came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sym,
    Christoffel,
    Gsge,
}

/// Sampled surface: one point of ℝ³ per grid node.
#[derive(Debug, Clone)]
pub struct ImmersionField {
    points: Field<Vector3<f64>>,
    provenance: Provenance,
}

impl ImmersionField {
    pub fn new(points: Field<Vector3<f64>>, provenance: Provenance) -> Result<Self> {
        if points.grid().ndim() != 2 {
            return Err(Error::InvalidGrid("immersions live on 2-d grids".into()));
        }
        if points
            .values()
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::Degenerate {
                count: points
                    .values()
                    .iter()
                    .filter(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
                    .count(),
                total: points.grid().len(),
                context: "non-finite surface coordinates".into(),
            });
        }
        Ok(Self { points, provenance })
    }

    pub fn points(&self) -> &Field<Vector3<f64>> {
        &self.points
    }

    pub fn grid(&self) -> &GridSpec {
        self.points.grid()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Pointwise Euclidean distance to another immersion on the same grid.
    pub fn distance_field(&self, other: &ImmersionField) -> Result<Field<f64>> {
        self.points
            .zip_map(other.points(), |a, b| (a - b).norm())
    }
}

/// First and second fundamental forms, normal, and Gaussian curvature per
/// node. `regular` marks nodes where EG − F² is above the degeneracy floor;
/// K is reported as 0 on the others (the mask is the authority).
#[derive(Debug, Clone)]
pub struct SurfaceReport {
    pub e: Field<f64>,
    pub f: Field<f64>,
    pub g: Field<f64>,
    pub l: Field<f64>,
    pub m: Field<f64>,
    pub n: Field<f64>,
    pub gauss: Field<f64>,
    pub normal: Field<Vector3<f64>>,
    pub regular: Field<bool>,
}

const METRIC_FLOOR: f64 = 1e-10;

impl SurfaceReport {
    /// Max |K − k| over regular nodes selected by the mask.
    pub fn max_curvature_error(&self, target: f64, select: impl Fn(usize) -> bool) -> f64 {
        let mut max = 0.0f64;
        for flat in 0..self.gauss.grid().len() {
            if *self.regular.at_flat(flat) && select(flat) {
                max = max.max((self.gauss.values()[flat] - target).abs());
            }
        }
        max
    }

    pub fn regular_count(&self) -> usize {
        self.regular.values().iter().filter(|r| **r).count()
    }
}

/// I from first differences, the normal from the normalized cross product,
/// II from second differences dotted with the normal, K = (LN−M²)/(EG−F²).
pub fn fundamental_forms(surface: &ImmersionField) -> Result<SurfaceReport> {
    let pts = surface.points();
    let f_u = partial_derivative(pts, 0, Accuracy::Two)?;
    let f_v = partial_derivative(pts, 1, Accuracy::Two)?;
    let f_uu = second_derivative(pts, 0)?;
    let f_vv = second_derivative(pts, 1)?;
    let f_uv = partial_derivative(&f_u, 1, Accuracy::Two)?;

    let e = f_u.map(|a| a.dot(a));
    let f = f_u.zip_map(&f_v, |a, b| a.dot(b))?;
    let g = f_v.map(|a| a.dot(a));

    let normal = f_u.zip_map(&f_v, |a, b| {
        let c = a.cross(b);
        let n = c.norm();
        if n > METRIC_FLOOR {
            c / n
        } else {
            Vector3::zeros()
        }
    })?;

    let l = f_uu.zip_map(&normal, |a, n| a.dot(n))?;
    let m = f_uv.zip_map(&normal, |a, n| a.dot(n))?;
    let n_coef = f_vv.zip_map(&normal, |a, n| a.dot(n))?;

    let grid = pts.grid().clone();
    let mut gauss = Vec::with_capacity(grid.len());
    let mut regular = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        let det_i = e.values()[flat] * g.values()[flat] - f.values()[flat] * f.values()[flat];
        if det_i > METRIC_FLOOR {
            let det_ii = l.values()[flat] * n_coef.values()[flat]
                - m.values()[flat] * m.values()[flat];
            gauss.push(det_ii / det_i);
            regular.push(true);
        } else {
            gauss.push(0.0);
            regular.push(false);
        }
    }

    Ok(SurfaceReport {
        e,
        f,
        g,
        l,
        m,
        n: n_coef,
        gauss: Field::new(grid.clone(), gauss)?,
        normal,
        regular: Field::new(grid, regular)?,
    })
}

/// Options for the λ-derivative immersion.
#[derive(Debug, Clone, Copy)]
pub struct SymOptions {
    pub dlambda: f64,
    /// re-run at dλ/2 and report the max point difference
    pub richardson: bool,
}

impl Default for SymOptions {
    fn default() -> Self {
        Self {
            dlambda: tolerances::LAMBDA_STEP,
            richardson: false,
        }
    }
}

fn sym_points(q: &SgeSolution, r: f64, dlambda: f64) -> Result<Field<Vector3<f64>>> {
    let family = |lambda: Complex64| sge_lax(q, lambda);
    let init = CMat::identity(2, 2);
    let basepoint = q.origin_node();
    let deriv = lambda_derivative_frame(
        &family,
        cr(r),
        dlambda,
        &init,
        &basepoint,
        FrameOptions::quiet(),
    )?;
    Ok(deriv.map(su2_to_r3))
}

/// Surface of the solution q at spectral point r: ∂E/∂λ·E⁻¹|_{λ=r} mapped
/// to ℝ³ through the orthonormal su(2) basis (u₁,u₂,u₃) with
/// ⟨X,Y⟩ = −tr(XY)/2. The frame is normalized at the node nearest the
/// origin, so the surface passes through 0 there.
pub fn sym_immersion(q: &SgeSolution, r: f64) -> Result<ImmersionField> {
    Ok(sym_immersion_with(q, r, SymOptions::default())?.0)
}

/// As `sym_immersion`; with `richardson` set, also returns the max pointwise
/// distance between the dλ and dλ/2 evaluations.
pub fn sym_immersion_with(
    q: &SgeSolution,
    r: f64,
    opts: SymOptions,
) -> Result<(ImmersionField, Option<f64>)> {
    q.require_verified()?;
    if r == 0.0 || !r.is_finite() {
        return Err(Error::ZeroParameter { name: "r" });
    }
    let points = sym_points(q, r, opts.dlambda)?;
    let check = if opts.richardson {
        let finer = sym_points(q, r, opts.dlambda / 2.0)?;
        Some(
            points
                .zip_map(&finer, |a, b| (a - b).norm())?
                .max_abs(),
        )
    } else {
        None
    };
    Ok((ImmersionField::new(points, Provenance::Sym)?, check))
}

/// Output of the dressing-induced surface transform.
#[derive(Debug, Clone)]
pub struct DressedSurface {
    /// the transformed sine-Gordon solution
    pub solution: SgeSolution,
    /// its surface, from the dressed frame family
    pub surface: ImmersionField,
    /// the seed's surface at the same spectral point, for comparison
    pub base: ImmersionField,
    /// continuous angle of the transported projection line
    pub projection_angle: Field<f64>,
}

/// Unwrap an angle field defined modulo π into a representative continuous
/// along the axis-0 line through the basepoint and then along axis-1 lines.
fn unwrap_mod_pi(raw: &Field<f64>, basepoint: &[usize]) -> Field<f64> {
    let grid = raw.grid().clone();
    let (n_s, n_t) = (grid.dims()[0], grid.dims()[1]);
    let mut out = raw.values().to_vec();
    let pi = std::f64::consts::PI;
    let adjust = |target: f64, prev: f64| -> f64 {
        target + pi * ((prev - target) / pi).round()
    };
    let (bi, bj) = (basepoint[0], basepoint[1]);
    // along the basepoint s-line
    for i in (bi + 1)..n_s {
        let prev = out[grid.flat_index(&[i - 1, bj])];
        let k = grid.flat_index(&[i, bj]);
        out[k] = adjust(out[k], prev);
    }
    for i in (0..bi).rev() {
        let prev = out[grid.flat_index(&[i + 1, bj])];
        let k = grid.flat_index(&[i, bj]);
        out[k] = adjust(out[k], prev);
    }
    // then along every t-line
    for i in 0..n_s {
        for j in (bj + 1)..n_t {
            let prev = out[grid.flat_index(&[i, j - 1])];
            let k = grid.flat_index(&[i, j]);
            out[k] = adjust(out[k], prev);
        }
        for j in (0..bj).rev() {
            let prev = out[grid.flat_index(&[i, j + 1])];
            let k = grid.flat_index(&[i, j]);
            out[k] = adjust(out[k], prev);
        }
    }
    Field::new(grid, out).expect("same shape")
}

/// Dressing-induced Bäcklund transform of the surface of `q`.
///
/// The frame at λ = is is real; the projection direction is transported by
/// its inverse, the dressed frame family is
/// Ê(λ) = ((λ+is)/(λ−is))^{1/2}·E(λ)·g_{is,π̃}(λ)⁻¹, and both the dressed
/// surface (λ-derivative of Ê at 1/2) and the dressed solution are
/// returned. The displacement satisfies |f̂ − f| = s/(1/4 + s²) with the
/// step tangent to the seed surface.
pub fn dressing_bt_surface(
    q: &SgeSolution,
    s: f64,
    pi_dir: [f64; 2],
) -> Result<DressedSurface> {
    q.require_verified()?;
    if s == 0.0 || !s.is_finite() {
        return Err(Error::ZeroParameter { name: "s" });
    }
    let norm = (pi_dir[0] * pi_dir[0] + pi_dir[1] * pi_dir[1]).sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroParameter { name: "pi_dir" });
    }
    let v0 = [pi_dir[0] / norm, pi_dir[1] / norm];
    let grid = q.grid().clone();
    let basepoint = q.origin_node();
    let init = CMat::identity(2, 2);

    // real frame at λ = is
    let alpha = Complex64::new(0.0, s);
    let theta_is = sge_lax(q, alpha)?;
    let frame_is = integrate_frame_with(&theta_is, &init, &basepoint, FrameOptions::quiet())?;

    // transported projection line and its continuous angle
    let raw_angle = Field::new(
        grid.clone(),
        frame_is
            .values()
            .par_iter()
            .map(|e| {
                let inv = e.clone().try_inverse().expect("frame invertible");
                let w0 = inv[(0, 0)].re * v0[0] + inv[(0, 1)].re * v0[1];
                let w1 = inv[(1, 0)].re * v0[0] + inv[(1, 1)].re * v0[1];
                w1.atan2(w0)
            })
            .collect(),
    )?;
    let angle = unwrap_mod_pi(&raw_angle, &basepoint);

    // dressed solution q̂ = −q − 2y
    let q_hat = q
        .q()
        .zip_map(&angle, |qv, y| -qv - 2.0 * y)?;
    let mut history = q.mu_history().to_vec();
    history.push(2.0 * s);
    let solution = SgeSolution::with_history(q_hat, history)?;

    // dressed frames at 1/2 ± dλ and 1/2, then the λ-derivative
    let r0 = 0.5;
    let dl = tolerances::LAMBDA_STEP;
    let lambdas = [cr(r0 - dl), cr(r0), cr(r0 + dl)];
    let mut dressed: Vec<Vec<CMat>> = Vec::with_capacity(3);
    let mut plain: Vec<Vec<CMat>> = Vec::with_capacity(3);
    for lambda in lambdas {
        let theta = sge_lax(q, lambda)?;
        let frame = integrate_frame_with(&theta, &init, &basepoint, FrameOptions::quiet())?;
        let phase = ((lambda + alpha) / (lambda - alpha)).sqrt();
        let values: Vec<CMat> = frame
            .values()
            .par_iter()
            .zip(angle.values().par_iter())
            .map(|(e, y)| {
                let (sy, cy) = y.sin_cos();
                let proj = CMat::from_row_slice(
                    2,
                    2,
                    &[cr(cy * cy), cr(cy * sy), cr(cy * sy), cr(sy * sy)],
                );
                let co = (lambda - alpha) / (lambda + alpha);
                // g_{is,π̃}(λ)⁻¹ = π̃ + ((λ−is)/(λ+is))·π̃^⊥
                let id = CMat::identity(2, 2);
                let g_inv = &proj + (&id - &proj) * co;
                e * g_inv * phase
            })
            .collect();
        dressed.push(values);
        plain.push(frame.values().to_vec());
    }
    let scale = cr(1.0 / (2.0 * dl));
    let hat_points: Vec<Vector3<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let diff = (&dressed[2][flat] - &dressed[0][flat]) * scale;
            let inv = dressed[1][flat].clone().try_inverse().expect("invertible");
            su2_to_r3(&(diff * inv))
        })
        .collect();
    let base_points: Vec<Vector3<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let diff = (&plain[2][flat] - &plain[0][flat]) * scale;
            let inv = plain[1][flat].clone().try_inverse().expect("invertible");
            su2_to_r3(&(diff * inv))
        })
        .collect();

    Ok(DressedSurface {
        solution,
        surface: ImmersionField::new(Field::new(grid.clone(), hat_points)?, Provenance::Sym)?,
        base: ImmersionField::new(Field::new(grid, base_points)?, Provenance::Sym)?,
        projection_angle: angle,
    })
}

/// Write a Wavefront OBJ mesh: one vertex per node in row-major order,
/// each grid cell split into two triangles. Coordinates carry 6 decimals.
pub fn export_obj(surface: &ImmersionField, out: &mut dyn IoWrite) -> Result<()> {
    let grid = surface.grid();
    let (n_s, n_t) = (grid.dims()[0], grid.dims()[1]);
    for p in surface.points().values() {
        writeln!(out, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
    }
    for i in 0..n_s - 1 {
        for j in 0..n_t - 1 {
            let v00 = i * n_t + j + 1;
            let v10 = (i + 1) * n_t + j + 1;
            let v01 = i * n_t + j + 2;
            let v11 = (i + 1) * n_t + j + 2;
            writeln!(out, "f {v00} {v10} {v11}")?;
            writeln!(out, "f {v00} {v11} {v01}")?;
        }
    }
    Ok(())
}

pub fn export_obj_to_path(surface: &ImmersionField, path: &std::path::Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    export_obj(surface, &mut file)
}

/// Parse the vertex lines of an OBJ file (round-trip checks, `check`
/// subcommand).
pub fn read_obj_vertices(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("v ") {
            let mut it = rest.split_whitespace();
            let mut coord = [0.0f64; 3];
            for c in &mut coord {
                *c = it
                    .next()
                    .ok_or_else(|| Error::Parse("short vertex line".into()))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad vertex coordinate: {e}")))?;
            }
            out.push(Vector3::new(coord[0], coord[1], coord[2]));
        }
    }
    Ok(out)
}

/// Max |n·(f̂−f)| over the regular nodes selected by `select`: how far the
/// displacement leaves the tangent plane. Near cusp lines the discrete
/// normal is meaningless, so callers mask those nodes out (the same
/// |sin 2q| cutoff as curvature acceptance).
pub fn tangency_defect(
    base: &SurfaceReport,
    displacement: &Field<Vector3<f64>>,
    select: impl Fn(usize) -> bool,
) -> f64 {
    let mut max = 0.0f64;
    for flat in 0..displacement.grid().len() {
        if *base.regular.at_flat(flat) && select(flat) {
            max = max.max(
                base.normal.values()[flat]
                    .dot(&displacement.values()[flat])
                    .abs(),
            );
        }
    }
    max
}

pub fn max_point_distance(a: &ImmersionField, b: &ImmersionField) -> Result<f64> {
    Ok(max_over(&a.distance_field(b)?, |v| v.abs()))
}
