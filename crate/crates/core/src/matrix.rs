//! Small dense-matrix helpers shared by every module.
//!
//! Complex matrices are the single value type for connections and frames;
//! real forms (o(n), su(2), o(n,n)) are enforced as checked invariants on
//! top of them rather than as separate types.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const C_I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// [a, b] = ab − ba.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Frobenius norm. Used as the reported matrix norm throughout; it bounds
/// the spectral norm from above, so thresholds stay conservative.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_imag_entry(m: &CMat) -> f64 {
    m.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

pub fn real_part(m: &CMat) -> RMat {
    RMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

pub fn complexify(m: &RMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| cr(m[(i, j)]))
}

/// ‖m* + m‖_F, zero iff m is skew-Hermitian.
pub fn skew_hermitian_defect(m: &CMat) -> f64 {
    fro_norm(&(m.adjoint() + m))
}

/// ‖m* − m‖_F, zero iff m is Hermitian.
pub fn hermitian_defect(m: &CMat) -> f64 {
    fro_norm(&(m.adjoint() - m))
}

/// ‖mᵀ − m‖_F.
pub fn symmetric_defect(m: &CMat) -> f64 {
    fro_norm(&(m.transpose() - m))
}

/// ‖m*m − I‖_F.
pub fn unitary_defect(m: &CMat) -> f64 {
    let n = m.ncols();
    fro_norm(&(m.adjoint() * m - CMat::identity(n, n)))
}

/// ‖mᵀm − I‖_F for real-valued matrices stored as complex.
pub fn orthogonal_defect(m: &CMat) -> f64 {
    let n = m.ncols();
    fro_norm(&(m.transpose() * m - CMat::identity(n, n)))
}

/// ‖m² − m‖_F + ‖m* − m‖_F, zero iff m is a Hermitian projection.
pub fn projection_defect(m: &CMat) -> f64 {
    fro_norm(&(m * m - m)) + hermitian_defect(m)
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
/// Matrices here are tiny (≤ 6×6), so this is both accurate and cheap.
pub fn mat_exp(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm = fro_norm(m);
    let k = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m * cr((0.5f64).powi(k as i32));
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for j in 1..=18 {
        term = &term * &scaled * cr(1.0 / j as f64);
        sum += &term;
    }
    let mut result = sum;
    for _ in 0..k {
        result = &result * &result;
    }
    result
}

/// Orthonormalize the columns of `basis` with modified Gram-Schmidt under
/// the Hermitian inner product. Errors via `None` when a column drops below
/// `rank_floor` after projection (rank deficiency).
pub fn orthonormalize_columns(basis: &CMat, rank_floor: f64) -> Option<CMat> {
    let (n, k) = (basis.nrows(), basis.ncols());
    let mut q = basis.clone();
    for j in 0..k {
        for i in 0..j {
            let qi = q.column(i).clone_owned();
            let proj: Complex64 = qi.dotc(&q.column(j).clone_owned());
            let corrected = q.column(j) - &qi * proj;
            q.set_column(j, &corrected);
        }
        let norm = q.column(j).norm();
        if norm < rank_floor {
            return None;
        }
        let scaled = q.column(j) / cr(norm);
        q.set_column(j, &scaled);
    }
    let _ = n;
    Some(q)
}

/// Hermitian projection onto the column span of `basis`.
pub fn projection_onto_span(basis: &CMat, rank_floor: f64) -> Option<CMat> {
    let q = orthonormalize_columns(basis, rank_floor)?;
    Some(&q * q.adjoint())
}

/// Nearest unitary/orthogonal matrix via the polar decomposition (SVD).
pub fn polar_unitary_factor(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd with u");
    let vt = svd.v_t.expect("svd with v_t");
    u * vt
}

/// su(2) basis used for the identification with ℝ³ under ⟨X,Y⟩ = −tr(XY)/2:
/// u₁ = diag(i,−i), u₂ = [[0,1],[−1,0]], u₃ = [[0,i],[i,0]].
pub fn su2_basis() -> [CMat; 3] {
    let u1 = CMat::from_row_slice(2, 2, &[C_I, C_ZERO, C_ZERO, -C_I]);
    let u2 = CMat::from_row_slice(2, 2, &[C_ZERO, C_ONE, -C_ONE, C_ZERO]);
    let u3 = CMat::from_row_slice(2, 2, &[C_ZERO, C_I, C_I, C_ZERO]);
    [u1, u2, u3]
}

/// Coordinates of the trace-free part of a 2×2 anti-Hermitian matrix in the
/// basis above. Writing X = [[ia, b+ic],[−b+ic, −ia]] + (tr X/2)·I the
/// coordinates are (a, b, c); any pure-trace component drops out.
pub fn su2_to_r3(m: &CMat) -> nalgebra::Vector3<f64> {
    debug_assert_eq!(m.nrows(), 2);
    let half_tr = (m[(0, 0)] + m[(1, 1)]) * cr(0.5);
    let x00 = m[(0, 0)] - half_tr;
    let a = x00.im;
    let b = (m[(0, 1)].re - m[(1, 0)].re) * 0.5;
    let cc = (m[(0, 1)].im + m[(1, 0)].im) * 0.5;
    nalgebra::Vector3::new(a, b, cc)
}

/// diag(1,…,1,−1,…,−1) with `p` plus signs and `q` minus signs.
pub fn signature_matrix(p: usize, q: usize) -> CMat {
    let n = p + q;
    CMat::from_fn(n, n, |i, j| {
        if i != j {
            C_ZERO
        } else if i < p {
            C_ONE
        } else {
            -C_ONE
        }
    })
}
