//! Cross-module pipelines exercised end to end through the public API:
//! solution → transform → surface → export, and the coordinate dictionary
//! between the scalar and matrix systems.

use num_complex::Complex64;

use soliton_forge::dressing::{dress_algebraic, DressingChain, RealityClass, SimpleElement, UnSolution};
use soliton_forge::grid::GridSpec;
use soliton_forge::gsge::{self};
use soliton_forge::matrix::cr;
use soliton_forge::sge::{self, one_soliton_value, BtOptions, BtParam, SgeSolution};
use soliton_forge::surfaces::{self, fundamental_forms};

#[test]
fn backlund_chain_to_surface_to_mesh() {
    // vacuum → ODE Bäcklund → λ-derivative surface → forms → OBJ
    let grid = GridSpec::square(-1.5, 1.5, 151).unwrap();
    let vacuum = SgeSolution::vacuum(grid.clone()).unwrap();
    let (soliton, report) = sge::backlund(
        &vacuum,
        BtParam::new(1.0).unwrap(),
        std::f64::consts::FRAC_PI_2,
        BtOptions::default(),
    )
    .unwrap();
    assert!(soliton.verified());
    assert!(report.path_defect < 1e-6);

    let surface = surfaces::sym_immersion(&soliton, 0.5).unwrap();
    let forms = fundamental_forms(&surface).unwrap();
    let k_err = forms.max_curvature_error(-1.0, |flat| {
        (2.0 * soliton.q().values()[flat]).sin().abs() > 0.1
    });
    assert!(k_err <= 1e-2, "surface curvature error {k_err}");

    let mut obj = Vec::new();
    surfaces::export_obj(&surface, &mut obj).unwrap();
    let text = String::from_utf8(obj).unwrap();
    let vertices = surfaces::read_obj_vertices(&text).unwrap();
    assert_eq!(vertices.len(), 151 * 151);
}

#[test]
fn scalar_and_matrix_systems_tell_the_same_story() {
    // the n = 2 matrix state built from the scalar soliton is verified, and
    // its reconstructed immersion has the same curvature as the scalar route
    let mu = 1.0;
    let xgrid = GridSpec::square(-1.0, 1.0, 201).unwrap();
    let state = gsge::embed_sge(
        xgrid,
        move |s, t| one_soliton_value(mu, s, t),
        move |s, t| mu * one_soliton_value(mu, s, t).sin(),
        move |s, t| one_soliton_value(mu, s, t).sin() / mu,
    )
    .unwrap();
    assert!(state.verified(), "embed residuals {:?}", state.residuals());

    let imm = gsge::immersion(&state).unwrap();
    assert!(imm.speed_defect <= 1e-3);
    let surface = gsge::immersion_to_surface(&imm).unwrap();
    let forms = fundamental_forms(&surface).unwrap();
    let k_err = forms.max_curvature_error(-1.0, |flat| {
        let av = &state.a().values()[flat];
        (av[(0, 0)] * av[(0, 1)]).abs() > 0.05
    });
    assert!(k_err <= 1e-2, "matrix-route curvature error {k_err}");
}

#[test]
fn dressing_chain_composes_and_serializes() {
    // two-step chain stays a solution; its v field survives a CSV roundtrip
    let grid = GridSpec::square(-1.0, 1.0, 101).unwrap();
    let vacuum = UnSolution::vacuum(grid.clone(), RealityClass::UnModOn).unwrap();
    let g1 = SimpleElement::from_direction(Complex64::new(0.0, 0.6), &[cr(1.0), cr(1.0)]).unwrap();
    let (first, _) = dress_algebraic(&vacuum, g1.clone()).unwrap();
    let mut chain = DressingChain::new(vacuum).unwrap();
    chain.push(g1).unwrap();
    let g2 = SimpleElement::from_direction(Complex64::new(0.0, -0.4), &[cr(0.3), cr(1.0)]).unwrap();
    chain.push(g2).unwrap();
    assert!(chain.current().verified());
    assert!(chain.current().real_form_defect() <= 1e-10);
    assert!(first.verified());

    let mut buf = Vec::new();
    soliton_forge::io::write_cmat_csv(chain.current().v(), &mut buf).unwrap();
    let parsed = soliton_forge::io::read_cmat_csv(&grid, 2, 2, &mut buf.as_slice()).unwrap();
    let diff = soliton_forge::grid::max_over(
        &chain
            .current()
            .v()
            .zip_map(&parsed, |a, b| soliton_forge::matrix::fro_norm(&(a - b)))
            .unwrap(),
        |v| *v,
    );
    assert!(diff <= 1e-15, "CSV roundtrip drift {diff}");
    let reparsed = UnSolution::new(parsed, RealityClass::UnModOn).unwrap();
    assert!(reparsed.verified());
}
