//! Acceptance suite: every release gate in one place, each criterion timed
//! and printed as a single pass/fail line. All tolerances are pinned here
//! in code; nothing is left to later calibration.

use std::time::Instant;

use num_complex::Complex64;

use soliton_forge::dressing::{
    self, dress_algebraic, dress_linear, dress_ode, DressingChain, RealityClass, SimpleElement,
    UnSolution,
};
use soliton_forge::grid::{max_over, Field, GridSpec};
use soliton_forge::gsge::{self, BtDiag, GsgeBtOptions, GsgeState};
use soliton_forge::isothermic::{self, IsothermicData};
use soliton_forge::matrix::{c, cr, fro_norm, mat_exp, CMat, RMat, C_ONE};
use soliton_forge::sge::{self, one_soliton_value, BtOptions, BtParam, SgeSolution};
use soliton_forge::surfaces::{self, fundamental_forms};
use soliton_forge::sweep::MidpointRule;
use soliton_forge::zero_curvature::{
    curvature_residual, flatness_defect, integrate_frame_with, path_discrepancy, Connection,
    FrameOptions,
};

/// Collects the sub-checks of one criterion and prints a single verdict.
struct Criterion {
    name: &'static str,
    budget_secs: f64,
    started: Instant,
    failures: Vec<String>,
    details: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str, budget_secs: f64) -> Self {
        Self {
            name,
            budget_secs,
            started: Instant::now(),
            failures: Vec::new(),
            details: Vec::new(),
        }
    }

    fn check(&mut self, label: &str, value: f64, tol: f64) {
        self.details.push(format!("{label}={value:.3e}(≤{tol:.1e})"));
        // NaN counts as a failure
        if value.is_nan() || value > tol {
            self.failures.push(format!("{label} = {value:.6e} > {tol:.1e}"));
        }
    }

    fn check_flag(&mut self, label: &str, ok: bool) {
        self.details.push(format!("{label}={}", if ok { "ok" } else { "FAIL" }));
        if !ok {
            self.failures.push(label.to_string());
        }
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if elapsed > self.budget_secs {
            self.failures
                .push(format!("runtime {elapsed:.1}s exceeds {}s", self.budget_secs));
        }
        let verdict = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "acceptance {}: {verdict} [{elapsed:.1}s] {}",
            self.name,
            self.details.join(" ")
        );
        assert!(
            self.failures.is_empty(),
            "{} failed: {}",
            self.name,
            self.failures.join("; ")
        );
    }
}

#[test]
fn criterion_01_one_soliton_satisfies_the_equation() {
    let mut cr9 = Criterion::new("1 (closed-form 1-soliton residual)", 5.0);
    let grid = GridSpec::square(-5.0, 5.0, 1001).unwrap();
    let sol = sge::one_soliton(grid, BtParam::new(1.0).unwrap()).unwrap();
    cr9.check("max_residual", sol.residual_max(), 1e-3);
    cr9.finish();
}

#[test]
fn criterion_02_ode_backlund_matches_closed_form() {
    let mut cr9 = Criterion::new("2 (ODE Bäcklund vs closed form)", 10.0);
    // RK4 step 1e-3: grid spacing 0.01 with 10 substeps per cell
    let grid = GridSpec::square(-2.0, 2.0, 401).unwrap();
    let vacuum = SgeSolution::vacuum(grid.clone()).unwrap();
    let (out, _) = sge::backlund(
        &vacuum,
        BtParam::new(1.0).unwrap(),
        std::f64::consts::FRAC_PI_2,
        BtOptions {
            substeps: 10,
            midpoint: MidpointRule::Cubic,
        },
    )
    .unwrap();
    let mut sup: f64 = 0.0;
    for flat in 0..grid.len() {
        let idx = grid.multi_index(flat);
        let (s, t) = (grid.coord(0, idx[0]), grid.coord(1, idx[1]));
        sup = sup.max((out.q().values()[flat] - one_soliton_value(1.0, s, t)).abs());
    }
    cr9.check("sup_error", sup, 1e-6);
    cr9.finish();
}

#[test]
fn criterion_03_bianchi_permutability() {
    let mut cr9 = Criterion::new("3 (Bianchi permutability)", 10.0);
    let grid = GridSpec::square(-5.0, 5.0, 1001).unwrap();
    let (mu1, mu2) = (BtParam::new(1.0).unwrap(), BtParam::new(2.0).unwrap());
    let q0 = SgeSolution::vacuum(grid.clone()).unwrap();
    let q1 = sge::one_soliton(grid.clone(), mu1).unwrap();
    let q2 = sge::one_soliton(grid.clone(), mu2).unwrap();
    let q3 = sge::permutability(&q0, &q1, &q2, mu1, mu2).unwrap();
    cr9.check("two_soliton_residual", q3.residual_max(), 1e-3);
    let (ds, dt) = sge::bt_defect(q3.q(), q1.q(), mu2).unwrap();
    cr9.check("bt_q1_mu2_defect", ds.max(dt), 1e-3);
    let q3_swapped = sge::permutability(&q0, &q2, &q1, mu2, mu1).unwrap();
    let order_defect = q3
        .q()
        .zip_map(q3_swapped.q(), |a, b| (a - b).abs())
        .unwrap()
        .max_abs();
    cr9.check("construction_order_symmetry", order_defect, 1e-9);
    cr9.finish();
}

#[test]
fn criterion_04_sym_surface_curvature_and_metric() {
    let mut cr9 = Criterion::new("4 (surface from the λ-derivative)", 60.0);
    let grid = GridSpec::square(-2.0, 2.0, 401).unwrap();
    let sol = sge::one_soliton(grid.clone(), BtParam::new(1.0).unwrap()).unwrap();
    let (surface, richardson) = surfaces::sym_immersion_with(
        &sol,
        0.5,
        surfaces::SymOptions {
            dlambda: 1e-4,
            richardson: true,
        },
    )
    .unwrap();
    let rep = fundamental_forms(&surface).unwrap();
    let k_err = rep.max_curvature_error(-1.0, |flat| {
        (2.0 * sol.q().values()[flat]).sin().abs() > 0.1
    });
    cr9.check("max_|K+1|_off_cusps", k_err, 1e-2);
    let mut metric_err: f64 = 0.0;
    for flat in 0..grid.len() {
        let c2q = (2.0 * sol.q().values()[flat]).cos();
        metric_err = metric_err
            .max((rep.e.values()[flat] - 1.0).abs())
            .max((rep.f.values()[flat] - c2q).abs())
            .max((rep.g.values()[flat] - 1.0).abs());
    }
    cr9.check("metric_coefficients", metric_err, 1e-3);
    cr9.check("richardson_dlambda", richardson.unwrap(), 1e-6);
    cr9.finish();
}

#[test]
fn criterion_05_dressing_surface_transform() {
    let mut cr9 = Criterion::new("5 (dressing-induced surface transform)", 60.0);
    let grid = GridSpec::square(-1.5, 1.5, 301).unwrap();
    let sol = sge::one_soliton(grid, BtParam::new(1.0).unwrap()).unwrap();
    for s in [0.3, 0.8] {
        let dressed = surfaces::dressing_bt_surface(&sol, s, [1.0, 1.0]).unwrap();
        let expected = s / (0.25 + s * s);
        let dist = dressed.base.distance_field(&dressed.surface).unwrap();
        let dist_err = max_over(&dist, |d| (d - expected).abs());
        cr9.check(&format!("displacement_s={s}"), dist_err, 1e-4);
        let base_rep = fundamental_forms(&dressed.base).unwrap();
        let delta = dressed
            .surface
            .points()
            .zip_map(dressed.base.points(), |a, b| a - b)
            .unwrap();
        let tang = surfaces::tangency_defect(&base_rep, &delta, |flat| {
            (2.0 * sol.q().values()[flat]).sin().abs() > 0.1
        });
        cr9.check(&format!("tangency_s={s}"), tang, 1e-3);
        cr9.check(
            &format!("dressed_residual_s={s}"),
            dressed.solution.residual_max(),
            1e-3,
        );
    }
    cr9.finish();
}

#[test]
fn criterion_06_gsge_transforms() {
    let mut cr9 = Criterion::new("6 (generalized sine-Gordon, n = 3)", 120.0);
    let grid = GridSpec::cube(-0.6, 0.6, 61, 3).unwrap();
    let seed = GsgeState::identity(grid).unwrap();
    let lam1 = BtDiag::new(1.5).unwrap();
    let lam2 = BtDiag::new(2.0).unwrap();
    let opts = GsgeBtOptions {
        substeps: 4,
        ..GsgeBtOptions::default()
    };

    // generic O(3) initial value
    let x0 = {
        let mut m = RMat::identity(3, 3);
        let a: f64 = 0.7;
        m[(0, 0)] = a.cos();
        m[(0, 1)] = a.sin();
        m[(1, 0)] = -a.sin();
        m[(1, 1)] = a.cos();
        let mut r = RMat::identity(3, 3);
        let b: f64 = 0.4;
        r[(1, 1)] = b.cos();
        r[(1, 2)] = b.sin();
        r[(2, 1)] = -b.sin();
        r[(2, 2)] = b.cos();
        m * r
    };
    let mut y0 = RMat::zeros(3, 6);
    y0.columns_mut(0, 3).copy_from(&(-&x0));
    y0.columns_mut(3, 3).copy_from(&RMat::identity(3, 3));

    let (lin, _) = gsge::linear_backlund(&seed, lam1, &y0, opts).unwrap();
    let ortho = max_over(lin.a(), |m| {
        (m.transpose() * m - RMat::identity(3, 3)).norm()
    });
    cr9.check("linear_bt_orthogonality", ortho, 1e-8);
    cr9.check("linear_bt_residual", lin.residuals().max(), 1e-3);

    let (ric, _) = gsge::backlund(&seed, lam1, &x0, opts).unwrap();
    let agreement = ric
        .a()
        .zip_map(lin.a(), |x, y| (x - y).norm())
        .unwrap()
        .max_abs();
    cr9.check("riccati_vs_linear", agreement, 1e-5);

    // the quadrilateral vertex at h = 1e-2 (the residual acceptance scale)
    let fine = GridSpec::cube(-0.5, 0.5, 101, 3).unwrap();
    let fine_seed = GsgeState::identity(fine).unwrap();
    let fine_opts = GsgeBtOptions {
        substeps: 2,
        path_check: false,
        ..GsgeBtOptions::default()
    };
    let (a1, _) = gsge::backlund(&fine_seed, lam1, &x0, fine_opts).unwrap();
    let (a2, _) = gsge::backlund(&fine_seed, lam2, &x0, fine_opts).unwrap();
    let vertex = gsge::permutability(&fine_seed, &a1, &a2, lam1, lam2).unwrap();
    cr9.check("permutability_residual", vertex.residuals().max(), 1e-3);
    let (d1, d2) = gsge::permutability_bt_defects(&vertex, &a1, &a2, lam1, lam2).unwrap();
    cr9.check("closes_bt_a1_l2", d1, 1e-3);
    cr9.check("closes_bt_a2_l1", d2, 1e-3);

    // n = 2 reduction of the matrix formula to the scalar one
    let grid2 = GridSpec::square(-1.0, 1.0, 41).unwrap();
    let (m1, m2) = (1.0, 2.0);
    let q0f = Field::constant(grid2.clone(), 0.0f64);
    let q1f = Field::from_fn(grid2.clone(), |p| {
        one_soliton_value(m1, (p[0] + p[1]) / 2.0, (p[0] - p[1]) / 2.0)
    });
    let q2f = Field::from_fn(grid2.clone(), |p| {
        one_soliton_value(m2, (p[0] + p[1]) / 2.0, (p[0] - p[1]) / 2.0)
    });
    let a0 = q0f.map(|&q| gsge::rotation_a(q));
    let a1 = q1f.map(|&q| gsge::rotation_a(q));
    let a2f = q2f.map(|&q| gsge::rotation_a(q));
    let (a3, _) = gsge::permutability_field(
        &a0,
        &a1,
        &a2f,
        BtDiag::new(m1).unwrap(),
        BtDiag::new(m2).unwrap(),
    )
    .unwrap();
    let s0 = SgeSolution::from_field(q0f).unwrap();
    let s1 = SgeSolution::from_field(q1f).unwrap();
    let s2 = SgeSolution::from_field(q2f).unwrap();
    let q3 = sge::permutability(
        &s0,
        &s1,
        &s2,
        BtParam::new(m1).unwrap(),
        BtParam::new(m2).unwrap(),
    )
    .unwrap();
    let mut reduction_err: f64 = 0.0;
    for flat in 0..grid2.len() {
        let expected = gsge::rotation_a(q3.q().values()[flat]);
        let got = &a3.values()[flat];
        let err = ((got[(0, 0)] - expected[(0, 0)]).powi(2)
            + (got[(0, 1)] - expected[(0, 1)]).powi(2))
        .sqrt();
        reduction_err = reduction_err.max(err);
    }
    cr9.check("n2_reduction_vs_scalar", reduction_err, 1e-9);
    cr9.finish();
}

#[test]
fn criterion_07_dressing_methods_and_loop_algebra() {
    let mut cr9 = Criterion::new("7 (u(n) dressing, n = 2 and 3)", 60.0);

    // n = 2, orthogonal real form
    let grid2 = GridSpec::square(-1.0, 1.0, 201).unwrap();
    let vac2 = UnSolution::vacuum(grid2, RealityClass::UnModOn).unwrap();
    let g2 = SimpleElement::from_direction(c(0.0, 0.8), &[C_ONE, cr(1.0)]).unwrap();
    let (alg, chain) = dress_algebraic(&vac2, g2.clone()).unwrap();
    let (ode, _) = dress_ode(&vac2, &g2, g2.pi()).unwrap();
    let (lin, _) = dress_linear(&vac2, &g2, &g2.image_basis().unwrap()).unwrap();
    let d_ao = max_over(
        &alg.v().zip_map(ode.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    let d_al = max_over(
        &alg.v().zip_map(lin.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    cr9.check("n2_vacuum_methods_alg_ode", d_ao, 1e-6);
    cr9.check("n2_vacuum_methods_alg_lin", d_al, 1e-6);
    cr9.check("n2_dressed_residual", alg.residual_max(), 1e-3);
    cr9.check("n2_residue_identity", chain.steps()[0].residue_defect, 1e-10);

    // once-dressed seed, all three methods again
    let seed = chain.current().clone();
    let g2b = SimpleElement::from_direction(c(0.4, 0.7), &[C_ONE, c(0.2, 0.1)]).unwrap();
    let (alg2, _) = dress_algebraic(&seed, g2b.clone()).unwrap();
    let (ode2, _) = dress_ode(&seed, &g2b, g2b.pi()).unwrap();
    let (lin2, _) = dress_linear(&seed, &g2b, &g2b.image_basis().unwrap()).unwrap();
    let d_ao2 = max_over(
        &alg2.v().zip_map(ode2.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    let d_al2 = max_over(
        &alg2.v().zip_map(lin2.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    cr9.check("n2_dressed_methods_alg_ode", d_ao2, 1e-6);
    cr9.check("n2_dressed_methods_alg_lin", d_al2, 1e-6);
    cr9.check("n2_twice_dressed_residual", alg2.residual_max(), 1e-3);

    // n = 3, complex pole
    let grid3 = GridSpec::cube(-0.5, 0.5, 41, 3).unwrap();
    let vac3 = UnSolution::vacuum(grid3, RealityClass::Un).unwrap();
    let g3 = SimpleElement::from_direction(c(0.3, 0.9), &[C_ONE, c(0.5, 0.2), c(-0.1, 0.4)])
        .unwrap();
    let (alg3, _) = dress_algebraic(&vac3, g3.clone()).unwrap();
    let (ode3, _) = dress_ode(&vac3, &g3, g3.pi()).unwrap();
    let (lin3, _) = dress_linear(&vac3, &g3, &g3.image_basis().unwrap()).unwrap();
    let d3_ao = max_over(
        &alg3.v().zip_map(ode3.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    let d3_al = max_over(
        &alg3.v().zip_map(lin3.v(), |a, b| fro_norm(&(a - b))).unwrap(),
        |v| *v,
    );
    cr9.check("n3_vacuum_methods_alg_ode", d3_ao, 1e-6);
    cr9.check("n3_vacuum_methods_alg_lin", d3_al, 1e-6);
    cr9.check("n3_dressed_residual", alg3.residual_max(), 1e-3);

    // rational-loop refactoring identity at 20 sampled λ
    let e1 = SimpleElement::from_direction(c(0.5, 0.9), &[C_ONE, c(0.2, -0.4)]).unwrap();
    let e2 = SimpleElement::from_direction(c(-0.3, 0.7), &[c(0.1, 0.3), C_ONE]).unwrap();
    let (tau1, tau2) = dressing::loop_permutability(&e1, &e2).unwrap();
    let lams = dressing::sample_lambdas(
        &[e1.alpha(), e1.alpha().conj(), e2.alpha(), e2.alpha().conj()],
        20,
        2.0,
    );
    cr9.check_flag("sampled_20_lambdas", lams.len() == 20);
    let loop_defect =
        dressing::loop_permutability_defect(&e1, &e2, &tau1, &tau2, &lams).unwrap();
    cr9.check("loop_identity", loop_defect, 1e-10);

    // two dressing routes meet at the same fourth solution
    let grid2b = GridSpec::square(-1.0, 1.0, 121).unwrap();
    let vac = UnSolution::vacuum(grid2b, RealityClass::Un).unwrap();
    let mut route_a = DressingChain::new(vac.clone()).unwrap();
    route_a.push(e1.clone()).unwrap();
    route_a.push(tau2.clone()).unwrap();
    let mut route_b = DressingChain::new(vac).unwrap();
    route_b.push(e2.clone()).unwrap();
    route_b.push(tau1.clone()).unwrap();
    let two_route = max_over(
        &route_a
            .current()
            .v()
            .zip_map(route_b.current().v(), |a, b| fro_norm(&(a - b)))
            .unwrap(),
        |v| *v,
    );
    cr9.check("two_route_permutability", two_route, 1e-6);

    // curved flats: unitary always, symmetric in the orthogonal real form
    let y2 = dressing::curved_flat_of(&alg).unwrap();
    cr9.check("curved_flat_unitary_n2", dressing::max_unitary_defect(&y2), 1e-8);
    cr9.check(
        "curved_flat_symmetric_n2",
        dressing::max_symmetry_defect(&y2),
        1e-8,
    );
    let y3 = dressing::curved_flat_of(&alg3).unwrap();
    cr9.check("curved_flat_unitary_n3", dressing::max_unitary_defect(&y3), 1e-8);
    cr9.finish();
}

#[test]
fn criterion_08_isothermic_pairs() {
    let mut cr9 = Criterion::new("8 (isothermic Christoffel pairs)", 30.0);
    let grid = GridSpec::square(-1.0, 1.0, 101).unwrap();
    let data = IsothermicData::cylinder(grid).unwrap();
    cr9.check("cylinder_residual", data.residual_max(), 1e-3);
    cr9.check_flag("cylinder_verified", data.verified());
    let (p1, diag1) = isothermic::christoffel_pair_method1(&data).unwrap();
    cr9.check("closed_one_form_defect", diag1.structure_defect, 1e-3);
    let (p2, _) = isothermic::christoffel_pair_method2(&data).unwrap();
    let df = surfaces::max_point_distance(&p1.f, &p2.f).unwrap();
    let dd = surfaces::max_point_distance(&p1.f_dual, &p2.f_dual).unwrap();
    cr9.check("methods_agree_f", df, 1e-6);
    cr9.check("methods_agree_dual", dd, 1e-6);
    let report = isothermic::verify_pair(&p1, &data).unwrap();
    cr9.check("metric_pattern", report.metric_defect, 1e-3);
    cr9.check("dual_metric_pattern", report.dual_metric_defect, 1e-3);
    cr9.check("ii_pattern", report.ii_defect, 1e-3);
    cr9.check("dual_ii_pattern", report.dual_ii_defect, 1e-3);
    cr9.finish();
}

#[test]
fn criterion_09_core_numerics() {
    let mut cr9 = Criterion::new("9 (core numerics)", 30.0);
    // pure gauge g = exp(x₁X + x₂Y) with non-commuting X, Y
    let x = CMat::from_row_slice(
        2,
        2,
        &[cr(0.0), cr(0.5), cr(0.0), cr(0.0)],
    );
    let y = CMat::from_row_slice(
        2,
        2,
        &[cr(0.0), cr(0.0), cr(0.5), cr(0.0)],
    );
    let connection = |n: usize| -> Connection {
        let grid = GridSpec::square(0.0, 1.0, n).unwrap();
        let g_at = |s: f64, t: f64| mat_exp(&(&x * cr(s) + &y * cr(t)));
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
    };
    let r_h = curvature_residual(&connection(26)).unwrap().max_norm();
    let r_h2 = curvature_residual(&connection(51)).unwrap().max_norm();
    let r_h4 = curvature_residual(&connection(101)).unwrap().max_norm();
    let order1 = (r_h / r_h2).log2();
    let order2 = (r_h2 / r_h4).log2();
    cr9.check_flag(
        &format!("refinement_order({order1:.2},{order2:.2})>=1.8"),
        order1 >= 1.8 && order2 >= 1.8,
    );
    // path independence on the unit-domain flat connection at h = 1e-2
    let theta = connection(101);
    let disc = path_discrepancy(&theta, &CMat::identity(2, 2), &[0, 0]).unwrap();
    cr9.check("path_independence", disc, 1e-6);
    cr9.finish();
}

#[test]
fn criterion_10_cli_determinism() {
    let mut cr9 = Criterion::new("10 (byte-identical CLI runs)", 120.0);
    let base = std::env::temp_dir().join("soliton-forge-acceptance-det");
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();
    let out = base.join("run");
    // the config (including --out) must be identical between runs, so run
    // into the same directory and snapshot the bytes in between
    let run = |env_threads: Option<&str>| {
        let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_soliton-forge"));
        if let Some(n) = env_threads {
            cmd.env("SOLITON_FORGE_THREADS", n);
        }
        cmd.args([
            "sge", "--mu", "1", "--mu", "2", "--permute", "--grid", "401x401", "--domain",
            "-2:2,-2:2", "--out",
        ])
        .arg(&out)
        .status()
        .unwrap()
    };
    cr9.check_flag("first_run_succeeded", run(None).success());
    let files = ["solution.csv", "solution.json", "report.json"];
    let snapshot: Vec<Vec<u8>> = files
        .iter()
        .map(|f| std::fs::read(out.join(f)).unwrap())
        .collect();
    std::fs::remove_dir_all(&out).unwrap();
    cr9.check_flag("second_run_succeeded", run(None).success());
    for (f, before) in files.iter().zip(&snapshot) {
        let after = std::fs::read(out.join(f)).unwrap();
        cr9.check_flag(&format!("identical:{f}"), &after == before);
    }
    // a run with a different thread cap must produce the same data files
    std::fs::remove_dir_all(&out).unwrap();
    cr9.check_flag("capped_run_succeeded", run(Some("2")).success());
    let capped = std::fs::read(out.join("solution.csv")).unwrap();
    cr9.check_flag("thread_cap_invariant", capped == snapshot[0]);
    cr9.finish();
}

/// The frame-integration diagnostics feeding criterion 9 also promise a
/// determinant bound for trace-free connections; keep it pinned here.
#[test]
fn criterion_09b_frame_determinant() {
    let mut cr9 = Criterion::new("9b (frame determinant drift)", 30.0);
    let grid = GridSpec::square(-1.0, 1.0, 201).unwrap();
    let sol = sge::one_soliton(grid, BtParam::new(1.0).unwrap()).unwrap();
    let theta = sge::sge_lax(&sol, Complex64::new(0.6, 0.0)).unwrap();
    let frame = integrate_frame_with(
        &theta,
        &CMat::identity(2, 2),
        &sol.origin_node(),
        FrameOptions::quiet(),
    )
    .unwrap();
    let det_drift = frame
        .values()
        .iter()
        .map(|m| (m.determinant() - C_ONE).norm())
        .fold(0.0, f64::max);
    cr9.check("det_drift", det_drift, 1e-6);
    let defect = flatness_defect(&theta).unwrap();
    cr9.check("soliton_lax_flatness", defect, 1e-3);
    cr9.finish();
}
