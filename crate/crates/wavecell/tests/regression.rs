//! Numerical regression anchors beyond the release gate.
//!
//! These pin finer-grained quantities than the acceptance suite: full
//! parameter-sweep tables, every conditioning column of the plate study
//! (including the 1-norm values the reference tabulation used), and the
//! equivalence of element-level and assembled critical steps.

use wavecell::element::{compute_element_matrices, node_coords, Material, StressState};
use wavecell::evs::{
    modified_matrices, reference_maxima, stabilize_element, variant_config, MatrixForm,
};
use wavecell::geometry::{CircleSense, ImplicitDomain, IndicatorConfig, Primitive, Rect, Vec2};
use wavecell::linalg::{
    cond_inv, cond_mvp, spectral_radius_generalized, spectral_radius_generalized_diag, sym_eig,
    Mat,
};

fn corner_cut() -> (ImplicitDomain, Rect, Material) {
    let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)).unwrap();
    let d = ImplicitDomain::new(
        r,
        vec![Primitive::Circle {
            center: Vec2::new(0.0, 0.0),
            radius: 1.2,
            sense: CircleSense::Void,
        }],
    );
    let m = Material::new(210e9, 0.3, 7850.0, StressState::PlaneStress).unwrap();
    (d, r, m)
}

fn element_dtcr(k: &Mat, m: &MatrixForm) -> f64 {
    let omega2 = match m {
        MatrixForm::Diagonal(d) => spectral_radius_generalized_diag(k, d).unwrap(),
        MatrixForm::Dense(md) => spectral_radius_generalized(k, md).unwrap(),
    };
    2.0 / omega2.sqrt()
}

/// Normalized critical step of the corner-cut element: mass stabilization
/// (variant 2b) at the given parameters over the unstabilized baseline.
fn normalized_dtcr_p2(eps_s: f64, eps_lambda: f64) -> f64 {
    let (domain, r, mat) = corner_cut();
    let p = 2;
    let cfg0e = variant_config("0e").unwrap();
    let em0 = compute_element_matrices(
        &domain,
        IndicatorConfig {
            alpha0: cfg0e.alpha0,
        },
        &mat,
        &r,
        p,
        8,
    )
    .unwrap();
    let dt0 = element_dtcr(&em0.k_c, &MatrixForm::Diagonal(em0.m_lumped.clone()));

    let em = compute_element_matrices(&domain, IndicatorConfig { alpha0: 0.0 }, &mat, &r, p, 8)
        .unwrap();
    let coords = node_coords(p, &r);
    let refmax = reference_maxima(&mat, &r, p).unwrap();
    let mut cfg = variant_config("2b").unwrap();
    cfg.eps_s = eps_s;
    cfg.eps_lambda = eps_lambda;
    let stab = stabilize_element(&em, &coords, &mat, &cfg, &refmax).unwrap();
    let (k_mod, m_mod) = modified_matrices(&em, &stab, &cfg);
    element_dtcr(&k_mod, &m_mod) / dt0
}

#[test]
fn stabilization_strength_sweep_matches_reference_table() {
    let eps_s_targets = [
        (1e-7, 0.9829),
        (1e-6, 0.9893),
        (1e-5, 1.0337),
        (1e-4, 1.1639),
        (1e-3, 1.4861),
        (1e-2, 1.8156),
        (1e-1, 2.4191),
        (1e0, 3.5499),
    ];
    for &(eps_s, want) in &eps_s_targets {
        let got = normalized_dtcr_p2(eps_s, 1e-4);
        println!("eps_s={eps_s:7.0e}: {got:.4}  reference {want:.4}");
        assert!(
            (got / want - 1.0).abs() <= 0.10,
            "eps_s={eps_s:e}: {got:.4} vs {want:.4}"
        );
    }
}

#[test]
fn mode_threshold_sweep_matches_reference_table() {
    let eps_l_targets = [
        (1e-7, 1.4388),
        (1e-6, 1.4388),
        (1e-5, 1.7219),
        (1e-4, 1.8156),
        (1e-3, 1.8156),
        (1e-2, 2.2155),
    ];
    for &(eps_lambda, want) in &eps_l_targets {
        let got = normalized_dtcr_p2(1e-2, eps_lambda);
        println!("eps_lambda={eps_lambda:7.0e}: {got:.4}  reference {want:.4}");
        assert!(
            (got / want - 1.0).abs() <= 0.10,
            "eps_lambda={eps_lambda:e}: {got:.4} vs {want:.4}"
        );
    }
}

/// 1-norm condition number via the spectral decomposition (the reference
/// tabulation of the plate study used this norm; max column sum of A and of
/// its inverse).
fn cond_one_norm(a: &Mat) -> f64 {
    let n = a.rows();
    let one_norm = |m: &Mat| -> f64 {
        (0..n)
            .map(|j| (0..n).map(|i| m.get(i, j).abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    let e = sym_eig(a).unwrap();
    let mut inv = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for m in 0..n {
                s += e.vectors.get(i, m) * e.vectors.get(j, m) / e.values[m];
            }
            inv.set(i, j, s);
        }
    }
    one_norm(a) * one_norm(&inv)
}

/// One conditioning column of the quarter-plate study.
fn plate_column(p: usize, evs_on: bool, alpha0: f64) -> wavecell::solver::GlobalSystem {
    let mut scn = wavecell::scenarios::plate_with_hole();
    scn.p = p;
    if !evs_on {
        scn.evs.stabilize_k = false;
        scn.evs.stabilize_m = false;
    }
    scn.evs.alpha0 = alpha0;
    let (sys, _mesh) = scn.assemble(1).unwrap();
    sys
}

#[test]
fn plate_conditioning_all_columns_p2() {
    let columns: [(&str, bool, f64); 6] = [
        ("unstabilized        ", false, 0.0),
        ("alpha 1e-12         ", false, 1e-12),
        ("alpha 1e-5          ", false, 1e-5),
        ("evs                 ", true, 0.0),
        ("evs + alpha 1e-12   ", true, 1e-12),
        ("evs + alpha 1e-5    ", true, 1e-5),
    ];
    let want_k = [3.29e23, 1.08e13, 1.08e6, 1.51e3, 1.65e3, 1.08e4];
    let want_m = [3.59e10, 3.57e10, 5.69e5, 8.82e1, 8.82e1, 5.45e4];
    for (i, &(name, evs_on, alpha0)) in columns.iter().enumerate() {
        let sys = plate_column(2, evs_on, alpha0);
        let k = sys.dense_stiffness();
        let ck = cond_inv(&k).unwrap();
        let ck1 = cond_one_norm(&k);
        let diag = sys.mass_diagonal().expect("lumped mass");
        let cm = diag.iter().cloned().fold(0.0_f64, f64::max)
            / diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let ones = vec![1.0; k.rows()];
        let cmvp = cond_mvp(&k, &ones).unwrap();
        println!(
            "{name}: cond2(K) = {ck:9.3e}  cond1(K) = {ck1:9.3e} (ref {:8.2e}, log10 off {:+5.2})   cond(M) = {cm:9.3e} (ref {:8.2e}, log10 off {:+5.2})   mvp = {cmvp:8.2e}",
            want_k[i],
            (ck1 / want_k[i]).log10(),
            want_m[i],
            (cm / want_m[i]).log10(),
        );
        assert!(
            (ck / want_k[i]).log10().abs() <= 2.0,
            "cond2(K) column {i}: {ck:e} vs {:e}",
            want_k[i]
        );
        assert!(
            (ck1 / want_k[i]).log10().abs() <= 1.0,
            "cond1(K) column {i}: {ck1:e} vs {:e}",
            want_k[i]
        );
        assert!(
            (cm / want_m[i]).log10().abs() <= 0.1,
            "cond(M) column {i}: {cm:e} vs {:e}",
            want_m[i]
        );
        assert!(cmvp <= 1e3, "mvp condition column {i}: {cmvp:e}");
    }
}

#[test]
fn plate_conditioning_p1_is_insensitive_to_stabilization() {
    // At p = 1 the sliver element's exclusive corner DOFs are all removed
    // by the symmetry constraints, so every column reads the same healthy
    // conditioning.
    for &(evs_on, alpha0) in &[(false, 0.0), (false, 1e-5), (true, 0.0)] {
        let sys = plate_column(1, evs_on, alpha0);
        let k = sys.dense_stiffness();
        let ck = cond_inv(&k).unwrap();
        let ck1 = cond_one_norm(&k);
        let diag = sys.mass_diagonal().expect("lumped mass");
        let cm = diag.iter().cloned().fold(0.0_f64, f64::max)
            / diag.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "p=1 evs={evs_on} alpha0={alpha0:.0e}: cond2(K) = {ck:.4e}, cond1(K) = {ck1:.4e}, cond(M) = {cm:.4e}"
        );
        assert!((ck1 / 2.64e2 - 1.0).abs() < 0.01, "cond1(K) = {ck1:e}");
        assert!((ck / 1.3743e2 - 1.0).abs() < 0.01, "cond2(K) = {ck:e}");
        assert!((cm / 8.43e0 - 1.0).abs() < 0.01, "cond(M) = {cm:e}");
    }
}

#[test]
fn assembled_single_element_matches_element_level_dtcr() {
    use wavecell::solver::{assemble, AssemblyConfig, Mesh};
    let (domain, r, mat) = corner_cut();
    let reference_us = [
        27.1141, 16.4569, 12.7724, 5.60615, 4.33158, 3.13476, 2.44573, 1.82912,
    ];
    for p in [1usize, 3, 8] {
        let mesh = Mesh::uniform(&r, 1, 1, p).unwrap();
        let cfg = AssemblyConfig {
            evs: variant_config("0e").unwrap(),
            ..Default::default()
        };
        let sys = assemble(&domain, &mesh, &mat, &[], &cfg).unwrap();
        assert_eq!(sys.stats.n_cut, 1);
        let dt = sys.critical_dt().unwrap() * 1e6;
        let want = reference_us[p - 1];
        println!("assembled p={p}: dt_cr = {dt:.5} us (ref {want})");
        assert!((dt - want).abs() <= 0.02 * want, "p={p}: {dt} vs {want}");
    }
}
