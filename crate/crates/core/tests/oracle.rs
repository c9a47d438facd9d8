//! Cross-checks of the assembled systems against brute-force quadrature of
//! the bilinear forms on basis pairs, of the interface-jump form against the
//! layered expansion, and of the three solvers against each other.

mod common;

use common::{brute_force_matrix, brute_force_neumann_rhs, jump_form_value};
use multilayer::assembly::{
    assemble_dirichlet_flat, assemble_neumann, assemble_nonflat, BlockTridiagonalSystem,
    EtaPolicy, RhsMode, Variant,
};
use multilayer::fields::{
    lift_to_test, norm_l2h, BilinearForm, DiscreteSpace, MultilayerField, SpaceTag,
};
use multilayer::mesh::{build_layer_grid, build_structured_mesh, VerticalLayout};
use multilayer::solvers::{
    solve_block_jacobi, solve_gmres_jacobi, solve_monolithic, SolverOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space(dim: usize, nh: usize, n: usize) -> DiscreteSpace {
    let (mesh, dofs) = build_structured_mesh(dim, nh).unwrap();
    let grid = build_layer_grid(1.0, n).unwrap();
    DiscreteSpace::new(mesh, dofs, grid)
}

fn compare_dense(sys: &BlockTridiagonalSystem, oracle: &[f64], label: &str) {
    let dim = sys.total_dim();
    let dense = sys.global_matrix().to_dense();
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for k in 0..dim * dim {
        worst = worst.max((dense[k] - oracle[k]).abs());
    }
    assert!(
        worst <= 1e-12 * scale,
        "{label}: max deviation {worst:.3e} vs scale {scale:.3e}"
    );
}

#[test]
fn flat_matrix_matches_brute_force_1d() {
    let sp = space(1, 9, 10);
    assert!(sp.n_layers() * sp.ndof() <= 200);
    let sys = assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, RhsMode::Tensorized)
        .unwrap();
    let oracle = brute_force_matrix(&sp, Variant::DirichletFlat, None);
    compare_dense(&sys, &oracle, "flat 1d");
}

#[test]
fn flat_matrix_matches_brute_force_tiny() {
    // two layers over two horizontal dofs: a 4x4 global matrix
    let sp = space(1, 3, 2);
    let sys = assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, RhsMode::Tensorized)
        .unwrap();
    assert_eq!(sys.total_dim(), 4);
    let oracle = brute_force_matrix(&sp, Variant::DirichletFlat, None);
    compare_dense(&sys, &oracle, "flat tiny");
}

#[test]
fn mixed_matrix_matches_brute_force_tiny() {
    let sp = space(1, 3, 3);
    let sys =
        assemble_neumann(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, &|_| 0.0, RhsMode::Tensorized)
            .unwrap();
    assert_eq!(sys.total_dim(), 6);
    let oracle = brute_force_matrix(&sp, Variant::Neumann, None);
    compare_dense(&sys, &oracle, "mixed tiny");
}

#[test]
fn flat_matrix_matches_brute_force_2d() {
    let sp = space(2, 4, 4);
    let sys = assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, RhsMode::Tensorized)
        .unwrap();
    let oracle = brute_force_matrix(&sp, Variant::DirichletFlat, None);
    compare_dense(&sys, &oracle, "flat 2d");
}

#[test]
fn surface_matrix_matches_brute_force() {
    use std::f64::consts::PI;
    let eta = |p: [f64; 2]| 1.0 + 0.08 * (2.0 * PI * (p[0] + p[1])).sin();
    let grad_eta = |p: [f64; 2]| {
        let d = 0.16 * PI * (2.0 * PI * (p[0] + p[1])).cos();
        [d, d]
    };
    for (dim, nh, n) in [(1usize, 9usize, 10usize), (2, 4, 4)] {
        let sp = space(dim, nh, n);
        assert!(sp.n_layers() * sp.ndof() <= 200);
        let (sys, _) = assemble_nonflat(
            &sp.mesh,
            &sp.dofs,
            &sp.grid,
            &eta,
            &grad_eta,
            &|_, _| 0.0,
            RhsMode::Tensorized,
            EtaPolicy::Error,
        )
        .unwrap();
        let oracle = brute_force_matrix(&sp, Variant::NonFlat, Some((&eta, &grad_eta)));
        compare_dense(&sys, &oracle, "surface");
    }
}

#[test]
fn mixed_matrix_matches_brute_force() {
    for (dim, nh, n) in [(1usize, 9usize, 10usize), (2, 4, 5), (1, 5, 3)] {
        let sp = space(dim, nh, n);
        assert!(sp.n_layers() * sp.ndof() <= 200);
        let sys =
            assemble_neumann(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, &|_| 0.0, RhsMode::Tensorized)
                .unwrap();
        let oracle = brute_force_matrix(&sp, Variant::Neumann, None);
        compare_dense(&sys, &oracle, "mixed");
    }
}

#[test]
fn mixed_rhs_with_flux_matches_brute_force() {
    // low-degree polynomial data keeps both quadrature routes exact
    let f = |p: [f64; 2], z: f64| 1.0 + p[0] + p[1] * z + z * z;
    let g = |p: [f64; 2]| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
    let sp = space(2, 4, 3);
    let sys =
        assemble_neumann(&sp.mesh, &sp.dofs, &sp.grid, &f, &g, RhsMode::Tensorized).unwrap();
    let oracle = brute_force_neumann_rhs(&sp, &f, &g);
    let flat = sys.rhs_flat();
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..flat.len() {
        assert!(
            (flat[k] - oracle[k]).abs() <= 1e-12 * scale,
            "rhs entry {k}: {} vs {}",
            flat[k],
            oracle[k]
        );
    }

    // 1d variant with a nonzero source only
    let sp = space(1, 9, 3);
    let g1 = |p: [f64; 2]| p[0] * (1.0 - p[0]);
    let sys =
        assemble_neumann(&sp.mesh, &sp.dofs, &sp.grid, &f, &g1, RhsMode::Tensorized).unwrap();
    let oracle = brute_force_neumann_rhs(&sp, &f, &g1);
    let flat = sys.rhs_flat();
    let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for k in 0..flat.len() {
        assert!((flat[k] - oracle[k]).abs() <= 1e-12 * scale);
    }
}

#[test]
fn jump_form_agrees_with_layered_expansion() {
    // the interface-jump route, the prepared-form route and the assembled
    // matrix pairing agree on random coefficient fields
    let sp = space(2, 3, 5);
    let sys = assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, RhsMode::Tensorized)
        .unwrap();
    let g = sys.global_matrix();
    let form = BilinearForm::flat(&sp);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let v = MultilayerField::random(5, sp.ndof(), SpaceTag::Trial, &mut rng);
        let phi = MultilayerField::random(5, sp.ndof(), SpaceTag::TestDirichlet, &mut rng);
        let via_jump = jump_form_value(&sp, &v, &phi);
        let via_form = form.eval(&sp, &v, &phi).unwrap();
        let via_matrix: f64 = {
            let av = g.mul_vec(&v.data);
            phi.data.iter().zip(&av).map(|(p, a)| p * a).sum()
        };
        let scale = via_form.abs().max(1.0);
        assert!((via_jump - via_form).abs() <= 1e-11 * scale, "{via_jump} vs {via_form}");
        assert!((via_matrix - via_form).abs() <= 1e-11 * scale);
    }
}

#[test]
fn lifted_coercivity_on_oracle_matrix() {
    // the assembled matrix satisfies the lower bound when paired with the
    // lifted trial field, mirroring the prepared-form samples
    let sp = space(1, 6, 6);
    let sys = assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &|_, _| 0.0, RhsMode::Tensorized)
        .unwrap();
    let g = sys.global_matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let v = MultilayerField::random(6, sp.ndof(), SpaceTag::Trial, &mut rng);
        let tv = lift_to_test(&sp, &v, VerticalLayout::Dirichlet).unwrap();
        let av = g.mul_vec(&v.data);
        let pairing: f64 = tv.data.iter().zip(&av).map(|(p, a)| p * a).sum();
        let xh = multilayer::fields::norm_h1_discrete(&sp, &v, VerticalLayout::Dirichlet)
            .unwrap();
        assert!(pairing >= 0.5 * xh * xh - 1e-10);
    }
}

#[test]
fn solvers_agree_on_all_variants() {
    use std::f64::consts::PI;
    let f = |p: [f64; 2], z: f64| (PI * p[0]).sin() * (PI * p[1]).sin() * (1.0 + z);
    let eta = |p: [f64; 2]| 1.0 + 0.1 * (2.0 * PI * (p[0] + p[1])).sin();
    let grad_eta = |p: [f64; 2]| {
        let d = 0.2 * PI * (2.0 * PI * (p[0] + p[1])).cos();
        [d, d]
    };
    let g = |p: [f64; 2]| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);

    let sp = space(2, 6, 6);
    let systems: Vec<(&str, BlockTridiagonalSystem)> = vec![
        (
            "flat",
            assemble_dirichlet_flat(&sp.mesh, &sp.dofs, &sp.grid, &f, RhsMode::Tensorized)
                .unwrap(),
        ),
        (
            "surface",
            assemble_nonflat(
                &sp.mesh,
                &sp.dofs,
                &sp.grid,
                &eta,
                &grad_eta,
                &f,
                RhsMode::Tensorized,
                EtaPolicy::Error,
            )
            .unwrap()
            .0,
        ),
        (
            "mixed",
            assemble_neumann(&sp.mesh, &sp.dofs, &sp.grid, &f, &g, RhsMode::Tensorized).unwrap(),
        ),
    ];
    let opts = SolverOptions { tol: 1e-12, ..Default::default() };
    for (label, sys) in &systems {
        let (xd, sd) = solve_monolithic(sys).unwrap();
        assert!(sd.rel_residual <= 1e-10, "{label} direct residual");
        let (xj, sj) = solve_block_jacobi(sys, &opts).unwrap();
        assert!(sj.converged, "{label} jacobi");
        let (xg, sg) = solve_gmres_jacobi(sys, &opts).unwrap();
        assert!(sg.converged, "{label} gmres");
        let scale = norm_l2h(&sp, &xd).unwrap().max(1e-12);
        let dj = norm_l2h(&sp, &xj.sub(&xd)).unwrap() / scale;
        let dg = norm_l2h(&sp, &xg.sub(&xd)).unwrap() / scale;
        assert!(dj <= 1e-8, "{label}: jacobi vs direct {dj:.3e}");
        assert!(dg <= 1e-8, "{label}: gmres vs direct {dg:.3e}");
    }
}
