//! Manufactured-solution verification: the three reference problems, full
//! solve pipelines, discrete and quadrature error norms, convergence-order
//! studies, and stability probes (norm equivalence, coercivity, continuity,
//! and the exact discrete inf-sup constant on small instances).

use std::f64::consts::PI;
use std::io::{self, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{
    assemble_dirichlet_flat, assemble_neumann, assemble_nonflat, BlockTridiagonalSystem,
    EtaCheck, EtaPolicy, RhsMode, Variant,
};
use crate::error::AssemblyError;
use crate::fields::{
    interpolate_onto_trial, lift_to_test, norm_h1_discrete, norm_l2h, seminorm_h1_test,
    BilinearForm, DiscreteSpace, MultilayerField, SpaceTag,
};
use crate::linalg::{dense_cholesky, dense_forward_solve, smallest_singular_value};
use crate::mesh::{build_layer_grid, build_structured_mesh, VerticalLayout};
use crate::solvers::{
    solve_block_jacobi, solve_gmres_jacobi, solve_monolithic, SolveStats, SolverOptions,
};

type Scalar3 = Box<dyn Fn([f64; 2], f64) -> f64>;
type Grad3 = Box<dyn Fn([f64; 2], f64) -> [f64; 3]>;
type Scalar2 = Box<dyn Fn([f64; 2]) -> f64>;
type Vector2 = Box<dyn Fn([f64; 2]) -> [f64; 2]>;

/// A boundary-value problem with a known smooth solution. `source` is the
/// right-hand side in reference-domain coordinates (for the non-flat variant
/// the pullback Jacobian is applied by the assembler, not stored here).
pub struct ManufacturedProblem {
    pub id: u8,
    pub variant: Variant,
    pub label: &'static str,
    pub height: f64,
    pub exact: Scalar3,
    pub exact_grad: Grad3,
    pub source: Scalar3,
    /// Vertical derivative of the exact solution on the top surface,
    /// the flux data of the mixed variant.
    pub surface_flux: Scalar2,
    pub eta: Option<(Scalar2, Vector2)>,
    pub eta_epsilon: Option<f64>,
}

fn bump_x(x: f64) -> (f64, f64, f64) {
    // p(x) = x^2 (1 - x) and derivatives
    (x * x * (1.0 - x), 2.0 * x - 3.0 * x * x, 2.0 - 6.0 * x)
}

fn bump_y(y: f64) -> (f64, f64, f64) {
    // r(y) = y (1 - y)^2 and derivatives
    (y * (1.0 - y) * (1.0 - y), 1.0 - 4.0 * y + 3.0 * y * y, -4.0 + 6.0 * y)
}

/// Homogeneous Dirichlet problem on the unit cube with
/// `v = 4 z^2 (1 - z) sin(pi x^2) sin(pi y)`.
pub fn manufactured_dirichlet() -> ManufacturedProblem {
    let zpart = |z: f64| 4.0 * z * z * (1.0 - z);
    let dz = |z: f64| 4.0 * (2.0 * z - 3.0 * z * z);
    let dzz = |z: f64| 4.0 * (2.0 - 6.0 * z);
    let exact = move |p: [f64; 2], z: f64| zpart(z) * (PI * p[0] * p[0]).sin() * (PI * p[1]).sin();
    ManufacturedProblem {
        id: 1,
        variant: Variant::DirichletFlat,
        label: "dirichlet-flat",
        height: 1.0,
        exact: Box::new(exact),
        exact_grad: Box::new(move |p, z| {
            let (x, y) = (p[0], p[1]);
            let (sx, cx) = ((PI * x * x).sin(), (PI * x * x).cos());
            let (sy, cy) = ((PI * y).sin(), (PI * y).cos());
            [
                zpart(z) * 2.0 * PI * x * cx * sy,
                zpart(z) * sx * PI * cy,
                dz(z) * sx * sy,
            ]
        }),
        source: Box::new(move |p, z| {
            let (x, y) = (p[0], p[1]);
            let (sx, cx) = ((PI * x * x).sin(), (PI * x * x).cos());
            let sy = (PI * y).sin();
            let vxx = zpart(z) * (2.0 * PI * cx - 4.0 * PI * PI * x * x * sx) * sy;
            let vyy = -PI * PI * zpart(z) * sx * sy;
            let vzz = dzz(z) * sx * sy;
            -(vxx + vyy + vzz)
        }),
        surface_flux: Box::new(move |p| {
            dz(1.0) * (PI * p[0] * p[0]).sin() * (PI * p[1]).sin()
        }),
        eta: None,
        eta_epsilon: None,
    }
}

/// Non-flat-surface problem: the physical domain has upper boundary
/// `z = eta(x, y) = 1 + eps sin(2 pi (x + y))` and the exact physical
/// solution is `64 sin(pi z / eta) x^2 (1-x) y (1-y)^2`. Pulled back to the
/// reference cylinder the exact solution is `64 sin(pi z) x^2 (1-x) y (1-y)^2`.
pub fn manufactured_surface(eps: f64) -> ManufacturedProblem {
    let eta = move |p: [f64; 2]| 1.0 + eps * (2.0 * PI * (p[0] + p[1])).sin();
    let deta = move |p: [f64; 2]| 2.0 * PI * eps * (2.0 * PI * (p[0] + p[1])).cos();
    let ddeta = move |p: [f64; 2]| -4.0 * PI * PI * eps * (2.0 * PI * (p[0] + p[1])).sin();

    // source of the physical problem, as a function of physical coordinates
    let physical_source = move |p: [f64; 2], zhat: f64| -> f64 {
        let (px, dpx, ddpx) = bump_x(p[0]);
        let (ry, dry, ddry) = bump_y(p[1]);
        let g = px * ry;
        let gx = dpx * ry;
        let gy = px * dry;
        let gxx = ddpx * ry;
        let gyy = px * ddry;
        let e = eta(p);
        let ex = deta(p);
        let exx = ddeta(p);
        let q = PI * zhat / e;
        let (s, c) = (q.sin(), q.cos());
        // second derivatives of 64 g(x,y) sin(pi zhat / eta(x,y))
        let uxx = 64.0
            * (gxx * s - 2.0 * gx * c * PI * zhat * ex / (e * e)
                - g * s * (PI * zhat * ex / (e * e)) * (PI * zhat * ex / (e * e))
                - g * c * PI * zhat * (exx / (e * e) - 2.0 * ex * ex / (e * e * e)));
        let uyy = 64.0
            * (gyy * s - 2.0 * gy * c * PI * zhat * ex / (e * e)
                - g * s * (PI * zhat * ex / (e * e)) * (PI * zhat * ex / (e * e))
                - g * c * PI * zhat * (exx / (e * e) - 2.0 * ex * ex / (e * e * e)));
        let uzz = -64.0 * g * s * (PI / e) * (PI / e);
        -(uxx + uyy + uzz)
    };

    ManufacturedProblem {
        id: 2,
        variant: Variant::NonFlat,
        label: "nonflat",
        height: 1.0,
        exact: Box::new(move |p, z| {
            let (px, _, _) = bump_x(p[0]);
            let (ry, _, _) = bump_y(p[1]);
            64.0 * (PI * z).sin() * px * ry
        }),
        exact_grad: Box::new(move |p, z| {
            let (px, dpx, _) = bump_x(p[0]);
            let (ry, dry, _) = bump_y(p[1]);
            let (s, c) = ((PI * z).sin(), (PI * z).cos());
            [64.0 * s * dpx * ry, 64.0 * s * px * dry, 64.0 * PI * c * px * ry]
        }),
        // reference-domain source: physical source evaluated at zhat = z eta
        source: Box::new(move |p, z| physical_source(p, z * eta(p))),
        surface_flux: Box::new(move |p| {
            let (px, _, _) = bump_x(p[0]);
            let (ry, _, _) = bump_y(p[1]);
            64.0 * PI * (PI).cos() * px * ry
        }),
        eta: Some((Box::new(eta), Box::new(move |p| {
            let d = deta(p);
            [d, d]
        }))),
        eta_epsilon: Some(eps),
    }
}

/// Mixed problem: Dirichlet on bottom and sides, flux data on the top, with
/// `v = 64 sin(pi z / 2) x^2 (1-x) y (1-y)^2`. The top flux vanishes
/// identically for this solution.
pub fn manufactured_mixed() -> ManufacturedProblem {
    ManufacturedProblem {
        id: 3,
        variant: Variant::Neumann,
        label: "neumann",
        height: 1.0,
        exact: Box::new(move |p, z| {
            let (px, _, _) = bump_x(p[0]);
            let (ry, _, _) = bump_y(p[1]);
            64.0 * (0.5 * PI * z).sin() * px * ry
        }),
        exact_grad: Box::new(move |p, z| {
            let (px, dpx, _) = bump_x(p[0]);
            let (ry, dry, _) = bump_y(p[1]);
            let (s, c) = ((0.5 * PI * z).sin(), (0.5 * PI * z).cos());
            [64.0 * s * dpx * ry, 64.0 * s * px * dry, 32.0 * PI * c * px * ry]
        }),
        source: Box::new(move |p, z| {
            let (px, dpx2, ddpx) = bump_x(p[0]);
            let _ = dpx2;
            let (ry, _, ddry) = bump_y(p[1]);
            let s = (0.5 * PI * z).sin();
            -64.0 * s * (ddpx * ry + px * ddry - 0.25 * PI * PI * px * ry)
        }),
        surface_flux: Box::new(move |p| {
            let (px, _, _) = bump_x(p[0]);
            let (ry, _, _) = bump_y(p[1]);
            32.0 * PI * (0.5 * PI).cos() * px * ry
        }),
        eta: None,
        eta_epsilon: None,
    }
}

/// Returns the manufactured problem for a test id (1, 2 or 3).
pub fn manufactured(test_id: u8) -> Option<ManufacturedProblem> {
    match test_id {
        1 => Some(manufactured_dirichlet()),
        2 => Some(manufactured_surface(0.15)),
        3 => Some(manufactured_mixed()),
        _ => None,
    }
}

impl ManufacturedProblem {
    /// Assembles the block system of this problem on the given space under
    /// a chosen variant (defaults to the problem's own variant; solving a
    /// flat problem under the mixed layout exercises nonzero flux data).
    pub fn assemble(
        &self,
        space: &DiscreteSpace,
        variant: Variant,
        mode: RhsMode,
        policy: EtaPolicy,
    ) -> Result<(BlockTridiagonalSystem, Option<EtaCheck>), AssemblyError> {
        match variant {
            Variant::DirichletFlat => {
                let sys = assemble_dirichlet_flat(
                    &space.mesh,
                    &space.dofs,
                    &space.grid,
                    &self.source,
                    mode,
                )?;
                Ok((sys, None))
            }
            Variant::NonFlat => {
                let (eta, grad_eta) = self
                    .eta
                    .as_ref()
                    .ok_or(AssemblyError::EtaConditionViolated { min_eta: 0.0, max_slope: 0.0 })?;
                let (sys, check) = assemble_nonflat(
                    &space.mesh,
                    &space.dofs,
                    &space.grid,
                    eta,
                    grad_eta,
                    &self.source,
                    mode,
                    policy,
                )?;
                Ok((sys, Some(check)))
            }
            Variant::Neumann => {
                let sys = assemble_neumann(
                    &space.mesh,
                    &space.dofs,
                    &space.grid,
                    &self.source,
                    &self.surface_flux,
                    mode,
                )?;
                Ok((sys, None))
            }
        }
    }
}

/// Solver selection for the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Jacobi,
    GmresJacobi,
    Monolithic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Jacobi => "jacobi",
            Method::GmresJacobi => "gmres-jacobi",
            Method::Monolithic => "monolithic",
        }
    }
}

pub fn solve_system(
    sys: &BlockTridiagonalSystem,
    method: Method,
    opts: &SolverOptions,
) -> Result<(MultilayerField, SolveStats), crate::error::SolveError> {
    match method {
        Method::Jacobi => solve_block_jacobi(sys, opts),
        Method::GmresJacobi => solve_gmres_jacobi(sys, opts),
        Method::Monolithic => solve_monolithic(sys),
    }
}

/// Relative errors of a discrete solution against the exact one.
///
/// `l2h` is the layer-wise discrete L2 norm of the interpolation-referenced
/// error (the quantity that superconverges at second order). `h1h` is the
/// direct discrete H1 error: horizontal gradient mismatch plus the vertical
/// derivative mismatch of the lifted profile, by tensorized quadrature
/// against the exact solution (first order). The interpolation-referenced
/// H1-type error and the direct L2 error are carried along as secondary
/// diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ErrorReport {
    pub l2h: f64,
    pub h1h: f64,
    pub l2_direct: f64,
    pub h1_interp: f64,
}

/// Measures the error of `vh` (plus the top-layer lifting, for the mixed
/// variant with nonzero flux) against the problem's exact solution.
pub fn measure_errors(
    space: &DiscreteSpace,
    problem: &ManufacturedProblem,
    variant: Variant,
    vh: &MultilayerField,
) -> ErrorReport {
    let layout = variant.layout();
    let z_s = space.grid.height;
    let h = space.grid.thickness;
    let z_cut = z_s - h;
    let mixed = variant == Variant::Neumann;

    // the discrete unknown approximates the exact solution minus the lifting
    let target = |p: [f64; 2], z: f64| -> f64 {
        let mut v = (problem.exact)(p, z);
        if mixed && z >= z_cut {
            v -= (problem.surface_flux)(p) * (z - z_s);
        }
        v
    };
    let interp = interpolate_onto_trial(space, &target);
    let err = interp.sub(vh);
    let ref_l2 = norm_l2h(space, &interp).unwrap();
    let ref_h1 = norm_h1_discrete(space, &interp, layout).unwrap();
    let l2h = norm_l2h(space, &err).unwrap() / ref_l2;
    let h1_interp = norm_h1_discrete(space, &err, layout).unwrap() / ref_h1;

    // direct tensorized quadrature against the exact solution
    let moments = space.moments_for(layout).unwrap();
    let basis = &moments.basis;
    let table = space.quadrature();
    let nd = space.ndof();
    let top = space.n_layers() - 1;
    // nodal values of the flux interpolant at the dof vertices
    let g_nodal: Vec<f64> = (0..nd)
        .map(|i| (problem.surface_flux)(space.mesh.vertices[space.dofs.vertex_of_dof[i]]))
        .collect();

    let (mut e_l2, mut r_l2, mut e_h1, mut r_h1) = (0.0, 0.0, 0.0, 0.0);
    for seg in &moments.segments {
        let iv = seg.knot_interval;
        let len = basis.knots[iv + 1] - basis.knots[iv];
        let b_lo = basis.basis_of_knot(iv);
        let b_hi = basis.basis_of_knot(iv + 1);
        for (z, wz) in seg.gauss(3) {
            for q in &table.points {
                let w = wz * q.weight;
                let verts = space.mesh.cell_vertices(q.cell);
                let (mut vh_val, mut vh_gx, mut vh_gy) = (0.0, 0.0, 0.0);
                let (mut c_lo, mut c_hi) = (0.0, 0.0);
                let (mut gk, mut gk_gx, mut gk_gy) = (0.0, 0.0, 0.0);
                for a in 0..q.nv {
                    let Some(dof) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                    let coef = vh.data[seg.layer * nd + dof];
                    vh_val += q.shape[a] * coef;
                    vh_gx += q.grad[a][0] * coef;
                    vh_gy += q.grad[a][1] * coef;
                    if let Some(b) = b_lo {
                        c_lo += q.shape[a] * vh.data[b * nd + dof];
                    }
                    if let Some(b) = b_hi {
                        c_hi += q.shape[a] * vh.data[b * nd + dof];
                    }
                    if mixed && seg.layer == top {
                        let gv = g_nodal[dof];
                        gk += q.shape[a] * gv;
                        gk_gx += q.grad[a][0] * gv;
                        gk_gy += q.grad[a][1] * gv;
                    }
                }
                let mut uh_val = vh_val;
                let (mut uh_gx, mut uh_gy) = (vh_gx, vh_gy);
                let mut uh_dz = (c_hi - c_lo) / len;
                if mixed && seg.layer == top {
                    uh_val += gk * (z - z_s);
                    uh_gx += gk_gx * (z - z_s);
                    uh_gy += gk_gy * (z - z_s);
                    uh_dz += gk;
                }
                let ve = (problem.exact)(q.xy, z);
                let ge = (problem.exact_grad)(q.xy, z);
                e_l2 += w * (ve - uh_val) * (ve - uh_val);
                r_l2 += w * ve * ve;
                e_h1 += w
                    * ((ge[0] - uh_gx) * (ge[0] - uh_gx)
                        + (ge[1] - uh_gy) * (ge[1] - uh_gy)
                        + (ge[2] - uh_dz) * (ge[2] - uh_dz));
                r_h1 += w * (ge[0] * ge[0] + ge[1] * ge[1] + ge[2] * ge[2]);
            }
        }
    }

    ErrorReport {
        l2h,
        h1h: (e_h1 / r_h1).sqrt(),
        l2_direct: (e_l2 / r_l2).sqrt(),
        h1_interp,
    }
}

/// Empirical order under mesh halving.
pub fn order(err_coarse: f64, err_fine: f64) -> f64 {
    (err_coarse / err_fine).log2()
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n_layers: usize,
    pub nh: usize,
    pub err_l2h: f64,
    pub err_h1h: f64,
    pub err_l2_direct: f64,
    pub err_h1_interp: f64,
    pub ord_l2: Option<f64>,
    pub ord_h1: Option<f64>,
    pub outer_iters: usize,
    pub assembly_s: f64,
    pub solve_s: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub variant: &'static str,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(
            w,
            "variant,N,NH,err_L2h,err_H1h,ord_L2,ord_H1,outer_iters,assembly_s,solve_s"
        )?;
        for r in &self.rows {
            let fmt_ord = |o: Option<f64>| o.map(|v| crate::fields::fmt9(v)).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{:.3},{:.3}",
                self.variant,
                r.n_layers,
                r.nh,
                crate::fields::fmt9(r.err_l2h),
                crate::fields::fmt9(r.err_h1h),
                fmt_ord(r.ord_l2),
                fmt_ord(r.ord_h1),
                r.outer_iters,
                r.assembly_s,
                r.solve_s
            )?;
        }
        Ok(())
    }
}

/// Runs a convergence study with matched vertical and horizontal resolution
/// (`N = NH = res`), halving steps between consecutive entries giving the
/// estimated orders.
pub fn run_convergence_study(
    problem: &ManufacturedProblem,
    resolutions: &[usize],
    method: Method,
    opts: &SolverOptions,
    mode: RhsMode,
    policy: EtaPolicy,
) -> Result<ConvergenceReport, String> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &res in resolutions {
        let t0 = Instant::now();
        let (mesh, dofs) = build_structured_mesh(2, res).map_err(|e| e.to_string())?;
        let grid = build_layer_grid(problem.height, res).map_err(|e| e.to_string())?;
        let space = DiscreteSpace::new(mesh, dofs, grid);
        let (sys, _check) = problem
            .assemble(&space, problem.variant, mode, policy)
            .map_err(|e| e.to_string())?;
        let assembly_s = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let (vh, stats) = solve_system(&sys, method, opts).map_err(|e| e.to_string())?;
        if !stats.converged {
            return Err(format!(
                "solver did not converge at N={res} (residual {:.3e})",
                stats.rel_residual
            ));
        }
        let solve_s = t1.elapsed().as_secs_f64();
        let err = measure_errors(&space, problem, problem.variant, &vh);
        rows.push(ConvergenceRow {
            n_layers: res,
            nh: res,
            err_l2h: err.l2h,
            err_h1h: err.h1h,
            err_l2_direct: err.l2_direct,
            err_h1_interp: err.h1_interp,
            ord_l2: None,
            ord_h1: None,
            outer_iters: stats.outer_iters,
            assembly_s,
            solve_s,
        });
    }
    for i in 0..rows.len().saturating_sub(1) {
        rows[i].ord_l2 = Some(order(rows[i].err_l2h, rows[i + 1].err_l2h));
        rows[i].ord_h1 = Some(order(rows[i].err_h1h, rows[i + 1].err_h1h));
    }
    Ok(ConvergenceReport { variant: problem.label, rows })
}

/// Stability metrics over seeded random fields plus, on small instances,
/// the exact discrete inf-sup constants.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub samples: usize,
    pub n_layers: usize,
    pub nh: usize,
    /// min and max of the trial-norm to lifted-gradient ratio
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// mixed-layout analogue (layer count >= 3)
    pub ratio_bl_min: f64,
    pub ratio_bl_max: f64,
    /// min of `a(v, T v) / |v|^2`
    pub coercivity_min: f64,
    /// max of `a(v, phi) / (|v| |grad phi|)`
    pub continuity_max: f64,
    pub infsup_flat: Option<f64>,
    pub infsup_mixed: Option<f64>,
}

impl StabilityReport {
    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "samples,{}", self.samples)?;
        writeln!(w, "N,{}", self.n_layers)?;
        writeln!(w, "NH,{}", self.nh)?;
        let f = crate::fields::fmt9;
        writeln!(w, "ratio_min,{}", f(self.ratio_min))?;
        writeln!(w, "ratio_max,{}", f(self.ratio_max))?;
        writeln!(w, "ratio_bl_min,{}", f(self.ratio_bl_min))?;
        writeln!(w, "ratio_bl_max,{}", f(self.ratio_bl_max))?;
        writeln!(w, "coercivity_min,{}", f(self.coercivity_min))?;
        writeln!(w, "continuity_max,{}", f(self.continuity_max))?;
        if let Some(v) = self.infsup_flat {
            writeln!(w, "infsup_flat,{}", f(v))?;
        }
        if let Some(v) = self.infsup_mixed {
            writeln!(w, "infsup_mixed,{}", f(v))?;
        }
        Ok(())
    }
}

/// Empirical stability constants of the surface form over seeded random
/// fields: the lower constant of `a(v, Tv)` against `|grad Tv| |v|`, the
/// continuity constant against `|v| |grad phi|`, and (on small instances)
/// the exact discrete inf-sup constant.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceFormReport {
    pub samples: usize,
    pub coercivity_min: f64,
    pub continuity_max: f64,
    pub infsup: Option<f64>,
}

/// Samples the surface-form stability constants for a given surface.
pub fn probe_surface_form(
    space: &DiscreteSpace,
    eta: &dyn Fn([f64; 2]) -> f64,
    grad_eta: &dyn Fn([f64; 2]) -> [f64; 2],
    samples: usize,
    seed: u64,
) -> SurfaceFormReport {
    let form = BilinearForm::surface(space, eta, grad_eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n_layers();
    let nd = space.ndof();
    let mut coercivity_min = f64::INFINITY;
    let mut continuity_max = 0.0f64;
    for _ in 0..samples {
        let v = MultilayerField::random(n, nd, SpaceTag::Trial, &mut rng);
        let xh = norm_h1_discrete(space, &v, VerticalLayout::Dirichlet).unwrap();
        let tv = lift_to_test(space, &v, VerticalLayout::Dirichlet).unwrap();
        let grad = seminorm_h1_test(space, &tv).unwrap();
        let a = form.eval(space, &v, &tv).unwrap();
        coercivity_min = coercivity_min.min(a / (grad * xh));

        let phi = MultilayerField::random(n, nd, SpaceTag::TestDirichlet, &mut rng);
        let gphi = seminorm_h1_test(space, &phi).unwrap();
        continuity_max = continuity_max.max(form.eval(space, &v, &phi).unwrap().abs() / (xh * gphi));
    }
    let infsup = (n * nd <= 400).then(|| exact_infsup(space, &form));
    SurfaceFormReport { samples, coercivity_min, continuity_max, infsup }
}

/// Exact discrete inf-sup constant of a form on a space: the smallest
/// singular value of the norm-normalized form matrix, with the trial side
/// measured in the discrete H1 norm of the form's layout and the test side
/// in the full H1 seminorm.
pub fn exact_infsup(space: &DiscreteSpace, form: &BilinearForm) -> f64 {
    let layout = form.variant.layout();
    let moments = space.moments_for(layout).expect("layout available");
    let n = space.n_layers();
    let nd = space.ndof();
    let dim = n * nd;
    let h = space.grid.thickness;

    // form matrix B[(row test), (col trial)] and the two Gram matrices
    let mut b = vec![0.0; dim * dim];
    let mut gx = vec![0.0; dim * dim];
    let mut gy = vec![0.0; dim * dim];
    let mut trial = MultilayerField::zeros(n, nd, SpaceTag::Trial);
    let test_tag = match layout {
        VerticalLayout::Dirichlet => SpaceTag::TestDirichlet,
        VerticalLayout::Neumann => SpaceTag::TestNeumann,
    };
    let mut test = MultilayerField::zeros(n, nd, test_tag);
    for col in 0..dim {
        trial.data[col] = 1.0;
        for row in 0..dim {
            test.data[row] = 1.0;
            b[row * dim + col] = form.eval(space, &trial, &test).unwrap();
            test.data[row] = 0.0;
        }
        trial.data[col] = 0.0;
    }
    for bi in 0..n {
        for bj in 0..n {
            let dd = moments.dsigma_dsigma(0, bi, bj);
            let ss = moments.sigma_sigma(0, bi, bj);
            let stiff = if bi == bj { h } else { 0.0 };
            if dd == 0.0 && ss == 0.0 && stiff == 0.0 {
                continue;
            }
            for i in 0..nd {
                for j in 0..nd {
                    let a_ij = space.stiffness.get(i, j);
                    let m_ij = space.mass.get(i, j);
                    gx[(bi * nd + i) * dim + bj * nd + j] = stiff * a_ij + dd * m_ij;
                    gy[(bi * nd + i) * dim + bj * nd + j] = ss * a_ij + dd * m_ij;
                }
            }
        }
    }

    let lx = dense_cholesky(dim, &gx).expect("trial Gram SPD");
    let ly = dense_cholesky(dim, &gy).expect("test Gram SPD");
    // S = Ly^{-1} B Lx^{-T}
    let mut s = vec![0.0; dim * dim];
    let mut col = vec![0.0; dim];
    for c in 0..dim {
        for r in 0..dim {
            col[r] = b[r * dim + c];
        }
        dense_forward_solve(dim, &ly, &mut col);
        for r in 0..dim {
            s[r * dim + c] = col[r];
        }
    }
    for r in 0..dim {
        col.copy_from_slice(&s[r * dim..(r + 1) * dim]);
        dense_forward_solve(dim, &lx, &mut col);
        s[r * dim..(r + 1) * dim].copy_from_slice(&col);
    }
    smallest_singular_value(dim, &s)
}

/// Samples norm-equivalence ratios, coercivity and continuity over random
/// fields and computes exact inf-sup constants when `N * ndof` is small.
pub fn probe_stability(space: &DiscreteSpace, samples: usize, seed: u64) -> StabilityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n_layers();
    let nd = space.ndof();
    let flat = BilinearForm::flat(space);
    let mixed_ok = space.moments_neumann.is_some();

    let (mut ratio_min, mut ratio_max) = (f64::INFINITY, 0.0f64);
    let (mut ratio_bl_min, mut ratio_bl_max) = (f64::INFINITY, 0.0f64);
    let mut coercivity_min = f64::INFINITY;
    let mut continuity_max = 0.0f64;
    for _ in 0..samples {
        let v = MultilayerField::random(n, nd, SpaceTag::Trial, &mut rng);
        let xh = norm_h1_discrete(space, &v, VerticalLayout::Dirichlet).unwrap();
        let tv = lift_to_test(space, &v, VerticalLayout::Dirichlet).unwrap();
        let grad = seminorm_h1_test(space, &tv).unwrap();
        let ratio = xh / grad;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
        coercivity_min = coercivity_min.min(flat.eval(space, &v, &tv).unwrap() / (xh * xh));

        let phi = MultilayerField::random(n, nd, SpaceTag::TestDirichlet, &mut rng);
        let gphi = seminorm_h1_test(space, &phi).unwrap();
        continuity_max =
            continuity_max.max(flat.eval(space, &v, &phi).unwrap().abs() / (xh * gphi));

        if mixed_ok {
            let bl = norm_h1_discrete(space, &v, VerticalLayout::Neumann).unwrap();
            let tv = lift_to_test(space, &v, VerticalLayout::Neumann).unwrap();
            let grad = seminorm_h1_test(space, &tv).unwrap();
            let r = bl / grad;
            ratio_bl_min = ratio_bl_min.min(r);
            ratio_bl_max = ratio_bl_max.max(r);
        }
    }

    let nh = if space.mesh.dim == 1 {
        space.mesh.n_cells()
    } else {
        ((space.mesh.n_cells() / 2) as f64).sqrt().round() as usize
    };
    let small = n * nd <= 400;
    let infsup_flat = small.then(|| exact_infsup(space, &flat));
    let infsup_mixed = (small && mixed_ok)
        .then(|| exact_infsup(space, &BilinearForm::mixed(space).unwrap()));

    StabilityReport {
        samples,
        n_layers: n,
        nh,
        ratio_min,
        ratio_max,
        ratio_bl_min,
        ratio_bl_max,
        coercivity_min,
        continuity_max,
        infsup_flat,
        infsup_mixed,
    }
}
