//! Shared brute-force evaluators for the integration tests: direct
//! tensorized quadrature of the bilinear forms and right-hand sides on
//! basis pairs, written against the definitions and independent of the
//! moment-table assembly path.

use multilayer::assembly::{VerticalBasis, Variant};
use multilayer::fields::{DiscreteSpace, MultilayerField};
use multilayer::hfem::QuadratureTable;
use multilayer::mesh::VerticalLayout;

/// Elementary vertical segments: knot intervals split at layer interfaces.
pub fn z_segments(space: &DiscreteSpace, layout: VerticalLayout) -> Vec<(f64, f64, usize, usize)> {
    let knots = space.grid.knots(layout);
    let mut cuts = knots.clone();
    cuts.extend_from_slice(&space.grid.interfaces);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let h = space.grid.thickness;
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let layer = ((mid / h) as usize).min(space.n_layers() - 1);
            let iv = knots.iter().rposition(|&k| k <= mid).unwrap().min(knots.len() - 2);
            (w[0], w[1], layer, iv)
        })
        .collect()
}

fn gauss3(a: f64, b: f64) -> [(f64, f64); 3] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let s = half * (0.6f64).sqrt();
    [
        (mid - s, half * 5.0 / 9.0),
        (mid, half * 8.0 / 9.0),
        (mid + s, half * 5.0 / 9.0),
    ]
}

/// Dense global matrix of a form computed by direct quadrature on basis
/// pairs. Row index is the test pair `(layer, dof)`, column the trial pair.
/// `surface` carries the non-flat coefficients.
pub fn brute_force_matrix(
    space: &DiscreteSpace,
    variant: Variant,
    surface: Option<(&dyn Fn([f64; 2]) -> f64, &dyn Fn([f64; 2]) -> [f64; 2])>,
) -> Vec<f64> {
    let layout = variant.layout();
    let basis = VerticalBasis::new(&space.grid, layout).unwrap();
    let table = QuadratureTable::new(&space.mesh);
    let n = space.n_layers();
    let nd = space.ndof();
    let dim = n * nd;
    let mut dense = vec![0.0; dim * dim];
    let knots = &basis.knots;

    for (za, zb, layer, iv) in z_segments(space, layout) {
        let len = knots[iv + 1] - knots[iv];
        // test/trial vertical hats alive on this knot interval
        let locals: Vec<(usize, f64)> = [(iv, -1.0 / len), (iv + 1, 1.0 / len)]
            .into_iter()
            .filter_map(|(k, d)| basis.basis_of_knot(k).map(|b| (b, d)))
            .collect();
        for (z, wz) in gauss3(za, zb) {
            let svals: Vec<(usize, f64, f64)> =
                locals.iter().map(|&(b, d)| (b, basis.eval(b, z), d)).collect();
            for q in &table.points {
                let w = wz * q.weight;
                let (eta_v, k13, k23, k33) = match surface {
                    Some((eta, grad_eta)) => {
                        let e = eta(q.xy);
                        let g = grad_eta(q.xy);
                        let k13 = -z * g[0] / e;
                        let k23 = -z * g[1] / e;
                        let k33 = (1.0 + z * z * (g[0] * g[0] + g[1] * g[1])) / (e * e);
                        (e, k13, k23, k33)
                    }
                    None => (1.0, 0.0, 0.0, 1.0),
                };
                let verts = space.mesh.cell_vertices(q.cell);
                for a in 0..q.nv {
                    let Some(i) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                    for c in 0..q.nv {
                        let Some(j) = space.dofs.dof_of_vertex[verts[c]] else { continue };
                        let grad_dot = q.grad[a][0] * q.grad[c][0] + q.grad[a][1] * q.grad[c][1];
                        let k_grad_test = k13 * q.grad[a][0] + k23 * q.grad[a][1];
                        let k_grad_trial = k13 * q.grad[c][0] + k23 * q.grad[c][1];
                        // horizontal gradients: trial layer constant x test hat
                        for &(bt, sv, _) in &svals {
                            let row = bt * nd + i;
                            dense[row * dim + layer * nd + j] += w * eta_v * sv * grad_dot;
                        }
                        // vertical derivative of the lifted trial x test hat
                        // (cross term), and test derivative x trial constant
                        for &(bt, sv, dt) in &svals {
                            let row = bt * nd + i;
                            // trial-side vertical derivative couples every
                            // hat alive here
                            for &(btr, _, dtr) in &svals {
                                let col = btr * nd + j;
                                dense[row * dim + col] += w * eta_v
                                    * (dtr * sv * k_grad_test * q.shape[c]
                                        + dtr * dt * k33 * q.shape[a] * q.shape[c]);
                            }
                            dense[row * dim + layer * nd + j] +=
                                w * eta_v * dt * k_grad_trial * q.shape[a];
                        }
                    }
                }
            }
        }
    }
    dense
}

/// Brute-force right-hand side of the mixed problem: tensorized source
/// integrals on the shifted layout, the top-surface flux pairing, and the
/// lifting correction, all by direct quadrature.
pub fn brute_force_neumann_rhs(
    space: &DiscreteSpace,
    f: &dyn Fn([f64; 2], f64) -> f64,
    g: &dyn Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let layout = VerticalLayout::Neumann;
    let basis = VerticalBasis::new(&space.grid, layout).unwrap();
    let table = QuadratureTable::new(&space.mesh);
    let n = space.n_layers();
    let nd = space.ndof();
    let z_s = space.grid.height;
    let top = n - 1;
    let mut rhs = vec![0.0; n * nd];
    let knots = &basis.knots;

    for (za, zb, layer, iv) in z_segments(space, layout) {
        let len = knots[iv + 1] - knots[iv];
        let locals: Vec<(usize, f64)> = [(iv, -1.0 / len), (iv + 1, 1.0 / len)]
            .into_iter()
            .filter_map(|(k, d)| basis.basis_of_knot(k).map(|b| (b, d)))
            .collect();
        // the assembler integrates the source with 2-point Gauss per segment
        let half = 0.5 * (zb - za);
        let mid = 0.5 * (za + zb);
        let s2 = half / 3.0f64.sqrt();
        for (z, wz) in [(mid - s2, half), (mid + s2, half)] {
            for q in &table.points {
                let w = wz * q.weight * f(q.xy, z);
                let verts = space.mesh.cell_vertices(q.cell);
                for a in 0..q.nv {
                    let Some(i) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                    for &(bt, _) in &locals {
                        rhs[bt * nd + i] += w * q.shape[a] * basis.eval(bt, z);
                    }
                }
            }
        }
        // lifting: subtract (z - z_s) grad(g_k) . grad(phi sigma) + g_k d_z
        if layer == top {
            for (z, wz) in gauss3(za, zb) {
                for q in &table.points {
                    let verts = space.mesh.cell_vertices(q.cell);
                    let (mut gk, mut gk_gx, mut gk_gy) = (0.0, 0.0, 0.0);
                    for a in 0..q.nv {
                        let gv = g(space.mesh.vertices[verts[a]]);
                        gk += q.shape[a] * gv;
                        gk_gx += q.grad[a][0] * gv;
                        gk_gy += q.grad[a][1] * gv;
                    }
                    for a in 0..q.nv {
                        let Some(i) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                        for &(bt, dt) in &locals {
                            let sv = basis.eval(bt, z);
                            let grad_pair = (z - z_s)
                                * (gk_gx * q.grad[a][0] + gk_gy * q.grad[a][1])
                                * sv;
                            let dz_pair = gk * q.shape[a] * dt;
                            rhs[bt * nd + i] -= wz * q.weight * (grad_pair + dz_pair);
                        }
                    }
                }
            }
        }
    }
    // top-surface flux pairing
    for q in &table.points {
        let w = q.weight * g(q.xy);
        let verts = space.mesh.cell_vertices(q.cell);
        for a in 0..q.nv {
            if let Some(i) = space.dofs.dof_of_vertex[verts[a]] {
                rhs[top * nd + i] += w * q.shape[a];
            }
        }
    }
    rhs
}

/// Interface-jump form of the flat bilinear form on coefficient fields:
/// per-layer horizontal gradient pairings plus interface jump terms against
/// the vertical derivative of the test profile, all by direct evaluation.
pub fn jump_form_value(
    space: &DiscreteSpace,
    v: &MultilayerField,
    phi: &MultilayerField,
) -> f64 {
    let layout = VerticalLayout::Dirichlet;
    let basis = VerticalBasis::new(&space.grid, layout).unwrap();
    let table = QuadratureTable::new(&space.mesh);
    let n = space.n_layers();
    let nd = space.ndof();
    let knots = &basis.knots;

    // derivative of the test profile inside the knot interval containing z
    let profile_deriv = |z: f64, coeffs: &dyn Fn(usize) -> f64| -> f64 {
        let iv = knots.iter().rposition(|&k| k <= z).unwrap().min(knots.len() - 2);
        let len = knots[iv + 1] - knots[iv];
        let c_lo = basis.basis_of_knot(iv).map(&coeffs).unwrap_or(0.0);
        let c_hi = basis.basis_of_knot(iv + 1).map(&coeffs).unwrap_or(0.0);
        (c_hi - c_lo) / len
    };

    let mut total = 0.0;
    // horizontal gradient term, layer by layer with exact z weights
    for (za, zb, layer, iv) in z_segments(space, layout) {
        let len = knots[iv + 1] - knots[iv];
        for (z, wz) in gauss3(za, zb) {
            let lam_hi = (z - knots[iv]) / len;
            for q in &table.points {
                let verts = space.mesh.cell_vertices(q.cell);
                let (mut vgx, mut vgy, mut pgx, mut pgy) = (0.0, 0.0, 0.0, 0.0);
                for a in 0..q.nv {
                    let Some(dof) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                    vgx += q.grad[a][0] * v.data[layer * nd + dof];
                    vgy += q.grad[a][1] * v.data[layer * nd + dof];
                    let mut pc = 0.0;
                    if let Some(b) = basis.basis_of_knot(iv) {
                        pc += (1.0 - lam_hi) * phi.data[b * nd + dof];
                    }
                    if let Some(b) = basis.basis_of_knot(iv + 1) {
                        pc += lam_hi * phi.data[b * nd + dof];
                    }
                    pgx += q.grad[a][0] * pc;
                    pgy += q.grad[a][1] * pc;
                }
                total += wz * q.weight * (vgx * pgx + vgy * pgy);
            }
        }
    }
    // interface, top and bottom trace terms
    let eval_trace = |layer_hi: Option<usize>, layer_lo: Option<usize>, z: f64| -> f64 {
        let mut acc = 0.0;
        for q in &table.points {
            let verts = space.mesh.cell_vertices(q.cell);
            let mut jump = 0.0;
            let mut dphi = 0.0;
            for a in 0..q.nv {
                let Some(dof) = space.dofs.dof_of_vertex[verts[a]] else { continue };
                let hi = layer_hi.map(|l| v.data[l * nd + dof]).unwrap_or(0.0);
                let lo = layer_lo.map(|l| v.data[l * nd + dof]).unwrap_or(0.0);
                jump += q.shape[a] * (hi - lo);
                dphi += q.shape[a] * profile_deriv(z, &|b| phi.data[b * nd + dof]);
            }
            acc += q.weight * jump * dphi;
        }
        acc
    };
    for k in 1..n {
        total += eval_trace(Some(k), Some(k - 1), space.grid.interfaces[k]);
    }
    // bottom: + v^1 d_z phi, top: - v^N d_z phi
    total += eval_trace(Some(0), None, 1e-12 * space.grid.thickness);
    total += eval_trace(None, Some(n - 1), space.grid.height - 1e-12 * space.grid.thickness);
    total
}
