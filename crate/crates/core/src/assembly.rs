//! Assembly of the layered block-tridiagonal systems.
//!
//! The trial space is piecewise constant per layer with P1 horizontal
//! profiles; the test space is spanned by vertical hat functions on the
//! shifted knot grid, tensorized with the same horizontal profiles. Testing
//! against one vertical hat per layer turns the discrete problem into a
//! block-tridiagonal system whose blocks are weighted combinations of
//! horizontal stiffness, mass and gradient-coupling matrices. The weights
//! are vertical moment integrals, computed here in closed form (all
//! integrands are polynomials in `z` of degree at most four).

use std::sync::Arc;

use crate::error::AssemblyError;
use crate::hfem::{CsrMatrix, P1Assembler};
use crate::mesh::{DofMap, HorizontalMesh, LayerGrid, VerticalLayout};

/// Problem variant selecting the bilinear form and the vertical test layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    DirichletFlat,
    NonFlat,
    Neumann,
}

impl Variant {
    pub fn layout(self) -> VerticalLayout {
        match self {
            Variant::Neumann => VerticalLayout::Neumann,
            _ => VerticalLayout::Dirichlet,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DirichletFlat => "dirichlet-flat",
            Variant::NonFlat => "nonflat",
            Variant::Neumann => "neumann",
        }
    }
}

/// How the right-hand side integrates the source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RhsMode {
    /// Tensorized quadrature of `f` against `phi_i sigma_a` (default).
    #[default]
    Tensorized,
    /// Replace `f` by its vertical layer averages first, then integrate the
    /// averages against the vertical moments of the test functions.
    LayerAveraged,
}

/// Vertical hat basis on the shifted knot grid of a layout.
///
/// Basis `i` (zero based) is the hat peaking at knot `i + 1`. In the
/// Dirichlet layout the two boundary knots carry no basis function; in the
/// Neumann layout the top knot does (a half hat equal to one at the top).
#[derive(Debug, Clone)]
pub struct VerticalBasis {
    pub layout: VerticalLayout,
    pub knots: Vec<f64>,
    pub n: usize,
}

impl VerticalBasis {
    pub fn new(grid: &LayerGrid, layout: VerticalLayout) -> Result<Self, AssemblyError> {
        if layout == VerticalLayout::Neumann && grid.n_layers < 3 {
            return Err(AssemblyError::UnsupportedLayerCount(grid.n_layers));
        }
        Ok(VerticalBasis { layout, knots: grid.knots(layout), n: grid.n_layers })
    }

    /// Basis index attached to a knot, if any.
    pub fn basis_of_knot(&self, knot: usize) -> Option<usize> {
        if knot >= 1 && knot <= self.n {
            Some(knot - 1)
        } else {
            None
        }
    }

    pub fn peak_knot(&self, basis: usize) -> usize {
        basis + 1
    }

    /// Pointwise evaluation of basis `i`.
    pub fn eval(&self, i: usize, z: f64) -> f64 {
        let p = self.peak_knot(i);
        let zp = self.knots[p];
        if z <= zp {
            let zl = self.knots[p - 1];
            if z < zl {
                0.0
            } else {
                (z - zl) / (zp - zl)
            }
        } else if p + 1 >= self.knots.len() {
            0.0
        } else {
            let zr = self.knots[p + 1];
            if z > zr {
                0.0
            } else {
                (zr - z) / (zr - zp)
            }
        }
    }

    /// Derivative of basis `i` inside knot interval `iv`.
    pub fn deriv_on_interval(&self, i: usize, iv: usize) -> f64 {
        let p = self.peak_knot(i);
        let len = self.knots[iv + 1] - self.knots[iv];
        if iv + 1 == p {
            1.0 / len
        } else if iv == p {
            -1.0 / len
        } else {
            0.0
        }
    }
}

/// One elementary vertical segment: the intersection of a knot interval of
/// the test grid with a layer. All moment integrands are single polynomials
/// on such a segment.
#[derive(Debug, Clone, Copy)]
pub struct ZSegment {
    pub a: f64,
    pub b: f64,
    pub layer: usize,
    pub knot_interval: usize,
}

impl ZSegment {
    pub fn gauss(&self, order: usize) -> Vec<(f64, f64)> {
        let (a, b) = (self.a, self.b);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        match order {
            2 => {
                let s = half / 3.0f64.sqrt();
                vec![(mid - s, half), (mid + s, half)]
            }
            _ => {
                let s = half * (0.6f64).sqrt();
                vec![
                    (mid - s, half * 5.0 / 9.0),
                    (mid, half * 8.0 / 9.0),
                    (mid + s, half * 5.0 / 9.0),
                ]
            }
        }
    }
}

/// Families of vertical moment integrals over a single knot interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentFamily {
    /// `z^p sigma_i sigma_j`
    SigmaSigma,
    /// `z^p sigma_i sigma'_j`
    SigmaDsigma,
    /// `z^p sigma'_i sigma'_j`
    DsigmaDsigma,
    /// `z^p kappa_layer sigma_j` (first index is a layer)
    LayerSigma,
    /// `z^p kappa_layer sigma'_j`
    LayerDsigma,
}

/// Closed-form vertical moments of the test basis, per layer and globally.
#[derive(Debug, Clone)]
pub struct VerticalMomentTable {
    pub basis: VerticalBasis,
    pub segments: Vec<ZSegment>,
    n_layers: usize,
    layer_sigma: Vec<f64>,
    layer_dsigma: Vec<f64>,
    sigma_sigma: Vec<f64>,
    sigma_dsigma: Vec<f64>,
    dsigma_dsigma: Vec<f64>,
}

/// Exact `int_a^b z^p (c0 + c1 z)(d0 + d1 z) dz` for `p <= 2`.
fn poly_product_integral(a: f64, b: f64, p: usize, c: (f64, f64), d: (f64, f64)) -> f64 {
    let q0 = c.0 * d.0;
    let q1 = c.0 * d.1 + c.1 * d.0;
    let q2 = c.1 * d.1;
    let mono = |k: usize| (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k as f64 + 1.0);
    q0 * mono(p) + q1 * mono(p + 1) + q2 * mono(p + 2)
}

impl VerticalMomentTable {
    pub fn new(grid: &LayerGrid, layout: VerticalLayout) -> Result<Self, AssemblyError> {
        let basis = VerticalBasis::new(grid, layout)?;
        let n = basis.n;
        let nk = basis.knots.len();

        // elementary segments: knot intervals split at layer interfaces
        let mut cuts: Vec<f64> = basis.knots.clone();
        cuts.extend_from_slice(&grid.interfaces);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut segments = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let layer = ((mid / grid.thickness) as usize).min(n - 1);
            let knot_interval = match basis
                .knots
                .binary_search_by(|k| k.partial_cmp(&mid).unwrap())
            {
                Ok(i) => i,
                Err(i) => i - 1,
            }
            .min(nk - 2);
            segments.push(ZSegment { a, b, layer, knot_interval });
        }

        let mut t = VerticalMomentTable {
            basis,
            segments,
            n_layers: n,
            layer_sigma: vec![0.0; 3 * n * n],
            layer_dsigma: vec![0.0; 3 * n * n],
            sigma_sigma: vec![0.0; 3 * n * n],
            sigma_dsigma: vec![0.0; 3 * n * n],
            dsigma_dsigma: vec![0.0; 3 * n * n],
        };

        let segments = t.segments.clone();
        for seg in &segments {
            let iv = seg.knot_interval;
            let zl = t.basis.knots[iv];
            let zr = t.basis.knots[iv + 1];
            let len = zr - zl;
            // affine forms of the two hats alive on this knot interval:
            // value coefficients (c0, c1) and the constant derivative
            let falling = ((zr / len, -1.0 / len), -1.0 / len);
            let rising = ((-zl / len, 1.0 / len), 1.0 / len);
            let one = (1.0, 0.0);
            let locals: [(Option<usize>, (f64, f64), f64); 2] = [
                (t.basis.basis_of_knot(iv), falling.0, falling.1),
                (t.basis.basis_of_knot(iv + 1), rising.0, rising.1),
            ];
            for p in 0..3 {
                for &(bi, ci, di) in &locals {
                    let Some(i) = bi else { continue };
                    t.layer_sigma[(p * n + seg.layer) * n + i] +=
                        poly_product_integral(seg.a, seg.b, p, one, ci);
                    t.layer_dsigma[(p * n + seg.layer) * n + i] +=
                        poly_product_integral(seg.a, seg.b, p, one, (di, 0.0));
                    for &(bj, cj, dj) in &locals {
                        let Some(j) = bj else { continue };
                        t.sigma_sigma[(p * n + i) * n + j] +=
                            poly_product_integral(seg.a, seg.b, p, ci, cj);
                        t.sigma_dsigma[(p * n + i) * n + j] +=
                            poly_product_integral(seg.a, seg.b, p, ci, (dj, 0.0));
                        t.dsigma_dsigma[(p * n + i) * n + j] +=
                            poly_product_integral(seg.a, seg.b, p, (di, 0.0), (dj, 0.0));
                    }
                }
            }
        }
        Ok(t)
    }

    #[inline]
    pub fn layer_sigma(&self, p: usize, layer: usize, j: usize) -> f64 {
        self.layer_sigma[(p * self.n_layers + layer) * self.n_layers + j]
    }

    #[inline]
    pub fn layer_dsigma(&self, p: usize, layer: usize, j: usize) -> f64 {
        self.layer_dsigma[(p * self.n_layers + layer) * self.n_layers + j]
    }

    #[inline]
    pub fn sigma_sigma(&self, p: usize, i: usize, j: usize) -> f64 {
        self.sigma_sigma[(p * self.n_layers + i) * self.n_layers + j]
    }

    #[inline]
    pub fn sigma_dsigma(&self, p: usize, i: usize, j: usize) -> f64 {
        self.sigma_dsigma[(p * self.n_layers + i) * self.n_layers + j]
    }

    #[inline]
    pub fn dsigma_dsigma(&self, p: usize, i: usize, j: usize) -> f64 {
        self.dsigma_dsigma[(p * self.n_layers + i) * self.n_layers + j]
    }

    /// Moment over a single knot interval, computed on demand.
    /// For the layer families, `i` is the layer index.
    pub fn interval_moment(
        &self,
        interval: usize,
        family: MomentFamily,
        p: usize,
        i: usize,
        j: usize,
    ) -> f64 {
        let zl = self.basis.knots[interval];
        let zr = self.basis.knots[interval + 1];
        let len = zr - zl;
        let form = |basis: usize| -> Option<((f64, f64), f64)> {
            let peak = self.basis.peak_knot(basis);
            if peak == interval {
                Some(((zr / len, -1.0 / len), -1.0 / len))
            } else if peak == interval + 1 {
                Some(((-zl / len, 1.0 / len), 1.0 / len))
            } else {
                None
            }
        };
        let one = (1.0, 0.0);
        let mut acc = 0.0;
        for seg in &self.segments {
            if seg.knot_interval != interval {
                continue;
            }
            acc += match family {
                MomentFamily::SigmaSigma => match (form(i), form(j)) {
                    (Some((ci, _)), Some((cj, _))) => {
                        poly_product_integral(seg.a, seg.b, p, ci, cj)
                    }
                    _ => 0.0,
                },
                MomentFamily::SigmaDsigma => match (form(i), form(j)) {
                    (Some((ci, _)), Some((_, dj))) => {
                        poly_product_integral(seg.a, seg.b, p, ci, (dj, 0.0))
                    }
                    _ => 0.0,
                },
                MomentFamily::DsigmaDsigma => match (form(i), form(j)) {
                    (Some((_, di)), Some((_, dj))) => {
                        poly_product_integral(seg.a, seg.b, p, (di, 0.0), (dj, 0.0))
                    }
                    _ => 0.0,
                },
                MomentFamily::LayerSigma if seg.layer == i => match form(j) {
                    Some((cj, _)) => poly_product_integral(seg.a, seg.b, p, one, cj),
                    None => 0.0,
                },
                MomentFamily::LayerDsigma if seg.layer == i => match form(j) {
                    Some((_, dj)) => poly_product_integral(seg.a, seg.b, p, one, (dj, 0.0)),
                    None => 0.0,
                },
                _ => 0.0,
            };
        }
        acc
    }
}

/// Builds the vertical moment table for a grid and layout.
pub fn vertical_moments(
    grid: &LayerGrid,
    layout: VerticalLayout,
) -> Result<VerticalMomentTable, AssemblyError> {
    VerticalMomentTable::new(grid, layout)
}

/// Layered block-tridiagonal system. Row `r` couples trial layers
/// `r - 1, r, r + 1` through `lower[r]`, `diag[r]`, `upper[r]`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonalSystem {
    pub variant: Variant,
    pub n_layers: usize,
    pub ndof: usize,
    pub diag: Vec<Arc<CsrMatrix>>,
    pub lower: Vec<Option<Arc<CsrMatrix>>>,
    pub upper: Vec<Option<Arc<CsrMatrix>>>,
    pub rhs: Vec<Vec<f64>>,
    pub grid: LayerGrid,
}

impl BlockTridiagonalSystem {
    pub fn total_dim(&self) -> usize {
        self.n_layers * self.ndof
    }

    pub fn nnz(&self) -> usize {
        let mut s = 0;
        for r in 0..self.n_layers {
            s += self.diag[r].nnz();
            if let Some(m) = &self.lower[r] {
                s += m.nnz();
            }
            if let Some(m) = &self.upper[r] {
                s += m.nnz();
            }
        }
        s
    }

    /// `y = A x` on the concatenated vector (layer-major layout).
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let nd = self.ndof;
        for r in 0..self.n_layers {
            let yr = &mut y[r * nd..(r + 1) * nd];
            self.diag[r].mul_vec_into(&x[r * nd..(r + 1) * nd], yr);
            if let Some(m) = &self.lower[r] {
                let xm = &x[(r - 1) * nd..r * nd];
                for i in 0..nd {
                    let mut s = 0.0;
                    for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                        s += m.values[k] * xm[m.col_idx[k]];
                    }
                    yr[i] += s;
                }
            }
            if let Some(m) = &self.upper[r] {
                let xp = &x[(r + 1) * nd..(r + 2) * nd];
                for i in 0..nd {
                    let mut s = 0.0;
                    for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                        s += m.values[k] * xp[m.col_idx[k]];
                    }
                    yr[i] += s;
                }
            }
        }
    }

    pub fn rhs_flat(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.total_dim());
        for r in &self.rhs {
            b.extend_from_slice(r);
        }
        b
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs
            .iter()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean norm of `b - A x`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.total_dim()];
        self.apply_into(x, &mut y);
        let b = self.rhs_flat();
        b.iter()
            .zip(&y)
            .map(|(bi, yi)| (bi - yi) * (bi - yi))
            .sum::<f64>()
            .sqrt()
    }

    /// Concatenated sparse matrix (used by the direct solver and by tests).
    pub fn global_matrix(&self) -> CsrMatrix {
        let nd = self.ndof;
        let dim = self.total_dim();
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_layers {
            for (i, j, v) in self.diag[r].iter() {
                trip.push((r * nd + i, r * nd + j, v));
            }
            if let Some(m) = &self.lower[r] {
                for (i, j, v) in m.iter() {
                    trip.push((r * nd + i, (r - 1) * nd + j, v));
                }
            }
            if let Some(m) = &self.upper[r] {
                for (i, j, v) in m.iter() {
                    trip.push((r * nd + i, (r + 1) * nd + j, v));
                }
            }
        }
        CsrMatrix::from_triplets(dim, dim, trip)
    }
}

/// Outcome of sampling the surface-function hypotheses at the quadrature
/// points: positivity of `eta` and the slope bound `|grad eta| < 1`.
#[derive(Debug, Clone, Copy)]
pub struct EtaCheck {
    pub min_eta: f64,
    pub max_slope: f64,
}

impl EtaCheck {
    pub fn satisfied(&self) -> bool {
        self.min_eta > 0.0 && self.max_slope < 1.0
    }
}

/// What to do when the sampled slope bound fails. Positivity of `eta` is
/// always enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaPolicy {
    #[default]
    Error,
    Warn,
}

fn tensorized_rhs(
    asm: &P1Assembler,
    moments: &VerticalMomentTable,
    f: &dyn Fn([f64; 2], f64) -> f64,
    weight: Option<&dyn Fn([f64; 2]) -> f64>,
    mode: RhsMode,
) -> Vec<Vec<f64>> {
    let n = moments.basis.n;
    let nd = asm.dofs.ndof;
    let h = moments.basis.knots[moments.basis.knots.len() - 1] / n as f64;
    let mut rhs = vec![vec![0.0; nd]; n];
    let mut layer_avg = vec![vec![0.0; nd]; n];
    let mut load = vec![0.0; nd];
    for seg in &moments.segments {
        for (z, wz) in seg.gauss(2) {
            match weight {
                Some(w) => asm.load_into(&|p| w(p) * f(p, z), &mut load),
                None => asm.load_into(&|p| f(p, z), &mut load),
            }
            match mode {
                RhsMode::Tensorized => {
                    for knot in [seg.knot_interval, seg.knot_interval + 1] {
                        if let Some(b) = moments.basis.basis_of_knot(knot) {
                            let s = moments.basis.eval(b, z) * wz;
                            if s == 0.0 {
                                continue;
                            }
                            for i in 0..nd {
                                rhs[b][i] += s * load[i];
                            }
                        }
                    }
                }
                RhsMode::LayerAveraged => {
                    for i in 0..nd {
                        layer_avg[seg.layer][i] += wz * load[i] / h;
                    }
                }
            }
        }
    }
    if mode == RhsMode::LayerAveraged {
        for b in 0..n {
            for a in 0..n {
                let c = moments.layer_sigma(0, a, b);
                if c != 0.0 {
                    for i in 0..nd {
                        rhs[b][i] += c * layer_avg[a][i];
                    }
                }
            }
        }
    }
    rhs
}

/// Assembles the flat-cylinder Dirichlet system.
pub fn assemble_dirichlet_flat(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    grid: &LayerGrid,
    f: &dyn Fn([f64; 2], f64) -> f64,
    mode: RhsMode,
) -> Result<BlockTridiagonalSystem, AssemblyError> {
    let moments = VerticalMomentTable::new(grid, VerticalLayout::Dirichlet)?;
    let asm = P1Assembler::new(mesh, dofs);
    let a = asm.weighted_stiffness(&|_| 1.0);
    let m = asm.weighted_mass(&|_| 1.0);
    let n = grid.n_layers;

    // two distinct diagonal blocks and one off-diagonal block, shared
    let mk = |ws: f64, wm: f64| Arc::new(CsrMatrix::linear_combination(&[(ws, &a), (wm, &m)]));
    let diag_boundary = mk(moments.layer_sigma(0, 0, 0), moments.dsigma_dsigma(0, 0, 0));
    let diag_interior = if n > 2 {
        mk(moments.layer_sigma(0, 1, 1), moments.dsigma_dsigma(0, 1, 1))
    } else {
        diag_boundary.clone()
    };
    let offdiag = mk(moments.layer_sigma(0, 1, 0), moments.dsigma_dsigma(0, 0, 1));

    let mut diag = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for r in 0..n {
        diag.push(if r == 0 || r == n - 1 {
            diag_boundary.clone()
        } else {
            diag_interior.clone()
        });
        lower.push(if r > 0 { Some(offdiag.clone()) } else { None });
        upper.push(if r + 1 < n { Some(offdiag.clone()) } else { None });
    }

    let rhs = tensorized_rhs(&asm, &moments, f, None, mode);
    Ok(BlockTridiagonalSystem {
        variant: Variant::DirichletFlat,
        n_layers: n,
        ndof: dofs.ndof,
        diag,
        lower,
        upper,
        rhs,
        grid: grid.clone(),
    })
}

/// Assembles the system for a domain with a non-flat upper surface
/// `z = eta(x)`, pulled back to the reference cylinder.
///
/// The pulled-back operator couples horizontal and vertical derivatives
/// through `-z grad(eta) / eta` terms and scales the vertical diffusion by
/// `(1 + z^2 |grad eta|^2) / eta^2`; the assembled blocks combine stiffness
/// weighted by `eta`, gradient coupling against `grad eta` with first-order
/// `z` moments, and mass weighted by `1/eta` and `|grad eta|^2 / eta` with
/// zeroth and second order `z` moments. The right-hand side carries the
/// volume Jacobian `eta` of the pullback.
#[allow(clippy::too_many_arguments)]
pub fn assemble_nonflat(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    grid: &LayerGrid,
    eta: &dyn Fn([f64; 2]) -> f64,
    grad_eta: &dyn Fn([f64; 2]) -> [f64; 2],
    f: &dyn Fn([f64; 2], f64) -> f64,
    mode: RhsMode,
    policy: EtaPolicy,
) -> Result<(BlockTridiagonalSystem, EtaCheck), AssemblyError> {
    let moments = VerticalMomentTable::new(grid, VerticalLayout::Dirichlet)?;
    let asm = P1Assembler::new(mesh, dofs);

    let mut min_eta = f64::INFINITY;
    let mut max_slope: f64 = 0.0;
    for q in &asm.table.points {
        let e = eta(q.xy);
        let g = grad_eta(q.xy);
        min_eta = min_eta.min(e);
        max_slope = max_slope.max((g[0] * g[0] + g[1] * g[1]).sqrt());
    }
    let check = EtaCheck { min_eta, max_slope };
    if min_eta <= 0.0 || (policy == EtaPolicy::Error && max_slope >= 1.0) {
        return Err(AssemblyError::EtaConditionViolated { min_eta, max_slope });
    }

    let a_eta = asm.weighted_stiffness(eta);
    let coupling = asm.gradient_coupling(grad_eta);
    let coupling_t = coupling.transpose();
    let m_inv_eta = asm.weighted_mass(&|p| 1.0 / eta(p));
    let m_slope = asm.weighted_mass(&|p| {
        let g = grad_eta(p);
        (g[0] * g[0] + g[1] * g[1]) / eta(p)
    });

    let n = grid.n_layers;
    let block = |row: usize, col: usize| -> Arc<CsrMatrix> {
        Arc::new(CsrMatrix::linear_combination(&[
            (moments.layer_sigma(0, col, row), &a_eta),
            (-moments.sigma_dsigma(1, row, col), &coupling_t),
            (-moments.layer_dsigma(1, col, row), &coupling),
            (moments.dsigma_dsigma(0, col, row), &m_inv_eta),
            (moments.dsigma_dsigma(2, col, row), &m_slope),
        ]))
    };

    let mut diag = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for r in 0..n {
        diag.push(block(r, r));
        lower.push(if r > 0 { Some(block(r, r - 1)) } else { None });
        upper.push(if r + 1 < n { Some(block(r, r + 1)) } else { None });
    }

    let rhs = tensorized_rhs(&asm, &moments, f, Some(eta), mode);
    Ok((
        BlockTridiagonalSystem {
            variant: Variant::NonFlat,
            n_layers: n,
            ndof: dofs.ndof,
            diag,
            lower,
            upper,
            rhs,
            grid: grid.clone(),
        },
        check,
    ))
}

/// Assembles the mixed system: Dirichlet on bottom and sides, flux data `g`
/// on the top surface, handled by the shifted test layout (last knot
/// interval of length `3h/2`) and the lifting `g_h = g_k (z - z_s)` on the
/// top layer, with `g_k` the nodal interpolant of `g`.
pub fn assemble_neumann(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    grid: &LayerGrid,
    f: &dyn Fn([f64; 2], f64) -> f64,
    g: &dyn Fn([f64; 2]) -> f64,
    mode: RhsMode,
) -> Result<BlockTridiagonalSystem, AssemblyError> {
    let n = grid.n_layers;
    if n < 3 {
        return Err(AssemblyError::UnsupportedLayerCount(n));
    }
    let mut max_boundary_g: f64 = 0.0;
    for (v, &on_boundary) in mesh.boundary_vertex.iter().enumerate() {
        if on_boundary {
            max_boundary_g = max_boundary_g.max(g(mesh.vertices[v]).abs());
        }
    }
    if max_boundary_g > 1e-12 {
        return Err(AssemblyError::GNotZeroOnBoundary(max_boundary_g));
    }

    let moments = VerticalMomentTable::new(grid, VerticalLayout::Neumann)?;
    let asm = P1Assembler::new(mesh, dofs);
    let a = asm.weighted_stiffness(&|_| 1.0);
    let m = asm.weighted_mass(&|_| 1.0);

    let block = |row: usize, col: usize| -> Arc<CsrMatrix> {
        Arc::new(CsrMatrix::linear_combination(&[
            (moments.layer_sigma(0, col, row), &a),
            (moments.dsigma_dsigma(0, col, row), &m),
        ]))
    };
    let mut diag = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for r in 0..n {
        diag.push(block(r, r));
        lower.push(if r > 0 { Some(block(r, r - 1)) } else { None });
        upper.push(if r + 1 < n { Some(block(r, r + 1)) } else { None });
    }

    let mut rhs = tensorized_rhs(&asm, &moments, f, None, mode);

    // top-surface flux: only the top test function is nonzero at z_s
    let g_load = asm.load(g);
    for i in 0..dofs.ndof {
        rhs[n - 1][i] += g_load[i];
    }

    // lifting: subtract the form applied to g_h = g_k (z - z_s) on the top
    // layer; its horizontal gradient pairs with first-order moments and its
    // vertical derivative (= g_k) with the derivative moments
    let z_s = grid.height;
    let g_nodal = asm.nodal_values(g);
    let ag = a.mul_vec(&g_nodal);
    let mg = m.mul_vec(&g_nodal);
    let top = n - 1;
    for b in 0..n {
        let zfac = moments.layer_sigma(1, top, b) - z_s * moments.layer_sigma(0, top, b);
        let dfac = moments.layer_dsigma(0, top, b);
        if zfac != 0.0 || dfac != 0.0 {
            for i in 0..dofs.ndof {
                rhs[b][i] -= zfac * ag[i] + dfac * mg[i];
            }
        }
    }

    Ok(BlockTridiagonalSystem {
        variant: Variant::Neumann,
        n_layers: n,
        ndof: dofs.ndof,
        diag,
        lower,
        upper,
        rhs,
        grid: grid.clone(),
    })
}
