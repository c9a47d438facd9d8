//! Layered coefficient fields, the trial-to-test lift, interpolation of
//! smooth functions, discrete norms, and direct evaluation of the bilinear
//! forms (independent of the assembled block systems).

use std::io::{self, BufRead, Write};

use rand::Rng;

use crate::assembly::{Variant, VerticalMomentTable};
use crate::error::{AssemblyError, FieldError};
use crate::hfem::{CsrMatrix, P1Assembler, QuadratureTable};
use crate::mesh::{DofMap, HorizontalMesh, LayerGrid, VerticalLayout};

/// Space a coefficient field belongs to. The trial space holds layer-wise
/// constants; the test spaces hold the vertically affine profiles on the
/// Dirichlet or Neumann knot layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    Trial,
    TestDirichlet,
    TestNeumann,
}

impl SpaceTag {
    pub fn name(self) -> &'static str {
        match self {
            SpaceTag::Trial => "trial",
            SpaceTag::TestDirichlet => "test-dirichlet",
            SpaceTag::TestNeumann => "test-neumann",
        }
    }

    pub fn layout(self) -> Option<VerticalLayout> {
        match self {
            SpaceTag::Trial => None,
            SpaceTag::TestDirichlet => Some(VerticalLayout::Dirichlet),
            SpaceTag::TestNeumann => Some(VerticalLayout::Neumann),
        }
    }
}

/// Coefficients of a layered field: `n_layers x ndof`, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerField {
    pub n_layers: usize,
    pub ndof: usize,
    pub tag: SpaceTag,
    pub data: Vec<f64>,
}

impl MultilayerField {
    pub fn zeros(n_layers: usize, ndof: usize, tag: SpaceTag) -> Self {
        MultilayerField { n_layers, ndof, tag, data: vec![0.0; n_layers * ndof] }
    }

    pub fn from_flat(n_layers: usize, ndof: usize, tag: SpaceTag, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_layers * ndof);
        MultilayerField { n_layers, ndof, tag, data }
    }

    /// Coefficients drawn i.i.d. uniform on [-1, 1].
    pub fn random(n_layers: usize, ndof: usize, tag: SpaceTag, rng: &mut impl Rng) -> Self {
        let data = (0..n_layers * ndof).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        MultilayerField { n_layers, ndof, tag, data }
    }

    pub fn layer(&self, a: usize) -> &[f64] {
        &self.data[a * self.ndof..(a + 1) * self.ndof]
    }

    pub fn layer_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.data[a * self.ndof..(a + 1) * self.ndof]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= c;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.data.len(), other.data.len());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        MultilayerField { data, ..self.clone() }
    }

    /// Writes one row per (layer, dof): `layer,dof,x,y,z_mid,value`.
    pub fn write_csv(
        &self,
        w: &mut impl Write,
        mesh: &HorizontalMesh,
        dofs: &DofMap,
        grid: &LayerGrid,
    ) -> io::Result<()> {
        writeln!(w, "layer,dof,x,y,z_mid,value")?;
        for a in 0..self.n_layers {
            for i in 0..self.ndof {
                let v = mesh.vertices[dofs.vertex_of_dof[i]];
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    a + 1,
                    i,
                    fmt9(v[0]),
                    fmt9(v[1]),
                    fmt9(grid.midpoints[a]),
                    fmt9(self.data[a * self.ndof + i])
                )?;
            }
        }
        Ok(())
    }

    /// Reads a field written by [`write_csv`](Self::write_csv).
    pub fn read_csv(
        r: &mut impl BufRead,
        n_layers: usize,
        ndof: usize,
        tag: SpaceTag,
    ) -> io::Result<Self> {
        let mut field = MultilayerField::zeros(n_layers, ndof, tag);
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            if ln == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || io::Error::new(io::ErrorKind::InvalidData, format!("line {}", ln + 1));
            if cols.len() != 6 {
                return Err(bad());
            }
            let a: usize = cols[0].trim().parse().map_err(|_| bad())?;
            let i: usize = cols[1].trim().parse().map_err(|_| bad())?;
            let v: f64 = cols[5].trim().parse().map_err(|_| bad())?;
            if a < 1 || a > n_layers || i >= ndof {
                return Err(bad());
            }
            field.data[(a - 1) * ndof + i] = v;
        }
        Ok(field)
    }
}

/// Formats with nine significant digits, the crate-wide output precision.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Shared discretization context: mesh, dof map, vertical grid, the unit
/// stiffness and mass matrices, and the vertical moment tables.
pub struct DiscreteSpace {
    pub mesh: HorizontalMesh,
    pub dofs: DofMap,
    pub grid: LayerGrid,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub moments: VerticalMomentTable,
    pub moments_neumann: Option<VerticalMomentTable>,
}

impl DiscreteSpace {
    pub fn new(mesh: HorizontalMesh, dofs: DofMap, grid: LayerGrid) -> Self {
        let (stiffness, mass) = {
            let asm = P1Assembler::new(&mesh, &dofs);
            (asm.weighted_stiffness(&|_| 1.0), asm.weighted_mass(&|_| 1.0))
        };
        let moments = VerticalMomentTable::new(&grid, VerticalLayout::Dirichlet).unwrap();
        let moments_neumann = if grid.n_layers >= 3 {
            Some(VerticalMomentTable::new(&grid, VerticalLayout::Neumann).unwrap())
        } else {
            None
        };
        DiscreteSpace { mesh, dofs, grid, stiffness, mass, moments, moments_neumann }
    }

    pub fn n_layers(&self) -> usize {
        self.grid.n_layers
    }

    pub fn ndof(&self) -> usize {
        self.dofs.ndof
    }

    pub fn moments_for(
        &self,
        layout: VerticalLayout,
    ) -> Result<&VerticalMomentTable, AssemblyError> {
        match layout {
            VerticalLayout::Dirichlet => Ok(&self.moments),
            VerticalLayout::Neumann => self
                .moments_neumann
                .as_ref()
                .ok_or(AssemblyError::UnsupportedLayerCount(self.grid.n_layers)),
        }
    }

    pub fn quadrature(&self) -> QuadratureTable {
        QuadratureTable::new(&self.mesh)
    }
}

/// Coefficient-preserving lift from the trial space onto a test space:
/// the layer values become nodal values on the shifted vertical grid.
pub fn lift_to_test(
    space: &DiscreteSpace,
    v: &MultilayerField,
    layout: VerticalLayout,
) -> Result<MultilayerField, FieldError> {
    require_trial(space, v)?;
    let tag = match layout {
        VerticalLayout::Dirichlet => SpaceTag::TestDirichlet,
        VerticalLayout::Neumann => {
            if space.n_layers() < 3 {
                return Err(FieldError::LayoutMismatch);
            }
            SpaceTag::TestNeumann
        }
    };
    Ok(MultilayerField { n_layers: v.n_layers, ndof: v.ndof, tag, data: v.data.clone() })
}

/// Interpolates a function on the cylinder onto the trial space: nodal
/// interpolation on the vertical knot grid (all knots, boundary included)
/// followed by exact layer averaging of the piecewise affine profile.
pub fn interpolate_onto_trial(
    space: &DiscreteSpace,
    v: &dyn Fn([f64; 2], f64) -> f64,
) -> MultilayerField {
    let n = space.n_layers();
    let ndof = space.ndof();
    let knots = &space.moments.basis.knots;
    let nk = knots.len();
    let h = space.grid.thickness;

    // layer-averaging weights of each knot's hat function
    let mut weights = vec![0.0; n * nk];
    for seg in &space.moments.segments {
        let iv = seg.knot_interval;
        let (zl, zr) = (knots[iv], knots[iv + 1]);
        let len = zr - zl;
        let fall = integral_affine(seg.a, seg.b, zr / len, -1.0 / len);
        let rise = integral_affine(seg.a, seg.b, -zl / len, 1.0 / len);
        weights[seg.layer * nk + iv] += fall / h;
        weights[seg.layer * nk + iv + 1] += rise / h;
    }

    let mut field = MultilayerField::zeros(n, ndof, SpaceTag::Trial);
    let mut knot_vals = vec![0.0; nk];
    for i in 0..ndof {
        let xy = space.mesh.vertices[space.dofs.vertex_of_dof[i]];
        for (k, &z) in knots.iter().enumerate() {
            knot_vals[k] = v(xy, z);
        }
        for a in 0..n {
            let mut acc = 0.0;
            for k in 0..nk {
                acc += weights[a * nk + k] * knot_vals[k];
            }
            field.data[a * ndof + i] = acc;
        }
    }
    field
}

fn integral_affine(a: f64, b: f64, c0: f64, c1: f64) -> f64 {
    (b - a) * (c0 + 0.5 * c1 * (a + b))
}

fn require_trial(space: &DiscreteSpace, v: &MultilayerField) -> Result<(), FieldError> {
    if v.tag != SpaceTag::Trial {
        return Err(FieldError::WrongSpaceTag { expected: "trial", got: v.tag.name() });
    }
    if v.n_layers != space.n_layers() || v.ndof != space.ndof() {
        return Err(FieldError::ShapeMismatch {
            layers: v.n_layers,
            ndof: v.ndof,
            want_layers: space.n_layers(),
            want_ndof: space.ndof(),
        });
    }
    Ok(())
}

/// Layer-wise discrete L2 norm, `sqrt(h sum_a |v^a|_{0,omega}^2)`.
pub fn norm_l2h(space: &DiscreteSpace, v: &MultilayerField) -> Result<f64, FieldError> {
    require_trial(space, v)?;
    let h = space.grid.thickness;
    let mut s = 0.0;
    for a in 0..v.n_layers {
        let la = v.layer(a);
        s += h * space.mass.pair(la, la);
    }
    Ok(s.sqrt())
}

/// Discrete H1 norm of a trial field for the given vertical layout:
/// horizontal gradient energy per layer plus the vertical derivative energy
/// of the lifted profile (boundary and jump terms in closed form).
pub fn norm_h1_discrete(
    space: &DiscreteSpace,
    v: &MultilayerField,
    layout: VerticalLayout,
) -> Result<f64, FieldError> {
    require_trial(space, v)?;
    let moments = space.moments_for(layout).map_err(|_| FieldError::LayoutMismatch)?;
    let h = space.grid.thickness;
    let n = v.n_layers;
    let mut s = 0.0;
    for a in 0..n {
        let la = v.layer(a);
        s += h * space.stiffness.pair(la, la);
    }
    for i in 0..n {
        for j in i.saturating_sub(1)..(i + 2).min(n) {
            let c = moments.dsigma_dsigma(0, i, j);
            if c != 0.0 {
                s += c * space.mass.pair(v.layer(i), v.layer(j));
            }
        }
    }
    Ok(s.max(0.0).sqrt())
}

/// Full H1 seminorm of a test field, `|grad phi|_{0,Omega}`, by exact
/// vertical integration of the affine profiles.
pub fn seminorm_h1_test(space: &DiscreteSpace, phi: &MultilayerField) -> Result<f64, FieldError> {
    let layout = phi
        .tag
        .layout()
        .ok_or(FieldError::WrongSpaceTag { expected: "test", got: phi.tag.name() })?;
    let moments = space.moments_for(layout).map_err(|_| FieldError::LayoutMismatch)?;
    let n = phi.n_layers;
    let mut s = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..(i + 2).min(n) {
            let cs = moments.sigma_sigma(0, i, j);
            let cd = moments.dsigma_dsigma(0, i, j);
            if cs != 0.0 {
                s += cs * space.stiffness.pair(phi.layer(i), phi.layer(j));
            }
            if cd != 0.0 {
                s += cd * space.mass.pair(phi.layer(i), phi.layer(j));
            }
        }
    }
    Ok(s.max(0.0).sqrt())
}

/// Prepared bilinear form evaluator. Evaluation recombines the horizontal
/// coefficient matrices with the vertical moments directly, so it does not
/// touch the assembled block systems.
pub struct BilinearForm {
    pub variant: Variant,
    a: CsrMatrix,
    m: CsrMatrix,
    coupling: Option<CsrMatrix>,
    coupling_t: Option<CsrMatrix>,
    m_slope: Option<CsrMatrix>,
}

impl BilinearForm {
    /// Flat Dirichlet form.
    pub fn flat(space: &DiscreteSpace) -> Self {
        BilinearForm {
            variant: Variant::DirichletFlat,
            a: space.stiffness.clone(),
            m: space.mass.clone(),
            coupling: None,
            coupling_t: None,
            m_slope: None,
        }
    }

    /// Mixed Dirichlet-Neumann form (shifted test layout, same coefficients).
    pub fn mixed(space: &DiscreteSpace) -> Result<Self, AssemblyError> {
        space.moments_for(VerticalLayout::Neumann)?;
        Ok(BilinearForm {
            variant: Variant::Neumann,
            a: space.stiffness.clone(),
            m: space.mass.clone(),
            coupling: None,
            coupling_t: None,
            m_slope: None,
        })
    }

    /// Pulled-back form for a non-flat upper surface.
    pub fn surface(
        space: &DiscreteSpace,
        eta: &dyn Fn([f64; 2]) -> f64,
        grad_eta: &dyn Fn([f64; 2]) -> [f64; 2],
    ) -> Self {
        let asm = P1Assembler::new(&space.mesh, &space.dofs);
        let coupling = asm.gradient_coupling(grad_eta);
        BilinearForm {
            variant: Variant::NonFlat,
            a: asm.weighted_stiffness(eta),
            m: asm.weighted_mass(&|p| 1.0 / eta(p)),
            coupling_t: Some(coupling.transpose()),
            coupling: Some(coupling),
            m_slope: Some(asm.weighted_mass(&|p| {
                let g = grad_eta(p);
                (g[0] * g[0] + g[1] * g[1]) / eta(p)
            })),
        }
    }

    /// Evaluates `form(v, phi)` for a trial field and a test field on the
    /// matching layout.
    pub fn eval(
        &self,
        space: &DiscreteSpace,
        v: &MultilayerField,
        phi: &MultilayerField,
    ) -> Result<f64, FieldError> {
        require_trial(space, v)?;
        let want = self.variant.layout();
        if phi.tag.layout() != Some(want) {
            return Err(FieldError::LayoutMismatch);
        }
        let moments = space.moments_for(want).map_err(|_| FieldError::LayoutMismatch)?;
        let n = v.n_layers;
        let mut s = 0.0;
        for row in 0..n {
            let pr = phi.layer(row);
            for col in row.saturating_sub(1)..(row + 2).min(n) {
                let vc = v.layer(col);
                let ls = moments.layer_sigma(0, col, row);
                if ls != 0.0 {
                    s += ls * self.a.pair(pr, vc);
                }
                let dd = moments.dsigma_dsigma(0, col, row);
                if dd != 0.0 {
                    s += dd * self.m.pair(pr, vc);
                }
                if self.variant == Variant::NonFlat {
                    let ct = self.coupling_t.as_ref().unwrap();
                    let c = self.coupling.as_ref().unwrap();
                    let msl = self.m_slope.as_ref().unwrap();
                    let sd = moments.sigma_dsigma(1, row, col);
                    if sd != 0.0 {
                        s -= sd * ct.pair(pr, vc);
                    }
                    let ld = moments.layer_dsigma(1, col, row);
                    if ld != 0.0 {
                        s -= ld * c.pair(pr, vc);
                    }
                    let d2 = moments.dsigma_dsigma(2, col, row);
                    if d2 != 0.0 {
                        s += d2 * msl.pair(pr, vc);
                    }
                }
            }
        }
        Ok(s)
    }
}
