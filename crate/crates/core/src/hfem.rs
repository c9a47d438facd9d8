//! Horizontal P1 finite element kernels: quadrature, compressed sparse row
//! matrices, and weighted stiffness / mass / coupling / load assembly over
//! the horizontal domain, with boundary degrees of freedom eliminated.

use crate::mesh::{DofMap, HorizontalMesh};

/// Degree-4 exact rule on triangles (6 points, barycentric).
const TRI_RULE: [([f64; 3], f64); 6] = [
    (
        [0.1081030181680702, 0.4459484909159649, 0.4459484909159649],
        0.2233815896780115,
    ),
    (
        [0.4459484909159649, 0.1081030181680702, 0.4459484909159649],
        0.2233815896780115,
    ),
    (
        [0.4459484909159649, 0.4459484909159649, 0.1081030181680702],
        0.2233815896780115,
    ),
    (
        [0.8168475729804585, 0.0915762135097707, 0.0915762135097707],
        0.1099517436553219,
    ),
    (
        [0.0915762135097707, 0.8168475729804585, 0.0915762135097707],
        0.1099517436553219,
    ),
    (
        [0.0915762135097707, 0.0915762135097707, 0.8168475729804585],
        0.1099517436553219,
    ),
];

/// 3-point Gauss rule on [0, 1] (degree 5).
fn segment_rule() -> [(f64, f64); 3] {
    let s = (0.6f64).sqrt() * 0.5;
    [
        (0.5 - s, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + s, 5.0 / 18.0),
    ]
}

/// One precomputed quadrature point: location, weight (including the cell
/// measure), and the P1 shape values and gradients of the cell's vertices.
#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub cell: usize,
    pub xy: [f64; 2],
    pub weight: f64,
    pub nv: usize,
    pub shape: [f64; 3],
    pub grad: [[f64; 2]; 3],
}

/// Quadrature table over all cells of a horizontal mesh.
#[derive(Debug, Clone)]
pub struct QuadratureTable {
    pub points: Vec<QuadPoint>,
}

impl QuadratureTable {
    pub fn new(mesh: &HorizontalMesh) -> Self {
        let mut points = Vec::new();
        if mesh.dim == 1 {
            for (c, seg) in mesh.segments.iter().enumerate() {
                let (xa, xb) = (mesh.vertices[seg[0]][0], mesh.vertices[seg[1]][0]);
                let len = xb - xa;
                for (t, w) in segment_rule() {
                    points.push(QuadPoint {
                        cell: c,
                        xy: [xa + t * len, 0.0],
                        weight: w * len.abs(),
                        nv: 2,
                        shape: [1.0 - t, t, 0.0],
                        grad: [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0, 0.0]],
                    });
                }
            }
        } else {
            for (c, tri) in mesh.triangles.iter().enumerate() {
                let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertices[v]).collect();
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
                let area = 0.5 * det.abs();
                let grad = [
                    [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
                    [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
                    [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
                ];
                for (bary, w) in TRI_RULE {
                    let xy = [
                        bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                        bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
                    ];
                    points.push(QuadPoint {
                        cell: c,
                        xy,
                        weight: w * area,
                        nv: 3,
                        shape: bary,
                        grad,
                    });
                }
            }
        }
        QuadratureTable { points }
    }
}

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from triplets; duplicates are summed in column-sorted order.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            debug_assert!(i < nrows && j < ncols);
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == j {
                    s += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(s);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    /// `y -= A x`, used when accumulating block residuals.
    pub fn mul_vec_sub(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] -= s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Bilinear pairing `y^T A x`.
    pub fn pair(&self, y: &[f64], x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            acc += y[i] * s;
        }
        acc
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip: Vec<(usize, usize, f64)> = self
            .iter()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, trip)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest deviation from symmetry, `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for (i, j, v) in self.iter() {
            m = m.max((v - self.get(j, i)).abs());
        }
        m
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for (i, j, _) in self.iter() {
            b = b.max(i.abs_diff(j));
        }
        b
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for (i, j, v) in self.iter() {
            d[i * self.ncols + j] = v;
        }
        d
    }

    /// Weighted sum of matrices with identical dimensions.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trip = Vec::new();
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            if c == 0.0 {
                continue;
            }
            trip.extend(m.iter().map(|(i, j, v)| (i, j, c * v)));
        }
        CsrMatrix::from_triplets(nrows, ncols, trip)
    }
}

/// Assembler over a fixed mesh, dof map and quadrature table.
pub struct P1Assembler<'a> {
    pub mesh: &'a HorizontalMesh,
    pub dofs: &'a DofMap,
    pub table: QuadratureTable,
}

impl<'a> P1Assembler<'a> {
    pub fn new(mesh: &'a HorizontalMesh, dofs: &'a DofMap) -> Self {
        P1Assembler { mesh, dofs, table: QuadratureTable::new(mesh) }
    }

    fn cell_dofs(&self, cell: usize) -> [Option<usize>; 3] {
        let verts = self.mesh.cell_vertices(cell);
        let mut d = [None; 3];
        for (k, &v) in verts.iter().enumerate() {
            d[k] = self.dofs.dof_of_vertex[v];
        }
        d
    }

    /// `A_ij = int c grad(phi_j) . grad(phi_i)`.
    pub fn weighted_stiffness(&self, c: &dyn Fn([f64; 2]) -> f64) -> CsrMatrix {
        let n = self.dofs.ndof;
        let mut trip = Vec::new();
        for q in &self.table.points {
            let w = q.weight * c(q.xy);
            if w == 0.0 {
                continue;
            }
            let d = self.cell_dofs(q.cell);
            for a in 0..q.nv {
                let Some(i) = d[a] else { continue };
                for b in 0..q.nv {
                    let Some(j) = d[b] else { continue };
                    let g = q.grad[a][0] * q.grad[b][0] + q.grad[a][1] * q.grad[b][1];
                    trip.push((i, j, w * g));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, trip)
    }

    /// `M_ij = int c phi_j phi_i`.
    pub fn weighted_mass(&self, c: &dyn Fn([f64; 2]) -> f64) -> CsrMatrix {
        let n = self.dofs.ndof;
        let mut trip = Vec::new();
        for q in &self.table.points {
            let w = q.weight * c(q.xy);
            if w == 0.0 {
                continue;
            }
            let d = self.cell_dofs(q.cell);
            for a in 0..q.nv {
                let Some(i) = d[a] else { continue };
                for b in 0..q.nv {
                    let Some(j) = d[b] else { continue };
                    trip.push((i, j, w * q.shape[a] * q.shape[b]));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, trip)
    }

    /// `C_ij = int (b . grad(phi_j)) phi_i`; not symmetric in general.
    pub fn gradient_coupling(&self, b: &dyn Fn([f64; 2]) -> [f64; 2]) -> CsrMatrix {
        let n = self.dofs.ndof;
        let mut trip = Vec::new();
        for q in &self.table.points {
            let bv = b(q.xy);
            if bv[0] == 0.0 && bv[1] == 0.0 {
                continue;
            }
            let d = self.cell_dofs(q.cell);
            for a in 0..q.nv {
                let Some(i) = d[a] else { continue };
                for c in 0..q.nv {
                    let Some(j) = d[c] else { continue };
                    let adv = bv[0] * q.grad[c][0] + bv[1] * q.grad[c][1];
                    trip.push((i, j, q.weight * q.shape[a] * adv));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, trip)
    }

    /// `b_i = int f phi_i`.
    pub fn load(&self, f: &dyn Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut b = vec![0.0; self.dofs.ndof];
        self.load_into(f, &mut b);
        b
    }

    pub fn load_into(&self, f: &dyn Fn([f64; 2]) -> f64, b: &mut [f64]) {
        b.fill(0.0);
        for q in &self.table.points {
            let w = q.weight * f(q.xy);
            if w == 0.0 {
                continue;
            }
            let d = self.cell_dofs(q.cell);
            for a in 0..q.nv {
                if let Some(i) = d[a] {
                    b[i] += w * q.shape[a];
                }
            }
        }
    }

    /// Nodal values of a function at the dof vertices (P1 interpolant).
    pub fn nodal_values(&self, f: &dyn Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.dofs
            .vertex_of_dof
            .iter()
            .map(|&v| f(self.mesh.vertices[v]))
            .collect()
    }
}

pub fn assemble_weighted_stiffness(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    c: &dyn Fn([f64; 2]) -> f64,
) -> CsrMatrix {
    P1Assembler::new(mesh, dofs).weighted_stiffness(c)
}

pub fn assemble_weighted_mass(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    c: &dyn Fn([f64; 2]) -> f64,
) -> CsrMatrix {
    P1Assembler::new(mesh, dofs).weighted_mass(c)
}

pub fn assemble_gradient_coupling(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    b: &dyn Fn([f64; 2]) -> [f64; 2],
) -> CsrMatrix {
    P1Assembler::new(mesh, dofs).gradient_coupling(b)
}

pub fn assemble_load(
    mesh: &HorizontalMesh,
    dofs: &DofMap,
    f: &dyn Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    P1Assembler::new(mesh, dofs).load(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_of_unity_at_quadrature_points() {
        for (dim, nh) in [(1usize, 7usize), (2, 5)] {
            let (mesh, _) = build_structured_mesh(dim, nh).unwrap();
            let table = QuadratureTable::new(&mesh);
            let mut total = 0.0;
            for q in &table.points {
                let s: f64 = q.shape[..q.nv].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                let gx: f64 = q.grad[..q.nv].iter().map(|g| g[0]).sum();
                let gy: f64 = q.grad[..q.nv].iter().map(|g| g[1]).sum();
                assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
                total += q.weight;
            }
            assert!((total - 1.0).abs() < 1e-14, "weights sum to |omega|");
        }
    }

    #[test]
    fn interval_stiffness_and_mass_unit_weight() {
        // NH = 4, k = 1/4: stiffness tridiagonal (−4, 8, −4), mass (1/24, 1/6, 1/24)
        let (mesh, dofs) = build_structured_mesh(1, 4).unwrap();
        let a = assemble_weighted_stiffness(&mesh, &dofs, &|_| 1.0);
        let m = assemble_weighted_mass(&mesh, &dofs, &|_| 1.0);
        for i in 0..3 {
            assert!((a.get(i, i) - 8.0).abs() < 1e-12);
            assert!((m.get(i, i) - 1.0 / 6.0).abs() < 1e-13);
            if i > 0 {
                assert!((a.get(i, i - 1) + 4.0).abs() < 1e-12);
                assert!((m.get(i, i - 1) - 1.0 / 24.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_weight_gives_zero_matrix() {
        let (mesh, dofs) = build_structured_mesh(2, 3).unwrap();
        let a = assemble_weighted_stiffness(&mesh, &dofs, &|_| 0.0);
        assert_eq!(a.nnz(), 0);
    }

    #[test]
    fn square_stiffness_single_interior_dof() {
        // NH = 2 leaves one interior vertex; its diagonal stiffness entry is 4
        let (mesh, dofs) = build_structured_mesh(2, 2).unwrap();
        let a = assemble_weighted_stiffness(&mesh, &dofs, &|_| 1.0);
        assert_eq!(dofs.ndof, 1);
        assert!((a.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_mass_row_sums_are_basis_integrals() {
        let (mesh, _) = build_structured_mesh(2, 4).unwrap();
        let all = crate::mesh::DofMap::all_vertices(&mesh);
        let m = assemble_weighted_mass(&mesh, &all, &|_| 1.0);
        let mut total = 0.0;
        for i in 0..all.ndof {
            let mut row = 0.0;
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                row += m.values[k];
            }
            total += row;
        }
        assert!((total - 1.0).abs() < 1e-13, "sum of basis integrals is |omega|");
    }

    #[test]
    fn weighted_mass_matches_quadrature_oracle_1d() {
        // c(x) = x on segments: compare against per-pair 3-point Gauss by hand
        let (mesh, dofs) = build_structured_mesh(1, 4).unwrap();
        let m = assemble_weighted_mass(&mesh, &dofs, &|p| p[0]);
        assert!(m.asymmetry() < 1e-15);
        let k = 0.25;
        // overlapping hats on [x_i, x_{i+1}]: int x * t * (1-t) dz etc.
        let gauss = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| -> f64 {
            let s = (0.6f64).sqrt() * 0.5;
            let pts = [(0.5 - s, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + s, 5.0 / 18.0)];
            pts.iter().map(|&(t, w)| w * f(a + t * (b - a))).sum::<f64>() * (b - a)
        };
        for i in 0..3 {
            let xi = (i + 1) as f64 * k;
            let hat = move |x: f64| (1.0 - (x - xi).abs() / k).max(0.0);
            // split at the kink of the hat, each piece is a smooth polynomial
            let exact = gauss(&|x| x * hat(x) * hat(x), xi - k, xi)
                + gauss(&|x| x * hat(x) * hat(x), xi, xi + k);
            assert!((m.get(i, i) - exact).abs() < 1e-14);
            if i > 0 {
                let xj = i as f64 * k;
                let hatj = move |x: f64| (1.0 - (x - xj).abs() / k).max(0.0);
                let exact = gauss(&|x| x * hat(x) * hatj(x), xj, xi);
                assert!((m.get(i, i - 1) - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coupling_constant_field_is_antisymmetric_on_interior() {
        // integration by parts: C + C^T = 0 on interior dofs for constant b
        let (mesh, dofs) = build_structured_mesh(1, 6).unwrap();
        let c = assemble_gradient_coupling(&mesh, &dofs, &|_| [1.0, 0.0]);
        let ct = c.transpose();
        for i in 0..dofs.ndof {
            for j in 0..dofs.ndof {
                assert!((c.get(i, j) + ct.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coupling_zero_field_and_one_dof_patch() {
        let (mesh, dofs) = build_structured_mesh(2, 2).unwrap();
        let zero = assemble_gradient_coupling(&mesh, &dofs, &|_| [0.0, 0.0]);
        assert_eq!(zero.nnz(), 0);
        // symmetric patch around the single interior dof: entry vanishes
        let c = assemble_gradient_coupling(&mesh, &dofs, &|_| [1.0, 0.0]);
        assert!(c.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn load_constant_1d() {
        let (mesh, dofs) = build_structured_mesh(1, 4).unwrap();
        let b = assemble_load(&mesh, &dofs, &|_| 1.0);
        for v in &b {
            assert!((v - 0.25).abs() < 1e-14);
        }
        let z = assemble_load(&mesh, &dofs, &|_| 0.0);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_matches_refined_quadrature() {
        use std::f64::consts::PI;
        let f = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
        let (mesh, dofs) = build_structured_mesh(2, 10).unwrap();
        let b = assemble_load(&mesh, &dofs, &f);
        // oracle: subdivide each triangle into 16 similar triangles, same rule
        let mut oracle = vec![0.0; dofs.ndof];
        for tri in &mesh.triangles {
            let p: Vec<[f64; 2]> = tri.iter().map(|&v| mesh.vertices[v]).collect();
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
            let area = 0.5 * det.abs();
            let m = 8;
            for a in 0..m {
                for bb in 0..(m - a) {
                    for flip in 0..2 {
                        if flip == 1 && bb + a == m - 1 {
                            continue;
                        }
                        // sub-triangle corners in barycentric steps
                        let corners: [[f64; 2]; 3] = if flip == 0 {
                            [
                                [a as f64 / m as f64, bb as f64 / m as f64],
                                [(a + 1) as f64 / m as f64, bb as f64 / m as f64],
                                [a as f64 / m as f64, (bb + 1) as f64 / m as f64],
                            ]
                        } else {
                            [
                                [(a + 1) as f64 / m as f64, bb as f64 / m as f64],
                                [(a + 1) as f64 / m as f64, (bb + 1) as f64 / m as f64],
                                [a as f64 / m as f64, (bb + 1) as f64 / m as f64],
                            ]
                        };
                        for (bary, w) in TRI_RULE {
                            // barycentric point of the sub-triangle, then global
                            let l1 = bary[0] * corners[0][0]
                                + bary[1] * corners[1][0]
                                + bary[2] * corners[2][0];
                            let l2 = bary[0] * corners[0][1]
                                + bary[1] * corners[1][1]
                                + bary[2] * corners[2][1];
                            let l0 = 1.0 - l1 - l2;
                            let xy = [
                                l0 * p[0][0] + l1 * p[1][0] + l2 * p[2][0],
                                l0 * p[0][1] + l1 * p[1][1] + l2 * p[2][1],
                            ];
                            let wq = w * area / (m * m) as f64;
                            let shapes = [l0, l1, l2];
                            for (k, &v) in tri.iter().enumerate() {
                                if let Some(i) = dofs.dof_of_vertex[v] {
                                    oracle[i] += wq * f(xy) * shapes[k];
                                }
                            }
                        }
                    }
                }
            }
        }
        // the base rule itself carries ~2.4e-10 quadrature error for this
        // integrand at NH = 10; the oracle is converged well below that
        for i in 0..dofs.ndof {
            assert!((b[i] - oracle[i]).abs() < 1e-9, "dof {i}: {} vs {}", b[i], oracle[i]);
        }
    }

    #[test]
    fn stiffness_positive_definite_on_random_vectors() {
        let (mesh, dofs) = build_structured_mesh(2, 5).unwrap();
        let a = assemble_weighted_stiffness(&mesh, &dofs, &|_| 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x: Vec<f64> = (0..dofs.ndof).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm2: f64 = x.iter().map(|v| v * v).sum();
            if norm2 == 0.0 {
                continue;
            }
            assert!(a.pair(&x, &x) / norm2 > 0.0);
        }
    }

    #[test]
    fn quadrature_exact_for_quadratic_weights_single_element() {
        // one reference triangle; mass entries with c = x^2 against closed forms
        let mesh = HorizontalMesh {
            dim: 2,
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            segments: Vec::new(),
            triangles: vec![[0, 1, 2]],
            boundary_vertex: vec![false; 3],
        };
        let dofs = DofMap::all_vertices(&mesh);
        let m = assemble_weighted_mass(&mesh, &dofs, &|p| p[0] * p[0]);
        // int_T x^2 l_i l_j over the unit triangle, l_0 = 1-x-y, l_1 = x, l_2 = y
        // via monomial integrals int x^a y^b = a! b! / (a+b+2)!
        let mono = |a: u32, b: u32| -> f64 {
            let fact = |n: u32| (1..=n).map(|v| v as f64).product::<f64>().max(1.0);
            fact(a) * fact(b) / fact(a + b + 2)
        };
        // l0*l0*x^2 = (1 - x - y)^2 x^2
        let e00 = mono(2, 0) - 2.0 * mono(3, 0) - 2.0 * mono(2, 1) + mono(4, 0)
            + 2.0 * mono(3, 1)
            + mono(2, 2);
        let e11 = mono(4, 0);
        let e01 = mono(3, 0) - mono(4, 0) - mono(3, 1);
        assert!((m.get(0, 0) - e00).abs() < 1e-13);
        assert!((m.get(1, 1) - e11).abs() < 1e-13);
        assert!((m.get(0, 1) - e01).abs() < 1e-13);

        let a = assemble_weighted_stiffness(&mesh, &dofs, &|p| p[0] * p[1]);
        // grad l1 . grad l1 = 1, weight x*y: entry (1,1) = int x y = 1/24
        assert!((a.get(1, 1) - mono(1, 1)).abs() < 1e-13);
    }

    #[test]
    fn stiffness_symmetry_tolerance() {
        let (mesh, dofs) = build_structured_mesh(2, 6).unwrap();
        let a = assemble_weighted_stiffness(&mesh, &dofs, &|p| 1.0 + 0.3 * p[0] + 0.1 * p[1]);
        assert!(a.asymmetry() <= 1e-12 * a.max_abs());
    }
}
