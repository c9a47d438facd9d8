//! Vertical layer decomposition and horizontal simplicial meshes.
//!
//! The computational domain is a cylinder `omega x (0, L)` with `omega` the
//! unit interval (`d = 1`) or the unit square (`d = 2`). The vertical
//! direction is split into `N` layers of equal thickness `h = L / N`; the
//! horizontal domain carries a structured P1 Lagrange mesh with homogeneous
//! Dirichlet conditions imposed by eliminating boundary vertices.

use crate::error::MeshError;

/// Vertical decomposition into `N` plane layers of thickness `h = L / N`.
///
/// `interfaces[a]` is the plane between layers `a` and `a + 1` (so
/// `interfaces[0] = 0` is the bottom and `interfaces[N] = L` the top), and
/// `midpoints[a]` is the center height of layer `a + 1`.
#[derive(Debug, Clone)]
pub struct LayerGrid {
    pub height: f64,
    pub n_layers: usize,
    pub thickness: f64,
    pub interfaces: Vec<f64>,
    pub midpoints: Vec<f64>,
    /// Knot intervals of the shifted vertical test grid:
    /// `[z_b, z_1], [z_1, z_2], ..., [z_N, z_s]` with lengths `h/2, h, ..., h, h/2`.
    pub test_intervals: Vec<(f64, f64)>,
    /// Test grid with the top knot removed, used for flux conditions on the
    /// top surface. The last interval `[z_{N-1}, z_s]` has length `3h/2`.
    /// `None` when `N = 2` (that layout needs at least three layers).
    pub neumann_intervals: Option<Vec<(f64, f64)>>,
}

/// Vertical layout of the test space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalLayout {
    /// Knots at `z_b, z_1, ..., z_N, z_s`; test functions vanish at both ends.
    Dirichlet,
    /// Knots at `z_b, z_1, ..., z_{N-1}, z_s`; test functions vanish at the
    /// bottom only and the top knot carries a degree of freedom.
    Neumann,
}

impl LayerGrid {
    /// Knot vector of the vertical test grid for the given layout.
    pub fn knots(&self, layout: VerticalLayout) -> Vec<f64> {
        let n = self.n_layers;
        let mut k = Vec::with_capacity(n + 2);
        k.push(0.0);
        match layout {
            VerticalLayout::Dirichlet => {
                k.extend_from_slice(&self.midpoints);
                k.push(self.height);
            }
            VerticalLayout::Neumann => {
                k.extend_from_slice(&self.midpoints[..n - 1]);
                k.push(self.height);
            }
        }
        k
    }

    pub fn layer_bounds(&self, layer: usize) -> (f64, f64) {
        (self.interfaces[layer], self.interfaces[layer + 1])
    }
}

/// Builds the vertical layer decomposition.
pub fn build_layer_grid(height: f64, n_layers: usize) -> Result<LayerGrid, MeshError> {
    if !(height > 0.0) {
        return Err(MeshError::InvalidHeight(height));
    }
    if n_layers < 2 {
        return Err(MeshError::InvalidLayerCount(n_layers));
    }
    let h = height / n_layers as f64;
    let interfaces: Vec<f64> = (0..=n_layers).map(|a| a as f64 * h).collect();
    let midpoints: Vec<f64> = (0..n_layers)
        .map(|a| 0.5 * (interfaces[a] + interfaces[a + 1]))
        .collect();

    let mut knots = Vec::with_capacity(n_layers + 2);
    knots.push(0.0);
    knots.extend_from_slice(&midpoints);
    knots.push(height);
    let test_intervals = knots.windows(2).map(|w| (w[0], w[1])).collect();

    let neumann_intervals = if n_layers >= 3 {
        let mut nk = Vec::with_capacity(n_layers + 1);
        nk.push(0.0);
        nk.extend_from_slice(&midpoints[..n_layers - 1]);
        nk.push(height);
        Some(nk.windows(2).map(|w| (w[0], w[1])).collect())
    } else {
        None
    };

    Ok(LayerGrid {
        height,
        n_layers,
        thickness: h,
        interfaces,
        midpoints,
        test_intervals,
        neumann_intervals,
    })
}

/// Horizontal mesh: segments on `(0,1)` for `d = 1`, a structured
/// triangulation of `(0,1)^2` for `d = 2`. Every grid square is split by the
/// diagonal of positive slope, so results are reproducible bit for bit.
#[derive(Debug, Clone)]
pub struct HorizontalMesh {
    pub dim: usize,
    /// Vertex coordinates; the second component is 0 for `d = 1`.
    pub vertices: Vec<[f64; 2]>,
    /// Segments by vertex index (`d = 1` only).
    pub segments: Vec<[usize; 2]>,
    /// Triangles by vertex index, counter-clockwise (`d = 2` only).
    pub triangles: Vec<[usize; 3]>,
    pub boundary_vertex: Vec<bool>,
}

impl HorizontalMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        if self.dim == 1 {
            self.segments.len()
        } else {
            self.triangles.len()
        }
    }

    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        if self.dim == 1 {
            &self.segments[c]
        } else {
            &self.triangles[c]
        }
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        if self.dim == 1 {
            let [a, b] = self.segments[c];
            (self.vertices[b][0] - self.vertices[a][0]).abs()
        } else {
            let [a, b, c2] = self.triangles[c];
            let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c2]);
            0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])).abs()
        }
    }

    pub fn total_measure(&self) -> f64 {
        // compensated summation keeps the partition-of-domain check sharp
        let mut sum = 0.0;
        let mut comp = 0.0;
        for c in 0..self.n_cells() {
            let y = self.cell_measure(c) - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }
}

/// Map from interior vertices to contiguous degree-of-freedom indices.
/// Boundary vertices carry no unknown.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub dof_of_vertex: Vec<Option<usize>>,
    pub vertex_of_dof: Vec<usize>,
    pub ndof: usize,
}

impl DofMap {
    pub fn interior(mesh: &HorizontalMesh) -> Self {
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        let mut vertex_of_dof = Vec::new();
        for (v, &on_boundary) in mesh.boundary_vertex.iter().enumerate() {
            if !on_boundary {
                dof_of_vertex[v] = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let ndof = vertex_of_dof.len();
        DofMap { dof_of_vertex, vertex_of_dof, ndof }
    }

    /// Identity map over all vertices, with no boundary elimination.
    /// Useful for assembling full (unconstrained) matrices.
    pub fn all_vertices(mesh: &HorizontalMesh) -> Self {
        let n = mesh.n_vertices();
        DofMap {
            dof_of_vertex: (0..n).map(Some).collect(),
            vertex_of_dof: (0..n).collect(),
            ndof: n,
        }
    }
}

/// Builds the structured horizontal mesh with `nh` subdivisions per side and
/// its interior dof map.
pub fn build_structured_mesh(
    dim: usize,
    nh: usize,
) -> Result<(HorizontalMesh, DofMap), MeshError> {
    if dim != 1 && dim != 2 {
        return Err(MeshError::InvalidDimension(dim));
    }
    if nh < 2 {
        return Err(MeshError::MeshTooCoarse(nh));
    }
    let k = 1.0 / nh as f64;
    let mesh = if dim == 1 {
        let vertices: Vec<[f64; 2]> = (0..=nh).map(|i| [i as f64 * k, 0.0]).collect();
        let segments: Vec<[usize; 2]> = (0..nh).map(|i| [i, i + 1]).collect();
        let mut boundary_vertex = vec![false; nh + 1];
        boundary_vertex[0] = true;
        boundary_vertex[nh] = true;
        HorizontalMesh { dim, vertices, segments, triangles: Vec::new(), boundary_vertex }
    } else {
        let nv = (nh + 1) * (nh + 1);
        let vid = |i: usize, j: usize| j * (nh + 1) + i;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary_vertex = vec![false; nv];
        for j in 0..=nh {
            for i in 0..=nh {
                vertices.push([i as f64 * k, j as f64 * k]);
                if i == 0 || j == 0 || i == nh || j == nh {
                    boundary_vertex[vid(i, j)] = true;
                }
            }
        }
        let mut triangles = Vec::with_capacity(2 * nh * nh);
        for j in 0..nh {
            for i in 0..nh {
                let (v00, v10, v01, v11) =
                    (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        HorizontalMesh { dim, vertices, segments: Vec::new(), triangles, boundary_vertex }
    };
    let dofs = DofMap::interior(&mesh);
    Ok((mesh, dofs))
}
