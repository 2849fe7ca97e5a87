//! Planar triangle meshes with marked boundary edges.
//!
//! A [`Mesh2D`] is immutable once built; deformations produce new meshes.
//! Boundary edges are stored oriented so that the domain lies to their left,
//! which makes `(dy, -dx)` the outward normal of an edge `a -> b`.

mod generate;
mod vtk;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{check_len, Error, Result};

pub use vtk::{save_vtk, write_vtk, VtkField};

/// A boundary edge: oriented node pair and its marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

/// One `(dx, dy)` displacement per mesh node.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField(pub Vec<[f64; 2]>);

impl DeformationField {
    pub fn zeros(len: usize) -> Self {
        Self(vec![[0.0; 2]; len])
    }

    /// Samples `f` at the nodes of `mesh`.
    pub fn from_fn(mesh: &Mesh2D, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self(mesh.nodes().iter().map(|p| f(p[0], p[1])).collect())
    }

    /// Interprets an interleaved `[x0, y0, x1, y1, ...]` vector.
    pub fn from_flat(values: &[f64]) -> Self {
        assert!(values.len().is_multiple_of(2), "interleaved field needs even length");
        Self(values.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v[0], v[1]]).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| [factor * v[0], factor * v[1]]).collect())
    }
}

impl Mesh2D {
    /// Builds and validates a mesh.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>, boundary_edges: Vec<BoundaryEdge>) -> Result<Self> {
        let mesh = Self {
            nodes,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh whose boundary edges are detected from the triangles and
    /// labelled by `marker_of(midpoint)`.
    pub fn from_triangles(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        marker_of: impl Fn([f64; 2]) -> u32,
    ) -> Result<Self> {
        let edges = open_edges(&triangles)
            .into_iter()
            .map(|[a, b]| {
                let mid = [0.5 * (nodes[a][0] + nodes[b][0]), 0.5 * (nodes[a][1] + nodes[b][1])];
                BoundaryEdge {
                    nodes: [a, b],
                    marker: marker_of(mid),
                }
            })
            .collect();
        Self::new(nodes, triangles, edges)
    }

    /// Structured unit-square mesh with `(n+1)^2` nodes and `2n^2` triangles.
    ///
    /// Every cell is split along the same diagonal. Markers: 1 left, 2 right,
    /// 3 bottom, 4 top.
    pub fn unit_square(n: usize) -> Result<Self> {
        generate::unit_square(n)
    }

    /// Channel `[0,3]x[0,1]` with three outlet stubs of width 0.4 centred at
    /// x = 0.7, 1.5, 2.3 and reaching y = 1.6, on a grid of spacing
    /// `0.1 / resolution`.
    ///
    /// Markers: 1 inlet (x = 0), 2/3/4 outlets (left to right), 5 walls.
    pub fn three_outlet_channel(resolution: usize) -> Result<Self> {
        generate::three_outlet_channel(resolution)
    }

    /// Unit disk built from `rings` concentric rings of `6k` nodes each.
    /// The whole boundary carries marker 1.
    pub fn unit_disk(rings: usize) -> Result<Self> {
        generate::unit_disk(rings)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Distinct boundary markers in ascending order.
    pub fn markers(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.boundary_edges.iter().map(|e| e.marker).collect();
        set.into_iter().collect()
    }

    /// Sorted, deduplicated nodes lying on edges with any of `markers`.
    pub fn boundary_nodes(&self, markers: &[u32]) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| markers.contains(&e.marker))
            .flat_map(|e| e.nodes)
            .collect();
        set.into_iter().collect()
    }

    pub fn vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(t);
        signed_area(p0, p1, p2)
    }

    pub fn area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.vertices(t);
        barycentric_gradients(p0, p1, p2)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.vertices(t);
        [(p0[0] + p1[0] + p2[0]) / 3.0, (p0[1] + p1[1] + p2[1]) / 3.0]
    }

    /// Translates the nodes by `field`, keeping connectivity.
    pub fn deform(&self, field: &DeformationField) -> Result<Self> {
        check_len(self.num_nodes(), field.len())?;
        let nodes: Vec<[f64; 2]> = self
            .nodes
            .iter()
            .zip(&field.0)
            .map(|(p, v)| [p[0] + v[0], p[1] + v[1]])
            .collect();
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::MeshInversion { triangle: t, area });
            }
        }
        Ok(Self {
            nodes,
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
        })
    }

    /// Radius-ratio quality of triangle `t`.
    pub fn triangle_quality(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(t);
        triangle_quality(p0, p1, p2)
    }

    /// Minimum radius-ratio quality over all triangles, with the triangle
    /// attaining it.
    pub fn worst_triangle(&self) -> (usize, f64) {
        (0..self.num_triangles())
            .map(|t| (t, self.triangle_quality(t)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    pub fn min_quality(&self) -> f64 {
        self.worst_triangle().1
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        if let Some(p) = self.nodes.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidMesh(format!("non-finite node {p:?}")));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} index out of range")));
            }
            let area = self.signed_area(t);
            if !(area > 0.0) {
                return Err(Error::MeshInversion { triangle: t, area });
            }
        }

        let open: BTreeSet<[usize; 2]> = open_edges(&self.triangles)
            .into_iter()
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        let mut marked = BTreeSet::new();
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &self.boundary_edges {
            let [a, b] = e.nodes;
            if a >= n || b >= n {
                return Err(Error::InvalidMesh("boundary edge index out of range".into()));
            }
            let key = [a.min(b), a.max(b)];
            if !open.contains(&key) {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {a}-{b} does not belong to exactly one triangle"
                )));
            }
            if !marked.insert(key) {
                return Err(Error::InvalidMesh(format!("boundary edge {a}-{b} listed twice")));
            }
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        if marked.len() != open.len() {
            return Err(Error::InvalidMesh(format!(
                "{} of {} boundary edges carry no marker",
                open.len() - marked.len(),
                open.len()
            )));
        }
        if let Some((node, _)) = degree.iter().find(|(_, &d)| d % 2 != 0) {
            return Err(Error::InvalidMesh(format!("boundary is not closed at node {node}")));
        }
        Ok(())
    }
}

/// Edges used by exactly one triangle, oriented as in that triangle, sorted.
fn open_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: BTreeMap<[usize; 2], (usize, [usize; 2])> = BTreeMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let entry = count.entry([a.min(b), a.max(b)]).or_insert((0, [a, b]));
            entry.0 += 1;
        }
    }
    count.into_values().filter(|(c, _)| *c == 1).map(|(_, e)| e).collect()
}

pub fn signed_area(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

/// Gradients of the barycentric coordinates of a non-degenerate triangle.
pub fn barycentric_gradients(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> [[f64; 2]; 3] {
    let two_area = 2.0 * signed_area(p0, p1, p2);
    let p = [p0, p1, p2];
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        g[i] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
    }
    g
}

/// Radius ratio `2 r_in / r_circ`; 1 for equilateral, 0 for degenerate or
/// inverted triangles.
pub fn triangle_quality(p0: [f64; 2], p1: [f64; 2], p2: [f64; 2]) -> f64 {
    let area = signed_area(p0, p1, p2);
    if area <= 0.0 {
        return 0.0;
    }
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let (a, b, c) = (dist(p1, p2), dist(p2, p0), dist(p0, p1));
    let s = 0.5 * (a + b + c);
    let q = 8.0 * area * area / (s * a * b * c);
    q.min(1.0)
}
