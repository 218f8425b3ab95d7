//! Conforming triangulations with boundary tags and newest-vertex bisection.
//!
//! Every triangle is stored as `[newest, a, b]`: its refinement edge is the
//! edge `(a, b)` opposite the first (newest) vertex. Local edge `i` of a
//! triangle is the edge opposite local vertex `i`, so local edge 0 is always
//! the refinement edge.

use std::collections::BTreeMap;

use thiserror::Error;

pub mod io;

pub type Point = [f64; 2];

/// Geometric tolerance for on-boundary and orientation tests.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
    Contact,
}

impl BoundaryTag {
    pub fn code(self) -> u8 {
        match self {
            BoundaryTag::Interior => 0,
            BoundaryTag::Dirichlet => 1,
            BoundaryTag::Neumann => 2,
            BoundaryTag::Contact => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BoundaryTag::Interior),
            1 => Some(BoundaryTag::Dirichlet),
            2 => Some(BoundaryTag::Neumann),
            3 => Some(BoundaryTag::Contact),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::Neumann => "neumann",
            BoundaryTag::Contact => "contact",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {0} references a vertex out of range")]
    VertexOutOfRange(usize),
    #[error("triangle {0} has non-positive signed area {1:e}")]
    NotPositivelyOriented(usize, f64),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("boundary edge ({0}, {1}) has no boundary tag")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("boundary edge with midpoint ({0}, {1}) matched no boundary part")]
    UnclassifiedBoundaryEdge(f64, f64),
    #[error("tag entry ({0}, {1}) does not correspond to a boundary edge")]
    StaleBoundaryTag(usize, usize),
    #[error("triangle {0} has more than one contact edge")]
    MultipleContactEdges(usize),
    #[error("marked triangle index {0} out of range")]
    MarkedOutOfRange(usize),
    #[error("marked set is empty")]
    NothingMarked,
    #[error("refinement closure did not terminate after {0} bisections")]
    ClosureDiverged(usize),
    #[error("mesh file parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoint vertex indices, sorted ascending.
    pub vertices: [usize; 2],
    /// Incident triangles with the local edge index inside each. The first
    /// entry defines the edge normal.
    pub triangles: Vec<(usize, usize)>,
    pub tag: BoundaryTag,
    pub midpoint: Point,
    pub length: f64,
    /// Unit normal pointing out of `triangles[0]`. For boundary edges this is
    /// the outward normal of the domain.
    pub normal: Point,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles.len() == 1
    }

    /// Unit tangent obtained by rotating the normal counter-clockwise.
    pub fn tangent(&self) -> Point {
        [-self.normal[1], self.normal[0]]
    }
}

/// Immutable conforming triangulation. Construction derives the edge table
/// and checks orientation and boundary tagging.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
    edges: Vec<Edge>,
    /// Edge index per (triangle, local edge).
    triangle_edges: Vec<[usize; 3]>,
    generation: u64,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

impl Mesh {
    /// Builds a mesh from vertices, triangles in `[newest, a, b]` form and
    /// tags for every boundary edge.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
    ) -> Result<Self, MeshError> {
        Self::with_generation(vertices, triangles, boundary_tags, 0)
    }

    fn with_generation(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_tags: BTreeMap<[usize; 2], BoundaryTag>,
        generation: u64,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::VertexOutOfRange(t));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(MeshError::NotPositivelyOriented(t, area));
            }
        }

        let mut incidence: BTreeMap<[usize; 2], Vec<(usize, usize)>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for le in 0..3 {
                let a = tri[(le + 1) % 3];
                let b = tri[(le + 2) % 3];
                incidence.entry(edge_key(a, b)).or_default().push((t, le));
            }
        }

        if let Some(key) = boundary_tags.keys().find(|k| !incidence.contains_key(*k)) {
            return Err(MeshError::StaleBoundaryTag(key[0], key[1]));
        }

        let mut edges = Vec::with_capacity(incidence.len());
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (key, inc) in incidence {
            if inc.len() > 2 {
                return Err(MeshError::NonManifoldEdge(key[0], key[1]));
            }
            let tag = if inc.len() == 2 {
                if boundary_tags.contains_key(&key) {
                    return Err(MeshError::StaleBoundaryTag(key[0], key[1]));
                }
                BoundaryTag::Interior
            } else {
                *boundary_tags
                    .get(&key)
                    .ok_or(MeshError::UntaggedBoundaryEdge(key[0], key[1]))?
            };
            let (t0, le0) = inc[0];
            let tri = triangles[t0];
            let a = vertices[tri[(le0 + 1) % 3]];
            let b = vertices[tri[(le0 + 2) % 3]];
            let length = dist(a, b);
            // counter-clockwise triangle: outward normal of a->b is (dy, -dx)
            let normal = [(b[1] - a[1]) / length, -(b[0] - a[0]) / length];
            let idx = edges.len();
            for &(t, le) in &inc {
                triangle_edges[t][le] = idx;
            }
            edges.push(Edge {
                vertices: key,
                triangles: inc,
                tag,
                midpoint: [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])],
                length,
                normal,
            });
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_tags,
            edges,
            triangle_edges,
            generation,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary_tags(&self) -> &BTreeMap<[usize; 2], BoundaryTag> {
        &self.boundary_tags
    }

    /// Refinement counter; fields built on one generation are rejected on another.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edge indices of triangle `t` by local edge.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_points(t);
        signed_area(p, q, r)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [p, q, r] = self.triangle_points(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        self.triangle_edges[t]
            .iter()
            .map(|&e| self.edges[e].length)
            .fold(0.0, f64::max)
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.tag == tag)
            .map(|(i, _)| i)
    }

    /// Returns a copy with every boundary edge re-tagged by `classify`,
    /// evaluated at the edge midpoint.
    pub fn retag_boundary<F>(&self, classify: F) -> Result<Mesh, MeshError>
    where
        F: Fn(Point) -> Option<BoundaryTag>,
    {
        let mut tags = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.is_boundary()) {
            let tag = classify(e.midpoint)
                .filter(|t| *t != BoundaryTag::Interior)
                .ok_or(MeshError::UnclassifiedBoundaryEdge(e.midpoint[0], e.midpoint[1]))?;
            tags.insert(e.vertices, tag);
        }
        let mesh = Mesh::with_generation(
            self.vertices.clone(),
            self.triangles.clone(),
            tags,
            self.generation,
        )?;
        mesh.check_single_contact_edge()?;
        Ok(mesh)
    }

    /// Every triangle touching the contact boundary must do so through
    /// exactly one edge.
    pub fn check_single_contact_edge(&self) -> Result<(), MeshError> {
        for t in 0..self.num_triangles() {
            let n = self.triangle_edges[t]
                .iter()
                .filter(|&&e| self.edges[e].tag == BoundaryTag::Contact)
                .count();
            if n > 1 {
                return Err(MeshError::MultipleContactEdges(t));
            }
        }
        Ok(())
    }

    /// The contact edge of triangle `t`, if any.
    pub fn contact_edge_of(&self, t: usize) -> Option<usize> {
        self.triangle_edges[t]
            .iter()
            .copied()
            .find(|&e| self.edges[e].tag == BoundaryTag::Contact)
    }

    pub fn metrics(&self) -> Result<MeshMetrics, MeshError> {
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let h_triangle: Vec<f64> = (0..self.num_triangles()).map(|t| self.diameter(t)).collect();
        let h_edge = self.edges.iter().map(|e| e.length).collect();
        let h_min = h_triangle.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(MeshMetrics {
            h_min,
            h_triangle,
            h_edge,
        })
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.num_triangles() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Checks conformity through edge incidence: every edge has one or two
    /// incident triangles, single-incidence edges are exactly the tagged
    /// boundary edges, and the Euler relation holds for a simply connected
    /// domain. A hanging node would surface as an untagged single-incidence
    /// edge.
    pub fn check_conformity(&self) -> Result<(), String> {
        for e in &self.edges {
            match e.triangles.len() {
                1 => {
                    if !self.boundary_tags.contains_key(&e.vertices) {
                        return Err(format!("edge {:?} is single-sided but untagged", e.vertices));
                    }
                }
                2 => {
                    let (t0, _) = e.triangles[0];
                    let (t1, _) = e.triangles[1];
                    if t0 == t1 {
                        return Err(format!("edge {:?} is degenerate", e.vertices));
                    }
                }
                n => return Err(format!("edge {:?} has {n} incident triangles", e.vertices)),
            }
        }
        let euler = self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64;
        if euler != 1 {
            return Err(format!("Euler characteristic {euler} != 1"));
        }
        let used: std::collections::BTreeSet<usize> =
            self.triangles.iter().flat_map(|t| t.iter().copied()).collect();
        if used.len() != self.num_vertices() {
            return Err("mesh has unreferenced vertices".into());
        }
        Ok(())
    }

    /// Bisects the marked triangles through their refinement edges and
    /// closes the refinement so the result is conforming.
    pub fn refine_nvb(&self, marked: &MarkedSet) -> Result<Mesh, MeshError> {
        if marked.is_empty() {
            return Err(MeshError::NothingMarked);
        }
        let nt = self.num_triangles();
        if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
            return Err(MeshError::MarkedOutOfRange(bad));
        }

        let mut edge_marked = vec![false; self.num_edges()];
        for &t in marked.iter() {
            edge_marked[self.triangle_edges[t][0]] = true;
        }
        // closure: a triangle with any marked edge must also bisect its
        // refinement edge
        let budget = nt * 64;
        let mut steps = 0usize;
        loop {
            let mut changed = false;
            for t in 0..nt {
                let te = self.triangle_edges[t];
                if !edge_marked[te[0]] && (edge_marked[te[1]] || edge_marked[te[2]]) {
                    edge_marked[te[0]] = true;
                    changed = true;
                    steps += 1;
                    if steps > budget {
                        return Err(MeshError::ClosureDiverged(steps));
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoint_of: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        let mut boundary_tags = self.boundary_tags.clone();
        for (e, edge) in self.edges.iter().enumerate() {
            if !edge_marked[e] {
                continue;
            }
            let m = vertices.len();
            vertices.push(edge.midpoint);
            midpoint_of.insert(edge.vertices, m);
            if let Some(tag) = boundary_tags.remove(&edge.vertices) {
                boundary_tags.insert(edge_key(edge.vertices[0], m), tag);
                boundary_tags.insert(edge_key(m, edge.vertices[1]), tag);
            }
        }

        let mut triangles = Vec::with_capacity(nt + 3 * marked.len());
        for tri in &self.triangles {
            bisect_recursive(*tri, &midpoint_of, &mut triangles);
        }
        Mesh::with_generation(vertices, triangles, boundary_tags, self.generation + 1)
    }
}

fn bisect_recursive(tri: [usize; 3], midpoint_of: &BTreeMap<[usize; 2], usize>, out: &mut Vec<[usize; 3]>) {
    let [v0, v1, v2] = tri;
    match midpoint_of.get(&edge_key(v1, v2)) {
        None => out.push(tri),
        Some(&m) => {
            bisect_recursive([m, v0, v1], midpoint_of, out);
            bisect_recursive([m, v2, v0], midpoint_of, out);
        }
    }
}

/// h_min, per-triangle diameters and per-edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMetrics {
    pub h_min: f64,
    pub h_triangle: Vec<f64>,
    pub h_edge: Vec<f64>,
}

/// Sorted, deduplicated triangle indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkedSet(Vec<usize>);

impl MarkedSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn all(num_triangles: usize) -> Self {
        Self((0..num_triangles).collect())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.0.binary_search(&t).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Unit square split by both diagonals into four right isosceles triangles
/// around the centre. Every boundary edge is tagged Neumann until the
/// problem's boundary partition is applied with [`Mesh::retag_boundary`].
pub fn unit_square_initial_mesh() -> Mesh {
    let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
    // centre first: the hypotenuse on the boundary is the longest edge
    let triangles = vec![[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]];
    let tags = [[0, 1], [1, 2], [2, 3], [0, 3]]
        .into_iter()
        .map(|k| (k, BoundaryTag::Neumann))
        .collect();
    Mesh::new(vertices, triangles, tags).expect("initial mesh is valid")
}

/// Reorders each triangle so its longest edge becomes the refinement edge,
/// breaking ties by the smallest opposite-vertex index, and flips clockwise
/// triangles.
pub fn seed_refinement_edges(vertices: &[Point], triangles: &mut [[usize; 3]]) {
    for tri in triangles.iter_mut() {
        let mut best = 0;
        let mut best_len = -1.0;
        let mut best_vertex = usize::MAX;
        for i in 0..3 {
            let len = dist(vertices[tri[(i + 1) % 3]], vertices[tri[(i + 2) % 3]]);
            let longer = len > best_len * (1.0 + GEOM_TOL);
            let tie = (len - best_len).abs() <= GEOM_TOL * len.max(1.0);
            if longer && !tie || tie && tri[i] < best_vertex {
                best = i;
                best_len = len;
                best_vertex = tri[i];
            }
        }
        let mut t = [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]];
        if signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
        *tri = t;
    }
}
