//! Admissible two-point-flux meshes of a polygonal domain.
//!
//! A mesh stores cell measures and centers, the internal faces with their
//! transmissivities `a = m_sigma / d_sigma`, and the boundary faces (geometry
//! only). Triangulations use circumcenters as cell centers so that the
//! segment joining two neighboring centers is orthogonal to the shared edge.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Result, WgfError};

pub type Point = [f64; 2];

/// Relative orthogonality tolerance for `x_L - x_K` against the face normal.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Faces whose center distance falls below this fraction of the mesh size are rejected.
pub const MIN_CENTER_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(WgfError::InvalidInput(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn unit() -> Self {
        Self { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub measure: f64,
    pub center: Point,
    pub diameter: f64,
    /// Polygon vertices in counter-clockwise order.
    pub vertices: Vec<Point>,
    pub faces: Vec<usize>,
    pub boundary_faces: Vec<usize>,
}

/// Internal face `sigma = K|L`; the normal points from `left` to `right`.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub left: usize,
    pub right: usize,
    pub measure: f64,
    pub center_distance: f64,
    pub transmissivity: f64,
    pub normal: Point,
    pub endpoints: [Point; 2],
}

impl Face {
    /// The cell across the face from `cell`.
    #[inline]
    pub fn other(&self, cell: usize) -> usize {
        if cell == self.left {
            self.right
        } else {
            self.left
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub measure: f64,
    /// Outward unit normal.
    pub normal: Point,
    pub endpoints: [Point; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    cells: Vec<Cell>,
    faces: Vec<Face>,
    boundary_faces: Vec<BoundaryFace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQualityReport {
    pub zeta_1: f64,
    pub zeta_2: f64,
    pub zeta_3: f64,
    pub h: f64,
    pub orthogonality_max_angle: f64,
}

/// Node coordinates plus triangles given as node index triples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Triangulation {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn polygon_diameter(vertices: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, &p) in vertices.iter().enumerate() {
        for &q in &vertices[i + 1..] {
            d = d.max(norm(sub(p, q)));
        }
    }
    d
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

fn circumcenter(a: Point, b: Point, c: Point) -> Point {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let d = 2.0 * cross(ab, ac);
    let ab2 = dot(ab, ab);
    let ac2 = dot(ac, ac);
    [a[0] + (ac[1] * ab2 - ab[1] * ac2) / d, a[1] + (ab[0] * ac2 - ac[0] * ab2) / d]
}

/// Distance from `p` to the closed convex polygon `poly` (counter-clockwise).
fn distance_to_polygon(p: Point, poly: &[Point]) -> f64 {
    let n = poly.len();
    let inside = (0..n).all(|i| cross(sub(poly[(i + 1) % n], poly[i]), sub(p, poly[i])) >= 0.0);
    if inside {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            let ab = sub(b, a);
            let t = (dot(sub(p, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
            norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
        })
        .fold(f64::INFINITY, f64::min)
}

impl Mesh {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn measure(&self, cell: usize) -> f64 {
        self.cells[cell].measure
    }

    pub fn center(&self, cell: usize) -> Point {
        self.cells[cell].center
    }

    pub fn measures(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.measure).collect()
    }

    pub fn centers(&self) -> Vec<Point> {
        self.cells.iter().map(|c| c.center).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    /// Maximum cell diameter `h_T`.
    pub fn size(&self) -> f64 {
        self.cells.iter().map(|c| c.diameter).fold(0.0, f64::max)
    }

    /// `(face id, neighbor)` pairs of a cell.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells[cell].faces.iter().map(move |&f| (f, self.faces[f].other(cell)))
    }

    /// Samples a function of position at the cell centers.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.cells.iter().map(|c| f(c.center)).collect()
    }

    fn from_parts(cells: Vec<Cell>, faces: Vec<Face>, boundary_faces: Vec<BoundaryFace>) -> Result<Self> {
        let mut mesh = Mesh { cells, faces, boundary_faces };
        for (id, face) in mesh.faces.iter().enumerate() {
            mesh.cells[face.left].faces.push(id);
            mesh.cells[face.right].faces.push(id);
        }
        for (id, face) in mesh.boundary_faces.iter().enumerate() {
            mesh.cells[face.cell].boundary_faces.push(id);
        }
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let h = self.size();
        for (k, cell) in self.cells.iter().enumerate() {
            if !(cell.measure > 0.0) {
                return Err(WgfError::NonAdmissibleMesh(format!("cell {k} has measure {}", cell.measure)));
            }
        }
        for (id, face) in self.faces.iter().enumerate() {
            if !(face.measure > 0.0) {
                return Err(WgfError::NonAdmissibleMesh(format!("face {id} has measure {}", face.measure)));
            }
            if !(face.center_distance > MIN_CENTER_DISTANCE * h) {
                return Err(WgfError::NonAdmissibleMesh(format!(
                    "cells {} and {} have coincident centers (d = {:e})",
                    face.left, face.right, face.center_distance
                )));
            }
            let delta = sub(self.cells[face.right].center, self.cells[face.left].center);
            let along = dot(delta, face.normal);
            let tangential = cross(face.normal, delta).abs();
            if along <= 0.0 || tangential > ORTHOGONALITY_TOL * face.center_distance {
                return Err(WgfError::NonAdmissibleMesh(format!(
                    "centers of cells {} and {} are not aligned with the normal of their common face",
                    face.left, face.right
                )));
            }
        }
        Ok(())
    }

    /// Regularity constants of the mesh and its worst orthogonality defect.
    pub fn audit(&self) -> MeshQualityReport {
        let mut zeta_1: f64 = 1.0;
        let mut zeta_2: f64 = 0.0;
        let mut zeta_3: f64 = 0.0;
        let mut angle: f64 = 0.0;
        for (k, cell) in self.cells.iter().enumerate() {
            let h_k = cell.diameter;
            let mut diamonds = 0.0;
            for (f, _) in self.neighbors(k) {
                let face = &self.faces[f];
                let d = face.center_distance;
                zeta_1 = zeta_1.max(h_k / d).max(d / h_k);
                diamonds += 0.5 * face.measure * d;
            }
            zeta_3 = zeta_3.max(diamonds / cell.measure);
            zeta_2 = zeta_2.max(distance_to_polygon(cell.center, &cell.vertices) / h_k);
        }
        for face in &self.faces {
            let delta = sub(self.cells[face.right].center, self.cells[face.left].center);
            angle = angle.max(cross(face.normal, delta).abs().atan2(dot(delta, face.normal)));
        }
        MeshQualityReport { zeta_1, zeta_2, zeta_3, h: self.size(), orthogonality_max_angle: angle }
    }
}

/// Uniform `nx` by `ny` grid of `domain`; cells are numbered row by row.
pub fn build_cartesian(nx: usize, ny: usize, domain: Rect) -> Result<Mesh> {
    let domain = Rect::new(domain.x_min, domain.x_max, domain.y_min, domain.y_max)?;
    if nx == 0 || ny == 0 {
        return Err(WgfError::InvalidInput(format!("grid {nx}x{ny} has no cells")));
    }
    let dx = (domain.x_max - domain.x_min) / nx as f64;
    let dy = (domain.y_max - domain.y_min) / ny as f64;
    let id = |i: usize, j: usize| i + nx * j;
    let node = |i: usize, j: usize| [domain.x_min + i as f64 * dx, domain.y_min + j as f64 * dy];

    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let vertices = vec![node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)];
            cells.push(Cell {
                measure: dx * dy,
                center: [domain.x_min + (i as f64 + 0.5) * dx, domain.y_min + (j as f64 + 0.5) * dy],
                diameter: dx.hypot(dy),
                vertices,
                faces: Vec::new(),
                boundary_faces: Vec::new(),
            });
        }
    }

    let mut faces = Vec::new();
    let mut boundary = Vec::new();
    for j in 0..ny {
        for i in 0..=nx {
            let endpoints = [node(i, j), node(i, j + 1)];
            if i == 0 || i == nx {
                let (cell, sign) = if i == 0 { (id(0, j), -1.0) } else { (id(nx - 1, j), 1.0) };
                boundary.push(BoundaryFace { cell, measure: dy, normal: [sign, 0.0], endpoints });
            } else {
                faces.push(Face {
                    left: id(i - 1, j),
                    right: id(i, j),
                    measure: dy,
                    center_distance: dx,
                    transmissivity: dy / dx,
                    normal: [1.0, 0.0],
                    endpoints,
                });
            }
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let endpoints = [node(i, j), node(i + 1, j)];
            if j == 0 || j == ny {
                let (cell, sign) = if j == 0 { (id(i, 0), -1.0) } else { (id(i, ny - 1), 1.0) };
                boundary.push(BoundaryFace { cell, measure: dx, normal: [0.0, sign], endpoints });
            } else {
                faces.push(Face {
                    left: id(i, j - 1),
                    right: id(i, j),
                    measure: dx,
                    center_distance: dy,
                    transmissivity: dx / dy,
                    normal: [0.0, 1.0],
                    endpoints,
                });
            }
        }
    }
    Mesh::from_parts(cells, faces, boundary)
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_triangles(nodes: &[Point], triangles: &[[usize; 3]]) -> Result<Vec<[usize; 3]>> {
    if triangles.is_empty() {
        return Err(WgfError::InvalidInput("triangulation has no triangles".into()));
    }
    if nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(WgfError::InvalidInput("non-finite node coordinate".into()));
    }
    let mut oriented = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        if tri.iter().any(|&v| v >= nodes.len()) {
            return Err(WgfError::InvalidInput(format!("triangle {t} references a missing node")));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(WgfError::InvalidInput(format!("triangle {t} repeats a node")));
        }
        let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        let scale = dot(sub(nodes[tri[1]], nodes[tri[0]]), sub(nodes[tri[1]], nodes[tri[0]]))
            .max(dot(sub(nodes[tri[2]], nodes[tri[0]]), sub(nodes[tri[2]], nodes[tri[0]])));
        if area.abs() <= 1e-14 * scale {
            return Err(WgfError::InvalidInput(format!("triangle {t} is degenerate")));
        }
        oriented.push(if area > 0.0 { *tri } else { [tri[0], tri[2], tri[1]] });
    }
    Ok(oriented)
}

type EdgeMap = HashMap<(usize, usize), Vec<(usize, usize)>>;

/// Edge -> incident (triangle, local edge) list; errors on edges shared by more than two triangles.
fn edge_map(triangles: &[[usize; 3]]) -> Result<EdgeMap> {
    let mut edges = EdgeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            edges.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default().push((t, e));
        }
    }
    for (&(a, b), incident) in &edges {
        if incident.len() > 2 {
            return Err(WgfError::InvalidInput(format!("edge ({a}, {b}) is shared by {} triangles", incident.len())));
        }
        if incident.len() == 2 {
            let (t0, e0) = incident[0];
            let (t1, e1) = incident[1];
            let d0 = (triangles[t0][e0], triangles[t0][(e0 + 1) % 3]);
            let d1 = (triangles[t1][e1], triangles[t1][(e1 + 1) % 3]);
            if d0 == d1 {
                return Err(WgfError::InvalidInput(format!("triangles {t0} and {t1} overlap along edge ({a}, {b})")));
            }
        }
    }
    Ok(edges)
}

/// Builds the circumcenter finite-volume mesh of a conforming triangulation.
pub fn build_triangulation(nodes: &[Point], triangles: &[[usize; 3]]) -> Result<Mesh> {
    let triangles = check_triangles(nodes, triangles)?;
    let edges = edge_map(&triangles)?;

    // A node sitting inside a boundary edge is a hanging node.
    let boundary_edges: Vec<(usize, usize)> = edges.iter().filter(|(_, inc)| inc.len() == 1).map(|(&k, _)| k).collect();
    for &(a, b) in &boundary_edges {
        let pa = nodes[a];
        let ab = sub(nodes[b], pa);
        let len2 = dot(ab, ab);
        for (v, &p) in nodes.iter().enumerate() {
            if v == a || v == b {
                continue;
            }
            let ap = sub(p, pa);
            let t = dot(ap, ab) / len2;
            if t > 1e-12 && t < 1.0 - 1e-12 && cross(ab, ap).abs() <= 1e-12 * len2 {
                return Err(WgfError::InvalidInput(format!("node {v} lies inside edge ({a}, {b}): non-conforming")));
            }
        }
    }

    let cells: Vec<Cell> = triangles
        .iter()
        .map(|tri| {
            let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
            let vertices = vec![a, b, c];
            Cell {
                measure: signed_area(a, b, c),
                center: circumcenter(a, b, c),
                diameter: polygon_diameter(&vertices),
                vertices,
                faces: Vec::new(),
                boundary_faces: Vec::new(),
            }
        })
        .collect();

    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    let mut faces = Vec::new();
    let mut boundary = Vec::new();
    for key in keys {
        let incident = &edges[&key];
        let (t0, e0) = incident[0];
        let p = nodes[triangles[t0][e0]];
        let q = nodes[triangles[t0][(e0 + 1) % 3]];
        let tangent = sub(q, p);
        let measure = norm(tangent);
        // Counter-clockwise triangles: the outward normal of edge p->q is (ty, -tx).
        let outward = [tangent[1] / measure, -tangent[0] / measure];
        if incident.len() == 1 {
            boundary.push(BoundaryFace { cell: t0, measure, normal: outward, endpoints: [p, q] });
        } else {
            let (t1, _) = incident[1];
            let (left, right) = (t0.min(t1), t0.max(t1));
            let normal = if left == t0 { outward } else { [-outward[0], -outward[1]] };
            let d = norm(sub(cells[right].center, cells[left].center));
            faces.push(Face {
                left,
                right,
                measure,
                center_distance: d,
                transmissivity: measure / d,
                normal,
                endpoints: [p, q],
            });
        }
    }
    Mesh::from_parts(cells, faces, boundary)
}

/// Splits every triangle into four through its edge midpoints.
pub fn refine_midpoint(nodes: &[Point], triangles: &[[usize; 3]]) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let triangles = check_triangles(nodes, triangles)?;
    edge_map(&triangles)?;
    let mut new_nodes = nodes.to_vec();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::with_capacity(4 * triangles.len());
    for tri in &triangles {
        let mut mid = [0usize; 3];
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            mid[e] = *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                let (pa, pb) = (nodes[a], nodes[b]);
                new_nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                new_nodes.len() - 1
            });
        }
        let [a, b, c] = *tri;
        let [ab, bc, ca] = mid;
        out.push([a, ab, ca]);
        out.push([ab, b, bc]);
        out.push([ca, bc, c]);
        out.push([ab, bc, ca]);
    }
    Ok((new_nodes, out))
}

fn parse_header(line: Option<(usize, &str)>, keyword: &str) -> Result<usize> {
    let (no, line) = line.ok_or_else(|| WgfError::InvalidInput(format!("missing `{keyword}` header")))?;
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
        (Some(k), Some(Ok(n)), None) if k == keyword => Ok(n),
        _ => Err(WgfError::InvalidInput(format!("line {}: expected `{keyword} <count>`", no + 1))),
    }
}

fn parse_fields<T: std::str::FromStr, const N: usize>(line: Option<(usize, &str)>, what: &str) -> Result<[T; N]> {
    let (no, line) = line.ok_or_else(|| WgfError::InvalidInput(format!("unexpected end of input reading {what}")))?;
    let values: Vec<T> = line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| WgfError::InvalidInput(format!("line {}: malformed {what}", no + 1)))?;
    values.try_into().map_err(|_| WgfError::InvalidInput(format!("line {}: expected {N} values for {what}", no + 1)))
}

impl Triangulation {
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        Self { nodes, triangles }
    }

    /// Parses the `nodes N` / `triangles M` text format; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines =
            text.lines().enumerate().map(|(i, l)| (i, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let n = parse_header(lines.next(), "nodes")?;
        let nodes = (0..n).map(|_| parse_fields::<f64, 2>(lines.next(), "node")).collect::<Result<Vec<_>>>()?;
        let m = parse_header(lines.next(), "triangles")?;
        let triangles =
            (0..m).map(|_| parse_fields::<usize, 3>(lines.next(), "triangle")).collect::<Result<Vec<_>>>()?;
        if let Some((no, _)) = lines.next() {
            return Err(WgfError::InvalidInput(format!("line {}: trailing content", no + 1)));
        }
        Ok(Self { nodes, triangles })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn refine(&self) -> Result<Self> {
        let (nodes, triangles) = refine_midpoint(&self.nodes, &self.triangles)?;
        Ok(Self { nodes, triangles })
    }

    pub fn refine_n(&self, levels: usize) -> Result<Self> {
        let mut t = self.clone();
        for _ in 0..levels {
            t = t.refine()?;
        }
        Ok(t)
    }

    pub fn build(&self) -> Result<Mesh> {
        build_triangulation(&self.nodes, &self.triangles)
    }

    /// Largest interior angle over all triangles, in radians.
    pub fn max_angle(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for tri in &self.triangles {
            for e in 0..3 {
                let p = self.nodes[tri[e]];
                let u = sub(self.nodes[tri[(e + 1) % 3]], p);
                let v = sub(self.nodes[tri[(e + 2) % 3]], p);
                worst = worst.max((dot(u, v) / (norm(u) * norm(v))).clamp(-1.0, 1.0).acos());
            }
        }
        worst
    }

    /// Strictly acute triangulation of a rectangle built from staggered rows.
    ///
    /// Even rows carry `nx + 1` nodes including both sides of the rectangle,
    /// odd rows carry `nx` interior nodes; the side strips are closed by
    /// isosceles triangles spanning two row gaps. Every triangle is acute when
    /// the row spacing `t` and the column spacing `b` satisfy `b/2 < t < b`,
    /// which midpoint refinement preserves. `ny` must be even.
    pub fn staggered(nx: usize, ny: usize, domain: Rect) -> Result<Self> {
        let domain = Rect::new(domain.x_min, domain.x_max, domain.y_min, domain.y_max)?;
        if nx < 2 || ny < 2 || ny % 2 != 0 {
            return Err(WgfError::InvalidInput(format!(
                "staggered triangulation needs nx >= 2 and even ny >= 2, got {nx}x{ny}"
            )));
        }
        let width = domain.x_max - domain.x_min;
        let b = width / nx as f64;
        let t = (domain.y_max - domain.y_min) / ny as f64;
        // Offset of the first odd-row node, midway inside (t, b).
        let s = 0.5 * (t + b);
        let c = (width - 2.0 * s) / (nx - 1) as f64;

        let mut nodes = Vec::new();
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(ny + 1);
        for r in 0..=ny {
            let y = domain.y_min + r as f64 * t;
            let xs: Vec<f64> = if r % 2 == 0 {
                (0..=nx).map(|k| domain.x_min + k as f64 * b).collect()
            } else {
                (0..nx).map(|k| domain.x_min + s + k as f64 * c).collect()
            };
            let mut row = Vec::with_capacity(xs.len());
            for x in xs {
                row.push(nodes.len());
                nodes.push([x, y]);
            }
            rows.push(row);
        }

        let mut triangles = Vec::new();
        for r in 0..ny {
            let (lo, hi) = (&rows[r], &rows[r + 1]);
            let (mut i, mut j) = (0, 0);
            while i + 1 < lo.len() || j + 1 < hi.len() {
                let advance_low = j + 1 >= hi.len() || (i + 1 < lo.len() && nodes[lo[i + 1]][0] <= nodes[hi[j + 1]][0]);
                if advance_low {
                    triangles.push([lo[i], lo[i + 1], hi[j]]);
                    i += 1;
                } else {
                    triangles.push([lo[i], hi[j + 1], hi[j]]);
                    j += 1;
                }
            }
        }
        for r in (1..ny).step_by(2) {
            triangles.push([rows[r - 1][0], rows[r][0], rows[r + 1][0]]);
            triangles.push([rows[r - 1][nx], rows[r + 1][nx], rows[r][nx - 1]]);
        }
        Ok(Self { nodes, triangles })
    }

    /// The 48-triangle acute triangulation of the unit square (`h = 1/3`) used
    /// as the coarsest level of refinement studies.
    pub fn unit_square_acute() -> Self {
        Self::staggered(4, 6, Rect::unit()).expect("valid staggered parameters")
    }
}
