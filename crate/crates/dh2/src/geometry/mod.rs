//! Triangulated closed surfaces: sphere mesh generation, mesh metrics and
//! panel-pair quadrature.
//!
//! Meshes are flat triangle panels over shared vertices. The generated test
//! family starts from the regular octahedron (the double pyramid with
//! vertices on the coordinate axes) and refines each panel into four by edge
//! bisection, projecting every vertex onto the unit sphere, so level `k` has
//! `8 * 4^k` panels.

mod distance;
mod quadrature;

pub use distance::{box_box_distance, point_triangle_distance, triangle_triangle_distance};
pub use quadrature::{
    gauss_legendre, panel_adjacency, panel_pair_integral, triangle_quadrature, PanelAdjacency,
    TriangleRule,
};

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// A flat triangle given by its three corners.
pub type Triangle = [Vector3<f64>; 3];

/// Axis-parallel box `[lo.x, hi.x] x [lo.y, hi.y] x [lo.z, hi.z]`.
///
/// Degenerate boxes (zero width along some axis) are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl Aabb {
    /// Creates a box; corner order is normalized per axis.
    pub fn new(a: Vector3<f64>, b: Vector3<f64>) -> Self {
        Self {
            lo: a.inf(&b),
            hi: a.sup(&b),
        }
    }

    /// Smallest box containing all given points. `None` when empty.
    pub fn containing(points: impl IntoIterator<Item = Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut lo = first;
        let mut hi = first;
        for p in it {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        Some(Self { lo, hi })
    }

    /// Box center.
    pub fn center(&self) -> Vector3<f64> {
        0.5 * (self.lo + self.hi)
    }

    /// Edge lengths.
    pub fn widths(&self) -> Vector3<f64> {
        self.hi - self.lo
    }

    /// Space diagonal, i.e. the set diameter of the box.
    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }

    /// Index of the longest edge (lowest index wins ties).
    pub fn longest_axis(&self) -> usize {
        let w = self.widths();
        let mut best = 0;
        for axis in 1..3 {
            if w[axis] > w[best] {
                best = axis;
            }
        }
        best
    }

    /// Box grown by `margin` on all six sides.
    pub fn inflated(&self, margin: f64) -> Self {
        let m = Vector3::repeat(margin);
        Self {
            lo: self.lo - m,
            hi: self.hi + m,
        }
    }

    /// True if `p` lies in the closed box.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] <= self.hi[a])
    }
}

/// Triangulated surface with shared vertices.
///
/// Panels are corner index triples into the vertex list. Construction
/// validates indices and rejects degenerate (zero-area) panels; closedness is
/// checked separately by [`SurfaceMesh::validate_closed`] so that partial
/// meshes can still be built for inspection.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vector3<f64>>,
    panels: Vec<[usize; 3]>,
    areas: Vec<f64>,
    barycenters: Vec<Vector3<f64>>,
    diameters: Vec<f64>,
}

impl SurfaceMesh {
    /// Builds a mesh from raw vertex and panel lists.
    pub fn new(vertices: Vec<Vector3<f64>>, panels: Vec<[usize; 3]>) -> Result<Self> {
        if panels.is_empty() {
            return Err(Error::InvalidMesh("mesh has no panels".into()));
        }
        for v in &vertices {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
            }
        }
        let mut areas = Vec::with_capacity(panels.len());
        let mut barycenters = Vec::with_capacity(panels.len());
        let mut diameters = Vec::with_capacity(panels.len());
        for (pi, p) in panels.iter().enumerate() {
            for &i in p {
                if i >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "panel {pi} references vertex {i} but there are only {} vertices",
                        vertices.len()
                    )));
                }
            }
            if p[0] == p[1] || p[1] == p[2] || p[0] == p[2] {
                return Err(Error::InvalidMesh(format!("panel {pi} repeats a vertex")));
            }
            let [a, b, c] = [vertices[p[0]], vertices[p[1]], vertices[p[2]]];
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            let diam = (b - a).norm().max((c - b).norm()).max((a - c).norm());
            if !(area.is_finite() && area > 0.0) || area < 1e-14 * diam * diam {
                return Err(Error::InvalidMesh(format!("panel {pi} is degenerate")));
            }
            areas.push(area);
            barycenters.push((a + b + c) / 3.0);
            diameters.push(diam);
        }
        Ok(Self {
            vertices,
            panels,
            areas,
            barycenters,
            diameters,
        })
    }

    /// Number of panels (= number of piecewise-constant DOFs).
    pub fn num_panels(&self) -> usize {
        self.panels.len()
    }

    /// Number of vertices.
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Vertex coordinates.
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    /// Panel index triples.
    pub fn panels(&self) -> &[[usize; 3]] {
        &self.panels
    }

    /// Corner coordinates of panel `i`.
    pub fn panel(&self, i: usize) -> Triangle {
        let p = self.panels[i];
        [
            self.vertices[p[0]],
            self.vertices[p[1]],
            self.vertices[p[2]],
        ]
    }

    /// Area of panel `i`.
    pub fn area(&self, i: usize) -> f64 {
        self.areas[i]
    }

    /// Barycenter of panel `i`.
    pub fn barycenter(&self, i: usize) -> Vector3<f64> {
        self.barycenters[i]
    }

    /// Diameter (longest edge) of panel `i`.
    pub fn panel_diameter(&self, i: usize) -> f64 {
        self.diameters[i]
    }

    /// Total surface area.
    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Checks that the mesh is a closed orientable surface: every undirected
    /// edge is shared by exactly two panels, with opposite orientations.
    pub fn validate_closed(&self) -> Result<()> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for p in &self.panels {
            for e in [(p[0], p[1]), (p[1], p[2]), (p[2], p[0])] {
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(Error::InvalidMesh(format!(
                    "directed edge ({a},{b}) appears {count} times; mesh is not an oriented manifold"
                )));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a},{b}) has no partner; mesh is not closed"
                )));
            }
        }
        Ok(())
    }

    /// True if panels `i` and `j` share at least one vertex index.
    pub fn panels_touch(&self, i: usize, j: usize) -> bool {
        let a = self.panels[i];
        let b = self.panels[j];
        a.iter().any(|x| b.contains(x))
    }
}

/// Octahedron-based triangulation of the unit sphere with `8 * 4^level`
/// panels. All vertices lie on the unit sphere; the panels themselves are
/// flat chords.
pub fn build_sphere_mesh(level: u32) -> Result<SurfaceMesh> {
    if level > 10 {
        return Err(Error::InvalidParameter(format!(
            "refinement level {level} would produce {} panels; the supported maximum is level 10",
            8u64 * 4u64.pow(level)
        )));
    }
    let mut vertices: Vec<Vector3<f64>> = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    // The eight faces of the double pyramid |x| + |y| + |z| = 1, oriented
    // with outward normals.
    let mut panels: Vec<[usize; 3]> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(panels.len() * 4);
        for p in &panels {
            let mut mid = [0usize; 3];
            for (k, (a, b)) in [(p[0], p[1]), (p[1], p[2]), (p[2], p[0])].iter().enumerate() {
                let key = (*a.min(b), *a.max(b));
                mid[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[*a] + vertices[*b]).normalize();
                    vertices.push(m);
                    vertices.len() - 1
                });
            }
            next.push([p[0], mid[0], mid[2]]);
            next.push([mid[0], p[1], mid[1]]);
            next.push([mid[2], mid[1], p[2]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        panels = next;
    }
    SurfaceMesh::new(vertices, panels)
}

/// Global size and regularity numbers of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshMetrics {
    /// Largest panel diameter.
    pub h_g: f64,
    /// Smallest distance between two panels that share no vertex.
    pub h_min: f64,
    /// Smallest area / diameter^2 ratio over all panels.
    pub c_sr_min: f64,
    /// Largest area / diameter^2 ratio over all panels.
    pub c_sr_max: f64,
    /// Quasi-uniformity constant `h_g / h_min`.
    pub c_qu: f64,
}

/// Computes [`MeshMetrics`].
///
/// Fails when the mesh has no pair of vertex-disjoint panels (for example a
/// single-panel mesh), because the separation distance is undefined there.
pub fn mesh_metrics(mesh: &SurfaceMesh) -> Result<MeshMetrics> {
    let n = mesh.num_panels();
    let h_g = (0..n)
        .map(|i| mesh.panel_diameter(i))
        .fold(0.0f64, f64::max);
    let mut c_sr_min = f64::INFINITY;
    let mut c_sr_max = 0.0f64;
    for i in 0..n {
        let r = mesh.area(i) / (mesh.panel_diameter(i) * mesh.panel_diameter(i));
        c_sr_min = c_sr_min.min(r);
        c_sr_max = c_sr_max.max(r);
    }
    let h_min = min_panel_separation(mesh, h_g)?;
    Ok(MeshMetrics {
        h_g,
        h_min,
        c_sr_min,
        c_sr_max,
        c_qu: h_g / h_min,
    })
}

/// Smallest distance between vertex-disjoint panels. Brute force for small
/// meshes; a uniform barycenter grid prunes the candidate pairs for larger
/// ones (the result is exact either way: after a first scan over nearby
/// pairs, the search radius is widened to cover every pair that could still
/// beat the current minimum).
fn min_panel_separation(mesh: &SurfaceMesh, h_g: f64) -> Result<f64> {
    let n = mesh.num_panels();
    if n < 2 {
        return Err(Error::MetricUndefined(
            "panel separation needs at least two panels".into(),
        ));
    }
    if n <= 4096 {
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                if !mesh.panels_touch(i, j) {
                    best = best.min(triangle_triangle_distance(&mesh.panel(i), &mesh.panel(j)));
                }
            }
        }
        return if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::MetricUndefined(
                "every pair of panels shares a vertex".into(),
            ))
        };
    }

    let cell = 2.0 * h_g;
    let key = |p: &Vector3<f64>| -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..n {
        grid.entry(key(&mesh.barycenter(i))).or_default().push(i);
    }
    let scan = |radius: i64| -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..n {
            let (kx, ky, kz) = key(&mesh.barycenter(i));
            for dx in -radius..=radius {
                for dy in -radius..=radius {
                    for dz in -radius..=radius {
                        if let Some(list) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &j in list {
                                if j > i && !mesh.panels_touch(i, j) {
                                    best = best.min(triangle_triangle_distance(
                                        &mesh.panel(i),
                                        &mesh.panel(j),
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    };
    let d0 = scan(1);
    if !d0.is_finite() {
        return Err(Error::MetricUndefined(
            "no vertex-disjoint panel pair found near any panel".into(),
        ));
    }
    // Any pair beating d0 has barycenter distance < d0 + 2 h_g; widen the
    // scan to that radius to make the minimum exact.
    let radius = ((d0 + 2.0 * h_g) / cell).ceil() as i64 + 1;
    Ok(scan(radius))
}

/// Writes a mesh in the plain text exchange format:
///
/// ```text
/// n_vertices n_panels
/// x y z            (n_vertices lines)
/// i j k            (n_panels lines, 0-based corner indices)
/// ```
///
/// Coordinates use shortest round-trip formatting, so
/// [`read_mesh`] restores them bit-exactly.
pub fn write_mesh(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

/// Serializes a mesh to the text exchange format (see [`write_mesh`]).
pub fn mesh_to_string(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", mesh.num_vertices(), mesh.num_panels());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for p in mesh.panels() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}

/// Reads a mesh written by [`write_mesh`].
pub fn read_mesh(path: &Path) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text)
}

/// Parses the text exchange format (see [`write_mesh`]). Never panics on
/// malformed input; every defect is reported as [`Error::Parse`] or
/// [`Error::InvalidMesh`].
pub fn mesh_from_str(text: &str) -> Result<SurfaceMesh> {
    let mut tokens = text.split_whitespace();
    let nv: usize = next_count(&mut tokens, "vertex count")?;
    let np: usize = next_count(&mut tokens, "panel count")?;
    let mut vertices = Vec::new();
    for k in 0..nv {
        let mut v = Vector3::zeros();
        for a in 0..3 {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("vertex {k}: missing coordinate")))?;
            let x: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("vertex {k}: bad coordinate {tok:?}")))?;
            if !x.is_finite() {
                return Err(Error::Parse(format!("vertex {k}: non-finite coordinate")));
            }
            v[a] = x;
        }
        vertices.push(v);
    }
    let mut panels = Vec::new();
    for k in 0..np {
        let mut p = [0usize; 3];
        for a in 0..3 {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("panel {k}: missing corner index")))?;
            p[a] = tok
                .parse()
                .map_err(|_| Error::Parse(format!("panel {k}: bad corner index {tok:?}")))?;
        }
        panels.push(p);
    }
    if tokens.next().is_some() {
        return Err(Error::Parse("trailing tokens after mesh data".into()));
    }
    SurfaceMesh::new(vertices, panels)
}

fn next_count<'a>(tokens: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<usize> {
    let tok = tokens
        .next()
        .ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    let n: usize = tok
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what} {tok:?}")))?;
    // Counts are re-checked against the actual token supply while parsing,
    // so an absurd header cannot trigger a huge allocation; still reject
    // values that could never correspond to a real mesh file.
    if n > 100_000_000 {
        return Err(Error::Parse(format!("{what} {n} is implausibly large")));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_mesh_counts() {
        for level in 0..4 {
            let mesh = build_sphere_mesh(level).unwrap();
            assert_eq!(mesh.num_panels(), 8 * 4usize.pow(level));
            mesh.validate_closed().unwrap();
        }
    }

    #[test]
    fn sphere_vertices_on_unit_sphere() {
        let mesh = build_sphere_mesh(3).unwrap();
        for v in mesh.vertices() {
            assert_relative_eq!(v.norm(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn sphere_area_approaches_4pi() {
        // Inscribed polyhedra: areas increase towards the sphere area.
        let a: Vec<f64> = (0..5)
            .map(|l| build_sphere_mesh(l).unwrap().total_area())
            .collect();
        for w in a.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(a[4] < 4.0 * std::f64::consts::PI);
        assert!(a[4] > 0.99 * 4.0 * std::f64::consts::PI);
    }

    #[test]
    fn octahedron_metrics() {
        let mesh = build_sphere_mesh(0).unwrap();
        let m = mesh_metrics(&mesh).unwrap();
        // Every face is equilateral with edge sqrt(2).
        assert_relative_eq!(m.h_g, 2.0f64.sqrt(), max_relative = 1e-14);
        // Area of an equilateral triangle with side s is s^2 sqrt(3)/4, so
        // the shape-regularity ratio is sqrt(3)/4 for every face.
        assert_relative_eq!(m.c_sr_min, 3.0f64.sqrt() / 4.0, max_relative = 1e-14);
        assert_relative_eq!(m.c_sr_max, 3.0f64.sqrt() / 4.0, max_relative = 1e-14);
        // Each face touches the opposing face's vertices? No: opposite faces
        // share no vertex and are parallel at distance 2/sqrt(3) (twice the
        // inradius of the octahedron).
        assert_relative_eq!(m.h_min, 2.0 / 3.0f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(m.c_qu, m.h_g / m.h_min, max_relative = 1e-14);
    }

    #[test]
    fn refinement_halves_h() {
        // The halving of the mesh width is asymptotic: projecting edge
        // midpoints onto the sphere stretches the central sub-triangle, so
        // coarse levels shrink by less than 2 (level 1 -> 2 only by sqrt 3).
        let h = |level: u32| -> f64 {
            let mesh = build_sphere_mesh(level).unwrap();
            (0..mesh.num_panels())
                .map(|i| mesh.panel_diameter(i))
                .fold(0.0, f64::max)
        };
        let r23 = h(2) / h(3);
        let r34 = h(3) / h(4);
        assert!((1.85..2.05).contains(&r23), "h_g ratio {r23}");
        assert!((1.9..2.05).contains(&r34), "h_g ratio {r34}");
        assert!((2.0 - r34).abs() < (2.0 - r23).abs());
    }

    #[test]
    fn metrics_need_disjoint_pair() {
        // A tetrahedron is closed but every pair of faces shares an edge, so
        // the separation distance is undefined.
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let panels = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        let mesh = SurfaceMesh::new(vertices, panels).unwrap();
        mesh.validate_closed().unwrap();
        assert!(mesh_metrics(&mesh).is_err());
    }

    #[test]
    fn roundtrip_is_exact() {
        let mesh = build_sphere_mesh(2).unwrap();
        let text = mesh_to_string(&mesh);
        let back = mesh_from_str(&text).unwrap();
        assert_eq!(mesh.num_vertices(), back.num_vertices());
        assert_eq!(mesh.panels(), back.panels());
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            assert_eq!(a, b, "coordinates must round-trip bit-exactly");
        }
    }

    #[test]
    fn parser_rejects_malformed_input() {
        assert!(mesh_from_str("").is_err());
        assert!(mesh_from_str("junk").is_err());
        assert!(mesh_from_str("3 1\n0 0 0\n1 0 0\n0 1 0\n0 1 5").is_err()); // index oob
        assert!(mesh_from_str("3 1\n0 0 0\n1 0 0\n0 1 0\n0 1 1").is_err()); // repeated corner
        assert!(mesh_from_str("3 1\n0 0 0\n1 0 0\nnan 1 0\n0 1 2").is_err()); // non-finite
        assert!(mesh_from_str("3 1\n0 0 0\n1 0 0\n0 1 0\n0 1 2\nextra").is_err());
        assert!(mesh_from_str("99999999999999999 1").is_err()); // absurd header
        // Degenerate (collinear) panel.
        assert!(mesh_from_str("3 1\n0 0 0\n1 0 0\n2 0 0\n0 1 2").is_err());
    }

    #[test]
    fn validate_closed_rejects_open_mesh() {
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let mesh = SurfaceMesh::new(vertices, vec![[0, 1, 2]]).unwrap();
        assert!(mesh.validate_closed().is_err());
    }
}
