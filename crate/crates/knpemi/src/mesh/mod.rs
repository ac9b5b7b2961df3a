//! Simplicial meshes with intra/extracellular region tags and an explicit
//! membrane interface.
//!
//! A mesh is a conforming triangulation (2D) or tetrahedralization (3D) in
//! which every cell carries a region tag. The membrane `Γ` is not stored in
//! the input: interface facets are derived as the facets shared by one
//! intracellular and one extracellular cell, exterior facets as the facets
//! with a single adjacent cell.

mod io;

pub use io::{export_mesh, import_mesh};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Physical side length of the built-in Model A box, in meters.
pub const MODEL_A_SIDE_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Intra,
    Extra,
}

impl Region {
    pub fn other(self) -> Region {
        match self {
            Region::Intra => Region::Extra,
            Region::Extra => Region::Intra,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Region::Intra => 1.0,
            Region::Extra => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Intra => "intra",
            Region::Extra => "extra",
        }
    }
}

/// Facet between one intracellular and one extracellular cell.
///
/// `vertices` holds the facet corners in canonical (sorted) order; the third
/// entry is unused in 2D. The same vertex order is used when enumerating the
/// facet's degrees of freedom on both sides of the membrane.
#[derive(Debug, Clone)]
pub struct InterfaceFacet {
    pub vertices: [usize; 3],
    pub intra_cell: usize,
    pub extra_cell: usize,
    /// Cell label of the adjacent intracellular cell (1 for single-cell meshes).
    pub label: u32,
}

#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub vertices: [usize; 3],
    pub cell: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<[f64; 3]>,
    /// Flat cell connectivity, stride `dim + 1`.
    cells: Vec<usize>,
    cell_tags: Vec<Region>,
    cell_labels: Vec<u32>,
    interface_facets: Vec<InterfaceFacet>,
    boundary_facets: Vec<BoundaryFacet>,
}

/// Scenario geometry selector used by configuration files.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioGeometry {
    ModelA2d { nx: usize },
    ModelA3d { nx: usize },
    Imported { path: std::path::PathBuf, scale_to_m: f64 },
}

impl Mesh {
    /// Build a mesh from raw arrays, derive interface and boundary facets and
    /// check all structural invariants.
    pub fn new(
        dim: usize,
        vertices: Vec<[f64; 3]>,
        cells: Vec<usize>,
        cell_tags: Vec<Region>,
        cell_labels: Vec<u32>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Mesh(format!("unsupported dimension {dim}")));
        }
        let nloc = dim + 1;
        if cells.len() % nloc != 0 {
            return Err(Error::Mesh("cell array length not a multiple of dim+1".into()));
        }
        let ncells = cells.len() / nloc;
        if cell_tags.len() != ncells || cell_labels.len() != ncells {
            return Err(Error::Mesh("cell tag/label arrays do not match cell count".into()));
        }
        for &v in &cells {
            if v >= vertices.len() {
                return Err(Error::Mesh(format!("cell references vertex {v} out of range")));
            }
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            cell_tags,
            cell_labels,
            interface_facets: Vec::new(),
            boundary_facets: Vec::new(),
        };
        mesh.check_volumes()?;
        mesh.check_duplicate_vertices()?;
        mesh.extract_facets()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertex(&self, v: usize) -> [f64; 3] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cells[c * n..(c + 1) * n]
    }

    pub fn cell_tag(&self, c: usize) -> Region {
        self.cell_tags[c]
    }

    pub fn cell_label(&self, c: usize) -> u32 {
        self.cell_labels[c]
    }

    pub fn interface_facets(&self) -> &[InterfaceFacet] {
        &self.interface_facets
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 3] {
        let vs = self.cell(c);
        let mut m = [0.0; 3];
        for &v in vs {
            for k in 0..3 {
                m[k] += self.vertices[v][k];
            }
        }
        let n = vs.len() as f64;
        [m[0] / n, m[1] / n, m[2] / n]
    }

    /// Signed cell volume (area in 2D) with the stored vertex order.
    pub fn cell_volume(&self, c: usize) -> f64 {
        let vs = self.cell(c);
        let p: Vec<[f64; 3]> = vs.iter().map(|&v| self.vertices[v]).collect();
        match self.dim {
            2 => {
                let (a, b, cc) = (p[0], p[1], p[2]);
                0.5 * ((b[0] - a[0]) * (cc[1] - a[1]) - (b[1] - a[1]) * (cc[0] - a[0]))
            }
            3 => {
                let d1 = sub3(p[1], p[0]);
                let d2 = sub3(p[2], p[0]);
                let d3 = sub3(p[3], p[0]);
                dot3(cross3(d1, d2), d3) / 6.0
            }
            _ => unreachable!(),
        }
    }

    /// Facet measure: edge length in 2D, triangle area in 3D.
    pub fn facet_measure(&self, verts: &[usize]) -> f64 {
        match self.dim {
            2 => {
                let d = sub3(self.vertices[verts[1]], self.vertices[verts[0]]);
                dot3(d, d).sqrt()
            }
            3 => {
                let d1 = sub3(self.vertices[verts[1]], self.vertices[verts[0]]);
                let d2 = sub3(self.vertices[verts[2]], self.vertices[verts[0]]);
                let c = cross3(d1, d2);
                0.5 * dot3(c, c).sqrt()
            }
            _ => unreachable!(),
        }
    }

    /// Unit normal of an interface facet pointing from the intracellular to
    /// the extracellular side.
    pub fn interface_normal(&self, facet: &InterfaceFacet) -> [f64; 3] {
        let n = self.facet_normal(&facet.vertices[..self.dim]);
        let mid = self.facet_centroid(&facet.vertices[..self.dim]);
        let ci = self.cell_centroid(facet.intra_cell);
        let d = sub3(mid, ci);
        if dot3(n, d) >= 0.0 {
            n
        } else {
            [-n[0], -n[1], -n[2]]
        }
    }

    /// Outward unit normal of a boundary facet.
    pub fn boundary_normal(&self, facet: &BoundaryFacet) -> [f64; 3] {
        let n = self.facet_normal(&facet.vertices[..self.dim]);
        let mid = self.facet_centroid(&facet.vertices[..self.dim]);
        let ci = self.cell_centroid(facet.cell);
        let d = sub3(mid, ci);
        if dot3(n, d) >= 0.0 {
            n
        } else {
            [-n[0], -n[1], -n[2]]
        }
    }

    fn facet_normal(&self, verts: &[usize]) -> [f64; 3] {
        match self.dim {
            2 => {
                let t = sub3(self.vertices[verts[1]], self.vertices[verts[0]]);
                let l = dot3(t, t).sqrt();
                [t[1] / l, -t[0] / l, 0.0]
            }
            3 => {
                let d1 = sub3(self.vertices[verts[1]], self.vertices[verts[0]]);
                let d2 = sub3(self.vertices[verts[2]], self.vertices[verts[0]]);
                let c = cross3(d1, d2);
                let l = dot3(c, c).sqrt();
                [c[0] / l, c[1] / l, c[2] / l]
            }
            _ => unreachable!(),
        }
    }

    pub fn facet_centroid(&self, verts: &[usize]) -> [f64; 3] {
        let mut m = [0.0; 3];
        for &v in verts {
            for k in 0..3 {
                m[k] += self.vertices[v][k];
            }
        }
        let n = verts.len() as f64;
        [m[0] / n, m[1] / n, m[2] / n]
    }

    /// Total measure of the membrane interface.
    pub fn interface_measure(&self) -> f64 {
        self.interface_facets
            .iter()
            .map(|f| self.facet_measure(&f.vertices[..self.dim]))
            .sum()
    }

    /// Number of distinct vertices lying on the interface.
    pub fn interface_vertex_count(&self) -> usize {
        let mut vs: Vec<usize> = self
            .interface_facets
            .iter()
            .flat_map(|f| f.vertices[..self.dim].iter().copied())
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs.len()
    }

    pub fn region_volume(&self, region: Region) -> f64 {
        (0..self.num_cells())
            .filter(|&c| self.cell_tags[c] == region)
            .map(|c| self.cell_volume(c))
            .sum()
    }

    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Locate the cell containing a point; returns (cell, barycentric coords).
    pub fn locate(&self, x: [f64; 3]) -> Option<(usize, Vec<f64>)> {
        let tol = 1e-10;
        for c in 0..self.num_cells() {
            if let Some(bary) = self.barycentric(c, x) {
                if bary.iter().all(|&b| b >= -tol) {
                    return Some((c, bary));
                }
            }
        }
        None
    }

    pub fn barycentric(&self, c: usize, x: [f64; 3]) -> Option<Vec<f64>> {
        let vs = self.cell(c);
        let p: Vec<[f64; 3]> = vs.iter().map(|&v| self.vertices[v]).collect();
        match self.dim {
            2 => {
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                if det.abs() < 1e-300 {
                    return None;
                }
                let l1 = ((x[0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (x[1] - p[0][1]))
                    / det;
                let l2 = ((p[1][0] - p[0][0]) * (x[1] - p[0][1])
                    - (x[0] - p[0][0]) * (p[1][1] - p[0][1]))
                    / det;
                Some(vec![1.0 - l1 - l2, l1, l2])
            }
            3 => {
                let d1 = sub3(p[1], p[0]);
                let d2 = sub3(p[2], p[0]);
                let d3 = sub3(p[3], p[0]);
                let det = dot3(cross3(d1, d2), d3);
                if det.abs() < 1e-300 {
                    return None;
                }
                let r = sub3(x, p[0]);
                let l1 = dot3(cross3(r, d2), d3) / det;
                let l2 = dot3(cross3(d1, r), d3) / det;
                let l3 = dot3(cross3(d1, d2), r) / det;
                Some(vec![1.0 - l1 - l2 - l3, l1, l2, l3])
            }
            _ => unreachable!(),
        }
    }

    fn check_volumes(&self) -> Result<()> {
        for c in 0..self.num_cells() {
            let v = self.cell_volume(c);
            if v <= 0.0 {
                return Err(Error::Mesh(format!(
                    "cell {c} has nonpositive volume {v:e}; fix vertex ordering"
                )));
            }
        }
        Ok(())
    }

    fn check_duplicate_vertices(&self) -> Result<()> {
        let (lo, hi) = self.bounding_box();
        let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2))
            .sqrt();
        let tol = 1e-12 * diag.max(f64::MIN_POSITIVE);
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| {
            self.vertices[a]
                .partial_cmp(&self.vertices[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            let (a, b) = (self.vertices[w[0]], self.vertices[w[1]]);
            if (0..3).all(|k| (a[k] - b[k]).abs() <= tol) {
                return Err(Error::Mesh(format!(
                    "vertices {} and {} coincide within tolerance",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(())
    }

    fn extract_facets(&mut self) -> Result<()> {
        let nloc = self.dim + 1;
        // facet key (sorted vertices) -> adjacent cells
        let mut map: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for c in 0..self.num_cells() {
            let vs = self.cell(c).to_vec();
            for omit in 0..nloc {
                let mut fv: Vec<usize> =
                    vs.iter().enumerate().filter(|(i, _)| *i != omit).map(|(_, &v)| v).collect();
                fv.sort_unstable();
                let key = [fv[0], fv[1], if self.dim == 3 { fv[2] } else { usize::MAX }];
                map.entry(key).or_default().push(c);
            }
        }
        let mut keys: Vec<[usize; 3]> = map.keys().copied().collect();
        keys.sort_unstable();
        let mut interface = Vec::new();
        let mut boundary = Vec::new();
        for key in keys {
            let cells = &map[&key];
            match cells.len() {
                1 => {
                    let c = cells[0];
                    if self.cell_tags[c] != Region::Extra {
                        return Err(Error::Topology(format!(
                            "exterior facet {:?} belongs to an intracellular cell {c}; \
                             the exterior boundary must be extracellular",
                            &key[..self.dim]
                        )));
                    }
                    boundary.push(BoundaryFacet { vertices: key, cell: c });
                }
                2 => {
                    let (a, b) = (cells[0], cells[1]);
                    match (self.cell_tags[a], self.cell_tags[b]) {
                        (Region::Intra, Region::Extra) => interface.push(InterfaceFacet {
                            vertices: key,
                            intra_cell: a,
                            extra_cell: b,
                            label: self.cell_labels[a],
                        }),
                        (Region::Extra, Region::Intra) => interface.push(InterfaceFacet {
                            vertices: key,
                            intra_cell: b,
                            extra_cell: a,
                            label: self.cell_labels[b],
                        }),
                        _ => {} // interior facet of one region
                    }
                }
                n => {
                    return Err(Error::Topology(format!(
                        "facet {:?} is shared by {n} cells; mesh is not conforming",
                        &key[..self.dim]
                    )));
                }
            }
        }
        self.interface_facets = interface;
        self.boundary_facets = boundary;
        Ok(())
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Build the idealized box geometry: `[0, side]^d` with the intracellular
/// compartment `[side/4, 3 side/4]^d`, `nx` intervals per side, each square
/// split into 2 triangles and each cube into 6 tetrahedra (Kuhn subdivision,
/// all sharing the main diagonal).
pub fn build_model_a_mesh_with_side(nx: usize, dim: usize, side: f64) -> Result<Mesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::Mesh(format!("unsupported dimension {dim}")));
    }
    if nx < 4 || nx % 4 != 0 {
        return Err(Error::Mesh(format!(
            "nx = {nx} must be a positive multiple of 4 so the membrane aligns with grid planes"
        )));
    }
    let h = side / nx as f64;
    let lo = 0.25 * side;
    let hi = 0.75 * side;
    let np = nx + 1;
    let inside = |c: &[f64; 3]| -> bool {
        (0..dim).all(|k| c[k] > lo && c[k] < hi)
    };

    if dim == 2 {
        let vid = |ix: usize, iy: usize| iy * np + ix;
        let mut vertices = Vec::with_capacity(np * np);
        for iy in 0..np {
            for ix in 0..np {
                vertices.push([ix as f64 * h, iy as f64 * h, 0.0]);
            }
        }
        let mut cells = Vec::with_capacity(2 * nx * nx * 3);
        for iy in 0..nx {
            for ix in 0..nx {
                let v00 = vid(ix, iy);
                let v10 = vid(ix + 1, iy);
                let v01 = vid(ix, iy + 1);
                let v11 = vid(ix + 1, iy + 1);
                cells.extend_from_slice(&[v00, v10, v11]);
                cells.extend_from_slice(&[v00, v11, v01]);
            }
        }
        let ncells = cells.len() / 3;
        let mut tags = Vec::with_capacity(ncells);
        for c in 0..ncells {
            let vs = &cells[c * 3..c * 3 + 3];
            let mut m = [0.0; 3];
            for &v in vs {
                for k in 0..3 {
                    m[k] += vertices[v][k];
                }
            }
            for mk in &mut m {
                *mk /= 3.0;
            }
            tags.push(if inside(&m) { Region::Intra } else { Region::Extra });
        }
        let labels = vec![1; ncells];
        Mesh::new(2, vertices, cells, tags, labels)
    } else {
        let vid = |ix: usize, iy: usize, iz: usize| (iz * np + iy) * np + ix;
        let mut vertices = vec![[0.0; 3]; np * np * np];
        for iz in 0..np {
            for iy in 0..np {
                for ix in 0..np {
                    vertices[vid(ix, iy, iz)] = [ix as f64 * h, iy as f64 * h, iz as f64 * h];
                }
            }
        }
        // Kuhn subdivision: one tet per permutation of the axes, each walking
        // from the cube origin to the opposite corner along the main diagonal.
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let parity = |p: &[usize; 3]| -> bool {
            // true if even permutation
            let mut inv = 0;
            for i in 0..3 {
                for j in i + 1..3 {
                    if p[i] > p[j] {
                        inv += 1;
                    }
                }
            }
            inv % 2 == 0
        };
        let mut cells = Vec::with_capacity(6 * nx * nx * nx * 4);
        for iz in 0..nx {
            for iy in 0..nx {
                for ix in 0..nx {
                    for perm in &PERMS {
                        let mut idx = [ix, iy, iz];
                        let mut tet = [vid(idx[0], idx[1], idx[2]), 0, 0, 0];
                        for (step, &axis) in perm.iter().enumerate() {
                            idx[axis] += 1;
                            tet[step + 1] = vid(idx[0], idx[1], idx[2]);
                        }
                        if !parity(perm) {
                            tet.swap(2, 3);
                        }
                        cells.extend_from_slice(&tet);
                    }
                }
            }
        }
        let ncells = cells.len() / 4;
        let mut tags = Vec::with_capacity(ncells);
        for c in 0..ncells {
            let vs = &cells[c * 4..c * 4 + 4];
            let mut m = [0.0; 3];
            for &v in vs {
                for k in 0..3 {
                    m[k] += vertices[v][k];
                }
            }
            for mk in &mut m {
                *mk /= 4.0;
            }
            tags.push(if inside(&m) { Region::Intra } else { Region::Extra });
        }
        let labels = vec![1; ncells];
        Mesh::new(3, vertices, cells, tags, labels)
    }
}

/// Model A mesh on the physical `[0, 1]^d` micrometer box.
pub fn build_model_a_mesh(nx: usize, dim: usize) -> Result<Mesh> {
    build_model_a_mesh_with_side(nx, dim, MODEL_A_SIDE_M)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_a_2d_nx4_counts() {
        let m = build_model_a_mesh(4, 2).unwrap();
        assert_eq!(m.num_vertices(), 25);
        assert_eq!(m.num_cells(), 32);
        assert_eq!(m.interface_facets().len(), 8);
        assert_eq!(m.interface_vertex_count(), 8);
    }

    #[test]
    fn model_a_3d_nx4_counts() {
        let m = build_model_a_mesh(4, 3).unwrap();
        assert_eq!(m.num_vertices(), 125);
        assert_eq!(m.num_cells(), 384);
    }

    #[test]
    fn model_a_3d_interface_vertices() {
        // surface lattice of the central cube: (s+1)^3 - (s-1)^3 with s = nx/2
        let m = build_model_a_mesh(8, 3).unwrap();
        let s = 4usize;
        assert_eq!(m.interface_vertex_count(), (s + 1).pow(3) - (s - 1).pow(3));
        let m20 = build_model_a_mesh(20, 3).unwrap();
        assert_eq!(m20.interface_vertex_count(), 6 * (20usize / 2).pow(2) + 2);
    }

    #[test]
    fn model_a_2d_interface_vertices_formula() {
        for nx in [4usize, 8, 12, 16] {
            let m = build_model_a_mesh(nx, 2).unwrap();
            assert_eq!(m.interface_vertex_count(), 2 * nx);
        }
    }

    #[test]
    fn rejects_bad_nx() {
        assert!(build_model_a_mesh(3, 2).is_err());
        assert!(build_model_a_mesh(6, 2).is_err());
        assert!(build_model_a_mesh(0, 2).is_err());
    }

    #[test]
    fn intra_volume_matches() {
        for (nx, d) in [(4usize, 2usize), (8, 2), (4, 3)] {
            let m = build_model_a_mesh(nx, d).unwrap();
            let want = (0.5 * MODEL_A_SIDE_M).powi(d as i32);
            let got = m.region_volume(Region::Intra);
            assert!(
                ((got - want) / want).abs() < 1e-12,
                "intra volume {got:e} vs {want:e} for nx={nx} d={d}"
            );
            let total = want + m.region_volume(Region::Extra);
            let box_vol = MODEL_A_SIDE_M.powi(d as i32);
            assert!(((total - box_vol) / box_vol).abs() < 1e-12);
        }
    }

    #[test]
    fn interface_facets_separate_tags() {
        let m = build_model_a_mesh(8, 3).unwrap();
        for f in m.interface_facets() {
            assert_eq!(m.cell_tag(f.intra_cell), Region::Intra);
            assert_eq!(m.cell_tag(f.extra_cell), Region::Extra);
        }
        for f in m.boundary_facets() {
            assert_eq!(m.cell_tag(f.cell), Region::Extra);
        }
    }

    #[test]
    fn interface_measure_2d() {
        let m = build_model_a_mesh(4, 2).unwrap();
        let want = 4.0 * 0.5 * MODEL_A_SIDE_M;
        assert!(((m.interface_measure() - want) / want).abs() < 1e-12);
    }

    #[test]
    fn interface_normals_point_outward() {
        let m = build_model_a_mesh(4, 2).unwrap();
        let c = [0.5 * MODEL_A_SIDE_M, 0.5 * MODEL_A_SIDE_M, 0.0];
        for f in m.interface_facets() {
            let n = m.interface_normal(f);
            let mid = m.facet_centroid(&f.vertices[..2]);
            let d = [mid[0] - c[0], mid[1] - c[1], 0.0];
            assert!(n[0] * d[0] + n[1] * d[1] > 0.0, "normal should point intra -> extra");
        }
    }

    #[test]
    fn locate_resolves_region() {
        let m = build_model_a_mesh(4, 2).unwrap();
        let s = MODEL_A_SIDE_M;
        let (c, _) = m.locate([0.5 * s, 0.5 * s, 0.0]).unwrap();
        assert_eq!(m.cell_tag(c), Region::Intra);
        let (c, _) = m.locate([0.15 * s, 0.15 * s, 0.0]).unwrap();
        assert_eq!(m.cell_tag(c), Region::Extra);
        assert!(m.locate([2.0 * s, 0.0, 0.0]).is_none());
    }

    #[test]
    fn rejects_intra_on_boundary() {
        // one intra and one extra triangle sharing an edge, intra touching
        // the exterior boundary
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        let cells = vec![0, 1, 2, 1, 3, 2];
        let tags = vec![Region::Intra, Region::Extra];
        let r = Mesh::new(2, vertices, cells, tags, vec![1, 1]);
        assert!(matches!(r, Err(Error::Topology(_))));
    }

    #[test]
    fn rejects_negative_volume() {
        let vertices = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let cells = vec![0, 2, 1]; // clockwise
        let r = Mesh::new(2, vertices, cells, vec![Region::Extra], vec![1]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_duplicate_vertices() {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1e-15, 0.0, 0.0],
        ];
        let cells = vec![0, 1, 2, 1, 3, 2];
        let r = Mesh::new(2, vertices, cells, vec![Region::Extra, Region::Extra], vec![1, 1]);
        assert!(r.is_err());
    }

    #[test]
    fn kuhn_subdivision_is_conforming() {
        // facet extraction would fail with >2 cells per facet if the cube
        // subdivisions did not match across cube faces
        let m = build_model_a_mesh(4, 3).unwrap();
        assert!(m.interface_facets().len() > 0);
        // every interior cube-face diagonal is shared consistently
        let total: f64 = (0..m.num_cells()).map(|c| m.cell_volume(c)).sum();
        let want = MODEL_A_SIDE_M.powi(3);
        assert!(((total - want) / want).abs() < 1e-12);
    }
}
