//! Lagrange function spaces per region with duplicated membrane DOFs.
//!
//! Each region (intra, extra) carries its own continuous P1 or P2 numbering.
//! Nodes lying on the membrane appear once in each region's numbering; the
//! two copies are paired through the shared mesh entity (vertex or edge), so
//! the bijection preserves node coordinates exactly.

pub mod assembly;
pub mod reference;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Region};
use reference::{cell_edges, n_cell_dofs, n_facet_dofs};

/// Identity of a Lagrange node: a mesh vertex or an edge midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum NodeKey {
    Vertex(usize),
    Edge(usize, usize), // sorted pair
}

#[derive(Debug, Clone)]
pub struct RegionSpace {
    pub region: Region,
    pub ndofs: usize,
    /// Global cell ids belonging to this region, in ascending order.
    pub cells: Vec<usize>,
    /// Region-local DOFs per cell, stride `n_cell_dofs(dim, p)`.
    pub cell_dofs: Vec<usize>,
    pub dof_coords: Vec<[f64; 3]>,
    /// Region-local DOFs lying on the membrane, ascending.
    pub gamma_dofs: Vec<usize>,
    /// Region-local DOFs of each interface facet, stride `n_facet_dofs`.
    pub facet_dofs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub degree: usize,
    pub intra: RegionSpace,
    pub extra: RegionSpace,
    /// Aligned pairs (intra dof, extra dof) of duplicated membrane nodes.
    pub gamma_pairs: Vec<(usize, usize)>,
    /// Node coordinates per pair.
    pub gamma_coords: Vec<[f64; 3]>,
    /// Pair index per interface-facet node, stride `n_facet_dofs`.
    pub facet_pairs: Vec<usize>,
    /// Membrane label per interface facet (from the adjacent intra cell).
    pub facet_labels: Vec<u32>,
    /// Pair index of each intra dof (usize::MAX when off the membrane).
    pub pair_of_intra: Vec<usize>,
    pub pair_of_extra: Vec<usize>,
    /// Extra-region DOFs of each exterior-boundary facet, stride `n_facet_dofs`.
    pub boundary_facet_dofs: Vec<usize>,
}

impl DofMap {
    pub fn space(&self, region: Region) -> &RegionSpace {
        match region {
            Region::Intra => &self.intra,
            Region::Extra => &self.extra,
        }
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma_pairs.len()
    }

    /// Total unknowns of the coupled system with `n_species` concentrations
    /// and one potential per region.
    pub fn system_size(&self, n_species: usize) -> usize {
        (self.intra.ndofs + self.extra.ndofs) * (n_species + 1)
    }

    pub fn pair_of(&self, region: Region, dof: usize) -> usize {
        match region {
            Region::Intra => self.pair_of_intra[dof],
            Region::Extra => self.pair_of_extra[dof],
        }
    }
}

/// Nodes of a cell in local order: vertices, then edge midpoints (p = 2).
fn cell_node_keys(mesh: &Mesh, cell: usize, p: usize) -> Vec<NodeKey> {
    let vs = mesh.cell(cell);
    let mut keys: Vec<NodeKey> = vs.iter().map(|&v| NodeKey::Vertex(v)).collect();
    if p == 2 {
        for &(a, b) in cell_edges(mesh.dim()) {
            let (x, y) = (vs[a].min(vs[b]), vs[a].max(vs[b]));
            keys.push(NodeKey::Edge(x, y));
        }
    }
    keys
}

/// Nodes of a facet in canonical order: sorted vertices, then edges
/// [(0,1)] in 2D or [(0,1),(0,2),(1,2)] in 3D (p = 2).
fn facet_node_keys(verts: &[usize], dim: usize, p: usize) -> Vec<NodeKey> {
    let mut keys: Vec<NodeKey> = verts.iter().map(|&v| NodeKey::Vertex(v)).collect();
    if p == 2 {
        let pairs: &[(usize, usize)] = if dim == 2 { &[(0, 1)] } else { &[(0, 1), (0, 2), (1, 2)] };
        for &(a, b) in pairs {
            let (x, y) = (verts[a].min(verts[b]), verts[a].max(verts[b]));
            keys.push(NodeKey::Edge(x, y));
        }
    }
    keys
}

fn node_coord(mesh: &Mesh, key: NodeKey) -> [f64; 3] {
    match key {
        NodeKey::Vertex(v) => mesh.vertex(v),
        NodeKey::Edge(a, b) => {
            let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]
        }
    }
}

fn build_region(mesh: &Mesh, region: Region, p: usize) -> (RegionSpace, HashMap<NodeKey, usize>) {
    let nloc = n_cell_dofs(mesh.dim(), p);
    let cells: Vec<usize> =
        (0..mesh.num_cells()).filter(|&c| mesh.cell_tag(c) == region).collect();
    let mut numbering: HashMap<NodeKey, usize> = HashMap::new();
    let mut cell_dofs = Vec::with_capacity(cells.len() * nloc);
    let mut dof_coords = Vec::new();
    for &c in &cells {
        for key in cell_node_keys(mesh, c, p) {
            let next = numbering.len();
            let id = *numbering.entry(key).or_insert_with(|| {
                dof_coords.push(node_coord(mesh, key));
                next
            });
            cell_dofs.push(id);
        }
    }
    (
        RegionSpace {
            region,
            ndofs: numbering.len(),
            cells,
            cell_dofs,
            dof_coords,
            gamma_dofs: Vec::new(),
            facet_dofs: Vec::new(),
        },
        numbering,
    )
}

/// Build the per-region DOF numbering with duplicated membrane nodes.
pub fn build_dofmap(mesh: &Mesh, p: usize) -> Result<DofMap> {
    if p != 1 && p != 2 {
        return Err(Error::UnsupportedDegree(p));
    }
    let dim = mesh.dim();
    let nfl = n_facet_dofs(dim, p);

    let (mut intra, num_i) = build_region(mesh, Region::Intra, p);
    let (mut extra, num_e) = build_region(mesh, Region::Extra, p);

    let mut gamma_pairs = Vec::new();
    let mut gamma_coords = Vec::new();
    let mut pair_index: HashMap<NodeKey, usize> = HashMap::new();
    let mut facet_pairs = Vec::with_capacity(mesh.interface_facets().len() * nfl);
    let mut facet_labels = Vec::with_capacity(mesh.interface_facets().len());
    let mut fdofs_i = Vec::with_capacity(facet_pairs.capacity());
    let mut fdofs_e = Vec::with_capacity(facet_pairs.capacity());

    for facet in mesh.interface_facets() {
        facet_labels.push(facet.label);
        for key in facet_node_keys(&facet.vertices[..dim], dim, p) {
            let di = *num_i.get(&key).expect("interface node missing in intra numbering");
            let de = *num_e.get(&key).expect("interface node missing in extra numbering");
            let next = gamma_pairs.len();
            let pid = *pair_index.entry(key).or_insert_with(|| {
                gamma_pairs.push((di, de));
                gamma_coords.push(node_coord(mesh, key));
                next
            });
            facet_pairs.push(pid);
            fdofs_i.push(di);
            fdofs_e.push(de);
        }
    }

    let mut pair_of_intra = vec![usize::MAX; intra.ndofs];
    let mut pair_of_extra = vec![usize::MAX; extra.ndofs];
    for (pid, &(di, de)) in gamma_pairs.iter().enumerate() {
        pair_of_intra[di] = pid;
        pair_of_extra[de] = pid;
        debug_assert_eq!(intra.dof_coords[di], extra.dof_coords[de]);
    }
    intra.gamma_dofs = {
        let mut v: Vec<usize> = gamma_pairs.iter().map(|p| p.0).collect();
        v.sort_unstable();
        v
    };
    extra.gamma_dofs = {
        let mut v: Vec<usize> = gamma_pairs.iter().map(|p| p.1).collect();
        v.sort_unstable();
        v
    };
    intra.facet_dofs = fdofs_i;
    extra.facet_dofs = fdofs_e;

    let mut boundary_facet_dofs = Vec::with_capacity(mesh.boundary_facets().len() * nfl);
    for facet in mesh.boundary_facets() {
        for key in facet_node_keys(&facet.vertices[..dim], dim, p) {
            let de = *num_e.get(&key).expect("boundary node missing in extra numbering");
            boundary_facet_dofs.push(de);
        }
    }

    Ok(DofMap {
        degree: p,
        intra,
        extra,
        gamma_pairs,
        gamma_coords,
        facet_pairs,
        facet_labels,
        pair_of_intra,
        pair_of_extra,
        boundary_facet_dofs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_model_a_mesh;

    #[test]
    fn model_a_nx4_p1_counts() {
        let mesh = build_model_a_mesh(4, 2).unwrap();
        let dm = build_dofmap(&mesh, 1).unwrap();
        assert_eq!(dm.intra.ndofs, 9);
        assert_eq!(dm.extra.ndofs, 24);
        assert_eq!(dm.intra.ndofs + dm.extra.ndofs, 33);
        assert_eq!(dm.n_gamma(), 8);
        assert_eq!(dm.system_size(3), 132);
    }

    #[test]
    fn model_a_dof_formula_2d() {
        // N = ((p nx + 1)^2 + 2 p nx) (|K| + 1)
        for (nx, p) in [(8usize, 1usize), (8, 2), (16, 1), (64, 1)] {
            let mesh = build_model_a_mesh(nx, 2).unwrap();
            let dm = build_dofmap(&mesh, p).unwrap();
            let want = ((p * nx + 1).pow(2) + 2 * p * nx) * 4;
            assert_eq!(dm.system_size(3), want, "nx={nx} p={p}");
        }
    }

    #[test]
    fn model_a_dof_formula_3d() {
        // N = ((p nx + 1)^3 + 1.5 (p nx)^2 + 2) (|K| + 1)
        for (nx, p) in [(4usize, 1usize), (4, 2), (8, 1)] {
            let mesh = build_model_a_mesh(nx, 3).unwrap();
            let dm = build_dofmap(&mesh, p).unwrap();
            let pn = p * nx;
            let want = ((pn + 1).pow(3) + 3 * pn * pn / 2 + 2) * 4;
            assert_eq!(dm.system_size(3), want, "nx={nx} p={p}");
        }
    }

    #[test]
    fn table_dof_counts() {
        for (nx, want) in [(64usize, 17_412usize), (128, 67_588)] {
            let mesh = build_model_a_mesh(nx, 2).unwrap();
            let dm = build_dofmap(&mesh, 1).unwrap();
            assert_eq!(dm.system_size(3), want);
        }
    }

    #[test]
    fn gamma_bijection_preserves_coordinates() {
        let mesh = build_model_a_mesh(8, 3).unwrap();
        for p in [1usize, 2] {
            let dm = build_dofmap(&mesh, p).unwrap();
            assert_eq!(dm.intra.gamma_dofs.len(), dm.extra.gamma_dofs.len());
            for (pid, &(di, de)) in dm.gamma_pairs.iter().enumerate() {
                assert_eq!(dm.intra.dof_coords[di], dm.extra.dof_coords[de]);
                assert_eq!(dm.intra.dof_coords[di], dm.gamma_coords[pid]);
            }
        }
    }

    #[test]
    fn rejects_unsupported_degree() {
        let mesh = build_model_a_mesh(4, 2).unwrap();
        assert!(matches!(build_dofmap(&mesh, 3), Err(Error::UnsupportedDegree(3))));
        assert!(build_dofmap(&mesh, 0).is_err());
    }

    #[test]
    fn p2_gamma_count_2d() {
        let mesh = build_model_a_mesh(8, 2).unwrap();
        let dm = build_dofmap(&mesh, 2).unwrap();
        // 2 p nx duplicated membrane nodes
        assert_eq!(dm.n_gamma(), 2 * 2 * 8);
    }
}
