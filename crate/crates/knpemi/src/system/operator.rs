//! The global block operator: a monolithic CSR matrix with a fixed sparsity
//! pattern whose values are rewritten every time step.
//!
//! Block layout per region r (intra first): one diffusion block per species
//! on the diagonal, the concentration-to-potential column, the
//! potential-to-concentration row, and the potential diagonal; regions couple
//! only through membrane mass terms in the potential columns. The pattern of
//! every row is a concatenation of block-row segments with increasing column
//! offsets, so values can be rewritten in place without searching.

use rayon::prelude::*;

use crate::fem::assembly::{BulkAssembler, BulkKind, GammaAssembler};
use crate::fem::DofMap;
use crate::membrane::{IonSpecies, PhysicalConstants};
use crate::mesh::{Mesh, Region};
use crate::solver::precond::BlockSpec;
use crate::sparse::CsrMatrix;

pub const REGIONS: [Region; 2] = [Region::Intra, Region::Extra];

/// Offsets of the 2(|K|+1) diagonal blocks in the global vector.
#[derive(Debug, Clone)]
pub struct FieldLayout {
    pub n_species: usize,
    pub n_intra: usize,
    pub n_extra: usize,
}

impl FieldLayout {
    pub fn total(&self) -> usize {
        (self.n_intra + self.n_extra) * (self.n_species + 1)
    }

    pub fn region_size(&self, r: Region) -> usize {
        match r {
            Region::Intra => self.n_intra,
            Region::Extra => self.n_extra,
        }
    }

    pub fn conc_offset(&self, r: Region, k: usize) -> usize {
        debug_assert!(k < self.n_species);
        match r {
            Region::Intra => k * self.n_intra,
            Region::Extra => (self.n_species + 1) * self.n_intra + k * self.n_extra,
        }
    }

    pub fn phi_offset(&self, r: Region) -> usize {
        match r {
            Region::Intra => self.n_species * self.n_intra,
            Region::Extra => (self.n_species + 1) * self.n_intra + self.n_species * self.n_extra,
        }
    }

    /// Diagonal blocks in layout order with human-readable labels.
    pub fn block_specs(&self, species: &[IonSpecies]) -> Vec<BlockSpec> {
        let mut out = Vec::new();
        for r in REGIONS {
            for (k, sp) in species.iter().enumerate() {
                out.push(BlockSpec {
                    offset: self.conc_offset(r, k),
                    size: self.region_size(r),
                    label: format!("{}@{}", sp.name, r.name()),
                });
            }
            out.push(BlockSpec {
                offset: self.phi_offset(r),
                size: self.region_size(r),
                label: format!("phi@{}", r.name()),
            });
        }
        out
    }
}

/// Per-region assembled pieces reused across time steps.
struct RegionData {
    bulk: BulkAssembler,
    /// Mass matrix (kept as a full CSR for right-hand-side products).
    mass: CsrMatrix,
    mass_values: Vec<f64>,
    stiffness_values: Vec<f64>,
    /// Weighted stiffness values per species, refreshed each step.
    weighted_stiffness: Vec<Vec<f64>>,
    /// Map from the membrane own-pattern nnz into bulk-pattern positions.
    gamma_to_bulk: Vec<usize>,
    /// Unweighted own membrane mass values (pattern of the gamma assembler).
    gamma_own_unweighted: Vec<f64>,
    gamma_cpl_unweighted: Vec<f64>,
    /// Capacitance-weighted membrane mass values per species, refreshed.
    gamma_own_weighted: Vec<Vec<f64>>,
    gamma_cpl_weighted: Vec<Vec<f64>>,
    /// tau_r^k = dt D_r^k and tau-tilde per species.
    tau: Vec<f64>,
    tau_tilde: Vec<f64>,
    valence: Vec<f64>,
}

pub struct BlockSystem {
    pub layout: FieldLayout,
    pub gamma: GammaAssembler,
    regions: [RegionData; 2],
    /// Monolithic operator with fixed pattern.
    matrix: CsrMatrix,
    /// Pinned global row (an extracellular potential DOF off the membrane).
    pub pin_row: usize,
    pub pin_local: usize,
    c_m_over_f: f64,
    dt: f64,
}

fn region_data(
    mesh: &Mesh,
    dofmap: &DofMap,
    gamma: &GammaAssembler,
    species: &[IonSpecies],
    r: Region,
    p: usize,
) -> RegionData {
    let space = dofmap.space(r);
    let bulk = BulkAssembler::new(mesh, space, p);
    let nnz = bulk.nnz();
    let mut mass_values = vec![0.0; nnz];
    bulk.assemble_values(space, BulkKind::Mass, None, &mut mass_values);
    let mut stiffness_values = vec![0.0; nnz];
    bulk.assemble_values(space, BulkKind::Stiffness, None, &mut stiffness_values);
    let mut mass = bulk.pattern().clone();
    mass.values_mut().copy_from_slice(&mass_values);

    let gown = gamma.own_pattern(r);
    let mut gamma_to_bulk = Vec::with_capacity(gown.nnz());
    for i in 0..gown.nrows() {
        let (cols, _) = gown.row(i);
        for &c in cols {
            gamma_to_bulk.push(
                bulk.pattern()
                    .position(i, c)
                    .expect("membrane pattern must be contained in the bulk pattern"),
            );
        }
    }
    let mut gamma_own_unweighted = vec![0.0; gown.nnz()];
    gamma.own_values(dofmap, r, None, &mut gamma_own_unweighted);
    let mut gamma_cpl_unweighted = vec![0.0; gamma.coupling_pattern(r).nnz()];
    gamma.coupling_values(dofmap, r, None, &mut gamma_cpl_unweighted);

    RegionData {
        mass,
        mass_values,
        stiffness_values,
        weighted_stiffness: vec![vec![0.0; nnz]; species.len()],
        gamma_to_bulk,
        gamma_own_weighted: vec![vec![0.0; gown.nnz()]; species.len()],
        gamma_cpl_weighted: vec![vec![0.0; gamma.coupling_pattern(r).nnz()]; species.len()],
        gamma_own_unweighted,
        gamma_cpl_unweighted,
        tau: vec![0.0; species.len()],
        tau_tilde: vec![0.0; species.len()],
        valence: species.iter().map(|s| s.valence).collect(),
        bulk,
    }
}

impl BlockSystem {
    pub fn new(
        mesh: &Mesh,
        dofmap: &DofMap,
        species: &[IonSpecies],
        constants: &PhysicalConstants,
        dt: f64,
        pin_override: Option<usize>,
    ) -> crate::error::Result<Self> {
        assert!(dt > 0.0, "time step must be positive");
        let layout = FieldLayout {
            n_species: species.len(),
            n_intra: dofmap.intra.ndofs,
            n_extra: dofmap.extra.ndofs,
        };
        let gamma = GammaAssembler::new(mesh, dofmap);
        let intra = region_data(mesh, dofmap, &gamma, species, Region::Intra, dofmap.degree);
        let extra = region_data(mesh, dofmap, &gamma, species, Region::Extra, dofmap.degree);

        // pin: the smallest extracellular DOF off the membrane
        let pin_local = match pin_override {
            Some(d) => {
                if dofmap.pair_of_extra[d] != usize::MAX {
                    return Err(crate::error::Error::Config {
                        field: "solver.pin_dof".into(),
                        message: format!("dof {d} lies on the membrane; pick an interior one"),
                    });
                }
                d
            }
            None => (0..dofmap.extra.ndofs)
                .find(|&d| dofmap.pair_of_extra[d] == usize::MAX)
                .ok_or_else(|| {
                    crate::error::Error::Mesh(
                        "extracellular region has only membrane DOFs; cannot pin the potential"
                            .into(),
                    )
                })?,
        };
        let pin_row = layout.phi_offset(Region::Extra) + pin_local;

        let matrix = build_pattern(&layout, dofmap, &intra, &extra, &gamma);
        let mut sys = BlockSystem {
            layout,
            gamma,
            regions: [intra, extra],
            matrix,
            pin_row,
            pin_local,
            c_m_over_f: constants.membrane_capacitance / constants.faraday,
            dt,
        };
        sys.set_dt(species, constants, dt);
        Ok(sys)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn set_dt(&mut self, species: &[IonSpecies], constants: &PhysicalConstants, dt: f64) {
        assert!(dt > 0.0, "time step must be positive");
        self.dt = dt;
        let psi = constants.psi();
        for (ri, r) in REGIONS.iter().enumerate() {
            for (k, sp) in species.iter().enumerate() {
                let tau = dt * sp.diffusion(*r);
                self.regions[ri].tau[k] = tau;
                self.regions[ri].tau_tilde[k] = tau * sp.valence / psi;
            }
        }
    }

    pub fn region(&self, r: Region) -> usize {
        match r {
            Region::Intra => 0,
            Region::Extra => 1,
        }
    }

    pub fn mass(&self, r: Region) -> &CsrMatrix {
        &self.regions[self.region(r)].mass
    }

    pub fn tau(&self, r: Region, k: usize) -> f64 {
        self.regions[self.region(r)].tau[k]
    }

    pub fn tau_tilde(&self, r: Region, k: usize) -> f64 {
        self.regions[self.region(r)].tau_tilde[k]
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn bulk_assembler(&self, r: Region) -> &BulkAssembler {
        &self.regions[self.region(r)].bulk
    }

    /// Refresh the time-dependent blocks from the previous-step state:
    /// concentration-weighted stiffness per species and
    /// capacitance-fraction-weighted membrane masses, then rewrite the
    /// monolithic value array (pinned row included).
    ///
    /// `conc(r, k)` returns the previous concentration coefficients of
    /// species k in region r; `cap_weight(r, k)` the nodal values of
    /// alpha_r^k C_m / (F z_k) per membrane pair.
    pub fn refresh(
        &mut self,
        dofmap: &DofMap,
        conc: impl Fn(Region, usize) -> Vec<f64>,
        cap_weight: impl Fn(Region, usize) -> Vec<f64>,
    ) {
        let n_species = self.layout.n_species;
        let gamma = &self.gamma;
        for (ri, r) in REGIONS.iter().enumerate() {
            let space = dofmap.space(*r);
            let region = &mut self.regions[ri];
            for k in 0..n_species {
                let c = conc(*r, k);
                region.bulk.assemble_values(
                    space,
                    BulkKind::WeightedStiffness,
                    Some(&c),
                    &mut region.weighted_stiffness[k],
                );
                let w = cap_weight(*r, k);
                gamma.own_values(dofmap, *r, Some(&w), &mut region.gamma_own_weighted[k]);
                gamma.coupling_values(dofmap, *r, Some(&w), &mut region.gamma_cpl_weighted[k]);
            }
        }
        self.write_values();
    }

    /// Rewrite the monolithic values from the cached block values.
    fn write_values(&mut self) {
        let layout = &self.layout;
        let n_species = layout.n_species;
        let cmf = self.c_m_over_f;
        let pin_row = self.pin_row;
        let nrows = layout.total();

        let intra = &self.regions[0];
        let extra = &self.regions[1];
        let gamma = &self.gamma;
        let (row_ptr, col_idx, values) = self.matrix.parts_mut();

        let row_task = |row: usize, out: &mut [f64]| {
            let cols = &col_idx[row_ptr[row]..row_ptr[row + 1]];
            if row == pin_row {
                // identity row: zeros with 1 on the diagonal
                for (slot, &c) in out.iter_mut().zip(cols) {
                    *slot = if c == row { 1.0 } else { 0.0 };
                }
                return;
            }
            let ni_total = (n_species + 1) * layout.n_intra;
            let (region, rd, rlocal) = if row < ni_total {
                (Region::Intra, intra, row)
            } else {
                (Region::Extra, extra, row - ni_total)
            };
            let nr = layout.region_size(region);
            let field = rlocal / nr;
            let j = rlocal % nr;
            let bp = rd.bulk.pattern();
            let (b0, b1) = (bp.row_ptr()[j], bp.row_ptr()[j + 1]);
            let blen = b1 - b0;
            let gown = gamma.own_pattern(region);
            let (g0, g1) = (gown.row_ptr()[j], gown.row_ptr()[j + 1]);
            let gcpl = gamma.coupling_pattern(region);
            let (c0, c1) = (gcpl.row_ptr()[j], gcpl.row_ptr()[j + 1]);
            let clen = c1 - c0;

            if field < n_species {
                let k = field;
                // segment order: intra rows put the cross-region coupling
                // last; extra rows put it first
                let (cpl_first, mut pos) = match region {
                    Region::Intra => (false, 0usize),
                    Region::Extra => (true, 0usize),
                };
                if cpl_first {
                    for p in c0..c1 {
                        out[pos] = -rd.gamma_cpl_weighted[k][p];
                        pos += 1;
                    }
                }
                // own diffusion diagonal: M + tau A
                for p in b0..b1 {
                    out[pos] = rd.mass_values[p] + rd.tau[k] * rd.stiffness_values[p];
                    pos += 1;
                }
                // own potential column: tau-tilde A^k + weighted membrane mass
                let base = pos;
                for p in b0..b1 {
                    out[base + (p - b0)] = rd.tau_tilde[k] * rd.weighted_stiffness[k][p];
                }
                for p in g0..g1 {
                    let bulk_pos = rd.gamma_to_bulk[p];
                    debug_assert!(bulk_pos >= b0 && bulk_pos < b1);
                    out[base + (bulk_pos - b0)] += rd.gamma_own_weighted[k][p];
                }
                pos = base + blen;
                if !cpl_first {
                    for p in c0..c1 {
                        out[pos] = -rd.gamma_cpl_weighted[k][p];
                        pos += 1;
                    }
                }
                debug_assert_eq!(pos, out.len());
            } else {
                // potential row
                let mut pos = 0usize;
                if region == Region::Extra {
                    for p in c0..c1 {
                        out[pos] = -cmf * rd.gamma_cpl_unweighted[p];
                        pos += 1;
                    }
                }
                for k in 0..n_species {
                    let zk_tau = rd.valence[k] * rd.tau[k];
                    for p in b0..b1 {
                        out[pos] = zk_tau * rd.stiffness_values[p];
                        pos += 1;
                    }
                }
                // potential diagonal: sum_k z_k tau-tilde A^k + (C_m/F) M_G
                let base = pos;
                for slot in out[base..base + blen].iter_mut() {
                    *slot = 0.0;
                }
                for k in 0..n_species {
                    let z_tt = rd.valence[k] * rd.tau_tilde[k];
                    for p in b0..b1 {
                        out[base + (p - b0)] += z_tt * rd.weighted_stiffness[k][p];
                    }
                }
                for p in g0..g1 {
                    let bulk_pos = rd.gamma_to_bulk[p];
                    out[base + (bulk_pos - b0)] += cmf * rd.gamma_own_unweighted[p];
                }
                pos = base + blen;
                if region == Region::Intra {
                    for p in c0..c1 {
                        out[pos] = -cmf * rd.gamma_cpl_unweighted[p];
                        pos += 1;
                    }
                }
                debug_assert_eq!(pos, out.len());
            }
            // the pinned column stays: it removes the constant-potential
            // nullspace through the neighbours' equations (a symmetric pin
            // would keep "ones off the pin" as an exact null vector)
        };

        // deterministic row-parallel rewrite: split the value array into
        // per-chunk slices along row boundaries
        let chunk = 1024usize;
        let nchunks = nrows.div_ceil(chunk);
        let mut slices: Vec<(usize, &mut [f64])> = Vec::with_capacity(nchunks);
        let mut rest = values;
        let mut consumed = 0usize;
        for ci in 0..nchunks {
            let lo = ci * chunk;
            let hi = ((ci + 1) * chunk).min(nrows);
            let len = row_ptr[hi] - row_ptr[lo];
            let (head, tail) = rest.split_at_mut(len);
            slices.push((lo, head));
            rest = tail;
            consumed += len;
        }
        debug_assert_eq!(consumed, row_ptr[nrows]);
        slices.into_par_iter().for_each(|(lo, block)| {
            let hi = (lo + chunk).min(nrows);
            let base = row_ptr[lo];
            for row in lo..hi {
                let (a, b) = (row_ptr[row], row_ptr[row + 1]);
                row_task(row, &mut block[a - base..b - base]);
            }
        });
    }
}

fn build_pattern(
    layout: &FieldLayout,
    dofmap: &DofMap,
    intra: &RegionData,
    extra: &RegionData,
    gamma: &GammaAssembler,
) -> CsrMatrix {
    let n_species = layout.n_species;
    let nrows = layout.total();
    let mut row_ptr = vec![0usize; nrows + 1];
    let ni_total = (n_species + 1) * layout.n_intra;

    let row_len = |row: usize| -> usize {
        let (region, rd, rlocal) = if row < ni_total {
            (Region::Intra, intra, row)
        } else {
            (Region::Extra, extra, row - ni_total)
        };
        let nr = layout.region_size(region);
        let field = rlocal / nr;
        let j = rlocal % nr;
        let bp = rd.bulk.pattern();
        let blen = bp.row_ptr()[j + 1] - bp.row_ptr()[j];
        let gcpl = gamma.coupling_pattern(region);
        let clen = gcpl.row_ptr()[j + 1] - gcpl.row_ptr()[j];
        if field < n_species {
            2 * blen + clen
        } else {
            (n_species + 1) * blen + clen
        }
    };
    for row in 0..nrows {
        row_ptr[row + 1] = row_ptr[row] + row_len(row);
    }
    let nnz = row_ptr[nrows];
    let mut col_idx = vec![0usize; nnz];

    for row in 0..nrows {
        let (region, rd, rlocal) = if row < ni_total {
            (Region::Intra, intra, row)
        } else {
            (Region::Extra, extra, row - ni_total)
        };
        let other = region.other();
        let nr = layout.region_size(region);
        let field = rlocal / nr;
        let j = rlocal % nr;
        let bp = rd.bulk.pattern();
        let (b0, b1) = (bp.row_ptr()[j], bp.row_ptr()[j + 1]);
        let bcols = &bp.col_idx()[b0..b1];
        let gcpl = gamma.coupling_pattern(region);
        let (c0, c1) = (gcpl.row_ptr()[j], gcpl.row_ptr()[j + 1]);
        let ccols = &gcpl.col_idx()[c0..c1];
        let own_phi = layout.phi_offset(region);
        let other_phi = layout.phi_offset(other);
        let mut pos = row_ptr[row];
        let mut push = |col_idx: &mut Vec<usize>, c: usize| {
            col_idx[pos] = c;
            pos += 1;
        };
        if field < n_species {
            let k = field;
            let own_conc = layout.conc_offset(region, k);
            if region == Region::Extra {
                for &c in ccols {
                    push(&mut col_idx, c + other_phi);
                }
            }
            for &c in bcols {
                push(&mut col_idx, c + own_conc);
            }
            for &c in bcols {
                push(&mut col_idx, c + own_phi);
            }
            if region == Region::Intra {
                for &c in ccols {
                    push(&mut col_idx, c + other_phi);
                }
            }
        } else {
            if region == Region::Extra {
                for &c in ccols {
                    push(&mut col_idx, c + other_phi);
                }
            }
            for k in 0..n_species {
                let off = layout.conc_offset(region, k);
                for &c in bcols {
                    push(&mut col_idx, c + off);
                }
            }
            for &c in bcols {
                push(&mut col_idx, c + own_phi);
            }
            if region == Region::Intra {
                for &c in ccols {
                    push(&mut col_idx, c + other_phi);
                }
            }
        }
        debug_assert_eq!(pos, row_ptr[row + 1]);
    }
    let _ = dofmap;
    let values = vec![0.0; nnz];
    CsrMatrix::from_parts(nrows, nrows, row_ptr, col_idx, values)
}
