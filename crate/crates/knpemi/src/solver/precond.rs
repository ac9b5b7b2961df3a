//! The block-diagonal preconditioner: per-species diffusion blocks and
//! per-region potential blocks extracted from the (pinned) global operator,
//! with exact, multigrid and baseline application modes.
//!
//! The preconditioner drops every coupling block, so each application
//! decouples all concentrations and potentials. It is built once from the
//! first-step operator and reused for every subsequent step unless per-step
//! rebuilding is requested.

use std::str::FromStr;

use super::amg::{amg_setup, v_cycle, AmgHierarchy, AmgOptions, VCyclePrecond};
use super::direct::SparseLu;
use super::ilu::Ilu0;
use super::{cg, Precondition};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondMode {
    /// Block-diagonal inverse computed per block by AMG-preconditioned CG.
    ExactBlockCg,
    /// One V-cycle on the assembled block-diagonal operator as a whole.
    AmgMonolithic,
    /// One V-cycle per diagonal block independently.
    AmgFieldsplit,
    /// ILU(0) of the full coupled operator (black-box baseline).
    Ilu0,
    /// No preconditioning.
    None,
    /// Sparse LU of the full coupled operator (direct baseline).
    Direct,
}

impl PrecondMode {
    pub fn name(&self) -> &'static str {
        match self {
            PrecondMode::ExactBlockCg => "exact_block_cg",
            PrecondMode::AmgMonolithic => "amg_monolithic",
            PrecondMode::AmgFieldsplit => "amg_fieldsplit",
            PrecondMode::Ilu0 => "ilu0",
            PrecondMode::None => "none",
            PrecondMode::Direct => "direct",
        }
    }

    pub fn all() -> [PrecondMode; 6] {
        [
            PrecondMode::ExactBlockCg,
            PrecondMode::AmgMonolithic,
            PrecondMode::AmgFieldsplit,
            PrecondMode::Ilu0,
            PrecondMode::None,
            PrecondMode::Direct,
        ]
    }
}

impl FromStr for PrecondMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_block_cg" => Ok(PrecondMode::ExactBlockCg),
            "amg_monolithic" => Ok(PrecondMode::AmgMonolithic),
            "amg_fieldsplit" => Ok(PrecondMode::AmgFieldsplit),
            "ilu0" => Ok(PrecondMode::Ilu0),
            "none" => Ok(PrecondMode::None),
            "direct" => Ok(PrecondMode::Direct),
            other => Err(Error::Config {
                field: "solver.precond".into(),
                message: format!(
                    "unknown preconditioner `{other}`; valid: exact_block_cg, amg_monolithic, \
                     amg_fieldsplit, ilu0, none, direct"
                ),
            }),
        }
    }
}

/// One diagonal block of the global operator.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub offset: usize,
    pub size: usize,
    pub label: String,
}

pub struct BlockPrecond {
    mode: PrecondMode,
    blocks: Vec<BlockSpec>,
    block_mats: Vec<CsrMatrix>,
    hierarchies: Vec<AmgHierarchy>,
    mono_hierarchy: Option<AmgHierarchy>,
    ilu: Option<Ilu0>,
    lu: Option<SparseLu>,
    inner_tol: f64,
}

/// Extract a diagonal block; when the pinned DOF falls inside the block, the
/// pin is symmetrized (column entries dropped) so the block stays SPD.
fn extract_pinned_block(a: &CsrMatrix, spec: &BlockSpec, pin: Option<usize>) -> CsrMatrix {
    let block = a.extract_block(spec.offset, spec.size, spec.offset, spec.size);
    let pin_local = match pin {
        Some(p) if p >= spec.offset && p < spec.offset + spec.size => p - spec.offset,
        _ => return block,
    };
    let mut triplets = Vec::with_capacity(block.nnz());
    for i in 0..block.nrows() {
        let (cols, vals) = block.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if i != pin_local && *c == pin_local {
                continue;
            }
            triplets.push((i, *c, *v));
        }
    }
    CsrMatrix::from_triplets(block.nrows(), block.ncols(), &triplets)
}

impl BlockPrecond {
    /// Build from the pinned global operator at the current step.
    pub fn build(
        mode: PrecondMode,
        a: &CsrMatrix,
        blocks: &[BlockSpec],
        pin_row: Option<usize>,
        amg_options: AmgOptions,
        inner_tol: f64,
    ) -> Result<Self> {
        let mut pc = BlockPrecond {
            mode,
            blocks: blocks.to_vec(),
            block_mats: Vec::new(),
            hierarchies: Vec::new(),
            mono_hierarchy: None,
            ilu: None,
            lu: None,
            inner_tol,
        };
        match mode {
            PrecondMode::None => {}
            PrecondMode::Ilu0 => {
                pc.ilu = Some(Ilu0::factor(a)?);
            }
            PrecondMode::Direct => {
                pc.lu = Some(SparseLu::factor(a)?);
            }
            PrecondMode::ExactBlockCg | PrecondMode::AmgFieldsplit => {
                for spec in blocks {
                    let m = extract_pinned_block(a, spec, pin_row);
                    pc.hierarchies.push(
                        amg_setup(&m, amg_options)
                            .map_err(|e| Error::Singular(format!("{}: {e}", spec.label)))?,
                    );
                    pc.block_mats.push(m);
                }
            }
            PrecondMode::AmgMonolithic => {
                // assemble the block-diagonal operator as one matrix
                let n = a.nrows();
                let mut row_ptr = vec![0usize; n + 1];
                let mut col_idx = Vec::new();
                let mut values = Vec::new();
                let mats: Vec<CsrMatrix> =
                    blocks.iter().map(|s| extract_pinned_block(a, s, pin_row)).collect();
                for (spec, m) in blocks.iter().zip(&mats) {
                    for i in 0..spec.size {
                        let (cols, vals) = m.row(i);
                        for (c, v) in cols.iter().zip(vals) {
                            col_idx.push(c + spec.offset);
                            values.push(*v);
                        }
                        row_ptr[spec.offset + i + 1] = col_idx.len();
                    }
                }
                let p0 = CsrMatrix::from_parts(n, n, row_ptr, col_idx, values);
                pc.mono_hierarchy = Some(amg_setup(&p0, amg_options)?);
                pc.block_mats = mats;
            }
        }
        Ok(pc)
    }

    pub fn mode(&self) -> PrecondMode {
        self.mode
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block_matrix(&self, b: usize) -> &CsrMatrix {
        &self.block_mats[b]
    }

    /// The assembled block-diagonal operator (modes that extract blocks).
    pub fn block_diagonal_matrix(&self) -> Option<CsrMatrix> {
        if self.block_mats.is_empty() {
            return None;
        }
        let n: usize = self.blocks.iter().map(|b| b.size).sum();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for (spec, m) in self.blocks.iter().zip(&self.block_mats) {
            for i in 0..spec.size {
                let (cols, vals) = m.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    col_idx.push(c + spec.offset);
                    values.push(*v);
                }
                row_ptr[spec.offset + i + 1] = col_idx.len();
            }
        }
        Some(CsrMatrix::from_parts(n, n, row_ptr, col_idx, values))
    }
}

impl Precondition for BlockPrecond {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self.mode {
            PrecondMode::None => r.to_vec(),
            PrecondMode::Ilu0 => self.ilu.as_ref().unwrap().solve(r),
            PrecondMode::Direct => self.lu.as_ref().unwrap().solve(r),
            PrecondMode::AmgMonolithic => v_cycle(self.mono_hierarchy.as_ref().unwrap(), r),
            PrecondMode::AmgFieldsplit => {
                let mut z = vec![0.0; r.len()];
                for (spec, h) in self.blocks.iter().zip(&self.hierarchies) {
                    let rb = &r[spec.offset..spec.offset + spec.size];
                    let zb = v_cycle(h, rb);
                    z[spec.offset..spec.offset + spec.size].copy_from_slice(&zb);
                }
                z
            }
            PrecondMode::ExactBlockCg => {
                let mut z = vec![0.0; r.len()];
                for ((spec, h), m) in
                    self.blocks.iter().zip(&self.hierarchies).zip(&self.block_mats)
                {
                    let rb = &r[spec.offset..spec.offset + spec.size];
                    let x0 = vec![0.0; spec.size];
                    let zb = cg(m, rb, &x0, &VCyclePrecond(h), self.inner_tol, 500, &spec.label)
                        .unwrap_or_else(|e| panic!("inner CG failed on {}: {e}", spec.label));
                    z[spec.offset..spec.offset + spec.size].copy_from_slice(&zb);
                }
                z
            }
        }
    }

    fn is_stationary(&self) -> bool {
        self.mode != PrecondMode::ExactBlockCg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{fgmres, KrylovConfig};

    fn spd_block(n: usize, shift: f64) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        t
    }

    fn block_diag_system() -> (CsrMatrix, Vec<BlockSpec>) {
        let n1 = 40;
        let n2 = 30;
        let mut t = spd_block(n1, 0.1);
        for (i, j, v) in spd_block(n2, 0.5) {
            t.push((i + n1, j + n1, v));
        }
        let a = CsrMatrix::from_triplets(n1 + n2, n1 + n2, &t);
        let blocks = vec![
            BlockSpec { offset: 0, size: n1, label: "b0".into() },
            BlockSpec { offset: n1, size: n2, label: "b1".into() },
        ];
        (a, blocks)
    }

    #[test]
    fn none_mode_is_identity() {
        let (a, blocks) = block_diag_system();
        let pc =
            BlockPrecond::build(PrecondMode::None, &a, &blocks, None, AmgOptions::default(), 1e-8)
                .unwrap();
        let r: Vec<f64> = (0..a.nrows()).map(|i| i as f64).collect();
        assert_eq!(pc.apply(&r), r);
    }

    #[test]
    fn exact_block_cg_on_block_diagonal_is_one_gmres_iteration() {
        // preconditioning the block-diagonal operator by its own exact
        // inverse makes GMRES converge immediately
        let (a, blocks) = block_diag_system();
        let pc = BlockPrecond::build(
            PrecondMode::ExactBlockCg,
            &a,
            &blocks,
            None,
            AmgOptions::default(),
            1e-12,
        )
        .unwrap();
        let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let cfg = KrylovConfig { tolerance: 1e-12, ..Default::default() };
        let out = fgmres(&a, &b, &vec![0.0; a.nrows()], &pc, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2, "iterations: {}", out.iterations);
        let r = crate::sparse::sub(&b, &a.spmv(&out.x));
        assert!(crate::sparse::norm(&r) <= 1e-10 * crate::sparse::norm(&b));
    }

    #[test]
    fn exact_block_matches_direct_blockwise() {
        let (a, blocks) = block_diag_system();
        let pc = BlockPrecond::build(
            PrecondMode::ExactBlockCg,
            &a,
            &blocks,
            None,
            AmgOptions::default(),
            1e-10,
        )
        .unwrap();
        let r: Vec<f64> = (0..a.nrows()).map(|i| (i as f64 * 0.17).sin()).collect();
        let z = pc.apply(&r);
        // compare against a dense solve of each block
        for spec in &blocks {
            let block = a.extract_block(spec.offset, spec.size, spec.offset, spec.size);
            let dense = block.to_dense();
            let mut flat = vec![0.0; spec.size * spec.size];
            for i in 0..spec.size {
                for j in 0..spec.size {
                    flat[i * spec.size + j] = dense[i][j];
                }
            }
            let lu = crate::sparse::DenseLu::factor(spec.size, &flat).unwrap();
            let want = lu.solve(&r[spec.offset..spec.offset + spec.size]);
            for (i, w) in want.iter().enumerate() {
                let got = z[spec.offset + i];
                assert!((got - w).abs() <= 1e-8 * (1.0 + w.abs()), "{got} vs {w}");
            }
        }
    }

    #[test]
    fn fieldsplit_and_monolithic_agree_on_block_diagonal() {
        // with no cross-block coupling the monolithic hierarchy coarsens each
        // block independently, so the two application modes coincide
        let (a, blocks) = block_diag_system();
        let fs = BlockPrecond::build(
            PrecondMode::AmgFieldsplit,
            &a,
            &blocks,
            None,
            AmgOptions::default(),
            1e-8,
        )
        .unwrap();
        let mono = BlockPrecond::build(
            PrecondMode::AmgMonolithic,
            &a,
            &blocks,
            None,
            AmgOptions::default(),
            1e-8,
        )
        .unwrap();
        let r: Vec<f64> = (0..a.nrows()).map(|i| ((i % 11) as f64) - 5.0).collect();
        let zf = fs.apply(&r);
        let zm = mono.apply(&r);
        for (x, y) in zf.iter().zip(&zm) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn pinned_block_extraction_symmetrizes() {
        let mut t = spd_block(5, 0.0);
        // pin row 2: identity row
        t.retain(|(i, _, _)| *i != 2);
        t.push((2, 2, 1.0));
        let a = CsrMatrix::from_triplets(5, 5, &t);
        let spec = BlockSpec { offset: 0, size: 5, label: "phi_e".into() };
        let b = extract_pinned_block(&a, &spec, Some(2));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(b.get(i, j), b.get(j, i), "asymmetric at ({i},{j})");
            }
        }
        assert_eq!(b.get(2, 2), 1.0);
        assert_eq!(b.get(1, 2), 0.0);
        assert_eq!(b.get(3, 2), 0.0);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(PrecondMode::from_str("amg_monolithic").unwrap(), PrecondMode::AmgMonolithic);
        assert_eq!(PrecondMode::from_str("none").unwrap(), PrecondMode::None);
        assert!(PrecondMode::from_str("bogus").is_err());
        for m in PrecondMode::all() {
            assert_eq!(PrecondMode::from_str(m.name()).unwrap(), m);
        }
    }
}
