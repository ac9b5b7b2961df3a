//! Bulk source terms and the extra right-hand-side data used by
//! manufactured-solution verification.

use crate::error::{Error, Result};
use crate::mesh::Region;

/// Spatial support of a piecewise-constant bulk source.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSupport {
    All,
    /// Points with x-coordinate below the threshold (meters).
    HalfSpaceX { x0: f64 },
}

impl SourceSupport {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        match self {
            SourceSupport::All => true,
            SourceSupport::HalfSpaceX { x0 } => x[0] < *x0,
        }
    }
}

/// One piecewise-constant-in-space, interval-in-time bulk source term
/// f_r^k, in mol/(m^3 s).
#[derive(Debug, Clone, PartialEq)]
pub struct BulkSourceTerm {
    pub species: usize,
    pub region: Region,
    pub value: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub support: SourceSupport,
}

type SpeciesField = dyn Fn(Region, usize, [f64; 3], f64) -> f64 + Sync + Send;
type ScalarField = dyn Fn(Region, [f64; 3], f64) -> f64 + Sync + Send;
/// (region, species, point, intra-to-extra facet normal, t_prev, t_next)
type SpeciesInterval = dyn Fn(Region, usize, [f64; 3], [f64; 3], f64, f64) -> f64 + Sync + Send;
type ScalarInterval = dyn Fn(Region, [f64; 3], [f64; 3], f64, f64) -> f64 + Sync + Send;
type BoundaryFlux = dyn Fn(usize, [f64; 3], [f64; 3], f64) -> f64 + Sync + Send;

/// All optional right-hand-side data beyond membrane currents.
///
/// The closure hooks exist for verification cases where the exact fields do
/// not satisfy the interface and boundary conditions of the physical model;
/// production scenarios use only the piecewise-constant `bulk` terms.
#[derive(Default)]
pub struct SourceSet {
    pub bulk: Vec<BulkSourceTerm>,
    /// Smooth species source f_r^k(x, t_n).
    pub bulk_fn: Option<Box<SpeciesField>>,
    /// Source in the charge-conservation (potential) equation.
    pub potential_fn: Option<Box<ScalarField>>,
    /// Membrane flux correction per species.
    pub gamma_fn: Option<Box<SpeciesInterval>>,
    /// Membrane correction of the potential equation.
    pub gamma_potential_fn: Option<Box<ScalarInterval>>,
    /// Exterior-boundary normal flux J_e^k . n (x, n, t_next).
    pub boundary_fn: Option<Box<BoundaryFlux>>,
}

impl SourceSet {
    pub fn is_empty(&self) -> bool {
        self.bulk.is_empty()
            && self.bulk_fn.is_none()
            && self.potential_fn.is_none()
            && self.gamma_fn.is_none()
            && self.gamma_potential_fn.is_none()
            && self.boundary_fn.is_none()
    }

    /// Piecewise terms grouped by (region, support, interval) must be
    /// electroneutral: sum_k z_k f_r^k = 0.
    pub fn validate_electroneutral(&self, valences: &[f64]) -> Result<()> {
        use std::collections::HashMap;
        let mut groups: HashMap<String, f64> = HashMap::new();
        for t in &self.bulk {
            if t.species >= valences.len() {
                return Err(Error::Config {
                    field: "sources".into(),
                    message: format!("species index {} out of range", t.species),
                });
            }
            let key = format!("{:?}|{:?}|{}|{}", t.region, t.support, t.t_start, t.t_end);
            *groups.entry(key).or_insert(0.0) += valences[t.species] * t.value;
        }
        for (key, sum) in groups {
            if sum.abs() > 1e-12 {
                return Err(Error::Config {
                    field: "sources".into(),
                    message: format!(
                        "bulk sources for group {key} violate electroneutrality: sum z_k f_k = {sum:e}"
                    ),
                });
            }
        }
        Ok(())
    }

    /// Evaluate the piecewise + smooth species source at (region, k, x, t).
    pub fn species_source(&self, region: Region, k: usize, x: [f64; 3], t: f64) -> f64 {
        let mut v = 0.0;
        for term in &self.bulk {
            if term.species == k
                && term.region == region
                && t > term.t_start
                && t <= term.t_end
                && term.support.contains(x)
            {
                v += term.value;
            }
        }
        if let Some(f) = &self.bulk_fn {
            v += f(region, k, x, t);
        }
        v
    }

    pub fn has_species_source(&self, region: Region, k: usize) -> bool {
        self.bulk_fn.is_some()
            || self.bulk.iter().any(|t| t.species == k && t.region == region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn electroneutral_source_pair_passes() {
        let s = SourceSet {
            bulk: vec![
                BulkSourceTerm {
                    species: 0,
                    region: Region::Extra,
                    value: -1.0,
                    t_start: 0.0,
                    t_end: 2e-3,
                    support: SourceSupport::HalfSpaceX { x0: 0.0 },
                },
                BulkSourceTerm {
                    species: 1,
                    region: Region::Extra,
                    value: 1.0,
                    t_start: 0.0,
                    t_end: 2e-3,
                    support: SourceSupport::HalfSpaceX { x0: 0.0 },
                },
            ],
            ..Default::default()
        };
        s.validate_electroneutral(&[1.0, 1.0, -1.0]).unwrap();
        // sodium and potassium rows differ only in sign
        let x = [-1.0, 0.0, 0.0];
        assert_eq!(s.species_source(Region::Extra, 0, x, 1e-3), -1.0);
        assert_eq!(s.species_source(Region::Extra, 1, x, 1e-3), 1.0);
        assert_eq!(s.species_source(Region::Extra, 0, [1.0, 0.0, 0.0], 1e-3), 0.0);
        assert_eq!(s.species_source(Region::Extra, 0, x, 3e-3), 0.0);
    }

    #[test]
    fn non_electroneutral_source_rejected() {
        let s = SourceSet {
            bulk: vec![BulkSourceTerm {
                species: 0,
                region: Region::Intra,
                value: 1.0,
                t_start: 0.0,
                t_end: 1.0,
                support: SourceSupport::All,
            }],
            ..Default::default()
        };
        assert!(s.validate_electroneutral(&[1.0, 1.0, -1.0]).is_err());
    }
}
