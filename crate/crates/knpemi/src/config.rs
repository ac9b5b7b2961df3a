//! Scenario configuration files.
//!
//! A scenario is described by a single TOML file with sections; every field
//! has a default reproducing the idealized box scenario, so a minimal file
//! like `scenario = "model_a_2d"` is complete. Values use the units stated
//! in the field names; bare SI otherwise.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::membrane::{
    IonSpecies, KirNaKParams, MembraneModel, PhysicalConstants, SpatialPredicate, Stimulus,
};
use crate::mesh::{build_model_a_mesh, import_mesh, Mesh, Region};
use crate::solver::precond::PrecondMode;
use crate::solver::KrylovConfig;
use crate::system::sources::{BulkSourceTerm, SourceSet, SourceSupport};
use crate::system::{InitialFields, Scenario, SolverSettings};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Mesh file for imported scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<String>,
    /// Unit of the mesh file coordinates: "m" or "um".
    #[serde(default = "default_unit")]
    pub mesh_unit: String,
}

fn default_nx() -> usize {
    64
}
fn default_degree() -> usize {
    1
}
fn default_unit() -> String {
    "m".into()
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            nx: default_nx(),
            degree: default_degree(),
            mesh_path: None,
            mesh_unit: default_unit(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_dt_ms")]
    pub dt_ms: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_ode_substeps")]
    pub ode_substeps: usize,
}

fn default_dt_ms() -> f64 {
    0.05
}
fn default_steps() -> usize {
    300
}
fn default_ode_substeps() -> usize {
    25
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt_ms: default_dt_ms(),
            steps: default_steps(),
            ode_substeps: default_ode_substeps(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MembraneConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_phi_m0_mv")]
    pub phi_m0_mv: f64,
    #[serde(default = "default_gating0")]
    pub gating0: [f64; 3],
}

fn default_model() -> String {
    "hh".into()
}
fn default_phi_m0_mv() -> f64 {
    -67.74
}
fn default_gating0() -> [f64; 3] {
    [0.276, 0.0379, 0.688]
}

impl Default for MembraneConfig {
    fn default() -> Self {
        MembraneConfig {
            model: default_model(),
            phi_m0_mv: default_phi_m0_mv(),
            gating0: default_gating0(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    #[serde(default = "default_stim_g_bar")]
    pub g_bar: f64,
    #[serde(default = "default_stim_tc_ms")]
    pub time_constant_ms: f64,
    #[serde(default = "default_stim_period_ms")]
    pub period_ms: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// "all", "half_space_x" or "labels".
    #[serde(default = "default_region_all")]
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<u32>,
}

fn default_stim_g_bar() -> f64 {
    40.0
}
fn default_stim_tc_ms() -> f64 {
    2.0
}
fn default_stim_period_ms() -> f64 {
    10.0
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_region_all() -> String {
    "all".into()
}

impl Default for StimulusConfig {
    fn default() -> Self {
        StimulusConfig {
            g_bar: default_stim_g_bar(),
            time_constant_ms: default_stim_tc_ms(),
            period_ms: default_stim_period_ms(),
            amplitude: default_amplitude(),
            region: default_region_all(),
            x0_um: None,
            labels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default = "default_gas_constant")]
    pub gas_constant: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_faraday")]
    pub faraday: f64,
    /// Membrane capacitance per unit area, F/m^2.
    #[serde(default = "default_capacitance")]
    pub capacitance: f64,
    #[serde(default = "default_phi_rest_mv")]
    pub phi_rest_mv: f64,
}

fn default_gas_constant() -> f64 {
    8.314
}
fn default_temperature() -> f64 {
    300.0
}
fn default_faraday() -> f64 {
    9.648e4
}
fn default_capacitance() -> f64 {
    0.02
}
fn default_phi_rest_mv() -> f64 {
    -65.0
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            gas_constant: default_gas_constant(),
            temperature: default_temperature(),
            faraday: default_faraday(),
            capacitance: default_capacitance(),
            phi_rest_mv: default_phi_rest_mv(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub name: String,
    pub valence: f64,
    pub d_intra: f64,
    pub d_extra: f64,
    pub c0_intra: f64,
    pub c0_extra: f64,
    #[serde(default)]
    pub g_leak: f64,
    #[serde(default)]
    pub g_bar: f64,
}

fn default_species_config() -> Vec<SpeciesConfig> {
    crate::membrane::default_species()
        .into_iter()
        .map(|s| SpeciesConfig {
            name: s.name,
            valence: s.valence,
            d_intra: s.d_intra,
            d_extra: s.d_extra,
            c0_intra: s.c0_intra,
            c0_extra: s.c0_extra,
            g_leak: s.g_leak,
            g_bar: s.g_bar,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_p_na")]
    pub p_na: f64,
    #[serde(default = "default_p_k")]
    pub p_k: f64,
}

fn default_rho() -> f64 {
    1.115e-6
}
fn default_p_na() -> f64 {
    10.0
}
fn default_p_k() -> f64 {
    1.5
}

impl Default for PumpConfig {
    fn default() -> Self {
        PumpConfig { rho: default_rho(), p_na: default_p_na(), p_k: default_p_k() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_precond")]
    pub precond: String,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_restart")]
    pub restart: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// AMG strong threshold; defaults to 0.25 in 2D and 0.5 in 3D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amg_theta: Option<f64>,
    #[serde(default = "default_true")]
    pub freeze_p0: bool,
    #[serde(default = "default_inner_tol")]
    pub inner_tolerance: f64,
    #[serde(default = "default_direct_cap")]
    pub direct_cap: usize,
}

fn default_precond() -> String {
    "amg_monolithic".into()
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_restart() -> usize {
    30
}
fn default_max_iterations() -> usize {
    1000
}
fn default_true() -> bool {
    true
}
fn default_inner_tol() -> f64 {
    1e-8
}
fn default_direct_cap() -> usize {
    crate::solver::direct::DEFAULT_DIRECT_CAP
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            precond: default_precond(),
            tolerance: default_tolerance(),
            restart: default_restart(),
            max_iterations: default_max_iterations(),
            amg_theta: None,
            freeze_p0: true,
            inner_tolerance: default_inner_tol(),
            direct_cap: default_direct_cap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub species: String,
    /// "intra" or "extra".
    pub region: String,
    /// Source density, mol/(m^3 s).
    pub value: f64,
    #[serde(default)]
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    /// "all" or "half_space_x".
    #[serde(default = "default_region_all")]
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_um: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    /// Probe coordinates in micrometers (2 or 3 components).
    #[serde(default)]
    pub points_um: Vec<Vec<f64>>,
    /// Quantities: species names and/or "phi".
    #[serde(default = "default_quantities")]
    pub quantities: Vec<String>,
}

fn default_quantities() -> Vec<String> {
    vec!["Na".into(), "K".into(), "Cl".into(), "phi".into()]
}

impl Default for ProbesConfig {
    fn default() -> Self {
        ProbesConfig { points_um: Vec::new(), quantities: default_quantities() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_out_dir() -> String {
    "out".into()
}
fn default_snapshot_every() -> usize {
    10
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            snapshot_every: default_snapshot_every(),
            snapshots: false,
        }
    }
}

/// The full scenario file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// "model_a_2d", "model_a_3d" or "imported".
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub membrane: MembraneConfig,
    /// Absent table means the default whole-membrane stimulus; set
    /// `stimulus.g_bar = 0` to switch it off.
    #[serde(default = "default_stimulus")]
    pub stimulus: StimulusConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default = "default_species_config")]
    pub species: Vec<SpeciesConfig>,
    #[serde(default)]
    pub pump: PumpConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub probes: ProbesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_scenario() -> String {
    "model_a_2d".into()
}
fn default_stimulus() -> StimulusConfig {
    StimulusConfig::default()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: default_scenario(),
            geometry: GeometryConfig::default(),
            time: TimeConfig::default(),
            membrane: MembraneConfig::default(),
            stimulus: default_stimulus(),
            constants: ConstantsConfig::default(),
            species: default_species_config(),
            pump: PumpConfig::default(),
            solver: SolverConfig::default(),
            sources: Vec::new(),
            probes: ProbesConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)
            .map_err(|e| config_err("file", format!("TOML parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Serialize the fully defaulted configuration.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self.scenario.as_str() {
            "model_a_2d" | "model_a_3d" => {
                if self.geometry.nx < 4 || self.geometry.nx % 4 != 0 {
                    return Err(config_err(
                        "geometry.nx",
                        format!(
                            "nx = {} must be a positive multiple of 4 so the membrane aligns \
                             with grid planes",
                            self.geometry.nx
                        ),
                    ));
                }
            }
            "imported" => {
                if self.geometry.mesh_path.is_none() {
                    return Err(config_err(
                        "geometry.mesh_path",
                        "imported scenarios need a mesh file",
                    ));
                }
                match self.geometry.mesh_unit.as_str() {
                    "m" | "um" => {}
                    other => {
                        return Err(config_err(
                            "geometry.mesh_unit",
                            format!("unknown unit `{other}` (expected m or um)"),
                        ))
                    }
                }
            }
            other => {
                return Err(config_err(
                    "scenario",
                    format!("unknown scenario `{other}`; valid: model_a_2d, model_a_3d, imported"),
                ))
            }
        }
        match self.membrane.model.as_str() {
            "hh" | "kir_nak" | "leak" => {}
            other => {
                return Err(config_err(
                    "membrane.model",
                    format!("unknown membrane model `{other}`; valid: hh, kir_nak, leak"),
                ))
            }
        }
        if self.time.dt_ms <= 0.0 {
            return Err(config_err("time.dt_ms", "time step must be positive"));
        }
        if self.time.ode_substeps < 1 {
            return Err(config_err("time.ode_substeps", "at least one gating substep is required"));
        }
        let species = self.ion_species();
        crate::membrane::check_electroneutral(&species)?;
        for sp in &species {
            if sp.d_intra <= 0.0 || sp.d_extra <= 0.0 {
                return Err(config_err(
                    &format!("species.{}", sp.name),
                    "diffusion coefficients must be positive",
                ));
            }
        }
        PrecondMode::from_str(&self.solver.precond)?;
        self.krylov_config().validate()?;
        match self.stimulus.region.as_str() {
            "all" => {}
            "half_space_x" => {
                if self.stimulus.x0_um.is_none() {
                    return Err(config_err("stimulus.x0_um", "half_space_x needs a threshold"));
                }
            }
            "labels" => {
                if self.stimulus.labels.is_empty() {
                    return Err(config_err("stimulus.labels", "label predicate needs labels"));
                }
            }
            other => {
                return Err(config_err(
                    "stimulus.region",
                    format!("unknown predicate `{other}`; valid: all, half_space_x, labels"),
                ))
            }
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !species.iter().any(|sp| sp.name == s.species) {
                return Err(config_err(
                    &format!("sources[{i}].species"),
                    format!("unknown species `{}`", s.species),
                ));
            }
            if s.region != "intra" && s.region != "extra" {
                return Err(config_err(
                    &format!("sources[{i}].region"),
                    "region must be intra or extra",
                ));
            }
        }
        self.source_set(&species)?
            .validate_electroneutral(&species.iter().map(|s| s.valence).collect::<Vec<_>>())?;
        Ok(())
    }

    pub fn ion_species(&self) -> Vec<IonSpecies> {
        self.species
            .iter()
            .map(|s| IonSpecies {
                name: s.name.clone(),
                valence: s.valence,
                d_intra: s.d_intra,
                d_extra: s.d_extra,
                c0_intra: s.c0_intra,
                c0_extra: s.c0_extra,
                g_leak: s.g_leak,
                g_bar: s.g_bar,
            })
            .collect()
    }

    pub fn physical_constants(&self) -> PhysicalConstants {
        PhysicalConstants {
            gas_constant: self.constants.gas_constant,
            temperature: self.constants.temperature,
            faraday: self.constants.faraday,
            membrane_capacitance: self.constants.capacitance,
            phi_rest: self.constants.phi_rest_mv * 1e-3,
        }
    }

    pub fn krylov_config(&self) -> KrylovConfig {
        KrylovConfig {
            restart: self.solver.restart,
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
        }
    }

    fn source_set(&self, species: &[IonSpecies]) -> Result<SourceSet> {
        let mut bulk = Vec::new();
        for (i, s) in self.sources.iter().enumerate() {
            let k = species.iter().position(|sp| sp.name == s.species).unwrap();
            let region = if s.region == "intra" { Region::Intra } else { Region::Extra };
            let support = match s.shape.as_str() {
                "all" => SourceSupport::All,
                "half_space_x" => {
                    let x0 = s.x0_um.ok_or_else(|| {
                        config_err(&format!("sources[{i}].x0_um"), "half_space_x needs a threshold")
                    })?;
                    SourceSupport::HalfSpaceX { x0: x0 * 1e-6 }
                }
                other => {
                    return Err(config_err(
                        &format!("sources[{i}].shape"),
                        format!("unknown shape `{other}`; valid: all, half_space_x"),
                    ))
                }
            };
            bulk.push(BulkSourceTerm {
                species: k,
                region,
                value: s.value,
                t_start: s.t_start_ms * 1e-3,
                t_end: s.t_end_ms * 1e-3,
                support,
            });
        }
        Ok(SourceSet { bulk, ..Default::default() })
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match self.scenario.as_str() {
            "model_a_2d" => build_model_a_mesh(self.geometry.nx, 2),
            "model_a_3d" => build_model_a_mesh(self.geometry.nx, 3),
            "imported" => {
                let path = self.geometry.mesh_path.as_ref().unwrap();
                let mesh = import_mesh(Path::new(path))?;
                if self.geometry.mesh_unit == "um" {
                    let scaled: Vec<[f64; 3]> = mesh
                        .vertices()
                        .iter()
                        .map(|v| [v[0] * 1e-6, v[1] * 1e-6, v[2] * 1e-6])
                        .collect();
                    let cells = (0..mesh.num_cells()).flat_map(|c| mesh.cell(c).to_vec()).collect();
                    let tags = (0..mesh.num_cells()).map(|c| mesh.cell_tag(c)).collect();
                    let labels = (0..mesh.num_cells()).map(|c| mesh.cell_label(c)).collect();
                    Mesh::new(mesh.dim(), scaled, cells, tags, labels)
                } else {
                    Ok(mesh)
                }
            }
            _ => unreachable!("validated"),
        }
    }

    /// Lower the configuration into a runnable scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let mesh = self.build_mesh()?;
        let dim = mesh.dim();
        let species = self.ion_species();
        let membrane = match self.membrane.model.as_str() {
            "hh" => MembraneModel::HodgkinHuxley,
            "kir_nak" => MembraneModel::KirNaK(KirNaKParams {
                rho_pump: self.pump.rho,
                p_na: self.pump.p_na,
                p_k: self.pump.p_k,
            }),
            "leak" => MembraneModel::Leak,
            _ => unreachable!("validated"),
        };
        let stimulus = if self.stimulus.g_bar == 0.0 {
            None
        } else {
            Some(Stimulus {
                g_bar: self.stimulus.g_bar,
                time_constant: self.stimulus.time_constant_ms * 1e-3,
                period: self.stimulus.period_ms * 1e-3,
                amplitude: self.stimulus.amplitude,
                predicate: match self.stimulus.region.as_str() {
                    "all" => SpatialPredicate::All,
                    "half_space_x" => {
                        SpatialPredicate::HalfSpaceX { x0: self.stimulus.x0_um.unwrap() * 1e-6 }
                    }
                    "labels" => SpatialPredicate::Labels(self.stimulus.labels.clone()),
                    _ => unreachable!("validated"),
                },
            })
        };
        let sources = self.source_set(&species)?;
        let mut solver = SolverSettings::for_dimension(dim);
        solver.mode = PrecondMode::from_str(&self.solver.precond)?;
        solver.krylov = self.krylov_config();
        if let Some(theta) = self.solver.amg_theta {
            solver.amg_theta = theta;
        }
        solver.freeze_p0 = self.solver.freeze_p0;
        solver.inner_tol = self.solver.inner_tolerance;
        solver.direct_cap = self.solver.direct_cap;
        Ok(Scenario {
            mesh,
            degree: self.geometry.degree,
            species,
            constants: self.physical_constants(),
            membrane,
            stimulus,
            phi_m0: self.membrane.phi_m0_mv * 1e-3,
            gating0: self.membrane.gating0,
            dt: self.time.dt_ms * 1e-3,
            n_steps: self.time.steps,
            n_ode: self.time.ode_substeps,
            solver,
            sources,
            initial: InitialFields::default(),
        })
    }

    /// Probe points in meters.
    pub fn probe_points(&self) -> Vec<[f64; 3]> {
        self.probes
            .points_um
            .iter()
            .map(|p| {
                [
                    p.first().copied().unwrap_or(0.0) * 1e-6,
                    p.get(1).copied().unwrap_or(0.0) * 1e-6,
                    p.get(2).copied().unwrap_or(0.0) * 1e-6,
                ]
            })
            .collect()
    }
}

/// Load and validate a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    ScenarioConfig::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_reproduces_defaults() {
        let cfg = ScenarioConfig::parse("scenario = \"model_a_2d\"").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let sp = cfg.ion_species();
        assert_eq!(sp[0].d_intra, 1.33e-9);
        assert_eq!(cfg.constants.capacitance, 0.02);
        assert_eq!(cfg.membrane.phi_m0_mv, -67.74);
        assert_eq!(cfg.time.ode_substeps, 25);
        let sc = cfg.to_scenario().unwrap();
        assert_eq!(sc.n_steps, 300);
        assert!((sc.phi_m0 + 0.06774).abs() < 1e-15);
    }

    #[test]
    fn electroneutrality_violation_is_rejected() {
        let text = r#"
scenario = "model_a_2d"
[[species]]
name = "Na"
valence = 1.0
d_intra = 1.33e-9
d_extra = 1.33e-9
c0_intra = 13.0
c0_extra = 100.0
[[species]]
name = "K"
valence = 1.0
d_intra = 1.96e-9
d_extra = 1.96e-9
c0_intra = 125.0
c0_extra = 4.0
[[species]]
name = "Cl"
valence = -1.0
d_intra = 2.03e-9
d_extra = 2.03e-9
c0_intra = 137.0
c0_extra = 104.0
"#;
        let err = ScenarioConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("electroneutrality"), "{err}");
    }

    #[test]
    fn unknown_membrane_model_lists_options() {
        let text = "scenario = \"model_a_2d\"\n[membrane]\nmodel = \"warp\"\n";
        let err = ScenarioConfig::parse(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hh") && msg.contains("kir_nak") && msg.contains("leak"), "{msg}");
    }

    #[test]
    fn nx_must_align_with_membrane() {
        let text = "scenario = \"model_a_2d\"\n[geometry]\nnx = 30\n";
        assert!(ScenarioConfig::parse(text).is_err());
    }

    #[test]
    fn dump_load_roundtrip_is_idempotent() {
        let mut cfg = ScenarioConfig::default();
        cfg.time.dt_ms = 0.1;
        cfg.solver.precond = "exact_block_cg".into();
        cfg.sources.push(SourceConfig {
            species: "K".into(),
            region: "extra".into(),
            value: 1.0,
            t_start_ms: 0.0,
            t_end_ms: 2.0,
            shape: "half_space_x".into(),
            x0_um: Some(0.5),
        });
        cfg.sources.push(SourceConfig {
            species: "Na".into(),
            region: "extra".into(),
            value: -1.0,
            t_start_ms: 0.0,
            t_end_ms: 2.0,
            shape: "half_space_x".into(),
            x0_um: Some(0.5),
        });
        let dumped = cfg.dump();
        let reloaded = ScenarioConfig::parse(&dumped).unwrap();
        assert_eq!(cfg, reloaded);
        assert_eq!(dumped, reloaded.dump());
    }

    #[test]
    fn model_b_style_sources_lower_correctly() {
        let text = r#"
scenario = "model_a_2d"
[[sources]]
species = "Na"
region = "extra"
value = -1.0
t_end_ms = 2.0
shape = "half_space_x"
x0_um = 0.5
[[sources]]
species = "K"
region = "extra"
value = 1.0
t_end_ms = 2.0
shape = "half_space_x"
x0_um = 0.5
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        let sc = cfg.to_scenario().unwrap();
        assert_eq!(sc.sources.bulk.len(), 2);
        assert_eq!(sc.sources.bulk[0].t_end, 2e-3);
    }

    #[test]
    fn unbalanced_sources_rejected() {
        let text = r#"
scenario = "model_a_2d"
[[sources]]
species = "Na"
region = "extra"
value = -1.0
t_end_ms = 2.0
"#;
        assert!(ScenarioConfig::parse(text).is_err());
    }
}
