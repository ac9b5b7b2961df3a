//! Ionic species, physical constants, membrane channel models and gating
//! kinetics.
//!
//! Units: concentrations in mol/m^3 (numerically equal to mM), potentials in
//! volts, currents in A/m^2, conductances in S/m^2, time in seconds. All
//! per-node operations are pure and safe to evaluate concurrently.

use crate::error::{Error, Result};
use crate::mesh::Region;

/// Indices of the canonical species triple used by the channel models.
pub const NA: usize = 0;
pub const K: usize = 1;
pub const CL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalConstants {
    /// Gas constant, J/(K mol).
    pub gas_constant: f64,
    /// Absolute temperature, K.
    pub temperature: f64,
    /// Faraday constant, C/mol.
    pub faraday: f64,
    /// Membrane capacitance per unit area, F/m^2.
    pub membrane_capacitance: f64,
    /// Resting membrane potential, V.
    pub phi_rest: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gas_constant: 8.314,
            temperature: 300.0,
            faraday: 9.648e4,
            membrane_capacitance: 0.02,
            phi_rest: -65.0e-3,
        }
    }
}

impl PhysicalConstants {
    /// Thermal voltage RT/F, volts. Always derived, never stored.
    pub fn psi(&self) -> f64 {
        self.gas_constant * self.temperature / self.faraday
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IonSpecies {
    pub name: String,
    /// Valence z_k.
    pub valence: f64,
    /// Effective diffusion coefficient in the intracellular space, m^2/s.
    pub d_intra: f64,
    pub d_extra: f64,
    /// Initial concentrations, mol/m^3.
    pub c0_intra: f64,
    pub c0_extra: f64,
    /// Leak conductance, S/m^2.
    pub g_leak: f64,
    /// Hodgkin-Huxley maximum conductance, S/m^2.
    pub g_bar: f64,
}

impl IonSpecies {
    pub fn diffusion(&self, region: Region) -> f64 {
        match region {
            Region::Intra => self.d_intra,
            Region::Extra => self.d_extra,
        }
    }

    pub fn c0(&self, region: Region) -> f64 {
        match region {
            Region::Intra => self.c0_intra,
            Region::Extra => self.c0_extra,
        }
    }
}

/// The Na+/K+/Cl- triple with the default physical parameters.
pub fn default_species() -> Vec<IonSpecies> {
    vec![
        IonSpecies {
            name: "Na".into(),
            valence: 1.0,
            d_intra: 1.33e-9,
            d_extra: 1.33e-9,
            c0_intra: 12.0,
            c0_extra: 100.0,
            g_leak: 1.0,
            g_bar: 1200.0,
        },
        IonSpecies {
            name: "K".into(),
            valence: 1.0,
            d_intra: 1.96e-9,
            d_extra: 1.96e-9,
            c0_intra: 125.0,
            c0_extra: 4.0,
            g_leak: 4.0,
            g_bar: 360.0,
        },
        IonSpecies {
            name: "Cl".into(),
            valence: -1.0,
            d_intra: 2.03e-9,
            d_extra: 2.03e-9,
            c0_intra: 137.0,
            c0_extra: 104.0,
            g_leak: 0.0,
            g_bar: 0.0,
        },
    ]
}

/// Check bulk electroneutrality of the initial concentrations.
pub fn check_electroneutral(species: &[IonSpecies]) -> Result<()> {
    for region in [Region::Intra, Region::Extra] {
        let s: f64 = species.iter().map(|k| k.valence * k.c0(region)).sum();
        let scale: f64 = species.iter().map(|k| (k.valence * k.c0(region)).abs()).sum();
        if s.abs() > 1e-10 * scale.max(1.0) {
            return Err(Error::Config {
                field: format!("species.{}", region.name()),
                message: format!("initial concentrations violate electroneutrality: sum z_k c_k = {s:e}"),
            });
        }
    }
    Ok(())
}

/// Nernst reversal potential E_k = (RT / F z_k) ln(c_e / c_i).
pub fn reversal_potential(
    valence: f64,
    c_intra: f64,
    c_extra: f64,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if c_intra <= 0.0 || c_extra <= 0.0 {
        return Err(Error::Domain(format!(
            "nonpositive concentration in reversal potential: c_i = {c_intra:e}, c_e = {c_extra:e}"
        )));
    }
    Ok(constants.psi() / valence * (c_extra / c_intra).ln())
}

/// Capacitive-current splitting fractions alpha_r^k at one node.
///
/// `conc[k]` holds the region-r concentration of species k at the node.
pub fn alpha_fractions(
    species: &[IonSpecies],
    region: Region,
    conc: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let mut denom = 0.0;
    for (k, sp) in species.iter().enumerate() {
        denom += sp.diffusion(region) * sp.valence * sp.valence * conc[k];
    }
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "nonpositive denominator {denom:e} in capacitive splitting fractions"
        )));
    }
    for (k, sp) in species.iter().enumerate() {
        out[k] = sp.diffusion(region) * sp.valence * sp.valence * conc[k] / denom;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Hodgkin-Huxley kinetics
// ---------------------------------------------------------------------------

/// x / (1 - exp(-x/10)) with the removable singularity at x = 0 evaluated by
/// its series; smooth to machine precision across the switch.
fn vtrap10(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let s = x / 10.0;
        10.0 * (1.0 + 0.5 * s + s * s / 12.0)
    } else {
        x / (1.0 - (-x / 10.0).exp())
    }
}

/// Voltage-dependent opening/closing rates for the gating variables
/// w = (n, m, h), returned in 1/s. The argument is phi_M - phi_rest in volts.
///
/// These are the classic squid-axon rate functions expressed in the
/// depolarization-positive convention; their stationary states at the default
/// initial membrane potential reproduce the tabulated (n0, m0, h0).
pub fn hh_rates(delta_phi: f64) -> [[f64; 2]; 3] {
    let v = delta_phi * 1e3; // mV
    let alpha_n = 0.01 * vtrap10(v - 10.0);
    let beta_n = 0.125 * (-v / 80.0).exp();
    let alpha_m = 0.1 * vtrap10(v - 25.0);
    let beta_m = 4.0 * (-v / 18.0).exp();
    let alpha_h = 0.07 * (-v / 20.0).exp();
    let beta_h = 1.0 / (1.0 + (-(v - 30.0) / 10.0).exp());
    // 1/ms -> 1/s
    [
        [alpha_n * 1e3, beta_n * 1e3],
        [alpha_m * 1e3, beta_m * 1e3],
        [alpha_h * 1e3, beta_h * 1e3],
    ]
}

/// Gating state (n, m, h) per membrane node.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingState {
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub h: Vec<f64>,
}

impl GatingState {
    pub fn uniform(n_nodes: usize, w0: [f64; 3]) -> Self {
        GatingState {
            n: vec![w0[0]; n_nodes],
            m: vec![w0[1]; n_nodes],
            h: vec![w0[2]; n_nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }
}

/// One Rush-Larsen step: per node and component,
/// w <- w_inf + (w - w_inf) exp(-dt (alpha + beta)).
///
/// Exact for frozen rates; keeps each component in [0, 1].
pub fn rush_larsen_step(
    w: &mut GatingState,
    phi_m: &[f64],
    constants: &PhysicalConstants,
    dt_ode: f64,
) {
    assert!(dt_ode > 0.0, "ODE substep must be positive");
    assert_eq!(w.len(), phi_m.len());
    for i in 0..phi_m.len() {
        let rates = hh_rates(phi_m[i] - constants.phi_rest);
        for (c, gate) in [&mut w.n, &mut w.m, &mut w.h].into_iter().enumerate() {
            let (a, b) = (rates[c][0], rates[c][1]);
            let w_inf = a / (a + b);
            let decay = (-dt_ode * (a + b)).exp();
            gate[i] = w_inf + (gate[i] - w_inf) * decay;
        }
    }
}

// ---------------------------------------------------------------------------
// Channel current models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KirNaKParams {
    /// Maximum pump rate, mol/(m^2 s).
    pub rho_pump: f64,
    /// Intracellular Na+ pump threshold, mol/m^3.
    pub p_na: f64,
    /// Extracellular K+ pump threshold, mol/m^3.
    pub p_k: f64,
}

impl Default for KirNaKParams {
    fn default() -> Self {
        KirNaKParams { rho_pump: 1.115e-6, p_na: 10.0, p_k: 1.5 }
    }
}

/// Na/K exchange pump flux density, mol/(m^2 s); strictly increasing in both
/// intracellular sodium and extracellular potassium.
pub fn pump_flux(na_intra: f64, k_extra: f64, params: &KirNaKParams) -> f64 {
    let na15 = na_intra.powf(1.5);
    params.rho_pump * (na15 / (na15 + params.p_na.powf(1.5))) * (k_extra / (k_extra + params.p_k))
}

/// Inward-rectifier gating factor of the Kir channel.
///
/// `ek0` and `ke0` are the potassium reversal potential and extracellular
/// potassium concentration frozen at t = 0 for this node.
pub fn f_kir(k_extra: f64, ke0: f64, ek0: f64, e_k: f64, phi_m: f64) -> f64 {
    let a = 1.0 + (0.433f64).exp();
    let b = 1.0 + (-(0.1186 + ek0) / 0.0441).exp();
    let delta_phi_k = phi_m - e_k;
    let c = 1.0 + ((delta_phi_k + 0.0185) / 0.0425).exp();
    let d = 1.0 + (-(0.1186 + phi_m) / 0.0441).exp();
    a * b / (c * d) * (k_extra / ke0).sqrt()
}

/// Membrane model selector.
#[derive(Debug, Clone, PartialEq)]
pub enum MembraneModel {
    HodgkinHuxley,
    KirNaK(KirNaKParams),
    /// Kir-Na/K reduced to pure leak channels (rectifier forced to one, pump
    /// switched off).
    Leak,
}

/// Per-node inputs to a channel-current evaluation.
#[derive(Debug, Clone, Copy)]
pub struct NodeState<'a> {
    pub phi_m: f64,
    /// Intracellular concentrations per species at the node.
    pub conc_intra: &'a [f64],
    pub conc_extra: &'a [f64],
    /// Gating values (n, m, h); ignored by passive models.
    pub gates: [f64; 3],
    /// Sodium stimulus conductance at the node, S/m^2.
    pub g_stim: f64,
    /// Frozen t=0 references for the Kir rectifier.
    pub ek0: f64,
    pub ke0: f64,
}

/// Hodgkin-Huxley channel currents (I_Na, I_K, I_Cl) in A/m^2.
pub fn hh_currents(
    node: &NodeState,
    species: &[IonSpecies],
    constants: &PhysicalConstants,
) -> Result<[f64; 3]> {
    let e_na = reversal_potential(
        species[NA].valence,
        node.conc_intra[NA],
        node.conc_extra[NA],
        constants,
    )?;
    let e_k =
        reversal_potential(species[K].valence, node.conc_intra[K], node.conc_extra[K], constants)?;
    let e_cl = reversal_potential(
        species[CL].valence,
        node.conc_intra[CL],
        node.conc_extra[CL],
        constants,
    )?;
    let [n, m, h] = node.gates;
    let g_na = node.g_stim + species[NA].g_leak + species[NA].g_bar * m * m * m * h;
    let g_k = species[K].g_leak + species[K].g_bar * n * n * n * n;
    let g_cl = species[CL].g_leak;
    Ok([
        g_na * (node.phi_m - e_na),
        g_k * (node.phi_m - e_k),
        g_cl * (node.phi_m - e_cl),
    ])
}

/// Kir-Na/K channel currents (I_Na, I_K, I_Cl) in A/m^2.
pub fn kir_nak_currents(
    node: &NodeState,
    species: &[IonSpecies],
    constants: &PhysicalConstants,
    params: &KirNaKParams,
) -> Result<[f64; 3]> {
    let e_na = reversal_potential(
        species[NA].valence,
        node.conc_intra[NA],
        node.conc_extra[NA],
        constants,
    )?;
    let e_k =
        reversal_potential(species[K].valence, node.conc_intra[K], node.conc_extra[K], constants)?;
    let e_cl = reversal_potential(
        species[CL].valence,
        node.conc_intra[CL],
        node.conc_extra[CL],
        constants,
    )?;
    let j = pump_flux(node.conc_intra[NA], node.conc_extra[K], params);
    let fk = f_kir(node.conc_extra[K], node.ke0, node.ek0, e_k, node.phi_m);
    let f = constants.faraday;
    Ok([
        (node.g_stim + species[NA].g_leak) * (node.phi_m - e_na) + 3.0 * f * species[NA].valence * j,
        species[K].g_leak * (node.phi_m - e_k) * fk - 2.0 * f * species[K].valence * j,
        species[CL].g_leak * (node.phi_m - e_cl),
    ])
}

/// Channel currents for the configured model.
pub fn channel_currents(
    model: &MembraneModel,
    node: &NodeState,
    species: &[IonSpecies],
    constants: &PhysicalConstants,
) -> Result<[f64; 3]> {
    match model {
        MembraneModel::HodgkinHuxley => hh_currents(node, species, constants),
        MembraneModel::KirNaK(p) => kir_nak_currents(node, species, constants, p),
        MembraneModel::Leak => {
            let e_na = reversal_potential(
                species[NA].valence,
                node.conc_intra[NA],
                node.conc_extra[NA],
                constants,
            )?;
            let e_k = reversal_potential(
                species[K].valence,
                node.conc_intra[K],
                node.conc_extra[K],
                constants,
            )?;
            let e_cl = reversal_potential(
                species[CL].valence,
                node.conc_intra[CL],
                node.conc_extra[CL],
                constants,
            )?;
            Ok([
                (node.g_stim + species[NA].g_leak) * (node.phi_m - e_na),
                species[K].g_leak * (node.phi_m - e_k),
                species[CL].g_leak * (node.phi_m - e_cl),
            ])
        }
    }
}

// ---------------------------------------------------------------------------
// Stimulus
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SpatialPredicate {
    /// The whole membrane.
    All,
    /// Nodes with x-coordinate below the threshold (meters).
    HalfSpaceX { x0: f64 },
    /// Nodes belonging to interface facets with one of these labels.
    Labels(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    /// Peak conductance, S/m^2.
    pub g_bar: f64,
    /// Decay time constant, s.
    pub time_constant: f64,
    /// Repetition period, s.
    pub period: f64,
    /// Dimensionless multiplier on the peak conductance.
    pub amplitude: f64,
    pub predicate: SpatialPredicate,
}

impl Default for Stimulus {
    fn default() -> Self {
        Stimulus {
            g_bar: 40.0,
            time_constant: 0.002,
            period: 0.01,
            amplitude: 1.0,
            predicate: SpatialPredicate::All,
        }
    }
}

impl Stimulus {
    /// Sodium stimulus conductance at time t for a node where the spatial
    /// predicate holds; zero elsewhere.
    pub fn value(&self, t: f64, active: bool) -> f64 {
        if !active {
            return 0.0;
        }
        let phase = t.rem_euclid(self.period);
        self.amplitude * self.g_bar * (-phase / self.time_constant).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constants() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn psi_value() {
        let c = constants();
        assert!((c.psi() - 8.314 * 300.0 / 9.648e4).abs() < 1e-15);
        assert!((c.psi() - 0.025851).abs() < 1e-6);
    }

    #[test]
    fn default_species_electroneutral() {
        let sp = default_species();
        check_electroneutral(&sp).unwrap();
        // 12 + 125 - 137 = 0 and 100 + 4 - 104 = 0
        assert_eq!(sp[NA].c0_intra + sp[K].c0_intra - sp[CL].c0_intra, 0.0);
        assert_eq!(sp[NA].c0_extra + sp[K].c0_extra - sp[CL].c0_extra, 0.0);
    }

    #[test]
    fn electroneutrality_violation_detected() {
        let mut sp = default_species();
        sp[NA].c0_intra = 13.0;
        assert!(check_electroneutral(&sp).is_err());
    }

    #[test]
    fn reversal_potential_values() {
        let c = constants();
        assert_eq!(reversal_potential(1.0, 5.0, 5.0, &c).unwrap(), 0.0);
        let ek = reversal_potential(1.0, 125.0, 4.0, &c).unwrap();
        let want = c.psi() * (4.0f64 / 125.0).ln();
        assert!((ek - want).abs() < 1e-15);
        assert!((ek + 0.08898).abs() < 2e-5, "E_K = {ek}");
        let ecl = reversal_potential(-1.0, 137.0, 104.0, &c).unwrap();
        let want = -c.psi() * (104.0f64 / 137.0).ln();
        assert!((ecl - want).abs() < 1e-15);
        assert!((ecl - 0.0071246).abs() < 5e-6, "E_Cl = {ecl}");
        assert!(reversal_potential(1.0, 0.0, 4.0, &c).is_err());
        assert!(reversal_potential(1.0, 4.0, -1.0, &c).is_err());
    }

    #[test]
    fn alpha_fraction_values() {
        let sp = default_species();
        let conc = [12.0, 125.0, 137.0];
        let mut a = [0.0; 3];
        alpha_fractions(&sp, Region::Intra, &conc, &mut a).unwrap();
        let sum: f64 = a.iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
        let want_k = 1.96e-9 * 125.0 / (1.33e-9 * 12.0 + 1.96e-9 * 125.0 + 2.03e-9 * 137.0);
        assert!((a[K] - want_k).abs() < 1e-14);
        assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn alpha_single_species() {
        let sp = vec![default_species().remove(0)];
        let mut a = [0.0; 1];
        alpha_fractions(&sp, Region::Extra, &[3.0], &mut a).unwrap();
        assert_eq!(a[0], 1.0);
    }

    #[test]
    fn alpha_zero_denominator() {
        let sp = default_species();
        let mut a = [0.0; 3];
        assert!(alpha_fractions(&sp, Region::Intra, &[0.0, 0.0, 0.0], &mut a).is_err());
    }

    #[test]
    fn hh_rates_steady_state_matches_table() {
        // at phi_M = -67.74 mV and phi_rest = -65 mV the stationary gates
        // should reproduce the tabulated initial values
        let rates = hh_rates(-2.74e-3);
        let w_inf: Vec<f64> = rates.iter().map(|[a, b]| a / (a + b)).collect();
        assert!((w_inf[0] - 0.276).abs() < 2e-3, "n_inf = {}", w_inf[0]);
        assert!((w_inf[1] - 0.0379).abs() < 5e-4, "m_inf = {}", w_inf[1]);
        assert!((w_inf[2] - 0.688).abs() < 2e-3, "h_inf = {}", w_inf[2]);
    }

    #[test]
    fn hh_rate_singularities_are_removable() {
        // alpha_m has its removable singularity where v - 25 = 0
        let at = hh_rates(90.0e-3 / 3.6); // v = 25 mV exactly
        let am = at[1][0];
        assert!((am - 1.0e3).abs() < 1e-9, "alpha_m at the singular point: {am}");
        // continuity against +-1e-6 mV offsets, compared in 1/ms
        for off in [-1e-6, 1e-6] {
            let v = (25.0 + off) * 1e-3;
            let a = hh_rates(v)[1][0];
            let series = 1e3 * (1.0 + 0.5 * (off / 10.0) + (off / 10.0) * (off / 10.0) / 12.0);
            assert!(
                ((a - series) / series).abs() < 1e-9,
                "alpha_m near singularity: {a} vs {series}"
            );
        }
        // alpha_n singular at v = 10 mV
        let an = hh_rates(10.0e-3)[0][0];
        assert!((an - 0.1e3).abs() < 1e-10);
    }

    #[test]
    fn beta_h_saturates() {
        let r = hh_rates(10.0); // enormous depolarization
        assert!((r[2][1] - 1.0e3).abs() < 1e-6);
    }

    #[test]
    fn rush_larsen_small_step_is_first_order() {
        let c = constants();
        let mut w = GatingState::uniform(1, [0.3, 0.1, 0.6]);
        let phi = vec![-0.06];
        let w0 = w.clone();
        rush_larsen_step(&mut w, &phi, &c, 1e-12);
        assert!((w.n[0] - w0.n[0]).abs() < 1e-8);
        assert!((w.m[0] - w0.m[0]).abs() < 1e-8);
        assert!((w.h[0] - w0.h[0]).abs() < 1e-8);
    }

    #[test]
    fn rush_larsen_vs_rk4_reference() {
        // one RL step against a 1000-substep RK4 integration at frozen phi_M
        let c = constants();
        let phi = -0.05;
        let dt = 0.05e-3 / 25.0;
        let mut w = GatingState::uniform(1, [0.276, 0.0379, 0.688]);
        rush_larsen_step(&mut w, &[phi], &c, dt);
        let rates = hh_rates(phi - c.phi_rest);
        let mut y = [0.276, 0.0379, 0.688];
        let n_sub = 1000;
        let h = dt / n_sub as f64;
        for _ in 0..n_sub {
            let f = |y: [f64; 3]| -> [f64; 3] {
                [
                    rates[0][0] * (1.0 - y[0]) - rates[0][1] * y[0],
                    rates[1][0] * (1.0 - y[1]) - rates[1][1] * y[1],
                    rates[2][0] * (1.0 - y[2]) - rates[2][1] * y[2],
                ]
            };
            let k1 = f(y);
            let add = |y: [f64; 3], k: [f64; 3], s: f64| {
                [y[0] + s * k[0], y[1] + s * k[1], y[2] + s * k[2]]
            };
            let k2 = f(add(y, k1, 0.5 * h));
            let k3 = f(add(y, k2, 0.5 * h));
            let k4 = f(add(y, k3, h));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        for (got, want) in [w.n[0], w.m[0], w.h[0]].iter().zip(y) {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "Rush-Larsen vs RK4: {got} vs {want}"
            );
        }
    }

    #[test]
    fn rush_larsen_symmetric_rates_converge_to_half() {
        // with alpha = beta the fixed point is 1/2; RL follows exp(-2 a t)
        // exactly: check using a synthetic rate by integrating the generic
        // formula manually
        let a = 120.0f64;
        let w0 = 0.9f64;
        let dt = 1e-3f64;
        let w_inf = 0.5;
        let exact = w_inf + (w0 - w_inf) * (-2.0 * a * dt).exp();
        let got = w_inf + (w0 - w_inf) * (-dt * (a + a)).exp();
        assert_eq!(got, exact);
        assert!(got < w0 && got > 0.5);
    }

    #[test]
    fn hh_current_zero_driving_force() {
        let sp = default_species();
        let c = constants();
        let e_cl = reversal_potential(-1.0, 137.0, 104.0, &c).unwrap();
        let ci = [12.0, 125.0, 137.0];
        let ce = [100.0, 4.0, 104.0];
        let mut sp2 = sp.clone();
        sp2[CL].g_leak = 2.0; // make the Cl channel visible
        let node = NodeState {
            phi_m: e_cl,
            conc_intra: &ci,
            conc_extra: &ce,
            gates: [0.3, 0.1, 0.6],
            g_stim: 0.0,
            ek0: 0.0,
            ke0: 4.0,
        };
        let i = hh_currents(&node, &sp2, &c).unwrap();
        assert!(i[CL].abs() < 1e-14);
        // with the tabulated zero Cl leak the current vanishes identically
        let i = hh_currents(&node, &sp, &c).unwrap();
        assert_eq!(i[CL], 0.0);
    }

    #[test]
    fn hh_current_gates_closed() {
        let sp = default_species();
        let c = constants();
        let ci = [12.0, 125.0, 137.0];
        let ce = [100.0, 4.0, 104.0];
        let phi = -0.06774;
        let node = NodeState {
            phi_m: phi,
            conc_intra: &ci,
            conc_extra: &ce,
            gates: [0.0, 0.0, 0.0],
            g_stim: 0.0,
            ek0: 0.0,
            ke0: 4.0,
        };
        let i = hh_currents(&node, &sp, &c).unwrap();
        let e_na = reversal_potential(1.0, 12.0, 100.0, &c).unwrap();
        let e_k = reversal_potential(1.0, 125.0, 4.0, &c).unwrap();
        assert!((i[NA] - sp[NA].g_leak * (phi - e_na)).abs() < 1e-14);
        assert!((i[K] - sp[K].g_leak * (phi - e_k)).abs() < 1e-14);
    }

    #[test]
    fn pump_flux_value_and_monotonicity() {
        let p = KirNaKParams::default();
        let j = pump_flux(12.0, 4.0, &p);
        let na15 = 12.0f64.powf(1.5);
        let want = 1.115e-6 * (na15 / (na15 + 10.0f64.powf(1.5))) * (4.0 / 5.5);
        assert!((j - want).abs() < 1e-18);
        assert!((j - 4.6e-7).abs() < 2e-8, "j_pump = {j:e}");
        // strictly increasing in both arguments on a grid
        let mut prev = 0.0;
        for na in [1.0, 5.0, 10.0, 20.0, 50.0] {
            let v = pump_flux(na, 4.0, &p);
            assert!(v > prev);
            prev = v;
        }
        prev = 0.0;
        for ke in [0.5, 1.0, 4.0, 10.0, 30.0] {
            let v = pump_flux(12.0, ke, &p);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn kir_reduces_to_leak() {
        let sp = default_species();
        let c = constants();
        let ci = [12.0, 125.0, 137.0];
        let ce = [100.0, 4.0, 104.0];
        let e_k = reversal_potential(1.0, 125.0, 4.0, &c).unwrap();
        let node = NodeState {
            phi_m: -0.06774,
            conc_intra: &ci,
            conc_extra: &ce,
            gates: [0.0; 3],
            g_stim: 0.0,
            ek0: e_k,
            ke0: 4.0,
        };
        let leak = channel_currents(&MembraneModel::Leak, &node, &sp, &c).unwrap();
        // zero pump rate and rectifier forced to 1 must match the leak model
        let params = KirNaKParams { rho_pump: 0.0, ..Default::default() };
        let kir = kir_nak_currents(&node, &sp, &c, &params).unwrap();
        let fk = f_kir(ce[K], 4.0, e_k, e_k, node.phi_m);
        assert!((kir[NA] - leak[NA]).abs() < 1e-14);
        assert!((kir[CL] - leak[CL]).abs() < 1e-14);
        assert!((kir[K] - leak[K] * fk).abs() < 1e-14);
    }

    #[test]
    fn f_kir_positive_on_grid() {
        let c = constants();
        let ek0 = reversal_potential(1.0, 125.0, 4.0, &c).unwrap();
        for phi_mv in (-200..=100).step_by(10) {
            let phi = phi_mv as f64 * 1e-3;
            for ke in [0.1f64, 1.0, 4.0, 20.0, 100.0] {
                let e_k = c.psi() * (ke / 125.0).ln();
                let f = f_kir(ke, 4.0, ek0, e_k, phi);
                assert!(f > 0.0, "f_kir({ke}, {phi}) = {f}");
            }
        }
    }

    #[test]
    fn currents_affine_in_phi_m() {
        // three-point collinearity for frozen concentrations and gates
        let sp = default_species();
        let c = constants();
        let ci = [12.0, 125.0, 137.0];
        let ce = [100.0, 4.0, 104.0];
        let ek0 = reversal_potential(1.0, 125.0, 4.0, &c).unwrap();
        let eval = |model: &MembraneModel, phi: f64| {
            let node = NodeState {
                phi_m: phi,
                conc_intra: &ci,
                conc_extra: &ce,
                gates: [0.3, 0.1, 0.6],
                g_stim: 7.0,
                ek0,
                ke0: 4.0,
            };
            channel_currents(model, &node, &sp, &c).unwrap()
        };
        for model in [
            MembraneModel::HodgkinHuxley,
            MembraneModel::Leak,
            MembraneModel::KirNaK(KirNaKParams::default()),
        ] {
            let (p0, p1, p2) = (-0.08, -0.02, 0.04);
            let (i0, i1, i2) = (eval(&model, p0), eval(&model, p1), eval(&model, p2));
            for k in 0..3 {
                if model == MembraneModel::KirNaK(KirNaKParams::default()) && k == K {
                    continue; // the rectifier factor depends on phi_M
                }
                let mid = 0.5 * (i0[k] + i2[k]);
                assert!(
                    (i1[k] - mid).abs() <= 1e-10 * (1.0 + mid.abs()),
                    "{model:?} species {k} not affine"
                );
            }
        }
    }

    #[test]
    fn stimulus_profile() {
        let s = Stimulus::default();
        assert_eq!(s.value(0.0, true), 40.0);
        assert_eq!(s.value(0.0, false), 0.0);
        assert!((s.value(s.period, true) - 40.0).abs() < 1e-12);
        let at_a = s.value(0.002, true);
        assert!((at_a - 40.0 / std::f64::consts::E).abs() < 1e-12);
        assert!((at_a - 14.715).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn gates_stay_in_unit_interval(
            phis in proptest::collection::vec(-0.25f64..0.15, 1..40),
            w0 in (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
            dt in 1e-7f64..1e-3,
        ) {
            let c = constants();
            let mut w = GatingState::uniform(1, [w0.0, w0.1, w0.2]);
            for phi in phis {
                rush_larsen_step(&mut w, &[phi], &c, dt);
                prop_assert!((0.0..=1.0).contains(&w.n[0]));
                prop_assert!((0.0..=1.0).contains(&w.m[0]));
                prop_assert!((0.0..=1.0).contains(&w.h[0]));
            }
        }

        #[test]
        fn alpha_fractions_sum_to_one(
            c0 in 0.1f64..500.0, c1 in 0.1f64..500.0, c2 in 0.1f64..500.0,
        ) {
            let sp = default_species();
            let mut a = [0.0; 3];
            alpha_fractions(&sp, Region::Intra, &[c0, c1, c2], &mut a).unwrap();
            let s: f64 = a.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
