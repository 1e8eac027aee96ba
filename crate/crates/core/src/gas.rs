//! Two-gas mixture algebra.
//!
//! Constituent 1 is natural gas and constituent 2 is hydrogen. Both follow
//! the ideal equation of state `p_m = sigma_m^2 rho_m`, and the mixture
//! pressure is the sum of partial pressures (Dalton). All pressures here are
//! in Pa; conversion to MPa happens at I/O boundaries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower heating value of natural gas, MJ/kg.
pub const NATURAL_GAS_ENERGY_MJ_KG: f64 = 44.2;
/// Lower heating value of hydrogen, MJ/kg.
pub const HYDROGEN_ENERGY_MJ_KG: f64 = 141.8;

/// Wave speeds and calorific values of the two constituents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasPair {
    /// Natural gas wave speed, m/s.
    pub sigma1: f64,
    /// Hydrogen wave speed, m/s.
    pub sigma2: f64,
    /// Natural gas energy content, MJ/kg.
    pub energy1: f64,
    /// Hydrogen energy content, MJ/kg.
    pub energy2: f64,
}

impl GasPair {
    pub fn new(sigma1: f64, sigma2: f64) -> Result<Self> {
        Self::with_energy(sigma1, sigma2, NATURAL_GAS_ENERGY_MJ_KG, HYDROGEN_ENERGY_MJ_KG)
    }

    pub fn with_energy(sigma1: f64, sigma2: f64, energy1: f64, energy2: f64) -> Result<Self> {
        let gas = GasPair { sigma1, sigma2, energy1, energy2 };
        gas.validate()?;
        Ok(gas)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > self.sigma1) {
            return Err(Error::Gas(format!(
                "wave speeds must satisfy sigma2 > sigma1 > 0 (got {}, {})",
                self.sigma1, self.sigma2
            )));
        }
        if !(self.energy1 > 0.0 && self.energy2 > 0.0) {
            return Err(Error::Gas("energy contents must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn sigma1_sq(&self) -> f64 {
        self.sigma1 * self.sigma1
    }

    #[inline]
    pub fn sigma2_sq(&self) -> f64 {
        self.sigma2 * self.sigma2
    }

    /// Squared mixture wave speed for hydrogen mass fraction `eta2`, no range check.
    #[inline]
    pub fn wave_speed_sq(&self, eta2: f64) -> f64 {
        self.sigma1_sq() * (1.0 - eta2) + self.sigma2_sq() * eta2
    }

    /// Mixture pressure from partial densities, Pa.
    #[inline]
    pub fn pressure(&self, rho1: f64, rho2: f64) -> f64 {
        self.sigma1_sq() * rho1 + self.sigma2_sq() * rho2
    }

    /// Partial densities realizing pressure `p` (Pa) at hydrogen mass fraction `eta2`.
    pub fn partials_from_pressure(&self, p: f64, eta2: f64) -> (f64, f64) {
        let rho = p / self.wave_speed_sq(eta2);
        (rho * (1.0 - eta2), rho * eta2)
    }

    /// Partial densities from total density and hydrogen volumetric fraction.
    pub fn partials_from_density_volumetric(&self, rho: f64, nu2: f64) -> (f64, f64) {
        let eta2 = self.mass_fraction_from_volumetric(nu2);
        (rho * (1.0 - eta2), rho * eta2)
    }

    /// Hydrogen volumetric fraction for a given hydrogen mass fraction.
    pub fn volumetric_fraction(&self, eta2: f64) -> f64 {
        let num = self.sigma2_sq() * eta2;
        num / (self.sigma1_sq() * (1.0 - eta2) + num)
    }

    /// Inverse of [`GasPair::volumetric_fraction`].
    pub fn mass_fraction_from_volumetric(&self, nu2: f64) -> f64 {
        let num = self.sigma1_sq() * nu2;
        num / (self.sigma2_sq() * (1.0 - nu2) + num)
    }

    /// Energy content per unit mass of a mixture, MJ/kg.
    #[inline]
    pub fn energy_per_mass(&self, eta2: f64) -> f64 {
        self.energy1 * (1.0 - eta2) + self.energy2 * eta2
    }
}

/// A mixture at one point, with every derived quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSample {
    pub rho1: f64,
    pub rho2: f64,
    pub rho: f64,
    /// Pa.
    pub pressure: f64,
    pub eta2: f64,
    pub nu2: f64,
    /// Local wave speed, m/s.
    pub sigma: f64,
}

impl MixtureSample {
    pub fn eta1(&self) -> f64 {
        1.0 - self.eta2
    }

    pub fn nu1(&self) -> f64 {
        1.0 - self.nu2
    }

    pub fn pressure_mpa(&self) -> f64 {
        self.pressure * 1e-6
    }
}

pub fn partials_to_equivalents(rho1: f64, rho2: f64, gas: &GasPair) -> Result<MixtureSample> {
    if !(rho1 >= 0.0 && rho2 >= 0.0) {
        return Err(Error::Gas(format!(
            "partial densities must be nonnegative (got {rho1}, {rho2})"
        )));
    }
    let rho = rho1 + rho2;
    if rho == 0.0 {
        return Err(Error::EmptyMixture);
    }
    let p1 = gas.sigma1_sq() * rho1;
    let p2 = gas.sigma2_sq() * rho2;
    let pressure = p1 + p2;
    let eta2 = rho2 / rho;
    Ok(MixtureSample {
        rho1,
        rho2,
        rho,
        pressure,
        eta2,
        nu2: p2 / pressure,
        sigma: (pressure / rho).sqrt(),
    })
}

/// Mixture wave speed for a hydrogen mass fraction in `[0, 1]`.
pub fn mixture_wave_speed(eta2: f64, gas: &GasPair) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta2) {
        return Err(Error::Gas(format!("mass fraction {eta2} outside [0, 1]")));
    }
    Ok(gas.wave_speed_sq(eta2).sqrt())
}

/// Nodal energy flow in GJ/s.
///
/// `inlet_flux` holds per-edge inlet mass flux (kg/m^2/s), `areas` the edge
/// cross sections, and `qbar_d` the signed outlet incidence block (edges by
/// non-slack nodes). The inflow into each node is weighted by the energy
/// content of the nodal mixture.
pub fn nodal_energy(
    inlet_flux: &DVector<f64>,
    areas: &DVector<f64>,
    qbar_d: &DMatrix<f64>,
    eta2: &DVector<f64>,
    gas: &GasPair,
) -> Result<DVector<f64>> {
    let edges = qbar_d.nrows();
    let nodes = qbar_d.ncols();
    if inlet_flux.len() != edges {
        return Err(Error::Dimension { expected: edges, got: inlet_flux.len() });
    }
    if areas.len() != edges {
        return Err(Error::Dimension { expected: edges, got: areas.len() });
    }
    if eta2.len() != nodes {
        return Err(Error::Dimension { expected: nodes, got: eta2.len() });
    }
    let mass_flow = areas.component_mul(inlet_flux);
    let inflow = qbar_d.abs().transpose() * mass_flow;
    Ok(DVector::from_iterator(
        nodes,
        inflow
            .iter()
            .zip(eta2.iter())
            .map(|(m, &e)| m * gas.energy_per_mass(e) * 1e-3),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn blend_gas() -> GasPair {
        GasPair::new(377.0, 2.8 * 377.0).unwrap()
    }

    #[test]
    fn pure_constituents() {
        let gas = blend_gas();
        let s = partials_to_equivalents(1.0, 0.0, &gas).unwrap();
        assert_eq!(s.eta2, 0.0);
        assert_eq!(s.nu2, 0.0);
        assert!(rel(s.sigma, gas.sigma1) < 1e-15);
        assert!(rel(s.pressure, gas.sigma1_sq()) < 1e-15);

        let s = partials_to_equivalents(0.0, 1.0, &gas).unwrap();
        assert_eq!(s.eta2, 1.0);
        assert_eq!(s.nu2, 1.0);
        assert!(rel(s.sigma, gas.sigma2) < 1e-15);
    }

    #[test]
    fn volumetric_fraction_closed_form() {
        let gas = GasPair::new(1.0, 4.0).unwrap();
        // 16 * 0.2 / (0.8 + 16 * 0.2)
        assert!((gas.volumetric_fraction(0.2) - 0.8).abs() < 1e-15);
        let s = partials_to_equivalents(0.8, 0.2, &gas).unwrap();
        assert!((s.nu2 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn wave_speed_values() {
        let gas = blend_gas();
        assert_eq!(mixture_wave_speed(0.0, &gas).unwrap(), 377.0);
        assert!(rel(mixture_wave_speed(1.0, &gas).unwrap(), 2.8 * 377.0) < 1e-15);
        let expected = 377.0 * ((1.0 + 2.8f64 * 2.8) / 2.0).sqrt();
        let got = mixture_wave_speed(0.5, &gas).unwrap();
        assert!(rel(got, expected) < 1e-14);
        assert!((got - 792.6).abs() < 0.1);
        assert!(mixture_wave_speed(1.1, &gas).is_err());
        assert!(mixture_wave_speed(-0.1, &gas).is_err());
    }

    #[test]
    fn empty_mixture_rejected() {
        let gas = blend_gas();
        assert!(matches!(partials_to_equivalents(0.0, 0.0, &gas), Err(Error::EmptyMixture)));
        assert!(partials_to_equivalents(-1.0, 1.0, &gas).is_err());
    }

    #[test]
    fn invalid_gas_pair() {
        assert!(GasPair::new(400.0, 300.0).is_err());
        assert!(GasPair::new(0.0, 300.0).is_err());
        assert!(GasPair::with_energy(300.0, 400.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn energy_single_pipe() {
        let gas = blend_gas();
        let q = DMatrix::from_row_slice(1, 1, &[1.0]);
        let area = DVector::from_element(1, 2.0);
        let flux = DVector::from_element(1, 50.0);
        let e = nodal_energy(&flux, &area, &q, &DVector::from_element(1, 0.0), &gas).unwrap();
        assert!(rel(e[0], 4.42) < 1e-14);
        let flux = DVector::from_element(1, 5.0);
        let e = nodal_energy(&flux, &area, &q, &DVector::from_element(1, 1.0), &gas).unwrap();
        assert!(rel(e[0], 1.418) < 1e-14);
        let e = nodal_energy(&DVector::zeros(1), &area, &q, &DVector::from_element(1, 0.3), &gas)
            .unwrap();
        assert_eq!(e[0], 0.0);
        assert!(nodal_energy(&DVector::zeros(2), &area, &q, &DVector::zeros(1), &gas).is_err());
    }

    proptest! {
        #[test]
        fn conversions_round_trip(rho1 in 1e-3f64..100.0, rho2 in 0.0f64..50.0,
                                  s1 in 100.0f64..500.0, ratio in 1.1f64..5.0) {
            let gas = GasPair::new(s1, s1 * ratio).unwrap();
            let s = partials_to_equivalents(rho1, rho2, &gas).unwrap();
            let (a, b) = gas.partials_from_pressure(s.pressure, s.eta2);
            prop_assert!(rel(a, rho1) < 1e-12);
            prop_assert!((b - rho2).abs() <= 1e-12 * rho2.max(1e-300) + 1e-300);
            let (c, d) = gas.partials_from_density_volumetric(s.rho, s.nu2);
            prop_assert!(rel(c, rho1) < 1e-12);
            prop_assert!((d - rho2).abs() <= 1e-12 * rho2.max(1e-12));
            // Dalton consistency
            prop_assert!(rel(s.pressure, gas.wave_speed_sq(s.eta2) * s.rho) < 1e-13);
            prop_assert!(s.eta2 <= s.nu2 + 1e-15);
            prop_assert!((0.0..=1.0).contains(&s.nu2));
        }

        #[test]
        fn volumetric_fraction_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let gas = blend_gas();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(gas.volumetric_fraction(lo) < gas.volumetric_fraction(hi));
        }
    }

    #[test]
    fn volumetric_fraction_endpoints() {
        let gas = blend_gas();
        assert_eq!(gas.volumetric_fraction(0.0), 0.0);
        assert_eq!(gas.volumetric_fraction(1.0), 1.0);
    }
}
