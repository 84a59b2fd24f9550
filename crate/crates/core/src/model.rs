//! Physical model of two Raman-driven ions, each in its own cavity, whose
//! output modes are mixed on a beam splitter in front of two detectors.
//!
//! All rates and energies are in units of the cavity coupling `g`, times in
//! units of `1/g`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    composite_dims, embed, BasisIndex, Level, Operator, StateVector, CAV1, CAV2, I, ION1, ION2,
    ONE,
};

/// Which no-jump generator drives the ions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianChoice {
    /// Adiabatic form when both spontaneous rates vanish, full form otherwise.
    #[default]
    Auto,
    /// Three-level Hamiltonian with cavity and spontaneous damping.
    Full,
    /// Far-detuned two-level reduction with the upper level eliminated.
    Adiabatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub g: f64,
    pub omega: f64,
    pub delta: f64,
    /// Half the cavity energy decay rate; each cavity leaks at `2κ`.
    pub kappa: f64,
    pub gamma_ca: f64,
    pub gamma_cb: f64,
    /// Detection efficiency.
    pub eta: f64,
    /// Beam-splitter ratio R/T.
    pub lambda: f64,
    /// Manipulation phase applied between the two detections.
    pub phi: f64,
    pub dt: f64,
    /// Waiting window for the first photon.
    pub t_wait: f64,
    /// Waiting window for the second photon.
    pub t_wait2: f64,
    pub n_max: usize,
    pub hamiltonian: HamiltonianChoice,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            omega: 1.0,
            delta: 20.0,
            kappa: 10.0,
            gamma_ca: 0.0,
            gamma_cb: 0.0,
            eta: 1.0,
            lambda: 1.0,
            phi: 0.0,
            dt: 0.01,
            t_wait: 100.0,
            t_wait2: 10_000.0,
            n_max: 1,
            hamiltonian: HamiltonianChoice::Auto,
        }
    }
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("g", self.g),
            ("omega", self.omega),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("gamma_ca", self.gamma_ca),
            ("gamma_cb", self.gamma_cb),
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("phi", self.phi),
            ("dt", self.dt),
            ("t_wait", self.t_wait),
            ("t_wait2", self.t_wait2),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, v, "must be finite"));
            }
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("gamma_ca", self.gamma_ca),
            ("gamma_cb", self.gamma_cb),
        ] {
            if v < 0.0 {
                return Err(invalid(name, v, "rates must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid("eta", self.eta, "must lie in [0, 1]"));
        }
        if self.lambda <= 0.0 {
            return Err(invalid("lambda", self.lambda, "must be positive"));
        }
        if !(0.0..=TAU).contains(&self.phi) {
            return Err(invalid("phi", self.phi, "must lie in [0, 2π]"));
        }
        if self.dt <= 0.0 {
            return Err(invalid("dt", self.dt, "must be positive"));
        }
        if self.t_wait <= 0.0 {
            return Err(invalid("t_wait", self.t_wait, "must be positive"));
        }
        if self.t_wait2 <= 0.0 {
            return Err(invalid("t_wait2", self.t_wait2, "must be positive"));
        }
        if !(1..=2).contains(&self.n_max) {
            return Err(invalid("n_max", self.n_max as f64, "must be 1 or 2"));
        }
        Ok(())
    }

    /// Beam-splitter reflectivity `R = λ/(1+λ)`.
    pub fn reflectivity(&self) -> f64 {
        self.lambda / (1.0 + self.lambda)
    }

    /// Beam-splitter transmissivity `T = 1/(1+λ)`.
    pub fn transmissivity(&self) -> f64 {
        1.0 / (1.0 + self.lambda)
    }

    pub fn dims(&self) -> Vec<usize> {
        composite_dims(self.n_max)
    }

    pub fn uses_adiabatic(&self) -> bool {
        match self.hamiltonian {
            HamiltonianChoice::Auto => self.gamma_ca == 0.0 && self.gamma_cb == 0.0,
            HamiltonianChoice::Full => false,
            HamiltonianChoice::Adiabatic => true,
        }
    }
}

/// Single-ion and single-cavity operators lifted to the composite space.
struct Embedded {
    dims: Vec<usize>,
    c: [Operator; 2],
}

impl Embedded {
    fn new(n_max: usize) -> Self {
        let dims = composite_dims(n_max);
        let a = Operator::annihilation(n_max);
        let c = [
            embed(&a, CAV1, &dims).expect("cavity dims"),
            embed(&a, CAV2, &dims).expect("cavity dims"),
        ];
        Self { dims, c }
    }

    /// `|to⟩⟨from|` on ion `ion` (0 or 1).
    fn ion(&self, ion: usize, to: Level, from: Level) -> Operator {
        let sub = [ION1, ION2][ion];
        embed(
            &Operator::transition(3, to.index(), from.index()),
            sub,
            &self.dims,
        )
        .expect("ion dims")
    }

    fn number(&self, cavity: usize) -> Operator {
        &self.c[cavity].adjoint() * &self.c[cavity]
    }
}

fn real(x: f64) -> Complex64 {
    Complex64::from(x)
}

/// Hermitian ion–cavity Hamiltonian in the interaction picture.
pub fn build_hamiltonian(p: &SystemParams) -> Operator {
    let e = Embedded::new(p.n_max);
    let mut h = Operator::zeros(&e.dims);
    for ion in 0..2 {
        let cc = e.ion(ion, Level::C, Level::C);
        let cb_c = &e.ion(ion, Level::C, Level::B) * &e.c[ion];
        let ca = e.ion(ion, Level::C, Level::A);
        h = &h + &cc.scale(real(p.delta));
        h = &h + &(&cb_c + &cb_c.adjoint()).scale(real(p.g));
        h = &h + &(&ca + &ca.adjoint()).scale(real(p.omega));
    }
    h
}

/// Non-Hermitian no-jump generator with cavity and spontaneous damping.
pub fn build_h_eff(p: &SystemParams) -> Operator {
    let e = Embedded::new(p.n_max);
    let mut damping = Operator::zeros(&e.dims);
    for ion in 0..2 {
        damping = &damping + &e.number(ion).scale(real(p.kappa));
        damping = &damping + &e.ion(ion, Level::C, Level::C).scale(real(p.gamma_ca + p.gamma_cb));
    }
    &build_hamiltonian(p) - &damping.scale(I)
}

/// Far-detuned reduction with the upper level eliminated, Stark shifts
/// taken photon-number independent.
pub fn build_h_eff_adiabatic(p: &SystemParams) -> Operator {
    let e = Embedded::new(p.n_max);
    let coupling = p.g * p.omega / p.delta;
    let stark_b = p.g * p.g / p.delta;
    let stark_a = p.omega * p.omega / p.delta;
    let mut h = Operator::zeros(&e.dims);
    for ion in 0..2 {
        let ab_c = &e.ion(ion, Level::A, Level::B) * &e.c[ion];
        h = &h + &(&ab_c + &ab_c.adjoint()).scale(real(coupling));
        h = &h + &e.ion(ion, Level::B, Level::B).scale(real(stark_b));
        h = &h + &e.ion(ion, Level::A, Level::A).scale(real(stark_a));
        h = &h - &e.number(ion).scale(Complex64::new(0.0, p.kappa));
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelTag {
    D1,
    D2,
    LostD1,
    LostD2,
    SpontAIon1,
    SpontBIon1,
    SpontAIon2,
    SpontBIon2,
}

impl ChannelTag {
    pub fn is_recorded(self) -> bool {
        matches!(self, ChannelTag::D1 | ChannelTag::D2)
    }

    pub fn is_detector_mode(self) -> bool {
        matches!(
            self,
            ChannelTag::D1 | ChannelTag::D2 | ChannelTag::LostD1 | ChannelTag::LostD2
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelTag::D1 => "D1",
            ChannelTag::D2 => "D2",
            ChannelTag::LostD1 => "LOST_D1",
            ChannelTag::LostD2 => "LOST_D2",
            ChannelTag::SpontAIon1 => "SPONT_A_ION1",
            ChannelTag::SpontBIon1 => "SPONT_B_ION1",
            ChannelTag::SpontAIon2 => "SPONT_A_ION2",
            ChannelTag::SpontBIon2 => "SPONT_B_ION2",
        }
    }
}

/// A jump operator with its rate folded into the amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    pub tag: ChannelTag,
    pub operator: Operator,
    pub recorded: bool,
}

impl JumpChannel {
    fn new(tag: ChannelTag, operator: Operator) -> Self {
        Self {
            tag,
            operator,
            recorded: tag.is_recorded(),
        }
    }

    /// `L†L`.
    pub fn rate_operator(&self) -> Operator {
        &self.operator.adjoint() * &self.operator
    }
}

/// Detector-mode annihilation operators `(d1, d2)` for the imbalanced splitter.
pub fn detector_modes(p: &SystemParams) -> (Operator, Operator) {
    let e = Embedded::new(p.n_max);
    let (r, t) = (p.reflectivity().sqrt(), p.transmissivity().sqrt());
    let d1 = &e.c[0].scale(real(r)) + &e.c[1].scale(real(t));
    let d2 = &e.c[0].scale(real(t)) - &e.c[1].scale(real(r));
    (d1, d2)
}

fn detector_channels(p: &SystemParams) -> Vec<JumpChannel> {
    let (d1, d2) = detector_modes(p);
    let mut out = vec![
        JumpChannel::new(ChannelTag::D1, d1.scale(real((2.0 * p.kappa * p.eta).sqrt()))),
        JumpChannel::new(ChannelTag::D2, d2.scale(real((2.0 * p.kappa * p.eta).sqrt()))),
    ];
    if p.eta < 1.0 {
        let lost = real((2.0 * p.kappa * (1.0 - p.eta)).sqrt());
        out.push(JumpChannel::new(ChannelTag::LostD1, d1.scale(lost)));
        out.push(JumpChannel::new(ChannelTag::LostD2, d2.scale(lost)));
    }
    out
}

/// Every jump channel of the full model. Lost-photon channels appear only
/// when `η < 1`, spontaneous channels only for nonzero rates.
pub fn build_jump_channels(p: &SystemParams) -> Vec<JumpChannel> {
    let e = Embedded::new(p.n_max);
    let mut out = detector_channels(p);
    let spont = [
        (0, Level::A, p.gamma_ca, ChannelTag::SpontAIon1),
        (0, Level::B, p.gamma_cb, ChannelTag::SpontBIon1),
        (1, Level::A, p.gamma_ca, ChannelTag::SpontAIon2),
        (1, Level::B, p.gamma_cb, ChannelTag::SpontBIon2),
    ];
    for (ion, to, rate, tag) in spont {
        if rate > 0.0 {
            let op = e.ion(ion, to, Level::C).scale(real((2.0 * rate).sqrt()));
            out.push(JumpChannel::new(tag, op));
        }
    }
    out
}

/// Instantaneous relative phase: `e^{iφ}` on every basis state with ion 1 in `|a⟩`.
pub fn phase_gate(phi: f64, n_max: usize) -> Operator {
    let dims = composite_dims(n_max);
    let d: usize = dims.iter().product();
    let phase = Complex64::from_polar(1.0, phi);
    let diag: Vec<Complex64> = (0..d)
        .map(|k| {
            if BasisIndex::unflatten(k, n_max).ion1 == Level::A {
                phase
            } else {
                ONE
            }
        })
        .collect();
    Operator::diagonal(&dims, &diag).expect("diagonal length")
}

/// `|aa⟩|00⟩`.
pub fn initial_state(p: &SystemParams) -> StateVector {
    let dims = p.dims();
    StateVector::basis(
        &dims,
        BasisIndex::new(Level::A, Level::A, 0, 0).flatten(p.n_max),
    )
}

/// Everything a trajectory stage needs: the generator, its Hermitian part,
/// and the matching jump channels, with `h_eff = hamiltonian − (i/2)ΣL†L`.
#[derive(Clone, Debug)]
pub struct StageModel {
    pub hamiltonian: Operator,
    pub h_eff: Operator,
    pub channels: Vec<JumpChannel>,
    pub adiabatic: bool,
}

impl StageModel {
    pub fn new(p: &SystemParams) -> Result<Self> {
        p.validate()?;
        if p.uses_adiabatic() {
            // The reduced generator never populates |c⟩, so spontaneous
            // channels are dropped to keep the generator/channel identity.
            let h_eff = build_h_eff_adiabatic(p);
            Ok(Self {
                hamiltonian: h_eff.hermitian_part(),
                h_eff,
                channels: detector_channels(p),
                adiabatic: true,
            })
        } else {
            Ok(Self {
                hamiltonian: build_hamiltonian(p),
                h_eff: build_h_eff(p),
                channels: build_jump_channels(p),
                adiabatic: false,
            })
        }
    }

    /// Assemble from explicit parts; used to inject inconsistent channel sets in checks.
    pub fn from_parts(hamiltonian: Operator, channels: Vec<JumpChannel>, h_eff: Operator) -> Self {
        Self {
            hamiltonian,
            h_eff,
            channels,
            adiabatic: false,
        }
    }

    pub fn dims(&self) -> &[usize] {
        self.h_eff.dims()
    }

    /// `Σ L†L` over all channels.
    pub fn total_rate_operator(&self) -> Operator {
        let mut sum = Operator::zeros(self.dims());
        for ch in &self.channels {
            sum = &sum + &ch.rate_operator();
        }
        sum
    }

    /// Largest entrywise deviation of `h_eff − hamiltonian` from `−(i/2)ΣL†L`.
    pub fn consistency_error(&self) -> f64 {
        let lhs = &self.h_eff - &self.hamiltonian;
        let rhs = self.total_rate_operator().scale(Complex64::new(0.0, -0.5));
        lhs.max_abs_diff(&rhs)
    }
}

/// Population operator for one composite basis state.
pub fn projector(label: BasisIndex, n_max: usize) -> Operator {
    let dims = composite_dims(n_max);
    let k = label.flatten(n_max);
    let mut op = Operator::zeros(&dims);
    op.set(k, k, ONE);
    op
}

/// Photon-number operator of one cavity (0 or 1).
pub fn cavity_number(cavity: usize, n_max: usize) -> Operator {
    Embedded::new(n_max).number(cavity)
}

/// `Σᵢ |level⟩ᵢᵢ⟨level|` over both ions.
pub fn level_population(level: Level, n_max: usize) -> Operator {
    let e = Embedded::new(n_max);
    &e.ion(0, level, level) + &e.ion(1, level, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{apply, expectation, norm2, ZERO};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn ideal() -> SystemParams {
        SystemParams::default()
    }

    fn idx(i1: Level, i2: Level, c1: usize, c2: usize) -> usize {
        BasisIndex::new(i1, i2, c1, c2).flatten(1)
    }

    fn params_strategy() -> impl Strategy<Value = SystemParams> {
        (
            0.1f64..3.0,
            0.0f64..3.0,
            1.0f64..40.0,
            0.0f64..20.0,
            0.0f64..1.0,
            0.0f64..1.0,
            0.0f64..=1.0,
            0.1f64..5.0,
            1usize..=2,
        )
            .prop_map(|(g, omega, delta, kappa, gca, gcb, eta, lambda, n_max)| SystemParams {
                g,
                omega,
                delta,
                kappa,
                gamma_ca: gca,
                gamma_cb: gcb,
                eta,
                lambda,
                n_max,
                hamiltonian: HamiltonianChoice::Full,
                ..SystemParams::default()
            })
    }

    #[test]
    fn detuning_only_hamiltonian() {
        let p = SystemParams {
            g: 0.0,
            omega: 0.0,
            ..ideal()
        };
        let h = build_hamiltonian(&p);
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                let b = BasisIndex::unflatten(i, 1);
                let n_c = [b.ion1, b.ion2].iter().filter(|&&l| l == Level::C).count();
                let want = if i == j { p.delta * n_c as f64 } else { 0.0 };
                assert_eq!(h.get(i, j), real(want));
            }
        }
    }

    #[test]
    fn cavity_coupling_matrix_element() {
        let p = SystemParams {
            g: 0.7,
            ..ideal()
        };
        let h = build_hamiltonian(&p);
        for x2 in Level::ALL {
            for n2 in 0..2 {
                let row = idx(Level::C, x2, 0, n2);
                let col = idx(Level::B, x2, 1, n2);
                assert_eq!(h.get(row, col), real(0.7));
            }
        }
        assert_eq!(h.get(idx(Level::C, Level::A, 0, 0), idx(Level::A, Level::A, 0, 0)), real(1.0));
    }

    #[test]
    fn h_eff_without_damping_is_hamiltonian() {
        let p = SystemParams {
            kappa: 0.0,
            ..ideal()
        };
        assert_eq!(build_h_eff(&p), build_hamiltonian(&p));
    }

    #[test]
    fn adiabatic_first_order_action() {
        let p = ideal();
        let h = build_h_eff_adiabatic(&p);
        let t = 1e-3;
        // (1 − iHt)|aa⟩|00⟩
        let psi0 = initial_state(&p);
        let step = apply(&h, &psi0).unwrap().scale(Complex64::new(0.0, -t));
        let psi = &psi0 + &step;
        let want = Complex64::new(0.0, -p.g * p.omega * t / p.delta);
        let amps = psi.amplitudes();
        assert!((amps[idx(Level::B, Level::A, 1, 0)] - want).norm() < 1e-15);
        assert!((amps[idx(Level::A, Level::B, 0, 1)] - want).norm() < 1e-15);
        let stay = Complex64::new(1.0, -2.0 * p.omega * p.omega * t / p.delta);
        assert!((amps[idx(Level::A, Level::A, 0, 0)] - stay).norm() < 1e-15);
    }

    #[test]
    fn adiabatic_without_coupling_is_diagonal() {
        let p = SystemParams {
            g: 0.0,
            ..ideal()
        };
        let h = build_h_eff_adiabatic(&p);
        for i in 0..h.dim() {
            let b = BasisIndex::unflatten(i, 1);
            let n_a = [b.ion1, b.ion2].iter().filter(|&&l| l == Level::A).count() as f64;
            let photons = (b.cav1 + b.cav2) as f64;
            let want = Complex64::new(n_a * p.omega * p.omega / p.delta, -p.kappa * photons);
            for j in 0..h.dim() {
                let expect = if i == j { want } else { ZERO };
                assert!((h.get(i, j) - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn adiabatic_decouples_upper_level() {
        // No matrix element connects a ket with an ion in |c⟩ to a ket without one.
        let h = build_h_eff_adiabatic(&ideal());
        let has_c = |k: usize| {
            let b = BasisIndex::unflatten(k, 1);
            b.ion1 == Level::C || b.ion2 == Level::C
        };
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                if has_c(i) != has_c(j) {
                    assert_eq!(h.get(i, j), ZERO);
                }
            }
        }
    }

    #[test]
    fn balanced_ideal_channels_are_scaled_detector_modes() {
        let p = ideal();
        let ch = build_jump_channels(&p);
        assert_eq!(ch.len(), 2);
        let e = Embedded::new(1);
        let s = (2.0 * p.kappa).sqrt() * FRAC_1_SQRT_2;
        let d1 = (&e.c[0] + &e.c[1]).scale(real(s));
        let d2 = (&e.c[0] - &e.c[1]).scale(real(s));
        assert_eq!(ch[0].tag, ChannelTag::D1);
        assert_eq!(ch[1].tag, ChannelTag::D2);
        assert!(ch[0].operator.max_abs_diff(&d1) < 1e-15);
        assert!(ch[1].operator.max_abs_diff(&d2) < 1e-15);
        assert!(ch.iter().all(|c| c.recorded));
    }

    #[test]
    fn channel_set_with_losses_and_decay() {
        let p = SystemParams {
            eta: 0.5,
            gamma_ca: 0.1,
            gamma_cb: 0.2,
            ..ideal()
        };
        let tags: Vec<_> = build_jump_channels(&p).iter().map(|c| c.tag).collect();
        assert_eq!(
            tags,
            vec![
                ChannelTag::D1,
                ChannelTag::D2,
                ChannelTag::LostD1,
                ChannelTag::LostD2,
                ChannelTag::SpontAIon1,
                ChannelTag::SpontBIon1,
                ChannelTag::SpontAIon2,
                ChannelTag::SpontBIon2
            ]
        );
    }

    #[test]
    fn balanced_splitter_splits_single_photon_evenly() {
        let p = ideal();
        let ch = build_jump_channels(&p);
        let psi = StateVector::basis(&p.dims(), idx(Level::B, Level::B, 1, 0));
        let p1 = expectation(&psi, &ch[0].rate_operator()).unwrap().re;
        let p2 = expectation(&psi, &ch[1].rate_operator()).unwrap().re;
        assert!((p1 - p2).abs() < 1e-14);
        assert!((p1 + p2 - 2.0 * p.kappa).abs() < 1e-12);
    }

    #[test]
    fn phase_gate_basics() {
        assert_eq!(phase_gate(0.0, 1), Operator::identity(&composite_dims(1)));
        let phi = 1.234;
        let u = phase_gate(phi, 1);
        assert!((&u.adjoint() * &u).max_abs_diff(&Operator::identity(&composite_dims(1))) < 1e-15);

        let dims = composite_dims(1);
        let h = real(FRAC_1_SQRT_2);
        let mut plus = StateVector::zeros(&dims);
        plus.amplitudes_mut()[idx(Level::B, Level::A, 0, 0)] = h;
        plus.amplitudes_mut()[idx(Level::A, Level::B, 0, 0)] = h;
        let out = apply(&u, &plus).unwrap();
        assert_eq!(out.amplitudes()[idx(Level::B, Level::A, 0, 0)], h);
        assert!(
            (out.amplitudes()[idx(Level::A, Level::B, 0, 0)] - h * Complex64::from_polar(1.0, phi))
                .norm()
                < 1e-15
        );
    }

    #[test]
    fn initial_state_is_both_ions_excited_vacuum() {
        let p = ideal();
        let psi = initial_state(&p);
        assert_eq!(norm2(&psi), 1.0);
        for cav in 0..2 {
            assert_eq!(expectation(&psi, &cavity_number(cav, 1)).unwrap(), ZERO);
        }
        assert_eq!(expectation(&psi, &level_population(Level::A, 1)).unwrap(), real(2.0));
    }

    #[test]
    fn validation_names_offending_key() {
        let bad = SystemParams {
            eta: 1.5,
            ..ideal()
        };
        match bad.validate() {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "eta"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(SystemParams { lambda: 0.0, ..ideal() }.validate().is_err());
        assert!(SystemParams { n_max: 3, ..ideal() }.validate().is_err());
        assert!(SystemParams { kappa: -1.0, ..ideal() }.validate().is_err());
    }

    #[test]
    fn auto_choice_follows_spontaneous_rates() {
        assert!(ideal().uses_adiabatic());
        assert!(!SystemParams { gamma_ca: 0.1, ..ideal() }.uses_adiabatic());
        assert!(!SystemParams { hamiltonian: HamiltonianChoice::Full, ..ideal() }.uses_adiabatic());
    }

    #[test]
    fn adiabatic_stage_model_is_consistent() {
        let m = StageModel::new(&SystemParams { eta: 0.3, ..ideal() }).unwrap();
        assert!(m.adiabatic);
        assert!(m.consistency_error() < 1e-12);
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian(p in params_strategy()) {
            let h = build_hamiltonian(&p);
            prop_assert_eq!(h.max_abs_diff(&h.adjoint()), 0.0);
            let ha = build_h_eff_adiabatic(&p).hermitian_part();
            prop_assert!(ha.max_abs_diff(&ha.adjoint()) == 0.0);
        }

        #[test]
        fn channel_hamiltonian_consistency(p in params_strategy()) {
            let m = StageModel::new(&p).unwrap();
            prop_assert!(m.consistency_error() < 1e-12);
        }

        #[test]
        fn damping_is_negative_semidefinite(p in params_strategy(),
                                            amps in prop::collection::vec(-1.0f64..1.0, 72)) {
            let h = build_h_eff(&SystemParams { n_max: 1, ..p });
            let anti = h.anti_hermitian_part();
            let psi = StateVector::new(&composite_dims(1),
                amps.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
            prop_assert!(expectation(&psi, &anti).unwrap().re <= 1e-12);
        }

        #[test]
        fn splitter_conserves_photon_flux(p in params_strategy()) {
            let mut sum = Operator::zeros(&p.dims());
            for ch in build_jump_channels(&p).iter().filter(|c| c.tag.is_detector_mode()) {
                sum = &sum + &ch.rate_operator();
            }
            let want = (&cavity_number(0, p.n_max) + &cavity_number(1, p.n_max))
                .scale(real(2.0 * p.kappa));
            prop_assert!(sum.max_abs_diff(&want) < 1e-12);
        }

        #[test]
        fn phase_gates_compose(a in 0.0f64..TAU, b in 0.0f64..TAU) {
            let prod = &phase_gate(a, 1) * &phase_gate(b, 1);
            let want = phase_gate((a + b) % TAU, 1);
            prop_assert!(prod.max_abs_diff(&want) < 1e-14);
        }

        #[test]
        fn adiabatic_propagation_stays_off_upper_level(
            amps in prop::collection::vec(-1.0f64..1.0, 72), t in 0.0f64..50.0) {
            let p = ideal();
            let mut psi = StateVector::new(&p.dims(),
                amps.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()).unwrap();
            for (k, a) in psi.amplitudes_mut().iter_mut().enumerate() {
                let b = BasisIndex::unflatten(k, 1);
                if b.ion1 == Level::C || b.ion2 == Level::C { *a = ZERO; }
            }
            let u = crate::hilbert::matrix_exp(&build_h_eff_adiabatic(&p), Complex64::new(0.0, -t));
            let out = apply(&u, &psi).unwrap();
            for (k, a) in out.amplitudes().iter().enumerate() {
                let b = BasisIndex::unflatten(k, 1);
                if b.ion1 == Level::C || b.ion2 == Level::C {
                    prop_assert!(a.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn phase_pi_flips_relative_sign() {
        let u = phase_gate(PI, 1);
        let k = idx(Level::A, Level::B, 0, 0);
        assert!((u.get(k, k) + ONE).norm() < 1e-15);
    }
}
