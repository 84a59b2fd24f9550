//! Density-matrix reference integrator for the same model the trajectory
//! engine unravels, and the ensemble comparison built on it.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Operator, StateVector, ZERO};
use crate::model::{initial_state, JumpChannel, StageModel, SystemParams};
use crate::trajectory::{EngineKind, RngStream, Sampler};

pub const TRACE_TOL: f64 = 1e-8;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-8;

/// Row-major dense density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        let dim = a.len();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = a[i] * a[j].conj();
            }
        }
        Self {
            dims: psi.dims().to_vec(),
            dim,
            data,
        }
    }

    pub fn from_operator(op: &Operator) -> Self {
        Self {
            dims: op.dims().to_vec(),
            dim: op.dim(),
            data: op.data().to_vec(),
        }
    }

    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let dim = dims.iter().product();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::from(1.0 / dim as f64);
        }
        Self {
            dims: dims.to_vec(),
            dim,
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Tr(ρA)`.
    pub fn expectation(&self, op: &Operator) -> Result<Complex64> {
        check_dim(self.dim, op.dim())?;
        let d = self.dim;
        let mut s = ZERO;
        for i in 0..d {
            for k in 0..d {
                s += self.data[i * d + k] * op.get(k, i);
            }
        }
        Ok(s)
    }

    /// `max |ρᵢⱼ − ρⱼᵢ*|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                m = m.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        m
    }

    /// Whether `ρ + shift·I` admits a Cholesky factorization, i.e. every
    /// eigenvalue of `ρ` is at least `−shift`.
    pub fn is_positive_within(&self, shift: f64) -> bool {
        let d = self.dim;
        let mut l = vec![ZERO; d * d];
        for j in 0..d {
            let mut diag = self.data[j * d + j].re + shift;
            for k in 0..j {
                diag -= l[j * d + k].norm_sqr();
            }
            if !(diag > 0.0) {
                return false;
            }
            let ljj = diag.sqrt();
            l[j * d + j] = Complex64::from(ljj);
            for i in j + 1..d {
                // Hermitian part of the input, so tiny asymmetries do not matter.
                let a = 0.5 * (self.data[i * d + j] + self.data[j * d + i].conj());
                let mut s = a;
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k].conj();
                }
                l[i * d + j] = s / ljj;
            }
        }
        true
    }

    /// Check the trace (when `expected_trace` is given), Hermiticity and positivity tolerances.
    pub fn validate(&self, expected_trace: Option<f64>) -> Result<()> {
        if let Some(tr) = expected_trace {
            let t = self.trace();
            if (t.re - tr).abs() > TRACE_TOL || t.im.abs() > TRACE_TOL {
                return Err(Error::InvariantViolation(format!(
                    "trace {t} drifted from {tr}"
                )));
            }
        }
        let h = self.hermiticity_error();
        if h > HERMITIAN_TOL {
            return Err(Error::InvariantViolation(format!(
                "hermiticity error {h:e}"
            )));
        }
        if !self.is_positive_within(EIGEN_TOL) {
            return Err(Error::InvariantViolation(
                "eigenvalue below -1e-8".to_string(),
            ));
        }
        Ok(())
    }

    fn axpy(&self, a: f64, x: &[Complex64]) -> Vec<Complex64> {
        self.data.iter().zip(x).map(|(r, k)| r + k * a).collect()
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Nonzero entries of an operator.
#[derive(Clone, Debug)]
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    fn new(op: &Operator) -> Self {
        let d = op.dim();
        let mut entries = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let v = op.get(i, j);
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    /// `out += c·(A·X)`.
    fn left_mul_acc(&self, x: &[Complex64], d: usize, c: Complex64, out: &mut [Complex64]) {
        for &(i, k, v) in &self.entries {
            let cv = c * v;
            let (src, dst) = (&x[k * d..(k + 1) * d], &mut out[i * d..(i + 1) * d]);
            for (o, s) in dst.iter_mut().zip(src) {
                *o += cv * s;
            }
        }
    }

    /// `out += c·(X·A)`.
    fn right_mul_acc(&self, x: &[Complex64], d: usize, c: Complex64, out: &mut [Complex64]) {
        for &(k, j, v) in &self.entries {
            let cv = c * v;
            for i in 0..d {
                out[i * d + j] += cv * x[i * d + k];
            }
        }
    }

    /// `out += X·A†`.
    fn right_mul_adjoint_acc(&self, x: &[Complex64], d: usize, out: &mut [Complex64]) {
        for &(r, c, v) in &self.entries {
            let cv = v.conj();
            for i in 0..d {
                out[i * d + r] += cv * x[i * d + c];
            }
        }
    }
}

#[derive(Clone, Debug)]
struct SparseChannel {
    l: Sparse,
    rate: Sparse,
    sandwich: bool,
}

/// Generator `ρ ↦ −i[H,ρ] + Σ(LρL† − ½{L†L, ρ})` in sparse form.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    /// Upper bound on the generator norm, `2‖H‖₁ + 2Σ‖L†L‖₁`.
    norm_bound: f64,
    h: Sparse,
    channels: Vec<SparseChannel>,
}

impl Liouvillian {
    pub fn new(h: &Operator, channels: &[JumpChannel]) -> Result<Self> {
        Self::build(h, channels, false)
    }

    /// Same generator without the `LρL†` terms of recorded channels, so that
    /// `Tr ρ(t)` is the probability of no recorded click up to `t`.
    pub fn no_click(h: &Operator, channels: &[JumpChannel]) -> Result<Self> {
        Self::build(h, channels, true)
    }

    fn build(h: &Operator, channels: &[JumpChannel], drop_recorded: bool) -> Result<Self> {
        for ch in channels {
            check_dim(h.dim(), ch.operator.dim())?;
        }
        let norm_bound = 2.0 * h.norm_one()
            + 2.0 * channels.iter().map(|c| c.rate_operator().norm_one()).sum::<f64>();
        Ok(Self {
            dim: h.dim(),
            norm_bound,
            h: Sparse::new(h),
            channels: channels
                .iter()
                .map(|ch| SparseChannel {
                    l: Sparse::new(&ch.operator),
                    rate: Sparse::new(&ch.rate_operator()),
                    sandwich: !(drop_recorded && ch.recorded),
                })
                .collect(),
        })
    }

    pub fn from_model(model: &StageModel) -> Result<Self> {
        Self::new(&model.hamiltonian, &model.channels)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.dim, rho.dim)?;
        let mut out = vec![ZERO; rho.data.len()];
        self.apply_into(&rho.data, &mut out);
        Ok(DensityMatrix {
            dims: rho.dims.clone(),
            dim: rho.dim,
            data: out,
        })
    }

    fn apply_into(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        out.iter_mut().for_each(|z| *z = ZERO);
        let mi = Complex64::new(0.0, -1.0);
        self.h.left_mul_acc(rho, d, mi, out);
        self.h.right_mul_acc(rho, d, -mi, out);
        let mut scratch = vec![ZERO; rho.len()];
        let half = Complex64::from(-0.5);
        for ch in &self.channels {
            if ch.sandwich {
                scratch.iter_mut().for_each(|z| *z = ZERO);
                ch.l.left_mul_acc(rho, d, Complex64::from(1.0), &mut scratch);
                ch.l.right_mul_adjoint_acc(&scratch, d, out);
            }
            ch.rate.left_mul_acc(rho, d, half, out);
            ch.rate.right_mul_acc(rho, d, half, out);
        }
    }

    /// Largest RK4 step used by [`integrate`]: `0.1/‖𝓛‖`.
    ///
    /// RK4 is not positivity preserving; at larger `h‖𝓛‖` the error on
    /// near-zero eigenvalues of a pure state exceeds the `−1e-8` tolerance.
    pub fn max_step(&self) -> f64 {
        if self.norm_bound > 0.0 {
            0.1 / self.norm_bound
        } else {
            f64::INFINITY
        }
    }

    /// Whether the generator conserves the trace.
    pub fn is_trace_preserving(&self) -> bool {
        self.channels.iter().all(|c| c.sandwich)
    }
}

/// `dρ/dt = L(ρ)` for one operator set, checked against a dimension.
pub fn liouvillian_apply(rho: &DensityMatrix, h: &Operator, channels: &[JumpChannel]) -> Result<DensityMatrix> {
    Liouvillian::new(h, channels)?.apply(rho)
}

/// Classical RK4 from `t = 0`, returning `ρ` at each of the ascending `times`.
///
/// The step is `dt_rk`, reduced to [`Liouvillian::max_step`] when that is smaller.
/// The invariants are checked at every returned time, and the trace drift is
/// also checked at every step when the generator conserves the trace.
pub fn integrate(rho0: &DensityMatrix, gen: &Liouvillian, times: &[f64], dt_rk: f64) -> Result<Vec<DensityMatrix>> {
    if !(dt_rk > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt_rk",
            value: dt_rk,
            reason: "must be positive",
        });
    }
    check_dim(gen.dim, rho0.dim)?;
    let conserving = gen.is_trace_preserving();
    let tr0 = rho0.trace().re;
    rho0.validate(None)?;
    let n = rho0.data.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if target < t - 1e-12 {
            return Err(Error::InvalidParameter {
                name: "times",
                value: target,
                reason: "must be ascending and non-negative",
            });
        }
        let h_max = dt_rk.min(gen.max_step());
        let steps = ((target - t) / h_max - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 {
            let h = (target - t) / steps as f64;
            for _ in 0..steps {
                gen.apply_into(&rho.data, &mut k1);
                gen.apply_into(&rho.axpy(h / 2.0, &k1), &mut k2);
                gen.apply_into(&rho.axpy(h / 2.0, &k2), &mut k3);
                gen.apply_into(&rho.axpy(h, &k3), &mut k4);
                for i in 0..n {
                    rho.data[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
                }
                if conserving && (rho.trace().re - tr0).abs() > TRACE_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "trace drifted to {} at t={}",
                        rho.trace().re,
                        t
                    )));
                }
            }
        }
        t = target;
        rho.validate(conserving.then_some(tr0))?;
        out.push(rho.clone());
    }
    Ok(out)
}

/// One row of an ensemble comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub observable: String,
    pub time: f64,
    pub trajectory_mean: f64,
    pub stderr: f64,
    pub lindblad: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub n_traj: u64,
    pub entries: Vec<ZScore>,
}

impl EnsembleReport {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max)
    }

    pub fn passes(&self, limit: f64) -> bool {
        self.max_abs_z() <= limit
    }
}

/// Trajectories per reduction chunk; fixed so results do not depend on the thread count.
const CHUNK: u64 = 256;

/// Compare unconditioned trajectory averages against the master equation.
///
/// Each trajectory runs on stream `(seed, i)` through every jump, recorded or
/// not. When the trajectory spread is zero the comparison requires agreement
/// to 1e-9 and reports `z = 0`.
pub fn ensemble_compare(
    params: &SystemParams,
    observables: &[(String, Operator)],
    times: &[f64],
    n_traj: u64,
    seed: u64,
    kind: EngineKind,
) -> Result<EnsembleReport> {
    if n_traj == 0 {
        return Err(Error::EmptyInput("n_traj"));
    }
    let model = StageModel::new(params)?;
    let psi0 = initial_state(params);
    let horizon = times.iter().copied().fold(0.0, f64::max).max(params.dt);
    let sampler = Sampler::new(kind, &model, params.dt, horizon)?;
    let ops: Vec<Operator> = observables.iter().map(|(_, o)| o.clone()).collect();
    let cells = times.len() * ops.len();

    let n_chunks = n_traj.div_ceil(CHUNK);
    let partial: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; cells];
            let mut sum2 = vec![0.0; cells];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                let obs = sampler.observe(&psi0, &mut RngStream::new(seed, i), times, &ops)?;
                for (k, v) in obs.iter().flatten().enumerate() {
                    sum[k] += v;
                    sum2[k] += v * v;
                }
            }
            Ok((sum, sum2))
        })
        .collect();
    let mut sum = vec![0.0; cells];
    let mut sum2 = vec![0.0; cells];
    for p in partial {
        let (s, s2) = p?;
        for k in 0..cells {
            sum[k] += s[k];
            sum2[k] += s2[k];
        }
    }

    let gen = Liouvillian::from_model(&model)?;
    let rhos = integrate(&DensityMatrix::from_pure(&psi0), &gen, times, params.dt / 2.0)?;
    let n = n_traj as f64;
    let mut entries = Vec::with_capacity(cells);
    for (ti, &time) in times.iter().enumerate() {
        for (oi, (name, op)) in observables.iter().enumerate() {
            let k = ti * ops.len() + oi;
            let mean = sum[k] / n;
            let var = if n_traj > 1 {
                ((sum2[k] - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            let stderr = (var / n).sqrt();
            let lindblad = rhos[ti].expectation(op)?.re;
            let diff = mean - lindblad;
            let z = if stderr > 0.0 {
                diff / stderr
            } else if diff.abs() <= 1e-9 {
                0.0
            } else {
                f64::INFINITY
            };
            entries.push(ZScore {
                observable: name.clone(),
                time,
                trajectory_mean: mean,
                stderr,
                lindblad,
                z,
            });
        }
    }
    Ok(EnsembleReport { n_traj, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{BasisIndex, Level};
    use crate::model::{cavity_number, HamiltonianChoice};
    use proptest::prelude::*;

    fn decay_params() -> SystemParams {
        SystemParams {
            g: 0.0,
            omega: 0.0,
            kappa: 1.0,
            hamiltonian: HamiltonianChoice::Full,
            ..SystemParams::default()
        }
    }

    fn photon_rho(p: &SystemParams) -> DensityMatrix {
        let k = BasisIndex::new(Level::A, Level::A, 1, 0).flatten(p.n_max);
        DensityMatrix::from_pure(&StateVector::basis(&p.dims(), k))
    }

    #[test]
    fn closed_system_derivative_is_traceless() {
        let p = SystemParams::default();
        let model = StageModel::new(&p).unwrap();
        let rho = DensityMatrix::from_pure(&initial_state(&p));
        let d = liouvillian_apply(&rho, &model.hamiltonian, &[]).unwrap();
        assert!(d.trace().norm() < 1e-15);
    }

    #[test]
    fn mixed_state_with_one_channel_keeps_trace() {
        let p = SystemParams::default();
        let model = StageModel::new(&p).unwrap();
        let rho = DensityMatrix::maximally_mixed(&p.dims());
        let zero = Operator::zeros(&p.dims());
        let d = liouvillian_apply(&rho, &zero, &model.channels[..1]).unwrap();
        assert!(d.trace().norm() < 1e-14);
    }

    #[test]
    fn photon_number_rate_is_minus_two_kappa() {
        let p = decay_params();
        let model = StageModel::new(&p).unwrap();
        let d = liouvillian_apply(&photon_rho(&p), &model.hamiltonian, &model.channels).unwrap();
        let n1 = cavity_number(0, p.n_max);
        assert!((d.expectation(&n1).unwrap().re + 2.0 * p.kappa).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = SystemParams::default();
        let model = StageModel::new(&p).unwrap();
        let rho = DensityMatrix::maximally_mixed(&[3, 3]);
        assert!(matches!(
            liouvillian_apply(&rho, &model.hamiltonian, &model.channels),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn photon_decays_exponentially() {
        let p = decay_params();
        let model = StageModel::new(&p).unwrap();
        let gen = Liouvillian::from_model(&model).unwrap();
        let times = [0.1, 0.5, 1.0, 2.0];
        let rhos = integrate(&photon_rho(&p), &gen, &times, p.dt / 2.0).unwrap();
        let n1 = cavity_number(0, p.n_max);
        for (rho, t) in rhos.iter().zip(times) {
            let n: f64 = rho.expectation(&n1).unwrap().re;
            assert!((n - (-2.0 * p.kappa * t).exp()).abs() < 1e-6, "t={t}: {n}");
        }
    }

    #[test]
    fn unitary_limit_keeps_purity() {
        let p = SystemParams {
            kappa: 0.0,
            hamiltonian: HamiltonianChoice::Full,
            ..SystemParams::default()
        };
        let model = StageModel::new(&p).unwrap();
        let gen = Liouvillian::from_model(&model).unwrap();
        let rhos = integrate(&DensityMatrix::from_pure(&initial_state(&p)), &gen, &[1.0, 5.0], 0.005).unwrap();
        for rho in rhos {
            assert!((rho.purity() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn positivity_check_detects_negative_eigenvalue() {
        let mut rho = DensityMatrix::maximally_mixed(&[3]);
        assert!(rho.is_positive_within(0.0));
        rho.data[0] = Complex64::from(-1e-6);
        assert!(!rho.is_positive_within(1e-8));
        assert!(rho.validate(None).is_err());
    }

    #[test]
    fn no_click_trace_is_survival_probability() {
        // A cavity photon always clicks when η = 1, so survival is e^{−2κt}.
        let p = decay_params();
        let model = StageModel::new(&p).unwrap();
        let gen = Liouvillian::no_click(&model.hamiltonian, &model.channels).unwrap();
        assert!(!gen.is_trace_preserving());
        let rhos = integrate(&photon_rho(&p), &gen, &[0.5, 1.0], 0.005).unwrap();
        for (rho, t) in rhos.iter().zip([0.5, 1.0]) {
            assert!((rho.trace().re - (-2.0 * p.kappa * t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_time_comparison_is_exact() {
        let p = SystemParams::default();
        let obs = vec![("n1".to_string(), cavity_number(0, p.n_max))];
        let r = ensemble_compare(&p, &obs, &[0.0], 10, 1, EngineKind::Fast).unwrap();
        assert_eq!(r.entries[0].stderr, 0.0);
        assert_eq!(r.entries[0].z, 0.0);
        assert!(ensemble_compare(&p, &obs, &[0.0], 0, 1, EngineKind::Fast).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn integration_preserves_invariants(
            kappa in 0.0f64..5.0,
            gamma in 0.0f64..0.5,
            eta in 0.0f64..=1.0,
            lambda in 0.2f64..4.0,
        ) {
            let p = SystemParams {
                kappa,
                gamma_ca: gamma,
                gamma_cb: gamma,
                eta,
                lambda,
                delta: 5.0,
                hamiltonian: HamiltonianChoice::Full,
                ..SystemParams::default()
            };
            let model = StageModel::new(&p).unwrap();
            let gen = Liouvillian::from_model(&model).unwrap();
            let rhos = integrate(&DensityMatrix::from_pure(&initial_state(&p)), &gen, &[0.5, 1.0], 0.005);
            prop_assert!(rhos.is_ok(), "{:?}", rhos.err());
        }
    }
}
