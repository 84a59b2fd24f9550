//! Closed-form references: spontaneous-emission spectrum of a decaying
//! emitter, the two-mode beam-splitter transform on few-photon states, the
//! heralded Bell states, and the perturbative rates and splitting ratios of
//! the Raman scheme.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{BasisIndex, Level, StateVector, ONE, ZERO};
use crate::model::SystemParams;

/// Emitter parameters for the free-space emission model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WwParams {
    /// Cavity-enhanced decay rate Γ.
    pub gamma: f64,
    /// Transition frequency ω.
    pub omega: f64,
}

impl WwParams {
    pub fn new(gamma: f64, omega: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "decay rate must be positive",
            });
        }
        Ok(Self { gamma, omega })
    }
}

/// Single-photon amplitude at frequency `ν` after time `t`:
/// `√(Γ/2π)·[1 − e^{i(ω−ν)t − Γt/2}] / [(ν−ω) + iΓ/2]`.
///
/// `t = ∞` is accepted and gives the steady Lorentzian amplitude.
pub fn ww_amplitude(nu: f64, t: f64, p: &WwParams) -> Complex64 {
    let pref = (p.gamma / (2.0 * PI)).sqrt();
    let transient = if t.is_infinite() {
        ZERO
    } else {
        Complex64::new(-p.gamma * t / 2.0, (p.omega - nu) * t).exp()
    };
    pref * (ONE - transient) / Complex64::new(nu - p.omega, p.gamma / 2.0)
}

pub fn ww_spectral_density(nu: f64, t: f64, p: &WwParams) -> f64 {
    ww_amplitude(nu, t, p).norm_sqr()
}

/// Total emitted probability `∫|amp(ν, t)|² dν` over the whole real line.
///
/// With `x = ν − ω`, `|1 − e^{−ixt−Γt/2}|² = 1 + e^{−Γt} − 2e^{−Γt/2}cos(xt)`.
/// The smooth part is integrated after the substitution `x = (Γ/2)·tan θ`,
/// which maps the line onto `(−π/2, π/2)` and cancels the Lorentzian, so no
/// frequency cutoff is needed. The oscillating part is integrated period by
/// period on `|x| ≤ X`. Its tail beyond `X` is bounded by `(Γ/π)e^{−Γt/2}/(tX²)`,
/// and `X` is chosen to keep that below `1e-12`.
pub fn ww_total_emission(t: f64, p: &WwParams) -> f64 {
    let tol = 1e-10;
    let edge = PI / 2.0 - 1e-12;
    let smooth = integrate(|_| 1.0 / PI, -edge, edge, tol);
    if t.is_infinite() {
        return smooth;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let decay = (-p.gamma * t / 2.0).exp();
    let lorentz = |x: f64| p.gamma / (2.0 * PI) / (x * x + p.gamma * p.gamma / 4.0);
    let x_cut = (p.gamma / PI * decay / (t * 1e-12)).sqrt();
    let period = 2.0 * PI / t;
    let panels = (x_cut / period).ceil().max(1.0) as usize;
    let panel_tol = tol / panels as f64;
    let oscillating: f64 = (0..panels)
        .map(|k| {
            let (a, b) = (k as f64 * period, (k + 1) as f64 * period);
            integrate(|x| lorentz(x) * (x * t).cos(), a, b, panel_tol)
        })
        .rev()
        .sum::<f64>()
        * 2.0;
    (1.0 + decay * decay) * smooth - 2.0 * decay * oscillating
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature to an absolute tolerance.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth >= 50 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, tol / 2.0, depth + 1) + recurse(f, m, b, tol / 2.0, depth + 1)
    }
    recurse(&f, a, b, abs_tol, 0)
}

/// Two-mode state with at most two photons in total, amplitudes indexed `[n_a][n_b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModePair {
    amps: [[Complex64; 3]; 3],
}

impl ModePair {
    /// Build from `((n_a, n_b), amplitude)` entries; must be normalized.
    pub fn new(entries: &[((usize, usize), Complex64)]) -> Result<Self> {
        let mut amps = [[ZERO; 3]; 3];
        for &((na, nb), a) in entries {
            if na + nb > 2 {
                return Err(Error::DimensionMismatch {
                    expected: 2,
                    found: na + nb,
                });
            }
            amps[na][nb] += a;
        }
        let pair = Self { amps };
        let n = pair.norm2();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "mode-pair state has squared norm {n}"
            )));
        }
        Ok(pair)
    }

    pub fn fock(na: usize, nb: usize) -> Result<Self> {
        Self::new(&[((na, nb), ONE)])
    }

    pub fn amplitude(&self, na: usize, nb: usize) -> Complex64 {
        if na + nb > 2 {
            ZERO
        } else {
            self.amps[na][nb]
        }
    }

    pub fn norm2(&self) -> f64 {
        self.amps.iter().flatten().map(|a| a.norm_sqr()).sum()
    }

    /// Probability of one photon in each mode.
    pub fn coincidence_probability(&self) -> f64 {
        self.amps[1][1].norm_sqr()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Polynomial in the two output creation operators, `coef[i][j]·(d₁†)^i (d₂†)^j`.
type CreationPoly = [[Complex64; 3]; 3];

fn multiply_linear(poly: &CreationPoly, u1: f64, u2: f64) -> CreationPoly {
    let mut out = [[ZERO; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let c = poly[i][j];
            if c == ZERO {
                continue;
            }
            if i + 1 < 3 {
                out[i + 1][j] += c * u1;
            }
            if j + 1 < 3 {
                out[i][j + 1] += c * u2;
            }
        }
    }
    out
}

/// Mode transform induced by `d₁ = √R c₁ + √T c₂`, `d₂ = √T c₁ − √R c₂`
/// with `R = λ/(1+λ)`, `T = 1/(1+λ)`.
///
/// The mixing matrix is real orthogonal and symmetric, so each input creation
/// operator expands as `c₁† = √R d₁† + √T d₂†`, `c₂† = √T d₁† − √R d₂†`.
pub fn bs_mode_transform(input: &ModePair, lambda: f64) -> Result<ModePair> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            value: lambda,
            reason: "must be positive",
        });
    }
    let r = (lambda / (1.0 + lambda)).sqrt();
    let t = (1.0 / (1.0 + lambda)).sqrt();
    let mut out = [[ZERO; 3]; 3];
    for n1 in 0..3 {
        for n2 in 0..3 - n1 {
            let a = input.amps[n1][n2];
            if a == ZERO {
                continue;
            }
            let mut poly: CreationPoly = [[ZERO; 3]; 3];
            poly[0][0] = a / (factorial(n1) * factorial(n2)).sqrt();
            for _ in 0..n1 {
                poly = multiply_linear(&poly, r, t);
            }
            for _ in 0..n2 {
                poly = multiply_linear(&poly, t, -r);
            }
            for i in 0..3 {
                for j in 0..3 - i {
                    out[i][j] += poly[i][j] * (factorial(i) * factorial(j)).sqrt();
                }
            }
        }
    }
    Ok(ModePair { amps: out })
}

/// `|±⟩ = (|b₁a₂⟩ ± |a₁b₂⟩)/√2` on the two-ion space.
pub fn heralded_states() -> (StateVector, StateVector) {
    let dims = [3usize, 3];
    let ba = Level::B.index() * 3 + Level::A.index();
    let ab = Level::A.index() * 3 + Level::B.index();
    let h = Complex64::from(FRAC_1_SQRT_2);
    let mut plus = StateVector::zeros(&dims);
    plus.amplitudes_mut()[ba] = h;
    plus.amplitudes_mut()[ab] = h;
    let mut minus = StateVector::zeros(&dims);
    minus.amplitudes_mut()[ba] = h;
    minus.amplitudes_mut()[ab] = -h;
    (plus, minus)
}

/// `|±⟩` tensored with both cavities in vacuum, on the full composite space.
pub fn heralded_states_with_vacuum(n_max: usize) -> (StateVector, StateVector) {
    let dims = crate::hilbert::composite_dims(n_max);
    let ba = BasisIndex::new(Level::B, Level::A, 0, 0).flatten(n_max);
    let ab = BasisIndex::new(Level::A, Level::B, 0, 0).flatten(n_max);
    let h = Complex64::from(FRAC_1_SQRT_2);
    let mut plus = StateVector::zeros(&dims);
    plus.amplitudes_mut()[ba] = h;
    plus.amplitudes_mut()[ab] = h;
    let mut minus = StateVector::zeros(&dims);
    minus.amplitudes_mut()[ba] = h;
    minus.amplitudes_mut()[ab] = -h;
    (plus, minus)
}

/// Heralding click rate `η·4κ(gΩ/(Δκ))²`.
pub fn detection_rate(p: &SystemParams) -> f64 {
    let x = p.g * p.omega / (p.delta * p.kappa);
    p.eta * 4.0 * p.kappa * x * x
}

/// First-order success probability `rate·T`, clamped to `[0, 1]`.
pub fn success_probability(p: &SystemParams) -> f64 {
    (detection_rate(p) * p.t_wait).clamp(0.0, 1.0)
}

/// Second-photon detector split `(P₁, P₂) = ((1+cos φ)/2, (1−cos φ)/2)` after a D1 herald.
pub fn p1_p2_split(phi: f64) -> (f64, f64) {
    let c = phi.cos();
    ((1.0 + c) / 2.0, (1.0 - c) / 2.0)
}

/// Probability that both photons reach the same detector, `(1 + cos φ)/2`.
pub fn same_detector_probability(phi: f64) -> f64 {
    (1.0 + phi.cos()) / 2.0
}
