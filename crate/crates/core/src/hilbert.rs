//! Dense complex linear algebra over the composite ion ⊗ ion ⊗ cavity ⊗ cavity space.
//!
//! Everything here is deliberately small: the largest space used by the
//! simulator is 3·3·3·3 = 81 dimensional, so operators are stored as dense
//! row-major `Vec<Complex64>` and states as plain amplitude vectors. Both
//! carry the ordered list of subsystem dimensions so that tensor products and
//! embeddings can be checked.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Subsystem positions in the fixed composite ordering.
pub const ION1: usize = 0;
pub const ION2: usize = 1;
pub const CAV1: usize = 2;
pub const CAV2: usize = 3;

/// Internal level of a three-level ion. The discriminant is the basis index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    A = 0,
    B = 1,
    C = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::A, Level::B, Level::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Dimensions `[3, 3, n_max + 1, n_max + 1]` of the composite space.
pub fn composite_dims(n_max: usize) -> Vec<usize> {
    vec![3, 3, n_max + 1, n_max + 1]
}

/// Label of one basis ket `|ion1 ion2⟩|cav1 cav2⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub ion1: Level,
    pub ion2: Level,
    pub cav1: usize,
    pub cav2: usize,
}

impl BasisIndex {
    pub fn new(ion1: Level, ion2: Level, cav1: usize, cav2: usize) -> Self {
        Self {
            ion1,
            ion2,
            cav1,
            cav2,
        }
    }

    /// Row-major flat index in the order (ion1, ion2, cav1, cav2).
    pub fn flatten(self, n_max: usize) -> usize {
        let nc = n_max + 1;
        debug_assert!(self.cav1 < nc && self.cav2 < nc);
        ((self.ion1.index() * 3 + self.ion2.index()) * nc + self.cav1) * nc + self.cav2
    }

    pub fn unflatten(index: usize, n_max: usize) -> Self {
        let nc = n_max + 1;
        let cav2 = index % nc;
        let rest = index / nc;
        let cav1 = rest % nc;
        let rest = rest / nc;
        Self {
            ion1: Level::ALL[rest / 3],
            ion2: Level::ALL[rest % 3],
            cav1,
            cav2,
        }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |l: Level| match l {
            Level::A => 'a',
            Level::B => 'b',
            Level::C => 'c',
        };
        write!(
            f,
            "|{}{}⟩|{}{}⟩",
            name(self.ion1),
            name(self.ion2),
            self.cav1,
            self.cav2
        )
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Dense square complex matrix acting on a tensor-product space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dims: Vec<usize>,
    dim: usize,
    data: Vec<Complex64>,
}

impl Operator {
    pub fn zeros(dims: &[usize]) -> Self {
        let dim = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let mut op = Self::zeros(dims);
        for i in 0..op.dim {
            op.data[i * op.dim + i] = ONE;
        }
        op
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut op = Self::zeros(dims);
        let d = op.dim;
        for i in 0..d {
            for j in 0..d {
                op.data[i * d + j] = f(i, j);
            }
        }
        op
    }

    pub fn diagonal(dims: &[usize], diag: &[Complex64]) -> Result<Self> {
        let mut op = Self::zeros(dims);
        check_dim(op.dim, diag.len())?;
        for (i, &v) in diag.iter().enumerate() {
            op.data[i * op.dim + i] = v;
        }
        Ok(op)
    }

    /// Single-subsystem operator from row-major entries.
    pub fn from_rows(rows: &[&[Complex64]]) -> Result<Self> {
        let d = rows.len();
        let mut op = Self::zeros(&[d]);
        for (i, row) in rows.iter().enumerate() {
            check_dim(d, row.len())?;
            op.data[i * d..(i + 1) * d].copy_from_slice(row);
        }
        Ok(op)
    }

    /// `|to⟩⟨from|` on a `dim`-level subsystem.
    pub fn transition(dim: usize, to: usize, from: usize) -> Self {
        let mut op = Self::zeros(&[dim]);
        op.data[to * dim + from] = ONE;
        op
    }

    /// Bosonic annihilation operator truncated at `n_max` photons.
    pub fn annihilation(n_max: usize) -> Self {
        let d = n_max + 1;
        let mut op = Self::zeros(&[d]);
        for n in 1..d {
            op.data[(n - 1) * d + n] = Complex64::from((n as f64).sqrt());
        }
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        Self::from_fn(&self.dims, |i, j| self.data[j * d + i].conj())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dims: self.dims.clone(),
            dim: self.dim,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|j| (0..d).map(|i| self.data[i * d + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        assert_eq!(self.dim, other.dim, "operator dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != ZERO).count()
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let d = self.dim;
        Self::from_fn(&self.dims, |i, j| {
            (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5
        })
    }

    /// `(A − A†)/(2i)`, so that `A = hermitian_part + i·anti_hermitian_part`.
    pub fn anti_hermitian_part(&self) -> Self {
        let d = self.dim;
        Self::from_fn(&self.dims, |i, j| {
            (self.data[i * d + j] - self.data[j * d + i].conj()) * Complex64::new(0.0, -0.5)
        })
    }

    pub fn matmul(&self, rhs: &Operator) -> Result<Operator> {
        check_dim(self.dim, rhs.dim)?;
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let out_row = &mut out[i * d..(i + 1) * d];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * d..(k + 1) * d];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Operator {
            dims: self.dims.clone(),
            dim: d,
            data: out,
        })
    }

    /// `y = A·x` on raw amplitude slices; the hot path of the trajectory engine.
    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(y.len(), d);
        for (row, out) in self.data.chunks_exact(d).zip(y.iter_mut()) {
            let mut acc = ZERO;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *out = acc;
        }
    }

    /// `⟨x|A|x⟩` on raw amplitude slices.
    pub fn quadratic_form(&self, x: &[Complex64]) -> Complex64 {
        let d = self.dim;
        let mut total = ZERO;
        for (row, xi) in self.data.chunks_exact(d).zip(x) {
            let mut acc = ZERO;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            total += xi.conj() * acc;
        }
        total
    }

    fn zip_with(&self, rhs: &Operator, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.dim, rhs.dim, "operator dimensions differ");
        Self {
            dims: self.dims.clone(),
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl Add for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs).expect("operator dimensions differ")
    }
}

/// Tensor product `A ⊗ B`; subsystem dimension lists are concatenated.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (da, db) = (a.dim, b.dim);
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    let d = da * db;
    let mut data = vec![ZERO; d * d];
    for i in 0..da {
        for j in 0..da {
            let aij = a.data[i * da + j];
            if aij == ZERO {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    data[(i * db + k) * d + (j * db + l)] = aij * b.data[k * db + l];
                }
            }
        }
    }
    Operator { dims, dim: d, data }
}

/// Lift a single-subsystem operator to the full space, identity elsewhere.
pub fn embed(op: &Operator, subsystem: usize, dims: &[usize]) -> Result<Operator> {
    let target = *dims.get(subsystem).ok_or(Error::DimensionMismatch {
        expected: dims.len(),
        found: subsystem,
    })?;
    check_dim(target, op.dim)?;
    let before: usize = dims[..subsystem].iter().product();
    let after: usize = dims[subsystem + 1..].iter().product();
    let mut out = kron(
        &kron(&Operator::identity(&dims[..subsystem]), op),
        &Operator::identity(&dims[subsystem + 1..]),
    );
    debug_assert_eq!(out.dim, before * target * after);
    out.dims = dims.to_vec();
    Ok(out)
}

/// `exp(scale · A)` by scaling and squaring of a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 1/2, where the
/// series converges to machine precision within about twenty terms.
pub fn matrix_exp(a: &Operator, scale: Complex64) -> Operator {
    let scaled = a.scale(scale);
    let norm = scaled.norm_one();
    if norm == 0.0 {
        return Operator::identity(&a.dims);
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let reduced = scaled.scale(Complex64::from(2f64.powi(-squarings)));

    let mut result = Operator::identity(&a.dims);
    let mut term = Operator::identity(&a.dims);
    for k in 1..=40 {
        term = (&term * &reduced).scale(Complex64::from(1.0 / k as f64));
        result = &result + &term;
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Complex amplitude vector over a tensor-product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(dims: &[usize], amps: Vec<Complex64>) -> Result<Self> {
        check_dim(dims.iter().product(), amps.len())?;
        Ok(Self {
            dims: dims.to_vec(),
            amps,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            amps: vec![ZERO; dims.iter().product()],
        }
    }

    /// Unit vector on one basis element.
    pub fn basis(dims: &[usize], index: usize) -> Self {
        let mut s = Self::zeros(dims);
        s.amps[index] = ONE;
        s
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            dims: self.dims.clone(),
            amps: self.amps.iter().map(|&a| a * factor).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &StateVector {
    type Output = StateVector;

    fn add(self, rhs: &StateVector) -> StateVector {
        assert_eq!(self.amps.len(), rhs.amps.len(), "state dimensions differ");
        StateVector {
            dims: self.dims.clone(),
            amps: self.amps.iter().zip(&rhs.amps).map(|(a, b)| a + b).collect(),
        }
    }
}

pub fn apply(op: &Operator, psi: &StateVector) -> Result<StateVector> {
    check_dim(op.dim, psi.dim())?;
    let mut out = StateVector::zeros(&psi.dims);
    op.mul_vec_into(&psi.amps, &mut out.amps);
    Ok(out)
}

/// `⟨ψ|χ⟩`, antilinear in the first argument.
pub fn inner(psi: &StateVector, chi: &StateVector) -> Result<Complex64> {
    check_dim(psi.dim(), chi.dim())?;
    Ok(psi
        .amps
        .iter()
        .zip(&chi.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

pub fn norm2_slice(amps: &[Complex64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

pub fn norm2(psi: &StateVector) -> f64 {
    norm2_slice(&psi.amps)
}

pub fn normalize(psi: &StateVector) -> Result<StateVector> {
    let n = norm2(psi);
    if n <= 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(psi.scale(Complex64::from(1.0 / n.sqrt())))
}

/// `⟨ψ|A|ψ⟩`, without normalizing `ψ`.
pub fn expectation(psi: &StateVector, op: &Operator) -> Result<Complex64> {
    check_dim(op.dim, psi.dim())?;
    Ok(op.quadratic_form(&psi.amps))
}
