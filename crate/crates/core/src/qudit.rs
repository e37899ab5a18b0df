//! Qudit states, the d-rail photonic encoding, and the named states used by
//! the fusion and swapping protocols.
//!
//! A qudit of dimension `d` is carried by one photon spread over `d` modes:
//! level `i` is the photon in mode `i` of its block. Qudit `q` of a register
//! occupies modes `q*d .. q*d + d`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockBasisState, FockVector};
use crate::scalar::{cone, creal, czero, to_c64, Amp, Real};

/// Relative sign in a two-term superposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn factor<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn times(self, other: Sign) -> Sign {
        if self == other {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Ordered pair of distinct levels `(p0, p1)` in `Z_d`.
///
/// The order matters for the four-qudit family built by [`psi_intermediate`];
/// [`PairSpec::canonical`] gives the `p0 < p1` representative where only the
/// set is meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairSpec(pub usize, pub usize);

impl PairSpec {
    pub fn new(p0: usize, p1: usize) -> Result<Self> {
        if p0 == p1 {
            return Err(Error::DegeneratePair(p0));
        }
        Ok(Self(p0, p1))
    }

    pub fn swapped(self) -> Self {
        Self(self.1, self.0)
    }

    pub fn canonical(self) -> Self {
        if self.0 < self.1 {
            self
        } else {
            self.swapped()
        }
    }

    pub fn get(self, idx: usize) -> usize {
        if idx == 0 {
            self.0
        } else {
            self.1
        }
    }

    fn check(self, d: usize) -> Result<()> {
        if self.0 == self.1 {
            return Err(Error::DegeneratePair(self.0));
        }
        for v in [self.0, self.1] {
            if v >= d {
                return Err(Error::LevelOutOfRange { value: v, d });
            }
        }
        Ok(())
    }

    /// Every ordered pair of distinct levels.
    pub fn all(d: usize) -> impl Iterator<Item = PairSpec> {
        (0..d).flat_map(move |a| (0..d).filter(move |&b| b != a).map(move |b| PairSpec(a, b)))
    }
}

impl fmt::Display for PairSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.0, self.1)
    }
}

/// Sparse pure state of `n` qudits of dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuditState<T: Real> {
    d: usize,
    n: usize,
    terms: BTreeMap<Vec<usize>, Amp<T>>,
}

impl<T: Real> QuditState<T> {
    pub fn zero(d: usize, n: usize) -> Self {
        Self {
            d,
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn basis(d: usize, digits: &[usize]) -> Result<Self> {
        Self::from_terms(d, digits.len(), [(digits.to_vec(), cone())])
    }

    pub fn from_terms<I>(d: usize, n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, Amp<T>)>,
    {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        let mut s = Self::zero(d, n);
        for (digits, a) in terms {
            if digits.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: digits.len(),
                });
            }
            if let Some(&v) = digits.iter().find(|&&v| v >= d) {
                return Err(Error::LevelOutOfRange { value: v, d });
            }
            s.accumulate(digits, a);
        }
        s.prune();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn qudit_count(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &Amp<T>)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, digits: &[usize]) -> Amp<T> {
        self.terms.get(digits).copied().unwrap_or_else(czero)
    }

    pub fn norm_sqr(&self) -> T {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr().as_f64() - 1.0).abs() <= T::NORM_TOL
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= T::zero() {
            return Err(Error::NotNormalized { norm_sqr: 0.0 });
        }
        Ok(self.scaled(creal(n.sqrt().recip())))
    }

    pub fn scaled(&self, factor: Amp<T>) -> Self {
        let mut s = Self::zero(self.d, self.n);
        for (k, a) in &self.terms {
            s.terms.insert(k.clone(), *a * factor);
        }
        s.prune();
        s
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Amp<T> {
        let mut s = czero();
        for (k, a) in &self.terms {
            if let Some(b) = other.terms.get(k) {
                s = s + a.conj() * b;
            }
        }
        s
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (k, a) in &self.terms {
            worst = worst.max((*a - other.amplitude(k)).norm().as_f64());
        }
        for (k, a) in &other.terms {
            if !self.terms.contains_key(k) {
                worst = worst.max(a.norm().as_f64());
            }
        }
        worst
    }

    /// `|<self|other>|^2` for normalized inputs.
    pub fn fidelity(&self, other: &Self) -> T {
        self.inner(other).norm_sqr()
    }

    /// `|self> ⊗ |other>`.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut s = Self::zero(self.d, self.n + other.n);
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let mut k = ka.clone();
                k.extend_from_slice(kb);
                s.accumulate(k, *a * *b);
            }
        }
        s.prune();
        Ok(s)
    }

    pub(crate) fn accumulate(&mut self, digits: Vec<usize>, a: Amp<T>) {
        let e = self.terms.entry(digits).or_insert_with(czero);
        *e = *e + a;
    }

    pub(crate) fn prune(&mut self) {
        let thr = T::lit(T::PRUNE);
        self.terms.retain(|_, a| a.norm() > thr);
    }

    /// Reorders qudits: new qudit `q` is old qudit `order[q]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: order.len(),
            });
        }
        let mut seen = vec![false; self.n];
        for &o in order {
            if o >= self.n {
                return Err(Error::QuditOutOfRange { index: o, count: self.n });
            }
            if std::mem::replace(&mut seen[o], true) {
                return Err(Error::MalformedRegister(format!("qudit {o} repeated")));
            }
        }
        let mut s = Self::zero(self.d, self.n);
        for (k, a) in &self.terms {
            s.terms.insert(order.iter().map(|&o| k[o]).collect(), *a);
        }
        Ok(s)
    }
}

fn inv_sqrt<T: Real>(x: usize) -> T {
    T::from_usize_lossy(x).sqrt().recip()
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        Err(Error::InvalidDimension(d))
    } else {
        Ok(())
    }
}

/// `(|i>|j> ± |j>|i>) / sqrt(2)`.
pub fn pairwise_psi<T: Real>(d: usize, i: usize, j: usize, sign: Sign) -> Result<QuditState<T>> {
    check_dim(d)?;
    PairSpec::new(i, j)?.check(d)?;
    let h: T = inv_sqrt(2);
    QuditState::from_terms(
        d,
        2,
        [(vec![i, j], creal(h)), (vec![j, i], creal(h * sign.factor::<T>()))],
    )
}

/// `(|i>|i> ± |j>|j>) / sqrt(2)`.
pub fn pairwise_phi<T: Real>(d: usize, i: usize, j: usize, sign: Sign) -> Result<QuditState<T>> {
    check_dim(d)?;
    PairSpec::new(i, j)?.check(d)?;
    let h: T = inv_sqrt(2);
    QuditState::from_terms(
        d,
        2,
        [(vec![i, i], creal(h)), (vec![j, j], creal(h * sign.factor::<T>()))],
    )
}

/// `sum_i |i>^{⊗n} / sqrt(d)`.
pub fn ghz<T: Real>(d: usize, n: usize) -> Result<QuditState<T>> {
    check_dim(d)?;
    if n == 0 {
        return Err(Error::InvalidParameter("GHZ state needs n >= 1".into()));
    }
    let a: T = inv_sqrt(d);
    QuditState::from_terms(d, n, (0..d).map(|i| (vec![i; n], creal(a))))
}

/// `(|i>^{⊗n} ± |j>^{⊗n}) / sqrt(2)`, the GHZ state restricted to levels `{i, j}`.
pub fn ghz_pair<T: Real>(d: usize, i: usize, j: usize, n: usize, sign: Sign) -> Result<QuditState<T>> {
    check_dim(d)?;
    PairSpec::new(i, j)?.check(d)?;
    let h: T = inv_sqrt(2);
    QuditState::from_terms(
        d,
        n,
        [(vec![i; n], creal(h)), (vec![j; n], creal(h * sign.factor::<T>()))],
    )
}

/// `(|i>^{⊗half}|j>^{⊗half} ± |j>^{⊗half}|i>^{⊗half}) / sqrt(2)` on `2*half` qudits.
pub fn xi_state<T: Real>(d: usize, i: usize, j: usize, half: usize, sign: Sign) -> Result<QuditState<T>> {
    check_dim(d)?;
    PairSpec::new(i, j)?.check(d)?;
    let h: T = inv_sqrt(2);
    let mut a = vec![i; half];
    a.extend(std::iter::repeat(j).take(half));
    let mut b = vec![j; half];
    b.extend(std::iter::repeat(i).take(half));
    QuditState::from_terms(d, 2 * half, [(a, creal(h)), (b, creal(h * sign.factor::<T>()))])
}

/// `sum_{i,j} |i, i+j, j> / d` with indices mod `d`.
pub fn c_state<T: Real>(d: usize) -> Result<QuditState<T>> {
    check_dim(d)?;
    let a: T = T::from_usize_lossy(d).recip();
    QuditState::from_terms(
        d,
        3,
        (0..d).flat_map(|i| (0..d).map(move |j| (vec![i, (i + j) % d, j], creal(a)))),
    )
}

/// `sum_{i,j} (|i, i+x0, j+y1, j> ± |i, i+x1, j+y0, j>) / (d sqrt 2)`.
pub fn psi_intermediate<T: Real>(d: usize, x: PairSpec, y: PairSpec, sign: Sign) -> Result<QuditState<T>> {
    check_dim(d)?;
    x.check(d)?;
    y.check(d)?;
    let a: T = T::from_usize_lossy(d).recip() * inv_sqrt::<T>(2);
    let s = sign.factor::<T>();
    let mut terms = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for j in 0..d {
            terms.push((vec![i, (i + x.0) % d, (j + y.1) % d, j], creal(a)));
            terms.push((vec![i, (i + x.1) % d, (j + y.0) % d, j], creal(a * s)));
        }
    }
    QuditState::from_terms(d, 4, terms)
}

/// d-rail encoding: qudit `q` at level `i` becomes one photon in mode `q*d + i`.
pub fn encode<T: Real>(psi: &QuditState<T>) -> FockVector<T> {
    let d = psi.dim();
    let modes = d * psi.qudit_count();
    let terms = psi.iter().map(|(digits, a)| {
        let mut occ = vec![0u8; modes];
        for (q, &i) in digits.iter().enumerate() {
            occ[q * d + i] = 1;
        }
        (FockBasisState::new(occ), *a)
    });
    FockVector::from_terms(modes, terms).expect("encoded basis states have the right mode count")
}

/// Inverse of [`encode`]; fails on any term with a block not holding exactly one photon.
pub fn decode<T: Real>(phi: &FockVector<T>, d: usize) -> Result<QuditState<T>> {
    check_dim(d)?;
    let m = phi.mode_count();
    if m % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d * m.div_ceil(d),
            got: m,
        });
    }
    let n = m / d;
    let mut terms = Vec::with_capacity(phi.len());
    for (b, a) in phi.iter() {
        let occ = b.occupations();
        let mut digits = Vec::with_capacity(n);
        for q in 0..n {
            let block = &occ[q * d..(q + 1) * d];
            let photons: usize = block.iter().map(|&x| x as usize).sum();
            if photons != 1 {
                return Err(Error::OutsideCodeSpace(format!(
                    "term {b} has {photons} photons in block {q}"
                )));
            }
            digits.push(block.iter().position(|&x| x == 1).expect("one photon present"));
        }
        terms.push((digits, *a));
    }
    QuditState::from_terms(d, n, terms)
}

/// Coefficient matrix across the cut `left | rest` (rows indexed by the
/// `left` qudits in the order given).
pub fn bipartite_matrix<T: Real>(psi: &QuditState<T>, left: &[usize]) -> Result<DMatrix<Complex64>> {
    let n = psi.qudit_count();
    let d = psi.dim();
    for &q in left {
        if q >= n {
            return Err(Error::QuditOutOfRange { index: q, count: n });
        }
    }
    let right: Vec<usize> = (0..n).filter(|q| !left.contains(q)).collect();
    let index = |digits: &[usize], qs: &[usize]| qs.iter().fold(0usize, |acc, &q| acc * d + digits[q]);
    let rows = d.pow(left.len() as u32);
    let cols = d.pow(right.len() as u32);
    let mut m = DMatrix::<Complex64>::zeros(rows, cols);
    for (digits, a) in psi.iter() {
        m[(index(digits, left), index(digits, &right))] += to_c64(*a);
    }
    Ok(m)
}

/// Schmidt coefficients across `left | rest`, largest first.
pub fn schmidt_coefficients<T: Real>(psi: &QuditState<T>, left: &[usize]) -> Result<Vec<f64>> {
    let m = bipartite_matrix(psi, left)?;
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Number of Schmidt coefficients above `tol`.
pub fn schmidt_rank<T: Real>(psi: &QuditState<T>, left: &[usize], tol: f64) -> Result<usize> {
    Ok(schmidt_coefficients(psi, left)?.into_iter().filter(|&s| s > tol).count())
}

/// Reduced density matrix of a single qudit.
pub fn reduced_density<T: Real>(psi: &QuditState<T>, qudit: usize) -> Result<DMatrix<Complex64>> {
    let m = bipartite_matrix(psi, &[qudit])?;
    Ok(&m * m.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    type Q = QuditState<f64>;

    #[test]
    fn encode_single_qudit() {
        let v = encode(&Q::basis(3, &[1]).unwrap());
        assert_eq!(v.len(), 1);
        assert_eq!(v.amplitude(&FockBasisState::from(&[0u8, 1, 0][..])), c(1.0, 0.0));
        let v = encode(&Q::basis(2, &[0, 1]).unwrap());
        assert_eq!(v.amplitude(&FockBasisState::from(&[1u8, 0, 0, 1][..])), c(1.0, 0.0));
    }

    #[test]
    fn encode_superposition() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let q = Q::from_terms(3, 1, [(vec![0], c(r, 0.0)), (vec![2], c(r, 0.0))]).unwrap();
        let v = encode(&q);
        assert_eq!(v.amplitude(&FockBasisState::from(&[1u8, 0, 0][..])), c(r, 0.0));
        assert_eq!(v.amplitude(&FockBasisState::from(&[0u8, 0, 1][..])), c(r, 0.0));
        assert!(v.is_normalized());
    }

    #[test]
    fn decode_examples() {
        let v = FockVector::<f64>::basis(FockBasisState::from(&[1u8, 0, 0, 1, 0, 0][..]));
        assert_eq!(decode(&v, 3).unwrap(), Q::basis(3, &[0, 0]).unwrap());
        let bad = FockVector::<f64>::basis(FockBasisState::from(&[2u8, 0, 0][..]));
        assert!(matches!(decode(&bad, 3), Err(Error::OutsideCodeSpace(_))));
        assert!(decode(&FockVector::<f64>::vacuum(4), 3).is_err());
    }

    #[test]
    fn pairwise_definitions() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let p = pairwise_psi::<f64>(3, 0, 1, Sign::Plus).unwrap();
        assert!((p.amplitude(&[0, 1]) - c(r, 0.0)).norm() < 1e-15);
        assert!((p.amplitude(&[1, 0]) - c(r, 0.0)).norm() < 1e-15);
        let f = pairwise_phi::<f64>(3, 0, 2, Sign::Minus).unwrap();
        assert!((f.amplitude(&[0, 0]) - c(r, 0.0)).norm() < 1e-15);
        assert!((f.amplitude(&[2, 2]) - c(-r, 0.0)).norm() < 1e-15);
        let m = pairwise_psi::<f64>(3, 0, 1, Sign::Minus).unwrap();
        assert!(p.inner(&m).norm() < 1e-15);
        assert!(matches!(pairwise_psi::<f64>(3, 1, 1, Sign::Plus), Err(Error::DegeneratePair(1))));
        assert!(pairwise_phi::<f64>(3, 1, 3, Sign::Plus).is_err());
    }

    #[test]
    fn ghz_examples() {
        let g = ghz::<f64>(2, 2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(g.len(), 2);
        assert!((g.amplitude(&[1, 1]) - c(r, 0.0)).norm() < 1e-15);
        let g = ghz::<f64>(3, 4).unwrap();
        assert_eq!(g.len(), 3);
        for (_, a) in g.iter() {
            assert!((a.re - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        }
        for d in 2..=10 {
            for n in 1..=6 {
                assert!(ghz::<f64>(d, n).unwrap().is_normalized());
            }
        }
    }

    #[test]
    fn c_state_qubit() {
        let s = c_state::<f64>(2).unwrap();
        let expect = Q::from_terms(
            2,
            3,
            [
                (vec![0, 0, 0], c(0.5, 0.0)),
                (vec![1, 1, 0], c(0.5, 0.0)),
                (vec![0, 1, 1], c(0.5, 0.0)),
                (vec![1, 0, 1], c(0.5, 0.0)),
            ],
        )
        .unwrap();
        assert!(s.max_abs_diff(&expect) < 1e-15);
        assert!(s.is_normalized());
    }

    #[test]
    fn c_state_marginals_maximally_mixed() {
        for d in 2..=6 {
            let s = c_state::<f64>(d).unwrap();
            for q in 0..3 {
                let rho = reduced_density(&s, q).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        let expect = if i == j { 1.0 / d as f64 } else { 0.0 };
                        assert!((rho[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn psi_intermediate_structure() {
        let x = PairSpec(0, 1);
        let s = psi_intermediate::<f64>(3, x, x, Sign::Plus).unwrap();
        assert_eq!(s.len(), 18);
        assert!(s.is_normalized());
        assert_eq!(schmidt_rank(&s, &[0, 1], 1e-9).unwrap(), 2);
        assert_eq!(schmidt_rank(&s, &[0], 1e-9).unwrap(), 3);
        assert_eq!(schmidt_rank(&s, &[0, 1, 2], 1e-9).unwrap(), 3);
        assert!(psi_intermediate::<f64>(3, PairSpec(1, 1), x, Sign::Plus).is_err());
    }

    #[test]
    fn pair_spec_rules() {
        assert!(PairSpec::new(2, 2).is_err());
        assert_eq!(PairSpec(3, 1).canonical(), PairSpec(1, 3));
        assert_eq!(PairSpec::all(4).count(), 12);
    }
}
