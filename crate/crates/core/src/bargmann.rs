//! Truncated Bargmann representation: number basis as monomials, ladder
//! matrices, coherent vectors, reproducing kernel and the scalar product.
//!
//! Function-space quantities are computed in the annihilation picture, where
//! `|n⟩ ∝ z^n`. A creation-mode algebra is handled through its dual with the
//! index reflection `n ↦ -n`: its `|n⟩` is the same function as the dual's
//! `|-n⟩`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{CoherentDomain, DeformedAlgebra, Mode, SpectrumDescriptor};
use crate::diagnostics::{CheckKind, CheckStatus, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::quadrature::composite_gauss_legendre;
use crate::weightfn::Family;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Index range `n_min..=n_max` of the algebra's number basis together with
/// the monomial coefficient of each `|n⟩`.
#[derive(Debug, Clone)]
pub struct TruncatedBasis {
    n_min: i64,
    n_max: i64,
    mode: Mode,
    /// `ln` of the coefficient of `z^{m(n)}` in `|n⟩`, from `ψ(n)!`.
    ln_coefficients: Vec<f64>,
    /// `ln F̂(m+1) - ln F̂(1)`, from the Mellin transform directly.
    ln_moments: Vec<f64>,
}

impl TruncatedBasis {
    /// Default truncation: 64 levels above the ground state and, for spectrum
    /// `Z`, 64 below (mirrored in creation mode).
    pub fn default_for(alg: &DeformedAlgebra) -> Result<Self> {
        Self::with_depth(alg, 64, 64)
    }

    /// `up` levels on the unbounded side of the spectrum and `down` levels on
    /// the other side (clipped at a bounded edge).
    pub fn with_depth(alg: &DeformedAlgebra, up: i64, down: i64) -> Result<Self> {
        if up < 1 || down < 0 {
            return Err(Error::InvalidParameter(format!(
                "bad truncation depth ({up}, {down})"
            )));
        }
        let (n_min, n_max) = match alg.spectrum() {
            SpectrumDescriptor::AllIntegers => match alg.mode() {
                Mode::Annihilation => (-down, up),
                Mode::Creation => (-up, down),
            },
            SpectrumDescriptor::LowerBounded { lambda } => (lambda.max(-down), up),
            SpectrumDescriptor::UpperBounded { lambda } => (-up, lambda.min(down)),
        };
        Self::new(alg, n_min, n_max)
    }

    pub fn new(alg: &DeformedAlgebra, n_min: i64, n_max: i64) -> Result<Self> {
        if n_min >= n_max {
            return Err(Error::InvalidParameter(format!(
                "empty basis {n_min}..={n_max}"
            )));
        }
        let spectrum = alg.spectrum();
        if !spectrum.contains(n_min) || !spectrum.contains(n_max) {
            return Err(Error::Domain(format!(
                "basis {n_min}..={n_max} leaves the spectrum {spectrum:?}"
            )));
        }
        let mode = alg.mode();
        let view = annihilation_view(alg);
        let exps: Vec<i64> = (n_min..=n_max).map(|n| exponent(mode, n)).collect();
        let (lo, hi) = (*exps.iter().min().unwrap(), *exps.iter().max().unwrap());
        let signed = signed_ln_factorials(&view, lo, hi)?;
        let ln_f1 = view.profile().ln_value(1.0)?;
        let mut ln_coefficients = Vec::with_capacity(exps.len());
        let mut ln_moments = Vec::with_capacity(exps.len());
        for m in &exps {
            ln_coefficients.push(-0.5 * signed[(m - lo) as usize]);
            ln_moments.push(view.profile().ln_value(*m as f64 + 1.0)? - ln_f1);
        }
        Ok(Self {
            n_min,
            n_max,
            mode,
            ln_coefficients,
            ln_moments,
        })
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }

    pub fn position(&self, n: i64) -> Option<usize> {
        (n >= self.n_min && n <= self.n_max).then(|| (n - self.n_min) as usize)
    }

    /// Power of `z` carried by `|n⟩`.
    pub fn exponent(&self, n: i64) -> i64 {
        exponent(self.mode, n)
    }

    /// Coefficient of the monomial in `|n⟩`: `(ψ(n)!)^{-1/2}` for `n ≥ 0`,
    /// `(ψ(n)!)^{1/2}` below (annihilation picture).
    pub fn norm_table(&self) -> Vec<(i64, f64)> {
        self.indices()
            .zip(&self.ln_coefficients)
            .map(|(n, c)| (n, c.exp()))
            .collect()
    }

    pub fn ln_coefficient(&self, n: i64) -> f64 {
        self.ln_coefficients[self.position(n).expect("index in basis")]
    }

    /// `‖|n⟩‖²` from the radial moments, `F̂(m+1)/F̂(1) · coefficient²`; `1` up to
    /// the accuracy of the moment identity.
    pub fn moment_norm(&self, n: i64) -> f64 {
        let i = self.position(n).expect("index in basis");
        (self.ln_moments[i] + 2.0 * self.ln_coefficients[i]).exp()
    }
}

fn exponent(mode: Mode, n: i64) -> i64 {
    match mode {
        Mode::Annihilation => n,
        Mode::Creation => -n,
    }
}

fn annihilation_view(alg: &DeformedAlgebra) -> DeformedAlgebra {
    match alg.mode() {
        Mode::Annihilation => alg.clone(),
        Mode::Creation => alg.dual(),
    }
}

/// `s(m) = ln ψ(m)!` for `m ≥ 0` and `-ln ψ(m)!` below, for `m ∈ lo..=hi`,
/// accumulated outward from `0` with the recurrence `ψ(m)! = ψ(m-1)!·ψ(m)`.
fn signed_ln_factorials(view: &DeformedAlgebra, lo: i64, hi: i64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; (hi - lo + 1) as usize];
    let mut acc = 0.0;
    for m in 1..=hi.max(0) {
        acc += view.psi_index(m)?.ln();
        if m >= lo {
            out[(m - lo) as usize] = acc;
        }
    }
    acc = 0.0;
    for m in (lo.min(0)..0).rev() {
        acc -= view.psi_index(m + 1)?.ln();
        if m <= hi {
            out[(m - lo) as usize] = acc;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorLabel {
    A,
    ADagger,
    N,
}

/// Dense matrix over the basis; row/column `i` is `|n_min + i⟩`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub label: OperatorLabel,
    pub n_min: i64,
    pub entries: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub a: OperatorMatrix,
    pub a_dagger: OperatorMatrix,
    pub number: OperatorMatrix,
    /// `a` and `a†` obtained by acting with `z·` and `z^{-1}ψ(z d/dz)` on
    /// the monomials of the basis.
    pub a_function: OperatorMatrix,
    pub a_dagger_function: OperatorMatrix,
}

pub fn operator_matrices(alg: &DeformedAlgebra, basis: &TruncatedBasis) -> Result<OperatorSet> {
    let dim = basis.len();
    let mut a = DMatrix::zeros(dim, dim);
    let mut ad = DMatrix::zeros(dim, dim);
    let mut number = DMatrix::zeros(dim, dim);
    for n in basis.indices() {
        let j = basis.position(n).unwrap();
        number[(j, j)] = n as f64 + alg.mu();
        if let Some(i) = basis.position(n - 1) {
            a[(i, j)] = alg.psi_index(n)?.sqrt();
        }
        if let Some(i) = basis.position(n + 1) {
            ad[(i, j)] = alg.psi_index(n + 1)?.sqrt();
        }
    }

    // Function route. With e_m = C_m z^m in the annihilation picture:
    // z^{-1}ψ(z d/dz) e_m = ψ(m) C_m/C_{m-1} e_{m-1} and z e_m = C_m/C_{m+1} e_{m+1}.
    let view = annihilation_view(alg);
    let ln_l = |m: i64| -> Result<f64> {
        let p = view.profile();
        Ok(p.ln_value(m as f64 + 1.0)? - p.ln_value(1.0)?)
    };
    let ln_coef = |m: i64| ln_l(m).map(|l| -0.5 * l);
    let mut lower_fn = DMatrix::zeros(dim, dim);
    let mut raise_fn = DMatrix::zeros(dim, dim);
    for n in basis.indices() {
        let j = basis.position(n).unwrap();
        let m = basis.exponent(n);
        // image index in the algebra's labels for m-1 and m+1
        let down = match basis.mode {
            Mode::Annihilation => n - 1,
            Mode::Creation => n + 1,
        };
        let up = match basis.mode {
            Mode::Annihilation => n + 1,
            Mode::Creation => n - 1,
        };
        if let Some(i) = basis.position(down) {
            let psi = view.psi_index(m)?;
            lower_fn[(i, j)] = if psi == 0.0 {
                0.0
            } else {
                psi * (ln_coef(m)? - ln_coef(m - 1)?).exp()
            };
        }
        if let Some(i) = basis.position(up) {
            raise_fn[(i, j)] = (ln_coef(m)? - ln_coef(m + 1)?).exp();
        }
    }
    let (a_fn, ad_fn) = match alg.mode() {
        Mode::Annihilation => (lower_fn, raise_fn),
        Mode::Creation => (raise_fn, lower_fn),
    };
    let wrap = |label, entries| OperatorMatrix {
        label,
        n_min: basis.n_min,
        entries,
    };
    Ok(OperatorSet {
        a: wrap(OperatorLabel::A, a),
        a_dagger: wrap(OperatorLabel::ADagger, ad),
        number: wrap(OperatorLabel::N, number),
        a_function: wrap(OperatorLabel::A, a_fn),
        a_dagger_function: wrap(OperatorLabel::ADagger, ad_fn),
    })
}

#[derive(Debug, Clone)]
pub struct CoherentVector {
    pub z: Complex64,
    pub n_min: i64,
    pub coefficients: Vec<Complex64>,
    pub norm_sq: f64,
    /// Bound on `Σ |c_n|²` over the indices cut off by the truncation.
    pub tail_bound: f64,
}

impl CoherentVector {
    pub fn coefficient(&self, n: i64) -> Complex64 {
        self.coefficients[(n - self.n_min) as usize]
    }
}

/// `c_n = z^n (ψ(n)!)^{∓1/2}` on the truncation, with `c` at the origin `1`.
pub fn coherent_vector(
    alg: &DeformedAlgebra,
    z: Complex64,
    basis: &TruncatedBasis,
) -> Result<CoherentVector> {
    let domain = alg.domain();
    if !domain.contains(z.norm_sqr()) && !(z == Complex64::new(0.0, 0.0) && domain.inner_sq == 0.0)
    {
        return Err(Error::Domain(format!(
            "|z|^2 = {} outside the coherent domain ({}, {})",
            z.norm_sqr(),
            domain.inner_sq,
            domain.outer_sq
        )));
    }
    coherent_coefficients(alg, z, basis)
}

/// Same coefficients without the domain check, for probing divergence.
pub fn coherent_coefficients(
    alg: &DeformedAlgebra,
    z: Complex64,
    basis: &TruncatedBasis,
) -> Result<CoherentVector> {
    let r = z.norm();
    let theta = z.arg();
    let coefficients: Vec<Complex64> = basis
        .indices()
        .map(|n| {
            let m = basis.exponent(n);
            if r == 0.0 {
                return if m == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            let ln_mag = m as f64 * r.ln() + basis.ln_coefficient(n);
            Complex64::from_polar(ln_mag.exp(), m as f64 * theta)
        })
        .collect();
    let norm_sq = coefficients.iter().map(|c| c.norm_sqr()).sum();

    // |c_{m+1}|²/|c_m|² = |z|²/ψ(m+1), nonincreasing in m since ψ is.
    let view = annihilation_view(alg);
    let z2 = r * r;
    let (m_lo, m_hi) = {
        let a = basis.exponent(basis.n_min);
        let b = basis.exponent(basis.n_max);
        (a.min(b), a.max(b))
    };
    let edge_sq = |m: i64| coefficients[basis.position(index_of(basis, m)).unwrap()].norm_sqr();
    let mut tail = 0.0;
    let q_up = z2 / view.psi_index(m_hi + 1)?;
    tail += if q_up < 1.0 {
        edge_sq(m_hi) * q_up / (1.0 - q_up)
    } else {
        f64::INFINITY
    };
    if view.spectrum().contains(m_lo - 1) {
        let psi = view.psi_index(m_lo)?;
        let q_down = psi / z2;
        tail += if psi == 0.0 {
            0.0
        } else if q_down < 1.0 {
            edge_sq(m_lo) * q_down / (1.0 - q_down)
        } else {
            f64::INFINITY
        };
    }
    if r == 0.0 {
        tail = 0.0;
    }
    Ok(CoherentVector {
        z,
        n_min: basis.n_min,
        coefficients,
        norm_sq,
        tail_bound: tail,
    })
}

fn index_of(basis: &TruncatedBasis, m: i64) -> i64 {
    match basis.mode {
        Mode::Annihilation => m,
        Mode::Creation => -m,
    }
}

/// `‖(A - z)|z⟩‖` on the truncation, `A = a` in annihilation mode and `a†` in
/// creation mode. Includes the component pushed out of the basis at its
/// lower (resp. upper) edge. Returns `(unnormalized, normalized)`.
pub fn eigen_residual(
    alg: &DeformedAlgebra,
    ops: &OperatorSet,
    v: &CoherentVector,
    basis: &TruncatedBasis,
) -> Result<(f64, f64)> {
    let op = match alg.mode() {
        Mode::Annihilation => &ops.a.entries,
        Mode::Creation => &ops.a_dagger.entries,
    };
    let dim = basis.len();
    let mut sq = 0.0;
    for i in 0..dim {
        let mut acc = -v.z * v.coefficients[i];
        for j in 0..dim {
            let e = op[(i, j)];
            if e != 0.0 {
                acc += v.coefficients[j] * e;
            }
        }
        sq += acc.norm_sqr();
    }
    let leak = match alg.mode() {
        Mode::Annihilation => alg.psi_index(basis.n_min)? * v.coefficients[0].norm_sqr(),
        Mode::Creation => alg.psi_index(basis.n_max + 1)? * v.coefficients[dim - 1].norm_sqr(),
    };
    sq += leak;
    let un = sq.sqrt();
    Ok((un, un / v.norm_sq.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub re: f64,
    pub im: f64,
    #[serde(with = "crate::serde_float")]
    pub tail_bound: f64,
    pub terms: usize,
}

impl KernelValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

const KERNEL_MAX_TERMS: i64 = 20_000;

/// `G(x) = F̂(1) Σ x^m / F̂(m+1)`, summed outward from `m = 0` until the
/// geometric tail bound drops below `1e-17` of the partial sum.
pub fn kernel(alg: &DeformedAlgebra, x: Complex64) -> Result<KernelValue> {
    let view = annihilation_view(alg);
    let domain = alg.domain();
    let r = x.norm();
    let lower = view.spectrum().lower();
    if r >= domain.outer_sq || (lower.is_none() && r <= domain.inner_sq) {
        return Err(Error::Domain(format!(
            "|x| = {r} outside the kernel domain ({}, {})",
            domain.inner_sq, domain.outer_sq
        )));
    }
    if r == 0.0 {
        return match lower {
            Some(0) => Ok(KernelValue {
                re: 1.0,
                im: 0.0,
                tail_bound: 0.0,
                terms: 1,
            }),
            _ => Err(Error::Domain("G(0) needs negative powers of x".into())),
        };
    }
    let p = view.profile();
    let ln_f1 = p.ln_value(1.0)?;
    let (ln_r, theta) = (r.ln(), x.arg());
    let term = |m: i64| -> Result<Complex64> {
        let ln_mag = m as f64 * ln_r - (p.ln_value(m as f64 + 1.0)? - ln_f1);
        Ok(Complex64::from_polar(ln_mag.exp(), m as f64 * theta))
    };

    let mut sum = term(0)?;
    let mut terms = 1usize;
    let mut tail = 0.0;

    let mut m = 0i64;
    loop {
        m += 1;
        let t = term(m)?;
        sum += t;
        terms += 1;
        let q = r / view.psi_index(m + 1)?;
        if q < 1.0 {
            let bound = t.norm() * q / (1.0 - q);
            if bound <= 1e-17 * sum.norm() {
                tail += bound;
                break;
            }
        }
        if m >= KERNEL_MAX_TERMS {
            return Err(Error::numerical(
                "kernel series did not converge upward",
                sum.re,
                f64::INFINITY,
            ));
        }
    }

    let floor = lower.unwrap_or(i64::MIN);
    let mut m = 0i64;
    while m > floor {
        m -= 1;
        let t = term(m)?;
        sum += t;
        terms += 1;
        if m == floor {
            break;
        }
        let q = view.psi_index(m)? / r;
        if q < 1.0 {
            let bound = t.norm() * q / (1.0 - q);
            if bound <= 1e-17 * sum.norm() {
                tail += bound;
                break;
            }
        }
        if -m >= KERNEL_MAX_TERMS {
            return Err(Error::numerical(
                "kernel series did not converge downward",
                sum.re,
                f64::INFINITY,
            ));
        }
    }
    Ok(KernelValue {
        re: sum.re,
        im: sum.im,
        tail_bound: tail,
        terms,
    })
}

/// Truncated overlap `⟨ζ|z⟩ = Σ c_n(z) conj(c_n(ζ))`.
pub fn overlap(zeta: &CoherentVector, z: &CoherentVector) -> Complex64 {
    z.coefficients
        .iter()
        .zip(&zeta.coefficients)
        .map(|(a, b)| a * b.conj())
        .sum()
}

/// Normalization constant `c` of the measure `c F(|z|²) dz dz̄`, fixed by
/// `⟨0|0⟩ = 1` in the annihilation picture: `c = 1/(π F̂(1))`.
pub fn measure_constant(alg: &DeformedAlgebra) -> Result<f64> {
    Ok(1.0 / (std::f64::consts::PI * alg.profile().normalization()?))
}

/// Radial-moment scalar product `(f, g) = Σ f_n conj(g_n) ‖|n⟩‖²`, linear in
/// `f`; angular integration has already removed the cross terms.
pub fn scalar_product(
    basis: &TruncatedBasis,
    f: &[Complex64],
    g: &[Complex64],
) -> Result<Complex64> {
    if f.len() != basis.len() || g.len() != basis.len() {
        return Err(Error::InvalidParameter(
            "coefficient vectors must match the basis".into(),
        ));
    }
    Ok(basis
        .indices()
        .zip(f.iter().zip(g))
        .map(|(n, (a, b))| a * b.conj() * basis.moment_norm(n))
        .sum())
}

/// Gram matrix of `|n⟩`, `n ∈ lo..=hi`, by direct quadrature of
/// `c ∫ F(|z|²) e_m(z) conj(e_n(z)) dz dz̄` on a polar grid: trapezoid in
/// the angle, composite Gauss–Legendre in `t = ln r²`.
pub fn gram_quadrature(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    lo: i64,
    hi: i64,
) -> Result<DMatrix<Complex64>> {
    if basis.position(lo).is_none() || basis.position(hi).is_none() || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "Gram block {lo}..={hi} outside the basis"
        )));
    }
    let w = alg.profile().weight();
    let idx: Vec<i64> = (lo..=hi).collect();
    let exps: Vec<i64> = idx.iter().map(|n| basis.exponent(*n)).collect();
    let coef: Vec<f64> = idx.iter().map(|n| basis.ln_coefficient(*n)).collect();
    let c = measure_constant(alg)?;

    // Radial support: each normalized diagonal integrand F(e^t) e^{(m+1)t} C_m²
    // must have dropped by e^-50 at the cut.
    let (tlo, thi) = w.interval.log_bounds();
    let mut a = f64::INFINITY;
    let mut b = f64::NEG_INFINITY;
    for (m, cm) in exps.iter().zip(&coef) {
        let g = |t: f64| w.ln_at_log(t) + (*m as f64 + 1.0) * t + 2.0 * cm;
        let (sa, sb) = log_support(&g, tlo, thi, 50.0)?;
        a = a.min(sa);
        b = b.max(sb);
    }
    let mut breaks = graded_panels(a, b, tlo.is_finite(), thi.is_finite());
    if let Family::Tabulated(tab) = &w.family {
        breaks.extend(
            tab.xs()
                .iter()
                .filter(|x| **x > 0.0)
                .map(|x| x.ln())
                .filter(|t| *t > a && *t < b),
        );
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let radial = composite_gauss_legendre(&breaks, 20);

    let span = exps.iter().max().unwrap() - exps.iter().min().unwrap();
    let k = (4 * (span as usize + 1)).max(64);
    let dtheta = 2.0 * std::f64::consts::PI / k as f64;

    let dim = idx.len();
    let mut gram = DMatrix::<Complex64>::zeros(dim, dim);
    let mut vals = vec![Complex64::new(0.0, 0.0); dim];
    for (t, wt) in radial {
        let ln_f = w.ln_at_log(t);
        if ln_f == f64::NEG_INFINITY {
            continue;
        }
        // dz dz̄ = r dr dθ = ½ e^t dt dθ; the square root of the weight is split
        // between the two factors.
        let ln_half_weight = 0.5 * ((c * wt * 0.5 * dtheta).ln() + ln_f + t);
        for j in 0..k {
            let theta = j as f64 * dtheta;
            for (v, (m, cm)) in vals.iter_mut().zip(exps.iter().zip(&coef)) {
                let ln_mag = ln_half_weight + cm + 0.5 * *m as f64 * t;
                *v = Complex64::from_polar(ln_mag.exp(), *m as f64 * theta);
            }
            for p in 0..dim {
                for q in 0..dim {
                    gram[(p, q)] += vals[p] * vals[q].conj();
                }
            }
        }
    }
    Ok(gram)
}

/// Interval in `t` outside which `g` stays below its maximum minus `drop`.
fn log_support<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64, drop: f64) -> Result<(f64, f64)> {
    let t0 = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    };
    let mut gmax = g(t0);
    let mut ends = [lo, hi];
    for (side, end) in [(-1.0, lo), (1.0, hi)] {
        if end.is_finite() {
            // scan for the maximum; the finite end itself is kept
            let n = 200;
            for i in 0..=n {
                let t = t0 + (end - t0) * i as f64 / n as f64;
                let v = g(t);
                if v.is_finite() {
                    gmax = gmax.max(v);
                }
            }
            continue;
        }
        let mut step = 0.25;
        let mut t = t0;
        let mut prev = g(t);
        let mut found = false;
        for _ in 0..400 {
            t += side * step;
            let v = g(t);
            if v.is_finite() {
                gmax = gmax.max(v);
            }
            if v < gmax - drop && v <= prev {
                found = true;
                break;
            }
            prev = v;
            step = (step * 1.25).min(8.0);
        }
        if !found {
            return Err(Error::numerical(
                "radial integrand does not decay",
                f64::INFINITY,
                f64::INFINITY,
            ));
        }
        ends[if side < 0.0 { 0 } else { 1 }] = t;
    }
    Ok((ends[0], ends[1]))
}

/// Panels of width at most 0.25, geometrically refined towards finite ends.
fn graded_panels(a: f64, b: f64, fine_left: bool, fine_right: bool) -> Vec<f64> {
    let n = ((b - a) / 0.25).ceil().max(4.0) as usize;
    let h = (b - a) / n as f64;
    let mut out: Vec<f64> = (0..=n).map(|i| a + h * i as f64).collect();
    for j in 1..=40 {
        let d = h * 0.5f64.powi(j);
        if fine_left {
            out.push(a + d);
        }
        if fine_right {
            out.push(b - d);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Acceptance thresholds for [`verify_representation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub adjointness: f64,
    pub relations: f64,
    pub function_form: f64,
    pub gram_finite_edge: f64,
    pub gram_infinite_edge: f64,
    pub moments: f64,
    pub eigen_residual: f64,
    pub kernel_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            adjointness: 1e-8,
            relations: 1e-10,
            function_form: 1e-12,
            gram_finite_edge: 1e-6,
            gram_infinite_edge: 1e-5,
            moments: 1e-8,
            eigen_residual: 1e-6,
            kernel_slack: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub z_re: f64,
    pub z_im: f64,
    pub n_max: i64,
    pub inside: bool,
    #[serde(with = "crate::serde_float")]
    pub residual: f64,
    #[serde(with = "crate::serde_float")]
    pub normalized_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSample {
    pub z_re: f64,
    pub z_im: f64,
    pub zeta_re: f64,
    pub zeta_im: f64,
    pub kernel_re: f64,
    pub kernel_im: f64,
    pub overlap_re: f64,
    pub overlap_im: f64,
    #[serde(with = "crate::serde_float")]
    pub defect: f64,
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub report: DiagnosticsReport,
    pub measure_constant: f64,
    pub eigen_samples: Vec<EigenSample>,
    pub kernel_samples: Vec<KernelSample>,
}

/// Two values of `|z|²` well inside the domain, used for coherent residuals.
pub fn sample_moduli_sq(domain: &CoherentDomain) -> [f64; 2] {
    let (lo, hi) = (domain.inner_sq, domain.outer_sq);
    if !hi.is_finite() {
        [lo + 0.5, lo + 2.0]
    } else if lo > 0.0 {
        let mid = (lo * hi).sqrt();
        let spread = (hi / lo).powf(0.1);
        [mid / spread, mid * spread]
    } else {
        [0.2 * hi, 0.4 * hi]
    }
}

/// Deterministic pairs `(z, ζ)` spread over the inner part of the domain.
pub fn kernel_sample_pairs(domain: &CoherentDomain, count: usize) -> Vec<(Complex64, Complex64)> {
    let (lo, hi) = (domain.inner_sq, domain.outer_sq);
    let pick = |u: f64| -> f64 {
        if !hi.is_finite() {
            lo + 0.25 + 2.0 * u
        } else if lo > 0.0 {
            let (a, b) = (lo.ln(), hi.ln());
            (a + (b - a) * (0.3 + 0.4 * u)).exp()
        } else {
            hi * (0.1 + 0.4 * u)
        }
    };
    let frac = |x: f64| x - x.floor();
    (0..count)
        .map(|i| {
            let i = i as f64 + 1.0;
            let z = Complex64::from_polar(
                pick(frac(i * GOLDEN)).sqrt(),
                2.0 * std::f64::consts::PI * frac(i * GOLDEN * GOLDEN),
            );
            let zeta = Complex64::from_polar(
                pick(frac(i * GOLDEN + 0.5)).sqrt(),
                2.0 * std::f64::consts::PI * frac(i * 0.754_877_666_246_692_7),
            );
            (z, zeta)
        })
        .collect()
}

pub fn verify_representation(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    tol: &Tolerances,
) -> Result<DiagnosticsReport> {
    verify_representation_detailed(alg, basis, tol).map(|v| v.report)
}

pub fn verify_representation_detailed(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    tol: &Tolerances,
) -> Result<Verification> {
    let (gram, rest) = rayon::join(
        || gram_check(alg, basis, tol),
        || -> Result<_> {
            let ops = operator_matrices(alg, basis)?;
            let algebraic = algebraic_checks(alg, basis, &ops, tol)?;
            let (coherent, eigen) = coherent_checks(alg, basis, &ops, tol)?;
            let (kernel_report, kernel_samples) = kernel_checks(alg, basis, tol)?;
            Ok((algebraic, coherent, eigen, kernel_report, kernel_samples))
        },
    );
    let gram = gram?;
    let (algebraic, coherent, eigen_samples, kernel_report, kernel_samples) = rest?;
    let mut report = DiagnosticsReport::new();
    report.extend(algebraic);
    report.extend(gram);
    report.extend(coherent);
    report.extend(kernel_report);
    report.conclude();
    Ok(Verification {
        report,
        measure_constant: measure_constant(alg)?,
        eigen_samples,
        kernel_samples,
    })
}

fn scaled_defect(x: &DMatrix<f64>, y: &DMatrix<f64>, rows: std::ops::Range<usize>) -> f64 {
    let mut worst = 0.0f64;
    for i in rows.clone() {
        for j in rows.clone() {
            let (a, b) = (x[(i, j)], y[(i, j)]);
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
        }
    }
    worst
}

fn algebraic_checks(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    ops: &OperatorSet,
    tol: &Tolerances,
) -> Result<DiagnosticsReport> {
    let mut report = DiagnosticsReport::new();
    let dim = basis.len();
    let (a, ad, n) = (&ops.a.entries, &ops.a_dagger.entries, &ops.number.entries);

    // Adjoint of a† with respect to the moment metric G: G^{-1} (a†)ᵀ G.
    let metric: Vec<f64> = basis.indices().map(|k| basis.moment_norm(k)).collect();
    let mut adjoint = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            adjoint[(i, j)] = ad[(j, i)] * metric[j] / metric[i];
        }
    }
    report.measure(
        "adjointness",
        CheckKind::Verification,
        scaled_defect(a, &adjoint, 0..dim),
        tol.adjointness,
        "matrix of a equals the adjoint of a† in the scalar product of the basis",
    );

    let mut psi_n = DMatrix::zeros(dim, dim);
    let mut psi_n1 = DMatrix::zeros(dim, dim);
    for k in basis.indices() {
        let i = basis.position(k).unwrap();
        psi_n[(i, i)] = alg.psi_index(k)?;
        psi_n1[(i, i)] = alg.psi_index(k + 1)?;
    }
    let interior = 1..dim - 1;
    report.measure(
        "relation_adag_a",
        CheckKind::Verification,
        scaled_defect(&(ad * a), &psi_n, interior.clone()),
        tol.relations,
        "a†a = ψ(N) on the truncation interior",
    );
    report.measure(
        "relation_a_adag",
        CheckKind::Verification,
        scaled_defect(&(a * ad), &psi_n1, interior.clone()),
        tol.relations,
        "aa† = ψ(N+1) on the truncation interior",
    );
    report.measure(
        "relation_commutator",
        CheckKind::Verification,
        scaled_defect(&(a * n - n * a), a, interior),
        tol.relations,
        "[a, N] = a on the truncation interior",
    );
    let fn_defect = scaled_defect(a, &ops.a_function.entries, 0..dim).max(scaled_defect(
        ad,
        &ops.a_dagger_function.entries,
        0..dim,
    ));
    report.measure(
        "function_form",
        CheckKind::Verification,
        fn_defect,
        tol.function_form,
        "ladder matrices equal z· and z^-1 ψ(z d/dz) acting on the monomials",
    );

    // moments against ψ factorials in the annihilation picture
    let view = annihilation_view(alg);
    let lo = view.spectrum().lower().unwrap_or(-12).max(-12);
    let p = view.profile();
    let ln_f1 = p.ln_value(1.0)?;
    let signed = signed_ln_factorials(&view, lo, 20)?;
    let mut worst = 0.0f64;
    for m in lo..=20 {
        let moment = p.ln_value(m as f64 + 1.0)? - ln_f1;
        worst = worst.max((moment - signed[(m - lo) as usize]).exp_m1().abs());
    }
    report.measure(
        "moment_identity",
        CheckKind::Verification,
        worst,
        tol.moments,
        format!("F̂(n+1)/F̂(1) = ψ(n)!^(±1) for n in {lo}..=20"),
    );
    Ok(report)
}

fn gram_check(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    tol: &Tolerances,
) -> Result<DiagnosticsReport> {
    let mut report = DiagnosticsReport::new();
    let (lo, hi) = match alg.mode() {
        Mode::Annihilation => (basis.n_min.max(-8), basis.n_max.min(8)),
        Mode::Creation => (basis.n_min.max(-8), basis.n_max.min(8)),
    };
    let gram = gram_quadrature(alg, basis, lo, hi)?;
    let dim = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).norm());
        }
    }
    let w = alg.profile().weight();
    let tolerance = if w.interval.beta.is_finite() {
        tol.gram_finite_edge
    } else {
        tol.gram_infinite_edge
    };
    report.measure(
        "resolution_of_identity",
        CheckKind::Verification,
        worst,
        tolerance,
        format!("polar-quadrature Gram matrix of |n>, n in {lo}..={hi}, equals the identity"),
    );
    Ok(report)
}

fn coherent_checks(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    ops: &OperatorSet,
    tol: &Tolerances,
) -> Result<(DiagnosticsReport, Vec<EigenSample>)> {
    let mut report = DiagnosticsReport::new();
    let mut samples = Vec::new();
    let domain = alg.domain();
    let mut worst = 0.0f64;
    for (r2, angle) in sample_moduli_sq(&domain).into_iter().zip([0.3, 1.1]) {
        let z = Complex64::from_polar(r2.sqrt(), angle);
        let v = coherent_vector(alg, z, basis)?;
        let (un, normed) = eigen_residual(alg, ops, &v, basis)?;
        worst = worst.max(normed);
        samples.push(EigenSample {
            z_re: z.re,
            z_im: z.im,
            n_max: basis.n_max,
            inside: true,
            residual: un,
            normalized_residual: normed,
        });
    }
    report.measure(
        "coherent_eigen_residual",
        CheckKind::Verification,
        worst,
        tol.eigen_residual,
        "‖(A - z)|z>‖/‖|z>‖ for two |z|² inside the domain",
    );

    if domain.outer_sq.is_finite() {
        let z = Complex64::from_polar((1.25 * domain.outer_sq).sqrt(), 0.0);
        let mut residuals = Vec::new();
        for depth in [32i64, 64, 128] {
            let down = match alg.mode() {
                Mode::Annihilation => -basis.n_min,
                Mode::Creation => basis.n_max,
            };
            let b = TruncatedBasis::with_depth(alg, depth, down.max(0))?;
            let o = operator_matrices(alg, &b)?;
            let v = coherent_coefficients(alg, z, &b)?;
            let (un, normed) = eigen_residual(alg, &o, &v, &b)?;
            residuals.push(un);
            samples.push(EigenSample {
                z_re: z.re,
                z_im: z.im,
                n_max: depth,
                inside: false,
                residual: un,
                normalized_residual: normed,
            });
        }
        let decreases = residuals.windows(2).filter(|p| p[1] < p[0]).count();
        let rate = (residuals[2] / residuals[1]).ln() / 64.0;
        report.measure(
            "coherent_outside_nondecreasing",
            CheckKind::Verification,
            decreases as f64,
            0.0,
            format!(
                "|z|² = {} outside: residuals {:?} at n_max 32/64/128, growth rate {rate:.4} per level",
                z.norm_sqr(),
                residuals
            ),
        );
    } else {
        report.record(
            "coherent_outside_nondecreasing",
            CheckKind::Verification,
            CheckStatus::NotApplicable,
            "domain unbounded: no outside sample",
        );
    }
    Ok((report, samples))
}

fn kernel_checks(
    alg: &DeformedAlgebra,
    basis: &TruncatedBasis,
    tol: &Tolerances,
) -> Result<(DiagnosticsReport, Vec<KernelSample>)> {
    let mut report = DiagnosticsReport::new();
    let mut samples = Vec::new();
    let mut worst = 0.0f64;
    for (z, zeta) in kernel_sample_pairs(&alg.domain(), 20) {
        let vz = coherent_vector(alg, z, basis)?;
        let vq = coherent_vector(alg, zeta, basis)?;
        let ov = overlap(&vq, &vz);
        let g = kernel(alg, z * zeta.conj())?;
        let (nz, nq) = (vz.norm_sq + vz.tail_bound, vq.norm_sq + vq.tail_bound);
        let bound = g.tail_bound
            + (vz.tail_bound * nq).sqrt()
            + (vq.tail_bound * nz).sqrt()
            + tol.kernel_slack * (nz * nq).sqrt();
        let defect = (g.value() - ov).norm();
        worst = worst.max(defect / bound);
        samples.push(KernelSample {
            z_re: z.re,
            z_im: z.im,
            zeta_re: zeta.re,
            zeta_im: zeta.im,
            kernel_re: g.re,
            kernel_im: g.im,
            overlap_re: ov.re,
            overlap_im: ov.im,
            defect,
            bound,
        });
    }
    report.measure(
        "kernel_overlap",
        CheckKind::Verification,
        worst,
        1.0,
        "|G(z conj ζ) - <ζ|z>| within the combined truncation bounds (ratio shown) on 20 pairs",
    );
    Ok((report, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::build_algebra;
    use crate::mellin::MellinProfile;
    use crate::weightfn::WeightFunction;
    use approx::assert_relative_eq;

    fn alg(w: WeightFunction, mode: Mode) -> DeformedAlgebra {
        build_algebra(MellinProfile::new(w).unwrap(), mode, 0.0).unwrap()
    }

    fn oscillator() -> DeformedAlgebra {
        alg(
            WeightFunction::stretched_exp(1, 1).unwrap(),
            Mode::Annihilation,
        )
    }

    #[test]
    fn ladder_examples() {
        let a = oscillator();
        let b = TruncatedBasis::new(&a, 0, 3).unwrap();
        let ops = operator_matrices(&a, &b).unwrap();
        for (k, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert_relative_eq!(
                ops.a_dagger.entries[(k + 1, k)],
                v.sqrt(),
                max_relative = 1e-14
            );
        }
        let b2 = TruncatedBasis::new(&a, 0, 2).unwrap();
        let n = operator_matrices(&a, &b2).unwrap().number.entries;
        assert_eq!((n[(0, 0)], n[(1, 1)], n[(2, 2)]), (0.0, 1.0, 2.0));

        let d = alg(
            WeightFunction::power(0.0, 0.0, 1.0).unwrap(),
            Mode::Annihilation,
        );
        let b = TruncatedBasis::new(&d, 0, 3).unwrap();
        let ops = operator_matrices(&d, &b).unwrap();
        for (k, v) in [0.5f64, 2.0 / 3.0, 0.75].iter().enumerate() {
            assert_relative_eq!(ops.a.entries[(k, k + 1)], v.sqrt(), max_relative = 1e-14);
            assert_relative_eq!(
                ops.a_function.entries[(k, k + 1)],
                v.sqrt(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn coherent_examples() {
        let a = oscillator();
        let b = TruncatedBasis::with_depth(&a, 40, 0).unwrap();
        let v = coherent_vector(&a, Complex64::new(1.0, 0.0), &b).unwrap();
        let mut fact = 1.0;
        for n in 0..=10 {
            if n > 0 {
                fact *= n as f64;
            }
            assert_relative_eq!(v.coefficient(n).re, 1.0 / fact.sqrt(), max_relative = 1e-12);
        }
        assert_relative_eq!(v.norm_sq, std::f64::consts::E, max_relative = 1e-14);

        let v = coherent_vector(&a, Complex64::new(0.0, 0.0), &b).unwrap();
        assert_eq!(v.coefficient(0), Complex64::new(1.0, 0.0));
        assert!(v.coefficients[1..].iter().all(|c| c.norm() == 0.0));

        let ring = alg(
            WeightFunction::power(0.0, 1.0, 4.0).unwrap(),
            Mode::Annihilation,
        );
        let b = TruncatedBasis::default_for(&ring).unwrap();
        let v = coherent_vector(&ring, Complex64::new(2f64.sqrt(), 0.0), &b).unwrap();
        assert!(v.norm_sq.is_finite());
        let up = v.coefficient(64).norm_sqr() / v.coefficient(63).norm_sqr();
        let down = v.coefficient(-64).norm_sqr() / v.coefficient(-63).norm_sqr();
        assert!((up - 0.5).abs() < 0.02, "{up}");
        assert!((down - 0.5).abs() < 0.02, "{down}");
        assert!(coherent_vector(&ring, Complex64::new(3.0, 0.0), &b).is_err());
    }

    #[test]
    fn kernel_examples() {
        let a = oscillator();
        for x in [0.5, 1.0, 2.0] {
            let g = kernel(&a, Complex64::new(x, 0.0)).unwrap();
            assert_relative_eq!(g.re, f64::exp(x), max_relative = 1e-13);
        }
        assert_eq!(kernel(&a, Complex64::new(0.0, 0.0)).unwrap().re, 1.0);
        let d = alg(
            WeightFunction::power(0.0, 0.0, 1.0).unwrap(),
            Mode::Annihilation,
        );
        let g = kernel(&d, Complex64::new(0.5, 0.0)).unwrap();
        assert_relative_eq!(g.re, 4.0, max_relative = 1e-13);
        assert!(kernel(&d, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn scalar_products() {
        let d = alg(
            WeightFunction::power(0.0, 0.0, 1.0).unwrap(),
            Mode::Annihilation,
        );
        let b = TruncatedBasis::with_depth(&d, 8, 0).unwrap();
        let gram = gram_quadrature(&d, &b, 0, 8).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - target).norm() < 1e-8,
                    "{i},{j}: {}",
                    gram[(i, j)]
                );
            }
        }
        let e = |k: usize| -> Vec<Complex64> {
            (0..9)
                .map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0))
                .collect()
        };
        assert_eq!(
            scalar_product(&b, &e(1), &e(2)).unwrap(),
            Complex64::new(0.0, 0.0)
        );

        let a = oscillator();
        let b = TruncatedBasis::with_depth(&a, 8, 0).unwrap();
        assert_relative_eq!(
            scalar_product(&b, &e(5), &e(5)).unwrap().re,
            1.0,
            max_relative = 1e-13
        );

        // both paths on a generic pair of vectors
        let f: Vec<Complex64> = (0..9)
            .map(|i| Complex64::new(1.0 / (i as f64 + 1.0), 0.3 * i as f64))
            .collect();
        let g: Vec<Complex64> = (0..9)
            .map(|i| Complex64::new((i as f64).cos(), 0.1))
            .collect();
        let radial = scalar_product(&b, &f, &g).unwrap();
        let gram = gram_quadrature(&a, &b, 0, 8).unwrap();
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..9 {
            for j in 0..9 {
                quad += f[i] * gram[(i, j)] * g[j].conj();
            }
        }
        assert!((radial - quad).norm() < 1e-6 * radial.norm());
    }

    #[test]
    fn usual_oscillator_eigen_residual() {
        let a = oscillator();
        let b = TruncatedBasis::with_depth(&a, 32, 0).unwrap();
        let ops = operator_matrices(&a, &b).unwrap();
        let v = coherent_vector(&a, Complex64::new(0.5, 0.0), &b).unwrap();
        let (_, r) = eigen_residual(&a, &ops, &v, &b).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn creation_mode_mirrors_annihilation() {
        let a = alg(
            WeightFunction::power(2.0, 0.0, 1.0).unwrap(),
            Mode::Annihilation,
        );
        let c = a.dual();
        let ba = TruncatedBasis::with_depth(&a, 16, 16).unwrap();
        let bc = TruncatedBasis::with_depth(&c, 16, 16).unwrap();
        assert_eq!((ba.n_min(), ba.n_max()), (-2, 16));
        assert_eq!((bc.n_min(), bc.n_max()), (-16, 2));
        for n in ba.indices() {
            assert_eq!(ba.ln_coefficient(n), bc.ln_coefficient(-n));
        }
        let oa = operator_matrices(&a, &ba).unwrap();
        let oc = operator_matrices(&c, &bc).unwrap();
        let dim = ba.len();
        for i in 0..dim {
            for j in 0..dim {
                // a_c = R a†_a R, N_c = -R N_a R
                assert_eq!(
                    oc.a.entries[(dim - 1 - i, dim - 1 - j)],
                    oa.a_dagger.entries[(i, j)]
                );
                assert_eq!(
                    oc.number.entries[(dim - 1 - i, dim - 1 - j)],
                    -oa.number.entries[(i, j)]
                );
            }
        }
        let full = TruncatedBasis::default_for(&c).unwrap();
        let report = verify_representation(&c, &full, &Tolerances::default()).unwrap();
        assert!(
            report.all_pass(),
            "{:?}",
            report.failed().collect::<Vec<_>>()
        );
    }

    #[test]
    fn outside_residual_grows() {
        let ring = alg(
            WeightFunction::power(0.0, 1.0, 4.0).unwrap(),
            Mode::Annihilation,
        );
        let z = Complex64::new(5f64.sqrt(), 0.0);
        let mut last = 0.0;
        for depth in [32, 64, 128] {
            let b = TruncatedBasis::with_depth(&ring, depth, 64).unwrap();
            let ops = operator_matrices(&ring, &b).unwrap();
            let v = coherent_coefficients(&ring, z, &b).unwrap();
            let (r, _) = eigen_residual(&ring, &ops, &v, &b).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn inside_residual_decreases_with_truncation() {
        let ring = alg(
            WeightFunction::power(2.0, 1.0, 4.0).unwrap(),
            Mode::Annihilation,
        );
        let z = Complex64::from_polar(2.4f64.sqrt(), 0.7);
        let mut last = f64::INFINITY;
        for depth in [8, 16, 32, 64] {
            let b = TruncatedBasis::with_depth(&ring, depth, depth).unwrap();
            let ops = operator_matrices(&ring, &b).unwrap();
            let v = coherent_vector(&ring, z, &b).unwrap();
            let (_, r) = eigen_residual(&ring, &ops, &v, &b).unwrap();
            assert!(r <= 1.1 * last);
            last = r;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn verification_on_the_annulus() {
        let ring = alg(
            WeightFunction::power(0.0, 1.0, 4.0).unwrap(),
            Mode::Annihilation,
        );
        let b = TruncatedBasis::default_for(&ring).unwrap();
        let v = verify_representation_detailed(&ring, &b, &Tolerances::default()).unwrap();
        assert!(
            v.report.all_pass(),
            "{:?}",
            v.report.failed().collect::<Vec<_>>()
        );
        assert_eq!(v.kernel_samples.len(), 20);
        assert_eq!(
            v.report
                .get("coherent_outside_nondecreasing")
                .unwrap()
                .status,
            CheckStatus::Pass
        );
    }
}
