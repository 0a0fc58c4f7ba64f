//! Mellin transform `F̂(ρ) = ∫_α^β F(x) x^(ρ-1) dx` of a weight function.
//!
//! Values are carried as logarithms: `F̂` overflows `f64` long before the
//! ratios `F̂(ρ+1)/F̂(ρ)` that the algebra needs stop being representable.
//! Two evaluation paths exist: closed forms for the families that have one,
//! and adaptive quadrature in `t = ln x` (plus `u = 1/(β-x)` next to an
//! essential upper edge).

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_exp, QuadError, QuadSettings};
use crate::weightfn::{Edge, Family, WeightFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MellinValue {
    Finite { ln_value: f64 },
    Divergent,
}

impl MellinValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, MellinValue::Finite { .. })
    }

    /// `ln F̂`, `+inf` when divergent.
    pub fn ln(&self) -> f64 {
        match self {
            MellinValue::Finite { ln_value } => *ln_value,
            MellinValue::Divergent => f64::INFINITY,
        }
    }

    /// `F̂` itself; may overflow to `+inf` for huge finite values.
    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}

/// Sampling schedule for the ratio-limit extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtrapolationSettings {
    /// First sample offset `R`; samples at `R, 2R, 4R, ...`.
    pub start: f64,
    /// Accept when successive Aitken estimates differ by less than this
    /// (relative to `max(1, |limit|)`).
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for ExtrapolationSettings {
    fn default() -> Self {
        Self {
            start: 16.0,
            tol: 1e-5,
            max_doublings: 22,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum LimitSource {
    ClosedForm,
    /// Finite convergence abscissa: the ratio reaches zero at `ν`.
    SpectrumEdge,
    Extrapolated {
        #[serde(with = "crate::serde_float")]
        residual: f64,
        #[serde(with = "crate::serde_float::pairs")]
        samples: Vec<(f64, f64)>,
    },
}

/// Limits of `F̂(ρ+1)/F̂(ρ)` as `ρ → ∓∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioLimits {
    #[serde(with = "crate::serde_float")]
    pub at_minus_infinity: f64,
    #[serde(with = "crate::serde_float")]
    pub at_plus_infinity: f64,
    pub minus_confidence: LimitSource,
    pub plus_confidence: LimitSource,
}

type Cache = Arc<Mutex<HashMap<u64, f64>>>;

/// Evaluator for the Mellin transform of one weight function.
///
/// Cloning shares the memo table; it is keyed on `ρ` rounded to 12 decimals
/// and only stores finite values.
#[derive(Debug, Clone)]
pub struct MellinProfile {
    weight: WeightFunction,
    method: Method,
    nu: f64,
    upper: f64,
    quad: QuadSettings,
    cache: Option<Cache>,
}

impl MellinProfile {
    /// Closed form when the family has one, quadrature otherwise.
    pub fn new(weight: WeightFunction) -> Result<Self> {
        let method = if has_closed_form(&weight) {
            Method::ClosedForm
        } else {
            Method::Quadrature
        };
        Self::with_method(weight, method)
    }

    pub fn with_method(weight: WeightFunction, method: Method) -> Result<Self> {
        if method == Method::ClosedForm && !has_closed_form(&weight) {
            return Err(Error::InvalidParameter(format!(
                "no closed-form Mellin transform for {}",
                weight.label()
            )));
        }
        let quad = QuadSettings::default();
        let (nu, upper) = convergence_interval(&weight, &quad);
        Ok(Self {
            weight,
            method,
            nu,
            upper,
            quad,
            cache: Some(Arc::new(Mutex::new(HashMap::new()))),
        })
    }

    pub fn with_quad_settings(mut self, quad: QuadSettings) -> Self {
        self.quad = quad;
        self.cache = self.cache.map(|_| Arc::new(Mutex::new(HashMap::new())));
        self
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn quad_settings(&self) -> &QuadSettings {
        &self.quad
    }

    /// `ν`: `F̂(ρ)` is finite exactly for `ν < ρ < upper`. `+inf` when the
    /// transform exists nowhere.
    pub fn convergence_abscissa(&self) -> f64 {
        if self.nu >= self.upper {
            f64::INFINITY
        } else {
            self.nu
        }
    }

    /// Upper end of the convergence interval (`+inf` unless `β = ∞` and `F`
    /// decays only algebraically).
    pub fn upper_abscissa(&self) -> f64 {
        self.upper
    }

    pub fn converges_at(&self, rho: f64) -> bool {
        rho > self.nu && rho < self.upper
    }

    /// `F̂(1)`, the normalization of the representation.
    pub fn normalization(&self) -> Result<f64> {
        match self.mellin_transform(1.0)? {
            MellinValue::Finite { ln_value } => Ok(ln_value.exp()),
            MellinValue::Divergent => Err(Error::Domain("F̂(1) diverges".into())),
        }
    }

    pub fn mellin_transform(&self, rho: f64) -> Result<MellinValue> {
        if !rho.is_finite() {
            return Err(Error::Domain(format!("rho must be finite, got {rho}")));
        }
        if !self.converges_at(rho) {
            return Ok(MellinValue::Divergent);
        }
        let key = cache_key(rho);
        if let Some(cache) = &self.cache {
            if let Some(v) = cache.lock().get(&key) {
                return Ok(MellinValue::Finite { ln_value: *v });
            }
        }
        let ln_value = match self.method {
            Method::ClosedForm => closed_form_ln(&self.weight, rho)
                .ok_or_else(|| Error::Domain(format!("closed form undefined at rho={rho}")))?,
            Method::Quadrature => quadrature_ln(&self.weight, rho, &self.quad)?,
        };
        if let Some(cache) = &self.cache {
            cache.lock().insert(key, ln_value);
        }
        Ok(MellinValue::Finite { ln_value })
    }

    /// `ln F̂(ρ)`, erroring when divergent.
    pub fn ln_value(&self, rho: f64) -> Result<f64> {
        match self.mellin_transform(rho)? {
            MellinValue::Finite { ln_value } => Ok(ln_value),
            MellinValue::Divergent => Err(Error::Domain(format!(
                "Mellin transform diverges at rho={rho}"
            ))),
        }
    }

    /// `F̂(ρ+1)/F̂(ρ)`; zero at `ρ = ν` where only the denominator diverges.
    pub fn ratio(&self, rho: f64) -> Result<f64> {
        let num = self.mellin_transform(rho + 1.0)?;
        let den = self.mellin_transform(rho)?;
        match (num, den) {
            (MellinValue::Finite { ln_value: a }, MellinValue::Finite { ln_value: b }) => {
                Ok((a - b).exp())
            }
            (MellinValue::Finite { .. }, MellinValue::Divergent) if rho == self.nu => Ok(0.0),
            _ => Err(Error::Domain(format!(
                "ratio F̂(ρ+1)/F̂(ρ) undefined at rho={rho} (convergence interval ({}, {}))",
                self.nu, self.upper
            ))),
        }
    }

    /// Ratio limits: closed form where the edge data or family decide them,
    /// extrapolation otherwise.
    pub fn ratio_limits(&self, settings: &ExtrapolationSettings) -> Result<RatioLimits> {
        let w = &self.weight;
        let (alpha, beta) = (w.interval.alpha, w.interval.beta);
        if self.upper.is_finite() {
            return Err(Error::Domain(format!(
                "transform exists only below rho={}; no limit at +inf",
                self.upper
            )));
        }

        let (plus, plus_src) = if beta.is_finite() && w.edge_behavior(Edge::Upper).is_regular() {
            (beta, LimitSource::ClosedForm)
        } else if !beta.is_finite()
            && matches!(
                w.family,
                Family::StretchedExp { .. } | Family::LogGaussian { .. }
            )
        {
            (f64::INFINITY, LimitSource::ClosedForm)
        } else {
            self.extrapolate(1.0, settings)?
        };

        let (minus, minus_src) = if self.nu.is_finite() {
            (0.0, LimitSource::SpectrumEdge)
        } else if alpha > 0.0 && w.edge_behavior(Edge::Lower).is_regular() {
            (alpha, LimitSource::ClosedForm)
        } else if alpha == 0.0 && matches!(w.family, Family::LogGaussian { .. }) {
            (0.0, LimitSource::ClosedForm)
        } else {
            self.extrapolate(-1.0, settings)?
        };

        Ok(RatioLimits {
            at_minus_infinity: minus,
            at_plus_infinity: plus,
            minus_confidence: minus_src,
            plus_confidence: plus_src,
        })
    }

    /// Both limits by extrapolation, ignoring closed-form shortcuts. The
    /// lower limit is still `0` at a finite abscissa.
    pub fn ratio_limits_extrapolated(
        &self,
        settings: &ExtrapolationSettings,
    ) -> Result<RatioLimits> {
        let (plus, plus_src) = self.extrapolate(1.0, settings)?;
        let (minus, minus_src) = if self.nu.is_finite() {
            (0.0, LimitSource::SpectrumEdge)
        } else {
            self.extrapolate(-1.0, settings)?
        };
        Ok(RatioLimits {
            at_minus_infinity: minus,
            at_plus_infinity: plus,
            minus_confidence: minus_src,
            plus_confidence: plus_src,
        })
    }

    /// Samples `r(ρ) = F̂(ρ+1)/F̂(ρ)` at `ρ₀ ± R·2^k` and accelerates with
    /// Aitken's Δ²; accepts once two successive accelerated values agree.
    fn extrapolate(&self, dir: f64, s: &ExtrapolationSettings) -> Result<(f64, LimitSource)> {
        let origin = if dir > 0.0 && self.nu.is_finite() {
            self.nu.max(0.0)
        } else {
            0.0
        };
        let beta = self.weight.interval.beta;
        let mut samples: Vec<(f64, f64)> = Vec::new();
        let mut accel: Vec<f64> = Vec::new();
        for k in 0..=s.max_doublings {
            let rho = origin + dir * s.start * 2f64.powi(k as i32);
            let r = match self.ratio(rho) {
                Ok(r) => r,
                Err(Error::NumericalFailure {
                    message,
                    estimate,
                    error_bound,
                    ..
                }) => {
                    return Err(Error::NumericalFailure {
                        message: format!("ratio extrapolation: {message}"),
                        estimate,
                        error_bound,
                        samples,
                    })
                }
                Err(e) => return Err(e),
            };
            samples.push((rho, r));
            if !r.is_finite() {
                if dir > 0.0 && !beta.is_finite() {
                    return Ok((
                        f64::INFINITY,
                        LimitSource::Extrapolated {
                            residual: 0.0,
                            samples,
                        },
                    ));
                }
                break;
            }
            let n = samples.len();
            if n >= 3 {
                let (r0, r1, r2) = (samples[n - 3].1, samples[n - 2].1, samples[n - 1].1);
                let d1 = r1 - r0;
                let d2 = r2 - r1;
                let denom = d2 - d1;
                let a = if denom.abs() <= 1e-300 || d2 == 0.0 {
                    r2
                } else {
                    r2 - d2 * d2 / denom
                };
                accel.push(a);
                if accel.len() >= 2 && d2.abs() < d1.abs() {
                    let prev = accel[accel.len() - 2];
                    let diff = (a - prev).abs();
                    if diff <= s.tol * a.abs().max(1.0) {
                        return Ok((
                            a.max(0.0),
                            LimitSource::Extrapolated {
                                residual: diff,
                                samples,
                            },
                        ));
                    }
                }
                // Increments that stop shrinking while the values keep growing.
                if n >= 5 && d2 > 0.0 && d1 > 0.0 && d2 >= d1 && r2 > 1e3 * samples[0].1.max(1e-300)
                {
                    if dir > 0.0 && !beta.is_finite() {
                        return Ok((
                            f64::INFINITY,
                            LimitSource::Extrapolated {
                                residual: f64::INFINITY,
                                samples,
                            },
                        ));
                    }
                    break;
                }
            }
        }
        let last = samples.last().map_or(f64::NAN, |s| s.1);
        Err(Error::NumericalFailure {
            message: format!(
                "ratio limit at {}inf did not settle",
                if dir > 0.0 { "+" } else { "-" }
            ),
            estimate: accel.last().copied().unwrap_or(last),
            error_bound: f64::INFINITY,
            samples,
        })
    }
}

fn cache_key(rho: f64) -> u64 {
    ((rho * 1e12).round() / 1e12).to_bits()
}

pub fn has_closed_form(w: &WeightFunction) -> bool {
    let (alpha, beta) = (w.interval.alpha, w.interval.beta);
    match &w.family {
        Family::Power { .. } => true,
        Family::PowerBeta { .. } => alpha == 0.0,
        Family::StretchedExp { .. } => alpha == 0.0 && !beta.is_finite(),
        Family::LogGaussian { n, .. } => *n == 1 && alpha == 0.0 && !beta.is_finite(),
        Family::EssentialEdge | Family::Tabulated(_) => false,
    }
}

/// `(ν, upper)`: analytic from the local power of `F` at `0` and `∞`, with the
/// numeric detector as fallback for tabulated data.
fn convergence_interval(w: &WeightFunction, quad: &QuadSettings) -> (f64, f64) {
    let (alpha, beta) = (w.interval.alpha, w.interval.beta);
    let lower = if alpha > 0.0 {
        f64::NEG_INFINITY
    } else {
        match &w.family {
            Family::Power { sigma } | Family::PowerBeta { sigma, .. } => -sigma,
            Family::StretchedExp { .. } | Family::EssentialEdge => 0.0,
            Family::LogGaussian { .. } => f64::NEG_INFINITY,
            Family::Tabulated(_) => numeric_abscissa(w, quad),
        }
    };
    let upper = if beta.is_finite() {
        f64::INFINITY
    } else {
        match &w.family {
            Family::Power { sigma } => -sigma,
            _ => f64::INFINITY,
        }
    };
    (lower, upper)
}

/// `ln(expm1(y)/y)`, stable for all real `y`.
fn ln_expm1_over(y: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else if y > 30.0 {
        y + (-(-y).exp_m1()).ln() - y.ln()
    } else if y < -30.0 {
        (-y.exp_m1()).ln() - (-y).ln()
    } else {
        (y.exp_m1() / y).ln()
    }
}

/// `ln F̂(ρ)` for families with a closed form; `None` outside its domain.
pub fn closed_form_ln(w: &WeightFunction, rho: f64) -> Option<f64> {
    let (alpha, beta) = (w.interval.alpha, w.interval.beta);
    match &w.family {
        Family::Power { sigma } => {
            let s = sigma + rho;
            match (alpha > 0.0, beta.is_finite()) {
                (false, true) => (s > 0.0).then(|| s * beta.ln() - s.ln()),
                (true, false) => (s < 0.0).then(|| s * alpha.ln() - (-s).ln()),
                (true, true) => {
                    let l = beta.ln() - alpha.ln();
                    Some(s * alpha.ln() + l.ln() + ln_expm1_over(s * l))
                }
                (false, false) => None,
            }
        }
        Family::PowerBeta { sigma, eta } if alpha == 0.0 => {
            let s = rho + sigma;
            (s > 0.0).then(|| {
                (eta + s) * beta.ln() + ln_gamma(s) + ln_gamma(eta + 1.0) - ln_gamma(s + eta + 1.0)
            })
        }
        Family::StretchedExp { k, m } if has_closed_form(w) => {
            let c = *m as f64 / *k as f64;
            (rho > 0.0).then(|| c.ln() + ln_gamma(rho * c))
        }
        Family::LogGaussian { sigma, n: 1 } if has_closed_form(w) => {
            Some(0.5 * (std::f64::consts::PI / sigma).ln() + rho * rho / (4.0 * sigma))
        }
        _ => None,
    }
}

fn quad_failure(e: QuadError, rho: f64) -> Error {
    match e {
        QuadError::NoConvergence { estimate } => Error::numerical(
            format!("Mellin quadrature did not converge at rho={rho}"),
            estimate.value,
            estimate.error,
        ),
        QuadError::Unbounded { at } => Error::numerical(
            format!("Mellin integrand does not decay (rho={rho}, t={at})"),
            f64::INFINITY,
            f64::INFINITY,
        ),
        QuadError::Degenerate => Error::numerical(
            format!("Mellin integrand vanishes on the sampled range (rho={rho})"),
            0.0,
            f64::INFINITY,
        ),
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `ln F̂(ρ)` by quadrature; the caller guarantees convergence at `ρ`.
pub fn quadrature_ln(w: &WeightFunction, rho: f64, quad: &QuadSettings) -> Result<f64> {
    let (alpha, beta) = (w.interval.alpha, w.interval.beta);
    let (lo, hi) = w.interval.log_bounds();
    match &w.family {
        Family::EssentialEdge => {
            // x in (alpha, x_split): t = ln x. x in (x_split, beta): u = 1/(beta - x),
            // where F = exp(-u) and the Mellin peak sits near u ~ sqrt(rho).
            let delta = 0.5 * (beta - alpha);
            let split = beta - delta;
            let inner = integrate_exp(|t| w.ln_at_log(t) + rho * t, lo, split.ln(), &[], quad)
                .map_err(|e| quad_failure(e, rho))?;
            let ln_beta = beta.ln();
            let edge = integrate_exp(
                |u: f64| -u + (rho - 1.0) * (ln_beta + (-1.0 / (beta * u)).ln_1p()) - 2.0 * u.ln(),
                1.0 / delta,
                f64::INFINITY,
                &[],
                quad,
            )
            .map_err(|e| quad_failure(e, rho))?;
            Ok(log_add(inner.ln_value, edge.ln_value))
        }
        Family::Tabulated(tab) => {
            let breaks: Vec<f64> = tab
                .xs()
                .iter()
                .filter(|x| **x > 0.0)
                .map(|x| x.ln())
                .collect();
            integrate_exp(|t| w.ln_at_log(t) + rho * t, lo, hi, &breaks, quad)
                .map(|r| r.ln_value)
                .map_err(|e| quad_failure(e, rho))
        }
        _ => integrate_exp(|t| w.ln_at_log(t) + rho * t, lo, hi, &[], quad)
            .map(|r| r.ln_value)
            .map_err(|e| quad_failure(e, rho)),
    }
}

/// Numeric convergence abscissa for weights on `(0, β)`.
///
/// Divergence at `ρ` is declared when the partial integral over
/// `(ε, x_ref)` grows by more than a factor 10 across three successive
/// refinements `ε → ε·10^-25`. Bisection on that predicate brackets `ν` to
/// about 0.02; the local power of `F` near 0 then refines it when it falls
/// inside the bracket.
pub fn numeric_abscissa(w: &WeightFunction, quad: &QuadSettings) -> f64 {
    let (alpha, beta) = (w.interval.alpha, w.interval.beta);
    if alpha > 0.0 {
        return f64::NEG_INFINITY;
    }
    let x_ref: f64 = if beta.is_finite() { 0.5 * beta } else { 1.0 };
    let ln_ref = x_ref.ln();
    let partial = |rho: f64, decades: f64| -> f64 {
        let lo = ln_ref - decades * std::f64::consts::LN_10;
        integrate_exp(|t| w.ln_at_log(t) + rho * t, lo, ln_ref, &[], quad)
            .map(|r| r.ln_value)
            .unwrap_or(f64::INFINITY)
    };
    // Super-polynomial behaviour at 0: the local power keeps drifting with depth.
    let decade = std::f64::consts::LN_10;
    let slope = |depth: f64| {
        let (a, b) = (ln_ref - (depth + 10.0) * decade, ln_ref - depth * decade);
        (w.ln_at_log(a) - w.ln_at_log(b)) / (a - b)
    };
    let (shallow, deep) = (slope(100.0), slope(240.0));
    if (deep - shallow).abs() > 0.05 * shallow.abs().max(1.0) + 0.05 {
        return if deep > shallow {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    let divergent = |rho: f64| -> bool {
        let first = partial(rho, 25.0);
        let last = partial(rho, 100.0);
        let rise = last - first;
        rise > std::f64::consts::LN_10 || rise.is_nan()
    };

    let mut hi = 1.0;
    while divergent(hi) {
        hi *= 2.0;
        if hi > 1e3 {
            return f64::INFINITY;
        }
    }
    let mut step = 1.0;
    let mut lo = hi - step;
    while !divergent(lo) {
        hi = lo;
        step *= 2.0;
        lo = hi - step;
        if lo < -1e3 {
            return f64::NEG_INFINITY;
        }
    }
    for _ in 0..60 {
        if hi - lo < 1e-4 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if divergent(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bracket = 0.5 * (lo + hi);
    let (t1, t2) = (
        ln_ref - 250.0 * std::f64::consts::LN_10,
        ln_ref - 200.0 * std::f64::consts::LN_10,
    );
    let power = (w.ln_at_log(t1) - w.ln_at_log(t2)) / (t1 - t2);
    let refined = -power;
    if refined.is_finite() && (refined - bracket).abs() <= 0.05 {
        refined
    } else {
        bracket
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(w: WeightFunction) -> MellinProfile {
        MellinProfile::with_method(w, Method::Quadrature).unwrap()
    }

    #[test]
    fn transform_examples() {
        let p = MellinProfile::new(WeightFunction::stretched_exp(1, 1).unwrap()).unwrap();
        assert_eq!(p.method(), Method::ClosedForm);
        assert_relative_eq!(
            p.mellin_transform(5.0).unwrap().value(),
            24.0,
            max_relative = 1e-13
        );

        let p = MellinProfile::new(WeightFunction::power(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(
            p.mellin_transform(2.0).unwrap().value(),
            0.5,
            max_relative = 1e-15
        );

        let sqrt_pi = std::f64::consts::PI.sqrt();
        let p = MellinProfile::new(WeightFunction::log_gaussian(1.0, 1).unwrap()).unwrap();
        assert_relative_eq!(
            p.mellin_transform(0.0).unwrap().value(),
            sqrt_pi,
            max_relative = 1e-15
        );
        let q = quad(WeightFunction::log_gaussian(1.0, 1).unwrap());
        assert_relative_eq!(
            q.mellin_transform(0.0).unwrap().value(),
            sqrt_pi,
            max_relative = 1e-11
        );
        assert_relative_eq!(sqrt_pi, 1.772_453_9, max_relative = 1e-7);
    }

    #[test]
    fn divergent_below_abscissa() {
        let p = MellinProfile::new(WeightFunction::power(3.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(p.mellin_transform(-3.0).unwrap(), MellinValue::Divergent);
        assert_eq!(p.mellin_transform(-4.5).unwrap(), MellinValue::Divergent);
        assert!(p.mellin_transform(-2.9).unwrap().is_finite());
    }

    #[test]
    fn abscissa_examples() {
        let p = MellinProfile::new(WeightFunction::power(3.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(p.convergence_abscissa(), -3.0);
        let p = MellinProfile::new(WeightFunction::power(0.0, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(p.convergence_abscissa(), f64::NEG_INFINITY);
        let p = MellinProfile::new(WeightFunction::essential_edge(1.0).unwrap()).unwrap();
        assert_eq!(p.convergence_abscissa(), 0.0);
        let p =
            MellinProfile::new(WeightFunction::power(1.0, 0.0, f64::INFINITY).unwrap()).unwrap();
        assert_eq!(p.convergence_abscissa(), f64::INFINITY);
        let p =
            MellinProfile::new(WeightFunction::power(1.0, 2.0, f64::INFINITY).unwrap()).unwrap();
        assert_eq!(p.convergence_abscissa(), f64::NEG_INFINITY);
        assert_eq!(p.upper_abscissa(), -1.0);
    }

    #[test]
    fn numeric_abscissa_matches_analytic() {
        let q = QuadSettings::default();
        let cases = [
            (WeightFunction::power(3.0, 0.0, 1.0).unwrap(), -3.0),
            (WeightFunction::power(1.5, 0.0, 2.0).unwrap(), -1.5),
            (WeightFunction::power_beta(2.0, 1.0, 1.0).unwrap(), -2.0),
            (WeightFunction::essential_edge(1.0).unwrap(), 0.0),
            (
                WeightFunction::tabulated(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 1.5]).unwrap(),
                0.0,
            ),
        ];
        for (w, expect) in cases {
            let nu = numeric_abscissa(&w, &q);
            assert!(
                (nu - expect).abs() < 1e-9,
                "{}: {nu} vs {expect}",
                w.label()
            );
        }
        let lg = WeightFunction::new(
            Family::LogGaussian { sigma: 1.0, n: 1 },
            crate::weightfn::Interval::new(0.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(numeric_abscissa(&lg, &q), f64::NEG_INFINITY);
    }

    #[test]
    fn power_closed_form_is_stable_near_cancellation() {
        let w = WeightFunction::power(0.0, 1.0, 4.0).unwrap();
        // sigma + rho = 0: F̂ = ln(beta/alpha)
        assert_relative_eq!(
            closed_form_ln(&w, 0.0).unwrap().exp(),
            4f64.ln(),
            max_relative = 1e-15
        );
        let near = closed_form_ln(&w, 1e-12).unwrap().exp();
        assert_relative_eq!(near, 4f64.ln(), max_relative = 1e-10);
        // large |rho| stays finite in log form
        assert!(closed_form_ln(&w, 2000.0).unwrap().is_finite());
        assert!(closed_form_ln(&w, -2000.0).unwrap().is_finite());
    }

    #[test]
    fn closed_form_and_quadrature_agree() {
        let weights = [
            WeightFunction::power(0.0, 1.0, 4.0).unwrap(),
            WeightFunction::power(2.0, 1.0, 4.0).unwrap(),
            WeightFunction::power(-1.0, 1.0, 4.0).unwrap(),
            WeightFunction::power(0.0, 0.0, 1.0).unwrap(),
            WeightFunction::power(2.0, 0.0, 3.0).unwrap(),
            WeightFunction::power_beta(0.0, 1.0, 1.0).unwrap(),
            WeightFunction::power_beta(0.0, 2.5, 1.0).unwrap(),
            WeightFunction::power_beta(1.0, 0.5, 2.0).unwrap(),
            WeightFunction::stretched_exp(1, 1).unwrap(),
            WeightFunction::stretched_exp(1, 2).unwrap(),
            WeightFunction::stretched_exp(2, 1).unwrap(),
            WeightFunction::log_gaussian(1.0, 1).unwrap(),
            WeightFunction::log_gaussian(0.5, 1).unwrap(),
        ];
        for w in weights {
            let c = MellinProfile::with_method(w.clone(), Method::ClosedForm).unwrap();
            let q = quad(w.clone());
            let nu = c.convergence_abscissa();
            let (a, b) = if nu.is_finite() {
                (nu + 0.5, nu + 20.0)
            } else {
                (-20.0, 20.0)
            };
            for i in 0..41 {
                let rho = a + (b - a) * i as f64 / 40.0;
                let lc = c.ln_value(rho).unwrap();
                let lq = q.ln_value(rho).unwrap();
                // relative error of F̂ = |exp(lq - lc) - 1|
                let rel = (lq - lc).exp_m1().abs();
                assert!(rel < 1e-8, "{} at rho={rho}: rel {rel:e}", w.label());
            }
        }
    }

    #[test]
    fn essential_edge_bounds_and_abscissa() {
        let p = MellinProfile::new(WeightFunction::essential_edge(1.0).unwrap()).unwrap();
        assert_eq!(p.method(), Method::Quadrature);
        // F <= e^{-1} on (0, 1) and decreasing: F̂(ρ) < e^{-1}/ρ
        for rho in [0.1, 1.0, 5.0, 50.0] {
            let v = p.mellin_transform(rho).unwrap().value();
            assert!(v > 0.0 && v < (-1.0f64).exp() / rho);
        }
        assert_eq!(p.ratio(0.0).unwrap(), 0.0);
        assert!(p.ratio(-0.5).is_err());
        // integration by parts: ρ F̂(ρ) = ∫ F(x) x^ρ (β-x)^{-2} dx
        let rho = 3.0;
        let lhs = rho * p.mellin_transform(rho).unwrap().value();
        let w = p.weight().clone();
        let rhs = integrate_exp(
            |t| w.ln_at_log(t) + (rho + 1.0) * t - 2.0 * (-t.exp_m1()).ln(),
            f64::NEG_INFINITY,
            0.0,
            &[],
            &QuadSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(lhs, rhs.ln_value.exp(), max_relative = 1e-9);
    }

    #[test]
    fn essential_edge_series_identity_with_n_plus_one_coefficients() {
        // (β-x)^{-2} = Σ (n+1) x^n / β^{n+2} turns the by-parts identity into
        // ρ = Σ_n (n+1) β^{-(n+2)} F̂(ρ+n+1)/F̂(ρ).
        let beta: f64 = 2.0;
        let p = MellinProfile::new(WeightFunction::essential_edge(beta).unwrap()).unwrap();
        for rho in [0.5, 2.0, 6.0] {
            let base = p.ln_value(rho).unwrap();
            let mut sum = 0.0;
            for n in 0..4000 {
                let term = (n as f64 + 1.0)
                    * beta.powi(-(n + 2))
                    * (p.ln_value(rho + n as f64 + 1.0).unwrap() - base).exp();
                sum += term;
                if term < 1e-16 * sum && n > 50 {
                    break;
                }
            }
            assert_relative_eq!(sum, rho, max_relative = 1e-7);
        }
    }

    #[test]
    fn ratio_limit_examples() {
        let s = ExtrapolationSettings::default();
        let p = MellinProfile::new(WeightFunction::power(0.0, 1.0, 4.0).unwrap()).unwrap();
        let l = p.ratio_limits(&s).unwrap();
        assert_eq!((l.at_minus_infinity, l.at_plus_infinity), (1.0, 4.0));
        assert_eq!(l.plus_confidence, LimitSource::ClosedForm);

        let p = MellinProfile::new(WeightFunction::log_gaussian(1.0, 1).unwrap()).unwrap();
        let l = p.ratio_limits(&s).unwrap();
        assert_eq!(
            (l.at_minus_infinity, l.at_plus_infinity),
            (0.0, f64::INFINITY)
        );

        let p = MellinProfile::new(WeightFunction::essential_edge(1.0).unwrap()).unwrap();
        let l = p.ratio_limits(&s).unwrap();
        assert!(
            (l.at_plus_infinity - 1.0).abs() < 1e-3,
            "{}",
            l.at_plus_infinity
        );
        assert!(matches!(
            l.plus_confidence,
            LimitSource::Extrapolated { .. }
        ));
        assert_eq!(l.minus_confidence, LimitSource::SpectrumEdge);
    }

    #[test]
    fn extrapolated_limits_match_closed_form_on_the_annulus() {
        let s = ExtrapolationSettings::default();
        for sigma in [0.0, 2.0, -1.0] {
            let p = MellinProfile::new(WeightFunction::power(sigma, 1.0, 4.0).unwrap()).unwrap();
            let l = p.ratio_limits_extrapolated(&s).unwrap();
            assert!(
                (l.at_minus_infinity - 1.0).abs() < 1e-4,
                "{}",
                l.at_minus_infinity
            );
            assert!(
                (l.at_plus_infinity - 4.0).abs() < 1e-4,
                "{}",
                l.at_plus_infinity
            );
        }
        let p = MellinProfile::new(WeightFunction::power_beta(0.0, 2.5, 1.0).unwrap()).unwrap();
        let l = p.ratio_limits(&s).unwrap();
        assert!((l.at_plus_infinity - 1.0).abs() < 1e-4);
        let p = MellinProfile::new(WeightFunction::stretched_exp(1, 1).unwrap()).unwrap();
        let l = p.ratio_limits_extrapolated(&s).unwrap();
        assert_eq!(l.at_plus_infinity, f64::INFINITY);
    }

    #[test]
    fn shared_cache_is_consistent_across_threads() {
        use rayon::prelude::*;
        let p = quad(WeightFunction::log_gaussian(1.0, 2).unwrap());
        let fresh = p.clone().without_cache();
        let rhos: Vec<f64> = (0..64).map(|i| -8.0 + 0.25 * i as f64).collect();
        let par: Vec<f64> = rhos.par_iter().map(|r| p.ln_value(*r).unwrap()).collect();
        let again: Vec<f64> = rhos.par_iter().map(|r| p.ln_value(*r).unwrap()).collect();
        assert_eq!(par, again);
        for (r, v) in rhos.iter().zip(&par) {
            assert_eq!(*v, fresh.ln_value(*r).unwrap());
        }
    }
}
