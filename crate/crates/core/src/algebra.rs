//! The deformed oscillator algebra `a†a = ψ(N)`, `aa† = ψ(N+1)`, `[a,N] = a`
//! reconstructed from a Mellin profile.
//!
//! Everything is expressed through `R(u) = F̂(u+1)/F̂(u)`. In annihilation
//! mode `ψ(ρ) = R(ρ-μ)`; in creation mode `ψ(ρ) = R(1-(ρ-μ))`. Basis indices
//! `n` are the `μ = 0` labels: `N|n⟩ = (n+μ)|n⟩` and the index-level
//! characteristic function is `ψ(n+μ)`, i.e. `R(n)` or `R(1-n)`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{CheckKind, CheckStatus, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::mellin::{ExtrapolationSettings, LimitSource, MellinProfile, RatioLimits};
use crate::weightfn::Edge;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Coherent states are eigenvectors of `a`; `a†` acts as `z·`.
    Annihilation,
    /// Coherent states are eigenvectors of `a†`; `a` acts as `z·`.
    Creation,
}

impl Mode {
    pub fn flipped(self) -> Self {
        match self {
            Mode::Annihilation => Mode::Creation,
            Mode::Creation => Mode::Annihilation,
        }
    }
}

/// Index set of the number basis (eigenvalues of `N` are `n + μ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SpectrumDescriptor {
    AllIntegers,
    /// `n ≥ λ`, `λ ≤ 0`, `ψ` vanishing at `λ`.
    LowerBounded {
        lambda: i64,
    },
    /// `n ≤ λ`, `λ ≥ 0`, `ψ` vanishing at `λ + 1`.
    UpperBounded {
        lambda: i64,
    },
}

impl SpectrumDescriptor {
    pub fn contains(&self, n: i64) -> bool {
        match *self {
            SpectrumDescriptor::AllIntegers => true,
            SpectrumDescriptor::LowerBounded { lambda } => n >= lambda,
            SpectrumDescriptor::UpperBounded { lambda } => n <= lambda,
        }
    }

    pub fn lower(&self) -> Option<i64> {
        match *self {
            SpectrumDescriptor::LowerBounded { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn upper(&self) -> Option<i64> {
        match *self {
            SpectrumDescriptor::UpperBounded { lambda } => Some(lambda),
            _ => None,
        }
    }

    fn reflected(self) -> Self {
        match self {
            SpectrumDescriptor::AllIntegers => SpectrumDescriptor::AllIntegers,
            SpectrumDescriptor::LowerBounded { lambda } => {
                SpectrumDescriptor::UpperBounded { lambda: -lambda }
            }
            SpectrumDescriptor::UpperBounded { lambda } => {
                SpectrumDescriptor::LowerBounded { lambda: -lambda }
            }
        }
    }
}

/// `inner_sq < |z|² < outer_sq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentDomain {
    #[serde(with = "crate::serde_float")]
    pub inner_sq: f64,
    #[serde(with = "crate::serde_float")]
    pub outer_sq: f64,
}

impl CoherentDomain {
    pub fn contains(&self, modulus_sq: f64) -> bool {
        modulus_sq > self.inner_sq && modulus_sq < self.outer_sq
    }
}

/// Sampling of `u` for the band, limit and monotonicity checks: `points`
/// values spread geometrically from `inner` out to `span` on each open side
/// of the convergence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub points: usize,
    pub span: f64,
    pub inner: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 201,
            span: 200.0,
            inner: 1e-2,
        }
    }
}

impl GridSpec {
    fn magnitudes(&self, count: usize) -> Vec<f64> {
        if count == 0 {
            return Vec::new();
        }
        if count == 1 {
            return vec![self.inner];
        }
        let (a, b) = (self.inner.ln(), self.span.ln());
        (0..count)
            .map(|j| (a + (b - a) * j as f64 / (count - 1) as f64).exp())
            .collect()
    }

    /// Sample points in `u` for `R(u)` given the convergence abscissa.
    pub fn sample(&self, nu: f64) -> Vec<f64> {
        if nu.is_finite() {
            self.magnitudes(self.points)
                .into_iter()
                .map(|m| nu + m)
                .collect()
        } else {
            let half = self.points.saturating_sub(1) / 2;
            let mags = self.magnitudes(half);
            let mut out: Vec<f64> = mags.iter().rev().map(|m| 0.5 - m).collect();
            out.push(0.5);
            out.extend(mags.iter().map(|m| 0.5 + m));
            out
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeformedAlgebra {
    profile: MellinProfile,
    mode: Mode,
    mu: f64,
    nu: f64,
    spectrum: SpectrumDescriptor,
    domain: CoherentDomain,
    limits: RatioLimits,
    report: DiagnosticsReport,
}

pub fn build_algebra(profile: MellinProfile, mode: Mode, mu: f64) -> Result<DeformedAlgebra> {
    build_algebra_with(profile, mode, mu, &ExtrapolationSettings::default())
}

/// Runs the necessary conditions (transform on a half-line unbounded above,
/// integer abscissa, ordered ratio limits) and assembles the algebra.
pub fn build_algebra_with(
    profile: MellinProfile,
    mode: Mode,
    mu: f64,
    extrapolation: &ExtrapolationSettings,
) -> Result<DeformedAlgebra> {
    if !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mu must be finite, got {mu}"
        )));
    }
    let mut report = DiagnosticsReport::new();
    let nu = profile.convergence_abscissa();
    let upper = profile.upper_abscissa();

    if nu == f64::INFINITY {
        report.record(
            "mellin_exists",
            CheckKind::Necessary,
            CheckStatus::Fail,
            "the Mellin transform diverges for every rho",
        );
        report.conclude();
        return Err(Error::Rejected(Box::new(report)));
    }
    report.record(
        "mellin_exists",
        CheckKind::Necessary,
        CheckStatus::Pass,
        format!("F̂ finite on ({nu}, {upper})"),
    );

    if upper.is_finite() {
        report.record(
            "mellin_upper_unbounded",
            CheckKind::Necessary,
            CheckStatus::Fail,
            format!("F̂ diverges for rho >= {upper}: psi singular at finite distance"),
        );
        report.conclude();
        return Err(Error::Rejected(Box::new(report)));
    }
    report.record(
        "mellin_upper_unbounded",
        CheckKind::Necessary,
        CheckStatus::Pass,
        "F̂ exists on an interval unbounded above",
    );

    let spectrum = if nu.is_finite() {
        let lambda = nu.round();
        let defect = (nu - lambda).abs();
        let ok = defect <= 1e-6 && lambda <= 0.0;
        report.push(crate::diagnostics::Check {
            name: "convergence_abscissa_integer".into(),
            kind: CheckKind::Necessary,
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            residual: Some(defect),
            tolerance: Some(1e-6),
            statement: if ok {
                format!("ν = {lambda} is a nonpositive integer")
            } else {
                format!("ν = {nu} not a nonpositive integer")
            },
        });
        if !ok {
            report.conclude();
            return Err(Error::Rejected(Box::new(report)));
        }
        let lambda = lambda as i64;
        match mode {
            Mode::Annihilation => SpectrumDescriptor::LowerBounded { lambda },
            Mode::Creation => SpectrumDescriptor::UpperBounded { lambda: -lambda },
        }
    } else {
        report.record(
            "convergence_abscissa_integer",
            CheckKind::Necessary,
            CheckStatus::NotApplicable,
            "ν = -inf: spectrum is all of Z",
        );
        SpectrumDescriptor::AllIntegers
    };

    let limits = profile.ratio_limits(extrapolation)?;
    let (lo, hi) = (limits.at_minus_infinity, limits.at_plus_infinity);
    if nu.is_finite() {
        report.record(
            "ratio_limits_ordered",
            CheckKind::Necessary,
            CheckStatus::NotApplicable,
            "bounded spectrum: the lower end of the domain is 0",
        );
    } else if lo < hi {
        report.record(
            "ratio_limits_ordered",
            CheckKind::Necessary,
            CheckStatus::Pass,
            format!("lim -inf = {lo} < lim +inf = {hi}"),
        );
    } else {
        report.record(
            "ratio_limits_ordered",
            CheckKind::Necessary,
            CheckStatus::Fail,
            format!("empty coherent domain: lim -inf = {lo} >= lim +inf = {hi}"),
        );
        report.conclude();
        return Err(Error::Rejected(Box::new(report)));
    }
    report.conclude();

    Ok(DeformedAlgebra {
        profile,
        mode,
        mu,
        nu,
        spectrum,
        domain: CoherentDomain {
            inner_sq: lo,
            outer_sq: hi,
        },
        limits,
        report,
    })
}

impl DeformedAlgebra {
    pub fn profile(&self) -> &MellinProfile {
        &self.profile
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn convergence_abscissa(&self) -> f64 {
        self.nu
    }

    pub fn spectrum(&self) -> SpectrumDescriptor {
        self.spectrum
    }

    pub fn domain(&self) -> CoherentDomain {
        self.domain
    }

    pub fn ratio_limits(&self) -> &RatioLimits {
        &self.limits
    }

    /// Necessary-condition checks recorded while building.
    pub fn build_report(&self) -> &DiagnosticsReport {
        &self.report
    }

    fn argument(&self, rho: f64) -> f64 {
        match self.mode {
            Mode::Annihilation => rho - self.mu,
            Mode::Creation => 1.0 - (rho - self.mu),
        }
    }

    /// `ψ(ρ)`; zero at the spectrum edge, a domain error beyond it.
    pub fn psi(&self, rho: f64) -> Result<f64> {
        self.profile.ratio(self.argument(rho))
    }

    /// `ψ(n + μ)` for a basis index, computed without the round trip through `μ`.
    pub fn psi_index(&self, n: i64) -> Result<f64> {
        let u = match self.mode {
            Mode::Annihilation => n as f64,
            Mode::Creation => 1.0 - n as f64,
        };
        self.profile.ratio(u)
    }

    fn require_in_spectrum(&self, n: i64) -> Result<()> {
        if self.spectrum.contains(n) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "index {n} outside the spectrum {:?}",
                self.spectrum
            )))
        }
    }

    /// `ψ(n)!`: `1` at `0`, `∏_{1..n} ψ(i)` above, `∏_{n+1..0} ψ(i)` below.
    pub fn psi_factorial(&self, n: i64) -> Result<f64> {
        self.require_in_spectrum(n)?;
        let mut acc = 1.0;
        if n > 0 {
            for i in 1..=n {
                acc *= self.psi_index(i)?;
            }
        } else {
            for i in (n + 1..=0).rev() {
                acc *= self.psi_index(i)?;
            }
        }
        Ok(acc)
    }

    /// `ln ψ(n)!`, for indices where the product itself would overflow.
    pub fn ln_psi_factorial(&self, n: i64) -> Result<f64> {
        self.require_in_spectrum(n)?;
        let range: Vec<i64> = if n > 0 {
            (1..=n).collect()
        } else {
            (n + 1..=0).collect()
        };
        range
            .into_iter()
            .try_fold(0.0, |acc, i| Ok(acc + self.psi_index(i)?.ln()))
    }

    /// Partner algebra with the other mode: `ψ_dual(ρ) = ψ(1-ρ)`.
    pub fn dual(&self) -> DeformedAlgebra {
        DeformedAlgebra {
            profile: self.profile.clone(),
            mode: self.mode.flipped(),
            mu: -self.mu,
            nu: self.nu,
            spectrum: self.spectrum.reflected(),
            domain: self.domain,
            limits: self.limits.clone(),
            report: self.report.clone(),
        }
    }

    /// Physical arguments `ρ` corresponding to the grid in `u`, with `ψ(ρ) = R(u)`.
    pub fn psi_grid(&self, grid: &GridSpec) -> Vec<f64> {
        let mut rhos: Vec<f64> = grid
            .sample(self.nu)
            .into_iter()
            .map(|u| match self.mode {
                Mode::Annihilation => u + self.mu,
                Mode::Creation => 1.0 - u + self.mu,
            })
            .collect();
        rhos.sort_by(f64::total_cmp);
        rhos
    }

    /// Which sufficient condition covers this weight, followed by the direct
    /// checks on sampled `ψ`.
    pub fn check_sufficient(&self, grid: &GridSpec) -> Result<DiagnosticsReport> {
        let mut report = DiagnosticsReport::new();
        let w = self.profile.weight();
        let (alpha, beta) = (w.interval.alpha, w.interval.beta);
        let upper_ok = beta.is_finite() && w.edge_behavior(Edge::Upper).is_regular();
        let not_covered = "not covered: consistency verified directly";

        let ring = alpha > 0.0 && beta.is_finite();
        let status = |applies: bool| {
            if applies {
                CheckStatus::Pass
            } else {
                CheckStatus::NotApplicable
            }
        };
        let ring_ok = ring && upper_ok && w.edge_behavior(Edge::Lower).is_regular();
        report.record(
            "ring_edge_conditions",
            CheckKind::Sufficient,
            status(ring_ok),
            if ring_ok {
                "bounded ring, F regular at both edges".to_string()
            } else {
                format!("{not_covered} (needs a bounded ring with regular edges)")
            },
        );
        let disk = alpha == 0.0 && beta.is_finite();
        let full_ok =
            disk && !self.nu.is_finite() && upper_ok && self.limits.at_minus_infinity == 0.0;
        report.record(
            "disk_full_axis_conditions",
            CheckKind::Sufficient,
            status(full_ok),
            if full_ok {
                "disk, F̂ on the whole axis, regular outer edge, lower ratio limit 0".to_string()
            } else {
                format!("{not_covered} (needs a disk with F̂ on the whole axis and a regular outer edge)")
            },
        );
        let finite_ok = disk && self.nu.is_finite() && upper_ok;
        report.record(
            "disk_finite_abscissa_conditions",
            CheckKind::Sufficient,
            status(finite_ok),
            if finite_ok {
                format!("disk, ν = {} integer, regular outer edge", self.nu)
            } else {
                format!("{not_covered} (needs a disk with integer ν and a regular outer edge)")
            },
        );

        let us = grid.sample(self.nu);
        let values: Vec<f64> = us
            .iter()
            .map(|u| self.profile.ratio(*u))
            .collect::<Result<_>>()?;

        let band = values
            .iter()
            .map(|r| {
                ((alpha - r) / alpha.max(1.0))
                    .max(if beta.is_finite() {
                        (r - beta) / beta.max(1.0)
                    } else {
                        0.0
                    })
                    .max(0.0)
            })
            .fold(0.0, f64::max);
        report.measure(
            "band_condition",
            CheckKind::Verification,
            band,
            1e-9,
            format!(
                "{alpha} <= psi <= {beta} at {} sampled points",
                values.len()
            ),
        );

        let (lo, hi) = (self.limits.at_minus_infinity, self.limits.at_plus_infinity);
        let outside = values.iter().filter(|r| !(**r > lo && **r < hi)).count();
        report.measure(
            "values_between_limits",
            CheckKind::Verification,
            outside as f64,
            0.0,
            format!("sampled psi strictly inside ({lo}, {hi}); {outside} outside"),
        );

        let edge_defect = |limit: f64, edge: f64| -> f64 {
            if limit == edge {
                0.0
            } else if limit.is_infinite() || edge.is_infinite() {
                f64::INFINITY
            } else {
                (limit - edge).abs() / edge.abs().max(1.0)
            }
        };
        let extrapolated = [&self.limits.minus_confidence, &self.limits.plus_confidence]
            .iter()
            .any(|s| matches!(s, LimitSource::Extrapolated { .. }));
        report.measure(
            "limits_match_domain",
            CheckKind::Verification,
            edge_defect(lo, alpha).max(edge_defect(hi, beta)),
            if extrapolated { 1e-3 } else { 1e-12 },
            format!(
                "coherent domain ({}, {}) against the ring ({alpha}, {beta}) of F",
                self.domain.inner_sq, self.domain.outer_sq
            ),
        );

        let drops = values
            .windows(2)
            .map(|p| (p[0] - p[1]) / p[1].abs().max(1e-300))
            .fold(0.0, f64::max);
        report.measure(
            "psi_monotone",
            CheckKind::Sanity,
            drops,
            1e-9,
            "R(u) = F̂(u+1)/F̂(u) nondecreasing on the grid",
        );

        let mut convexity = 0.0f64;
        for u in us.iter().step_by(10) {
            for h in [0.5, 1.0] {
                if !self.profile.converges_at(u - h) {
                    continue;
                }
                let mid = self.profile.ln_value(*u)?;
                let side = self.profile.ln_value(u - h)? + self.profile.ln_value(u + h)?;
                convexity = convexity.max(2.0 * mid - side);
            }
        }
        report.measure(
            "mellin_log_convex",
            CheckKind::Sanity,
            convexity,
            1e-9,
            "2 ln F̂(u) <= ln F̂(u-h) + ln F̂(u+h)",
        );
        Ok(report)
    }
}
