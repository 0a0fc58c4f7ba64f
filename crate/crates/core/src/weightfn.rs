//! Weight functions `F` on an interval `(alpha, beta)` of the positive half-line.
//!
//! `alpha` and `beta` bound the squared modulus of the Bargmann ring, so a
//! weight on `(alpha, beta)` defines the scalar product
//! `(g, f) = ∫ F(|z|²) f(z) conj(g(z)) dz dz̄` over `alpha < |z|² < beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-modulus bounds of the ring; `beta` may be `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub alpha: f64,
    #[serde(with = "crate::serde_float")]
    pub beta: f64,
}

impl Interval {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and nonnegative, got {alpha}"
            )));
        }
        if beta.is_nan() || beta <= alpha {
            return Err(Error::InvalidParameter(format!(
                "beta must exceed alpha, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.alpha && x < self.beta
    }

    pub fn is_bounded(&self) -> bool {
        self.beta.is_finite()
    }

    /// Log-domain bounds `(ln alpha, ln beta)`, possibly infinite.
    pub fn log_bounds(&self) -> (f64, f64) {
        (self.alpha.ln(), self.beta.ln())
    }
}

/// Positive samples interpolated by a monotone piecewise cubic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableData", into = "TableData")]
pub struct Tabulated {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TableData {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<TableData> for Tabulated {
    type Error = Error;

    fn try_from(d: TableData) -> Result<Self> {
        Tabulated::new(d.xs, d.ys)
    }
}

impl From<Tabulated> for TableData {
    fn from(t: Tabulated) -> Self {
        TableData { xs: t.xs, ys: t.ys }
    }
}

impl Tabulated {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated weight needs at least two (x, F) pairs of equal length".into(),
            ));
        }
        if xs[0] < 0.0 || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "tabulated abscissae must be finite and nonnegative".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "tabulated abscissae must be strictly increasing".into(),
            ));
        }
        if let Some(bad) = ys.iter().find(|y| !(y.is_finite() && **y > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "tabulated weight values must be positive, found {bad}"
            )));
        }
        let slopes = pchip_slopes(&xs, &ys);
        Ok(Self { xs, ys, slopes })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Monotone cubic Hermite interpolation; `x` must lie within the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&xi| xi <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}

/// Fritsch–Carlson slopes; keeps each cubic piece monotone between its nodes.
fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = end_slope(xs[1] - xs[0], xs[2] - xs[1], delta[0], delta[1]);
    d[n - 1] = end_slope(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        delta[n - 2],
        delta[n - 3],
    );
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `x^sigma`
    Power {
        sigma: f64,
    },
    /// `x^sigma (beta - x)^eta`, with `beta` the upper edge of the interval.
    PowerBeta {
        sigma: f64,
        eta: f64,
    },
    /// `exp(-x^(k/m))`, `k/m` irreducible.
    StretchedExp {
        k: u32,
        m: u32,
    },
    /// `exp(-sigma (ln x)^(2n))`
    LogGaussian {
        sigma: f64,
        n: u32,
    },
    /// `exp(1 / (x - beta))`, with `beta` the upper edge of the interval.
    EssentialEdge,
    Tabulated(Tabulated),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Power { .. } => "power",
            Family::PowerBeta { .. } => "power_beta",
            Family::StretchedExp { .. } => "stretched_exp",
            Family::LogGaussian { .. } => "log_gaussian",
            Family::EssentialEdge => "essential_edge",
            Family::Tabulated(_) => "tabulated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeBehavior {
    NonzeroValue,
    /// `F` and its first `order - 1` derivatives vanish at the edge.
    FirstNonvanishingDerivative {
        order: u32,
    },
    AllDerivativesVanish,
    Singular,
}

impl EdgeBehavior {
    /// True when the value or a finite-order derivative is finite and nonzero.
    pub fn is_regular(&self) -> bool {
        matches!(
            self,
            EdgeBehavior::NonzeroValue | EdgeBehavior::FirstNonvanishingDerivative { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub family: Family,
    pub interval: Interval,
}

impl WeightFunction {
    pub fn new(family: Family, interval: Interval) -> Result<Self> {
        match &family {
            Family::Power { sigma } => finite("sigma", *sigma)?,
            Family::PowerBeta { sigma, eta } => {
                finite("sigma", *sigma)?;
                finite("eta", *eta)?;
                if *eta + 1.0 <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "power_beta requires eta + 1 > 0, got eta={eta}"
                    )));
                }
                if !interval.is_bounded() {
                    return Err(Error::InvalidParameter(
                        "power_beta requires a finite upper edge".into(),
                    ));
                }
            }
            Family::StretchedExp { k, m } => {
                if *k == 0 || *m == 0 {
                    return Err(Error::InvalidParameter("k and m must be positive".into()));
                }
                if gcd(*k, *m) != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "k/m = {k}/{m} is not irreducible"
                    )));
                }
            }
            Family::LogGaussian { sigma, n } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "log_gaussian requires sigma > 0, got {sigma}"
                    )));
                }
                if *n == 0 {
                    return Err(Error::InvalidParameter(
                        "log_gaussian requires a positive integer n".into(),
                    ));
                }
            }
            Family::EssentialEdge => {
                if !interval.is_bounded() {
                    return Err(Error::InvalidParameter(
                        "essential_edge requires a finite upper edge".into(),
                    ));
                }
            }
            Family::Tabulated(tab) => {
                let (first, last) = (tab.xs[0], tab.xs[tab.xs.len() - 1]);
                if interval.alpha < first || interval.beta > last {
                    return Err(Error::InvalidParameter(format!(
                        "interval ({}, {}) not covered by the tabulated grid [{first}, {last}]",
                        interval.alpha, interval.beta
                    )));
                }
            }
        }
        Ok(Self { family, interval })
    }

    pub fn power(sigma: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Power { sigma }, Interval::new(alpha, beta)?)
    }

    pub fn power_beta(sigma: f64, eta: f64, beta: f64) -> Result<Self> {
        Self::new(Family::PowerBeta { sigma, eta }, Interval::new(0.0, beta)?)
    }

    pub fn stretched_exp(k: u32, m: u32) -> Result<Self> {
        Self::new(
            Family::StretchedExp { k, m },
            Interval::new(0.0, f64::INFINITY)?,
        )
    }

    pub fn log_gaussian(sigma: f64, n: u32) -> Result<Self> {
        Self::new(
            Family::LogGaussian { sigma, n },
            Interval::new(0.0, f64::INFINITY)?,
        )
    }

    pub fn essential_edge(beta: f64) -> Result<Self> {
        Self::new(Family::EssentialEdge, Interval::new(0.0, beta)?)
    }

    /// Tabulated weight over the full extent of its grid.
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let tab = Tabulated::new(xs, ys)?;
        let interval = Interval::new(tab.xs[0], tab.xs[tab.xs.len() - 1])?;
        Self::new(Family::Tabulated(tab), interval)
    }

    /// Short human-readable description, e.g. `power(sigma=0) on (1, 4)`.
    pub fn label(&self) -> String {
        let params = match &self.family {
            Family::Power { sigma } => format!("sigma={sigma}"),
            Family::PowerBeta { sigma, eta } => format!("sigma={sigma}, eta={eta}"),
            Family::StretchedExp { k, m } => format!("k/m={k}/{m}"),
            Family::LogGaussian { sigma, n } => format!("sigma={sigma}, n={n}"),
            Family::EssentialEdge => String::new(),
            Family::Tabulated(t) => format!("{} points", t.xs.len()),
        };
        format!(
            "{}({params}) on ({}, {})",
            self.family.name(),
            self.interval.alpha,
            self.interval.beta
        )
    }

    /// `F(x)` for `x` strictly inside the interval.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if !self.interval.contains(x) {
            return Err(Error::Domain(format!(
                "x={x} outside ({}, {})",
                self.interval.alpha, self.interval.beta
            )));
        }
        Ok(match &self.family {
            Family::Tabulated(tab) => tab.interpolate(x),
            _ => self.ln_at_log(x.ln()).exp(),
        })
    }

    /// `ln F(x)`, same domain as [`evaluate`](Self::evaluate).
    pub fn ln_evaluate(&self, x: f64) -> Result<f64> {
        if !self.interval.contains(x) {
            return Err(Error::Domain(format!(
                "x={x} outside ({}, {})",
                self.interval.alpha, self.interval.beta
            )));
        }
        Ok(self.ln_at_log(x.ln()))
    }

    /// `ln F(e^t)` without domain checks. Written in terms of `t` so that
    /// extreme arguments neither underflow nor lose digits near `beta`.
    pub fn ln_at_log(&self, t: f64) -> f64 {
        match &self.family {
            Family::Power { sigma } => {
                if *sigma == 0.0 {
                    0.0
                } else {
                    sigma * t
                }
            }
            Family::PowerBeta { sigma, eta } => {
                let sigma_part = if *sigma == 0.0 { 0.0 } else { sigma * t };
                let eta_part = if *eta == 0.0 {
                    0.0
                } else {
                    eta * ln_gap_below(self.interval.beta, t)
                };
                sigma_part + eta_part
            }
            Family::StretchedExp { k, m } => -(t * (*k as f64) / (*m as f64)).exp(),
            Family::LogGaussian { sigma, n } => -sigma * t.powi(2 * *n as i32),
            Family::EssentialEdge => {
                let gap = gap_below(self.interval.beta, t);
                -1.0 / gap
            }
            Family::Tabulated(tab) => tab.interpolate(t.exp()).ln(),
        }
    }

    /// Analytic classification of `F` at a finite, nonzero edge.
    pub fn edge_behavior(&self, edge: Edge) -> EdgeBehavior {
        let at = match edge {
            Edge::Lower => self.interval.alpha,
            Edge::Upper => self.interval.beta,
        };
        if at == 0.0 || !at.is_finite() {
            return EdgeBehavior::Singular;
        }
        match (&self.family, edge) {
            (Family::PowerBeta { eta, .. }, Edge::Upper) => {
                if *eta == 0.0 {
                    EdgeBehavior::NonzeroValue
                } else if *eta > 0.0 && eta.fract() == 0.0 {
                    EdgeBehavior::FirstNonvanishingDerivative { order: *eta as u32 }
                } else {
                    EdgeBehavior::Singular
                }
            }
            (Family::EssentialEdge, Edge::Upper) => EdgeBehavior::AllDerivativesVanish,
            _ => EdgeBehavior::NonzeroValue,
        }
    }
}

/// `beta - e^t`, accurate when `e^t` is close to `beta`.
fn gap_below(beta: f64, t: f64) -> f64 {
    -beta * (t - beta.ln()).exp_m1()
}

fn ln_gap_below(beta: f64, t: f64) -> f64 {
    beta.ln() + (-(t - beta.ln()).exp_m1()).ln()
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be finite, got {v}"
        )))
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
