//! Adaptive Gauss–Kronrod quadrature, plus a log-domain driver for positive
//! integrands of the form `exp(g(s))` over possibly infinite ranges.
//!
//! Mellin integrands span hundreds of orders of magnitude (`x^(rho-1)` with
//! large `|rho|`), so the driver works with `g = ln(integrand)`: it locates the
//! peak of `g`, grades breakpoints around it on the scale of the peak width,
//! truncates infinite tails where `g` has dropped by `tail_drop`, and then
//! integrates `exp(g - g_max)` with a global adaptive scheme.

#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    /// Relative error targeted by the adaptive refinement.
    pub rel_tol: f64,
    /// Largest relative error reported as success once the budget is spent.
    pub accept_tol: f64,
    /// Maximum number of panels.
    pub max_panels: usize,
    /// Infinite tails are cut where `g` is this far below its maximum.
    pub tail_drop: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            accept_tol: 1e-10,
            max_panels: 10_000,
            tail_drop: 80.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuadError {
    /// Error bound above `accept_tol` after the panel budget was spent.
    NoConvergence { estimate: Estimate },
    /// The log-integrand does not decay towards an infinite end.
    Unbounded { at: f64 },
    /// The integrand vanishes (or is undefined) everywhere that was sampled.
    Degenerate,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss error estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = rescale_error(
        (res_k - res_g) * half,
        res_abs * half.abs(),
        res_asc * half.abs(),
    );
    (res_k * half, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Global adaptive bisection over the panels delimited by `breaks`
/// (sorted, finite). Refines the worst panel until the summed error meets
/// `max(abs_tol, rel_tol·|I|)` or the panel budget is exhausted.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, error) = gk15(f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_panels {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel can no longer be split in floating point.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            total_err = heap.iter().map(|p| p.error).sum();
            if heap.peek().is_none_or(|p| p.error == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Estimate {
        value,
        error,
        panels: heap.len(),
    }
}

/// `ln ∫ exp(g)` with a relative error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogIntegral {
    pub ln_value: f64,
    pub rel_error: f64,
    pub panels: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Integrates `exp(g(s))` over `(lo, hi)`; either end may be infinite.
/// `extra_breaks` are forced panel boundaries (kinks of the integrand).
pub fn integrate_exp<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    hi: f64,
    extra_breaks: &[f64],
    settings: &QuadSettings,
) -> Result<LogIntegral, QuadError> {
    let g = |s: f64| sanitize(g(s));
    let (s_peak, g_max) = locate_peak(&g, lo, hi, extra_breaks)?;
    let width = peak_width(&g, s_peak, g_max, lo, hi);
    let lo_eff = if lo.is_finite() {
        lo
    } else {
        tail_cut(&g, s_peak, g_max, -1.0, width, settings.tail_drop)?
    };
    let hi_eff = if hi.is_finite() {
        hi
    } else {
        tail_cut(&g, s_peak, g_max, 1.0, width, settings.tail_drop)?
    };

    let mut breaks = vec![lo_eff, hi_eff];
    if s_peak > lo_eff && s_peak < hi_eff {
        breaks.push(s_peak);
    }
    for j in -2..64 {
        let d = width * 2f64.powi(j);
        for s in [s_peak - d, s_peak + d] {
            if s > lo_eff && s < hi_eff {
                breaks.push(s);
            }
        }
        if d > hi_eff - lo_eff {
            break;
        }
    }
    breaks.extend(
        extra_breaks
            .iter()
            .copied()
            .filter(|s| *s > lo_eff && *s < hi_eff),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let f = |s: f64| (g(s) - g_max).exp();
    let est = adaptive(&f, &breaks, 0.0, settings.rel_tol, settings.max_panels);
    if est.value <= 0.0 || !est.value.is_finite() {
        return Err(QuadError::Degenerate);
    }
    let rel_error = est.error / est.value;
    if rel_error > settings.accept_tol {
        return Err(QuadError::NoConvergence { estimate: est });
    }
    Ok(LogIntegral {
        ln_value: g_max + est.value.ln(),
        rel_error,
        panels: est.panels,
    })
}

/// Coarse scan (uniform interior points, geometric clusters toward finite
/// ends, outward marching toward infinite ends) followed by golden-section
/// refinement. Assumes `g` is unimodal, which holds for log-concave weights.
fn locate_peak<G: Fn(f64) -> f64>(
    g: &G,
    lo: f64,
    hi: f64,
    extra: &[f64],
) -> Result<(f64, f64), QuadError> {
    let mut pts: Vec<f64> = Vec::with_capacity(256);
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let len = hi - lo;
            for i in 0..64 {
                pts.push(lo + len * (i as f64 + 0.5) / 64.0);
            }
            for k in 1..=15 {
                let d = len * 10f64.powi(-k);
                pts.push(lo + d);
                pts.push(hi - d);
            }
        }
        (true, false) => {
            for k in 1..=15 {
                pts.push(lo + 10f64.powi(-k));
            }
            march(&mut pts, lo, 1.0);
        }
        (false, true) => {
            for k in 1..=15 {
                pts.push(hi - 10f64.powi(-k));
            }
            march(&mut pts, hi, -1.0);
        }
        (false, false) => {
            pts.push(0.0);
            march(&mut pts, 0.0, 1.0);
            march(&mut pts, 0.0, -1.0);
        }
    }
    pts.extend(extra.iter().copied().filter(|s| *s > lo && *s < hi));
    pts.retain(|s| *s > lo && *s < hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let vals: Vec<f64> = pts.iter().map(|&s| g(s)).collect();
    let (imax, &vmax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(QuadError::Degenerate)?;
    if vmax == f64::INFINITY {
        return Err(QuadError::Unbounded { at: pts[imax] });
    }
    if vmax == f64::NEG_INFINITY {
        return Err(QuadError::Degenerate);
    }
    // A maximum on the outermost sample toward an infinite end means growth.
    if imax == pts.len() - 1 && !hi.is_finite() {
        return Err(QuadError::Unbounded { at: pts[imax] });
    }
    if imax == 0 && !lo.is_finite() {
        return Err(QuadError::Unbounded { at: pts[imax] });
    }

    let a = if imax == 0 { lo } else { pts[imax - 1] };
    let b = if imax + 1 == pts.len() {
        hi
    } else {
        pts[imax + 1]
    };
    let (s_best, g_best) = golden_max(g, a, b, pts[imax], vmax);
    Ok((s_best, g_best))
}

fn march(pts: &mut Vec<f64>, from: f64, dir: f64) {
    let mut step = 0.25;
    while step < 1e9 {
        pts.push(from + dir * step);
        step *= 1.5;
    }
}

fn golden_max<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, s0: f64, g0: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut best = (s0, g0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
        for (s, v) in [(c, gc), (d, gd)] {
            if v > best.1 {
                best = (s, v);
            }
        }
    }
    best
}

/// Local scale of the peak: curvature radius for interior maxima, inverse
/// slope for maxima pinned at an end.
fn peak_width<G: Fn(f64) -> f64>(g: &G, s: f64, g_max: f64, lo: f64, hi: f64) -> f64 {
    let span = if lo.is_finite() && hi.is_finite() {
        hi - lo
    } else {
        f64::INFINITY
    };
    let mut h = 1e-3 * (1.0 + s.abs());
    if span.is_finite() {
        h = h.min(span * 1e-3);
    }
    let mut width = f64::INFINITY;
    for _ in 0..40 {
        let (sl, sr) = (s - h, s + h);
        let gl = if sl > lo { g(sl) } else { f64::NAN };
        let gr = if sr < hi { g(sr) } else { f64::NAN };
        let w = match (gl.is_finite(), gr.is_finite()) {
            (true, true) => {
                let curv = (gl - 2.0 * g_max + gr) / (h * h);
                let slope = ((gr - gl) / (2.0 * h)).abs();
                let wc = if curv < 0.0 {
                    (-curv).sqrt().recip()
                } else {
                    f64::INFINITY
                };
                let ws = if slope > 0.0 {
                    slope.recip()
                } else {
                    f64::INFINITY
                };
                wc.min(ws.max(h))
            }
            (true, false) => (g_max - gl).abs().max(1e-300).recip() * h,
            (false, true) => (g_max - gr).abs().max(1e-300).recip() * h,
            (false, false) => f64::INFINITY,
        };
        // Accept once the probe step resolves the peak.
        if w.is_finite() && h <= 0.25 * w {
            width = w;
            break;
        }
        if w.is_finite() {
            width = w;
        }
        h *= 0.25;
        if h < 1e-300 {
            break;
        }
    }
    let floor = 1e-14 * (1.0 + s.abs());
    let cap = if span.is_finite() { span } else { 1e6 };
    width.clamp(floor, cap)
}

fn tail_cut<G: Fn(f64) -> f64>(
    g: &G,
    s_peak: f64,
    g_max: f64,
    dir: f64,
    width: f64,
    drop: f64,
) -> Result<f64, QuadError> {
    let mut step = width.max(1e-8);
    let mut prev = g_max;
    loop {
        let s = s_peak + dir * step;
        let v = g(s);
        if v < g_max - drop && v <= prev {
            return Ok(s);
        }
        if step > 1e12 {
            return Err(QuadError::Unbounded { at: s });
        }
        prev = v;
        step *= 2.0;
    }
}

/// Fixed composite Gauss–Legendre rule: nodes and weights for `points`
/// nodes on each of the given panels.
pub fn composite_gauss_legendre(panels: &[f64], points: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(points);
    let mut out = Vec::with_capacity(panels.len().saturating_sub(1) * points);
    for p in panels.windows(2) {
        let (a, b) = (p[0], p[1]);
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + h * xi, h * wi));
        }
    }
    out
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk15_is_exact_for_polynomials() {
        let (v, _) = gk15(&|x: f64| x.powi(10) - 3.0 * x.powi(3), -1.0, 2.0);
        let exact = (2f64.powi(11) + 1.0) / 11.0 - 0.75 * (16.0 - 1.0);
        assert_relative_eq!(v, exact, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let est = adaptive(&|x: f64| x.powf(-0.5), &[0.0, 1.0], 0.0, 1e-10, 10_000);
        assert_relative_eq!(est.value, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn gaussian_over_the_whole_line() {
        let s = QuadSettings::default();
        let r = integrate_exp(|t| -t * t, f64::NEG_INFINITY, f64::INFINITY, &[], &s).unwrap();
        assert_relative_eq!(
            r.ln_value,
            0.5 * std::f64::consts::PI.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn shifted_narrow_peak() {
        // ∫ exp(-(t-300)^2 * 1e6) dt = sqrt(pi)/1000, far from the origin.
        let s = QuadSettings::default();
        let r = integrate_exp(
            |t| -1e6 * (t - 300.0).powi(2),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &[],
            &s,
        )
        .unwrap();
        let exact = 0.5 * std::f64::consts::PI.ln() - 1000f64.ln();
        assert!(
            (r.ln_value - exact).abs() < 1e-11,
            "{} vs {}",
            r.ln_value,
            exact
        );
    }

    #[test]
    fn slow_algebraic_tail() {
        // ∫_{-inf}^0 e^{0.01 t} dt = 100
        let s = QuadSettings::default();
        let r = integrate_exp(|t| 0.01 * t, f64::NEG_INFINITY, 0.0, &[], &s).unwrap();
        assert_relative_eq!(r.ln_value.exp(), 100.0, max_relative = 1e-10);
    }

    #[test]
    fn growth_toward_infinity_is_unbounded() {
        let s = QuadSettings::default();
        let r = integrate_exp(|t| -0.5 * t, f64::NEG_INFINITY, 0.0, &[], &s);
        assert!(matches!(r, Err(QuadError::Unbounded { .. })));
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1, 2, 5, 20] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            let deg = 2 * n - 2;
            let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(v, 2.0 / (deg as f64 + 1.0), max_relative = 1e-13);
        }
    }
}
