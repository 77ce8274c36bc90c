//! Stability-region machinery for the adaptive super-twisting gains.
//!
//! A query fixes the shape parameters `(Ω₁, Ω₂, γ, θ)`, the local slope
//! `Γ = αβ|ė|^{α−1}` of the terminal surface and the adaptive gain `L`.
//! From it we build the Lyapunov matrix `P`, the reduced dissipation matrix
//! `Q̃_R`, convergence rates and the reaching-time bound.
//!
//! Symbols used below that have no home elsewhere:
//! * `Π` – lumped perturbation acting on the super-twisting integrator; the
//!   bound on its derivative is taken to be `L` itself.
//! * `L*` – upper bound on the adapted gain, used in `V₁ = ζᵀPζ + ½(L − L*)²`.
//! * `χ`, `ϑ` – decay rates of `V₂` and `V₁` respectively.

use crate::control::{kappa_from_l, l_from_kappa1, AdaptiveParams, SlidingParams};
use crate::par::Execution;
use crate::{Error, Result};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One point of the gain-parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityQuery {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma: f64,
    pub theta: f64,
    /// Surface slope `Γ`.
    pub big_gamma: f64,
    /// Adaptive gain `L`.
    pub l: f64,
}

impl StabilityQuery {
    pub fn from_params(p: &SlidingParams, big_gamma: f64, l: f64) -> Self {
        Self { omega1: p.omega1, omega2: p.omega2, gamma: p.gamma, theta: p.theta, big_gamma, l }
    }

    pub fn with_gamma(self, big_gamma: f64) -> Self {
        Self { big_gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("gamma", self.gamma),
            ("Gamma", self.big_gamma),
            ("L", self.l),
        ];
        for (n, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{n} must be positive and finite, got {v}")));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        Ok(())
    }

    /// Closed-form gains `(κ₁, κ₂)` for this query.
    pub fn kappas(&self) -> (f64, f64) {
        let k1 = self.omega1 * (2.0 * self.gamma * self.l / ((1.0 - self.theta) * self.omega2)).sqrt();
        let k2 = (self.theta + 1.0) / (1.0 - self.theta) * self.l;
        (k1, k2)
    }
}

/// Both sides of the ellipse inequality, `(LHS, RHS)`.
pub fn ellipse_sides(q: &StabilityQuery) -> (f64, f64) {
    let g = q.big_gamma;
    let (o1, o2) = (q.omega1, q.omega2);
    let lhs = o1 * g * g - 2.0 * o2 / q.gamma * g;
    let rhs = 0.25 * (g + o1 * g).powi(2) - (1.0 + o1) * o2 * g * q.theta + o2 * o2;
    (lhs, rhs)
}

/// `LHS − RHS` of the ellipse inequality; positive strictly inside.
pub fn margin(q: &StabilityQuery) -> f64 {
    let (l, r) = ellipse_sides(q);
    l - r
}

/// Strict ellipse test, no tolerance band.
pub fn ellipse_condition(q: &StabilityQuery) -> bool {
    let (l, r) = ellipse_sides(q);
    l > r
}

/// Center `(Ω₁c, Ω₂c)` of the ellipse for the given `(γ, θ, Γ)`.
pub fn ellipse_center(gamma: f64, theta: f64, big_gamma: f64) -> Result<(f64, f64)> {
    if gamma * theta <= 1.0 {
        return Err(Error::DegenerateEllipse(gamma * theta));
    }
    let d = gamma * (1.0 - theta * theta);
    let o1 = (gamma - 2.0 * theta + gamma * theta * theta) / d;
    let o2 = big_gamma * (theta * gamma - 1.0) / d;
    Ok((o1, o2))
}

/// Lyapunov matrix `P` in the `ζ = (|s|^½ sgn s, ν + Π)` coordinates.
pub fn build_p(q: &StabilityQuery) -> Matrix2<f64> {
    let p22 = (1.0 - q.theta) * q.omega2 / (2.0 * q.l);
    let p12 = -(p22 / q.gamma).sqrt();
    Matrix2::new(1.0, p12, p12, p22)
}

/// Reduced dissipation matrix `Q̃_R`.
///
/// Its determinant equals [`margin`] identically, and `q_R22 > 0`, so it is
/// positive definite exactly inside the ellipse.
pub fn build_qr(q: &StabilityQuery) -> Matrix2<f64> {
    let p = build_p(q);
    let (p12, p22) = (p[(0, 1)], p[(1, 1)]);
    let (k1, _) = q.kappas();
    let g = q.big_gamma;
    let q11 = k1 * g + 2.0 * q.omega2 * p12 / p22 + (1.0 + q.omega1) * q.omega2 * (1.0 - q.theta) / p12;
    let q12 = q.omega2 - 0.5 * (g + g * q.omega1);
    let q22 = -g * p12;
    Matrix2::new(q11, q12, q12, q22)
}

/// Eigenvalues `(λ_min, λ_max)` of a symmetric 2×2 matrix in closed form.
///
/// The smaller root is recovered from the determinant when the trace is
/// positive, which keeps its sign faithful near singularity.
pub fn eig2_sym(m: &Matrix2<f64>) -> (f64, f64) {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    if mean > 0.0 {
        let hi = mean + r;
        ((a * c - b * b) / hi, hi)
    } else {
        let lo = mean - r;
        (lo, if lo != 0.0 { (a * c - b * b) / lo } else { mean + r })
    }
}

/// Decay rates of the Lyapunov functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub chi: f64,
    pub vartheta: f64,
}

/// `χ = λ_min(P)^½ λ_min(Q̃_R) / λ_max(P)` and `ϑ = min(χ, √2 ω_α μ_α)`.
pub fn convergence_rates(q: &StabilityQuery, a: &AdaptiveParams) -> Result<Rates> {
    q.validate()?;
    let (pmin, pmax) = eig2_sym(&build_p(q));
    let (qmin, _) = eig2_sym(&build_qr(q));
    if !(qmin > 0.0) || !ellipse_condition(q) {
        return Err(Error::NotStable { margin: margin(q) });
    }
    let chi = pmin.sqrt() * qmin / pmax;
    let vartheta = chi.min(std::f64::consts::SQRT_2 * a.omega_a * a.mu_a);
    Ok(Rates { chi, vartheta })
}

/// `V₁ = ζᵀPζ + ½(L − L*)²` with `ζ = (|s|^½ sgn s, ν + Π)`.
pub fn lyapunov_v1(q: &StabilityQuery, s: f64, nu_plus_pi: f64, l_star: f64) -> f64 {
    let p = build_p(q);
    let z = nalgebra::Vector2::new(s.abs().sqrt() * s.signum(), nu_plus_pi);
    (z.transpose() * p * z)[(0, 0)] + 0.5 * (q.l - l_star).powi(2)
}

/// Reaching-time bound `(2/ϑ) V₁^½`.
pub fn reaching_time_bound(vartheta: f64, v1: f64) -> f64 {
    2.0 / vartheta * v1.max(0.0).sqrt()
}

/// `(Γ_min, Γ_max)`: slope at the edge of the velocity tracking region and
/// at the largest expected velocity `v_max`.
pub fn gamma_operating_range(p: &SlidingParams, a: &AdaptiveParams, v_max: f64) -> (f64, f64) {
    let al = p.alpha();
    let de_edge = (a.mu_a / p.beta).powf(1.0 / al);
    let gmin = al * p.beta * de_edge.powf(al - 1.0);
    let gmax = al * p.beta * v_max.powf(al - 1.0);
    (gmin, gmax)
}

/// Everything known about one stability query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub query: StabilityQuery,
    pub inside_ellipse: bool,
    pub margin: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    #[serde(rename = "P")]
    pub p: [[f64; 2]; 2],
    #[serde(rename = "Qr")]
    pub qr: [[f64; 2]; 2],
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
    pub lambda_min_qr: f64,
    pub chi: Option<f64>,
    pub vartheta: Option<f64>,
    /// `V₁` at the start of the reaching phase.
    pub v1_0: f64,
    pub t_reach_bound: Option<f64>,
    /// Position tracking bound `2μ_α`.
    pub e_bound: f64,
    /// Velocity tracking bound `(μ_α/β)^{1/α}`.
    pub de_bound: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

fn rows(m: &Matrix2<f64>) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Initial conditions of the reaching phase for [`stability_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachingStart {
    /// Sliding variable magnitude at the start.
    pub s0: f64,
    /// Integrator plus perturbation `ν + Π` at the start.
    pub nu0: f64,
    /// Velocity bound used for `Γ_max`.
    pub v_max: f64,
}

impl Default for ReachingStart {
    fn default() -> Self {
        Self { s0: 0.0, nu0: 0.0, v_max: 1.0 }
    }
}

/// Full report for the sliding/adaptive parameters.
///
/// The query is evaluated at `Γ_min` (the tightest point of the operating
/// range) and at the initial gain `L = l_init`; `L*` is the gain at `κ₁max`.
pub fn stability_report(p: &SlidingParams, a: &AdaptiveParams, start: &ReachingStart) -> Result<StabilityReport> {
    let (gmin, gmax) = gamma_operating_range(p, a, start.v_max);
    let q = StabilityQuery::from_params(p, gmin, a.l_init);
    report_for(&q, p, a, start, (gmin, gmax))
}

/// Report for an explicit query.
pub fn report_for(
    q: &StabilityQuery,
    p: &SlidingParams,
    a: &AdaptiveParams,
    start: &ReachingStart,
    gamma_range: (f64, f64),
) -> Result<StabilityReport> {
    q.validate()?;
    let pm = build_p(q);
    let qr = build_qr(q);
    let (pmin, pmax) = eig2_sym(&pm);
    let (qmin, _) = eig2_sym(&qr);
    let (k1, k2) = q.kappas();
    let l_star = l_from_kappa1(a.kappa1_max, p).max(q.l);
    let v1 = lyapunov_v1(q, start.s0, start.nu0, l_star);
    let rates = convergence_rates(q, a).ok();
    Ok(StabilityReport {
        query: *q,
        inside_ellipse: ellipse_condition(q),
        margin: margin(q),
        kappa1: k1,
        kappa2: k2,
        p: rows(&pm),
        qr: rows(&qr),
        lambda_min_p: pmin,
        lambda_max_p: pmax,
        lambda_min_qr: qmin,
        chi: rates.map(|r| r.chi),
        vartheta: rates.map(|r| r.vartheta),
        v1_0: v1,
        t_reach_bound: rates.map(|r| reaching_time_bound(r.vartheta, v1)),
        e_bound: 2.0 * a.mu_a,
        de_bound: (a.mu_a / p.beta).powf(1.0 / p.alpha()),
        gamma_min: gamma_range.0,
        gamma_max: gamma_range.1,
    })
}

/// Worst-case reaching-time bound over the operating range of `Γ`, sampled
/// at `n` log-spaced slopes. `None` if any slope leaves the ellipse.
pub fn worst_reaching_time(p: &SlidingParams, a: &AdaptiveParams, start: &ReachingStart, n: usize) -> Option<f64> {
    let (gmin, gmax) = gamma_operating_range(p, a, start.v_max);
    let l_star = l_from_kappa1(a.kappa1_max, p).max(a.l_init);
    let mut worst: f64 = 0.0;
    for k in 0..n.max(2) {
        let f = k as f64 / (n.max(2) - 1) as f64;
        let g = gmin * (gmax / gmin).powf(f);
        let q = StabilityQuery::from_params(p, g, a.l_init);
        let r = convergence_rates(&q, a).ok()?;
        worst = worst.max(reaching_time_bound(r.vartheta, lyapunov_v1(&q, start.s0, start.nu0, l_star)));
    }
    Some(worst)
}

/// Uniform grid over the first quadrant of the `(Ω₁, Ω₂)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub omega1_max: f64,
    pub omega2_max: f64,
    pub n1: usize,
    pub n2: usize,
}

impl Default for RegionGrid {
    fn default() -> Self {
        Self { omega1_max: 20.0, omega2_max: 5.0, n1: 200, n2: 200 }
    }
}

impl RegionGrid {
    /// Grid nodes; zero is excluded so every node has `Ω₁, Ω₂ > 0`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n1 * self.n2);
        for i in 1..=self.n1 {
            for j in 1..=self.n2 {
                out.push((self.omega1_max * i as f64 / self.n1 as f64, self.omega2_max * j as f64 / self.n2 as f64));
            }
        }
        out
    }
}

/// One row of a region sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub omega1: f64,
    pub omega2: f64,
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub inside: bool,
    pub margin: f64,
    pub lambda_min_qr: f64,
}

/// Membership of every grid node for each `Γ` in `gammas`, ordered by
/// `Γ` then grid node.
pub fn sweep_region(
    gamma: f64,
    theta: f64,
    l: f64,
    gammas: &[f64],
    grid: &RegionGrid,
    exec: Execution,
) -> Vec<RegionPoint> {
    let nodes = grid.nodes();
    let jobs: Vec<(f64, f64, f64)> = gammas.iter().flat_map(|&g| nodes.iter().map(move |&(a, b)| (a, b, g))).collect();
    exec.map(&jobs, |&(o1, o2, g)| {
        let q = StabilityQuery { omega1: o1, omega2: o2, gamma, theta, big_gamma: g, l };
        RegionPoint {
            omega1: o1,
            omega2: o2,
            big_gamma: g,
            inside: ellipse_condition(&q),
            margin: margin(&q),
            lambda_min_qr: eig2_sym(&build_qr(&q)).0,
        }
    })
}

pub fn write_region_csv<W: Write>(w: W, pts: &[RegionPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["omega1", "omega2", "Gamma", "inside", "margin", "lambda_min_qr"])?;
    for p in pts {
        wr.write_record(&[
            format!("{}", p.omega1),
            format!("{}", p.omega2),
            format!("{}", p.big_gamma),
            (p.inside as u8).to_string(),
            format!("{:e}", p.margin),
            format!("{:e}", p.lambda_min_qr),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Representative points for a pair of slopes `Γ_hi > Γ_lo`:
/// `a` is outside both ellipses, `b` inside only the larger-Γ one and `c`
/// inside both. Each is the grid node deepest in its class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternPoints {
    pub a: Option<(f64, f64)>,
    pub b: Option<(f64, f64)>,
    pub c: Option<(f64, f64)>,
}

pub fn pattern_points(
    gamma: f64,
    theta: f64,
    gamma_hi: f64,
    gamma_lo: f64,
    grid: &RegionGrid,
    exec: Execution,
) -> PatternPoints {
    let nodes = grid.nodes();
    let margins = exec.map(&nodes, |&(o1, o2)| {
        let q = StabilityQuery { omega1: o1, omega2: o2, gamma, theta, big_gamma: gamma_hi, l: 1.0 };
        (margin(&q), margin(&q.with_gamma(gamma_lo)))
    });
    let best = |score: &dyn Fn(f64, f64) -> Option<f64>| {
        nodes
            .iter()
            .zip(&margins)
            .filter_map(|(n, &(h, l))| score(h, l).map(|s| (s, *n)))
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(_, n)| n)
    };
    PatternPoints {
        a: best(&|h, l| (h < 0.0 && l < 0.0).then(|| (-h).min(-l))),
        b: best(&|h, l| (h > 0.0 && l < 0.0).then(|| h.min(-l))),
        c: best(&|h, l| (h > 0.0 && l > 0.0).then(|| h.min(l))),
    }
}

/// Outcome of a randomized ellipse / eigenvalue agreement check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub samples: usize,
    pub ties: usize,
    pub counterexamples: usize,
    pub inside: usize,
}

/// Query drawn deterministically from a 64-bit stream index.
pub fn random_query(seed: u64, index: u64) -> StabilityQuery {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    StabilityQuery {
        omega1: rng.random_range(0.01..20.0),
        omega2: rng.random_range(0.001..5.0),
        gamma: rng.random_range(1.01..20.0),
        theta: rng.random_range(0.05..0.99),
        big_gamma: rng.random_range(0.01..5.0),
        l: 10f64.powf(rng.random_range(-3.0..2.0)),
    }
}

/// Compare `ellipse_condition` against `λ_min(Q̃_R) > 0` on `n` random
/// queries; queries with `|margin| ≤ tie` are counted as ties and skipped.
pub fn equivalence_check(n: usize, seed: u64, tie: f64, exec: Execution) -> EquivalenceCheck {
    let res = exec.map_range(n, |i| {
        let q = random_query(seed, i as u64);
        let m = margin(&q);
        if m.abs() <= tie {
            return (1usize, 0usize, 0usize);
        }
        let inside = ellipse_condition(&q);
        let pd = eig2_sym(&build_qr(&q)).0 > 0.0;
        (0, (inside != pd) as usize, inside as usize)
    });
    let (ties, bad, ins) = res.iter().fold((0, 0, 0), |acc, r| (acc.0 + r.0, acc.1 + r.1, acc.2 + r.2));
    EquivalenceCheck { samples: n, ties, counterexamples: bad, inside: ins }
}

/// Gains `(κ₁, κ₂)` implied by a query, recomputed through the controller's
/// closed forms.
pub fn controller_kappas(q: &StabilityQuery) -> (f64, f64) {
    let p = SlidingParams {
        omega1: q.omega1,
        omega2: q.omega2,
        gamma: q.gamma,
        theta: q.theta,
        ..SlidingParams::default()
    };
    kappa_from_l(q.l, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table1(g: f64) -> StabilityQuery {
        StabilityQuery::from_params(&SlidingParams::default(), g, 1.0)
    }

    #[test]
    fn table_gains_inside_at_unit_slope() {
        let q = table1(1.0);
        let (l, r) = ellipse_sides(&q);
        assert_relative_eq!(l, 1.5 - 0.28 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(r, 1.5625 - 0.315 + 0.0196, epsilon = 1e-15);
        assert!(ellipse_condition(&q));
    }

    #[test]
    fn vanishing_slope_is_outside() {
        assert!(!ellipse_condition(&table1(1e-9)));
    }

    #[test]
    fn center_values_and_degeneracy() {
        let (a, b) = ellipse_center(6.0, 0.9, 0.5).unwrap();
        assert_relative_eq!(a, (6.0 - 1.8 + 6.0 * 0.81) / (6.0 * 0.19), epsilon = 1e-12);
        assert!((a - 7.947).abs() < 1e-3 && (b - 1.930).abs() < 1e-3);
        let (_, b2) = ellipse_center(6.0, 0.9, 0.25).unwrap();
        assert_relative_eq!(b2, 0.5 * b, epsilon = 1e-15);
        assert!(matches!(ellipse_center(2.0, 0.5, 1.0), Err(Error::DegenerateEllipse(_))));
    }

    #[test]
    fn p_matrix_components() {
        let p = build_p(&table1(1.0));
        assert_relative_eq!(p[(1, 1)], 0.007, epsilon = 1e-15);
        assert_relative_eq!(p[(0, 1)], -(0.007f64 / 6.0).sqrt(), epsilon = 1e-15);
        assert!((p[(0, 1)] + 0.03416).abs() < 1e-5);
        assert_relative_eq!(p[(1, 1)] / p[(0, 1)].powi(2), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn kappas_match_controller() {
        let q = table1(1.0);
        let (a, b) = q.kappas();
        let (c, d) = controller_kappas(&q);
        assert_eq!((a, b), (c, d));
        assert!((a - 43.92).abs() < 5e-3);
        assert_relative_eq!(b, 19.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_range_values() {
        let p = SlidingParams::default();
        let a = AdaptiveParams::default();
        let (lo, hi) = gamma_operating_range(&p, &a, 1.0);
        assert!((lo - 0.277).abs() < 1e-3, "{lo}");
        assert_relative_eq!(hi, 9.0 / 7.0, epsilon = 1e-12);
        let tiny = AdaptiveParams { mu_a: 1e-30, ..a };
        assert!(gamma_operating_range(&p, &tiny, 1.0).0 < 1e-5);
    }

    #[test]
    fn gamma_min_scales_with_beta() {
        // Γ_min = α β^{1/α} μ^{(α−1)/α}: degree 1/α in β
        let a = AdaptiveParams::default();
        let p1 = SlidingParams::default();
        let p2 = SlidingParams { beta: 3.0, ..p1 };
        let r = gamma_operating_range(&p2, &a, 1.0).0 / gamma_operating_range(&p1, &a, 1.0).0;
        assert_relative_eq!(r, 3f64.powf(1.0 / p1.alpha()), epsilon = 1e-12);
    }

    #[test]
    fn rates_and_bound_for_table_gains() {
        let p = SlidingParams::default();
        let a = AdaptiveParams::default();
        let q = table1(0.5);
        let r = convergence_rates(&q, &a).unwrap();
        assert!(r.chi > 0.0);
        assert_relative_eq!(r.vartheta, r.chi.min(2f64.sqrt()), epsilon = 1e-15);
        let t1 = reaching_time_bound(r.vartheta, 3.0);
        assert_relative_eq!(reaching_time_bound(r.vartheta, 6.0), t1 * 2f64.sqrt(), epsilon = 1e-12);
        let rep = stability_report(&p, &a, &ReachingStart::default()).unwrap();
        assert!(rep.inside_ellipse && rep.t_reach_bound.unwrap() > 0.0);
        assert_relative_eq!(rep.e_bound, 0.002);
        assert!((rep.de_bound - 4.64e-3).abs() < 1e-5);
        assert!(worst_reaching_time(&p, &a, &ReachingStart::default(), 16).is_some());
        assert!(matches!(convergence_rates(&table1(1e-6), &a), Err(Error::NotStable { .. })));
    }

    #[test]
    fn report_serializes() {
        let rep =
            stability_report(&SlidingParams::default(), &AdaptiveParams::default(), &ReachingStart::default()).unwrap();
        let js = serde_json::to_string(&rep).unwrap();
        assert!(js.contains("\"P\"") && js.contains("\"Qr\""));
        let back: StabilityReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn fig_pattern_points_exist() {
        let grid = RegionGrid { omega1_max: 20.0, omega2_max: 4.0, n1: 160, n2: 160 };
        let pts = pattern_points(6.0, 0.9, 0.5, 0.25, &grid, Execution::default());
        let (a, b, c) = (pts.a.unwrap(), pts.b.unwrap(), pts.c.unwrap());
        let m = |(o1, o2): (f64, f64), g| {
            margin(&StabilityQuery { omega1: o1, omega2: o2, gamma: 6.0, theta: 0.9, big_gamma: g, l: 1.0 })
        };
        assert!(m(a, 0.5) < 0.0 && m(a, 0.25) < 0.0);
        assert!(m(b, 0.5) > 0.0 && m(b, 0.25) < 0.0);
        assert!(m(c, 0.5) > 0.0 && m(c, 0.25) > 0.0);
    }

    #[test]
    fn sweep_is_execution_independent() {
        let grid = RegionGrid { omega1_max: 10.0, omega2_max: 3.0, n1: 20, n2: 20 };
        let a = sweep_region(6.0, 0.9, 1.0, &[0.25, 0.5], &grid, Execution::Sequential);
        let b = sweep_region(6.0, 0.9, 1.0, &[0.25, 0.5], &grid, Execution::Parallel);
        assert_eq!(a, b);
        assert_eq!(a.len(), 800);
        assert!(a.iter().all(|p| p.omega1 > 0.0 && p.omega2 > 0.0));
        let mut buf = Vec::new();
        write_region_csv(&mut buf, &a).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("omega1,omega2,Gamma,inside,margin,lambda_min_qr\n"));
        assert_eq!(s.lines().count(), 801);
    }

    #[test]
    fn random_equivalence_small() {
        let r = equivalence_check(2000, 7, 1e-12, Execution::default());
        assert_eq!(r.counterexamples, 0);
        assert!(r.inside > 0 && r.inside < r.samples);
    }

    /// `−Q̃ = AᵀP + PA` with `A` assembled from the ζ dynamics.
    fn q_tilde_oracle(q: &StabilityQuery, pi: f64) -> Matrix2<f64> {
        let (k1, k2) = q.kappas();
        let g = q.big_gamma;
        let a = Matrix2::new(-0.5 * k1 * g, 0.5 * g, -(k2 - pi), 0.0);
        let p = build_p(q);
        -(a.transpose() * p + p * a)
    }

    fn q_tilde_closed(q: &StabilityQuery, pi: f64) -> Matrix2<f64> {
        let (k1, k2) = q.kappas();
        let g = q.big_gamma;
        let p = build_p(q);
        let (p11, p12, p22) = (p[(0, 0)], p[(0, 1)], p[(1, 1)]);
        let q11 = k1 * g * p11 + 2.0 * p12 * (k2 - pi);
        let q12 = 0.5 * k1 * g * p12 + p22 * (k2 - pi) - 0.5 * g * p11;
        Matrix2::new(q11, q12, q12, -g * p12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn det_qr_equals_margin(i in 0u64..1_000_000) {
            let q = random_query(11, i);
            let qr = build_qr(&q);
            let det = qr.determinant();
            let scale = qr.abs().max().powi(2).max(1.0);
            prop_assert!((det - margin(&q)).abs() <= 1e-11 * scale);
            prop_assert!(qr[(1, 1)] > 0.0);
        }

        #[test]
        fn lyapunov_equation_residual(i in 0u64..1_000_000, sgn in prop::bool::ANY) {
            let q = random_query(3, i);
            let pi = if sgn { q.l } else { -q.l };
            let r = q_tilde_oracle(&q, pi) - q_tilde_closed(&q, pi);
            let scale = q_tilde_oracle(&q, pi).abs().max().max(1.0);
            prop_assert!(r.abs().max() < 1e-12 * scale);
        }

        #[test]
        fn p_is_positive_definite(i in 0u64..1_000_000) {
            let q = random_query(5, i);
            let p = build_p(&q);
            let (lo, hi) = eig2_sym(&p);
            prop_assert!(lo > 0.0 && hi >= lo);
            prop_assert!(p[(0, 1)] < 0.0 && p[(1, 1)] > p[(0, 1)].powi(2));
        }

        #[test]
        fn center_is_inside(g in 1.2f64..30.0, th in 0.05f64..0.99, big in 0.01f64..5.0) {
            prop_assume!(g * th > 1.0 + 1e-6);
            let (o1, o2) = ellipse_center(g, th, big).unwrap();
            let q = StabilityQuery { omega1: o1, omega2: o2, gamma: g, theta: th, big_gamma: big, l: 1.0 };
            prop_assert!(ellipse_condition(&q));
        }

        #[test]
        fn compression_identity(i in 0u64..1_000_000, r in 0.05f64..1.0) {
            // shrinking Γ by r maps the region to itself compressed by r along Ω₂
            let q = random_query(9, i);
            let small = StabilityQuery { big_gamma: q.big_gamma * r, omega2: q.omega2 * r, ..q };
            let scaled = margin(&small) / (r * r);
            prop_assert!((scaled - margin(&q)).abs() <= 1e-9 * margin(&q).abs().max(1.0));
        }

        #[test]
        fn eig2_matches_nalgebra(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let m = Matrix2::new(a, b, b, c);
            let (lo, hi) = eig2_sym(&m);
            let ev = m.symmetric_eigenvalues();
            let (elo, ehi) = (ev.min(), ev.max());
            prop_assert!((lo - elo).abs() < 1e-9 && (hi - ehi).abs() < 1e-9);
        }

        #[test]
        fn reaching_bound_monotone_in_v1(v in 0.0f64..100.0, dv in 0.0f64..10.0) {
            prop_assert!(reaching_time_bound(1.0, v + dv) >= reaching_time_bound(1.0, v));
        }
    }
}
