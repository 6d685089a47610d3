//! Models of the nonlinearity `g` and sampled checks of its structural
//! conditions: the two-sided power envelope, the weighted Lipschitz bound
//! and the integrability of `1/g` at the origin.
//!
//! Every check here samples; verdicts are labelled [`Confidence::Sampled`].

use crate::error::{config, domain, Error, Result};
use crate::quadrature::read_two_column_csv;
use crate::specfun::{admissible_delta_range, gamma_fn, STRICT_TOL};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How much a verdict can be trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confidence {
    /// Established on a finite sample of points only.
    Sampled,
}

/// A continuous `g` with `g(0) = 0` and `g > 0` on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearitySpec {
    /// `g(u) = coefficient · u^exponent` on `[0, ∞)`.
    PowerLaw { coefficient: f64, exponent: f64 },
    /// Linear interpolation of `(u, g)` pairs; `u` starts at 0 and reaches at least 1.
    Table { u: Vec<f64>, g: Vec<f64> },
}

impl NonlinearitySpec {
    pub fn power_law(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient > 0.0) || !coefficient.is_finite() {
            return config(format!(
                "power-law coefficient must be positive, got {coefficient}"
            ));
        }
        if !(exponent > 0.0 && exponent <= 1.0) {
            return config(format!(
                "power-law exponent must lie in (0, 1], got {exponent}"
            ));
        }
        Ok(Self::PowerLaw {
            coefficient,
            exponent,
        })
    }

    pub fn table(u: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if u.len() != g.len() || u.len() < 2 {
            return config("table needs at least two (u, g) rows");
        }
        if u[0] != 0.0 || g[0] != 0.0 {
            return config("table must start at (0, 0)");
        }
        if u.windows(2).any(|w| !(w[0] < w[1])) {
            return config("table abscissae must be strictly increasing");
        }
        if !(u[u.len() - 1] >= 1.0) {
            return config("table must cover [0, 1]");
        }
        if g.iter().any(|v| !v.is_finite()) || u.iter().any(|v| !v.is_finite()) {
            return config("table entries must be finite");
        }
        if let Some(i) = u
            .iter()
            .zip(&g)
            .position(|(&x, &y)| x > 0.0 && x <= 1.0 && !(y > 0.0))
        {
            return config(format!(
                "g must be positive on (0, 1], row {i} has g = {}",
                g[i]
            ));
        }
        if g.iter().any(|&v| v < 0.0) {
            return config("table ordinates must be nonnegative");
        }
        Ok(Self::Table { u, g })
    }

    /// Reads a headed `u,g` CSV.
    pub fn table_from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let rows = read_two_column_csv(input, ("u", "g"))?;
        let (u, g) = rows.into_iter().unzip();
        Self::table(u, g)
    }

    /// Largest argument at which `g` is defined.
    pub fn domain_max(&self) -> f64 {
        match self {
            Self::PowerLaw { .. } => f64::INFINITY,
            Self::Table { u, .. } => u[u.len() - 1],
        }
    }

    pub fn is_power_law(&self) -> bool {
        matches!(self, Self::PowerLaw { .. })
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0 && u <= self.domain_max()) {
            return domain(format!(
                "g evaluated at {u}, outside [0, {}]",
                self.domain_max()
            ));
        }
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        match self {
            Self::PowerLaw {
                coefficient,
                exponent,
            } => coefficient * x.powf(*exponent),
            Self::Table { u, g } => {
                let k = u.partition_point(|&v| v <= x).clamp(1, u.len() - 1);
                let w = (x - u[k - 1]) / (u[k] - u[k - 1]);
                g[k - 1] + w * (g[k] - g[k - 1])
            }
        }
    }

    /// `u ↦ g(factor · u)`.
    pub fn scale_argument(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return config(format!("argument scale must be positive, got {factor}"));
        }
        Ok(match self {
            Self::PowerLaw {
                coefficient,
                exponent,
            } => Self::PowerLaw {
                coefficient: coefficient * factor.powf(*exponent),
                exponent: *exponent,
            },
            Self::Table { u, g } => Self::Table {
                u: u.iter().map(|x| x / factor).collect(),
                g: g.clone(),
            },
        })
    }

    /// `u ↦ λ · g(u)`.
    pub fn scale_values(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return config(format!("value scale must be positive, got {lambda}"));
        }
        Ok(match self {
            Self::PowerLaw {
                coefficient,
                exponent,
            } => Self::PowerLaw {
                coefficient: coefficient * lambda,
                exponent: *exponent,
            },
            Self::Table { u, g } => Self::Table {
                u: u.clone(),
                g: g.iter().map(|v| v * lambda).collect(),
            },
        })
    }

    /// Turns the right-hand side `g̃` of `x^(α) = g̃(x)` into the `g` of the
    /// integral equation `y = g(∫ y(s)(t − s)^(α−1) ds)`, i.e.
    /// `g(u) = g̃(u / Γ(α))`.
    pub fn absorb_gamma(&self, alpha: f64) -> Result<Self> {
        self.scale_argument(1.0 / gamma_fn(alpha)?)
    }

    /// Inverse of [`absorb_gamma`](Self::absorb_gamma): `g̃(x) = g(Γ(α) x)`.
    pub fn release_gamma(&self, alpha: f64) -> Result<Self> {
        self.scale_argument(gamma_fn(alpha)?)
    }
}

/// Serialized form of a [`NonlinearitySpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// `power-law` or `table`.
    pub kind: String,
    pub coefficient: Option<f64>,
    pub exponent: Option<f64>,
    /// CSV with header `u,g`; relative paths resolve against the config file.
    pub table: Option<String>,
}

impl NonlinearityConfig {
    pub fn into_spec(&self, base_dir: &Path) -> Result<NonlinearitySpec> {
        match self.kind.as_str() {
            "power-law" => {
                let c = self
                    .coefficient
                    .ok_or_else(|| Error::Config("power-law g needs `coefficient`".into()))?;
                let d = self
                    .exponent
                    .ok_or_else(|| Error::Config("power-law g needs `exponent`".into()))?;
                if self.table.is_some() {
                    return config("power-law g does not take `table`");
                }
                NonlinearitySpec::power_law(c, d)
            }
            "table" => {
                let path = self.table.as_ref().ok_or_else(|| {
                    Error::Config("table g needs `table` (a u,g CSV path)".into())
                })?;
                let file = std::fs::File::open(base_dir.join(path))
                    .map_err(|e| Error::Config(format!("cannot open table {path}: {e}")))?;
                NonlinearitySpec::table_from_csv(file)
            }
            other => config(format!(
                "unknown g kind {other:?} (expected power-law or table)"
            )),
        }
    }
}

/// Constants of the envelope `c₁ u^δ₁ ≤ g(u) ≤ c₂ u^δ₂` on `[0, 1]` and of the
/// weighted Lipschitz bound `|g(y₂) − g(y₁)| ≤ c · min(y₁, y₂)^(δ₁−1) |y₂ − y₁|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityEnvelope {
    pub c1: f64,
    pub c2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub c_lip: f64,
}

impl NonlinearityEnvelope {
    /// The tight envelope of `c · u^d`; its Lipschitz constant is `c · d`.
    pub fn for_power_law(coefficient: f64, exponent: f64) -> Self {
        Self {
            c1: coefficient,
            c2: coefficient,
            delta1: exponent,
            delta2: exponent,
            c_lip: coefficient * exponent,
        }
    }

    /// Checks `0 < c₁ ≤ c₂`, `c > 0` and `f(1) > δ₁ ≥ δ₂ > f(0)` for this β.
    pub fn validate(&self, beta: f64) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 <= self.c2 && self.c2.is_finite()) {
            return config(format!(
                "envelope needs 0 < c1 <= c2, got c1 = {}, c2 = {}",
                self.c1, self.c2
            ));
        }
        if !(self.c_lip > 0.0) || !self.c_lip.is_finite() {
            return config(format!("envelope needs c_lip > 0, got {}", self.c_lip));
        }
        if !(self.delta1 >= self.delta2) {
            return config(format!(
                "envelope needs delta1 >= delta2, got {} < {}",
                self.delta1, self.delta2
            ));
        }
        let (lower, upper) = admissible_delta_range(beta);
        for delta in [self.delta1, self.delta2] {
            if !(delta > lower + STRICT_TOL && delta < upper - STRICT_TOL) {
                return Err(Error::InfeasibleExponent {
                    delta,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Upper bound `c₁⁻¹ / (1 − δ₁)` on `∫₀¹ du / g(u)` implied by the lower envelope.
    pub fn reciprocal_integral_bound(&self) -> f64 {
        1.0 / (self.c1 * (1.0 - self.delta1))
    }
}

/// Outcome of [`check_envelope`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub pass: bool,
    /// `min_u g(u) − c₁ u^δ₁`.
    pub lower_margin: f64,
    pub lower_worst_u: f64,
    /// `min_u c₂ u^δ₂ − g(u)`.
    pub upper_margin: f64,
    pub upper_worst_u: f64,
    pub samples: usize,
    pub confidence: Confidence,
}

/// Smallest sample point used by the log-spaced envelope grid.
pub const ENVELOPE_GRID_FLOOR: f64 = 1e-12;

/// Samples `u` log-uniformly on `[1e-12, 1]` (always including `u = 1`) and
/// checks both sides of the envelope.
pub fn check_envelope(
    spec: &NonlinearitySpec,
    env: &NonlinearityEnvelope,
    n_samples: usize,
) -> EnvelopeReport {
    let n = n_samples.max(2);
    let span = -ENVELOPE_GRID_FLOOR.log10();
    let mut report = EnvelopeReport {
        pass: true,
        lower_margin: f64::INFINITY,
        lower_worst_u: 1.0,
        upper_margin: f64::INFINITY,
        upper_worst_u: 1.0,
        samples: n,
        confidence: Confidence::Sampled,
    };
    for i in 0..n {
        let u = if i == n - 1 {
            1.0
        } else {
            10f64.powf(-span * (1.0 - i as f64 / (n - 1) as f64))
        };
        let g = spec.eval_unchecked(u);
        let lo = env.c1 * u.powf(env.delta1);
        let hi = env.c2 * u.powf(env.delta2);
        let (m_lo, m_hi) = (g - lo, hi - g);
        let slack = 1e-12 * g.abs().max(lo).max(hi);
        if m_lo < -slack || m_hi < -slack {
            report.pass = false;
        }
        if m_lo < report.lower_margin {
            report.lower_margin = m_lo;
            report.lower_worst_u = u;
        }
        if m_hi < report.upper_margin {
            report.upper_margin = m_hi;
            report.upper_worst_u = u;
        }
    }
    report
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// The `i`-th sampled pair for the Lipschitz estimate. The first member is
/// log-uniform on `(1e-8, 1]`, the second sits at relative offset
/// `ρ ∈ (1e-6, 1]` from it (mirrored below 1 when needed). Pairs come from
/// radical-inverse sequences, so the first `n` pairs are a prefix of the
/// first `n + 1`.
fn lipschitz_pair(i: u64) -> (f64, f64) {
    let y1 = 10f64.powf(-8.0 * radical_inverse(i, 2));
    let rho = 10f64.powf(-6.0 * radical_inverse(i, 3));
    let up = y1 * (1.0 + rho);
    let y2 = if up <= 1.0 { up } else { y1 / (1.0 + rho) };
    (y1, y2)
}

/// Largest sampled value of `|g(y₂) − g(y₁)| · min(y₁, y₂)^(1−δ₁) / |y₂ − y₁|`
/// over `n_pairs` pairs in `(0, 1]²`. Nondecreasing in `n_pairs`.
pub fn estimate_lipschitz_constant(
    spec: &NonlinearitySpec,
    delta1: f64,
    n_pairs: usize,
) -> Result<f64> {
    if !(delta1 > 0.0 && delta1 < 1.0) {
        return domain(format!("delta1 must lie in (0, 1), got {delta1}"));
    }
    let mut best: f64 = 0.0;
    for i in 0..n_pairs as u64 {
        let (y1, y2) = lipschitz_pair(i);
        if y1 == y2 {
            continue;
        }
        let lo = y1.min(y2);
        let ratio = (spec.eval_unchecked(y2) - spec.eval_unchecked(y1)).abs()
            * lo.powf(1.0 - delta1)
            / (y2 - y1).abs();
        best = best.max(ratio);
    }
    Ok(best)
}

/// Tuning of the divergence test in [`osgood_integral_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsgoodOptions {
    /// A halving whose increment exceeds this counts toward divergence.
    pub threshold: f64,
    /// Consecutive counted halvings that declare divergence.
    pub consecutive: usize,
    pub max_halvings: usize,
}

impl Default for OsgoodOptions {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            consecutive: 5,
            max_halvings: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum OsgoodResult {
    /// `∫₀¹ du / g(u)`, including a geometric tail estimate.
    Converged { value: f64, halvings: usize },
    /// The partial integrals grew without bound; `partial` is the last one.
    Divergent { partial: f64, halvings: usize },
}

impl OsgoodResult {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Converged { value, .. } => Some(*value),
            Self::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, Self::Divergent { .. })
    }
}

// 8-point Gauss–Legendre on [-1, 1].
const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_a^b du / g(u)` for `0 < a < b`, integrating `u / g(u)` in `ln u` with
/// Gauss–Legendre on pieces of ratio at most 2 that also break at table knots.
fn reciprocal_integral(spec: &NonlinearitySpec, a: f64, b: f64) -> Result<f64> {
    let mut breaks = vec![a];
    let mut x = a;
    while x * 2.0 < b {
        x *= 2.0;
        breaks.push(x);
    }
    breaks.push(b);
    if let NonlinearitySpec::Table { u, .. } = spec {
        breaks.extend(u.iter().copied().filter(|&k| k > a && k < b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (la, lb) = (w[0].ln(), w[1].ln());
        let (mid, half) = (0.5 * (la + lb), 0.5 * (lb - la));
        for (&node, &weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            for s in [mid - half * node, mid + half * node] {
                let u = s.exp();
                let g = spec.eval_unchecked(u);
                if !(g > 0.0) {
                    return Err(Error::SingularIntegrand(u));
                }
                total += weight * half * u / g;
            }
        }
    }
    Ok(total)
}

/// [`osgood_integral_with`] under the default options.
pub fn osgood_integral(spec: &NonlinearitySpec, lower_cut: f64) -> Result<OsgoodResult> {
    osgood_integral_with(spec, lower_cut, OsgoodOptions::default())
}

/// Decides whether `∫₀₊¹ du / g(u)` is finite.
///
/// Starts from `∫_{cut}^1` and keeps halving the cut. Divergence is declared
/// once `consecutive` halvings in a row each add more than `threshold`.
/// Otherwise halving stops when increments fall below double precision, and
/// a geometric tail fitted to the last two increments is added.
pub fn osgood_integral_with(
    spec: &NonlinearitySpec,
    lower_cut: f64,
    opts: OsgoodOptions,
) -> Result<OsgoodResult> {
    if !(lower_cut > 0.0 && lower_cut < 1.0) {
        return domain(format!("lower cut must lie in (0, 1), got {lower_cut}"));
    }
    let mut total = reciprocal_integral(spec, lower_cut, 1.0)?;
    let mut cut = lower_cut;
    let mut streak = 0;
    let mut prev_inc: Option<f64> = None;
    let floor = f64::MIN_POSITIVE * 1e10;
    for k in 1..=opts.max_halvings {
        let next = 0.5 * cut;
        let inc = reciprocal_integral(spec, next, cut)?;
        total += inc;
        cut = next;
        streak = if inc > opts.threshold { streak + 1 } else { 0 };
        if streak >= opts.consecutive {
            return Ok(OsgoodResult::Divergent {
                partial: total,
                halvings: k,
            });
        }
        if inc <= 1e-17 * total {
            return Ok(OsgoodResult::Converged {
                value: total,
                halvings: k,
            });
        }
        let ratio = prev_inc.map(|p| inc / p);
        prev_inc = Some(inc);
        if k == opts.max_halvings || 0.5 * cut < floor {
            return Ok(match ratio {
                Some(q) if q < 1.0 - 1e-9 => OsgoodResult::Converged {
                    value: total + inc * q / (1.0 - q),
                    halvings: k,
                },
                _ => OsgoodResult::Divergent {
                    partial: total,
                    halvings: k,
                },
            });
        }
    }
    Ok(OsgoodResult::Divergent {
        partial: total,
        halvings: opts.max_halvings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pl(c: f64, d: f64) -> NonlinearitySpec {
        NonlinearitySpec::power_law(c, d).unwrap()
    }

    fn env(c1: f64, c2: f64, delta1: f64, delta2: f64) -> NonlinearityEnvelope {
        NonlinearityEnvelope {
            c1,
            c2,
            delta1,
            delta2,
            c_lip: 1.0,
        }
    }

    #[test]
    fn eval_examples() {
        assert_relative_eq!(pl(1.0, 0.5).eval(0.25).unwrap(), 0.5);
        assert_eq!(pl(1.0, 0.5).eval(0.0).unwrap(), 0.0);
        assert_relative_eq!(pl(2.0, 0.75).eval(1.0).unwrap(), 2.0);
        let t = NonlinearitySpec::table(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.5]).unwrap();
        assert_eq!(t.eval(0.0).unwrap(), 0.0);
        assert_relative_eq!(t.eval(0.25).unwrap(), 0.5);
        assert_relative_eq!(t.eval(0.75).unwrap(), 1.25);
        assert_relative_eq!(t.eval(1.0).unwrap(), 1.5);
    }

    #[test]
    fn eval_rejects_outside_domain() {
        assert!(matches!(pl(1.0, 0.5).eval(-0.1), Err(Error::Domain(_))));
        let t = NonlinearitySpec::table(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(t.eval(1.01).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(NonlinearitySpec::table(vec![0.0, 1.0], vec![0.1, 1.0]).is_err());
        assert!(NonlinearitySpec::table(vec![0.0, 0.5], vec![0.0, 1.0]).is_err());
        assert!(NonlinearitySpec::table(vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0]).is_err());
        assert!(NonlinearitySpec::table(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(NonlinearitySpec::power_law(1.0, 0.0).is_err());
        assert!(NonlinearitySpec::power_law(-1.0, 0.5).is_err());
    }

    #[test]
    fn table_from_csv() {
        let t = NonlinearitySpec::table_from_csv("u,g\n0,0\n0.5,0.7\n2,1.9\n".as_bytes()).unwrap();
        assert_eq!(t.domain_max(), 2.0);
        assert!(NonlinearitySpec::table_from_csv("x,y\n0,0\n1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn gamma_absorption_round_trip() {
        let raw = pl(1.3, 0.6);
        let alpha = 0.4;
        let g = raw.absorb_gamma(alpha).unwrap();
        let gam = gamma_fn(alpha).unwrap();
        for u in [0.1, 0.5, 2.0] {
            assert_relative_eq!(
                g.eval(u).unwrap(),
                raw.eval(u / gam).unwrap(),
                max_relative = 1e-14
            );
        }
        let back = g.release_gamma(alpha).unwrap();
        assert_relative_eq!(
            back.eval(0.7).unwrap(),
            raw.eval(0.7).unwrap(),
            max_relative = 1e-14
        );

        let t = NonlinearitySpec::table(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 2.0]).unwrap();
        let tg = t.absorb_gamma(alpha).unwrap();
        assert_relative_eq!(
            tg.eval(0.5).unwrap(),
            t.eval(0.5 / gam).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn envelope_examples() {
        let r = check_envelope(&pl(1.0, 0.7), &env(1.0, 1.0, 0.75, 0.7), 10_000);
        assert!(r.pass);
        assert_eq!(r.confidence, Confidence::Sampled);

        let r = check_envelope(&pl(2.0, 0.5), &env(1.0, 1.0, 0.5, 0.5), 10_000);
        assert!(!r.pass);
        assert_eq!(r.upper_worst_u, 1.0);
        assert_relative_eq!(r.upper_margin, -1.0, epsilon = 1e-15);

        let r = check_envelope(&pl(1.0, 0.5), &env(1.0, 1.0, 0.5, 0.5), 10_000);
        assert!(r.pass);
        assert_eq!(r.lower_margin, 0.0);
        assert_eq!(r.upper_margin, 0.0);
    }

    #[test]
    fn envelope_validation() {
        let good = NonlinearityEnvelope {
            c1: 1.0,
            c2: 2.0,
            delta1: 0.75,
            delta2: 0.7,
            c_lip: 0.5,
        };
        assert!(good.validate(0.5).is_ok());
        let bad_order = NonlinearityEnvelope { c1: 3.0, ..good };
        assert!(bad_order.validate(0.5).is_err());
        let bad_delta = NonlinearityEnvelope {
            delta1: 0.8,
            ..good
        };
        assert!(matches!(
            bad_delta.validate(0.5),
            Err(Error::InfeasibleExponent { .. })
        ));
        let swapped = NonlinearityEnvelope {
            delta1: 0.7,
            delta2: 0.75,
            ..good
        };
        assert!(swapped.validate(0.5).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let est = estimate_lipschitz_constant(&pl(1.0, 0.5), 0.5, 100_000).unwrap();
        assert!(est <= 0.5 && est > 0.5 - 1e-6, "{est}");

        let est = estimate_lipschitz_constant(&pl(3.0, 0.7), 0.7, 100_000).unwrap();
        assert!(
            est <= 2.1 * (1.0 + 1e-6) && est > 2.1 * (1.0 - 1e-5),
            "{est}"
        );

        let est = estimate_lipschitz_constant(&pl(1.0, 1.0), 0.75, 100_000).unwrap();
        assert!(est <= 1.0 && est > 1.0 - 1e-3, "{est}");
        assert!(estimate_lipschitz_constant(&pl(1.0, 1.0), 1.2, 10).is_err());
    }

    #[test]
    fn lipschitz_estimate_is_nested_monotone() {
        let g =
            NonlinearitySpec::table(vec![0.0, 0.1, 0.4, 1.0], vec![0.0, 0.5, 0.8, 1.0]).unwrap();
        let mut prev = 0.0;
        for n in [10, 100, 1000, 10_000] {
            let est = estimate_lipschitz_constant(&g, 0.8, n).unwrap();
            assert!(est >= prev);
            prev = est;
        }
    }

    #[test]
    fn osgood_examples() {
        let r = osgood_integral(&pl(1.0, 0.5), 1e-6).unwrap();
        assert_relative_eq!(r.value().unwrap(), 2.0, max_relative = 1e-10);
        assert!(osgood_integral(&pl(1.0, 1.0), 1e-6).unwrap().is_divergent());
        let r = osgood_integral(&pl(1.0, 0.75), 1e-6).unwrap();
        assert_relative_eq!(r.value().unwrap(), 4.0, max_relative = 1e-10);
        assert!(osgood_integral(&pl(1.0, 0.5), 1.0).is_err());
    }

    #[test]
    fn osgood_power_law_closed_form() {
        for (c, d, cut) in [(2.0, 0.3, 1e-4), (0.5, 0.6, 1e-4), (1.7, 0.9, 1e-12)] {
            let r = osgood_integral(&pl(c, d), cut).unwrap();
            assert_relative_eq!(
                r.value().unwrap(),
                1.0 / (c * (1.0 - d)),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn osgood_slow_decay_trips_the_increment_rule() {
        // halving increments near 1e-4 are about 0.15 and shrink by 2^(-0.1) each step
        assert!(osgood_integral(&pl(1.7, 0.9), 1e-4).unwrap().is_divergent());
    }

    #[test]
    fn osgood_rejects_vanishing_g() {
        // zero on [0.5, 0.6]: the table constructor refuses it, so build it raw
        let g = NonlinearitySpec::Table {
            u: vec![0.0, 0.5, 0.6, 1.0],
            g: vec![0.0, 0.0, 0.0, 1.0],
        };
        assert!(matches!(
            osgood_integral(&g, 0.1),
            Err(Error::SingularIntegrand(_))
        ));
    }

    #[test]
    fn osgood_table_is_divergent() {
        // a piecewise-linear g is linear near 0, so 1/g is not integrable there
        let g = NonlinearitySpec::table(vec![0.0, 0.01, 1.0], vec![0.0, 0.1, 1.0]).unwrap();
        assert!(osgood_integral(&g, 1e-3).unwrap().is_divergent());
    }

    #[test]
    fn osgood_bounded_by_envelope() {
        for (g, e) in [
            (pl(1.0, 0.7), env(1.0, 1.0, 0.75, 0.7)),
            (pl(3.0, 0.72), env(2.0, 3.0, 0.74, 0.72)),
        ] {
            assert!(check_envelope(&g, &e, 10_000).pass);
            let value = osgood_integral(&g, 1e-6).unwrap().value().unwrap();
            assert!(value <= e.reciprocal_integral_bound() + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn lipschitz_never_exceeds_power_law_constant(c in 0.1f64..10.0, d in 0.05f64..0.99) {
            let est = estimate_lipschitz_constant(&pl(c, d), d, 5_000).unwrap();
            prop_assert!(est <= c * d * (1.0 + 1e-6));
        }

        #[test]
        fn envelope_verdict_is_scale_consistent(
            c in 0.2f64..5.0, d in 0.2f64..0.95, c1 in 0.1f64..5.0, c2 in 0.1f64..5.0,
            d1 in 0.2f64..0.95, d2 in 0.2f64..0.95, lambda in 0.01f64..100.0,
        ) {
            let g = pl(c, d);
            let e = NonlinearityEnvelope { c1, c2, delta1: d1, delta2: d2, c_lip: 1.0 };
            let scaled = NonlinearityEnvelope { c1: lambda * c1, c2: lambda * c2, ..e };
            let before = check_envelope(&g, &e, 500).pass;
            let after = check_envelope(&g.scale_values(lambda).unwrap(), &scaled, 500).pass;
            prop_assert_eq!(before, after);
        }
    }
}
