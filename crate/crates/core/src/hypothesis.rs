//! The constant system `(Y₁, Y₂, T, ε₁, ε₂, k)` under which the solution
//! operator maps the envelope set into itself and contracts, plus a search
//! for constants that satisfy it.
//!
//! Margins are reported in each inequality's own units, oriented so that a
//! positive margin means "satisfied". Strict inequalities need a margin above
//! [`STRICT_TOL`]; non-strict ones tolerate `-STRICT_TOL` of roundoff.

use crate::error::{config, domain, Error, Result};
use crate::format::fmt_f64;
use crate::nonlinearity::{estimate_lipschitz_constant, NonlinearityEnvelope, NonlinearitySpec};
use crate::specfun::{admissible_delta_range, beta_fn, invert_envelope_map, STRICT_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// A candidate set of constants for the existence argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCertificate {
    pub beta: f64,
    pub env: NonlinearityEnvelope,
    pub y1: f64,
    pub y2: f64,
    pub t: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub k: f64,
}

/// `k = c / (1 − β)^δ₁ · (8 / Y₁)^(1 − δ₁)`.
pub fn contraction_constant(c_lip: f64, beta: f64, delta1: f64, y1: f64) -> f64 {
    c_lip / (1.0 - beta).powf(delta1) * (8.0 / y1).powf(1.0 - delta1)
}

impl HypothesisCertificate {
    /// Derives `ε₁, ε₂` and `k` from the envelope.
    ///
    /// Fails when the exponents are not admissible for this β (so no ε
    /// exists) or when the raw numbers are out of type: β and T outside
    /// `(0, 1)`, non-positive `Y`, or `δ₁ < δ₂`.
    pub fn new(beta: f64, env: NonlinearityEnvelope, y1: f64, y2: f64, t: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return domain(format!("beta must lie in (0, 1), got {beta}"));
        }
        if !(t > 0.0 && t < 1.0) {
            return domain(format!("T must lie in (0, 1), got {t}"));
        }
        if !(y1 > 0.0 && y2 > 0.0) || !y1.is_finite() || !y2.is_finite() {
            return domain(format!("Y1, Y2 must be positive, got {y1}, {y2}"));
        }
        if !(env.delta1 >= env.delta2) {
            return domain(format!(
                "delta1 = {} below delta2 = {}",
                env.delta1, env.delta2
            ));
        }
        if !(env.c1 > 0.0 && env.c2 > 0.0 && env.c_lip > 0.0) {
            return domain("envelope constants must be positive");
        }
        let eps1 = invert_envelope_map(env.delta1, beta)?;
        let eps2 = invert_envelope_map(env.delta2, beta)?;
        let k = contraction_constant(env.c_lip, beta, env.delta1, y1);
        Ok(Self {
            beta,
            env,
            y1,
            y2,
            t,
            eps1,
            eps2,
            k,
        })
    }

    /// `key=value` lines, 17 significant digits.
    pub fn to_key_value(&self) -> String {
        let fields = [
            ("beta", self.beta),
            ("c1", self.env.c1),
            ("c2", self.env.c2),
            ("delta1", self.env.delta1),
            ("delta2", self.env.delta2),
            ("c_lip", self.env.c_lip),
            ("y1", self.y1),
            ("y2", self.y2),
            ("t", self.t),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("k", self.k),
        ];
        fields
            .iter()
            .map(|(key, v)| format!("{key}={}\n", fmt_f64(*v)))
            .collect()
    }

    /// Parses [`to_key_value`](Self::to_key_value) output. The derived
    /// fields are recomputed and must agree with the stored ones.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            let value: f64 = value.trim().parse().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{key}: {e}"),
            })?;
            map.insert(key.trim().to_string(), (i + 1, value));
        }
        let get = |key: &str| {
            map.get(key).map(|&(_, v)| v).ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing key {key}"),
            })
        };
        let env = NonlinearityEnvelope {
            c1: get("c1")?,
            c2: get("c2")?,
            delta1: get("delta1")?,
            delta2: get("delta2")?,
            c_lip: get("c_lip")?,
        };
        let cert = Self::new(get("beta")?, env, get("y1")?, get("y2")?, get("t")?)?;
        for (key, derived) in [("eps1", cert.eps1), ("eps2", cert.eps2), ("k", cert.k)] {
            if let Some(&(line, stored)) = map.get(key) {
                if (stored - derived).abs() > 1e-12 * derived.abs().max(1.0) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("{key} = {stored} disagrees with the derived value {derived}"),
                    });
                }
            }
        }
        Ok(cert)
    }
}

/// One inequality of the constant system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub id: &'static str,
    /// The inequality in plain text.
    pub tag: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub strict: bool,
    pub pass: bool,
}

impl Condition {
    fn new(id: &'static str, tag: &'static str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let margin = rhs - lhs;
        let pass = if strict {
            margin > STRICT_TOL
        } else {
            margin >= -STRICT_TOL
        };
        Self {
            id,
            tag,
            lhs,
            rhs,
            margin,
            strict,
            pass,
        }
    }
}

pub const MASS_BOUND: &str = "mass-bound";
pub const LOWER_SCALE: &str = "lower-scale";
pub const UPPER_SCALE: &str = "upper-scale";
pub const CONTRACTION: &str = "contraction";
pub const UNIT_EMBEDDING: &str = "unit-embedding";

/// Outcome of [`check_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub conditions: Vec<Condition>,
    pub pass: bool,
    /// First failing condition in system order, or the tightest strict one
    /// when all pass. Margins live on unrelated scales, so the order decides.
    pub binding: &'static str,
    pub binding_tag: &'static str,
}

impl CertificateReport {
    pub fn condition(&self, id: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.id == id)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.pass)
    }

    fn rank(&self) -> (usize, f64) {
        let failing = self.failing().count();
        let score = if failing > 0 {
            self.failing()
                .map(|c| c.margin)
                .fold(f64::INFINITY, f64::min)
        } else {
            self.conditions
                .iter()
                .filter(|c| c.strict)
                .map(|c| c.margin)
                .fold(f64::INFINITY, f64::min)
        };
        (failing, score)
    }
}

/// The two addends `Y B(2 + ε, 1 − β)(1 − T)^(2 + ε − β)` and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitEmbedding {
    pub lower_term: f64,
    pub upper_term: f64,
    pub sum: f64,
    pub pass: bool,
    /// Whether the mass bound `(Y₁ + Y₂)(1 − T)^(2−β) < 1 − β` holds.
    pub mass_bound_holds: bool,
    /// Mass bound ⇒ sum below one.
    pub implication_holds: bool,
}

fn embedding_term(y: f64, eps: f64, beta: f64, t: f64) -> f64 {
    // β ∈ (0, 1) and ε ∈ (0, 1) keep both Beta arguments positive
    let b = beta_fn(2.0 + eps, 1.0 - beta).expect("positive Beta arguments");
    y * b * (1.0 - t).powf(2.0 + eps - beta)
}

/// Evaluates the two envelope peaks at `t = 1`; both must stay in `[0, 1]`,
/// where the envelope on `g` is assumed.
pub fn derive_unit_embedding(cert: &HypothesisCertificate) -> UnitEmbedding {
    let lower_term = embedding_term(cert.y1, cert.eps1, cert.beta, cert.t);
    let upper_term = embedding_term(cert.y2, cert.eps2, cert.beta, cert.t);
    let sum = lower_term + upper_term;
    let pass = 1.0 - sum > STRICT_TOL;
    let mass = Condition::new(
        MASS_BOUND,
        "",
        (cert.y1 + cert.y2) * (1.0 - cert.t).powf(2.0 - cert.beta),
        1.0 - cert.beta,
        true,
    );
    UnitEmbedding {
        lower_term,
        upper_term,
        sum,
        pass,
        mass_bound_holds: mass.pass,
        implication_holds: !mass.pass || pass,
    }
}

/// Evaluates every inequality of the constant system.
pub fn check_certificate(cert: &HypothesisCertificate) -> CertificateReport {
    let HypothesisCertificate {
        beta,
        env,
        y1,
        y2,
        t,
        k,
        ..
    } = *cert;
    let (f0, f1) = admissible_delta_range(beta);
    let embedding = derive_unit_embedding(cert);
    let conditions =
        vec![
        Condition::new("delta1-below-f1", "delta1 < f(1) = 2/(3-beta)", env.delta1, f1, true),
        Condition::new("delta-order", "delta2 <= delta1", env.delta2, env.delta1, false),
        Condition::new("delta2-above-f0", "f(0) = 1/(2-beta) < delta2", f0, env.delta2, true),
        Condition::new("y1-at-least-one", "1 <= Y1", 1.0, y1, false),
        Condition::new("y2-at-least-one", "1 <= Y2", 1.0, y2, false),
        Condition::new(
            MASS_BOUND,
            "(Y1+Y2)(1-T)^(2-beta) < 1-beta",
            (y1 + y2) * (1.0 - t).powf(2.0 - beta),
            1.0 - beta,
            true,
        ),
        Condition::new(LOWER_SCALE, "8 Y1 <= c1", 8.0 * y1, env.c1, false),
        Condition::new("envelope-order", "c1 <= c2", env.c1, env.c2, false),
        Condition::new(
            UPPER_SCALE,
            "c2 <= (1-beta) Y2^(1-delta2)",
            env.c2,
            (1.0 - beta) * y2.powf(1.0 - env.delta2),
            false,
        ),
        Condition::new(CONTRACTION, "k = c/(1-beta)^delta1 (8/Y1)^(1-delta1) < 1", k, 1.0, true),
        Condition::new(
            UNIT_EMBEDDING,
            "Y1 B(2+eps1,1-beta)(1-T)^(2+eps1-beta) + Y2 B(2+eps2,1-beta)(1-T)^(2+eps2-beta) < 1",
            embedding.sum,
            1.0,
            true,
        ),
    ];
    let pass = conditions.iter().all(|c| c.pass);
    let binding = if pass {
        conditions
            .iter()
            .filter(|c| c.strict)
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
    } else {
        conditions.iter().find(|c| !c.pass)
    }
    .expect("condition list is never empty");
    CertificateReport {
        binding: binding.id,
        binding_tag: binding.tag,
        conditions,
        pass,
    }
}

/// Where the Lipschitz constant of an envelope came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LipschitzSource {
    UserSupplied,
    Estimated,
}

/// Optional user-supplied envelope constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOverrides {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub c_lip: Option<f64>,
}

/// Pairs sampled when `c_lip` has to be estimated.
pub const LIPSCHITZ_PAIRS: usize = 100_000;

/// Envelope constants for `g`: the tight power-law envelope (or the user's
/// values, which are mandatory for tables), with `c_lip` estimated from
/// samples unless supplied.
pub fn derive_envelope(
    spec: &NonlinearitySpec,
    overrides: &EnvelopeOverrides,
) -> Result<(NonlinearityEnvelope, LipschitzSource)> {
    let base = match spec {
        NonlinearitySpec::PowerLaw {
            coefficient,
            exponent,
        } => Some(NonlinearityEnvelope::for_power_law(*coefficient, *exponent)),
        NonlinearitySpec::Table { .. } => None,
    };
    let pick = |over: Option<f64>, fallback: Option<f64>, name: &str| {
        over.or(fallback).ok_or_else(|| {
            Error::Config(format!(
                "table g needs an explicit envelope constant `{name}`"
            ))
        })
    };
    let c1 = pick(overrides.c1, base.map(|e| e.c1), "c1")?;
    let c2 = pick(overrides.c2, base.map(|e| e.c2), "c2")?;
    let delta1 = pick(overrides.delta1, base.map(|e| e.delta1), "delta1")?;
    let delta2 = pick(overrides.delta2, base.map(|e| e.delta2), "delta2")?;
    let (c_lip, source) = match overrides.c_lip {
        Some(c) => (c, LipschitzSource::UserSupplied),
        None => (
            estimate_lipschitz_constant(spec, delta1, LIPSCHITZ_PAIRS)?,
            LipschitzSource::Estimated,
        ),
    };
    Ok((
        NonlinearityEnvelope {
            c1,
            c2,
            delta1,
            delta2,
            c_lip,
        },
        source,
    ))
}

/// Box searched by [`search_feasible`]. `Y₁` and `Y₂` are sampled
/// log-uniformly, `T` through `1 − T` log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRanges {
    pub y1: (f64, f64),
    pub y2: (f64, f64),
    pub t: (f64, f64),
    pub grid_per_axis: usize,
    pub refine_steps: usize,
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            y1: (1.0, 1e6),
            y2: (1.0, 1e8),
            t: (1e-3, 1.0 - 1e-9),
            grid_per_axis: 48,
            refine_steps: 4000,
        }
    }
}

impl SearchRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("y1", self.y1), ("y2", self.y2)] {
            if !(lo <= hi) || !hi.is_finite() {
                return config(format!("empty search range for {name}: [{lo}, {hi}]"));
            }
            if !(lo >= 1.0) {
                return config(format!(
                    "search range for {name} must satisfy {name} >= 1, got [{lo}, {hi}]"
                ));
            }
        }
        let (lo, hi) = self.t;
        if !(lo <= hi) {
            return config(format!("empty search range for t: [{lo}, {hi}]"));
        }
        if !(lo > 0.0 && hi < 1.0) {
            return config(format!(
                "search range for t must lie inside (0, 1), got [{lo}, {hi}]"
            ));
        }
        if self.grid_per_axis < 2 {
            return config("search grid needs at least 2 points per axis");
        }
        Ok(())
    }
}

/// Search coordinates: `(ln Y₁, ln Y₂, ln(1 − T))`.
#[derive(Debug, Clone, Copy)]
struct Point([f64; 3]);

struct Box3 {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Box3 {
    fn new(r: &SearchRanges) -> Self {
        Self {
            lo: [r.y1.0.ln(), r.y2.0.ln(), (1.0 - r.t.1).ln()],
            hi: [r.y1.1.ln(), r.y2.1.ln(), (1.0 - r.t.0).ln()],
        }
    }

    fn grid_point(&self, idx: [usize; 3], n: usize) -> Point {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.lo[a] + (self.hi[a] - self.lo[a]) * idx[a] as f64 / (n - 1) as f64;
        }
        Point(p)
    }

    fn clamp(&self, mut p: Point) -> Point {
        for a in 0..3 {
            p.0[a] = p.0[a].clamp(self.lo[a], self.hi[a]);
        }
        p
    }
}

/// Outcome of [`search_feasible`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub certificate: HypothesisCertificate,
    pub report: CertificateReport,
    pub feasible: bool,
    /// The binding condition of the best certificate.
    pub binding: &'static str,
    pub evaluated: usize,
}

fn evaluate(
    beta: f64,
    env: &NonlinearityEnvelope,
    p: Point,
) -> Option<(HypothesisCertificate, CertificateReport)> {
    let [ly1, ly2, lgap] = p.0;
    let cert = HypothesisCertificate::new(beta, *env, ly1.exp(), ly2.exp(), -lgap.exp_m1()).ok()?;
    let report = check_certificate(&cert);
    Some((cert, report))
}

/// Orders candidates: fewer failing conditions first, then the larger score.
fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    match a.0.cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1 > b.1,
    }
}

/// Looks for `(Y₁, Y₂, T)` in `ranges` that satisfy every condition.
///
/// A full grid is scored in parallel, then the best point is refined by a
/// seeded random local search with shrinking steps. Candidates rank by the
/// number of failing conditions and then by the worst failing margin (or,
/// when nothing fails, the smallest strict margin). The result depends only
/// on the inputs and `seed`.
pub fn search_feasible(
    env: &NonlinearityEnvelope,
    beta: f64,
    ranges: &SearchRanges,
    seed: u64,
) -> Result<SearchOutcome> {
    ranges.validate()?;
    // exponent admissibility is a property of (env, β), not of the box
    invert_envelope_map(env.delta1, beta)?;
    invert_envelope_map(env.delta2, beta)?;
    let bx = Box3::new(ranges);
    let n = ranges.grid_per_axis;
    let total = n * n * n;

    let best_grid = (0..total)
        .into_par_iter()
        .filter_map(|flat| {
            let idx = [flat / (n * n), (flat / n) % n, flat % n];
            let p = bx.grid_point(idx, n);
            evaluate(beta, env, p).map(|(_, rep)| (flat, rep.rank()))
        })
        .reduce_with(|a, b| {
            if better(b.1, a.1) || (!better(a.1, b.1) && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .ok_or_else(|| Error::Config("no evaluable point in the search box".into()))?;

    let flat = best_grid.0;
    let mut point = bx.grid_point([flat / (n * n), (flat / n) % n, flat % n], n);
    let (mut cert, mut report) = evaluate(beta, env, point).expect("grid winner evaluates");
    let mut rank = report.rank();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step: [f64; 3] = [0, 1, 2].map(|a| (bx.hi[a] - bx.lo[a]) / (n - 1) as f64);
    let mut evaluated = total;
    for i in 0..ranges.refine_steps {
        let mut trial = point;
        for (coord, h) in trial.0.iter_mut().zip(step) {
            *coord += h * rng.gen_range(-1.0..=1.0);
        }
        let trial = bx.clamp(trial);
        evaluated += 1;
        if let Some((c, r)) = evaluate(beta, env, trial) {
            let rk = r.rank();
            if better(rk, rank) {
                point = trial;
                cert = c;
                report = r;
                rank = rk;
                continue;
            }
        }
        if i % 50 == 49 {
            step = step.map(|s| s * 0.7);
        }
    }
    let feasible = report.pass;
    Ok(SearchOutcome {
        binding: report.binding,
        certificate: cert,
        report,
        feasible,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn env(c1: f64, c2: f64, d1: f64, d2: f64, c_lip: f64) -> NonlinearityEnvelope {
        NonlinearityEnvelope {
            c1,
            c2,
            delta1: d1,
            delta2: d2,
            c_lip,
        }
    }

    /// Hand-built: Y₁ = 1 makes 8Y₁ = c₁, Y₂ = 16⁴ makes (1−β)Y₂^(1/4) = c₂,
    /// and 1 − T = 3e-4 leaves (Y₁+Y₂)(1−T)^1.5 ≈ 0.34 < 0.5.
    fn hand_certificate() -> HypothesisCertificate {
        HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 0.01), 1.0, 65_536.0, 0.9997)
            .unwrap()
    }

    #[test]
    fn derived_fields() {
        let c = hand_certificate();
        assert_relative_eq!(c.eps1, 0.5, epsilon = 1e-14);
        assert_relative_eq!(c.eps2, 0.5, epsilon = 1e-14);
        assert_relative_eq!(
            c.k,
            0.01 / 0.5f64.powf(0.75) * 8f64.powf(0.25),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mass_bound_failure_example() {
        let cert =
            HypothesisCertificate::new(0.5, env(1.0, 1.0, 0.75, 0.75, 0.1), 1.0, 1.0, 0.5).unwrap();
        let rep = check_certificate(&cert);
        let mass = rep.condition(MASS_BOUND).unwrap();
        assert!(!mass.pass);
        assert_relative_eq!(mass.lhs, 2.0 * 0.5f64.powf(1.5), epsilon = 1e-15);
        assert_relative_eq!(mass.lhs, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert!(!rep.pass);
        assert_eq!(rep.binding, MASS_BOUND);

        // the power-law envelope fails several conditions at this point; the earliest binds
        let cert =
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 6.0), 1.0, 1.0, 0.5).unwrap();
        let rep = check_certificate(&cert);
        assert!(rep.failing().count() > 1);
        assert_eq!(rep.binding, MASS_BOUND);
    }

    #[test]
    fn lower_scale_failure_example() {
        let cert =
            HypothesisCertificate::new(0.5, env(4.0, 4.0, 0.75, 0.75, 0.1), 1.0, 1.0, 0.5).unwrap();
        let c = check_certificate(&cert)
            .condition(LOWER_SCALE)
            .unwrap()
            .clone();
        assert!(!c.pass);
        assert_eq!((c.lhs, c.rhs, c.margin), (8.0, 4.0, -4.0));
    }

    #[test]
    fn contraction_constant_example() {
        let cert =
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.7, 0.1), 1.0, 1.0, 0.5).unwrap();
        // 0.1 / 0.5^0.75 · 8^0.25 by hand: 0.1 · 1.6817928 · 1.6817928
        assert_relative_eq!(cert.k, 0.282_842_712_474_619, max_relative = 1e-12);
        assert!(
            check_certificate(&cert)
                .condition(CONTRACTION)
                .unwrap()
                .pass
        );
    }

    #[test]
    fn hand_certificate_passes() {
        let rep = check_certificate(&hand_certificate());
        for c in &rep.conditions {
            assert!(c.pass, "{c:?}");
        }
        assert!(rep.pass);
        assert!(derive_unit_embedding(&hand_certificate()).pass);
    }

    #[test]
    fn certificate_construction_errors() {
        assert!(matches!(
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.5, 0.5, 1.0), 1.0, 1.0, 0.5),
            Err(Error::InfeasibleExponent { .. })
        ));
        assert!(
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.7, 0.75, 1.0), 1.0, 1.0, 0.5).is_err()
        );
        assert!(
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 1.0), 1.0, 1.0, 1.0).is_err()
        );
    }

    #[test]
    fn unit_embedding_examples() {
        let cert = HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 1.0), 1.0, 1.0, 0.999)
            .unwrap();
        let e = derive_unit_embedding(&cert);
        assert!(e.lower_term < 1e-4 && e.upper_term < 1e-4 && e.pass);
        // B(2.5, 0.5) · 0.001² each
        assert_relative_eq!(
            e.lower_term,
            1.178_097_245_096_172_5e-6,
            max_relative = 1e-9
        );

        let cert = HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 1.0), 1.0, 1.0, 1e-6)
            .unwrap();
        let e = derive_unit_embedding(&cert);
        assert!(!e.pass && e.sum > 1.0);
        assert!(e.implication_holds);
    }

    #[test]
    fn key_value_round_trip() {
        let c = hand_certificate();
        let text = c.to_key_value();
        let back = HypothesisCertificate::from_key_value(&text).unwrap();
        assert_eq!(back, c);
        let tampered = text.replace(&format!("k={}", fmt_f64(c.k)), "k=0.5");
        assert!(matches!(
            HypothesisCertificate::from_key_value(&tampered),
            Err(Error::Parse { line: 12, .. })
        ));
    }

    #[test]
    fn margins_continuous_in_fields() {
        // moderate constants: with Y₂ in the thousands the T-derivative alone exceeds 10³
        let base =
            HypothesisCertificate::new(0.5, env(8.0, 8.0, 0.75, 0.75, 0.5), 2.0, 3.0, 0.9).unwrap();
        let r0 = check_certificate(&base);
        let h = 1e-9;
        let perturbed = [
            HypothesisCertificate::new(0.5 + h, base.env, base.y1, base.y2, base.t).unwrap(),
            HypothesisCertificate::new(0.5, base.env, base.y1 + h, base.y2, base.t).unwrap(),
            HypothesisCertificate::new(0.5, base.env, base.y1, base.y2 + h, base.t).unwrap(),
            HypothesisCertificate::new(0.5, base.env, base.y1, base.y2, base.t + h).unwrap(),
            HypothesisCertificate::new(
                0.5,
                NonlinearityEnvelope {
                    c_lip: 0.5 + h,
                    ..base.env
                },
                2.0,
                3.0,
                0.9,
            )
            .unwrap(),
        ];
        for p in &perturbed {
            let r = check_certificate(p);
            for (a, b) in r0.conditions.iter().zip(&r.conditions) {
                assert!(
                    (a.margin - b.margin).abs() < 1e-6,
                    "{} moved {}",
                    a.id,
                    a.margin - b.margin
                );
            }
        }
    }

    #[test]
    fn search_rejects_bad_ranges() {
        let e = env(8.0, 8.0, 0.75, 0.75, 6.0);
        let below_one = SearchRanges {
            y1: (0.5, 10.0),
            ..Default::default()
        };
        assert!(matches!(
            search_feasible(&e, 0.5, &below_one, 1),
            Err(Error::Config(_))
        ));
        let empty = SearchRanges {
            y2: (10.0, 2.0),
            ..Default::default()
        };
        assert!(matches!(
            search_feasible(&e, 0.5, &empty, 1),
            Err(Error::Config(_))
        ));
        let bad_t = SearchRanges {
            t: (0.0, 0.5),
            ..Default::default()
        };
        assert!(search_feasible(&e, 0.5, &bad_t, 1).is_err());
    }

    #[test]
    fn search_finds_small_lipschitz_certificate() {
        let e = env(8.0, 8.0, 0.75, 0.75, 0.01);
        let ranges = SearchRanges {
            grid_per_axis: 24,
            refine_steps: 500,
            ..Default::default()
        };
        let out = search_feasible(&e, 0.5, &ranges, 7).unwrap();
        assert!(
            out.feasible,
            "{:?}",
            out.report.failing().collect::<Vec<_>>()
        );
        assert!(check_certificate(&out.certificate).pass);
        assert!(derive_unit_embedding(&out.certificate).pass);
    }

    #[test]
    fn search_power_law_is_infeasible_on_contraction() {
        let e = NonlinearityEnvelope::for_power_law(8.0, 0.75);
        let ranges = SearchRanges {
            grid_per_axis: 24,
            refine_steps: 500,
            ..Default::default()
        };
        let out = search_feasible(&e, 0.5, &ranges, 3).unwrap();
        assert!(!out.feasible);
        assert_eq!(out.binding, CONTRACTION);
        assert_eq!(out.report.failing().count(), 1);
    }

    #[test]
    fn search_is_deterministic() {
        let e = env(8.0, 9.0, 0.76, 0.74, 0.05);
        let ranges = SearchRanges {
            grid_per_axis: 16,
            refine_steps: 300,
            ..Default::default()
        };
        let a = search_feasible(&e, 0.5, &ranges, 99).unwrap();
        let b = search_feasible(&e, 0.5, &ranges, 99).unwrap();
        assert_eq!(a.certificate.to_key_value(), b.certificate.to_key_value());
    }

    #[test]
    fn derive_envelope_sources() {
        let g = NonlinearitySpec::power_law(2.0, 0.75).unwrap();
        let (e, src) = derive_envelope(&g, &EnvelopeOverrides::default()).unwrap();
        assert_eq!(src, LipschitzSource::Estimated);
        assert_eq!((e.c1, e.c2, e.delta1, e.delta2), (2.0, 2.0, 0.75, 0.75));
        assert!(e.c_lip <= 1.5 && e.c_lip > 1.5 * (1.0 - 1e-5));
        let (e, src) = derive_envelope(
            &g,
            &EnvelopeOverrides {
                c_lip: Some(0.3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((e.c_lip, src), (0.3, LipschitzSource::UserSupplied));

        let t = NonlinearitySpec::table(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(derive_envelope(&t, &EnvelopeOverrides::default()).is_err());
    }
}
