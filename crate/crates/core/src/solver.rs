//! Picard iteration for `y(t) = g(∫_T^t y(s)(t − s)^(−β) ds)` on `[T, 1]`.

use crate::error::{config, domain, Error, Result};
use crate::format::fmt_f64;
use crate::hypothesis::HypothesisCertificate;
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{AbelWeights, GridFunction, Mesh};
use crate::specfun::beta_fn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;

/// Functions squeezed between `Y₁(t − T)^(1+ε₁)` and `Y₂(t − T)^(1+ε₂)` on `[T, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeSet {
    pub y1: f64,
    pub y2: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub t: f64,
}

impl EnvelopeSet {
    pub fn from_certificate(cert: &HypothesisCertificate) -> Self {
        Self {
            y1: cert.y1,
            y2: cert.y2,
            eps1: cert.eps1,
            eps2: cert.eps2,
            t: cert.t,
        }
    }

    /// Zero left of `T`.
    pub fn lower(&self, t: f64) -> f64 {
        if t <= self.t {
            0.0
        } else {
            self.y1 * (t - self.t).powf(1.0 + self.eps1)
        }
    }

    pub fn upper(&self, t: f64) -> f64 {
        if t <= self.t {
            0.0
        } else {
            self.y2 * (t - self.t).powf(1.0 + self.eps2)
        }
    }
}

/// Nodal membership check for an [`EnvelopeSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeVerdict {
    pub pass: bool,
    /// `min (y − lower)` over nodes in `[T, 1]`.
    pub lower_margin: f64,
    /// `min (upper − y)` over nodes in `[T, 1]`.
    pub upper_margin: f64,
    /// Node with the smallest of the two margins.
    pub worst_node: usize,
    pub worst_t: f64,
}

/// Absolute slack granted to both envelope inequalities.
pub const ENVELOPE_TOL: f64 = 1e-12;

pub fn envelope_check(y: &GridFunction, env: &EnvelopeSet) -> EnvelopeVerdict {
    let mut v = EnvelopeVerdict {
        pass: true,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        worst_node: 0,
        worst_t: env.t,
    };
    let mut worst = f64::INFINITY;
    for (i, (&t, &val)) in y.nodes().iter().zip(y.values()).enumerate() {
        if t < env.t {
            continue;
        }
        let lo = val - env.lower(t);
        let hi = env.upper(t) - val;
        v.lower_margin = v.lower_margin.min(lo);
        v.upper_margin = v.upper_margin.min(hi);
        if lo.min(hi) < worst {
            worst = lo.min(hi);
            v.worst_node = i;
            v.worst_t = t;
        }
    }
    v.pass = v.lower_margin >= -ENVELOPE_TOL && v.upper_margin >= -ENVELOPE_TOL;
    v
}

/// `A (t − T)^γ`, the exact solution for `g(u) = c·u^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormSolution {
    pub amplitude: f64,
    pub gamma: f64,
    pub t: f64,
}

impl ClosedFormSolution {
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.t {
            0.0
        } else {
            self.amplitude * (t - self.t).powf(self.gamma)
        }
    }

    /// `∫_T^t y(s)(t − s)^(−β) ds = A B(γ + 1, 1 − β)(t − T)^(γ + 1 − β)`.
    pub fn abel_value(&self, beta: f64, t: f64) -> f64 {
        if t <= self.t {
            return 0.0;
        }
        let b = beta_fn(self.gamma + 1.0, 1.0 - beta).expect("positive Beta arguments");
        self.amplitude * b * (t - self.t).powf(self.gamma + 1.0 - beta)
    }
}

/// Matches exponents and amplitudes in `y = c (Abel y)^d` for `y = A (t − T)^γ`:
/// `γ = d(1 − β)/(1 − d)` and `A^(1−d) = c B(γ + 1, 1 − β)^d`.
pub fn closed_form_power_solution(
    c_g: f64,
    d: f64,
    beta: f64,
    t: f64,
) -> Result<ClosedFormSolution> {
    if !(d > 0.0 && d < 1.0) {
        return domain(format!("closed form needs exponent d in (0, 1), got {d}"));
    }
    if !(c_g > 0.0) || !c_g.is_finite() {
        return domain(format!(
            "closed form needs a positive coefficient, got {c_g}"
        ));
    }
    if !(0.0..1.0).contains(&beta) {
        return domain(format!("beta must lie in [0, 1), got {beta}"));
    }
    let gamma = d * (1.0 - beta) / (1.0 - d);
    let b = beta_fn(gamma + 1.0, 1.0 - beta)?;
    let amplitude = (c_g * b.powf(d)).powf(1.0 / (1.0 - d));
    Ok(ClosedFormSolution {
        amplitude,
        gamma,
        t,
    })
}

/// The operator `𝒪(y)(t) = g(∫_T^t y(s)(t − s)^(−β) ds)` on a fixed mesh over `[T, 1]`.
#[derive(Debug, Clone)]
pub struct SolutionOperator {
    g: NonlinearitySpec,
    weights: AbelWeights,
}

impl SolutionOperator {
    pub fn new(g: NonlinearitySpec, beta: f64, mesh: Arc<Mesh>) -> Result<Self> {
        Ok(Self {
            g,
            weights: AbelWeights::new(mesh, beta)?,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.weights.mesh()
    }

    pub fn beta(&self) -> f64 {
        self.weights.beta()
    }

    pub fn g(&self) -> &NonlinearitySpec {
        &self.g
    }

    /// Inner integrals at every node.
    pub fn abel(&self, y: &[f64]) -> Vec<f64> {
        self.weights.apply(y)
    }

    pub fn apply_values(&self, y: &[f64]) -> Result<Vec<f64>> {
        let inner = self.weights.apply(y);
        let top = self.g.domain_max();
        let nodes = self.mesh().nodes();
        inner
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                // roundoff can push the integral of a vanishing y a hair below 0
                let j = if j < 0.0 && j > -1e-300 { 0.0 } else { j };
                if !(j >= 0.0 && j <= top) {
                    return Err(Error::Range {
                        node: i,
                        t: nodes[i],
                        value: j,
                    });
                }
                Ok(self.g.eval_unchecked(j))
            })
            .collect()
    }

    pub fn apply(&self, y: &GridFunction) -> Result<GridFunction> {
        if y.nodes() != self.mesh().nodes() {
            return config("iterate and operator live on different meshes");
        }
        GridFunction::new(self.mesh().clone(), self.apply_values(y.values())?)
    }
}

/// One application of the solution operator; `y` must live on a mesh starting at `T`.
pub fn apply_operator(
    g: &NonlinearitySpec,
    beta: f64,
    t: f64,
    y: &GridFunction,
) -> Result<GridFunction> {
    check_interval(y.mesh(), t)?;
    SolutionOperator::new(g.clone(), beta, y.mesh().clone())?.apply(y)
}

fn check_interval(mesh: &Mesh, t: f64) -> Result<()> {
    if mesh.start() != t {
        return config(format!("mesh starts at {} but T = {t}", mesh.start()));
    }
    Ok(())
}

/// Starting iterate for [`picard_solve`].
#[derive(Debug, Clone)]
pub enum Init {
    /// `Y₁(t − T)^(1+ε₁)`; the envelope is also used for per-iterate verdicts.
    LowerEnvelope(EnvelopeSet),
    Zero,
    Custom(GridFunction),
}

/// One row per iterate `y_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    /// `d(y_n, y_{n−1})`; absent for the initial iterate.
    pub distance: Option<f64>,
    /// `sup |y_n − 𝒪(y_n)|`.
    pub residual: f64,
    pub envelope_pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
    /// Residual of the returned iterate.
    pub residual: f64,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.distance).collect()
    }

    /// CSV `iter,distance,residual,envelope_pass`; missing entries are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,distance,residual,envelope_pass")?;
        for r in &self.rows {
            let distance = r.distance.map(fmt_f64).unwrap_or_default();
            let env = r.envelope_pass.map(|b| b.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                r.iter,
                distance,
                fmt_f64(r.residual),
                env
            )?;
        }
        Ok(())
    }
}

/// Iterates `y_{n+1} = 𝒪(y_n)` until `sup |y_n − 𝒪(y_n)| <= tol`.
///
/// The returned function is the first iterate meeting the tolerance, so its
/// residual is at most `tol`. After `max_iter` applications without meeting
/// it, the last iterate comes back with `converged = false`.
pub fn picard_solve(
    g: &NonlinearitySpec,
    beta: f64,
    t: f64,
    mesh: Arc<Mesh>,
    init: Init,
    tol: f64,
    max_iter: usize,
) -> Result<(GridFunction, IterationTrace)> {
    check_interval(&mesh, t)?;
    let op = SolutionOperator::new(g.clone(), beta, mesh)?;
    picard_with_operator(&op, init, tol, max_iter)
}

/// [`picard_solve`] on a prebuilt operator.
pub fn picard_with_operator(
    op: &SolutionOperator,
    init: Init,
    tol: f64,
    max_iter: usize,
) -> Result<(GridFunction, IterationTrace)> {
    if !(tol > 0.0) {
        return config(format!("tolerance must be positive, got {tol}"));
    }
    let mesh = op.mesh().clone();
    let (mut y, envelope) = match init {
        Init::LowerEnvelope(env) => {
            if env.t != mesh.start() {
                return config("lower envelope and mesh start at different T");
            }
            (
                mesh.nodes()
                    .iter()
                    .map(|&s| env.lower(s))
                    .collect::<Vec<_>>(),
                Some(env),
            )
        }
        Init::Zero => (vec![0.0; mesh.len()], None),
        Init::Custom(f) => {
            if f.nodes() != mesh.nodes() {
                return config("custom initial iterate lives on a different mesh");
            }
            (f.into_values(), None)
        }
    };
    let mut rows = Vec::new();
    let mut distance = None;
    for n in 0..=max_iter {
        let next = op.apply_values(&y)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: n,
                reason: "non-finite iterate".into(),
            });
        }
        let residual = y
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let envelope_pass = envelope.as_ref().map(|env| {
            let current = GridFunction::new(mesh.clone(), y.clone()).expect("finite iterate");
            envelope_check(&current, env).pass
        });
        rows.push(TraceRow {
            iter: n,
            distance,
            residual,
            envelope_pass,
        });
        if residual <= tol || n == max_iter {
            let converged = residual <= tol;
            return Ok((
                GridFunction::new(mesh, y)?,
                IterationTrace {
                    rows,
                    converged,
                    residual,
                },
            ));
        }
        distance = Some(residual);
        y = next;
    }
    unreachable!("loop returns at n == max_iter")
}

/// A random member of the envelope set: `θ lower + (1 − θ) upper` with `θ`
/// piecewise linear through `knots` uniform values on an even grid over `[T, 1]`.
pub fn random_envelope_member(
    mesh: &Arc<Mesh>,
    env: &EnvelopeSet,
    knots: usize,
    rng: &mut impl Rng,
) -> GridFunction {
    let knots = knots.max(2);
    let theta: Vec<f64> = (0..knots).map(|_| rng.gen::<f64>()).collect();
    let (a, b) = (mesh.start(), mesh.end());
    let values = mesh
        .nodes()
        .iter()
        .map(|&t| {
            let x = ((t - a) / (b - a) * (knots - 1) as f64).clamp(0.0, (knots - 1) as f64);
            let k = (x.floor() as usize).min(knots - 2);
            let w = x - k as f64;
            let th = theta[k] + w * (theta[k + 1] - theta[k]);
            let (lo, hi) = (env.lower(t), env.upper(t));
            lo + (1.0 - th) * (hi - lo)
        })
        .collect();
    GridFunction::new(mesh.clone(), values).expect("envelope values are finite")
}

/// Knots of the random weight functions drawn by [`empirical_contraction`].
pub const CONTRACTION_KNOTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionEstimate {
    /// `max d(𝒪y₁, 𝒪y₂) / d(y₁, y₂)` over the sampled pairs.
    pub k_hat: f64,
    pub trials: usize,
    pub resampled: usize,
}

/// Largest observed Lipschitz ratio of `𝒪` over random pairs from the
/// envelope set. Identical pairs are redrawn.
pub fn empirical_contraction(
    g: &NonlinearitySpec,
    beta: f64,
    t: f64,
    mesh: Arc<Mesh>,
    env: &EnvelopeSet,
    n_trials: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if n_trials < 2 {
        return config(format!(
            "empirical contraction needs at least 2 trials, got {n_trials}"
        ));
    }
    check_interval(&mesh, t)?;
    let op = SolutionOperator::new(g.clone(), beta, mesh.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k_hat: f64 = 0.0;
    let mut resampled = 0;
    for _ in 0..n_trials {
        let (a, b, d) = loop {
            let a = random_envelope_member(&mesh, env, CONTRACTION_KNOTS, &mut rng);
            let b = random_envelope_member(&mesh, env, CONTRACTION_KNOTS, &mut rng);
            let d = a.sup_distance(&b)?;
            if d > 0.0 {
                break (a, b, d);
            }
            resampled += 1;
            if resampled > 1000 * n_trials {
                return Err(Error::NumericalFailure {
                    iteration: 0,
                    reason: "envelope set collapses to a single function".into(),
                });
            }
        };
        let oa = op.apply_values(a.values())?;
        let ob = op.apply_values(b.values())?;
        let od = oa
            .iter()
            .zip(&ob)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        k_hat = k_hat.max(od / d);
    }
    Ok(ContractionEstimate {
        k_hat,
        trials: n_trials,
        resampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::abel_integral;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sqrt_g() -> NonlinearitySpec {
        NonlinearitySpec::power_law(1.0, 0.5).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let s = closed_form_power_solution(1.0, 0.5, 0.5, 0.3).unwrap();
        assert_relative_eq!(s.gamma, 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.amplitude, PI / 2.0, max_relative = 1e-13);

        let s = closed_form_power_solution(1.0, 0.75, 0.5, 0.0).unwrap();
        assert_relative_eq!(s.gamma, 1.5, epsilon = 1e-14);
        // B(2.5, 0.5)³ = (3π/8)³
        assert_relative_eq!(s.amplitude, (3.0 * PI / 8.0).powi(3), max_relative = 1e-12);
        assert_relative_eq!(s.amplitude, 1.635_096_621_812_686, max_relative = 1e-12);
        let eps = crate::specfun::invert_envelope_map(0.75, 0.5).unwrap();
        assert_relative_eq!(s.gamma, 1.0 + eps, epsilon = 1e-14);

        let s = closed_form_power_solution(1.0, 0.5, 0.0, 0.5).unwrap();
        assert_relative_eq!(s.gamma, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.amplitude, 0.5, max_relative = 1e-13);
        assert_relative_eq!(s.value(1.0), 0.25, max_relative = 1e-13);

        assert!(closed_form_power_solution(1.0, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn closed_form_is_analytic_fixed_point() {
        for (c, d, beta) in [(1.0, 0.5, 0.5), (2.0, 0.7, 0.3), (0.5, 0.6, 0.0)] {
            let s = closed_form_power_solution(c, d, beta, 0.2).unwrap();
            for t in [0.3, 0.6, 1.0] {
                let rhs = c * s.abel_value(beta, t).powf(d);
                assert_relative_eq!(rhs, s.value(t), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn operator_on_zero_is_zero() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 32, 2.0).unwrap());
        let out = apply_operator(&sqrt_g(), 0.5, 0.5, &GridFunction::zeros(mesh)).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_on_monomial() {
        let g = NonlinearitySpec::power_law(1.0, 0.75).unwrap();
        let mut prev = f64::INFINITY;
        for n in [256, 512, 1024] {
            let mesh = Arc::new(Mesh::uniform(0.0, 1.0, n).unwrap());
            let y = GridFunction::from_fn(mesh, |s| s.powf(1.5)).unwrap();
            let out = apply_operator(&g, 0.5, 0.0, &y).unwrap();
            // B(2.5, 0.5)^0.75
            let err = (out.last() - 1.130_800_144_506_023_7).abs();
            assert!(err < prev);
            prev = err;
            assert_eq!(out.values()[0], 0.0);
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn closed_form_maps_to_itself() {
        let s = closed_form_power_solution(1.0, 0.5, 0.5, 0.5).unwrap();
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 512, 2.0).unwrap());
        let y = GridFunction::from_fn(mesh, |t| s.value(t)).unwrap();
        let out = apply_operator(&sqrt_g(), 0.5, 0.5, &y).unwrap();
        assert!(out.sup_distance(&y).unwrap() < 2e-3);
    }

    #[test]
    fn operator_range_error_names_node() {
        let g = NonlinearitySpec::table(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let mesh = Arc::new(Mesh::uniform(0.0, 1.0, 4).unwrap());
        let y = GridFunction::from_fn(mesh, |_| 10.0).unwrap();
        match apply_operator(&g, 0.5, 0.0, &y) {
            Err(Error::Range { node, .. }) => assert_eq!(node, 1),
            other => panic!("expected a range error, got {other:?}"),
        }
    }

    #[test]
    fn operator_checks_interval() {
        let mesh = Arc::new(Mesh::uniform(0.0, 1.0, 4).unwrap());
        assert!(apply_operator(&sqrt_g(), 0.5, 0.5, &GridFunction::zeros(mesh)).is_err());
    }

    fn default_envelope(t: f64) -> EnvelopeSet {
        EnvelopeSet {
            y1: 1.0,
            y2: 1.0,
            eps1: 0.5,
            eps2: 0.5,
            t,
        }
    }

    #[test]
    fn picard_matches_closed_form() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 512, 2.0).unwrap());
        let (y, trace) = picard_solve(
            &sqrt_g(),
            0.5,
            0.5,
            mesh,
            Init::LowerEnvelope(default_envelope(0.5)),
            1e-10,
            500,
        )
        .unwrap();
        assert!(trace.converged);
        assert!(trace.residual <= 1e-10);
        assert!(
            (y.last() - 1.110_720_734_539_591_6).abs() < 2e-3,
            "{}",
            y.last()
        );
    }

    #[test]
    fn picard_zero_init_stays_trivial() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 64, 2.0).unwrap());
        let (y, trace) = picard_solve(&sqrt_g(), 0.5, 0.5, mesh, Init::Zero, 1e-16, 3).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 0);
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn picard_classical_limit() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 256, 2.0).unwrap());
        let (y, trace) = picard_solve(
            &sqrt_g(),
            0.0,
            0.5,
            mesh,
            Init::LowerEnvelope(default_envelope(0.5)),
            1e-12,
            500,
        )
        .unwrap();
        assert!(trace.converged);
        assert!((y.last() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn picard_flags_non_convergence() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 64, 2.0).unwrap());
        let (_, trace) = picard_solve(
            &sqrt_g(),
            0.5,
            0.5,
            mesh,
            Init::LowerEnvelope(default_envelope(0.5)),
            1e-16,
            3,
        )
        .unwrap();
        assert!(!trace.converged);
        assert_eq!(trace.iterations(), 3);
        assert_eq!(trace.rows.len(), 4);
        assert!(trace.rows[0].distance.is_none());
        assert!(trace.distances().iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn picard_rejects_bad_tolerance() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 8, 2.0).unwrap());
        assert!(picard_solve(&sqrt_g(), 0.5, 0.5, mesh, Init::Zero, 0.0, 3).is_err());
    }

    #[test]
    fn envelope_check_examples() {
        let env = EnvelopeSet {
            y1: 1.0,
            y2: 3.0,
            eps1: 0.6,
            eps2: 0.4,
            t: 0.2,
        };
        let mesh = Arc::new(Mesh::graded(0.2, 1.0, 50, 2.0).unwrap());
        let lower = GridFunction::from_fn(mesh.clone(), |t| env.lower(t)).unwrap();
        let v = envelope_check(&lower, &env);
        assert!(v.pass);
        assert_eq!(v.lower_margin, 0.0);

        let v = envelope_check(&GridFunction::zeros(mesh.clone()), &env);
        assert!(!v.pass);
        assert_eq!(v.worst_node, 50);
        let inner = (1..=50)
            .filter(|&i| 0.0 < env.lower(mesh.nodes()[i]))
            .count();
        assert_eq!(inner, 50);
    }

    #[test]
    fn contraction_needs_two_trials() {
        let mesh = Arc::new(Mesh::graded(0.9, 1.0, 16, 2.0).unwrap());
        let env = default_envelope(0.9);
        assert!(empirical_contraction(&sqrt_g(), 0.5, 0.9, mesh, &env, 1, 0).is_err());
    }

    #[test]
    fn contraction_resamples_degenerate_pairs() {
        // Y₁ = Y₂ and ε₁ = ε₂ collapse the set to a single function
        let mesh = Arc::new(Mesh::graded(0.9, 1.0, 16, 2.0).unwrap());
        let env = default_envelope(0.9);
        assert!(matches!(
            empirical_contraction(&sqrt_g(), 0.5, 0.9, mesh, &env, 2, 0),
            Err(Error::NumericalFailure { .. })
        ));
    }

    #[test]
    fn contraction_baseline_sqrt() {
        let mesh = Arc::new(Mesh::graded(0.9, 1.0, 128, 2.0).unwrap());
        let env = EnvelopeSet {
            y1: 1.0,
            y2: 2.0,
            eps1: 0.5,
            eps2: 0.5,
            t: 0.9,
        };
        let a = empirical_contraction(&sqrt_g(), 0.5, 0.9, mesh.clone(), &env, 100, 11).unwrap();
        let b = empirical_contraction(&sqrt_g(), 0.5, 0.9, mesh, &env, 100, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.k_hat.is_finite() && a.k_hat > 0.0);
        assert_eq!(a.resampled, 0);
    }

    #[test]
    fn trace_csv_layout() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 8, 2.0).unwrap());
        let (_, trace) = picard_solve(
            &sqrt_g(),
            0.5,
            0.5,
            mesh,
            Init::LowerEnvelope(default_envelope(0.5)),
            1e-16,
            2,
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,distance,residual,envelope_pass");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,,"));
        assert!(lines[1].ends_with(",true"));
    }

    #[test]
    fn abel_of_solution_uses_the_interval_only() {
        let mesh = Arc::new(Mesh::graded(0.5, 1.0, 64, 2.0).unwrap());
        let s = closed_form_power_solution(1.0, 0.5, 0.5, 0.5).unwrap();
        let y = GridFunction::from_fn(mesh.clone(), |t| s.value(t)).unwrap();
        let op = SolutionOperator::new(sqrt_g(), 0.5, mesh).unwrap();
        let table = op.abel(y.values());
        assert_relative_eq!(
            table[64],
            abel_integral(&y, 0.5, 1.0).unwrap(),
            max_relative = 1e-13
        );
    }
}
