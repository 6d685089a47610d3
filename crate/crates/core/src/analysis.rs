//! From `y_T` back to the state `x_T`, residuals against the fractional
//! equation itself, and families of solutions indexed by `T`.

use crate::error::{config, domain, Error, Result};
use crate::format::fmt_f64;
use crate::nonlinearity::NonlinearitySpec;
use crate::quadrature::{caputo_derivative, rl_integral_grid, AbelWeights, GridFunction, Mesh};
use crate::solver::{picard_solve, EnvelopeSet, Init, IterationTrace};
use crate::specfun::gamma_fn;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

/// How the supplied `g` relates to the state `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `x = J`, the Abel integral fed to `g`.
    RawArgument,
    /// `x = J / Γ(α)`; `g` has absorbed the `1/Γ(α)` factor.
    DividedByGamma,
}

impl Convention {
    /// There is no default: a missing flag is a configuration error.
    pub fn parse(flag: Option<&str>) -> Result<Self> {
        match flag {
            None => {
                config("reconstruction convention must be given (raw-argument or divided-by-gamma)")
            }
            Some(s) => s.parse(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RawArgument => "raw-argument",
            Self::DividedByGamma => "divided-by-gamma",
        }
    }

    /// The right-hand side `g̃` with `x^(α) = g̃(x)` for the reconstructed `x`,
    /// given the `g` of the integral equation.
    pub fn fde_nonlinearity(&self, g: &NonlinearitySpec, alpha: f64) -> Result<NonlinearitySpec> {
        match self {
            // D^α J = Γ(α) y = Γ(α) g(J)
            Self::RawArgument => g.scale_values(gamma_fn(alpha)?),
            Self::DividedByGamma => g.release_gamma(alpha),
        }
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-argument" => Ok(Self::RawArgument),
            "divided-by-gamma" => Ok(Self::DividedByGamma),
            other => config(format!(
                "unknown convention {other:?} (expected raw-argument or divided-by-gamma)"
            )),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("order alpha must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

/// `J(t) = ∫_0^t y(s)(t − s)^(α−1) ds` at every node, divided by `Γ(α)`
/// under [`Convention::DividedByGamma`].
pub fn reconstruct_x(y: &GridFunction, alpha: f64, convention: Convention) -> Result<GridFunction> {
    check_alpha(alpha)?;
    match convention {
        Convention::DividedByGamma => rl_integral_grid(y, alpha),
        Convention::RawArgument => AbelWeights::new(y.mesh().clone(), 1.0 - alpha)?.apply_grid(y),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `sup |y − g̃(I^α y)|` over all nodes, with `y = g̃(x)`.
    pub sup_residual: f64,
    /// Root mean square of `x^(α) − g̃(x)` over the evaluation nodes.
    pub l2_residual: f64,
    /// `max |x^(α) − g̃(x)|` over the evaluation nodes.
    pub caputo_sup_residual: f64,
    pub eval_nodes: usize,
    /// Left end of the evaluated range; the cell right of `T` is skipped.
    pub first_eval_t: f64,
    /// Node where the Caputo residual peaks.
    pub worst_t: f64,
}

/// Checks `x^(α) = g̃(x)` with the L1 Caputo derivative at up to
/// `check_nodes` mesh nodes right of the first cell after `t_start`.
pub fn verify_fde_residual(
    x: &GridFunction,
    g_raw: &NonlinearitySpec,
    alpha: f64,
    t_start: f64,
    check_nodes: usize,
) -> Result<ResidualReport> {
    check_alpha(alpha)?;
    if check_nodes == 0 {
        return config("at least one residual check node is needed");
    }
    if !(t_start >= 0.0) {
        return domain(format!(
            "residual nodes must satisfy t > 0, got start {t_start}"
        ));
    }
    let nodes = x.nodes();
    let first = nodes.iter().position(|&t| t > t_start).map(|i| i + 1);
    let first = match first {
        Some(i) if i < nodes.len() => i,
        _ => {
            return domain(format!(
                "no mesh node right of the boundary layer at T = {t_start}"
            ))
        }
    };
    let available = nodes.len() - first;
    let count = check_nodes.min(available);
    let picks: Vec<usize> = if count == 1 {
        vec![nodes.len() - 1]
    } else {
        (0..count)
            .map(|j| first + (j * (available - 1)) / (count - 1))
            .collect()
    };

    let top = g_raw.domain_max();
    let eval_g = |v: f64, i: usize| -> Result<f64> {
        let v = if v < 0.0 && v > -1e-300 { 0.0 } else { v };
        if !(v >= 0.0 && v <= top) {
            return Err(Error::Range {
                node: i,
                t: nodes[i],
                value: v,
            });
        }
        g_raw.eval(v)
    };

    let mut sq = 0.0;
    let mut sup: f64 = 0.0;
    let mut worst_t = nodes[picks[0]];
    for &i in &picks {
        let r = caputo_derivative(x, alpha, nodes[i])? - eval_g(x.values()[i], i)?;
        sq += r * r;
        if r.abs() > sup {
            sup = r.abs();
            worst_t = nodes[i];
        }
    }

    let y = x
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| eval_g(v, i))
        .collect::<Result<Vec<_>>>()?;
    let y = GridFunction::new(x.mesh().clone(), y)?;
    let z = rl_integral_grid(&y, alpha)?;
    let mut y_sup: f64 = 0.0;
    for (i, (&yi, &zi)) in y.values().iter().zip(z.values()).enumerate() {
        y_sup = y_sup.max((yi - eval_g(zi, i)?).abs());
    }

    Ok(ResidualReport {
        sup_residual: y_sup,
        l2_residual: (sq / picks.len() as f64).sqrt(),
        caputo_sup_residual: sup,
        eval_nodes: picks.len(),
        first_eval_t: nodes[first],
        worst_t,
    })
}

/// `sup |a − b|` over the union of both node sets, comparing piecewise-linear
/// interpolants on the common interval.
pub fn interpolated_distance(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let lo = a.mesh().start().max(b.mesh().start());
    let hi = a.mesh().end().min(b.mesh().end());
    let mut d: f64 = 0.0;
    for (p, q) in [(a, b), (b, a)] {
        for (&t, &v) in p.nodes().iter().zip(p.values()) {
            if t >= lo && t <= hi {
                d = d.max((v - q.value_at(t)?).abs());
            }
        }
    }
    Ok(d)
}

/// Knobs of [`build_family`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyOptions {
    /// Cells of the graded mesh on `[T, 1]`.
    pub mesh_n: usize,
    pub grading: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub convention: Convention,
    pub check_nodes: usize,
    /// Lower envelope `Y₁(t − T)^(1+ε₁)` used as the first iterate.
    pub init_y1: f64,
    pub init_eps1: f64,
}

impl FamilyOptions {
    pub fn new(mesh_n: usize, tol: f64, convention: Convention) -> Self {
        Self {
            mesh_n,
            grading: 2.0,
            tol,
            max_iter: 10_000,
            convention,
            check_nodes: 200,
            init_y1: 1.0,
            init_eps1: 0.5,
        }
    }
}

/// Uniform cells on `[0, T]` in proportion to the graded cells on `[T, 1]`.
pub fn left_cells(t: f64, mesh_n: usize) -> usize {
    ((mesh_n as f64 * t).round() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub t: f64,
    /// On `[0, 1]`, zero on `[0, T]`.
    pub y: GridFunction,
    pub x: GridFunction,
    pub residual: ResidualReport,
    pub trace: IterationTrace,
    /// `max(|y|, |x|)` over nodes in `[0, T]`.
    pub left_sup: f64,
}

impl FamilyMember {
    pub fn converged(&self) -> bool {
        self.trace.converged
    }

    /// CSV `t,y,x`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,y,x")?;
        for ((t, y), x) in self
            .y
            .nodes()
            .iter()
            .zip(self.y.values())
            .zip(self.x.values())
        {
            writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(*y), fmt_f64(*x))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDistance {
    pub t_a: f64,
    pub t_b: f64,
    /// Sup distance of the two `y` curves on `[0, 1]`.
    pub sup: f64,
    pub at_one: f64,
    pub distinct: bool,
}

/// A member that could not be produced at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberFailure {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SolutionFamily {
    pub alpha: f64,
    pub beta: f64,
    pub options: FamilyOptions,
    /// Sorted by `T`; includes non-converged members.
    pub members: Vec<FamilyMember>,
    pub failures: Vec<MemberFailure>,
    /// Pairs of members, empty for fewer than two.
    pub distances: Vec<PairDistance>,
}

impl SolutionFamily {
    /// `T` values that did not converge or failed outright.
    pub fn incomplete(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self
            .members
            .iter()
            .filter(|m| !m.converged())
            .map(|m| m.t)
            .chain(self.failures.iter().map(|f| f.t))
            .collect();
        ts.sort_by(f64::total_cmp);
        ts
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.members.iter().all(FamilyMember::converged)
    }

    /// `None` when there are fewer than two members to compare.
    pub fn all_distinct(&self) -> Option<bool> {
        if self.distances.is_empty() {
            None
        } else {
            Some(self.distances.iter().all(|d| d.distinct))
        }
    }

    /// Complete, at least two members, every pair separated by more than
    /// `10 · tol`, every fixed-point residual within `tol`.
    pub fn is_multiplicity_witness(&self) -> bool {
        self.is_complete()
            && self.all_distinct() == Some(true)
            && self
                .members
                .iter()
                .all(|m| m.trace.residual <= self.options.tol)
    }
}

/// One solve per `T`, run concurrently on the current rayon pool.
pub fn build_family(
    g: &NonlinearitySpec,
    beta: f64,
    t_list: &[f64],
    opts: FamilyOptions,
) -> Result<SolutionFamily> {
    if !(0.0..1.0).contains(&beta) {
        return domain(format!("beta must lie in [0, 1), got {beta}"));
    }
    if t_list.is_empty() {
        return config("family needs at least one T");
    }
    if let Some(&t) = t_list.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
        return config(format!("family T values must lie in (0, 1), got {t}"));
    }
    if let Some(w) = t_list.windows(2).find(|w| !(w[0] < w[1])) {
        return config(format!(
            "family T values must be strictly increasing ({} then {})",
            w[0], w[1]
        ));
    }
    if !(opts.tol > 0.0) {
        return config(format!("tolerance must be positive, got {}", opts.tol));
    }
    let alpha = 1.0 - beta;
    let g_raw = opts.convention.fde_nonlinearity(g, alpha)?;

    let results: Vec<Result<FamilyMember>> = t_list
        .par_iter()
        .map(|&t| solve_member_with(g, &g_raw, beta, t, &opts, default_init(t, &opts)))
        .collect();

    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (&t, r) in t_list.iter().zip(results) {
        match r {
            Ok(m) => members.push(m),
            Err(e @ (Error::Config(_) | Error::Domain(_))) => return Err(e),
            Err(e) => failures.push(MemberFailure {
                t,
                reason: e.to_string(),
            }),
        }
    }

    let mut distances = Vec::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let (a, b) = (&members[i], &members[j]);
            let sup = interpolated_distance(&a.y, &b.y)?;
            distances.push(PairDistance {
                t_a: a.t,
                t_b: b.t,
                sup,
                at_one: (a.y.last() - b.y.last()).abs(),
                distinct: sup > 10.0 * opts.tol,
            });
        }
    }

    Ok(SolutionFamily {
        alpha,
        beta,
        options: opts,
        members,
        failures,
        distances,
    })
}

/// The graded mesh on `[T, 1]` that a member with these options is solved on.
pub fn member_mesh(t: f64, opts: &FamilyOptions) -> Result<Mesh> {
    Mesh::graded(t, 1.0, opts.mesh_n, opts.grading)
}

/// The first iterate [`build_family`] uses for a given `T`.
pub fn default_init(t: f64, opts: &FamilyOptions) -> Init {
    Init::LowerEnvelope(EnvelopeSet {
        y1: opts.init_y1,
        y2: opts.init_y1,
        eps1: opts.init_eps1,
        eps2: opts.init_eps1,
        t,
    })
}

/// Solves on [`member_mesh`], extends `y` by zero to `[0, T]`, reconstructs
/// `x` and checks the fractional equation.
pub fn solve_member(
    g: &NonlinearitySpec,
    beta: f64,
    t: f64,
    opts: &FamilyOptions,
    init: Init,
) -> Result<FamilyMember> {
    let g_raw = opts.convention.fde_nonlinearity(g, 1.0 - beta)?;
    solve_member_with(g, &g_raw, beta, t, opts, init)
}

fn solve_member_with(
    g: &NonlinearitySpec,
    g_raw: &NonlinearitySpec,
    beta: f64,
    t: f64,
    opts: &FamilyOptions,
    init: Init,
) -> Result<FamilyMember> {
    let alpha = 1.0 - beta;
    let right = Arc::new(member_mesh(t, opts)?);
    let (y_right, trace) = picard_solve(g, beta, t, right, init, opts.tol, opts.max_iter)?;

    let n_left = left_cells(t, opts.mesh_n);
    let full = Arc::new(Mesh::split_graded(
        t,
        1.0,
        n_left,
        opts.mesh_n,
        opts.grading,
    )?);
    let mut values = vec![0.0; n_left];
    values.extend_from_slice(y_right.values());
    let y = GridFunction::new(full, values)?;
    let x = reconstruct_x(&y, alpha, opts.convention)?;
    let residual = verify_fde_residual(&x, g_raw, alpha, t, opts.check_nodes)?;
    let left_sup = y.values()[..=n_left]
        .iter()
        .chain(&x.values()[..=n_left])
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(FamilyMember {
        t,
        y,
        x,
        residual,
        trace,
        left_sup,
    })
}
