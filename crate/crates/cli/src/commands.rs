use crate::config::{Config, InitChoice};
use crate::error::{CliError, Result};
use crate::run::RunDir;
use crate::svg::{LinePlot, Series};
use fdemulti::analysis::{build_family, member_mesh, solve_member, FamilyMember, FamilyOptions};
use fdemulti::format::fmt_f64;
use fdemulti::hypothesis::{
    check_certificate, derive_envelope, derive_unit_embedding, search_feasible,
    HypothesisCertificate,
};
use fdemulti::nonlinearity::{check_envelope, estimate_lipschitz_constant, NonlinearitySpec};
use fdemulti::quadrature::GridFunction;
use fdemulti::solver::{closed_form_power_solution, picard_solve, EnvelopeSet, Init};
use serde_json::{json, Value};
use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

/// Samples used for the envelope check reported by `check`.
pub const ENVELOPE_SAMPLES: usize = 10_000;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

pub struct Outcome {
    pub exit_code: u8,
    pub status: String,
    pub summary: Value,
}

/// Everything a subcommand needs besides the config. The run directory is
/// opened on first use, so validation failures leave nothing on disk.
pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub command: &'static str,
    pub seed: u64,
    pub quiet: bool,
    pub out_dir: PathBuf,
    pub run: Option<RunDir>,
}

impl Ctx<'_> {
    pub fn run_dir(&mut self) -> Result<&mut RunDir> {
        if self.run.is_none() {
            self.run = Some(RunDir::create(&self.out_dir, self.command, self.seed)?);
        }
        Ok(self.run.as_mut().expect("run directory just created"))
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

pub fn check(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = cfg.g()?;
    let beta = cfg.beta()?;
    let (env, source) = derive_envelope(&g, &cfg.envelope_overrides())
        .map_err(|e| cfg.anchor("hypothesis", None, e))?;
    let point = cfg.certificate_point()?;
    let ranges = match point {
        None => Some(cfg.search_ranges()?),
        Some(_) => None,
    };
    let envelope = check_envelope(&g, &env, ENVELOPE_SAMPLES);
    let c_lip_estimate = match source {
        fdemulti::hypothesis::LipschitzSource::Estimated => env.c_lip,
        fdemulti::hypothesis::LipschitzSource::UserSupplied => {
            estimate_lipschitz_constant(&g, env.delta1, fdemulti::hypothesis::LIPSCHITZ_PAIRS)?
        }
    };

    if let Err(e) = env.validate(beta) {
        return match e {
            fdemulti::Error::InfeasibleExponent { .. } => {
                let summary = json!({
                    "verdict": "infeasible",
                    "reason": e.to_string(),
                    "envelope": envelope,
                    "lipschitz_source": source,
                    "c_lip_estimate": c_lip_estimate,
                });
                ctx.run_dir()?.write_json("report.json", &summary)?;
                ctx.say(format!("check: infeasible ({e})"));
                Ok(Outcome {
                    exit_code: EXIT_INFEASIBLE,
                    status: "infeasible".into(),
                    summary,
                })
            }
            other => Err(cfg.anchor("hypothesis", None, other)),
        };
    }

    let (cert, search) = match (point, ranges) {
        (Some((y1, y2, t)), _) => {
            let cert = HypothesisCertificate::new(beta, env, y1, y2, t)
                .map_err(|e| cfg.anchor("hypothesis", Some("t"), e))?;
            (cert, Value::Null)
        }
        (None, Some(ranges)) => {
            let out = search_feasible(&env, beta, &ranges, ctx.seed)
                .map_err(|e| cfg.anchor("hypothesis", None, e))?;
            let info = json!({
                "ranges": ranges,
                "seed": ctx.seed,
                "evaluated": out.evaluated,
                "feasible": out.feasible,
                "evidence": "grid plus seeded local refinement",
            });
            (out.certificate, info)
        }
        (None, None) => unreachable!("ranges are read whenever no point is pinned"),
    };
    let report = check_certificate(&cert);
    let embedding = derive_unit_embedding(&cert);
    let pass = report.pass && envelope.pass;
    let status = if pass { "feasible" } else { "infeasible" };
    let summary = json!({
        "verdict": status,
        "binding": report.binding,
        "binding_tag": report.binding_tag,
        "certificate": cert,
        "conditions": report.conditions,
        "unit_embedding": embedding,
        "envelope": envelope,
        "lipschitz_source": source,
        "c_lip_estimate": c_lip_estimate,
        "search": search,
    });
    let run = ctx.run_dir()?;
    run.write_str("certificate.txt", &cert.to_key_value())?;
    run.write_json("report.json", &summary)?;
    if pass {
        ctx.say(format!(
            "check: certificate passes, k = {}",
            fmt_f64(cert.k)
        ));
    } else if !report.pass {
        ctx.say(format!(
            "check: infeasible, binding {} ({})",
            report.binding, report.binding_tag
        ));
    } else {
        ctx.say("check: infeasible, g violates the envelope bounds");
    }
    let exit_code = if pass { EXIT_OK } else { EXIT_INFEASIBLE };
    Ok(Outcome {
        exit_code,
        status: status.into(),
        summary,
    })
}

fn family_options(cfg: &Config) -> Result<FamilyOptions> {
    let mut opts = FamilyOptions::new(cfg.mesh_n()?, cfg.tol()?, cfg.convention()?);
    opts.grading = cfg.grading()?;
    opts.max_iter = cfg.max_iter();
    opts.check_nodes = cfg.check_nodes()?;
    if let InitChoice::LowerEnvelope { y1, eps1 } = cfg.init()? {
        opts.init_y1 = y1;
        opts.init_eps1 = eps1;
    }
    Ok(opts)
}

fn member_summary(m: &FamilyMember) -> Value {
    json!({
        "t": m.t,
        "converged": m.converged(),
        "iterations": m.trace.iterations(),
        "fixed_point_residual": m.trace.residual,
        "residual": m.residual,
        "y_at_1": m.y.last(),
        "x_at_1": m.x.last(),
        "left_sup": m.left_sup,
    })
}

fn points(f: &GridFunction) -> Vec<(f64, f64)> {
    f.nodes()
        .iter()
        .copied()
        .zip(f.values().iter().copied())
        .collect()
}

pub fn solve(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = cfg.g()?;
    let beta = cfg.beta()?;
    let t = cfg.t()?;
    let opts = family_options(cfg)?;
    let init = match cfg.init()? {
        InitChoice::LowerEnvelope { y1, eps1 } => Init::LowerEnvelope(EnvelopeSet {
            y1,
            y2: y1,
            eps1,
            eps2: eps1,
            t,
        }),
        InitChoice::Zero => Init::Zero,
        InitChoice::Custom(path) => {
            let anchor = |msg: String| cfg.error("solver", Some("init_csv"), msg);
            let file = File::open(&path)
                .map_err(|e| anchor(format!("cannot open {}: {e}", path.display())))?;
            let given = GridFunction::read_csv(file).map_err(|e| anchor(e.to_string()))?;
            let mesh = Arc::new(member_mesh(t, &opts)?);
            let values = mesh
                .nodes()
                .iter()
                .map(|&s| given.value_at(s))
                .collect::<fdemulti::Result<Vec<_>>>()
                .map_err(|e| anchor(format!("initial iterate must cover [{t}, 1]: {e}")))?;
            Init::Custom(GridFunction::new(mesh, values)?)
        }
    };
    let member = solve_member(&g, beta, t, &opts, init)?;

    let plot = LinePlot {
        title: format!("Solution for T = {t}, beta = {beta}"),
        x_label: "t".into(),
        y_label: "value".into(),
        series: vec![
            Series {
                label: "y".into(),
                points: points(&member.y),
            },
            Series {
                label: format!("x ({})", opts.convention),
                points: points(&member.x),
            },
        ],
    };
    let summary = json!({
        "beta": beta,
        "t": t,
        "mesh_n": opts.mesh_n,
        "grading": opts.grading,
        "tol": opts.tol,
        "convention": opts.convention,
        "member": member_summary(&member),
    });
    let run = ctx.run_dir()?;
    run.write_with("solution.csv", |w| member.write_csv(w))?;
    run.write_with("trace.csv", |w| member.trace.write_csv(w))?;
    run.write_str("solution.svg", &plot.render())?;
    run.write_json("report.json", &summary)?;

    let converged = member.converged();
    ctx.say(format!(
        "solve: {} after {} iterations, y(1) = {}, x(1) = {}",
        if converged {
            "converged"
        } else {
            "NOT converged"
        },
        member.trace.iterations(),
        fmt_f64(member.y.last()),
        fmt_f64(member.x.last()),
    ));
    let (exit_code, status) = if converged {
        (EXIT_OK, "converged")
    } else {
        (EXIT_NOT_CONVERGED, "not-converged")
    };
    Ok(Outcome {
        exit_code,
        status: status.into(),
        summary,
    })
}

pub fn family(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = cfg.g()?;
    let beta = cfg.beta()?;
    let ts = cfg.family_t()?;
    let opts = family_options(cfg)?;
    if !matches!(cfg.init()?, InitChoice::LowerEnvelope { .. }) {
        return Err(cfg.error(
            "solver",
            Some("init"),
            "family members always start from the lower envelope",
        ));
    }
    let fam = build_family(&g, beta, &ts, opts).map_err(|e| cfg.anchor("family", Some("t"), e))?;

    let run = ctx.run_dir()?;
    let mut members = Vec::new();
    for (i, m) in fam.members.iter().enumerate() {
        let name = format!("member-{:02}.csv", i + 1);
        run.write_with(&name, |w| m.write_csv(w))?;
        let mut s = member_summary(m);
        s["file"] = json!(name);
        members.push(s);
    }
    let plot = LinePlot {
        title: format!("Solution family, beta = {beta}"),
        x_label: "t".into(),
        y_label: format!("x ({})", opts.convention),
        series: fam
            .members
            .iter()
            .map(|m| Series {
                label: format!("T = {}", m.t),
                points: points(&m.x),
            })
            .collect(),
    };
    run.write_str("family.svg", &plot.render())?;

    let complete = fam.is_complete();
    let distinct = fam.all_distinct();
    let summary = json!({
        "beta": beta,
        "alpha": fam.alpha,
        "options": fam.options,
        "members": members,
        "failures": fam.failures,
        "incomplete": fam.incomplete(),
        "distances": fam.distances,
        "all_distinct": distinct,
        "distinctness_threshold": 10.0 * opts.tol,
        "multiplicity_witness": fam.is_multiplicity_witness(),
    });
    run.write_json("family.json", &summary)?;

    let ok = complete && distinct != Some(false);
    if ok {
        ctx.say(format!(
            "family: {} members converged{}",
            fam.members.len(),
            if distinct == Some(true) {
                ", pairwise distinct"
            } else {
                ""
            }
        ));
    } else if !complete {
        ctx.say(format!(
            "family: incomplete, offending T = {:?}",
            fam.incomplete()
        ));
    } else {
        ctx.say("family: members not distinct beyond 10 tol");
    }
    let status = if !complete {
        "incomplete"
    } else if distinct == Some(false) {
        "not-distinct"
    } else {
        "complete"
    };
    let exit_code = if ok { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok(Outcome {
        exit_code,
        status: status.into(),
        summary,
    })
}

pub fn oracle(ctx: &mut Ctx) -> Result<Outcome> {
    let cfg = ctx.cfg;
    let g = cfg.g()?;
    let (c, d) = match g {
        NonlinearitySpec::PowerLaw {
            coefficient,
            exponent,
        } => (coefficient, exponent),
        NonlinearitySpec::Table { .. } => {
            return Err(cfg.error("problem.g", Some("kind"), "oracle requires power-law g"));
        }
    };
    let beta = cfg.beta()?;
    let t = cfg.t()?;
    let exact = closed_form_power_solution(c, d, beta, t)
        .map_err(|e| cfg.anchor("problem.g", Some("exponent"), e))?;
    let ladder = cfg.ladder()?;
    let tol = cfg.tol()?;
    let grading = cfg.grading()?;
    let max_iter = cfg.max_iter();
    let (y1, eps1) = match cfg.init()? {
        InitChoice::LowerEnvelope { y1, eps1 } => (y1, eps1),
        _ => {
            return Err(cfg.error(
                "solver",
                Some("init"),
                "oracle runs start from the lower envelope",
            ))
        }
    };
    let init = Init::LowerEnvelope(EnvelopeSet {
        y1,
        y2: y1,
        eps1,
        eps2: eps1,
        t,
    });

    let mut rows = Vec::new();
    let mut finest = None;
    for &n in &ladder {
        let mesh = Arc::new(fdemulti::Mesh::graded(t, 1.0, n, grading)?);
        let (y, trace) = picard_solve(&g, beta, t, mesh, init.clone(), tol, max_iter)?;
        let err = y
            .nodes()
            .iter()
            .zip(y.values())
            .map(|(&s, &v)| (v - exact.value(s)).abs())
            .fold(0.0, f64::max);
        rows.push((n, err, trace.iterations(), trace.converged));
        finest = Some(y);
    }
    let orders: Vec<Option<f64>> = std::iter::once(None)
        .chain(rows.windows(2).map(|w| {
            let ratio = (w[1].0 as f64) / (w[0].0 as f64);
            Some((w[0].1 / w[1].1).ln() / ratio.ln())
        }))
        .collect();

    let run = ctx.run_dir()?;
    run.write_with("oracle.csv", |w| {
        writeln!(w, "n,sup_error,order,iterations,converged")?;
        for ((n, err, it, conv), order) in rows.iter().zip(&orders) {
            let order = order.map(fmt_f64).unwrap_or_default();
            writeln!(w, "{n},{},{order},{it},{conv}", fmt_f64(*err))?;
        }
        Ok(())
    })?;
    let finest = finest.expect("ladder is nonempty");
    let plot = LinePlot {
        title: format!(
            "Picard solution vs closed form, n = {}",
            ladder[ladder.len() - 1]
        ),
        x_label: "t".into(),
        y_label: "y".into(),
        series: vec![
            Series {
                label: "numerical".into(),
                points: points(&finest),
            },
            Series {
                label: "closed form".into(),
                points: finest
                    .nodes()
                    .iter()
                    .map(|&s| (s, exact.value(s)))
                    .collect(),
            },
        ],
    };
    run.write_str("oracle.svg", &plot.render())?;

    let all_converged = rows.iter().all(|r| r.3);
    let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let summary = json!({
        "closed_form": exact,
        "beta": beta,
        "t": t,
        "ladder": rows.iter().zip(&orders).map(|((n, err, it, conv), order)| json!({
            "n": n, "sup_error": err, "order": order, "iterations": it, "converged": conv,
        })).collect::<Vec<_>>(),
        "errors_decreasing": decreasing,
    });
    run.write_json("oracle.json", &summary)?;

    for ((n, err, _, conv), order) in rows.iter().zip(&orders) {
        let order = order.map(|o| format!(", order {o:.3}")).unwrap_or_default();
        ctx.say(format!(
            "oracle: n = {n}, sup-error {}{order}{}",
            fmt_f64(*err),
            if *conv { "" } else { " (NOT converged)" }
        ));
    }
    let (exit_code, status) = if all_converged {
        (EXIT_OK, "converged")
    } else {
        (EXIT_NOT_CONVERGED, "not-converged")
    };
    Ok(Outcome {
        exit_code,
        status: status.into(),
        summary,
    })
}

/// Maps an error raised after the run directory exists to the manifest status.
pub fn error_status(e: &CliError) -> &'static str {
    match e.exit_code() {
        1 => "config-error",
        2 => "infeasible",
        _ => "numerical-failure",
    }
}
