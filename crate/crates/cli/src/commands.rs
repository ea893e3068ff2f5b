use polyharm::format::{fmt17, json_f64};
use polyharm::operator::{harmonic_extension_with_residual, refined_first_eigenvalue};
use polyharm::sobolev::rayleigh_quotient_u0;
use polyharm::testfunctions::Extrapolation;
use polyharm::variational::condition_report;
use polyharm::{
    alpha_nk, assemble, build_geometry, coercivity_check, continuation, critical_exponent,
    discretization::write_field_csv, first_eigenpair, harmonic_extension, inv_k0, k0, limit_study,
    minimize, AssembledOperator, BoundaryData, ConstraintSpec, ContinuationResult, Error,
    MinimizeOptions, MinimizeResult, OperatorSpec, TestFunctionSpec,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{self, Report};
use crate::{CliError, Command};

pub fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::Sobolev => sobolev(cfg),
        Command::Rayleigh => rayleigh(cfg),
        Command::Extend => extend(cfg),
        Command::Eigen => eigen(cfg),
        Command::Minimize => minimize_cmd(cfg),
        Command::Continue => continue_cmd(cfg),
        Command::Testfn => testfn(cfg),
        Command::Check => check(cfg),
    }
}

fn operator_spec(cfg: &RunConfig) -> OperatorSpec {
    OperatorSpec {
        params: cfg.params(),
        lower_order: cfg.operator.lower_order.clone(),
        weight_f: cfg.operator.f.clone(),
    }
}

fn build_operator(cfg: &RunConfig) -> Result<AssembledOperator, CliError> {
    let g = &cfg.geometry;
    let geom = build_geometry(g.kind, g.n, g.radius, g.node_count)?;
    Ok(assemble(&operator_spec(cfg), &geom)?)
}

fn boundary(cfg: &RunConfig) -> Result<BoundaryData, CliError> {
    Ok(BoundaryData::new(cfg.constraint.boundary.clone())?)
}

fn options(cfg: &RunConfig) -> MinimizeOptions {
    MinimizeOptions {
        el_tol: cfg.tolerances.el_tol,
        max_iterations: cfg.tolerances.max_iterations,
        ..MinimizeOptions::default()
    }
}

fn sobolev(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.params();
    let two_sharp = critical_exponent(p);
    let mut r = Report::default();
    r.add("n", p.n())
        .add("k", p.k())
        .add("two_sharp", two_sharp)
        .add("alpha", alpha_nk(p))
        .add("inv_k0", fmt17(inv_k0(p)))
        .add("k0", fmt17(k0(p)));
    r.print();
    output::json(
        cfg,
        "sobolev.json",
        &json!({
            "n": p.n(),
            "k": p.k(),
            "two_sharp": two_sharp.to_string(),
            "alpha": alpha_nk(p),
            "inv_k0": inv_k0(p),
            "k0": k0(p),
        }),
    )
}

fn rayleigh(cfg: &RunConfig) -> Result<(), CliError> {
    let p = cfg.params();
    let rc = &cfg.rayleigh;
    let rq = rayleigh_quotient_u0(p, rc.truncation_radius, rc.node_count)?;
    let target = inv_k0(p);
    let gap = (rq - target) / target;
    let mut r = Report::default();
    r.add("rayleigh_quotient", fmt17(rq))
        .add("inv_k0", fmt17(target))
        .add("relative_gap", fmt17(gap));
    r.print();
    output::json(
        cfg,
        "rayleigh.json",
        &json!({
            "rayleigh_quotient": rq,
            "inv_k0": target,
            "relative_gap": gap,
            "truncation_radius": rc.truncation_radius,
            "node_count": rc.node_count,
        }),
    )
}

fn extend(cfg: &RunConfig) -> Result<(), CliError> {
    let op = build_operator(cfg)?;
    let report = coercivity_check(&op)?;
    if !report.coercive {
        let mut r = Report::default();
        r.add("coercivity_lambda", fmt17(report.lambda))
            .add("coercive", report.coercive)
            .add("iterations", report.iterations);
        r.print();
        return Err(Error::NotCoercive(report).into());
    }
    let (h, residual) = harmonic_extension_with_residual(&op, &boundary(cfg)?)?;
    output::csv(cfg, "extension.csv", |buf| {
        Ok(write_field_csv(&h, op.geometry(), buf)?)
    })?;
    let mut r = Report::default();
    r.add("residual", fmt17(residual))
        .add("coercivity_lambda", fmt17(report.lambda));
    r.print();
    output::json(
        cfg,
        "extend.json",
        &json!({ "residual": residual, "coercivity_lambda": report.lambda }),
    )
}

fn eigen(cfg: &RunConfig) -> Result<(), CliError> {
    let op = build_operator(cfg)?;
    let pair = first_eigenpair(&op)?;
    let study = refined_first_eigenvalue(&operator_spec(cfg), op.geometry())?;
    output::csv(cfg, "eigenfunction.csv", |buf| {
        Ok(write_field_csv(&pair.psi1, op.geometry(), buf)?)
    })?;
    let mut r = Report::default();
    r.add("lambda1", fmt17(pair.lambda1))
        .add("residual", fmt17(pair.residual))
        .add("iterations", pair.iterations)
        .add("lambda1_refined", fmt17(study.extrapolated));
    r.print();
    let raw: Vec<Value> = study.raw.iter().map(|&v| json_f64(v)).collect();
    output::json(
        cfg,
        "eigen.json",
        &json!({
            "lambda1": pair.lambda1,
            "residual": pair.residual,
            "iterations": pair.iterations,
            "refinement": {
                "node_counts": study.node_counts,
                "lambda1": raw,
                "extrapolated": study.extrapolated,
            },
        }),
    )
}

/// Assembled operator, eigenpair and base constraint at `cfg.constraint.q`.
fn setup(
    cfg: &RunConfig,
) -> Result<(AssembledOperator, polyharm::EigenPair, ConstraintSpec), CliError> {
    let op = build_operator(cfg)?;
    let psi = first_eigenpair(&op)?;
    let h = harmonic_extension(&op, &boundary(cfg)?)?;
    let spec = ConstraintSpec::new(&op, cfg.constraint.q, cfg.constraint.gamma, h)?;
    Ok((op, psi, spec))
}

fn check_constraint(cfg: &RunConfig, r: &mut MinimizeResult) -> Result<(), CliError> {
    if r.constraint_error > cfg.tolerances.constraint_tol {
        log::warn!(
            "constraint error {:e} above tolerance {:e}",
            r.constraint_error,
            cfg.tolerances.constraint_tol
        );
        r.converged = false;
        return Err(Error::NoConvergence(Box::new(r.clone())).into());
    }
    Ok(())
}

fn write_minimizer(
    cfg: &RunConfig,
    op: &AssembledOperator,
    r: &MinimizeResult,
) -> Result<(), CliError> {
    output::json(cfg, "minimize.json", &r.to_json())?;
    output::csv(cfg, "u.csv", |buf| {
        Ok(write_field_csv(&r.u, op.geometry(), buf)?)
    })?;
    output::csv(cfg, "w.csv", |buf| {
        Ok(write_field_csv(&r.w, op.geometry(), buf)?)
    })?;
    let mut rep = Report::default();
    rep.add("q", fmt17(r.q))
        .add("mu", fmt17(r.mu))
        .add("lambda", fmt17(r.lambda))
        .add("el_residual", fmt17(r.el_residual))
        .add("iterations", r.iterations)
        .add("sign_changes", r.sign_changes)
        .add("converged", r.converged);
    rep.print();
    Ok(())
}

fn minimize_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (op, psi, spec) = setup(cfg)?;
    match minimize(&op, &spec, &psi, &options(cfg)) {
        Ok(mut r) => {
            let checked = check_constraint(cfg, &mut r);
            write_minimizer(cfg, &op, &r)?;
            checked
        }
        Err(Error::NoConvergence(r)) => {
            write_minimizer(cfg, &op, &r)?;
            Err(Error::NoConvergence(r).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn run_continuation(cfg: &RunConfig) -> Result<(AssembledOperator, ContinuationResult), CliError> {
    let (op, psi, spec) = setup(cfg)?;
    let spec = spec.with_q(cfg.constraint.q_schedule[0], &op)?;
    let mut c = continuation(&op, &spec, &psi, &cfg.constraint.q_schedule, &options(cfg))?;
    for r in &mut c.runs {
        check_constraint(cfg, r).map_err(|e| match e {
            CliError::Core(source) => CliError::Core(Error::AtExponent {
                q: r.q,
                source: Box::new(source),
            }),
            e => e,
        })?;
    }
    output::csv(cfg, "continuation.csv", |buf| Ok(c.write_csv(buf)?))?;
    Ok((op, c))
}

fn continue_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, c) = run_continuation(cfg)?;
    let mut r = Report::default();
    r.add("steps", c.records.len())
        .add("mu_limit", fmt17(c.mu_limit_estimate))
        .add("condition_holds", c.condition_holds);
    r.print();
    output::json(
        cfg,
        "continuation.json",
        &json!({
            "steps": c.records.len(),
            "mu_limit": c.mu_limit_estimate,
            "condition_holds": c.condition_holds,
            "runs": c.runs.iter().map(MinimizeResult::to_json).collect::<Vec<_>>(),
        }),
    )
}

fn check(cfg: &RunConfig) -> Result<(), CliError> {
    let (op, c) = run_continuation(cfg)?;
    let rep = condition_report(
        c.mu_limit_estimate,
        cfg.constraint.gamma,
        op.f_max(),
        cfg.params(),
    )?;
    let verdict = if rep.holds { "holds" } else { "fails" };
    let mut r = Report::default();
    r.add("mu_limit", fmt17(c.mu_limit_estimate))
        .add("lhs", fmt17(rep.lhs))
        .add("rhs", fmt17(rep.rhs))
        .add("verdict", verdict);
    r.print();
    output::json(
        cfg,
        "check.json",
        &json!({
            "mu_limit": c.mu_limit_estimate,
            "lhs": rep.lhs,
            "rhs": rep.rhs,
            "holds": rep.holds,
            "verdict": verdict,
        }),
    )
}

fn testfn(cfg: &RunConfig) -> Result<(), CliError> {
    let op = build_operator(cfg)?;
    let t = &cfg.testfn;
    let template = TestFunctionSpec {
        epsilon: t.eps_list[0],
        delta: Some(t.delta),
        cutoff_order: Some(t.cutoff_order),
    };
    let study = limit_study(&t.eps_list, &template, &op, cfg.params())?;
    output::csv(cfg, "testfn.csv", |buf| Ok(study.write_csv(buf)?))?;
    let mut r = Report::default();
    r.add("limit", fmt17(study.limit))
        .add("target", fmt17(study.target))
        .add("relative_gap", fmt17(study.relative_gap()))
        .add(
            "extrapolation",
            match study.extrapolation {
                Extrapolation::None => "none",
                Extrapolation::Series { .. } => "series",
            },
        );
    r.print();
    output::json(cfg, "testfn.json", &study.summary_json())
}
