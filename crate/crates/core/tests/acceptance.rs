//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{enumerate_qp, projection_grid_oracle, random_consistent_qp, random_qp};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbundle::problems::catalog::{self, Instance};
use sbundle::problems::reference::min_l1_violation_2d;
use sbundle::problems::{build, project_parabola, reference_solution, Variant, INSTANCE_NAMES};
use sbundle::qp::{classify_penalty_solution, kkt_residual, solve_penalty, solve_standard, QpSettings, QpStatus};
use sbundle::solver::{Phase, SeriousStepAudit, StepOutcome};
use sbundle::{solve, SolveReport, SolveStatus, SolverConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn timed_solve(inst: &Instance, x0: &DVector<f64>, cfg: &SolverConfig) -> (SolveReport, Duration) {
    let start = Instant::now();
    let report = solve(&inst.spec, x0, cfg).unwrap_or_else(|e| panic!("{}: {e}", inst.spec.name()));
    (report, start.elapsed())
}

fn monotone() -> SolverConfig {
    let mut cfg = SolverConfig::default();
    cfg.alpha_decrease.enabled = false;
    cfg
}

/// Shared by the example criteria: convergence, iteration cap, objective and runtime.
fn example_check(variant: Variant, max_iter: usize) -> (Verdict, SolveReport) {
    let inst = catalog::example(variant).unwrap();
    let cfg = SolverConfig::default();
    let (r, elapsed) = timed_solve(&inst, &inst.x0, &cfg);
    let (_, reference) = reference_solution(variant, 401);
    let obj_err = (r.final_objective - reference).abs();
    let converged = r.status == SolveStatus::ConvergedKkt && r.final_step_norm <= 1e-8;
    let pass = converged
        && r.iterations <= max_iter
        && obj_err <= 1e-4 * (1.0 + reference.abs())
        && elapsed < Duration::from_secs(1);
    let detail = format!(
        "status={} ||d||={:.2e} iterations={} (cap {max_iter}) objective={:.10} reference={:.10} err={:.1e} time={:.0?}",
        r.status.as_str(),
        r.final_step_norm,
        r.iterations,
        r.final_objective,
        reference,
        obj_err,
        elapsed
    );
    (verdict(pass, detail), r)
}

fn example1_reproduction() -> Verdict {
    example_check(Variant::Ex1, 10).0
}

fn example2_reproduction() -> Verdict {
    let (mut v, r) = example_check(Variant::Ex2, 15);
    let near_kink = r.final_x[2].abs() <= 1e-4;
    v.pass &= near_kink;
    v.detail.push_str(&format!(" |x3|={:.1e}", r.final_x[2].abs()));
    v
}

fn synthetic_two_stage() -> Verdict {
    let inst = catalog::two_stage_synthetic(32, catalog::SYNTHETIC_SEED, false).unwrap();
    let cfg = SolverConfig {
        eps: 1e-6,
        ..SolverConfig::default()
    };
    let (r, elapsed) = timed_solve(&inst, &inst.x0, &cfg);
    let pass = r.status == SolveStatus::ConvergedKkt
        && r.final_step_norm <= 1e-6
        && r.iterations <= 500
        && r.kkt.stationarity <= 1e-5
        && elapsed < Duration::from_secs(30);
    verdict(
        pass,
        format!(
            "status={} iterations={} ||d||={:.2e} stationarity={:.2e} time={:.0?}",
            r.status.as_str(),
            r.iterations,
            r.final_step_norm,
            r.kkt.stationarity,
            elapsed
        ),
    )
}

/// 20 seeded runs: instance `k mod 8` from a random start in its box.
fn seeded_runs(cfg: &SolverConfig) -> Vec<(String, f64, SolveReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    (0..20)
        .map(|k| {
            let name = INSTANCE_NAMES[k % INSTANCE_NAMES.len()];
            let inst = match name {
                "two_stage_synthetic" | "two_stage_synthetic_constrained" => {
                    catalog::two_stage_synthetic(8, k as u64, name.ends_with("constrained")).unwrap()
                }
                _ => build(name).unwrap(),
            };
            let (lo, hi) = (inst.spec.lower().clone(), inst.spec.upper().clone());
            let x0 = DVector::from_fn(inst.spec.n(), |i, _| rng.gen_range(lo[i]..=hi[i]));
            let witness = inst.spec.witness().unwrap().constant;
            let (r, _) = timed_solve(&inst, &x0, cfg);
            (name.to_string(), witness, r)
        })
        .collect()
}

fn finite_rejections() -> Verdict {
    let mut violations = Vec::new();
    let mut max_rejected = 0;
    for (name, witness, r) in seeded_runs(&monotone()) {
        max_rejected = max_rejected.max(r.rejected_steps);
        if r.rejected_steps > 50 {
            violations.push(format!("{name}: {} rejections", r.rejected_steps));
        }
        if let Some(first) = r.trace.iter().position(|t| t.alpha > 2.0 * witness) {
            if let Some(t) = r.trace[first + 1..].iter().find(|t| t.outcome == StepOutcome::Rejected) {
                violations.push(format!(
                    "{name}: rejection at iter {} after alpha > 2C at {first}",
                    t.iter
                ));
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!("20 runs (monotone alpha), max rejections {max_rejected}, violations {violations:?}"),
    )
}

/// Every run the suite performs on the built-in instances, in both alpha modes.
fn all_audits() -> Vec<(String, Vec<SeriousStepAudit>, f64, bool)> {
    let mut out = Vec::new();
    for cfg in [SolverConfig::default(), monotone()] {
        let mono = !cfg.alpha_decrease.enabled;
        for name in INSTANCE_NAMES {
            let inst = build(name).unwrap();
            let (r, _) = timed_solve(&inst, &inst.x0, &cfg);
            out.push((name.to_string(), tail_audits(&r), cfg.alpha0, mono));
            out.push((format!("{name}/all"), r.audits, cfg.alpha0, mono));
        }
        for (name, _, r) in seeded_runs(&cfg) {
            out.push((format!("{name}/seeded"), r.audits.clone(), cfg.alpha0, mono));
        }
    }
    out
}

/// Serious steps after the last rejected step.
fn tail_audits(r: &SolveReport) -> Vec<SeriousStepAudit> {
    let last_reject = r.trace.iter().rposition(|t| t.outcome == StepOutcome::Rejected);
    r.audits
        .iter()
        .filter(|a| last_reject.is_none_or(|k| a.iter > k))
        .cloned()
        .collect()
}

fn line_search_inequalities() -> Verdict {
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for (_, audits, _, _) in all_audits().into_iter().filter(|(n, ..)| n.contains('/')) {
        for a in audits.iter().filter(|a| a.phase == Phase::Normal) {
            let slacks = a.inequality_slacks().unwrap();
            checked += 1;
            for s in slacks {
                worst = worst.min(s);
                if s < -1e-12 {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0 && checked > 0,
        format!("{checked} accepted normal-phase line searches, {violations} violations, min slack {worst:.2e}"),
    )
}

fn merit_decrease() -> Verdict {
    let runs = all_audits();
    let mut strict = 0;
    let mut strict_fail = Vec::new();
    let mut tail = 0;
    let mut tail_fail = Vec::new();
    for (name, audits, alpha0, mono) in &runs {
        if name.contains('/') {
            for a in audits {
                strict += 1;
                if a.merit_drop() <= 0.0 {
                    strict_fail.push(format!("{name}@{}", a.iter));
                }
            }
        } else if *mono {
            // Tail bound with the run's smallest accepted β; α_k ≥ α₀ holds
            // when α never decreases.
            let Some(beta_obs) = audits.iter().map(|a| a.beta).reduce(f64::min) else {
                continue;
            };
            for a in audits {
                tail += 1;
                if a.merit_drop() <= a.required_drop(*alpha0, beta_obs) {
                    tail_fail.push(format!("{name}@{}", a.iter));
                }
            }
        }
    }
    verdict(
        strict_fail.is_empty() && tail_fail.is_empty(),
        format!(
            "{strict} serious steps strictly decreasing except {strict_fail:?}; {tail} tail steps above the bound except {tail_fail:?}"
        ),
    )
}

fn penalty_multipliers() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = QpSettings::default();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=3);
        let pi = rng.gen_range(0.5..20.0);
        let sub = random_qp(&mut rng, n, m).with_penalty(pi);
        let sol = solve_penalty(&sub, &settings).unwrap();
        let class = classify_penalty_solution(&sub, &sol, settings.active_tol);
        for &j in &class.inactive {
            let err = (sol.lambda[j] - f64::from(class.signs[j]) * pi).abs();
            worst = worst.max(err);
            if err > 1e-6 {
                violations += 1;
            }
        }
        for &j in &class.active {
            let excess = sol.lambda[j].abs() - pi;
            worst = worst.max(excess);
            if excess > 1e-6 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("200 instances, {violations} violations, worst {worst:.1e}"),
    )
}

fn qp_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let settings = QpSettings::default();
    let (mut d_err, mut obj_err, mut kkt): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut bad_status = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(0..=2);
        let sub = random_consistent_qp(&mut rng, n, m);
        let (d_ref, obj_ref) = enumerate_qp(&sub).expect("consistent by construction");
        let sol = solve_standard(&sub, &settings).unwrap();
        if sol.status != QpStatus::Optimal {
            bad_status += 1;
        }
        d_err = d_err.max((&sol.step - &d_ref).amax());
        obj_err = obj_err.max((sub.objective(&sol.step) - obj_ref).abs());
        kkt = kkt.max(kkt_residual(&sub, &sol));
    }
    verdict(
        bad_status == 0 && d_err <= 1e-3 && obj_err <= 1e-6 && kkt <= 1e-9,
        format!("500 QPs: max |d - d_ref| {d_err:.1e}, max objective gap {obj_err:.1e}, max KKT residual {kkt:.1e}"),
    )
}

fn restoration_behavior() -> Verdict {
    let cfg = SolverConfig::default();
    let inst = build("inconsistent_pair").unwrap();
    let (r, _) = timed_solve(&inst, &inst.x0, &cfg);
    let (c, jac) = inst.spec.evaluate_constraints(&r.final_x).unwrap();
    let lo = inst.spec.lower() - &r.final_x;
    let hi = inst.spec.upper() - &r.final_x;
    let oracle = min_l1_violation_2d(&c, &jac, &lo, &hi, 401);
    let reported = r.restoration_violation.unwrap_or(f64::NAN);
    let infeasible_ok = r.status == SolveStatus::RestorationConvergedInfeasible && (reported - oracle).abs() <= 1e-4;

    let inst = build("circle_restore").unwrap();
    let (rr, _) = timed_solve(&inst, &inst.x0, &cfg);
    let returned = rr.restoration_iterations > 0 && rr.trace.last().is_some_and(|t| t.phase == Phase::Normal);
    let recover_ok = returned && rr.status == SolveStatus::ConvergedKkt && rr.kkt.stationarity <= 1e-5;
    verdict(
        infeasible_ok && recover_ok,
        format!(
            "inconsistent_pair: {} violation {reported:.6} vs oracle {oracle:.6}; circle_restore: {} after {} restoration iterations, stationarity {:.1e}",
            r.status.as_str(),
            rr.status.as_str(),
            rr.restoration_iterations,
            rr.kkt.stationarity
        ),
    )
}

fn oracle_validity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut proj_violations = 0;
    for k in 0..10_000 {
        let variant = if k % 2 == 0 { Variant::Ex1 } else { Variant::Ex2 };
        let x = [
            rng.gen_range(-8.0..8.0),
            rng.gen_range(-8.0..60.0),
            rng.gen_range(-8.0..12.0),
        ];
        let (y, dist_sq) = project_parabola(&x, variant);
        if !variant.is_feasible(&y, 1e-10) || dist_sq > projection_grid_oracle(&x, variant, 400) + 1e-6 {
            proj_violations += 1;
        }
    }
    let mut c2_violations = Vec::new();
    for name in INSTANCE_NAMES {
        let spec = build(name).unwrap().spec;
        let witness = spec.witness().unwrap();
        let mut bad = 0;
        for _ in 0..1000 {
            let x = DVector::from_fn(spec.n(), |i, _| rng.gen_range(spec.lower()[i]..=spec.upper()[i]));
            let xbar = DVector::from_fn(spec.n(), |i, _| rng.gen_range(spec.lower()[i]..=spec.upper()[i]));
            let at_x = spec.evaluate_objective(&x).unwrap().value;
            let at_xbar = spec.evaluate_objective(&xbar).unwrap();
            if witness.slack(&x, at_x, &xbar, &at_xbar) < -1e-9 * (1.0 + at_x.abs()) {
                bad += 1;
            }
        }
        if bad > 0 {
            c2_violations.push(format!("{name}: {bad}"));
        }
    }
    verdict(
        proj_violations == 0 && c2_violations.is_empty(),
        format!(
            "projection: {proj_violations}/10000 violations; upper-C2: 1000 pairs x {} instances, violations {c2_violations:?}",
            INSTANCE_NAMES.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("example 1 reproduction", example1_reproduction),
        ("example 2 reproduction", example2_reproduction),
        ("synthetic two-stage substitute", synthetic_two_stage),
        ("finitely many rejected steps", finite_rejections),
        ("line-search inequalities", line_search_inequalities),
        ("merit decrease on serious steps", merit_decrease),
        ("penalty QP multipliers", penalty_multipliers),
        ("QP oracle equivalence", qp_oracle_equivalence),
        ("restoration behavior", restoration_behavior),
        ("oracle validity", oracle_validity),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {name}: {} ({})",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
