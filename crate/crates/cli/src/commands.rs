//! One function per subcommand. Each writes its files through the sink and
//! returns the process outcome.

use std::sync::Arc;

use sa_ldp::action::{self, ActionProblem};
use sa_ldp::config::{ExperimentConfig, Functional};
use sa_ldp::estimator;
use sa_ldp::kernel::{self, invariant_measure, CheckStatus};
use sa_ldp::model::SaModel;
use sa_ldp::models;
use sa_ldp::rate::{self, RateEval};
use sa_ldp::schedule::StepSchedule;
use sa_ldp::sim::{self, Path};
use serde_json::json;

use crate::output::{cells, format_f64 as num, numbered, row, Sink};
use crate::Failure;

type Outcome = Result<(), Failure>;

struct Setup {
    cfg: ExperimentConfig,
    model: SaModel,
    schedule: StepSchedule,
}

fn setup(sink: &Sink) -> Result<Setup, Failure> {
    let cfg = sink.config.clone();
    let model = cfg.build_model().map_err(Failure::config)?;
    let schedule = cfg.schedule().map_err(Failure::config)?;
    Ok(Setup { cfg, model, schedule })
}

fn ode(s: &Setup) -> Result<Path, Failure> {
    sim::ode_limit(&s.model, &s.model.x0, s.cfg.horizon, s.cfg.run.ode_dt).map_err(Failure::from_core)
}

fn io(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

pub fn simulate(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let path = sim::simulate_segment(&s.model, &s.schedule, s.cfg.run.n, s.cfg.horizon, s.cfg.seed)
        .map_err(Failure::from_core)?;
    sink.csv("simulate.csv", &path.to_csv()).map_err(io)?;
    Ok(())
}

pub fn ode_cmd(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    sink.csv("ode.csv", &ode(&s)?.to_csv()).map_err(io)?;
    Ok(())
}

pub fn hamiltonian(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let d = s.model.dim;
    let alpha = &s.cfg.run.alpha;
    let mut body = String::new();
    row(&mut body, numbered("x", d).into_iter().chain(numbered("alpha", d)).chain(["H".into()]).chain(numbered("dH", d)));
    for x in &s.cfg.run.x_grid {
        let eval = RateEval::new(&s.model, x).map_err(Failure::from_core)?;
        let (h, grad) = eval.hamiltonian_and_grad(alpha).map_err(Failure::from_core)?;
        row(&mut body, cells(x).chain(cells(alpha)).chain([num(h)]).chain(cells(&grad)));
    }
    sink.csv("hamiltonian.csv", &body).map_err(io)?;
    Ok(())
}

pub fn rate_surface(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let d = s.model.dim;
    let mut body = String::new();
    row(&mut body, numbered("x", d).into_iter().chain(numbered("beta", d)).chain(["L".into()]).chain(numbered("alpha", d)));
    for x in &s.cfg.run.x_grid {
        let eval = RateEval::new(&s.model, x).map_err(Failure::from_core)?;
        for beta in &s.cfg.run.beta_grid {
            let l = eval.local_rate(beta).map_err(Failure::from_core)?;
            row(&mut body, cells(x).chain(cells(beta)).chain([l.value.to_string()]).chain(cells(&l.alpha)));
        }
    }
    sink.csv("rate_surface.csv", &body).map_err(io)?;
    Ok(())
}

fn load_path(s: &Setup) -> Result<Option<Path>, Failure> {
    if s.cfg.run.path.is_empty() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&s.cfg.run.path)
        .map_err(|e| Failure::Config(format!("cannot read path file {}: {e}", s.cfg.run.path)))?;
    Path::from_csv(&text).map(Some).map_err(Failure::config)
}

pub fn action_cmd(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let (path, source) = match load_path(&s)? {
        Some(p) => (p, s.cfg.run.path.clone()),
        None => (ode(&s)?, "ode_limit".to_string()),
    };
    let value = action::action_with_nodes(&s.model, &s.schedule, s.cfg.horizon, &path, s.cfg.run.nodes)
        .map_err(Failure::from_core)?;
    sink.json("action.json", json!({ "value": value, "nodes": s.cfg.run.nodes, "path": source })).map_err(io)?;
    Ok(())
}

fn min_path(s: &Setup, end: Option<Vec<f64>>) -> Result<action::MinActionResult, Failure> {
    let mut problem = ActionProblem::new(s.model.clone(), s.cfg.schedule().map_err(Failure::config)?, s.cfg.horizon, end, s.cfg.run.segments)
        .map_err(Failure::config)?;
    problem.nodes = s.cfg.run.nodes;
    problem.max_iter = s.cfg.run.max_iter;
    action::min_action_path(&problem).map_err(Failure::from_core)
}

pub fn minpath(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let end = (!s.cfg.run.end.is_empty()).then(|| s.cfg.run.end.clone());
    let result = min_path(&s, end)?;
    let ode_dev = sim::deviation_sup(&result.path, &ode(&s)?).map_err(Failure::from_core)?;
    sink.csv("minpath.csv", &result.path.to_csv()).map_err(io)?;
    sink.json("minpath.json", json!({ "result": result, "deviation_from_ode": ode_dev })).map_err(io)?;
    if !result.converged {
        return Err(Failure::Numerical(format!(
            "minimum-action search stopped after {} iterations with gradient norm {:e}",
            result.iterations, result.grad_norm
        )));
    }
    Ok(())
}

pub fn laplace(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let r = &s.cfg.run;
    let functional: Box<dyn Fn(&Path) -> f64 + Sync> = match r.functional {
        Functional::CappedDeviation => Box::new(estimator::capped_deviation(ode(&s)?)),
        Functional::CappedEndpoint => {
            if r.end.is_empty() {
                return Err(Failure::Config("functional capped_endpoint needs run.end".into()));
            }
            let end = r.end.clone();
            Box::new(move |p: &Path| sa_ldp::linalg::dist2(p.end(), &end).sqrt().min(1.0))
        }
    };
    let mut body = String::new();
    row(&mut body, ["n", "beta_n", "estimate", "error"].map(String::from));
    let mut detail = Vec::new();
    for &n in &r.n_sweep {
        let e = estimator::laplace_functional(&s.model, &s.schedule, &functional, r.bound, n, s.cfg.horizon, r.samples, s.cfg.seed)
            .map_err(Failure::from_core)?;
        row(&mut body, [n.to_string(), e.beta_n.to_string(), num(e.value), num(e.std_error)]);
        detail.push(e);
    }
    sink.csv("laplace.csv", &body).map_err(io)?;
    sink.json("laplace.json", json!({ "functional": r.functional, "bound": r.bound, "estimates": detail })).map_err(io)?;
    Ok(())
}

pub fn tube(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let r = &s.cfg.run;
    let (reference, source, reference_action) = match load_path(&s)? {
        Some(p) => (p, r.path.clone(), None),
        None if !r.end.is_empty() => {
            let m = min_path(&s, Some(r.end.clone()))?;
            (m.path, "min_action_path".to_string(), Some(m.value))
        }
        None => (ode(&s)?, "ode_limit".to_string(), None),
    };
    let reference_action = match reference_action {
        Some(v) => v,
        None => action::action_with_nodes(&s.model, &s.schedule, s.cfg.horizon, &reference, r.nodes).map_err(Failure::from_core)?,
    };
    let e = estimator::tube_probability(&s.model, &s.schedule, &reference, r.radius, r.n, s.cfg.horizon, r.samples, s.cfg.seed)
        .map_err(Failure::from_core)?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut body = String::new();
    row(
        &mut body,
        ["n", "beta_n", "samples", "radius", "hits", "probability", "log_rate", "censored_lower_bound", "reference_action"]
            .map(String::from),
    );
    row(
        &mut body,
        [
            e.n.to_string(),
            e.beta_n.to_string(),
            e.samples.to_string(),
            num(e.radius),
            e.hits.to_string(),
            num(e.probability),
            opt(e.log_rate),
            opt(e.censored_lower_bound),
            reference_action.to_string(),
        ],
    );
    sink.csv("tube.csv", &body).map_err(io)?;
    sink.csv("tube_reference.csv", &reference.to_csv()).map_err(io)?;
    sink.json("tube.json", json!({ "estimate": e, "reference": source, "reference_action": reference_action })).map_err(io)?;
    Ok(())
}

pub fn check_assumptions(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let report = kernel::check_assumptions(&s.model, &s.cfg.run.x_grid, &s.cfg.run.alpha_grid).map_err(Failure::from_core)?;
    sink.json("check_assumptions.json", serde_json::to_value(&report).expect("json")).map_err(io)?;
    if !report.all_pass() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.id).collect();
        return Err(Failure::Numerical(format!("assumption checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn demo_sgd(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let data = s.cfg.model.logistic_dataset().ok_or_else(|| Failure::Config("demo-sgd needs builder = \"sgd_logistic\"".into()))?;
    let data = data.map_err(Failure::config)?;
    let d = s.model.dim;
    let mut body = String::new();
    row(&mut body, numbered("x", d).into_iter().chain(numbered("alpha", d)).chain(["H_closed", "H_perron", "abs_diff"].map(String::from)));
    let mut worst: f64 = 0.0;
    for x in &s.cfg.run.x_grid {
        for alpha in &s.cfg.run.alpha_grid {
            let closed = models::sgd_hamiltonian_closed(&data, x, alpha);
            let perron = rate::hamiltonian(&s.model, x, alpha).map_err(Failure::from_core)?;
            worst = worst.max((closed - perron).abs());
            row(&mut body, cells(x).chain(cells(alpha)).chain([num(closed), num(perron), num((closed - perron).abs())]));
        }
    }
    let path = sim::simulate_segment(&s.model, &s.schedule, s.cfg.run.n, s.cfg.horizon, s.cfg.seed).map_err(Failure::from_core)?;
    let loss_start = data.loss(path.start());
    let loss_end = data.loss(path.end());
    sink.csv("demo_sgd.csv", &body).map_err(io)?;
    sink.csv("demo_sgd_path.csv", &path.to_csv()).map_err(io)?;
    sink.json("demo_sgd.json", json!({ "max_abs_diff": worst, "loss_start": loss_start, "loss_end": loss_end })).map_err(io)?;
    Ok(())
}

pub fn demo_rbm(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let spec = s.cfg.model.rbm_spec().ok_or_else(|| Failure::Config("demo-rbm needs builder = \"rbm\"".into()))?;
    let x = s.model.x0.clone();
    let kern = s.model.kernel().map_err(Failure::from_core)?;
    let pi = invariant_measure(kern.as_ref(), &x, 1e-14).map_err(|e| Failure::from_core(e.into()))?;
    let law = models::rbm_gibbs_law(&spec, &x).map_err(Failure::from_core)?;
    let tv = pi.probabilities.iter().zip(&law).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    let exact = models::rbm_exact_gradient(&spec, &x).map_err(Failure::from_core)?;
    let gbar = sim::g_bar(&s.model, &x).map_err(Failure::from_core)?;
    let avg = models::frozen_chain_average(&s.model, &x, s.cfg.run.steps, s.cfg.run.batches, s.cfg.seed).map_err(Failure::config)?;
    let mut body = String::new();
    row(&mut body, ["coordinate", "exact_gradient", "g_bar", "pcd_mean", "std_error", "z"].map(String::from));
    let mut max_z: f64 = 0.0;
    for i in 0..exact.len() {
        let z = (avg.mean[i] - exact[i]) / avg.std_error[i];
        max_z = max_z.max(z.abs());
        row(
            &mut body,
            [i.to_string(), num(exact[i]), num(gbar[i]), num(avg.mean[i]), num(avg.std_error[i]), num(z)],
        );
    }
    sink.csv("demo_rbm.csv", &body).map_err(io)?;
    sink.json("demo_rbm.json", json!({ "total_variation": tv, "max_abs_z": max_z, "steps": avg.steps, "batches": avg.batches }))
        .map_err(io)?;
    Ok(())
}

pub fn demo_wl(sink: &Sink) -> Outcome {
    let s = setup(sink)?;
    let (spec, masses, diffs) = s
        .cfg
        .model
        .wang_landau()
        .ok_or_else(|| Failure::Config("demo-wl needs a wang_landau, multicanonical or free_energy builder".into()))?
        .map_err(Failure::config)?;
    let d = spec.strata();
    let run = models::wang_landau_run(Arc::new(spec), &s.schedule, s.cfg.run.steps, s.cfg.seed, s.cfg.run.record_every)
        .map_err(Failure::from_core)?;
    let mut body = String::new();
    row(&mut body, ["k".to_string()].into_iter().chain(numbered("x", d)));
    for (k, x) in &run.trace {
        row(&mut body, [k.to_string()].into_iter().chain(cells(x)));
    }
    let max_err = run.x.iter().zip(&masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let estimated = models::wl_free_energy_differences(&run.phi).map_err(Failure::from_core)?;
    sink.csv("demo_wl.csv", &body).map_err(io)?;
    sink.json(
        "demo_wl.json",
        json!({
            "steps": run.steps,
            "x": run.x,
            "targets": masses,
            "max_abs_error": max_err,
            "max_normalization_error": run.max_normalization_error,
            "free_energy_differences": estimated,
            "exact_free_energy_differences": diffs,
        }),
    )
    .map_err(io)?;
    Ok(())
}
