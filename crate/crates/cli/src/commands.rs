//! The subcommands. Each writes its artifacts under `cfg.out` and echoes the
//! resolved config and version string into every JSON output.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use ns_pinn::bound::{generalization_bound_with, point_ratio, sample_planner, weight_stats, BoundReport};
use ns_pinn::experiment::{moment_constants, sample_collocation, sample_interior};
use ns_pinn::network::{default_w_scale, save_checkpoint, FieldEval, SpaceTimePoint};
use ns_pinn::oracle::{run_suite, CheckReport};
use ns_pinn::residual::{empirical_risk, momentum_residual};
use ns_pinn::training::history_csv;
use ns_pinn::{
    constants, init_weights, load_checkpoint, sweep_experiment, train, ActivationFamily, ActivationSpec, FieldEvaluator,
    Pinn, TaylorGreen, Weights,
};

use crate::{CliError, RunConfig, VERSION};

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("cannot write {}: {e}", path.display()))
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    write_json(cfg, "config.json", &Value::Null)
}

fn write_text(cfg: &RunConfig, name: &str, text: &str) -> Result<(), CliError> {
    let path = cfg.out.join(name);
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// `{version, config, ...body}` as pretty JSON.
fn write_json(cfg: &RunConfig, name: &str, body: &impl Serialize) -> Result<(), CliError> {
    let mut doc = json!({ "version": VERSION, "config": cfg });
    match serde_json::to_value(body).map_err(ns_pinn::Error::from)? {
        Value::Object(map) => doc.as_object_mut().expect("object").extend(map),
        Value::Null => {}
        other => {
            doc["result"] = other;
        }
    }
    let text = serde_json::to_string_pretty(&doc).map_err(ns_pinn::Error::from)?;
    write_text(cfg, name, &(text + "\n"))
}

fn taylor_green(cfg: &RunConfig) -> Result<TaylorGreen, CliError> {
    if cfg.d != 2 || cfg.sampling.domain.d() != 2 {
        return Err(CliError::Usage("the Taylor-Green setup needs d = 2 and a 2-D domain".into()));
    }
    Ok(TaylorGreen::new(cfg.loss.nu)?)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.training.validate()?;
    let tg = taylor_green(cfg)?;
    prepare_out(cfg)?;
    let colloc = sample_collocation::<f64>(cfg.sampling.n_r, cfg.sampling.n_0, &cfg.sampling.domain, cfg.sampling.seed)?;
    let w_scale = cfg.init.w_scale.unwrap_or_else(|| default_w_scale(cfg.d));
    let init = init_weights::<f64>(cfg.d, cfg.p, cfg.init.seed, w_scale)?;
    let outcome = train(&init, cfg.activation, &cfg.loss, &colloc, &tg, &cfg.training)?;
    save_checkpoint(&outcome.weights, cfg.activation, cfg.out.join("checkpoint.json"))?;
    write_text(cfg, "history.csv", &history_csv(&outcome.history))?;
    write_json(
        cfg,
        "train_report.json",
        &json!({
            "N_r": cfg.sampling.n_r,
            "N_0": cfg.sampling.n_0,
            "initial_risk": outcome.initial_risk(),
            "final_risk": outcome.final_risk(),
        }),
    )?;
    println!(
        "trained {} epochs: total risk {} -> {}",
        cfg.training.epochs,
        outcome.initial_risk().total,
        outcome.final_risk().total
    );
    Ok(())
}

fn bound_for(cfg: &RunConfig, weights: &Weights, spec: ActivationSpec) -> Result<(BoundReport<f64>, Value), CliError> {
    let sc = match cfg.bound.sigma_constants {
        Some(sc) => {
            sc.validate()?;
            sc
        }
        None => constants(spec),
    };
    let (c_z, c_z0) = match (cfg.bound.c_z, cfg.bound.c_z0) {
        (Some(a), Some(b)) => (a, b),
        (None, None) => {
            if cfg.sampling.domain.d() != weights.d() {
                return Err(CliError::Usage(format!(
                    "domain is {}-D but the checkpoint has d = {}; set bound.c_z and bound.c_z0",
                    cfg.sampling.domain.d(),
                    weights.d()
                )));
            }
            let pop = sample_collocation::<f64>(
                cfg.sampling.population_points,
                cfg.sampling.population_points,
                &cfg.sampling.domain,
                cfg.sampling.population_seed,
            )?;
            moment_constants(&pop.interior, &pop.initial)?
        }
        _ => return Err(CliError::Usage("set both bound.c_z and bound.c_z0 or neither".into())),
    };
    let stats = weight_stats(weights);
    let report = generalization_bound_with(
        &stats,
        &sc,
        &cfg.loss,
        cfg.sampling.n_r,
        cfg.sampling.n_0,
        c_z,
        c_z0,
        cfg.bound.nu_term,
    )?;
    let plan = match cfg.bound.eps {
        Some(eps) => {
            let (n_r, n_0) = sample_planner(eps, &stats, &sc, &cfg.loss, c_z, c_z0)?;
            let ratio = point_ratio(&stats, &sc, &cfg.loss, c_z, c_z0);
            json!({
                "eps": eps,
                "N_r": n_r,
                "N_0": n_0,
                "point_ratio": ratio.as_ref().ok(),
                "point_ratio_note": ratio.err().map(|e| e.to_string()),
            })
        }
        None => Value::Null,
    };
    Ok((report, plan))
}

pub fn cmd_bound(cfg: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint::<f64>(checkpoint)?;
    let (report, plan) = bound_for(cfg, &ckpt.weights, ckpt.activation)?;
    prepare_out(cfg)?;
    write_json(
        cfg,
        "bound_report.json",
        &json!({ "activation": ckpt.activation, "bound": report, "plan": plan }),
    )?;
    write_text(
        cfg,
        "bound.csv",
        &format!("{}\n{}\n", BoundReport::<f64>::CSV_HEADER, report.csv_row()),
    )?;
    println!(
        "bound: term_interior {} term_initial {} total {}",
        report.term_interior, report.term_initial, report.total
    );
    Ok(())
}

/// A network that owns its weights.
struct OwnedNet {
    weights: Weights,
    spec: ActivationSpec,
}

impl FieldEvaluator<f64> for OwnedNet {
    fn dim(&self) -> usize {
        self.weights.d()
    }

    fn field_eval(&self, z: &SpaceTimePoint<f64>) -> ns_pinn::Result<FieldEval<f64>> {
        Pinn::new(&self.weights, self.spec).field_eval(z)
    }

    fn velocity(&self, z: &SpaceTimePoint<f64>) -> ns_pinn::Result<Vec<f64>> {
        Pinn::new(&self.weights, self.spec).velocity(z)
    }
}

/// Velocity fixed everywhere, all derivatives zero.
struct ConstantField([f64; 2]);

impl FieldEvaluator<f64> for ConstantField {
    fn dim(&self) -> usize {
        2
    }

    fn field_eval(&self, _z: &SpaceTimePoint<f64>) -> ns_pinn::Result<FieldEval<f64>> {
        let mut fe = FieldEval::zeros(2);
        fe.u = self.0.to_vec();
        Ok(fe)
    }
}

fn nets(spec: ActivationSpec, p: usize, seeds: std::ops::Range<u64>, scale: f64) -> ns_pinn::Result<Vec<Box<dyn FieldEvaluator<f64>>>> {
    seeds
        .map(|s| {
            Ok(Box::new(OwnedNet {
                weights: init_weights(2, p, s, scale)?,
                spec,
            }) as Box<dyn FieldEvaluator<f64>>)
        })
        .collect()
}

/// Small hypothesis classes for the symmetrization check, cycling through
/// five shapes.
fn hypothesis_classes(count: usize, tg: TaylorGreen, seed: u64) -> ns_pinn::Result<Vec<Vec<Box<dyn FieldEvaluator<f64>>>>> {
    let sigmoid = ActivationSpec::new(ActivationFamily::SigmoidPow, 1)?;
    (0..count)
        .map(|i| {
            let s = seed.wrapping_add(10 * i as u64);
            Ok(match i % 5 {
                0 => vec![
                    Box::new(ConstantField([0.0, 0.0])) as Box<dyn FieldEvaluator<f64>>,
                    Box::new(ConstantField([0.5, 0.5])),
                ],
                1 => nets(ActivationSpec::tanh(), 4, s..s + 3, 0.8)?,
                2 => {
                    let mut class: Vec<Box<dyn FieldEvaluator<f64>>> = vec![Box::new(tg)];
                    class.extend(nets(ActivationSpec::tanh_cubed(), 6, s..s + 2, 0.6)?);
                    class
                }
                3 => nets(ActivationSpec::tanh_cubed(), 8, s..s + 4, 0.8)?,
                _ => {
                    let mut class = nets(sigmoid, 4, s..s + 2, 1.0)?;
                    class.push(Box::new(ConstantField([-0.3, 0.2])));
                    class
                }
            })
        })
        .collect()
}

#[derive(Serialize)]
struct CheckGroup<'a> {
    check: &'a str,
    all_passed: bool,
    passed: usize,
    total: usize,
    reports: &'a [CheckReport],
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<(), CliError> {
    let tg = taylor_green(cfg)?;
    prepare_out(cfg)?;
    let owned = hypothesis_classes(cfg.verify.symmetrization_classes, tg, cfg.verify.symmetrization.seed)?;
    let classes: Vec<Vec<&dyn FieldEvaluator<f64>>> = owned
        .iter()
        .map(|c| c.iter().map(|b| b.as_ref()).collect())
        .collect();
    let suite = run_suite(&cfg.verify, &classes, &cfg.loss, &tg, &cfg.sampling.domain)?;
    let mut failures = Vec::new();
    for (name, reports) in suite.groups() {
        let passed = reports.iter().filter(|r| r.passed).count();
        let group = CheckGroup {
            check: name,
            all_passed: passed == reports.len(),
            passed,
            total: reports.len(),
            reports,
        };
        write_json(cfg, &format!("{name}.json"), &group)?;
        println!("{name}: {passed}/{} passed", reports.len());
        if passed < reports.len() {
            failures.push(name);
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failures.join(", ")))
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let sweep = cfg.sweep_config();
    sweep.validate()?;
    prepare_out(cfg)?;
    let report = sweep_experiment(&sweep, Some(&cfg.out.join("rows")))?;
    write_text(cfg, "sweep.csv", &report.csv())?;
    write_text(cfg, "bound_vs_gap.dat", &report.plot_data())?;
    write_json(cfg, "sweep.json", &report)?;
    match report.pearson_r {
        Some(r) => println!("pearson_r(bound, gap) = {r}"),
        None => println!("pearson_r undefined: {}", report.pearson_note.as_deref().unwrap_or("")),
    }
    println!("bound strictly decreasing in N_r: {}", report.bound_strictly_decreasing);
    Ok(())
}

#[derive(Serialize, Default)]
struct ResidualStats {
    points: usize,
    max_abs_momentum_residual: f64,
    max_abs_divergence: f64,
    empirical_risk: f64,
}

fn residual_stats(field: &dyn FieldEvaluator<f64>, cfg: &RunConfig, tg: &TaylorGreen) -> Result<ResidualStats, CliError> {
    let n = cfg.report.residual_points;
    let colloc = sample_collocation::<f64>(n, n, &cfg.sampling.domain, cfg.sampling.seed)?;
    let mut stats = ResidualStats {
        points: n,
        ..Default::default()
    };
    for z in &colloc.interior {
        let fe = field.field_eval(z)?;
        for r in momentum_residual(&fe, cfg.loss.nu) {
            stats.max_abs_momentum_residual = stats.max_abs_momentum_residual.max(r.abs());
        }
        stats.max_abs_divergence = stats.max_abs_divergence.max(fe.div_u.abs());
    }
    stats.empirical_risk = empirical_risk(field, &cfg.loss, &colloc, tg)?.total;
    Ok(stats)
}

fn snapshot_csv(tg: &TaylorGreen, net: Option<&dyn FieldEvaluator<f64>>, cfg: &RunConfig, t: f64) -> Result<String, CliError> {
    let dom = &cfg.sampling.domain;
    let res = cfg.report.resolution.max(2);
    let mut out = String::from(if net.is_some() { "x,y,t,u,v,p,u_net,v_net,p_net\n" } else { "x,y,t,u,v,p\n" });
    for i in 0..res {
        for j in 0..res {
            let at = |k: usize, s: usize| dom.x_min[k] + (dom.x_max[k] - dom.x_min[k]) * s as f64 / (res - 1) as f64;
            let z = SpaceTimePoint::new(vec![at(0, i), at(1, j)], t);
            let fe = tg.field_eval(&z)?;
            out.push_str(&format!("{},{},{},{},{},{}", z.x[0], z.x[1], t, fe.u[0], fe.u[1], fe.p));
            if let Some(net) = net {
                let nf = net.field_eval(&z)?;
                out.push_str(&format!(",{},{},{}", nf.u[0], nf.u[1], nf.p));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn cmd_taylor_green_report(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let tg = taylor_green(cfg)?;
    if cfg.report.residual_points == 0 {
        return Err(CliError::Usage("report.residual_points must be at least 1".into()));
    }
    let net = match checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint::<f64>(path)?;
            if ckpt.weights.d() != 2 {
                return Err(CliError::Usage("checkpoint must have d = 2".into()));
            }
            Some(OwnedNet {
                weights: ckpt.weights,
                spec: ckpt.activation,
            })
        }
        None => None,
    };
    prepare_out(cfg)?;
    let exact = residual_stats(&tg, cfg, &tg)?;
    let mut body = json!({ "nu": tg.nu, "rho": tg.rho, "exact_solution": exact });
    if let Some(net) = &net {
        let pts = sample_interior::<f64>(cfg.report.residual_points, &cfg.sampling.domain, cfg.sampling.seed)?;
        let (mut err, mut norm) = (0.0, 0.0);
        for z in &pts {
            let u = tg.velocity(z)?;
            let v = net.velocity(z)?;
            for k in 0..2 {
                err += (u[k] - v[k]).powi(2);
                norm += u[k] * u[k];
            }
        }
        body["network"] = json!({
            "residuals": residual_stats(net, cfg, &tg)?,
            "relative_l2_velocity_error": (err / norm).sqrt(),
        });
    }
    let mut files = Vec::new();
    for (i, &t) in cfg.report.times.iter().enumerate() {
        let name = format!("snapshot_{i}.csv");
        write_text(cfg, &name, &snapshot_csv(&tg, net.as_ref().map(|n| n as &dyn FieldEvaluator<f64>), cfg, t)?)?;
        files.push(json!({ "t": t, "file": name }));
    }
    body["snapshots"] = Value::Array(files);
    write_json(cfg, "taylor_green_report.json", &body)?;
    println!(
        "exact solution: max |momentum residual| {:e}, max |div u| {:e}",
        exact.max_abs_momentum_residual, exact.max_abs_divergence
    );
    Ok(())
}
