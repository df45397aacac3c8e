//! The five experiment commands. Solvers run concurrently; all files are
//! written from the calling thread once the results are in.

use std::fs;
use std::path::PathBuf;

use effcap::powerctl::{
    fixed_order_policy, mean_powers, policy_capacities, policy_grid, variable_order_policy,
    write_policy_csv,
};
use effcap::queuesim::{QueueSetup, QueueSummary};
use effcap::region::{convexity_check, service_policy_with, trace_with, write_trace_csv};
use effcap::solve::linear_fit;
use effcap::strategies::optimal_partition_two_user;
use effcap::{
    DecodingOrder, DecodingPartition, Error, PowerPolicy, RegionTrace, ServiceModel, SolverOptions,
    Strategy,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PowerMode};
use crate::svg::{self, Series, Table};
use crate::{CliError, Status};

/// Reference `(κ1, κ2, φ1, φ2)` for the symmetric variable-order case; the
/// power command reports its relative deviation from these.
pub const REFERENCE_KAPPA_PHI: [f64; 4] = [0.0470, 0.0462, 0.5550, 0.5538];

/// Relative tail-slope band counted as a match in the queue summary.
const SLOPE_BAND: (f64, f64) = (0.75, 1.25);

struct Output<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
    config_line: String,
}

impl<'a> Output<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Self {
            dir: cfg.out.clone(),
            cfg,
            config_line: serde_json::to_string(cfg).expect("config serializes"),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// CSV with the resolved config on a leading `#` line.
    fn csv(&self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let mut text = format!("# config: {}\n", self.config_line).into_bytes();
        text.extend_from_slice(body);
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        let mut value = serde_json::to_value(body).expect("output serializes");
        if let Value::Object(map) = &mut value {
            map.insert(
                "config".into(),
                serde_json::to_value(self.cfg).expect("config serializes"),
            );
        }
        let mut text = serde_json::to_string_pretty(&value).expect("output serializes");
        text.push('\n');
        if let Some(parent) = self.path(name).parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn svg(&self, name: &str, text: &str) -> Result<(), CliError> {
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn table(&self, name: &str) -> Result<Table, CliError> {
        let text = fs::read_to_string(self.path(name))?;
        Table::parse(&text).map_err(|e| CliError::Usage(format!("{name}: {e}")))
    }

    fn desc(&self) -> String {
        format!("config: {}", self.config_line)
    }
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        max_outer: cfg.power.max_outer,
        ..SolverOptions::default()
    }
}

fn status_of(failed: usize, total: usize) -> Status {
    match failed {
        0 => Status::Success,
        f if f == total => Status::NotConverged,
        _ => Status::Partial,
    }
}

/// Runs `f` on every item in its own scoped thread, keeping input order.
fn parallel<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|it| s.spawn(|| f(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    })
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

pub fn region(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    cfg.require_two_users("region")?;
    let scn = cfg.scenario()?;
    let grid: Vec<Vec<f64>> = cfg.lambda_grid.iter().map(|l| vec![*l, 1.0 - l]).collect();
    let opts = solver_options(cfg);
    let traces = parallel(&cfg.strategies, |s| trace_with(&scn, *s, &grid, &opts));
    let traces: Vec<RegionTrace> = traces.into_iter().collect::<Result<_, _>>()?;

    let out = Output::new(cfg)?;
    let mut entries = Vec::new();
    let mut series = Vec::new();
    let (mut failed, mut total) = (0, 0);
    for t in &traces {
        let file = format!("region_{}.csv", t.strategy);
        let mut body = Vec::new();
        write_trace_csv(&mut body, t)?;
        out.csv(&file, &body)?;
        let table = out.table(&file)?;
        let ok = table.column("converged").unwrap_or_default();
        let pick = |c: &str| -> Vec<f64> {
            let v = table.column(c).unwrap_or_default();
            v.iter()
                .zip(&ok)
                .map(|(x, k)| if *k == 1.0 { *x } else { f64::NAN })
                .collect()
        };
        series.push(Series::from_columns(
            t.strategy.label(),
            &pick("C1"),
            &pick("C2"),
        ));
        failed += t.failures();
        total += t.points.len();
        entries.push(json!({
            "strategy": t.strategy,
            "csv": file,
            "failures": t.failures(),
            "convexity": convexity_check(t).ok(),
            "points": t.points,
        }));
    }
    out.svg(
        "region.svg",
        &svg::line_plot(
            "Effective capacity region",
            "C1 (bits/s/Hz)",
            "C2 (bits/s/Hz)",
            &series,
            &out.desc(),
        ),
    )?;
    out.json(
        "region.json",
        &json!({
            "command": "region",
            "tb_product": cfg.tb_product,
            "seed": cfg.seed,
            "traces": entries,
        }),
    )?;
    Ok(status_of(failed, total))
}

pub fn sumrate(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    cfg.require_two_users("sumrate")?;
    let scenarios = cfg
        .theta_grid
        .iter()
        .map(|t| cfg.scenario_with(cfg.tb_product, Some(*t)))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = solver_options(cfg);
    let equal = vec![vec![0.5, 0.5]];
    // sums[strategy][theta]; NaN marks a failed point
    let results = parallel(&cfg.strategies, |s| {
        scenarios
            .iter()
            .map(|scn| {
                let t = trace_with(scn, *s, &equal, &opts)?;
                let p = &t.points[0];
                Ok(if p.converged {
                    p.capacities.iter().map(|c| c.value).sum()
                } else {
                    f64::NAN
                })
            })
            .collect::<Result<Vec<f64>, Error>>()
    });
    let sums: Vec<Vec<f64>> = results.into_iter().collect::<Result<_, _>>()?;

    let out = Output::new(cfg)?;
    let mut body = format!(
        "theta,{}\n",
        cfg.strategies
            .iter()
            .map(|s| s.label())
            .collect::<Vec<_>>()
            .join(",")
    );
    for (i, theta) in cfg.theta_grid.iter().enumerate() {
        let row: Vec<String> = sums.iter().map(|s| fmt_num(s[i])).collect();
        body.push_str(&format!("{theta},{}\n", row.join(",")));
    }
    out.csv("sumrate.csv", body.as_bytes())?;
    let table = out.table("sumrate.csv")?;
    let theta = table.column("theta").unwrap_or_default();
    let series: Vec<Series> = cfg
        .strategies
        .iter()
        .map(|s| {
            Series::from_columns(
                s.label(),
                &theta,
                &table.column(s.label()).unwrap_or_default(),
            )
        })
        .collect();
    out.svg(
        "sumrate.svg",
        &svg::line_plot(
            "Sum-rate throughput",
            "theta",
            "C1 + C2 (bits/s/Hz)",
            &series,
            &out.desc(),
        ),
    )?;

    let col = |s: Strategy| {
        cfg.strategies
            .iter()
            .position(|x| *x == s)
            .map(|i| &sums[i])
    };
    let mut meta = json!({
        "command": "sumrate",
        "tb_product": cfg.tb_product,
        "weights": [0.5, 0.5],
        "sums": cfg.strategies.iter().zip(&sums).map(|(s, v)| json!({"strategy": s, "sum": v})).collect::<Vec<_>>(),
    });
    if let (Some(tdma), Some(ts), true) = (
        col(Strategy::Tdma),
        col(Strategy::FixedOrderTs),
        theta.len() > 1,
    ) {
        let diff: Vec<f64> = tdma.iter().zip(ts).map(|(a, b)| a - b).collect();
        let crossings: Vec<f64> = (1..diff.len())
            .filter(|&i| {
                diff[i - 1].is_finite()
                    && diff[i].is_finite()
                    && diff[i - 1].signum() != diff[i].signum()
            })
            .map(|i| {
                let (a, b) = (diff[i - 1], diff[i]);
                theta[i - 1] + (theta[i] - theta[i - 1]) * a / (a - b)
            })
            .collect();
        meta["crossover"] = json!({
            "tdma_minus_fixed_order_ts": diff,
            "sign_changes": crossings.len(),
            "theta_star": crossings.first(),
        });
    }
    out.json("sumrate.json", &meta)?;
    let failed = sums.iter().flatten().filter(|v| v.is_nan()).count();
    Ok(status_of(failed, sums.len() * theta.len()))
}

pub fn kcurve(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    cfg.require_two_users("kcurve")?;
    let scn = cfg.scenario()?;
    let lambdas: Vec<f64> = cfg
        .lambda_grid
        .iter()
        .copied()
        .filter(|l| *l > 0.0 && *l < 1.0)
        .collect();
    if lambdas.is_empty() {
        return Err(CliError::Usage(
            "kcurve needs lambda_grid values strictly inside (0, 1)".into(),
        ));
    }
    let sols = parallel(&lambdas, |l| optimal_partition_two_user(&scn, *l));

    let out = Output::new(cfg)?;
    let mut body = String::from("lambda1,ratio,k,converged\n");
    let mut failures = Vec::new();
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (l, s) in lambdas.iter().zip(&sols) {
        let ratio = l / (1.0 - l);
        match s {
            Ok(sol) => {
                body.push_str(&format!("{l},{ratio},{},true\n", sol.k));
                lx.push(ratio.ln());
                ly.push(sol.k.ln());
            }
            Err(e) => {
                body.push_str(&format!("{l},{ratio},,false\n"));
                failures.push(json!({"lambda1": l, "error": e.to_string()}));
            }
        }
    }
    out.csv("kcurve.csv", body.as_bytes())?;
    let table = out.table("kcurve.csv")?;
    let series = Series::from_columns(
        "K",
        &table.column("ratio").unwrap_or_default(),
        &table.column("k").unwrap_or_default(),
    );
    out.svg(
        "kcurve.svg",
        &svg::line_plot(
            "Partition constant",
            "lambda1/lambda2",
            "K",
            &[series],
            &out.desc(),
        ),
    )?;

    let fit = (lx.len() >= 2).then(|| {
        let (slope, intercept, r2) = linear_fit(&lx, &ly);
        json!({"slope": slope, "intercept": intercept, "r2": r2})
    });
    let ks: Vec<f64> = ly.iter().map(|v| v.exp()).collect();
    let monotone = ks.windows(2).all(|w| w[1] > w[0]) || ks.windows(2).all(|w| w[1] < w[0]);
    out.json(
        "kcurve.json",
        &json!({
            "command": "kcurve",
            "tb_product": cfg.tb_product,
            "log_log_fit": fit,
            "strictly_monotone": monotone,
            "failures": failures,
            "solutions": sols.iter().filter_map(|s| s.as_ref().ok()).collect::<Vec<_>>(),
        }),
    )?;
    Ok(status_of(failures.len(), lambdas.len()))
}

enum PowerRun {
    Converged(PowerPolicy, Value),
    Failed(Value),
}

fn power_at(cfg: &ExperimentConfig, tb: f64) -> Result<PowerRun, Error> {
    let scn = cfg
        .scenario_with(tb, None)
        .map_err(|e| Error::Usage(e.to_string()))?;
    let (policy, mut meta) = match cfg.power.mode {
        PowerMode::FixedOrder => {
            let order = DecodingOrder::from_labels(&cfg.power.order)?;
            let policy = fixed_order_policy(&scn, &order)?;
            let PowerPolicy::FixedOrder { alpha, beta, .. } = &policy else {
                unreachable!()
            };
            let meta = json!({"order": order.labels(), "alpha": alpha, "beta": beta});
            (policy, meta)
        }
        PowerMode::VariableOrder => {
            let lambda = &cfg.power.lambda;
            let part = DecodingPartition::lambda_rule(lambda.clone());
            let res = variable_order_policy(&scn, &part, lambda, &solver_options(cfg))?;
            let Some(policy) = res.policy else {
                return Ok(PowerRun::Failed(
                    json!({"tb_product": tb, "report": res.report}),
                ));
            };
            let PowerPolicy::VariableOrder { params, .. } = &policy else {
                unreachable!()
            };
            let got = [
                params.kappa[0],
                params.kappa[1],
                params.phi[0],
                params.phi[1],
            ];
            let deviation: Vec<f64> = got
                .iter()
                .zip(REFERENCE_KAPPA_PHI)
                .map(|(g, r)| g / r - 1.0)
                .collect();
            let meta = json!({
                "kappa": params.kappa,
                "phi": params.phi,
                "alpha": params.alpha,
                "reference_kappa_phi": REFERENCE_KAPPA_PHI,
                "relative_deviation": deviation,
                "report": res.report,
            });
            (policy, meta)
        }
    };
    meta["tb_product"] = json!(tb);
    meta["mean_powers"] = json!(mean_powers(&scn, &policy)?);
    meta["capacities"] = json!(policy_capacities(&scn, &policy)?);
    Ok(PowerRun::Converged(policy, meta))
}

pub fn power(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    cfg.require_two_users("power")?;
    let runs = parallel(&cfg.power.tb_sweep, |tb| power_at(cfg, *tb));
    let out = Output::new(cfg)?;
    let mut failed = 0;
    for (tb, run) in cfg.power.tb_sweep.iter().zip(runs) {
        let stem = format!("power_tb{tb}");
        match run? {
            PowerRun::Converged(policy, mut meta) => {
                let mut body = Vec::new();
                write_policy_csv(
                    &mut body,
                    &policy_grid(&policy, cfg.power.grid_max, cfg.power.grid_points),
                )?;
                out.csv(&format!("{stem}.csv"), &body)?;
                let table = out.table(&format!("{stem}.csv"))?;
                let title = format!("Power control, tb = {tb}");
                let plot = svg::power_maps(&title, &table, &out.desc()).map_err(CliError::Usage)?;
                out.svg(&format!("{stem}.svg"), &plot)?;
                meta["converged"] = json!(true);
                meta["csv"] = json!(format!("{stem}.csv"));
                meta["command"] = json!("power");
                out.json(&format!("{stem}.json"), &meta)?;
            }
            PowerRun::Failed(mut meta) => {
                failed += 1;
                meta["converged"] = json!(false);
                meta["command"] = json!("power");
                out.json(&format!("{stem}.json"), &meta)?;
            }
        }
    }
    // any non-converged solve is a failure of this command
    Ok(if failed > 0 {
        Status::NotConverged
    } else {
        Status::Success
    })
}

fn queue_file(label: &str, rho: f64, seed: u64) -> String {
    format!("queue/{label}_rho{rho}_seed{seed}.json")
}

pub fn queue(cfg: &ExperimentConfig) -> Result<Status, CliError> {
    let scn = cfg.scenario()?;
    let q = &cfg.queue;
    if q.user >= scn.m() {
        return Err(CliError::Usage(format!(
            "queue.user {} out of range",
            q.user
        )));
    }
    if q.rhos.iter().any(|r| !(*r >= 0.0)) {
        return Err(CliError::Usage("queue.rhos must be nonnegative".into()));
    }
    let opts = solver_options(cfg);
    let models: Vec<(String, Result<ServiceModel, Error>)> = if scn.m() == 1 {
        vec![("single-user".into(), ServiceModel::single_user(scn.clone()))]
    } else {
        let built = parallel(&cfg.strategies, |s| {
            service_policy_with(&scn, *s, &q.lambda, &opts)
                .and_then(|p| ServiceModel::new(scn.clone(), q.user, p))
        });
        cfg.strategies
            .iter()
            .map(|s| s.label().to_string())
            .zip(built)
            .collect()
    };

    let out = Output::new(cfg)?;
    let seeds: Vec<u64> = (0..q.seeds as u64).map(|i| cfg.seed + i).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut summary = Vec::new();
    let mut failed = 0;
    for (label, model) in &models {
        let model = match model {
            Ok(m) => m,
            Err(e @ Error::Usage(_)) => return Err(CliError::Core(e.clone())),
            Err(e) => {
                failed += 1;
                summary.push(
                    json!({"strategy": label, "status": "solver-failed", "error": e.to_string()}),
                );
                continue;
            }
        };
        for &rho in &q.rhos {
            let setup = match QueueSetup::new(model.clone(), rho) {
                Ok(s) => s,
                Err(e @ Error::UnstableQueue { .. }) => {
                    for &seed in &seeds {
                        out.json(
                            &queue_file(label, rho, seed),
                            &json!({"strategy": label, "rho": rho, "seed": seed, "status": "unstable", "error": e.to_string()}),
                        )?;
                    }
                    summary.push(json!({"strategy": label, "rho": rho, "status": "unstable", "error": e.to_string()}));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let mut ratios = Vec::new();
            let mut in_band = 0;
            for chunk in seeds.chunks(threads) {
                for run in setup.run_seeds(q.frames, chunk) {
                    let s = QueueSummary::new(&setup, &run);
                    let ratio = s.ratio();
                    let ok = ratio.is_some_and(|r| (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&r));
                    in_band += ok as usize;
                    ratios.push(ratio);
                    out.json(
                        &queue_file(label, rho, run.seed),
                        &json!({"strategy": label, "status": "simulated", "summary": s, "slope_ratio": ratio, "in_band": ok}),
                    )?;
                }
            }
            summary.push(json!({
                "strategy": label,
                "rho": rho,
                "status": "simulated",
                "seeds": seeds.len(),
                "in_band": in_band,
                "band": [SLOPE_BAND.0, SLOPE_BAND.1],
                "slope_ratios": ratios,
            }));
        }
    }
    out.json(
        "queue_summary.json",
        &json!({"command": "queue", "frames": q.frames, "seeds": seeds, "results": summary}),
    )?;
    Ok(status_of(failed, models.len()))
}
