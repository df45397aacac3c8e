//! Throughput-region boundaries traced by sweeping the weight vector, and the
//! geometric checks used to compare them.

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::effcap::{DecodingOrder, EffCap, Scenario};
use crate::error::{usage, Error, Result};
use crate::powerctl::{
    fixed_order_policy, policy_capacities, variable_order_policy, KktReport, PowerPolicy,
    SolverOptions,
};
use crate::queuesim::ServicePolicy;
use crate::strategies::{
    check_weights, fixed_order_ts_optimize, optimal_partition_two_user, tdma_optimize,
    variable_order_capacities, weighted_error, weighted_sum, DecodingPartition,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Time sharing between fixed decoding orders.
    FixedOrderTs,
    /// State-dependent decoding order from the K fixed point (two users).
    VariableOptimal,
    /// State-dependent decoding order by ascending `λ_j / z_j`.
    VariableLambdaRule,
    Tdma,
    /// Fixed-order power control, best order per weight.
    PowerFixed,
    /// Variable-order power control on the `λ_j / z_j` partition (two users).
    PowerVariable,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::FixedOrderTs,
        Strategy::VariableOptimal,
        Strategy::VariableLambdaRule,
        Strategy::Tdma,
        Strategy::PowerFixed,
        Strategy::PowerVariable,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Self::FixedOrderTs => "fixed-order-ts",
            Self::VariableOptimal => "variable-optimal",
            Self::VariableLambdaRule => "variable-lambda-rule",
            Self::Tdma => "tdma",
            Self::PowerFixed => "power-fixed",
            Self::PowerVariable => "power-variable",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.label() == s)
            .ok_or_else(|| Error::Usage(format!("unknown strategy '{s}'")))
    }
}

/// What the inner optimization settled on at one weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointMeta {
    TimeSharing {
        tau: Vec<f64>,
    },
    Partition {
        k: Option<f64>,
        residual: Option<f64>,
        iterations: usize,
    },
    LambdaRule,
    Tdma {
        delta: Vec<f64>,
        kappa: f64,
    },
    FixedOrderPower {
        order: Vec<usize>,
        alpha: Vec<f64>,
    },
    VariableOrderPower {
        report: Box<KktReport>,
    },
    Failed {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub lambda: Vec<f64>,
    pub capacities: Vec<EffCap>,
    pub weighted_sum: f64,
    pub converged: bool,
    pub meta: PointMeta,
}

impl TracePoint {
    pub fn values(&self) -> Vec<f64> {
        self.capacities.iter().map(|c| c.value).collect()
    }

    pub fn error(&self) -> f64 {
        weighted_error(&self.lambda, &self.capacities)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTrace {
    pub strategy: Strategy,
    pub points: Vec<TracePoint>,
}

impl RegionTrace {
    pub fn converged_points(&self) -> impl Iterator<Item = &TracePoint> {
        self.points.iter().filter(|p| p.converged)
    }

    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| !p.converged).count()
    }
}

/// `n` two-user weight vectors `(λ1, 1-λ1)` with `λ1` uniform on `[0, 1]`.
pub fn two_user_grid(n: usize) -> Vec<Vec<f64>> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let l = i as f64 / (n - 1) as f64;
            vec![l, 1.0 - l]
        })
        .collect()
}

fn failed(lambda: &[f64], m: usize, e: Error) -> TracePoint {
    TracePoint {
        lambda: lambda.to_vec(),
        capacities: vec![
            EffCap {
                value: 0.0,
                error: 0.0,
                underflow: false
            };
            m
        ],
        weighted_sum: f64::NAN,
        converged: false,
        meta: PointMeta::Failed {
            message: e.to_string(),
        },
    }
}

fn point(lambda: &[f64], capacities: Vec<EffCap>, meta: PointMeta) -> TracePoint {
    TracePoint {
        lambda: lambda.to_vec(),
        weighted_sum: weighted_sum(lambda, &capacities),
        capacities,
        converged: true,
        meta,
    }
}

/// Order with every user ranked by weight: the heaviest is decoded last.
fn weight_order(lambda: &[f64]) -> DecodingOrder {
    let mut idx: Vec<usize> = (0..lambda.len()).collect();
    idx.sort_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap());
    DecodingOrder::new(idx).unwrap()
}

/// Boundary points of a strategy's region, one per weight vector. Inner
/// solver failures are recorded on their point; the trace is still returned.
pub fn trace(scn: &Scenario, strategy: Strategy, lambdas: &[Vec<f64>]) -> Result<RegionTrace> {
    trace_with(scn, strategy, lambdas, &SolverOptions::default())
}

pub fn trace_with(
    scn: &Scenario,
    strategy: Strategy,
    lambdas: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<RegionTrace> {
    let m = scn.m();
    for l in lambdas {
        check_weights(l, m)?;
    }
    if matches!(
        strategy,
        Strategy::VariableOptimal | Strategy::PowerVariable
    ) && m != 2
    {
        return usage(format!("{strategy} is implemented for two users"));
    }
    // fixed-order power policies do not depend on the weights
    let mut fixed_power: HashMap<DecodingOrder, Result<(PowerPolicy, Vec<EffCap>)>> =
        HashMap::new();
    if strategy == Strategy::PowerFixed {
        for o in DecodingOrder::all(m) {
            let r = fixed_order_policy(scn, &o).and_then(|p| {
                let c = policy_capacities(scn, &p)?;
                Ok((p, c))
            });
            fixed_power.insert(o, r);
        }
    }

    let mut points = Vec::with_capacity(lambdas.len());
    for lambda in lambdas {
        let interior = lambda.iter().all(|l| *l > 0.0);
        let res: Result<TracePoint> = match strategy {
            Strategy::FixedOrderTs => fixed_order_ts_optimize(scn, lambda).map(|s| {
                point(
                    lambda,
                    s.capacities,
                    PointMeta::TimeSharing { tau: s.tau.tau },
                )
            }),
            Strategy::VariableOptimal if interior => optimal_partition_two_user(scn, lambda[0])
                .and_then(|k| {
                    let caps = variable_order_capacities(scn, &k.partition())?;
                    Ok(point(
                        lambda,
                        caps,
                        PointMeta::Partition {
                            k: Some(k.k),
                            residual: Some(k.residual),
                            iterations: k.iterations,
                        },
                    ))
                }),
            Strategy::VariableOptimal => {
                let part = DecodingPartition::fixed(weight_order(lambda));
                variable_order_capacities(scn, &part).map(|caps| {
                    point(
                        lambda,
                        caps,
                        PointMeta::Partition {
                            k: None,
                            residual: None,
                            iterations: 0,
                        },
                    )
                })
            }
            Strategy::VariableLambdaRule => {
                variable_order_capacities(scn, &DecodingPartition::lambda_rule(lambda.clone()))
                    .map(|caps| point(lambda, caps, PointMeta::LambdaRule))
            }
            Strategy::Tdma => tdma_optimize(scn, lambda).map(|s| {
                point(
                    lambda,
                    s.capacities,
                    PointMeta::Tdma {
                        delta: s.delta,
                        kappa: s.kappa,
                    },
                )
            }),
            Strategy::PowerFixed => {
                let mut best: Option<TracePoint> = None;
                let mut err = None;
                for (o, r) in &fixed_power {
                    match r {
                        Ok((PowerPolicy::FixedOrder { alpha, .. }, caps)) => {
                            let p = point(
                                lambda,
                                caps.clone(),
                                PointMeta::FixedOrderPower {
                                    order: o.labels(),
                                    alpha: alpha.clone(),
                                },
                            );
                            let better = best.as_ref().is_none_or(|b| {
                                p.weighted_sum > b.weighted_sum
                                    || (p.weighted_sum == b.weighted_sum
                                        && o.labels() < meta_order(&b.meta))
                            });
                            if better {
                                best = Some(p);
                            }
                        }
                        Ok(_) => unreachable!(),
                        Err(e) => err = Some(e.clone()),
                    }
                }
                best.ok_or_else(|| err.unwrap())
            }
            Strategy::PowerVariable if interior => {
                let part = DecodingPartition::lambda_rule(lambda.clone());
                variable_order_policy(scn, &part, lambda, opts).and_then(|r| match r.policy {
                    Some(policy) => {
                        let caps = policy_capacities(scn, &policy)?;
                        Ok(point(
                            lambda,
                            caps,
                            PointMeta::VariableOrderPower {
                                report: Box::new(r.report),
                            },
                        ))
                    }
                    None => Ok(TracePoint {
                        meta: PointMeta::VariableOrderPower {
                            report: Box::new(r.report),
                        },
                        ..failed(lambda, m, Error::Usage(String::new()))
                    }),
                })
            }
            Strategy::PowerVariable => {
                fixed_order_policy(scn, &weight_order(lambda)).and_then(|p| {
                    let caps = policy_capacities(scn, &p)?;
                    let PowerPolicy::FixedOrder { order, alpha, .. } = p else {
                        unreachable!()
                    };
                    Ok(point(
                        lambda,
                        caps,
                        PointMeta::FixedOrderPower {
                            order: order.labels(),
                            alpha,
                        },
                    ))
                })
            }
        };
        points.push(res.unwrap_or_else(|e| failed(lambda, m, e)));
    }
    Ok(RegionTrace { strategy, points })
}

/// The per-frame policy a strategy settles on at weights `lambda`, in the
/// form the queue simulator consumes.
pub fn service_policy(scn: &Scenario, strategy: Strategy, lambda: &[f64]) -> Result<ServicePolicy> {
    service_policy_with(scn, strategy, lambda, &SolverOptions::default())
}

pub fn service_policy_with(
    scn: &Scenario,
    strategy: Strategy,
    lambda: &[f64],
    opts: &SolverOptions,
) -> Result<ServicePolicy> {
    let m = scn.m();
    check_weights(lambda, m)?;
    if matches!(
        strategy,
        Strategy::VariableOptimal | Strategy::PowerVariable
    ) && m != 2
    {
        return usage(format!("{strategy} is implemented for two users"));
    }
    let interior = lambda.iter().all(|l| *l > 0.0);
    Ok(match strategy {
        Strategy::FixedOrderTs => ServicePolicy::TimeSharing {
            tau: fixed_order_ts_optimize(scn, lambda)?.tau,
        },
        Strategy::VariableOptimal if interior => ServicePolicy::Partition {
            partition: optimal_partition_two_user(scn, lambda[0])?.partition(),
        },
        Strategy::VariableOptimal => ServicePolicy::Partition {
            partition: DecodingPartition::fixed(weight_order(lambda)),
        },
        Strategy::VariableLambdaRule => ServicePolicy::Partition {
            partition: DecodingPartition::lambda_rule(lambda.to_vec()),
        },
        Strategy::Tdma => ServicePolicy::Tdma {
            delta: tdma_optimize(scn, lambda)?.delta,
        },
        Strategy::PowerFixed => {
            let mut best: Option<(f64, PowerPolicy)> = None;
            for o in DecodingOrder::all(m) {
                let p = fixed_order_policy(scn, &o)?;
                let w = weighted_sum(lambda, &policy_capacities(scn, &p)?);
                if best.as_ref().is_none_or(|b| w > b.0) {
                    best = Some((w, p));
                }
            }
            ServicePolicy::Power {
                policy: best.unwrap().1,
            }
        }
        Strategy::PowerVariable if interior => {
            let part = DecodingPartition::lambda_rule(lambda.to_vec());
            let r = variable_order_policy(scn, &part, lambda, opts)?;
            match r.policy {
                Some(policy) => ServicePolicy::Power { policy },
                None => {
                    return Err(Error::NotConverged {
                        solver: "variable-order power control",
                        iterations: r.report.outer_iterations,
                        residual: r.report.phi_history.last().copied().unwrap_or(f64::NAN),
                        history: r.report.phi_history,
                    })
                }
            }
        }
        Strategy::PowerVariable => ServicePolicy::Power {
            policy: fixed_order_policy(scn, &weight_order(lambda))?,
        },
    })
}

fn meta_order(meta: &PointMeta) -> Vec<usize> {
    match meta {
        PointMeta::FixedOrderPower { order, .. } => order.clone(),
        _ => Vec::new(),
    }
}

/// Writes `lambda1,C1,C2,wsum,converged` rows (more `lambda`/`C` columns for
/// more users).
pub fn write_trace_csv<W: Write>(mut w: W, trace: &RegionTrace) -> std::io::Result<()> {
    let m = trace.points.first().map_or(2, |p| p.lambda.len());
    let lambdas = if m == 2 { 1 } else { m };
    let mut header: Vec<String> = (1..=lambdas).map(|j| format!("lambda{j}")).collect();
    header.extend((1..=m).map(|j| format!("C{j}")));
    header.push("wsum".into());
    header.push("converged".into());
    writeln!(w, "{}", header.join(","))?;
    for p in &trace.points {
        let mut row: Vec<String> = p.lambda[..lambdas].iter().map(|l| l.to_string()).collect();
        row.extend(p.capacities.iter().map(|c| c.value.to_string()));
        row.push(p.weighted_sum.to_string());
        row.push(p.converged.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub passed: bool,
    pub tolerance: f64,
    /// Distance of each traced point below the upper-right hull.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub worst_index: Option<usize>,
}

/// Absolute tolerance (bits/s/Hz) for a point to count as on the hull.
pub const HULL_TOLERANCE: f64 = 1e-3;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Upper hull by the monotone chain, left to right.
fn upper_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) >= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Checks that every converged two-user point lies on the upper-right
/// boundary of the convex hull of the trace (with the axes' projections
/// added), within [`HULL_TOLERANCE`].
pub fn convexity_check(trace: &RegionTrace) -> Result<ConvexityReport> {
    let pts: Vec<[f64; 2]> = trace
        .converged_points()
        .map(|p| {
            if p.capacities.len() != 2 {
                return usage("convexity check is implemented for two users");
            }
            Ok([p.capacities[0].value, p.capacities[1].value])
        })
        .collect::<Result<_>>()?;
    let mut report = ConvexityReport {
        passed: true,
        tolerance: HULL_TOLERANCE,
        gaps: vec![0.0; pts.len()],
        max_gap: 0.0,
        worst_index: None,
    };
    if pts.len() < 3 {
        return Ok(report);
    }
    let max0 = pts.iter().map(|p| p[0]).fold(0.0, f64::max);
    let max1 = pts.iter().map(|p| p[1]).fold(0.0, f64::max);
    let mut all = pts.clone();
    all.extend([[0.0, 0.0], [max0, 0.0], [0.0, max1]]);
    let hull = upper_hull(all);
    // outward normals of the upper hull facets that face the positive quadrant
    let facets: Vec<([f64; 2], f64)> = hull
        .windows(2)
        .filter_map(|e| {
            let (a, b) = (e[0], e[1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            if len == 0.0 {
                return None;
            }
            let n = [-dy / len, dx / len];
            (n[0] >= -1e-15 && n[1] >= -1e-15).then_some((n, n[0] * a[0] + n[1] * a[1]))
        })
        .collect();
    for (i, p) in pts.iter().enumerate() {
        let gap = facets
            .iter()
            .map(|(n, h)| h - (n[0] * p[0] + n[1] * p[1]))
            .fold(f64::INFINITY, f64::min);
        let gap = if gap.is_finite() { gap.max(0.0) } else { 0.0 };
        report.gaps[i] = gap;
        if gap > report.max_gap {
            report.max_gap = gap;
            report.worst_index = Some(i);
        }
    }
    report.passed = report.max_gap <= HULL_TOLERANCE;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub contained: bool,
    /// Largest `h_inner(λ) - h_outer(λ) - tolerance(λ)`, where `h` is the
    /// support function of a trace; positive values are violations.
    pub max_violation: f64,
    pub worst_lambda: Option<Vec<f64>>,
    /// `h_outer(λ) - h_inner(λ)` at each weight of the inner trace.
    pub gaps: Vec<(Vec<f64>, f64)>,
    pub largest_gap_lambda: Option<Vec<f64>>,
}

fn support(trace: &RegionTrace, lambda: &[f64]) -> Option<(f64, f64)> {
    trace
        .converged_points()
        .map(|p| {
            (
                weighted_sum(lambda, &p.capacities),
                weighted_error(lambda, &p.capacities),
            )
        })
        .fold(None, |b: Option<(f64, f64)>, c| match b {
            Some(b) if b.0 >= c.0 => Some(b),
            _ => Some(c),
        })
}

/// Checks `λ·C_inner ≤ λ·C_outer` up to three combined integration errors,
/// comparing support functions at every weight of the inner trace.
pub fn containment_check(inner: &RegionTrace, outer: &RegionTrace) -> ContainmentReport {
    let mut report = ContainmentReport {
        contained: true,
        max_violation: f64::NEG_INFINITY,
        worst_lambda: None,
        gaps: Vec::new(),
        largest_gap_lambda: None,
    };
    let mut largest = f64::NEG_INFINITY;
    for p in inner.converged_points() {
        let l = &p.lambda;
        let (Some((hi, ei)), Some((ho, eo))) = (support(inner, l), support(outer, l)) else {
            continue;
        };
        let tol = 3.0 * (ei + eo) + 1e-12;
        let violation = hi - ho - tol;
        if violation > report.max_violation {
            report.max_violation = violation;
            report.worst_lambda = Some(l.clone());
        }
        if ho - hi > largest {
            largest = ho - hi;
            report.largest_gap_lambda = Some(l.clone());
        }
        report.gaps.push((l.clone(), ho - hi));
    }
    report.contained = report.max_violation <= 0.0;
    report
}

/// `max_k λ_i·C_k - λ_i·C_i` for every point `i`: how far each point is from
/// attaining its own supporting hyperplane among the trace's points.
pub fn scalarization_gaps(trace: &RegionTrace) -> Vec<f64> {
    trace
        .points
        .iter()
        .map(|p| {
            if !p.converged {
                return f64::NAN;
            }
            let (best, _) = support(trace, &p.lambda).unwrap();
            best - p.weighted_sum
        })
        .collect()
}
