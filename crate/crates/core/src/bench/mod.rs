//! Experiment harness: generates fixtures, times chain verification under
//! each engine, and writes one CSV row per trial.
//!
//! All three experiments are grids over (levels, branches, conflict size).
//! They differ in defaults and in where the COI universe comes from:
//!
//! * depth: one branch, a fixed random universe
//! * branching: layered chains, so 50 levels with 4 branches stays small
//! * conflict: one universe per size from [`gen_conflict_sized_universe`]

mod manifest;
mod stats;

use std::io::{Read, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{
    extract_conflict_sets, gen_chain, gen_conflict_sized_universe, gen_er_graph, ChainTopology,
    Fixture, GenError, Shape,
};
use crate::label::{CoiUniverse, IntegrityLadder};
use crate::pdp::{self, PepClient, WireRequest};
use crate::policy::{
    AccessRequest, DenyReason, Engine, EngineMode, Outcome, PolicyError, RequestTarget,
};
use crate::store::{SharedStore, Store};

pub use manifest::{manifest_path, HardwareInfo, RunManifest};
pub use stats::{
    median, nondecreasing_within, percentile, spearman, summarize, PointKey, PointSummary, Speedup,
    Summary,
};

/// Competitors and conflict probability for the depth and branching
/// experiments' universe.
pub const DEFAULT_COMPETITORS: usize = 12;
pub const DEFAULT_CONFLICT_P: f64 = 0.3;
pub const DEFAULT_WARMUP: usize = 100;
pub const CSV_HEADER: &str = "model,experiment,levels,branches,conflict_size,trial,eval_time_ns";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("{context}: {source}")]
    Generation { context: String, source: GenError },
    #[error("{context}: {source}")]
    Policy {
        context: String,
        source: PolicyError,
    },
    #[error("{context}: unexpected Deny ({reason:?}); fixture bug")]
    UnexpectedDeny {
        context: String,
        reason: Option<DenyReason>,
    },
    #[error("service transport: {0}")]
    Service(String),
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Depth,
    Branching,
    #[serde(rename = "conflict")]
    ConflictSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[serde(rename = "inproc")]
    InProcess,
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub levels: Vec<usize>,
    pub branches: Vec<usize>,
    pub conflict_sizes: Vec<usize>,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub modes: Vec<EngineMode>,
    pub transport: Transport,
    /// `None` picks layered for branching and tree otherwise.
    pub shape: Option<Shape>,
    pub memoize: bool,
}

impl ExperimentSpec {
    /// Defaults for one experiment: the sweep it is known for, 1000
    /// trials, both engines where the comparison makes sense.
    pub fn defaults(experiment: Experiment) -> Self {
        let (levels, branches, sizes, modes) = match experiment {
            Experiment::Depth => (
                vec![10, 20, 30, 40, 50],
                vec![1],
                vec![1],
                vec![EngineMode::Unified, EngineMode::BaselineConjunction],
            ),
            Experiment::Branching => (
                vec![50],
                vec![1, 2, 4],
                vec![1],
                vec![EngineMode::Unified, EngineMode::BaselineConjunction],
            ),
            Experiment::ConflictSize => (
                vec![10],
                vec![1],
                (1..=50).collect(),
                vec![EngineMode::Unified],
            ),
        };
        Self {
            experiment,
            levels,
            branches,
            conflict_sizes: sizes,
            iterations: 1000,
            warmup: DEFAULT_WARMUP,
            seed: 1,
            modes,
            transport: Transport::InProcess,
            shape: None,
            memoize: true,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidSpec(m.into()));
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.modes.is_empty() {
            return bad("no engine mode selected");
        }
        for (name, list) in [
            ("levels", &self.levels),
            ("branches", &self.branches),
            ("conflict sizes", &self.conflict_sizes),
        ] {
            if list.is_empty() || list.contains(&0) {
                return Err(BenchError::InvalidSpec(format!(
                    "{name} must be a nonempty list of values >= 1"
                )));
            }
        }
        if self.experiment == Experiment::Depth && self.branches != [1] {
            return bad("the depth experiment uses single-branch chains");
        }
        if self.experiment != Experiment::ConflictSize && self.conflict_sizes != [1] {
            return bad("conflict sizes apply to the conflict experiment only");
        }
        Ok(())
    }

    fn shape(&self) -> Shape {
        self.shape.unwrap_or(match self.experiment {
            Experiment::Branching => Shape::Layered,
            _ => Shape::Tree,
        })
    }
}

/// One timed trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: EngineMode,
    pub experiment: Experiment,
    pub levels: usize,
    pub branches: usize,
    pub conflict_size: usize,
    pub trial: usize,
    pub eval_time_ns: u64,
}

/// The fixture behind one grid point, ready to be timed.
pub struct PreparedPoint {
    pub key: PointKey,
    pub fixture: Fixture,
    pub store: Store,
}

impl PreparedPoint {
    /// The verifier asking to verify the leaf's chain.
    pub fn request(&self) -> AccessRequest {
        AccessRequest {
            request_id: format!(
                "{}-{}-{}",
                self.key.levels, self.key.branches, self.key.conflict_size
            ),
            subject_id: self.fixture.verifier.technician_id.clone(),
            subject_label: self.fixture.verifier.label.clone(),
            target: RequestTarget::VerifyChain(self.fixture.leaf.clone()),
            as_of: None,
        }
    }
}

fn point_seed(seed: u64, key: &PointKey) -> u64 {
    seed ^ ((key.levels as u64) << 40) ^ ((key.branches as u64) << 24) ^ key.conflict_size as u64
}

/// Generates every fixture in the grid, in row order.
pub fn prepare(spec: &ExperimentSpec) -> Result<Vec<PreparedPoint>, BenchError> {
    spec.validate()?;
    let gen = |context: String| move |source| BenchError::Generation { context, source };
    let base_universe = match spec.experiment {
        Experiment::ConflictSize => None,
        _ => {
            let graph = gen_er_graph(DEFAULT_COMPETITORS, DEFAULT_CONFLICT_P, spec.seed)
                .map_err(gen("conflict graph".into()))?;
            Some(extract_conflict_sets(&graph))
        }
    };
    let mut points = Vec::new();
    for &size in &spec.conflict_sizes {
        let universe: CoiUniverse = match &base_universe {
            Some(u) => u.clone(),
            None => {
                gen_conflict_sized_universe(size, spec.seed.wrapping_add(size as u64))
                    .map_err(gen(format!("universe of conflict size {size}")))?
                    .universe
            }
        };
        for &levels in &spec.levels {
            for &branches in &spec.branches {
                let key = PointKey {
                    experiment: spec.experiment,
                    levels,
                    branches,
                    conflict_size: size,
                };
                let context = format!("{levels} levels, {branches} branches, conflict size {size}");
                let ladder = IntegrityLadder::new(levels as u32).expect("levels >= 1");
                let topology = ChainTopology {
                    depth: levels,
                    branches,
                    shape: spec.shape(),
                };
                let fixture = gen_chain(topology, &universe, &ladder, point_seed(spec.seed, &key))
                    .map_err(gen(context.clone()))?;
                let store = fixture.into_store().map_err(gen(context))?;
                points.push(PreparedPoint {
                    key,
                    fixture,
                    store,
                });
            }
        }
    }
    Ok(points)
}

fn expect_permit(
    outcome: Outcome,
    reason: Option<DenyReason>,
    key: &PointKey,
    mode: EngineMode,
) -> Result<(), BenchError> {
    if outcome == Outcome::Deny {
        return Err(BenchError::UnexpectedDeny {
            context: format!(
                "{mode} at {} levels, {} branches, conflict size {}",
                key.levels, key.branches, key.conflict_size
            ),
            reason,
        });
    }
    Ok(())
}

/// Times every point in process. Trials are interleaved across points
/// and modes, round by round, so drift and bursts of background load are
/// spread evenly instead of landing on one point.
pub fn time_in_process(
    points: &[PreparedPoint],
    modes: &[EngineMode],
    iterations: usize,
    warmup: usize,
    memoize: bool,
) -> Result<Vec<ResultRow>, BenchError> {
    let requests: Vec<AccessRequest> = points.iter().map(PreparedPoint::request).collect();
    let engines: Vec<Engine> = modes
        .iter()
        .map(|&m| Engine::new(m).with_memoization(memoize))
        .collect();
    let mut samples: Vec<Vec<Vec<u64>>> =
        vec![vec![Vec::with_capacity(iterations); modes.len()]; points.len()];
    for round in 0..warmup + iterations {
        for ((point, request), per_mode) in points.iter().zip(&requests).zip(samples.iter_mut()) {
            for (engine, out) in engines.iter().zip(per_mode.iter_mut()) {
                let d = engine
                    .timed_evaluate(request, &point.store)
                    .map_err(|source| BenchError::Policy {
                        context: format!(
                            "{} levels, {} branches",
                            point.key.levels, point.key.branches
                        ),
                        source,
                    })?;
                expect_permit(d.outcome, d.reason, &point.key, engine.mode())?;
                if round >= warmup {
                    out.push(d.evaluation_time.as_nanos().max(1) as u64);
                }
            }
        }
    }
    Ok(points
        .iter()
        .zip(samples)
        .flat_map(|(point, per_mode)| rows_for(point.key, modes, per_mode))
        .collect())
}

fn rows_for(key: PointKey, modes: &[EngineMode], samples: Vec<Vec<u64>>) -> Vec<ResultRow> {
    modes
        .iter()
        .zip(samples)
        .flat_map(|(&model, v)| {
            v.into_iter()
                .enumerate()
                .map(move |(trial, eval_time_ns)| ResultRow {
                    model,
                    experiment: key.experiment,
                    levels: key.levels,
                    branches: key.branches,
                    conflict_size: key.conflict_size,
                    trial,
                    eval_time_ns,
                })
        })
        .collect()
}

/// Times one point through a local decision service per mode. Only the
/// service-reported evaluation time is recorded.
pub fn time_over_service(
    runtime: &tokio::runtime::Runtime,
    point: PreparedPoint,
    modes: &[EngineMode],
    iterations: usize,
    warmup: usize,
) -> Result<Vec<ResultRow>, BenchError> {
    let key = point.key;
    let request = point.request();
    let store: SharedStore = point.store.into_shared();
    let service_err = |e: &dyn std::fmt::Display| BenchError::Service(e.to_string());
    runtime.block_on(async {
        let mut services = Vec::new();
        for &mode in modes {
            let s = pdp::spawn(store.clone(), mode, Duration::from_secs(5), "127.0.0.1:0")
                .await
                .map_err(|e| service_err(&e))?;
            services.push((PepClient::new(s.endpoint(), Duration::from_secs(5)), s));
        }
        let mut samples: Vec<Vec<u64>> = vec![Vec::with_capacity(iterations); modes.len()];
        for round in 0..warmup + iterations {
            for (((client, _), out), &mode) in services.iter().zip(samples.iter_mut()).zip(modes) {
                let mut wire = WireRequest::from(&request);
                wire.request_id = format!("{}-{round}", request.request_id);
                let resp = client.decide(&wire).await.map_err(|e| service_err(&e))?;
                expect_permit(resp.decision, resp.reason, &key, mode)?;
                if round >= warmup {
                    out.push(resp.eval_time_ns.max(1));
                }
            }
        }
        for (_, s) in services {
            s.shutdown().await.map_err(|e| service_err(&e))?;
        }
        Ok(rows_for(key, modes, samples))
    })
}

/// Runs every point of the grid. Any Deny aborts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, BenchError> {
    let points = prepare(spec)?;
    let mut rows = Vec::new();
    match spec.transport {
        Transport::InProcess => {
            rows = time_in_process(
                &points,
                &spec.modes,
                spec.iterations,
                spec.warmup,
                spec.memoize,
            )?;
        }
        Transport::Service => {
            if !spec.memoize {
                return Err(BenchError::InvalidSpec(
                    "the service always memoizes".into(),
                ));
            }
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            for point in points {
                rows.extend(time_over_service(
                    &runtime,
                    point,
                    &spec.modes,
                    spec.iterations,
                    spec.warmup,
                )?);
            }
        }
    }
    Ok(rows)
}

fn expect_experiment(spec: &ExperimentSpec, e: Experiment) -> Result<(), BenchError> {
    if spec.experiment != e {
        return Err(BenchError::InvalidSpec(format!(
            "expected a {e:?} spec, got {:?}",
            spec.experiment
        )));
    }
    Ok(())
}

pub fn run_depth_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, BenchError> {
    expect_experiment(spec, Experiment::Depth)?;
    run_experiment(spec)
}

pub fn run_branching_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, BenchError> {
    expect_experiment(spec, Experiment::Branching)?;
    run_experiment(spec)
}

pub fn run_conflict_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, BenchError> {
    expect_experiment(spec, Experiment::ConflictSize)?;
    run_experiment(spec)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ResultRow>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(BenchError::MalformedRow {
            line: 1,
            message: format!("header `{header}`, expected `{CSV_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| BenchError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: ResultRow = record
            .deserialize(None)
            .map_err(|e| BenchError::MalformedRow {
                line,
                message: e.to_string(),
            })?;
        if row.eval_time_ns == 0 {
            return Err(BenchError::MalformedRow {
                line,
                message: "eval_time_ns must be positive".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// An expectation about the shape of the results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Relative expectations for the experiment: the unified engine beats the
/// baseline at every paired point, unified latency does not fall as depth
/// or branching grows (one dip of at most 5% allowed), and latency rises
/// with conflict-set size.
pub fn check_expectations(experiment: Experiment, summary: &Summary) -> Vec<Check> {
    let mut checks = Vec::new();
    for s in &summary.speedups {
        checks.push(Check {
            name: format!(
                "unified faster at levels={} branches={} size={}",
                s.point.levels, s.point.branches, s.point.conflict_size
            ),
            passed: s.ratio < 1.0,
            detail: format!("ratio {:.3}", s.ratio),
        });
    }
    let unified: Vec<&PointSummary> = summary.for_model(EngineMode::Unified).collect();
    let sweep = |name: String, pts: Vec<(f64, f64)>, checks: &mut Vec<Check>| {
        if pts.len() < 2 {
            return;
        }
        let medians: Vec<f64> = pts.iter().map(|p| p.1).collect();
        checks.push(Check {
            name,
            passed: nondecreasing_within(&medians, 0.05, 1),
            detail: format!("medians {medians:?}"),
        });
    };
    match experiment {
        Experiment::Depth | Experiment::Branching => {
            let mut branch_set: Vec<usize> = unified.iter().map(|p| p.point.branches).collect();
            branch_set.dedup();
            let mut level_set: Vec<usize> = unified.iter().map(|p| p.point.levels).collect();
            level_set.sort_unstable();
            level_set.dedup();
            for &b in &branch_set {
                let mut pts: Vec<(f64, f64)> = unified
                    .iter()
                    .filter(|p| p.point.branches == b)
                    .map(|p| (p.point.levels as f64, p.median_ns))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                sweep(
                    format!("unified nondecreasing in depth (branches={b})"),
                    pts,
                    &mut checks,
                );
            }
            for &l in &level_set {
                let mut pts: Vec<(f64, f64)> = unified
                    .iter()
                    .filter(|p| p.point.levels == l)
                    .map(|p| (p.point.branches as f64, p.median_ns))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                sweep(
                    format!("unified nondecreasing in branches (levels={l})"),
                    pts,
                    &mut checks,
                );
            }
        }
        Experiment::ConflictSize => {
            let mut pts: Vec<(f64, f64)> = unified
                .iter()
                .map(|p| (p.point.conflict_size as f64, p.median_ns))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pts.len() >= 3 {
                let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
                let rho = spearman(&xs, &ys);
                checks.push(Check {
                    name: "spearman(conflict size, unified median) >= 0.8".into(),
                    passed: rho.is_some_and(|r| r >= 0.8),
                    detail: match rho {
                        Some(r) => format!("rho {r:.3}"),
                        None => "rho undefined (constant medians)".into(),
                    },
                });
            }
            if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
                if pts.len() >= 2 {
                    checks.push(Check {
                        name: "largest conflict size no faster than smallest".into(),
                        passed: last.1 >= first.1,
                        detail: format!(
                            "size {} -> {}ns, size {} -> {}ns",
                            first.0, first.1, last.0, last.1
                        ),
                    });
                }
            }
        }
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(experiment: Experiment) -> ExperimentSpec {
        ExperimentSpec {
            levels: vec![1],
            iterations: 1,
            warmup: 0,
            ..ExperimentSpec::defaults(experiment)
        }
    }

    #[test]
    fn one_level_one_trial_is_one_row_per_mode() {
        let rows = run_depth_experiment(&tiny(Experiment::Depth)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].model, EngineMode::Unified);
        assert_eq!(rows[1].model, EngineMode::BaselineConjunction);
        assert!(rows.iter().all(|r| r.eval_time_ns > 0));
    }

    #[test]
    fn one_conflict_size_one_trial_is_one_row() {
        let spec = ExperimentSpec {
            conflict_sizes: vec![1],
            ..tiny(Experiment::ConflictSize)
        };
        assert_eq!(run_conflict_experiment(&spec).unwrap().len(), 1);
    }

    #[test]
    fn single_node_branching_matches_depth_case() {
        let depth = prepare(&tiny(Experiment::Depth)).unwrap();
        let branching = prepare(&ExperimentSpec {
            branches: vec![2],
            ..tiny(Experiment::Branching)
        })
        .unwrap();
        assert_eq!(depth[0].fixture.reports.len(), 1);
        assert_eq!(branching[0].fixture.reports.len(), 1);
        assert_eq!(
            depth[0].fixture.reports[0].label,
            branching[0].fixture.reports[0].label
        );
    }

    #[test]
    fn invalid_specs() {
        let mut s = tiny(Experiment::Depth);
        s.iterations = 0;
        assert!(matches!(s.validate(), Err(BenchError::InvalidSpec(_))));
        let mut s = tiny(Experiment::Depth);
        s.levels = vec![3, 0];
        assert!(s.validate().is_err());
        let mut s = tiny(Experiment::Depth);
        s.branches = vec![2];
        assert!(s.validate().is_err());
        assert!(run_branching_experiment(&tiny(Experiment::Depth)).is_err());
    }

    #[test]
    fn same_seed_same_fixtures() {
        let spec = ExperimentSpec {
            levels: vec![6],
            branches: vec![1, 2],
            ..tiny(Experiment::Branching)
        };
        let a = prepare(&spec).unwrap();
        let b = prepare(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.fixture, y.fixture);
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_depth_experiment(&ExperimentSpec {
            levels: vec![2, 3],
            iterations: 3,
            ..tiny(Experiment::Depth)
        })
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("unified,depth,2,1,1,0,"));
        let parsed = parse_csv(&buf[..]).unwrap();
        assert_eq!(parsed, rows);
        assert_eq!(summarize(&parsed), summarize(&rows));
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = format!("{CSV_HEADER}\nunified,depth,2,1,1,0,10\nunified,depth,x,1,1,1,10\n");
        match parse_csv(text.as_bytes()) {
            Err(BenchError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = format!("{CSV_HEADER}\nunified,depth,2,1,1,0,0\n");
        assert!(matches!(
            parse_csv(text.as_bytes()),
            Err(BenchError::MalformedRow { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("a,b\n1,2\n".as_bytes()),
            Err(BenchError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn speedup_is_unified_over_baseline() {
        let row = |model, ns| ResultRow {
            model,
            experiment: Experiment::Depth,
            levels: 5,
            branches: 1,
            conflict_size: 1,
            trial: 0,
            eval_time_ns: ns,
        };
        let s = summarize(&[
            row(EngineMode::Unified, 1),
            row(EngineMode::Unified, 3),
            row(EngineMode::BaselineConjunction, 8),
        ]);
        assert_eq!(s.speedups.len(), 1);
        assert_eq!(s.speedups[0].ratio, 0.25);
        let checks = check_expectations(Experiment::Depth, &s);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
