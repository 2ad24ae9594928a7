//! Speedup-factor experiments on the counterexample family.
//!
//! [`min_feasible_speed_federated`] brackets the smallest speed at which
//! [`allocate_federated`] succeeds, [`speedup_sweep`] runs it over a grid of
//! `(M, N, K)` and compares against [`theorem_speedup_bound`], and
//! [`brute_force_federated_oracle`] decides small instances exhaustively.
//!
//! The oracle judges exclusive clusters with the same list-scheduling model
//! the allocator uses, so any disagreement between the two comes from the
//! packing decisions alone. Optimal DAG scheduling inside a cluster is not
//! attempted.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feasibility::{partition_counterexample, partitioned_feasible, uniprocessor_edf_feasible, DemandItem};
use crate::federated::{
    allocate_federated, sequential_item, theorem_speedup_bound, total_demand_lower_bound, FederatedError,
};
use crate::generator::{build_counterexample, CounterexampleParams};
use crate::simulator::{simulate_list_schedule, simulate_partitioned_edf, SimulationError};
use crate::task_model::{Platform, TaskSet};
use crate::time::ExactTime;

pub const ORACLE_MAX_TASKS: usize = 5;
pub const ORACLE_MAX_PROCESSORS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplorerError {
    #[error("bracket precondition failed: allocation is already feasible at lower end {0}")]
    FeasibleAtLow(ExactTime),
    #[error("bracket precondition failed: allocation is infeasible at upper end {0}")]
    InfeasibleAtHigh(ExactTime),
    #[error("invalid bracket: need 0 < lo < hi and precision > 0")]
    BadBracket,
    #[error("oracle is limited to N <= {ORACLE_MAX_TASKS} and M <= {ORACLE_MAX_PROCESSORS}, got N = {tasks}, M = {processors}")]
    OracleTooLarge { tasks: usize, processors: usize },
    #[error("(M={processors}, N={tasks}, K={growth}): {source}")]
    Row {
        processors: usize,
        tasks: usize,
        growth: ExactTime,
        #[source]
        source: Box<ExplorerError>,
    },
    #[error(transparent)]
    Federated(#[from] FederatedError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// `[infeasible, feasible]` with `feasible - infeasible <= precision`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpeedBracket {
    pub infeasible: ExactTime,
    pub feasible: ExactTime,
}

fn federated_feasible(ts: &TaskSet, processors: usize, speed: &ExactTime) -> Result<bool, ExplorerError> {
    let plat = Platform { processors, speed: speed.clone() };
    Ok(allocate_federated(ts, &plat)?.is_feasible())
}

/// Bisects `[lo, hi]` until its width is at most `precision`. The returned
/// upper end is a speed where the allocator succeeds and the lower end one
/// where it fails.
pub fn min_feasible_speed_federated(
    ts: &TaskSet,
    processors: usize,
    lo: ExactTime,
    hi: ExactTime,
    precision: &ExactTime,
) -> Result<SpeedBracket, ExplorerError> {
    if !lo.is_positive() || lo >= hi || !precision.is_positive() {
        return Err(ExplorerError::BadBracket);
    }
    if federated_feasible(ts, processors, &lo)? {
        return Err(ExplorerError::FeasibleAtLow(lo));
    }
    if !federated_feasible(ts, processors, &hi)? {
        return Err(ExplorerError::InfeasibleAtHigh(hi));
    }
    let (mut lo, mut hi) = (lo, hi);
    let two = ExactTime::from(2);
    while &hi - &lo > *precision {
        let mid = (&lo + &hi) / &two;
        if federated_feasible(ts, processors, &mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SpeedBracket { infeasible: lo, feasible: hi })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpeedupRow {
    pub processors: usize,
    pub tasks: usize,
    pub growth: ExactTime,
    pub theorem_bound: ExactTime,
    pub min_feasible_speed: SpeedBracket,
    /// Probe speed just below the bound, where every task is heavy.
    pub probe_speed: ExactTime,
    /// `sum ceil(C_i / (D_i s))` at the probe speed.
    pub demand_at_probe: ExactTime,
    /// Canonical partition passes the demand test and simulates without
    /// misses at unit speed.
    pub feasible_optimal_at_1: bool,
}

fn sweep_row(p: &CounterexampleParams, precision: &ExactTime) -> Result<SpeedupRow, ExplorerError> {
    let ts = build_counterexample(p);
    let m = p.processors();
    let unit = Platform::unit_speed(m).expect("M >= 2");
    let pa = partition_counterexample(&ts, m).map_err(SimulationError::from)?;
    let analysed = partitioned_feasible(&ts, &pa, &unit).map_err(SimulationError::from)?;
    let simulated = simulate_partitioned_edf(&ts, &pa, &unit, None)?.is_miss_free();

    let bound = theorem_speedup_bound(m, p.tasks(), p.growth())?;
    let half = &bound / ExactTime::from(2);
    let probe = (&bound - precision).max(half.clone());
    let demand_at_probe = total_demand_lower_bound(&ts, &probe)?;

    // Every task is heavy below the bound, so bound/2 is infeasible; at
    // s = M the prefix-sum identity lets one processor host everything.
    let bracket = min_feasible_speed_federated(&ts, m, half, ExactTime::from(m), precision)?;

    Ok(SpeedupRow {
        processors: m,
        tasks: p.tasks(),
        growth: p.growth().clone(),
        theorem_bound: bound,
        min_feasible_speed: bracket,
        probe_speed: probe,
        demand_at_probe,
        feasible_optimal_at_1: analysed && simulated,
    })
}

/// One row per grid point, in grid order. Rows are computed in parallel.
pub fn speedup_sweep(grid: &[CounterexampleParams], precision: &ExactTime) -> Result<Vec<SpeedupRow>, ExplorerError> {
    grid.par_iter()
        .map(|p| {
            sweep_row(p, precision).map_err(|e| ExplorerError::Row {
                processors: p.processors(),
                tasks: p.tasks(),
                growth: p.growth().clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// Exhaustive federated schedulability for small instances.
///
/// Every task either gets an exclusive cluster of `1..=M` processors, judged
/// by list-scheduling makespan against its deadline, or runs sequentially on
/// one of the shared processors left over, judged by the uniprocessor EDF
/// demand test. Returns true iff some configuration fits on `M` processors.
pub fn brute_force_federated_oracle(ts: &TaskSet, plat: &Platform) -> Result<bool, ExplorerError> {
    let (n, m) = (ts.len(), plat.processors);
    if n > ORACLE_MAX_TASKS || m > ORACLE_MAX_PROCESSORS {
        return Err(ExplorerError::OracleTooLarge { tasks: n, processors: m });
    }
    let speed = &plat.speed;

    // cluster_ok[i][c - 1]: task i meets its deadline alone on c processors
    let mut cluster_ok = Vec::with_capacity(n);
    for task in &ts.tasks {
        let mut row = Vec::with_capacity(m);
        for c in 1..=m {
            let trace = simulate_list_schedule(task, c, speed)?;
            row.push(trace.makespan() <= task.deadline);
        }
        cluster_ok.push(row);
    }
    let items: Vec<DemandItem> = ts.tasks.iter().map(sequential_item).collect();

    // choice[i] = 0 for shared, c >= 1 for an exclusive cluster of size c
    let mut choice = vec![0usize; n];
    let mut memo = HashMap::new();
    loop {
        let clusters: usize = choice.iter().sum();
        let clusters_ok = choice
            .iter()
            .enumerate()
            .all(|(i, &c)| c == 0 || cluster_ok[i][c - 1]);
        if clusters <= m && clusters_ok {
            let shared: Vec<usize> = (0..n).filter(|&i| choice[i] == 0).collect();
            if shared_fits(&shared, &items, m - clusters, speed, &mut memo)? {
                return Ok(true);
            }
        }
        // odometer over {0..=m}^n
        let mut i = 0;
        loop {
            if i == n {
                return Ok(false);
            }
            choice[i] += 1;
            if choice[i] <= m {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Whether the tasks in `shared` can be split over `slots` processors so
/// that each processor passes the EDF test. Memoized per task subset.
fn shared_fits(
    shared: &[usize],
    items: &[DemandItem],
    slots: usize,
    speed: &ExactTime,
    memo: &mut HashMap<u32, bool>,
) -> Result<bool, ExplorerError> {
    if shared.is_empty() {
        return Ok(true);
    }
    if slots == 0 {
        return Ok(false);
    }
    let mut bins: Vec<Vec<usize>> = Vec::new();
    assign_shared(shared, 0, &mut bins, items, slots, speed, memo)
}

fn assign_shared(
    shared: &[usize],
    next: usize,
    bins: &mut Vec<Vec<usize>>,
    items: &[DemandItem],
    slots: usize,
    speed: &ExactTime,
    memo: &mut HashMap<u32, bool>,
) -> Result<bool, ExplorerError> {
    if next == shared.len() {
        for bin in bins.iter() {
            let mask = bin.iter().fold(0u32, |acc, &i| acc | (1 << i));
            let ok = match memo.get(&mask) {
                Some(&ok) => ok,
                None => {
                    let load: Vec<DemandItem> = bin.iter().map(|&i| items[i].clone()).collect();
                    let ok = uniprocessor_edf_feasible(&load, speed).map_err(FederatedError::from)?;
                    memo.insert(mask, ok);
                    ok
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        return Ok(true);
    }
    let task = shared[next];
    // every set partition once: join an existing bin or open the next one
    for b in 0..bins.len() {
        bins[b].push(task);
        let ok = assign_shared(shared, next + 1, bins, items, slots, speed, memo)?;
        bins[b].pop();
        if ok {
            return Ok(true);
        }
    }
    if bins.len() < slots {
        bins.push(vec![task]);
        let ok = assign_shared(shared, next + 1, bins, items, slots, speed, memo)?;
        bins.pop();
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Parses `"M,N,K;M,N,K;..."`.
pub fn parse_grid(spec: &str) -> Result<Vec<CounterexampleParams>, String> {
    spec.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|triple| {
            let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
            let [m, n, k] = parts.as_slice() else {
                return Err(format!("grid entry `{triple}` must be M,N,K"));
            };
            let m: usize = m.parse().map_err(|_| format!("grid entry `{triple}`: bad M"))?;
            let n: usize = n.parse().map_err(|_| format!("grid entry `{triple}`: bad N"))?;
            let k: ExactTime = k.parse().map_err(|e| format!("grid entry `{triple}`: {e}"))?;
            CounterexampleParams::new(m, n, k).map_err(|e| format!("grid entry `{triple}`: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task_model::DagTask;
    use crate::time::{ratio, Period};

    fn t(n: i64) -> ExactTime {
        ExactTime::from(n)
    }

    fn params(m: usize, n: usize, k: i64) -> CounterexampleParams {
        CounterexampleParams::new(m, n, t(k)).unwrap()
    }

    #[test]
    fn bracket_on_table_instance() {
        let ts = build_counterexample(&params(10, 10, 2));
        let b = min_feasible_speed_federated(&ts, 10, t(1), t(20), &ratio(1, 1024)).unwrap();
        assert!(b.infeasible >= t(5));
        assert!(b.feasible <= ratio(45, 8));
        assert!(&b.feasible - &b.infeasible <= ratio(1, 1024));
    }

    #[test]
    fn bracket_on_smallest_instance() {
        let ts = build_counterexample(&params(2, 2, 2));
        let b = min_feasible_speed_federated(&ts, 2, ratio(1, 2), t(4), &ratio(1, 64)).unwrap();
        // threshold is exactly 2; bisection brackets it
        assert!(b.infeasible < t(2) && t(2) <= b.feasible);
        assert!(federated_feasible(&ts, 2, &t(2)).unwrap());
    }

    #[test]
    fn bracket_preconditions() {
        let ts = build_counterexample(&params(2, 2, 2));
        assert_eq!(
            min_feasible_speed_federated(&ts, 2, t(3), t(4), &ratio(1, 64)),
            Err(ExplorerError::FeasibleAtLow(t(3)))
        );
        assert!(min_feasible_speed_federated(&ts, 2, ratio(1, 4), ratio(1, 2), &ratio(1, 64)).is_err());
        assert_eq!(
            min_feasible_speed_federated(&ts, 2, t(4), t(3), &ratio(1, 64)),
            Err(ExplorerError::BadBracket)
        );
    }

    #[test]
    fn sweep_rows() {
        assert!(speedup_sweep(&[], &ratio(1, 64)).unwrap().is_empty());
        let grid = vec![params(10, 10, 2), params(4, 4, 2), params(6, 6, 2), params(8, 8, 2)];
        let rows = speedup_sweep(&grid, &ratio(1, 256)).unwrap();
        assert_eq!(rows[0].theorem_bound, t(5));
        for (row, p) in rows.iter().zip(&grid) {
            assert_eq!(row.processors, p.processors());
            assert!(row.feasible_optimal_at_1);
            assert!(row.min_feasible_speed.feasible >= &row.theorem_bound - ratio(1, 256));
            assert!(row.demand_at_probe > t(p.processors() as i64));
        }
        for row in &rows[1..] {
            assert_eq!(row.theorem_bound, ExactTime::new(row.processors as i64, 2));
        }
    }

    #[test]
    fn oracle_examples() {
        let ts = build_counterexample(&params(2, 2, 2));
        assert!(!brute_force_federated_oracle(&ts, &Platform::unit_speed(2).unwrap()).unwrap());
        assert!(brute_force_federated_oracle(&ts, &Platform::new(2, t(2)).unwrap()).unwrap());
        let one = TaskSet::new("one", vec![DagTask::from_wcets(1, vec![t(1)], t(2), Period::Infinite, vec![])]);
        assert!(brute_force_federated_oracle(&one, &Platform::unit_speed(1).unwrap()).unwrap());
        let big = build_counterexample(&params(5, 2, 2));
        assert!(matches!(
            brute_force_federated_oracle(&big, &Platform::unit_speed(5).unwrap()),
            Err(ExplorerError::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_finds_sharing() {
        // tasks 1 and 2 share a processor; task 3 needs a 2-processor cluster
        let ts = TaskSet::new(
            "mix",
            vec![
                DagTask::from_wcets(1, vec![t(1)], t(2), Period::Infinite, vec![]),
                DagTask::from_wcets(2, vec![t(1)], t(4), Period::Infinite, vec![]),
                DagTask::from_wcets(3, vec![t(2), t(2)], t(2), Period::Infinite, vec![]),
            ],
        );
        assert!(brute_force_federated_oracle(&ts, &Platform::unit_speed(3).unwrap()).unwrap());
        assert!(!brute_force_federated_oracle(&ts, &Platform::unit_speed(2).unwrap()).unwrap());
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("10,10,2; 4,4,5/2").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].growth(), &ratio(5, 2));
        assert!(parse_grid("10,10").is_err());
        assert!(parse_grid("1,10,2").is_err());
        assert!(parse_grid("a,1,2").is_err());
    }
}
