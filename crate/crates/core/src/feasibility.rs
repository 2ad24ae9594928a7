//! Demand bound functions and EDF feasibility on partitioned processors.
//!
//! On a single preemptive processor EDF meets every deadline iff, for every
//! interval length `t`, the total demand bound `sum dbf_i(t)` is at most the
//! supply `s * t`. The demand only changes at absolute deadlines, so only
//! those points are tested: `{D_i}` for single-job tasks, and
//! `D_i + k T_i` up to `max D + 2 lcm(T)` for sporadic ones (together with a
//! utilization check).

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::task_model::{Platform, TaskSet};
use crate::time::{ExactTime, Period};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeasibilityError {
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(ExactTime),
    #[error("task {task} has {found} subtasks, expected {expected}")]
    SubtaskCount { task: usize, found: usize, expected: usize },
    #[error("task {task} has precedence edges; partitioned analysis needs independent subtasks")]
    PrecedenceEdges { task: usize },
    #[error("subtask {subtask} of task {task} is not assigned to a processor")]
    Unassigned { task: usize, subtask: usize },
    #[error("processor {processor} is outside 1..={processors}")]
    ProcessorOutOfRange { processor: usize, processors: usize },
    #[error("assignment refers to unknown subtask {subtask} of task {task}")]
    UnknownSubtask { task: usize, subtask: usize },
}

/// One sequential unit of demand on a processor: `work` due `deadline` after
/// each release, releases at least `period` apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemandItem {
    pub work: ExactTime,
    pub deadline: ExactTime,
    pub period: Period,
}

impl DemandItem {
    pub fn new(work: ExactTime, deadline: ExactTime, period: Period) -> Self {
        DemandItem { work, deadline, period }
    }

    /// A single job.
    pub fn once(work: ExactTime, deadline: ExactTime) -> Self {
        DemandItem::new(work, deadline, Period::Infinite)
    }
}

/// Maximum execution demand of jobs with release and deadline inside any
/// window of length `t`.
pub fn dbf(work: &ExactTime, deadline: &ExactTime, period: &Period, t: &ExactTime) -> ExactTime {
    match period {
        Period::Infinite => {
            if t >= deadline {
                work.clone()
            } else {
                ExactTime::zero()
            }
        }
        Period::Finite(p) => {
            let jobs = ((t - deadline) / p).floor() + ExactTime::one();
            if jobs.is_positive() {
                jobs * work
            } else {
                ExactTime::zero()
            }
        }
    }
}

fn item_dbf(item: &DemandItem, t: &ExactTime) -> ExactTime {
    dbf(&item.work, &item.deadline, &item.period, t)
}

/// Testing horizon: `max D` if every item is a single job, else
/// `max D + 2 lcm(periods)`.
pub fn testing_horizon(items: &[DemandItem]) -> ExactTime {
    let max_deadline = items
        .iter()
        .map(|i| i.deadline.clone())
        .max()
        .unwrap_or_else(ExactTime::zero);
    let hyper = items
        .iter()
        .filter_map(|i| i.period.finite())
        .fold(None, |acc: Option<ExactTime>, p| match acc {
            None => Some(p.clone()),
            Some(h) => Some(h.lcm(p)),
        });
    match hyper {
        Some(h) => max_deadline + ExactTime::from(2) * h,
        None => max_deadline,
    }
}

/// Sorted, deduplicated absolute deadlines up to the testing horizon.
pub fn test_points(items: &[DemandItem]) -> Vec<ExactTime> {
    let horizon = testing_horizon(items);
    let mut points = Vec::new();
    for item in items {
        match &item.period {
            Period::Infinite => points.push(item.deadline.clone()),
            Period::Finite(p) => {
                let mut t = item.deadline.clone();
                while t <= horizon {
                    points.push(t.clone());
                    t += p;
                }
            }
        }
    }
    points.sort();
    points.dedup();
    points
}

/// Demand breakpoints `(t, sum dbf(t))` at every test point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemandProfile {
    pub breakpoints: Vec<(ExactTime, ExactTime)>,
}

impl DemandProfile {
    pub fn of(items: &[DemandItem]) -> Self {
        let breakpoints = test_points(items)
            .into_iter()
            .map(|t| {
                let demand = items.iter().map(|i| item_dbf(i, &t)).sum();
                (t, demand)
            })
            .collect();
        DemandProfile { breakpoints }
    }

    /// Total demand at `t` (step function, right-continuous).
    pub fn demand_at(&self, t: &ExactTime) -> ExactTime {
        self.breakpoints
            .iter()
            .take_while(|(bt, _)| bt <= t)
            .last()
            .map(|(_, d)| d.clone())
            .unwrap_or_else(ExactTime::zero)
    }

    /// First test point where demand exceeds `speed * t`.
    pub fn first_overload(&self, speed: &ExactTime) -> Option<&(ExactTime, ExactTime)> {
        self.breakpoints.iter().find(|(t, d)| *d > speed * t)
    }
}

fn utilization(items: &[DemandItem]) -> ExactTime {
    items
        .iter()
        .filter_map(|i| i.period.finite().map(|p| &i.work / p))
        .sum()
}

/// Exact preemptive-EDF feasibility of `items` on one processor of speed `s`.
pub fn uniprocessor_edf_feasible(items: &[DemandItem], speed: &ExactTime) -> Result<bool, FeasibilityError> {
    if !speed.is_positive() {
        return Err(FeasibilityError::NonPositiveSpeed(speed.clone()));
    }
    if utilization(items) > *speed {
        return Ok(false);
    }
    Ok(DemandProfile::of(items).first_overload(speed).is_none())
}

/// Static map from `(task id, subtask id)` to a processor in `1..=M`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PartitionedAssignment {
    processors: usize,
    mapping: BTreeMap<(usize, usize), usize>,
}

impl PartitionedAssignment {
    pub fn new(processors: usize) -> Self {
        PartitionedAssignment { processors, mapping: BTreeMap::new() }
    }

    pub fn assign(&mut self, task: usize, subtask: usize, processor: usize) -> Result<(), FeasibilityError> {
        if processor == 0 || processor > self.processors {
            return Err(FeasibilityError::ProcessorOutOfRange { processor, processors: self.processors });
        }
        self.mapping.insert((task, subtask), processor);
        Ok(())
    }

    pub fn processor_of(&self, task: usize, subtask: usize) -> Option<usize> {
        self.mapping.get(&(task, subtask)).copied()
    }

    pub fn processors(&self) -> usize {
        self.processors
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.mapping.iter().map(|(&(t, s), &p)| (t, s, p))
    }

    /// Checks that every subtask of `ts` is mapped and nothing else is.
    pub fn check_covers(&self, ts: &TaskSet) -> Result<(), FeasibilityError> {
        for task in &ts.tasks {
            for sub in &task.subtasks {
                if self.processor_of(task.id, sub.id).is_none() {
                    return Err(FeasibilityError::Unassigned { task: task.id, subtask: sub.id });
                }
            }
        }
        for &(task, subtask) in self.mapping.keys() {
            if ts.task(task).and_then(|t| t.subtask(subtask)).is_none() {
                return Err(FeasibilityError::UnknownSubtask { task, subtask });
            }
        }
        Ok(())
    }
}

/// The static partition from the feasibility argument: the `k`-th subtask of
/// every task runs on processor `k`.
pub fn partition_counterexample(ts: &TaskSet, processors: usize) -> Result<PartitionedAssignment, FeasibilityError> {
    let mut pa = PartitionedAssignment::new(processors);
    for task in &ts.tasks {
        if task.subtasks.len() != processors {
            return Err(FeasibilityError::SubtaskCount {
                task: task.id,
                found: task.subtasks.len(),
                expected: processors,
            });
        }
        for (k, sub) in task.subtasks.iter().enumerate() {
            pa.assign(task.id, sub.id, k + 1)?;
        }
    }
    Ok(pa)
}

/// Items assigned to each processor; index 0 is processor 1.
pub fn processor_items(ts: &TaskSet, pa: &PartitionedAssignment) -> Result<Vec<Vec<DemandItem>>, FeasibilityError> {
    if let Some(task) = ts.tasks.iter().find(|t| !t.edges.is_empty()) {
        return Err(FeasibilityError::PrecedenceEdges { task: task.id });
    }
    pa.check_covers(ts)?;
    let mut per_proc = vec![Vec::new(); pa.processors()];
    for task in &ts.tasks {
        for sub in &task.subtasks {
            let p = pa.processor_of(task.id, sub.id).expect("coverage checked");
            per_proc[p - 1].push(DemandItem::new(
                sub.wcet.clone(),
                task.deadline.clone(),
                task.period.clone(),
            ));
        }
    }
    Ok(per_proc)
}

/// True iff every processor's items pass the EDF demand test at the
/// platform speed.
pub fn partitioned_feasible(ts: &TaskSet, pa: &PartitionedAssignment, plat: &Platform) -> Result<bool, FeasibilityError> {
    for items in processor_items(ts, pa)? {
        if !uniprocessor_edf_feasible(&items, &plat.speed)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_counterexample, CounterexampleParams};
    use crate::task_model::{DagTask, Platform};
    use crate::time::ratio;
    use proptest::prelude::*;

    fn t(n: i64) -> ExactTime {
        ExactTime::from(n)
    }

    fn table_instance() -> TaskSet {
        build_counterexample(&CounterexampleParams::new(10, 10, t(2)).unwrap())
    }

    /// Processor-1 items of the table instance: (1,1), (1,2), (2,4), (4,8), ...
    fn processor_load() -> Vec<DemandItem> {
        let mut items = vec![DemandItem::once(t(1), t(1))];
        for i in 2..=10u32 {
            items.push(DemandItem::once(t(2).pow(i - 2), t(2).pow(i - 1)));
        }
        items
    }

    #[test]
    fn dbf_examples() {
        assert_eq!(dbf(&t(10), &t(2), &Period::Infinite, &t(1)), t(0));
        assert_eq!(dbf(&t(10), &t(2), &Period::Infinite, &t(2)), t(10));
        // deadlines 2, 7, 12 all inside [0, 12]
        assert_eq!(dbf(&t(3), &t(2), &Period::Finite(t(5)), &t(12)), t(9));
        assert_eq!(dbf(&t(3), &t(2), &Period::Finite(t(5)), &ratio(23, 2)), t(6));
        assert_eq!(dbf(&t(3), &t(2), &Period::Finite(t(5)), &t(0)), t(0));
    }

    #[test]
    fn counterexample_processor_exactly_full() {
        let items = processor_load();
        assert!(uniprocessor_edf_feasible(&items, &t(1)).unwrap());
        let profile = DemandProfile::of(&items);
        assert_eq!(profile.breakpoints.len(), 10);
        for (tp, demand) in &profile.breakpoints {
            assert_eq!(demand, tp);
        }
        assert!(!uniprocessor_edf_feasible(&items, &ratio(99, 100)).unwrap());
    }

    #[test]
    fn empty_and_bad_speed() {
        assert!(uniprocessor_edf_feasible(&[], &ratio(1, 1000)).unwrap());
        assert!(uniprocessor_edf_feasible(&[], &t(0)).is_err());
    }

    #[test]
    fn periodic_overload_caught_by_utilization() {
        // each job fits alone but U = 3/5 + 3/5 > 1
        let items = vec![
            DemandItem::new(t(3), t(5), Period::Finite(t(5))),
            DemandItem::new(t(3), t(5), Period::Finite(t(5))),
        ];
        assert!(!uniprocessor_edf_feasible(&items, &t(1)).unwrap());
        assert!(uniprocessor_edf_feasible(&items, &ratio(6, 5)).unwrap());
    }

    #[test]
    fn periodic_test_points_reach_horizon() {
        let items = vec![
            DemandItem::new(t(1), t(2), Period::Finite(t(3))),
            DemandItem::new(t(1), t(4), Period::Finite(t(4))),
        ];
        // horizon = 4 + 2*12 = 28
        assert_eq!(testing_horizon(&items), t(28));
        let pts = test_points(&items);
        assert_eq!(pts.first(), Some(&t(2)));
        assert_eq!(pts.last(), Some(&t(28)));
    }

    #[test]
    fn canonical_partition() {
        let ts = build_counterexample(&CounterexampleParams::new(3, 2, t(2)).unwrap());
        let pa = partition_counterexample(&ts, 3).unwrap();
        assert_eq!(pa.processor_of(1, 2), Some(2));
        assert_eq!(pa.processor_of(2, 2), Some(2));

        let big = table_instance();
        let pa = partition_counterexample(&big, 10).unwrap();
        for task in &big.tasks {
            let mut procs: Vec<_> = task.subtasks.iter().map(|s| pa.processor_of(task.id, s.id).unwrap()).collect();
            procs.dedup();
            assert_eq!(procs.len(), 10);
        }
        assert!(matches!(
            partition_counterexample(&big, 9),
            Err(FeasibilityError::SubtaskCount { task: 1, found: 10, expected: 9 })
        ));
    }

    #[test]
    fn single_processor_partition() {
        let ts = TaskSet::new(
            "uni",
            (1..=3).map(|i| DagTask::from_wcets(i, vec![t(1)], t(10), Period::Infinite, vec![])).collect(),
        );
        let pa = partition_counterexample(&ts, 1).unwrap();
        assert!(pa.iter().all(|(_, _, p)| p == 1));
    }

    #[test]
    fn partitioned_counterexample_verdicts() {
        let ts = table_instance();
        let pa = partition_counterexample(&ts, 10).unwrap();
        let at = |s: ExactTime| partitioned_feasible(&ts, &pa, &Platform::new(10, s).unwrap()).unwrap();
        assert!(at(t(1)));
        assert!(!at(ratio(1, 2)));
        assert!(at(t(2)));
    }

    #[test]
    fn partitioned_rejects_edges_and_gaps() {
        let mut ts = table_instance();
        let pa = partition_counterexample(&ts, 10).unwrap();
        let plat = Platform::unit_speed(10).unwrap();
        ts.tasks[3].edges.push((1, 2));
        assert_eq!(
            partitioned_feasible(&ts, &pa, &plat),
            Err(FeasibilityError::PrecedenceEdges { task: 4 })
        );
        ts.tasks[3].edges.clear();
        let mut partial = PartitionedAssignment::new(10);
        partial.assign(1, 1, 1).unwrap();
        assert!(matches!(
            partitioned_feasible(&ts, &partial, &plat),
            Err(FeasibilityError::Unassigned { .. })
        ));
        assert!(partial.assign(1, 1, 11).is_err());
    }

    fn arb_item() -> impl Strategy<Value = DemandItem> {
        (1i64..20, 1i64..30, prop::option::of(0i64..10)).prop_map(|(w, d, p)| {
            let period = match p {
                Some(extra) => Period::Finite(t(d + extra)),
                None => Period::Infinite,
            };
            DemandItem::new(t(w), t(d), period)
        })
    }

    proptest! {
        #[test]
        fn dbf_monotone_and_linear(item in arb_item(), a in 0i64..200, b in 0i64..200, k in 1i64..5) {
            let (lo, hi) = (t(a.min(b)), t(a.max(b)));
            prop_assert!(item_dbf(&item, &lo) <= item_dbf(&item, &hi));
            let scaled = dbf(&(&item.work * t(k)), &item.deadline, &item.period, &hi);
            prop_assert_eq!(scaled, item_dbf(&item, &hi) * t(k));
        }

        #[test]
        fn feasibility_monotone_in_speed(items in prop::collection::vec(arb_item(), 0..5), s in 1i64..40, bump in 1i64..10) {
            let s = ratio(s, 10);
            if uniprocessor_edf_feasible(&items, &s).unwrap() {
                prop_assert!(uniprocessor_edf_feasible(&items, &(s + ratio(bump, 10))).unwrap());
            }
        }
    }
}
