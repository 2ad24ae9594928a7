//! Federated scheduling.
//!
//! Under federated scheduling a task either runs sequentially on a single
//! (possibly shared) processor, or is granted a cluster of processors that
//! no other task may use. A task is *heavy* at speed `s` when `C > s * D`:
//! it cannot finish sequentially, so it needs at least `ceil(C / (D s))`
//! exclusive processors.
//!
//! [`allocate_federated`] is one concrete federated algorithm: heavy tasks
//! get a cluster sized by the list-scheduling bound
//! `L + (C - L) / m <= s * D`, light tasks are packed first-fit by
//! nondecreasing deadline with an exact EDF demand test as the admission
//! check.

use serde::Serialize;
use thiserror::Error;

use crate::feasibility::{uniprocessor_edf_feasible, DemandItem, FeasibilityError};
use crate::generator::{CounterexampleParams, GeneratorError};
use crate::task_model::{DagTask, ModelError, Platform, TaskSet};
use crate::time::ExactTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FederatedError {
    #[error("task {task} is light at speed {speed}; the exclusive-processor bound does not apply")]
    NotHeavy { task: usize, speed: ExactTime },
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(ExactTime),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Params(#[from] GeneratorError),
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskClass {
    Heavy,
    Light,
}

/// Heavy iff `C > s * D`; the boundary `C = s * D` is light.
pub fn classify(task: &DagTask, speed: &ExactTime) -> TaskClass {
    if task.work() > speed * &task.deadline {
        TaskClass::Heavy
    } else {
        TaskClass::Light
    }
}

/// `ceil(C / (D s))`: processors a heavy task needs exclusively at speed `s`
/// no matter how its subtasks are scheduled.
pub fn heavy_demand_lower_bound(task: &DagTask, speed: &ExactTime) -> Result<u64, FederatedError> {
    exclusive_demand(task, speed).map(|d| d.ceil_u64())
}

fn exclusive_demand(task: &DagTask, speed: &ExactTime) -> Result<ExactTime, FederatedError> {
    if !speed.is_positive() {
        return Err(FederatedError::NonPositiveSpeed(speed.clone()));
    }
    if classify(task, speed) == TaskClass::Light {
        return Err(FederatedError::NotHeavy { task: task.id, speed: speed.clone() });
    }
    Ok((task.work() / (&task.deadline * speed)).ceil())
}

/// `sum_i ceil(C_i / (D_i s))` over a task set that is entirely heavy at `s`.
pub fn total_demand_lower_bound(ts: &TaskSet, speed: &ExactTime) -> Result<ExactTime, FederatedError> {
    ts.tasks.iter().map(|t| exclusive_demand(t, speed)).sum()
}

/// `min{(1 - 1/K) M, N - (N - 1)/K}`: below this speed no federated schedule
/// exists for the `(M, N, K)` counterexample, although it is feasible at
/// unit speed.
pub fn theorem_speedup_bound(processors: usize, tasks: usize, growth: &ExactTime) -> Result<ExactTime, FederatedError> {
    let p = CounterexampleParams::new(processors, tasks, growth.clone())?;
    let k_inv = p.growth().recip();
    let m = ExactTime::from(p.processors());
    let n = ExactTime::from(p.tasks());
    let by_processors = (ExactTime::one() - &k_inv) * m;
    let by_tasks = &n - (&n - ExactTime::one()) * k_inv;
    Ok(by_processors.min(by_tasks))
}

/// Smallest cluster size `m >= 1` with `L + (C - L) / m <= s * D`, or `None`
/// when no cluster is large enough (`s * D < L`, or `s * D = L < C`).
pub fn heavy_processor_allocation(task: &DagTask, speed: &ExactTime) -> Result<Option<u64>, FederatedError> {
    if !speed.is_positive() {
        return Err(FederatedError::NonPositiveSpeed(speed.clone()));
    }
    let work = task.work();
    let span = task.span()?;
    let capacity = speed * &task.deadline;
    let parallel = &work - &span;
    if parallel.is_zero() {
        return Ok((span <= capacity).then_some(1));
    }
    if capacity <= span {
        return Ok(None);
    }
    Ok(Some((parallel / (capacity - span)).ceil_u64().max(1)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeavyGrant {
    pub task: usize,
    /// Processors `first ..= first + count - 1`.
    pub first: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedProcessor {
    pub processor: usize,
    pub tasks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FederatedAllocation {
    pub speed: ExactTime,
    pub heavy_grants: Vec<HeavyGrant>,
    pub light_partition: Vec<SharedProcessor>,
    pub total_processors_used: usize,
}

impl FederatedAllocation {
    /// Processor hosting light task `task`, if any.
    pub fn shared_processor_of(&self, task: usize) -> Option<usize> {
        self.light_partition
            .iter()
            .find(|p| p.tasks.contains(&task))
            .map(|p| p.processor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InfeasibleReason {
    /// The heavy tasks' clusters alone need more than `available` processors.
    HeavyOverflow { granted: u64, available: usize },
    /// No cluster size meets the deadline under list scheduling.
    Unallocatable { task: usize },
    /// Light tasks need more shared processors than remain.
    LightOverflow { needed: usize, available: usize },
}

/// Why a task set has no federated allocation at the given speed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfeasibilityCertificate {
    #[serde(flatten)]
    pub reason: InfeasibleReason,
    /// `sum ceil(C_i / (D_i s))` over the heavy tasks: a lower bound on the
    /// processors any federated scheduler must reserve for them.
    pub heavy_demand_lower_bound: ExactTime,
    pub heavy_tasks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FederatedOutcome {
    Feasible(FederatedAllocation),
    Infeasible(InfeasibilityCertificate),
}

impl FederatedOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FederatedOutcome::Feasible(_))
    }

    pub fn allocation(&self) -> Option<&FederatedAllocation> {
        match self {
            FederatedOutcome::Feasible(a) => Some(a),
            FederatedOutcome::Infeasible(_) => None,
        }
    }
}

/// Light tasks run sequentially: one demand item carrying the task's whole work.
pub(crate) fn sequential_item(task: &DagTask) -> DemandItem {
    DemandItem::new(task.work(), task.deadline.clone(), task.period.clone())
}

pub fn allocate_federated(ts: &TaskSet, plat: &Platform) -> Result<FederatedOutcome, FederatedError> {
    let speed = &plat.speed;
    let (heavy, mut light): (Vec<&DagTask>, Vec<&DagTask>) = ts
        .tasks
        .iter()
        .partition(|t| classify(t, speed) == TaskClass::Heavy);

    let lower_bound: ExactTime = heavy
        .iter()
        .map(|t| exclusive_demand(t, speed))
        .sum::<Result<_, _>>()?;
    let certificate = |reason| {
        FederatedOutcome::Infeasible(InfeasibilityCertificate {
            reason,
            heavy_demand_lower_bound: lower_bound.clone(),
            heavy_tasks: heavy.iter().map(|t| t.id).collect(),
        })
    };

    let mut sizes = Vec::with_capacity(heavy.len());
    let mut granted: u64 = 0;
    for task in &heavy {
        match heavy_processor_allocation(task, speed)? {
            Some(m) => {
                sizes.push(m);
                granted = granted.saturating_add(m);
            }
            None => return Ok(certificate(InfeasibleReason::Unallocatable { task: task.id })),
        }
    }
    if granted > plat.processors as u64 {
        return Ok(certificate(InfeasibleReason::HeavyOverflow { granted, available: plat.processors }));
    }

    let mut heavy_grants = Vec::with_capacity(heavy.len());
    let mut next = 1;
    for (task, &m) in heavy.iter().zip(&sizes) {
        heavy_grants.push(HeavyGrant { task: task.id, first: next, count: m as usize });
        next += m as usize;
    }

    light.sort_by(|a, b| a.deadline.cmp(&b.deadline).then(a.id.cmp(&b.id)));
    let mut bins: Vec<(Vec<usize>, Vec<DemandItem>)> = Vec::new();
    for task in light {
        let item = sequential_item(task);
        let mut placed = false;
        for (ids, items) in bins.iter_mut() {
            items.push(item.clone());
            if uniprocessor_edf_feasible(items, speed)? {
                ids.push(task.id);
                placed = true;
                break;
            }
            items.pop();
        }
        if !placed {
            bins.push((vec![task.id], vec![item]));
        }
    }
    let available = plat.processors - granted as usize;
    if bins.len() > available {
        return Ok(certificate(InfeasibleReason::LightOverflow { needed: bins.len(), available }));
    }

    let light_partition: Vec<SharedProcessor> = bins
        .into_iter()
        .enumerate()
        .map(|(i, (tasks, _))| SharedProcessor { processor: next + i, tasks })
        .collect();
    Ok(FederatedOutcome::Feasible(FederatedAllocation {
        speed: speed.clone(),
        total_processors_used: granted as usize + light_partition.len(),
        heavy_grants,
        light_partition,
    }))
}
