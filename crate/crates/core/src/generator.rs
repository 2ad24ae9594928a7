//! Task-set construction: the federated-scheduling counterexample family
//! and seeded random DAG task sets for property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::task_model::{DagTask, TaskSet};
use crate::time::{ExactTime, Period};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("processor count M must be at least 2, got {0}")]
    TooFewProcessors(usize),
    #[error("task count N must be at least 2, got {0}")]
    TooFewTasks(usize),
    #[error("growth factor K must be at least 2, got {0}")]
    SmallGrowth(ExactTime),
}

/// Parameters `(M, N, K)` of the counterexample family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterexampleParams {
    processors: usize,
    tasks: usize,
    growth: ExactTime,
}

impl CounterexampleParams {
    pub fn new(processors: usize, tasks: usize, growth: ExactTime) -> Result<Self, GeneratorError> {
        if processors < 2 {
            return Err(GeneratorError::TooFewProcessors(processors));
        }
        if tasks < 2 {
            return Err(GeneratorError::TooFewTasks(tasks));
        }
        if growth < ExactTime::from(2) {
            return Err(GeneratorError::SmallGrowth(growth));
        }
        Ok(CounterexampleParams { processors, tasks, growth })
    }

    /// `M`
    pub fn processors(&self) -> usize {
        self.processors
    }

    /// `N`
    pub fn tasks(&self) -> usize {
        self.tasks
    }

    /// `K`
    pub fn growth(&self) -> &ExactTime {
        &self.growth
    }
}

/// Builds the counterexample task set for `(M, N, K)`.
///
/// Task 1 has `C = M`, `D = 1`. Task `i >= 2` has `C = K^(i-2) (K-1) M` and
/// `D = K^(i-1)`. All periods are infinite and every task consists of `M`
/// independent subtasks of wcet `C / M`, so the prefix sums satisfy
/// `C_1 + ... + C_j = M * D_j`.
pub fn build_counterexample(p: &CounterexampleParams) -> TaskSet {
    let m = ExactTime::from(p.processors);
    let k = &p.growth;
    let tasks = (1..=p.tasks)
        .map(|i| {
            let (wcet, deadline) = if i == 1 {
                (m.clone(), ExactTime::one())
            } else {
                let exp = (i - 2) as u32;
                let wcet = k.pow(exp) * (k - ExactTime::one()) * &m;
                (wcet, k.pow(exp + 1))
            };
            let share = &wcet / &m;
            DagTask::from_wcets(
                i,
                std::iter::repeat_n(share, p.processors),
                deadline,
                Period::Infinite,
                Vec::new(),
            )
        })
        .collect();
    TaskSet::new(
        format!("counterexample M={} N={} K={}", p.processors, p.tasks, p.growth),
        tasks,
    )
}

/// Seeded random constrained-deadline DAG task set.
///
/// Subtask wcets are integers in `1..=max_wcet`; edges only run from lower
/// to higher subtask id, so every DAG is acyclic. Each deadline lies between
/// the task's span and span plus work; roughly half the tasks get a finite
/// power-of-two period at least as large as the deadline. Panics if `n_tasks`,
/// `max_subtasks` or `max_wcet` is zero.
pub fn random_task_set(seed: u64, n_tasks: usize, max_subtasks: usize, max_wcet: u64) -> TaskSet {
    assert!(n_tasks >= 1 && max_subtasks >= 1 && max_wcet >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (1..=n_tasks)
        .map(|id| random_task(&mut rng, id, max_subtasks, max_wcet))
        .collect();
    TaskSet::new(format!("random seed={seed}"), tasks)
}

pub(crate) fn random_task<R: Rng>(rng: &mut R, id: usize, max_subtasks: usize, max_wcet: u64) -> DagTask {
    let n = rng.random_range(1..=max_subtasks);
    let wcets: Vec<ExactTime> = (0..n)
        .map(|_| ExactTime::from(rng.random_range(1..=max_wcet)))
        .collect();
    let edge_prob = rng.random_range(0.0..0.6);
    let mut edges = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            if rng.random_bool(edge_prob) {
                edges.push((a, b));
            }
        }
    }
    let mut task = DagTask::from_wcets(id, wcets, ExactTime::one(), Period::Infinite, edges);
    let span = task.span().expect("edges point forward");
    let slack_units = (task.wcet_total.clone() - &span).floor_u64() + 1;
    // quarter steps so deadlines are not always integral
    let extra = ExactTime::new(rng.random_range(0..=4 * slack_units) as i64, 4);
    task.deadline = span + extra;
    if rng.random_bool(0.5) {
        // powers of two keep the hyperperiod equal to the largest period
        let base = task.deadline.ceil_u64().next_power_of_two();
        let stretch = 1u64 << rng.random_range(0..=1u32);
        task.period = Period::Finite(ExactTime::from(base * stretch));
    }
    task
}
