//! Exact-time discrete-event simulation.
//!
//! Two engines share one trace format:
//! * [`simulate_partitioned_edf`]: preemptive EDF run independently on each
//!   processor of a static partition. Priority is the key
//!   `(absolute deadline, task id, subtask id)`.
//! * [`simulate_list_schedule`]: one DAG job on a dedicated cluster, greedy
//!   and non-preemptive; an idle processor starts the ready subtask with the
//!   lowest id.
//!
//! Time only advances to the next release, completion or horizon, so every
//! timestamp is an exact rational.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::feasibility::{FeasibilityError, PartitionedAssignment};
use crate::task_model::{DagTask, ModelError, Platform, TaskSet, ValidationReport, ViolationKind};
use crate::time::{ExactTime, Period};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulationError {
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(ExactTime),
    #[error("cluster needs at least one processor")]
    NoProcessors,
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(ExactTime),
    #[error(transparent)]
    Assignment(#[from] FeasibilityError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub processor: usize,
    pub task: usize,
    pub job: usize,
    pub subtask: usize,
    pub start: ExactTime,
    pub end: ExactTime,
}

/// One released job and when (if ever) its last subtask finished.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobRecord {
    pub task: usize,
    pub job: usize,
    pub release: ExactTime,
    pub deadline: ExactTime,
    pub completion: Option<ExactTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Miss {
    pub task: usize,
    pub job: usize,
    pub deadline: ExactTime,
    /// `None`: unfinished when the simulation stopped.
    pub completion: Option<ExactTime>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleTrace {
    pub speed: ExactTime,
    /// Releases happen strictly before the horizon and execution stops at
    /// it. `None` means the trace runs until every job completes.
    pub horizon: Option<ExactTime>,
    pub intervals: Vec<Interval>,
    pub jobs: Vec<JobRecord>,
    pub misses: Vec<Miss>,
}

impl ScheduleTrace {
    pub fn is_miss_free(&self) -> bool {
        self.misses.is_empty()
    }

    pub fn missed_tasks(&self) -> BTreeSet<usize> {
        self.misses.iter().map(|m| m.task).collect()
    }

    /// Latest interval end.
    pub fn makespan(&self) -> ExactTime {
        self.intervals
            .iter()
            .map(|i| i.end.clone())
            .max()
            .unwrap_or_else(ExactTime::zero)
    }

    pub fn completion(&self, task: usize, job: usize) -> Option<&ExactTime> {
        self.jobs
            .iter()
            .find(|j| j.task == task && j.job == job)
            .and_then(|j| j.completion.as_ref())
    }
}

/// Default horizon: `max D` when every period is infinite, otherwise
/// `max D + 2 lcm(periods)`.
pub fn default_horizon(ts: &TaskSet) -> ExactTime {
    let max_deadline = ts.max_deadline().unwrap_or_else(ExactTime::one);
    let hyper = ts
        .tasks
        .iter()
        .filter_map(|t| t.period.finite())
        .fold(None, |acc: Option<ExactTime>, p| Some(acc.map_or(p.clone(), |h| h.lcm(p))));
    match hyper {
        Some(h) => max_deadline + ExactTime::from(2) * h,
        None => max_deadline,
    }
}

/// Release times `k T` before the horizon; a single release at 0 for an
/// infinite period.
fn releases(period: &Period, horizon: &ExactTime) -> Vec<ExactTime> {
    match period {
        Period::Infinite => vec![ExactTime::zero()],
        Period::Finite(p) => {
            let mut out = Vec::new();
            let mut r = ExactTime::zero();
            while r < *horizon {
                out.push(r.clone());
                r += p;
            }
            out
        }
    }
}

fn push_interval(intervals: &mut Vec<Interval>, next: Interval) {
    if let Some(last) = intervals.last_mut() {
        if last.processor == next.processor
            && last.task == next.task
            && last.job == next.job
            && last.subtask == next.subtask
            && last.end == next.start
        {
            last.end = next.end;
            return;
        }
    }
    intervals.push(next);
}

#[derive(Debug, Clone)]
struct PendingJob {
    deadline: ExactTime,
    task: usize,
    subtask: usize,
    job: usize,
    release: ExactTime,
    remaining: ExactTime,
}

impl PendingJob {
    fn priority(&self) -> (&ExactTime, usize, usize) {
        (&self.deadline, self.task, self.subtask)
    }
}

/// Completion bookkeeping per `(task, job)`.
struct JobBook {
    records: BTreeMap<(usize, usize), (JobRecord, usize)>,
}

impl JobBook {
    fn new() -> Self {
        JobBook { records: BTreeMap::new() }
    }

    fn add(&mut self, task: &DagTask, job: usize, release: ExactTime) {
        let deadline = &release + &task.deadline;
        let pending = task.subtasks.len();
        let completion = (pending == 0).then(|| release.clone());
        self.records.insert(
            (task.id, job),
            (JobRecord { task: task.id, job, release, deadline, completion }, pending),
        );
    }

    fn subtask_done(&mut self, task: usize, job: usize, at: &ExactTime) {
        let (record, pending) = self.records.get_mut(&(task, job)).expect("job registered");
        *pending -= 1;
        if *pending == 0 {
            record.completion = Some(at.clone());
        }
    }

    fn finish(self, horizon: Option<&ExactTime>) -> (Vec<JobRecord>, Vec<Miss>) {
        let jobs: Vec<JobRecord> = self.records.into_values().map(|(r, _)| r).collect();
        let misses = jobs
            .iter()
            .filter(|j| is_miss(j, horizon))
            .map(|j| Miss {
                task: j.task,
                job: j.job,
                deadline: j.deadline.clone(),
                completion: j.completion.clone(),
            })
            .collect();
        (jobs, misses)
    }
}

fn is_miss(job: &JobRecord, horizon: Option<&ExactTime>) -> bool {
    match (&job.completion, horizon) {
        (Some(c), _) => *c > job.deadline,
        (None, Some(h)) => job.deadline <= *h,
        (None, None) => true,
    }
}

/// Preemptive EDF on every processor of a static partition. `horizon`
/// defaults to [`default_horizon`].
pub fn simulate_partitioned_edf(
    ts: &TaskSet,
    pa: &PartitionedAssignment,
    plat: &Platform,
    horizon: Option<ExactTime>,
) -> Result<ScheduleTrace, SimulationError> {
    if !plat.speed.is_positive() {
        return Err(SimulationError::NonPositiveSpeed(plat.speed.clone()));
    }
    if let Some(task) = ts.tasks.iter().find(|t| !t.edges.is_empty()) {
        return Err(FeasibilityError::PrecedenceEdges { task: task.id }.into());
    }
    pa.check_covers(ts)?;
    if pa.processors() > plat.processors {
        return Err(FeasibilityError::ProcessorOutOfRange {
            processor: pa.processors(),
            processors: plat.processors,
        }
        .into());
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(ts));
    if !horizon.is_positive() {
        return Err(SimulationError::NonPositiveHorizon(horizon));
    }

    let mut book = JobBook::new();
    let mut per_proc: Vec<Vec<PendingJob>> = vec![Vec::new(); plat.processors];
    for task in &ts.tasks {
        for (job, release) in releases(&task.period, &horizon).into_iter().enumerate() {
            book.add(task, job, release.clone());
            for sub in &task.subtasks {
                let p = pa.processor_of(task.id, sub.id).expect("coverage checked");
                per_proc[p - 1].push(PendingJob {
                    deadline: &release + &task.deadline,
                    task: task.id,
                    subtask: sub.id,
                    job,
                    release: release.clone(),
                    remaining: sub.wcet.clone(),
                });
            }
        }
    }

    let mut intervals = Vec::new();
    for (idx, mut jobs) in per_proc.into_iter().enumerate() {
        jobs.sort_by(|a, b| a.release.cmp(&b.release).then_with(|| a.priority().cmp(&b.priority())));
        run_edf_processor(idx + 1, jobs, &plat.speed, &horizon, &mut intervals, &mut book);
    }

    let (jobs, misses) = book.finish(Some(&horizon));
    Ok(ScheduleTrace {
        speed: plat.speed.clone(),
        horizon: Some(horizon),
        intervals,
        jobs,
        misses,
    })
}

fn run_edf_processor(
    processor: usize,
    arrivals: Vec<PendingJob>,
    speed: &ExactTime,
    horizon: &ExactTime,
    intervals: &mut Vec<Interval>,
    book: &mut JobBook,
) {
    let mut arrivals = arrivals.into_iter().peekable();
    let mut ready: Vec<PendingJob> = Vec::new();
    let mut now = ExactTime::zero();
    while now < *horizon {
        while let Some(j) = arrivals.next_if(|j| j.release <= now) {
            if j.remaining.is_zero() {
                book.subtask_done(j.task, j.job, &now);
            } else {
                ready.push(j);
            }
        }
        let next_release = arrivals.peek().map(|j| j.release.clone());
        let Some(pick) = ready
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.priority().cmp(&b.1.priority()))
            .map(|(i, _)| i)
        else {
            match next_release {
                Some(r) => {
                    now = r;
                    continue;
                }
                None => break,
            }
        };

        let job = &mut ready[pick];
        let mut end = &now + &(&job.remaining / speed);
        if let Some(r) = &next_release {
            end = end.min(r.clone());
        }
        end = end.min(horizon.clone());
        push_interval(
            intervals,
            Interval {
                processor,
                task: job.task,
                job: job.job,
                subtask: job.subtask,
                start: now.clone(),
                end: end.clone(),
            },
        );
        job.remaining -= &((&end - &now) * speed);
        now = end;
        if job.remaining.is_zero() {
            let done = ready.swap_remove(pick);
            book.subtask_done(done.task, done.job, &now);
        }
    }
}

/// Greedy non-preemptive list scheduling of one job of `task` on `m`
/// dedicated processors at speed `s`, released at time 0.
pub fn simulate_list_schedule(task: &DagTask, m: usize, speed: &ExactTime) -> Result<ScheduleTrace, SimulationError> {
    if m == 0 {
        return Err(SimulationError::NoProcessors);
    }
    if !speed.is_positive() {
        return Err(SimulationError::NonPositiveSpeed(speed.clone()));
    }
    task.topological_order()?;
    let preds = task.predecessors()?;
    let n = task.subtasks.len();
    // positions sorted by subtask id for the lowest-id rule
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by_key(|&i| task.subtasks[i].id);

    let mut book = JobBook::new();
    book.add(task, 0, ExactTime::zero());
    let mut intervals = Vec::new();
    let mut started = vec![false; n];
    let mut done = vec![false; n];
    let mut running: Vec<Option<(usize, ExactTime)>> = vec![None; m];
    let mut now = ExactTime::zero();

    loop {
        let ready: Vec<usize> = by_id
            .iter()
            .copied()
            .filter(|&v| !started[v] && preds[v].iter().all(|&p| done[p]))
            .collect();
        let mut ready = ready.into_iter();
        for slot in 0..m {
            if running[slot].is_some() {
                continue;
            }
            let Some(v) = ready.next() else { break };
            started[v] = true;
            let end = &now + &(&task.subtasks[v].wcet / speed);
            if end > now {
                intervals.push(Interval {
                    processor: slot + 1,
                    task: task.id,
                    job: 0,
                    subtask: task.subtasks[v].id,
                    start: now.clone(),
                    end: end.clone(),
                });
            }
            running[slot] = Some((v, end));
        }

        let Some(next) = running.iter().flatten().map(|(_, e)| e.clone()).min() else {
            break;
        };
        now = next;
        for slot in running.iter_mut() {
            if let Some((v, end)) = slot {
                if *end == now {
                    done[*v] = true;
                    book.subtask_done(task.id, 0, &now);
                    *slot = None;
                }
            }
        }
    }

    let (jobs, misses) = book.finish(None);
    Ok(ScheduleTrace { speed: speed.clone(), horizon: None, intervals, jobs, misses })
}

/// Independently re-verifies a trace against its task set.
///
/// Checks non-empty, non-overlapping intervals per processor and per
/// subtask; no execution before release; executed work never exceeding the
/// wcet; precedence; the recorded job set and completions; and the miss
/// list.
pub fn check_trace(ts: &TaskSet, trace: &ScheduleTrace) -> ValidationReport {
    let mut report = ValidationReport::default();
    let horizon = trace.horizon.as_ref();

    // expected job set
    let mut expected_jobs: BTreeMap<(usize, usize), (ExactTime, ExactTime)> = BTreeMap::new();
    for task in &ts.tasks {
        let rel = match horizon {
            Some(h) => releases(&task.period, h),
            None => vec![ExactTime::zero()],
        };
        for (k, r) in rel.into_iter().enumerate() {
            let d = &r + &task.deadline;
            expected_jobs.insert((task.id, k), (r, d));
        }
    }
    let recorded: BTreeMap<(usize, usize), &JobRecord> =
        trace.jobs.iter().map(|j| ((j.task, j.job), j)).collect();
    for (key, (release, deadline)) in &expected_jobs {
        match recorded.get(key) {
            None => report.push(Some(key.0), ViolationKind::Incomplete, format!("job {} not recorded", key.1)),
            Some(j) if j.release != *release || j.deadline != *deadline => report.push(
                Some(key.0),
                ViolationKind::UnknownJob,
                format!("job {} recorded with release {} deadline {}", key.1, j.release, j.deadline),
            ),
            _ => {}
        }
    }
    for key in recorded.keys() {
        if !expected_jobs.contains_key(key) {
            report.push(Some(key.0), ViolationKind::UnknownJob, format!("job {} was never released", key.1));
        }
    }

    // per-interval checks
    let mut by_proc: BTreeMap<usize, Vec<&Interval>> = BTreeMap::new();
    let mut by_sub: BTreeMap<(usize, usize, usize), Vec<&Interval>> = BTreeMap::new();
    for iv in &trace.intervals {
        if iv.start >= iv.end {
            report.push(Some(iv.task), ViolationKind::EmptyInterval, format!("[{}, {}]", iv.start, iv.end));
        }
        let known = ts.task(iv.task).and_then(|t| t.subtask(iv.subtask)).is_some();
        match expected_jobs.get(&(iv.task, iv.job)) {
            Some((release, _)) if known => {
                if iv.start < *release {
                    report.push(
                        Some(iv.task),
                        ViolationKind::EarlyStart,
                        format!("job {} runs at {} before release {}", iv.job, iv.start, release),
                    );
                }
            }
            _ => {
                report.push(
                    Some(iv.task),
                    ViolationKind::UnknownJob,
                    format!("interval for job {} subtask {}", iv.job, iv.subtask),
                );
                continue;
            }
        }
        by_proc.entry(iv.processor).or_default().push(iv);
        by_sub.entry((iv.task, iv.job, iv.subtask)).or_default().push(iv);
    }
    for (proc, mut ivs) in by_proc {
        ivs.sort_by(|a, b| a.start.cmp(&b.start));
        for w in ivs.windows(2) {
            if w[1].start < w[0].end {
                report.push(
                    Some(w[1].task),
                    ViolationKind::Overlap,
                    format!("processor {proc}: [{}, {}] overlaps [{}, {}]", w[0].start, w[0].end, w[1].start, w[1].end),
                );
            }
        }
    }

    // executed work and subtask completions
    let mut sub_done: BTreeMap<(usize, usize, usize), ExactTime> = BTreeMap::new();
    for (&(task_id, job, sub_id), ivs) in by_sub.iter_mut() {
        ivs.sort_by(|a, b| a.start.cmp(&b.start));
        for w in ivs.windows(2) {
            if w[1].start < w[0].end {
                report.push(
                    Some(task_id),
                    ViolationKind::Overlap,
                    format!("subtask {sub_id} of job {job} runs in parallel with itself"),
                );
            }
        }
        let wcet = &ts.task(task_id).and_then(|t| t.subtask(sub_id)).expect("checked above").wcet;
        let executed: ExactTime = ivs.iter().map(|iv| (&iv.end - &iv.start) * &trace.speed).sum();
        if executed > *wcet {
            report.push(
                Some(task_id),
                ViolationKind::Overrun,
                format!("subtask {sub_id} of job {job} executed {executed} > wcet {wcet}"),
            );
        } else if executed == *wcet {
            let end = ivs.iter().map(|iv| iv.end.clone()).max().expect("nonempty");
            sub_done.insert((task_id, job, sub_id), end);
        }
    }

    // precedence, job completion, misses
    let mut expected_misses = BTreeSet::new();
    for (&(task_id, job), (release, deadline)) in &expected_jobs {
        let task = ts.task(task_id).expect("from ts");
        for &(a, b) in &task.edges {
            let Some(first_b) = by_sub.get(&(task_id, job, b)).and_then(|ivs| ivs.iter().map(|iv| &iv.start).min()) else {
                continue;
            };
            match sub_done.get(&(task_id, job, a)) {
                Some(done_a) if done_a <= first_b => {}
                _ => report.push(
                    Some(task_id),
                    ViolationKind::Precedence,
                    format!("job {job}: subtask {b} starts at {first_b} before predecessor {a} completes"),
                ),
            }
        }
        let completion = task
            .subtasks
            .iter()
            .map(|s| sub_done.get(&(task_id, job, s.id)).cloned())
            .try_fold(release.clone(), |acc, c| c.map(|c| acc.max(c)));
        if horizon.is_none() && completion.is_none() {
            report.push(Some(task_id), ViolationKind::Incomplete, format!("job {job} never completes"));
        }
        if let Some(j) = recorded.get(&(task_id, job)) {
            if j.completion != completion {
                report.push(
                    Some(task_id),
                    ViolationKind::MissMismatch,
                    format!("job {job} recorded completion {:?}, intervals give {:?}", j.completion, completion),
                );
            }
        }
        let record = JobRecord {
            task: task_id,
            job,
            release: release.clone(),
            deadline: deadline.clone(),
            completion: completion.clone(),
        };
        if is_miss(&record, horizon) {
            expected_misses.insert((task_id, job, completion));
        }
    }
    let reported: BTreeSet<_> = trace
        .misses
        .iter()
        .map(|m| (m.task, m.job, m.completion.clone()))
        .collect();
    for m in expected_misses.symmetric_difference(&reported) {
        let what = if reported.contains(m) { "reported but not a miss" } else { "missed deadline not reported" };
        report.push(Some(m.0), ViolationKind::MissMismatch, format!("job {}: {what}", m.1));
    }
    report
}
