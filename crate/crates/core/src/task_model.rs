//! Sporadic DAG tasks, task sets and platforms.
//!
//! A [`DagTask`] is one recurrent task whose job is split into [`Subtask`]s
//! with precedence edges between them. Its `wcet_total` is the total work
//! `C`; [`DagTask::span`] is the critical-path length `L`.
//!
//! Task sets read from files may be malformed, so the types here can hold
//! invalid data; [`validate_task_set`] reports every violated invariant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{ExactTime, Period};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("task {task}: precedence edges contain a cycle")]
    Cyclic { task: usize },
    #[error("task {task}: edge ({from}, {to}) references an unknown subtask")]
    UnknownSubtask { task: usize, from: usize, to: usize },
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(ExactTime),
    #[error("platform needs at least one processor")]
    NoProcessors,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub id: usize,
    pub wcet: ExactTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagTask {
    pub id: usize,
    #[serde(rename = "wcet")]
    pub wcet_total: ExactTime,
    pub deadline: ExactTime,
    pub period: Period,
    pub subtasks: Vec<Subtask>,
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub name: String,
    pub tasks: Vec<DagTask>,
}

/// `M` identical processors running at speed `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Platform {
    pub processors: usize,
    pub speed: ExactTime,
}

impl Platform {
    pub fn new(processors: usize, speed: ExactTime) -> Result<Self, ModelError> {
        if processors == 0 {
            return Err(ModelError::NoProcessors);
        }
        if !speed.is_positive() {
            return Err(ModelError::NonPositiveSpeed(speed));
        }
        Ok(Platform { processors, speed })
    }

    pub fn unit_speed(processors: usize) -> Result<Self, ModelError> {
        Platform::new(processors, ExactTime::one())
    }
}

impl DagTask {
    /// A task whose `wcet_total` is the sum of the given subtask wcets.
    /// Subtasks get ids `1..=n` in order.
    pub fn from_wcets(
        id: usize,
        wcets: impl IntoIterator<Item = ExactTime>,
        deadline: ExactTime,
        period: Period,
        edges: Vec<(usize, usize)>,
    ) -> Self {
        let subtasks: Vec<Subtask> = wcets
            .into_iter()
            .enumerate()
            .map(|(i, wcet)| Subtask { id: i + 1, wcet })
            .collect();
        DagTask {
            id,
            wcet_total: subtasks.iter().map(|s| &s.wcet).sum(),
            deadline,
            period,
            subtasks,
            edges,
        }
    }

    /// Total work: the sum of the subtask wcets.
    pub fn work(&self) -> ExactTime {
        self.subtasks.iter().map(|s| &s.wcet).sum()
    }

    pub fn subtask(&self, id: usize) -> Option<&Subtask> {
        self.subtasks.iter().find(|s| s.id == id)
    }

    /// Position of the subtask with the given id.
    pub(crate) fn subtask_index(&self, id: usize) -> Option<usize> {
        self.subtasks.iter().position(|s| s.id == id)
    }

    /// Edges translated to subtask positions.
    pub(crate) fn indexed_edges(&self) -> Result<Vec<(usize, usize)>, ModelError> {
        self.edges
            .iter()
            .map(|&(from, to)| match (self.subtask_index(from), self.subtask_index(to)) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(ModelError::UnknownSubtask { task: self.id, from, to }),
            })
            .collect()
    }

    /// Predecessor positions for every subtask position.
    pub(crate) fn predecessors(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        let mut preds = vec![Vec::new(); self.subtasks.len()];
        for (a, b) in self.indexed_edges()? {
            preds[b].push(a);
        }
        Ok(preds)
    }

    /// Subtask positions in a topological order (Kahn's algorithm, lowest
    /// position first among ready nodes).
    pub fn topological_order(&self) -> Result<Vec<usize>, ModelError> {
        let n = self.subtasks.len();
        let mut succs = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for (a, b) in self.indexed_edges()? {
            succs[a].push(b);
            indegree[b] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &succs[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(ModelError::Cyclic { task: self.id })
        }
    }

    /// Length of the longest directed path, weighted by subtask wcet.
    pub fn span(&self) -> Result<ExactTime, ModelError> {
        let order = self.topological_order()?;
        let preds = self.predecessors()?;
        let mut finish = vec![ExactTime::zero(); self.subtasks.len()];
        for v in order {
            let start = preds[v]
                .iter()
                .map(|&p| finish[p].clone())
                .max()
                .unwrap_or_else(ExactTime::zero);
            finish[v] = start + &self.subtasks[v].wcet;
        }
        Ok(finish.into_iter().max().unwrap_or_else(ExactTime::zero))
    }

    /// Density `C / D`.
    pub fn density(&self) -> ExactTime {
        &self.wcet_total / &self.deadline
    }
}

impl TaskSet {
    pub fn new(name: impl Into<String>, tasks: Vec<DagTask>) -> Self {
        TaskSet { name: name.into(), tasks }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, id: usize) -> Option<&DagTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn max_deadline(&self) -> Option<ExactTime> {
        self.tasks.iter().map(|t| t.deadline.clone()).max()
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| FormatError {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task sets always serialize")
    }
}

/// A task-set file that does not match the schema.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field `{field}`: {message}")]
pub struct FormatError {
    pub field: String,
    pub message: String,
}

/// Work `C` of a task.
pub fn work(task: &DagTask) -> ExactTime {
    task.work()
}

/// Critical-path length `L` of a task.
pub fn span(task: &DagTask) -> Result<ExactTime, ModelError> {
    task.span()
}

/// The task set as seen by speed-`s` processors expressed in unit-speed
/// time: every wcet divided by `s`, deadlines and periods untouched.
pub fn scale_to_unit_speed(ts: &TaskSet, speed: &ExactTime) -> Result<TaskSet, ModelError> {
    if !speed.is_positive() {
        return Err(ModelError::NonPositiveSpeed(speed.clone()));
    }
    let tasks = ts
        .tasks
        .iter()
        .map(|t| DagTask {
            wcet_total: &t.wcet_total / speed,
            subtasks: t
                .subtasks
                .iter()
                .map(|s| Subtask { id: s.id, wcet: &s.wcet / speed })
                .collect(),
            ..t.clone()
        })
        .collect();
    Ok(TaskSet { name: ts.name.clone(), tasks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Cycle,
    WorkMismatch,
    DeadlineExceedsPeriod,
    NonPositive,
    DuplicateId,
    NonContiguousId,
    UnknownSubtask,
    // trace checks
    EmptyInterval,
    Overlap,
    Precedence,
    EarlyStart,
    Overrun,
    Incomplete,
    UnknownJob,
    MissMismatch,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::Cycle => "cycle",
            ViolationKind::WorkMismatch => "work mismatch",
            ViolationKind::DeadlineExceedsPeriod => "deadline exceeds period",
            ViolationKind::NonPositive => "nonpositive value",
            ViolationKind::DuplicateId => "duplicate id",
            ViolationKind::NonContiguousId => "non-contiguous task ids",
            ViolationKind::UnknownSubtask => "unknown subtask",
            ViolationKind::EmptyInterval => "empty interval",
            ViolationKind::Overlap => "overlap",
            ViolationKind::Precedence => "precedence",
            ViolationKind::EarlyStart => "start before release",
            ViolationKind::Overrun => "overrun",
            ViolationKind::Incomplete => "incomplete",
            ViolationKind::UnknownJob => "unknown job",
            ViolationKind::MissMismatch => "miss mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub task: Option<usize>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Some(id) => write!(f, "task {id}: {}: {}", self.kind.label(), self.detail),
            None => write!(f, "{}: {}", self.kind.label(), self.detail),
        }
    }
}

/// Result of a structural check. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub(crate) fn push(&mut self, task: Option<usize>, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation { task, kind, detail: detail.into() });
    }
}

/// Checks every task and task-set invariant and lists all violations.
pub fn validate_task_set(ts: &TaskSet) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = BTreeMap::new();
    for (pos, task) in ts.tasks.iter().enumerate() {
        if seen.insert(task.id, pos).is_some() {
            report.push(Some(task.id), ViolationKind::DuplicateId, "task id used more than once");
        }
    }
    let contiguous = ts.tasks.iter().enumerate().all(|(i, t)| t.id == i + 1);
    if !contiguous {
        report.push(None, ViolationKind::NonContiguousId, "task ids must be 1, 2, ..., N in order");
    }

    for task in &ts.tasks {
        validate_task(task, &mut report);
    }
    report
}

fn validate_task(task: &DagTask, report: &mut ValidationReport) {
    let id = Some(task.id);
    if !task.deadline.is_positive() {
        report.push(id, ViolationKind::NonPositive, format!("deadline {}", task.deadline));
    }
    if let Period::Finite(p) = &task.period {
        if !p.is_positive() {
            report.push(id, ViolationKind::NonPositive, format!("period {p}"));
        } else if task.deadline > *p {
            report.push(
                id,
                ViolationKind::DeadlineExceedsPeriod,
                format!("deadline {} > period {p}", task.deadline),
            );
        }
    }

    let mut ids = BTreeSet::new();
    for s in &task.subtasks {
        if !ids.insert(s.id) {
            report.push(id, ViolationKind::DuplicateId, format!("subtask id {}", s.id));
        }
        if !s.wcet.is_positive() {
            report.push(id, ViolationKind::NonPositive, format!("subtask {} wcet {}", s.id, s.wcet));
        }
    }
    let sum = task.work();
    if sum != task.wcet_total {
        report.push(
            id,
            ViolationKind::WorkMismatch,
            format!("subtask wcets sum to {sum}, wcet is {}", task.wcet_total),
        );
    }

    let mut edges_known = true;
    for &(from, to) in &task.edges {
        if !ids.contains(&from) || !ids.contains(&to) {
            edges_known = false;
            report.push(id, ViolationKind::UnknownSubtask, format!("edge ({from}, {to})"));
        }
    }
    if edges_known {
        if let Err(ModelError::Cyclic { .. }) = task.topological_order() {
            report.push(id, ViolationKind::Cycle, "precedence edges are not acyclic");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ratio;

    fn t(n: i64) -> ExactTime {
        ExactTime::from(n)
    }

    fn task(id: usize, wcets: &[i64], edges: &[(usize, usize)]) -> DagTask {
        DagTask::from_wcets(
            id,
            wcets.iter().map(|&w| t(w)),
            t(100),
            Period::Infinite,
            edges.to_vec(),
        )
    }

    #[test]
    fn two_cycle_reported() {
        let ts = TaskSet::new("c", vec![task(1, &[1, 1], &[(1, 2), (2, 1)])]);
        let report = validate_task_set(&ts);
        assert!(report.contains(ViolationKind::Cycle));
        assert_eq!(report.violations[0].task, Some(1));
        assert!(span(&ts.tasks[0]).is_err());
    }

    #[test]
    fn self_loop_is_cycle() {
        let ts = TaskSet::new("c", vec![task(1, &[1], &[(1, 1)])]);
        assert!(validate_task_set(&ts).contains(ViolationKind::Cycle));
    }

    #[test]
    fn work_mismatch_reported() {
        let mut bad = task(1, &[3, 3], &[]);
        bad.wcet_total = t(7);
        let report = validate_task_set(&TaskSet::new("w", vec![bad]));
        assert!(report.contains(ViolationKind::WorkMismatch));
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn deadline_and_period_checks() {
        let mut a = task(1, &[1], &[]);
        a.period = Period::Finite(t(50));
        let mut b = task(2, &[1], &[]);
        b.deadline = t(0);
        let mut c = task(4, &[1], &[]);
        c.period = Period::Finite(t(-1));
        let report = validate_task_set(&TaskSet::new("d", vec![a, b, c]));
        assert!(report.contains(ViolationKind::DeadlineExceedsPeriod));
        assert!(report.contains(ViolationKind::NonPositive));
        assert!(report.contains(ViolationKind::NonContiguousId));
    }

    #[test]
    fn unknown_edge_endpoint() {
        let ts = TaskSet::new("u", vec![task(1, &[1, 2], &[(1, 9)])]);
        let report = validate_task_set(&ts);
        assert!(report.contains(ViolationKind::UnknownSubtask));
        assert!(!report.contains(ViolationKind::Cycle));
    }

    #[test]
    fn work_examples() {
        assert_eq!(work(&task(1, &[5], &[])), t(5));
        assert_eq!(work(&task(1, &[], &[])), t(0));
        assert_eq!(work(&task(1, &[1; 10], &[])), t(10));
    }

    #[test]
    fn span_examples() {
        assert_eq!(span(&task(1, &[1, 2, 3], &[(1, 2), (2, 3)])).unwrap(), t(6));
        // a->b, a->c, b->d, c->d; paths a,b,d = 4 and a,c,d = 5
        let diamond = task(1, &[1, 2, 3, 1], &[(1, 2), (1, 3), (2, 4), (3, 4)]);
        assert_eq!(span(&diamond).unwrap(), t(5));
        assert_eq!(span(&task(1, &[2, 2, 2], &[])).unwrap(), t(2));
        assert_eq!(span(&task(1, &[], &[])).unwrap(), t(0));
    }

    #[test]
    fn scaling_examples() {
        let ts = TaskSet::new(
            "s",
            vec![DagTask::from_wcets(1, vec![t(10)], t(1), Period::Infinite, vec![])],
        );
        let half = scale_to_unit_speed(&ts, &t(2)).unwrap();
        assert_eq!(half.tasks[0].wcet_total, t(5));
        assert_eq!(half.tasks[0].deadline, t(1));
        assert_eq!(scale_to_unit_speed(&ts, &t(1)).unwrap(), ts);
        let third = scale_to_unit_speed(&ts, &ratio(1, 3)).unwrap();
        assert_eq!(third.tasks[0].wcet_total, t(30));
        assert!(scale_to_unit_speed(&ts, &t(0)).is_err());
    }

    #[test]
    fn file_format_names_bad_field() {
        let text = r#"{"name":"x","tasks":[{"id":1,"wcet":"1","deadline":"1/0","period":null,
            "subtasks":[{"id":1,"wcet":"1"}],"edges":[]}]}"#;
        let err = TaskSet::from_json(text).unwrap_err();
        assert_eq!(err.field, "tasks[0].deadline");
    }

    #[test]
    fn file_format_shape() {
        let ts = TaskSet::new(
            "n",
            vec![DagTask::from_wcets(
                1,
                vec![ratio(1, 2), t(2)],
                t(4),
                Period::Finite(t(6)),
                vec![(1, 2)],
            )],
        );
        let v: serde_json::Value = serde_json::from_str(&ts.to_json()).unwrap();
        assert_eq!(v["tasks"][0]["wcet"], "5/2");
        assert_eq!(v["tasks"][0]["period"], "6");
        assert_eq!(v["tasks"][0]["edges"][0], serde_json::json!([1, 2]));
        assert_eq!(TaskSet::from_json(&ts.to_json()).unwrap(), ts);
    }
}
