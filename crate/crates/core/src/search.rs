//! NSGA-II over categorical search spaces, driven by a shared trial log.
//!
//! Generations are reconstructed from the log: the first `P` COMPLETE
//! trials (in result order) form generation zero, and every further block of
//! `P` results is merged with the current survivors and truncated back to
//! `P` by rank and crowding distance. New candidates are bred from the
//! current survivors, so any number of workers can share one log.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::space::{ParamAssignment, SearchSpace};
use crate::store::{StoreError, StudyState, TrialLog, TrialOutcome, TrialRecord, TrialState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    #[serde(rename = "metric")]
    pub name: String,
    pub direction: Direction,
}

impl ObjectiveSpec {
    pub fn new(name: &str, direction: Direction) -> Self {
        Self { name: name.to_string(), direction }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no trial satisfies the selection rule")]
    EmptySelection,
    #[error("unknown objective `{0}`")]
    UnknownObjective(String),
    #[error("{0} consecutive trials failed; stopping")]
    TooManyFailures(usize),
    #[error("population size must be >= 1")]
    EmptyPopulation,
}

/// `x` is at least as good as `y` under `dir`.
fn no_worse(dir: Direction, x: f64, y: f64) -> bool {
    match dir {
        Direction::Maximize => x >= y,
        Direction::Minimize => x <= y,
    }
}

fn strictly_better(dir: Direction, x: f64, y: f64) -> bool {
    match dir {
        Direction::Maximize => x > y,
        Direction::Minimize => x < y,
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], specs: &[ObjectiveSpec]) -> bool {
    let mut strict = false;
    for ((&x, &y), s) in a.iter().zip(b).zip(specs) {
        if !no_worse(s.direction, x, y) {
            return false;
        }
        strict |= strictly_better(s.direction, x, y);
    }
    strict
}

/// Fronts of point indices, rank 0 first. Points with a NaN objective are
/// left out.
pub fn nondominated_sort(points: &[Vec<f64>], specs: &[ObjectiveSpec]) -> Vec<Vec<usize>> {
    let valid: Vec<usize> = (0..points.len())
        .filter(|&i| {
            let ok = points[i].iter().all(|v| !v.is_nan());
            if !ok {
                log::warn!("point {i} has a NaN objective and is excluded from sorting");
            }
            ok
        })
        .collect();
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, &i) in valid.iter().enumerate() {
        for &j in &valid[a + 1..] {
            if dominates(&points[i], &points[j], specs) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&points[j], &points[i], specs) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = valid.iter().copied().filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (aligned with `front`).
/// Extreme points of an objective get infinity; an objective whose values
/// are all equal adds nothing to any point.
pub fn crowding_distance(points: &[Vec<f64>], front: &[usize], specs: &[ObjectiveSpec]) -> Vec<f64> {
    let k = front.len();
    let mut dist = vec![0.0; k];
    if k == 0 {
        return dist;
    }
    for m in 0..specs.len() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| points[front[a]][m].total_cmp(&points[front[b]][m]).then(a.cmp(&b)));
        let lo = points[front[order[0]]][m];
        let hi = points[front[order[k - 1]]][m];
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[k - 1]] = f64::INFINITY;
        for w in 1..k.saturating_sub(1) {
            let gap = points[front[order[w + 1]]][m] - points[front[order[w - 1]]][m];
            dist[order[w]] += gap / range;
        }
    }
    dist
}

/// Rank and crowding distance of every point. Excluded (NaN) points get
/// rank `usize::MAX` and distance 0.
pub fn rank_and_crowding(points: &[Vec<f64>], specs: &[ObjectiveSpec]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![usize::MAX; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in nondominated_sort(points, specs).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(points, front, specs)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd)
}

/// Binary tournament: lower rank, then larger crowding distance, then a
/// coin flip.
pub fn tournament<R: Rng + ?Sized>(a: usize, b: usize, rank: &[usize], crowd: &[f64], rng: &mut R) -> usize {
    match rank[a].cmp(&rank[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => match crowd[a].partial_cmp(&crowd[b]) {
            Some(Ordering::Greater) => a,
            Some(Ordering::Less) => b,
            _ => {
                if rng.random::<bool>() {
                    a
                } else {
                    b
                }
            }
        },
    }
}

/// `n_pairs` parent pairs, each parent the winner of a tournament between
/// two uniformly drawn members.
pub fn select_parents<R: Rng + ?Sized>(rank: &[usize], crowd: &[f64], n_pairs: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let n = rank.len();
    assert!(n > 0, "empty population");
    let pick = |rng: &mut R| {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        tournament(a, b, rank, crowd, rng)
    };
    (0..n_pairs).map(|_| (pick(rng), pick(rng))).collect()
}

/// Uniform crossover. Genes are visited in activation order; each active
/// gene is copied from `a` or `b` with equal probability, falling back to
/// the other parent (or a fresh sample) when the chosen parent lacks it.
pub fn crossover<R: Rng + ?Sized>(a: &ParamAssignment, b: &ParamAssignment, space: &SearchSpace, rng: &mut R) -> ParamAssignment {
    let order = space.activation_order().expect("validated search space");
    let mut child = ParamAssignment::new();
    for i in order {
        let p = &space.params[i];
        if !space.is_active(&p.name, &child) {
            continue;
        }
        let from_a = rng.random::<bool>();
        let (first, second) = if from_a { (a, b) } else { (b, a) };
        let v = match first.get(&p.name).or_else(|| second.get(&p.name)) {
            Some(v) => v.clone(),
            None => p.choices[rng.random_range(0..p.choices.len())].clone(),
        };
        child.insert(p.name.clone(), v);
    }
    child
}

/// Resample each assigned gene with probability `p_mut`, then drop genes
/// that became inactive and sample newly active ones.
pub fn mutate<R: Rng + ?Sized>(child: ParamAssignment, space: &SearchSpace, p_mut: f64, rng: &mut R) -> ParamAssignment {
    if p_mut <= 0.0 {
        return child;
    }
    let order = space.activation_order().expect("validated search space");
    let mut out = ParamAssignment::new();
    for i in order {
        let p = &space.params[i];
        if !space.is_active(&p.name, &out) {
            continue;
        }
        let v = match child.get(&p.name) {
            Some(v) if rng.random::<f64>() >= p_mut => v.clone(),
            _ => p.choices[rng.random_range(0..p.choices.len())].clone(),
        };
        out.insert(p.name.clone(), v);
    }
    out
}

/// Indices of the `n` survivors: whole fronts in rank order, the last one
/// cut by descending crowding distance (ties by index).
pub fn truncate(points: &[Vec<f64>], specs: &[ObjectiveSpec], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for front in nondominated_sort(points, specs) {
        if out.len() + front.len() <= n {
            out.extend_from_slice(&front);
            continue;
        }
        let d = crowding_distance(points, &front, specs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        out.extend(order.into_iter().take(n - out.len()).map(|i| front[i]));
        break;
    }
    out
}

#[derive(Debug, Clone)]
struct Member {
    params: ParamAssignment,
    objectives: Vec<f64>,
}

/// Survivor set rebuilt incrementally from a log's result order.
#[derive(Debug, Clone, Default)]
pub struct Evolver {
    survivors: Vec<Member>,
    cursor: usize,
}

impl Evolver {
    fn advance(&mut self, complete: &[&TrialRecord], specs: &[ObjectiveSpec], pop: usize) {
        let member = |r: &TrialRecord| Member {
            params: r.params.clone(),
            objectives: r.objectives.clone().expect("COMPLETE trials carry objectives"),
        };
        if self.cursor == 0 {
            if complete.len() < pop {
                return;
            }
            self.survivors = complete[..pop].iter().map(|r| member(r)).collect();
            self.cursor = pop;
        }
        while self.cursor + pop <= complete.len() {
            let mut pool = std::mem::take(&mut self.survivors);
            pool.extend(complete[self.cursor..self.cursor + pop].iter().map(|r| member(r)));
            let points: Vec<Vec<f64>> = pool.iter().map(|m| m.objectives.clone()).collect();
            let keep = truncate(&points, specs, pop);
            self.survivors = keep.into_iter().map(|i| pool[i].clone()).collect();
            self.cursor += pop;
        }
    }

    /// Parameters for trial `id` given the log state.
    pub fn propose(
        &mut self,
        id: u64,
        state: &StudyState,
        space: &SearchSpace,
        specs: &[ObjectiveSpec],
        cfg: &EvolveConfig,
    ) -> ParamAssignment {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, id));
        let complete: Vec<&TrialRecord> = state.completed_in_order().collect();
        self.advance(&complete, specs, cfg.population_size);
        if self.survivors.is_empty() {
            return space.sample_uniform(&mut rng);
        }
        let points: Vec<Vec<f64>> = self.survivors.iter().map(|m| m.objectives.clone()).collect();
        let (rank, crowd) = rank_and_crowding(&points, specs);
        let (i, j) = select_parents(&rank, &crowd, 1, &mut rng)[0];
        let child = crossover(&self.survivors[i].params, &self.survivors[j].params, space, &mut rng);
        let p_mut = cfg.p_mut.unwrap_or(1.0 / space.len().max(1) as f64);
        mutate(child, space, p_mut, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub population_size: usize,
    pub trial_budget: usize,
    /// Per-gene mutation probability; `1 / number of genes` when unset.
    pub p_mut: Option<f64>,
    pub seed: u64,
    pub worker_id: String,
    /// Stop after this many COMPLETE trials from this worker.
    pub max_trials: Option<usize>,
    pub max_consecutive_failures: usize,
}

impl EvolveConfig {
    pub fn new(population_size: usize, trial_budget: usize, seed: u64) -> Self {
        Self {
            population_size,
            trial_budget,
            p_mut: None,
            seed,
            worker_id: "w0".into(),
            max_trials: None,
            max_consecutive_failures: 25,
        }
    }
}

/// Result of evaluating one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// In study objective order.
    pub objectives: Vec<f64>,
    pub aux: BTreeMap<String, f64>,
}

/// Claim, breed, evaluate and record trials until the budget or this
/// worker's quota is reached. Returns the Pareto archive of the whole log.
pub fn evolve<L: TrialLog + ?Sized>(
    log: &mut L,
    space: &SearchSpace,
    cfg: &EvolveConfig,
    evaluator: &mut dyn FnMut(u64, &ParamAssignment) -> Result<Evaluation, String>,
) -> Result<Vec<TrialRecord>, SearchError> {
    if cfg.population_size == 0 {
        return Err(SearchError::EmptyPopulation);
    }
    let specs = log.meta().objectives.clone();
    let mut evolver = Evolver::default();
    let mut done = 0usize;
    let mut failures = 0usize;
    while cfg.max_trials.is_none_or(|m| done < m) {
        let claimed = log.claim_next(&cfg.worker_id, cfg.trial_budget, &mut |id, state| {
            evolver.propose(id, state, space, &specs, cfg)
        })?;
        let Some((id, params)) = claimed else { break };
        let (outcome, aux) = match evaluator(id, &params) {
            Ok(ev) if ev.objectives.len() == specs.len() && ev.objectives.iter().all(|v| v.is_finite()) => {
                (TrialOutcome::Complete(ev.objectives), ev.aux)
            }
            Ok(ev) => (TrialOutcome::Failed(format!("invalid objective vector {:?}", ev.objectives)), ev.aux),
            Err(e) => (TrialOutcome::Failed(e), BTreeMap::new()),
        };
        let ok = matches!(outcome, TrialOutcome::Complete(_));
        log.finish(id, outcome, aux)?;
        if ok {
            done += 1;
            failures = 0;
        } else {
            failures += 1;
            if failures >= cfg.max_consecutive_failures {
                return Err(SearchError::TooManyFailures(failures));
            }
        }
    }
    let all = log.list(&Default::default())?;
    Ok(pareto_front(&all, &specs))
}

/// Rank-0 front of the COMPLETE trials, ordered by id.
pub fn pareto_front(trials: &[TrialRecord], specs: &[ObjectiveSpec]) -> Vec<TrialRecord> {
    let complete: Vec<&TrialRecord> = trials.iter().filter(|t| t.state == TrialState::Complete).collect();
    let points: Vec<Vec<f64>> = complete.iter().map(|t| t.objectives.clone().unwrap_or_default()).collect();
    let mut front: Vec<TrialRecord> = nondominated_sort(&points, specs)
        .into_iter()
        .next()
        .unwrap_or_default()
        .into_iter()
        .map(|i| complete[i].clone())
        .collect();
    front.sort_by_key(|t| t.trial_id);
    front
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Highest metric among archive members with metric `> threshold`.
    OptimalAccuracy { threshold: f64 },
    /// Among archive members with metric `>= floor`, the lexicographic
    /// minimum of (mean utilization, latency cycles, BOPs).
    OptimalResource { floor: f64 },
}

/// Keys compared by the resource rule, in order.
pub const RESOURCE_KEYS: [&str; 3] = ["mean_utilization", "latency_cycles", "bops"];

/// Named value of a trial: an objective if the study has one of that name,
/// otherwise an aux entry, otherwise `+∞`.
pub fn trial_value(t: &TrialRecord, specs: &[ObjectiveSpec], name: &str) -> f64 {
    specs
        .iter()
        .position(|s| s.name == name)
        .and_then(|i| t.objectives.as_ref().map(|o| o[i]))
        .or_else(|| t.aux.get(name).copied())
        .unwrap_or(f64::INFINITY)
}

/// Apply a selection rule to the Pareto archive of `trials`. Remaining ties
/// go to the lowest trial id.
pub fn select_checkpoint(
    trials: &[TrialRecord],
    specs: &[ObjectiveSpec],
    metric: &str,
    rule: SelectionRule,
) -> Result<TrialRecord, SearchError> {
    if !specs.iter().any(|s| s.name == metric) {
        return Err(SearchError::UnknownObjective(metric.into()));
    }
    let archive = pareto_front(trials, specs);
    let m = |t: &TrialRecord| trial_value(t, specs, metric);
    let chosen = match rule {
        SelectionRule::OptimalAccuracy { threshold } => archive
            .iter()
            .filter(|t| m(t) > threshold)
            .min_by(|a, b| m(b).total_cmp(&m(a)).then(a.trial_id.cmp(&b.trial_id))),
        SelectionRule::OptimalResource { floor } => {
            let key = |t: &TrialRecord| RESOURCE_KEYS.map(|k| trial_value(t, specs, k));
            archive.iter().filter(|t| m(t) >= floor).min_by(|a, b| {
                let (ka, kb) = (key(a), key(b));
                ka.iter()
                    .zip(&kb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
                    .then(a.trial_id.cmp(&b.trial_id))
            })
        }
    };
    chosen.cloned().ok_or(SearchError::EmptySelection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{ParamDomain, ParamValue};

    fn specs2() -> Vec<ObjectiveSpec> {
        vec![ObjectiveSpec::new("accuracy", Direction::Maximize), ObjectiveSpec::new("latency_cycles", Direction::Minimize)]
    }

    #[test]
    fn dominance_examples() {
        let s = specs2();
        assert!(dominates(&[0.9, 100.0], &[0.8, 200.0], &s));
        assert!(!dominates(&[0.9, 100.0], &[0.9, 100.0], &s));
        assert!(!dominates(&[0.9, 300.0], &[0.8, 200.0], &s));
        assert!(!dominates(&[0.8, 200.0], &[0.9, 300.0], &s));
    }

    #[test]
    fn chain_and_singleton_fronts() {
        let s = specs2();
        assert_eq!(nondominated_sort(&[vec![0.5, 1.0]], &s), vec![vec![0]]);
        let pts = vec![vec![0.7, 20.0], vec![0.9, 10.0], vec![0.5, 30.0]];
        assert_eq!(nondominated_sort(&pts, &s), vec![vec![1], vec![0], vec![2]]);
        let with_nan = vec![vec![f64::NAN, 1.0], vec![0.5, 1.0]];
        assert_eq!(nondominated_sort(&with_nan, &s), vec![vec![1]]);
    }

    #[test]
    fn crowding_examples() {
        let s = vec![ObjectiveSpec::new("a", Direction::Minimize), ObjectiveSpec::new("b", Direction::Minimize)];
        let two = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(crowding_distance(&two, &[0, 1], &s).iter().all(|d| d.is_infinite()));
        let three = vec![vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0]];
        let d = crowding_distance(&three, &[0, 1, 2], &s);
        assert_eq!(d[1], 2.0);
        let dup = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(crowding_distance(&dup, &[0, 1, 2], &s).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn tournament_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_parents(&[0], &[0.0], 3, &mut rng), vec![(0, 0); 3]);
        for _ in 0..100 {
            assert_eq!(tournament(0, 1, &[1, 0], &[9.0, 0.0], &mut rng), 1);
            assert_eq!(tournament(0, 1, &[0, 0], &[0.5, 0.1], &mut rng), 0);
        }
    }

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamDomain::new("depth", vec![ParamValue::Int(1), ParamValue::Int(2)]),
            ParamDomain::new("width_1", vec![ParamValue::Int(4), ParamValue::Int(8)]),
            ParamDomain::new("width_2", vec![ParamValue::Int(4), ParamValue::Int(8)]),
        ])
        .with_rule("width_2", "depth", vec![ParamValue::Int(2)])
    }

    #[test]
    fn genetic_operators_keep_assignments_valid() {
        let sp = space();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let a = sp.sample_uniform(&mut rng);
            let b = sp.sample_uniform(&mut rng);
            let c = crossover(&a, &b, &sp, &mut rng);
            sp.check_assignment(&c).unwrap();
            let m = mutate(c, &sp, 0.5, &mut rng);
            sp.check_assignment(&m).unwrap();
            assert_eq!(crossover(&a, &a, &sp, &mut rng), a);
            assert_eq!(mutate(a.clone(), &sp, 0.0, &mut rng), a);
        }
    }

    #[test]
    fn truncation_prefers_rank_then_spread() {
        let s = vec![ObjectiveSpec::new("a", Direction::Minimize), ObjectiveSpec::new("b", Direction::Minimize)];
        let pts = vec![vec![0.0, 4.0], vec![1.0, 3.0], vec![1.5, 2.9], vec![4.0, 0.0], vec![5.0, 5.0]];
        let keep = truncate(&pts, &s, 3);
        assert_eq!(keep.len(), 3);
        assert!(keep.contains(&0) && keep.contains(&3));
        assert!(!keep.contains(&4));
    }

    fn rec(id: u64, obj: [f64; 2], aux: &[(&str, f64)]) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            worker_id: "w".into(),
            params: ParamAssignment::new(),
            objectives: Some(obj.to_vec()),
            state: TrialState::Complete,
            claimed_at: 0.0,
            finished_at: Some(0.0),
            aux: aux.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn selection_fixture() {
        // high-accuracy, low-resource, and two dominated trials
        let s = specs2();
        let trials = vec![
            rec(0, [0.6384, 180.0], &[("mean_utilization", 3.0), ("bops", 9e5)]),
            rec(1, [0.62, 60.0], &[("mean_utilization", 1.0), ("bops", 2e5)]),
            rec(2, [0.60, 200.0], &[("mean_utilization", 4.0), ("bops", 1e6)]),
            rec(3, [0.61, 90.0], &[("mean_utilization", 2.0), ("bops", 3e5)]),
        ];
        let acc = select_checkpoint(&trials, &s, "accuracy", SelectionRule::OptimalAccuracy { threshold: 0.638 }).unwrap();
        assert_eq!(acc.trial_id, 0);
        let res = select_checkpoint(&trials, &s, "accuracy", SelectionRule::OptimalResource { floor: 0.62 }).unwrap();
        assert_eq!(res.trial_id, 1);
        assert!(matches!(
            select_checkpoint(&trials, &s, "accuracy", SelectionRule::OptimalResource { floor: 0.9 }),
            Err(SearchError::EmptySelection)
        ));
        let single = &trials[..1];
        assert_eq!(select_checkpoint(single, &s, "accuracy", SelectionRule::OptimalResource { floor: 0.5 }).unwrap().trial_id, 0);
    }

    #[test]
    fn identical_objectives_all_in_archive() {
        let s = specs2();
        let trials: Vec<_> = (0..4).map(|i| rec(i, [0.5, 10.0], &[])).collect();
        assert_eq!(pareto_front(&trials, &s).len(), 4);
    }
}
