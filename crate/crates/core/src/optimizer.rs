//! Service-level assignment.
//!
//! Choose exactly one service level per item so that total safety-stock value
//! is minimal while every constrained class satisfies
//! `Σ_i W_i α_{i,k(i)} ≥ target`. Items of different classes never share a
//! constraint, so each class is an independent multiple-choice knapsack.
//!
//! [`solve_bb`] is a depth-first branch-and-bound using the LP relaxation of
//! the remaining items as lower bound. [`solve_exhaustive`] enumerates every
//! assignment and serves as the test oracle.
//!
//! Among plans of equal cost the one with the higher weighted service wins,
//! then the lexicographically smaller vector of level indices. Plan cost and
//! service are always summed in item order, so both solvers produce the same
//! floating-point totals for the same assignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::ClassTargets;
use crate::demand_model::ModelKind;
use crate::ingest::{ItemClass, ItemRecord};
use crate::report::GridRow;

/// Slack allowed on a class constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Largest per-class assignment count [`solve_exhaustive`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibleClass {
    pub class: ItemClass,
    pub target: f64,
    pub max_achievable: f64,
}

impl fmt::Display for InfeasibleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "class {}: target {} exceeds the best achievable weighted service {}",
            self.class, self.target, self.max_achievable
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("infeasible: {}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Infeasible(Vec<InfeasibleClass>),
    #[error("class {class}: {combinations} assignments exceed the exhaustive limit")]
    TooLarge { class: ItemClass, combinations: u128 },
    #[error("grid has no {model} cell for item {item_id} at target {target_sl}")]
    MissingCell {
        item_id: String,
        model: ModelKind,
        target_sl: f64,
    },
    #[error("corrupt input: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub target_sl: f64,
    /// C_ik
    pub cost: f64,
    /// α_ik, the realized cycle service level.
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemItem {
    pub item_id: String,
    pub class: ItemClass,
    pub weight: f64,
    pub levels: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Problem {
    pub items: Vec<ProblemItem>,
    pub targets: ClassTargets,
}

impl Problem {
    /// Checks the structural invariants.
    pub fn new(items: Vec<ProblemItem>, targets: ClassTargets) -> Result<Self, OptimizeError> {
        let corrupt = |m: String| Err(OptimizeError::Corrupt(m));
        for it in &items {
            if it.levels.is_empty() {
                return corrupt(format!("item {} has no levels", it.item_id));
            }
            if !(it.weight.is_finite() && it.weight >= 0.0) {
                return corrupt(format!("item {} has weight {}", it.item_id, it.weight));
            }
            for l in &it.levels {
                if !(l.cost.is_finite() && l.cost >= 0.0) {
                    return corrupt(format!("item {} level {} has cost {}", it.item_id, l.target_sl, l.cost));
                }
                if !(0.0..=1.0).contains(&l.service) {
                    return corrupt(format!(
                        "item {} level {} has service {}",
                        it.item_id, l.target_sl, l.service
                    ));
                }
            }
        }
        for class in ItemClass::ALL {
            if targets.get(class).is_some() {
                let members: Vec<_> = items.iter().filter(|i| i.class == class).collect();
                if !members.is_empty() && members.iter().all(|i| i.weight == 0.0) {
                    return corrupt(format!("constrained class {class} has all-zero weights"));
                }
            }
        }
        Ok(Self { items, targets })
    }

    pub fn classes(&self) -> BTreeSet<ItemClass> {
        self.items.iter().map(|i| i.class).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.items.iter().map(|i| i.levels.len()).sum()
    }

    fn class_problem(&self, class: ItemClass) -> ClassProblem {
        let idx: Vec<usize> = (0..self.items.len()).filter(|&i| self.items[i].class == class).collect();
        ClassProblem {
            costs: idx.iter().map(|&i| self.items[i].levels.iter().map(|l| l.cost).collect()).collect(),
            gains: idx
                .iter()
                .map(|&i| {
                    let w = self.items[i].weight;
                    self.items[i].levels.iter().map(|l| w * l.service).collect()
                })
                .collect(),
            target: self.targets.get(class),
            members: idx,
        }
    }
}

/// Weight of every item: explicit weights when the whole class has them,
/// `1 / |class|` when none do.
fn class_weights(records: &[&ItemRecord]) -> Result<BTreeMap<String, f64>, OptimizeError> {
    let mut out = BTreeMap::new();
    for class in ItemClass::ALL {
        let members: Vec<&&ItemRecord> = records.iter().filter(|r| r.class == class).collect();
        let with = members.iter().filter(|r| r.weight.is_some()).count();
        if with != 0 && with != members.len() {
            return Err(OptimizeError::Corrupt(format!(
                "class {class}: weights given for {with} of {} items",
                members.len()
            )));
        }
        let default = 1.0 / members.len().max(1) as f64;
        for r in members {
            out.insert(r.item_id.clone(), r.weight.unwrap_or(default));
        }
    }
    Ok(out)
}

/// Builds the problem for one model from simulation grid rows.
///
/// The level set is every target service level present for `model`; each
/// item must have a row at every level. Rows for items not in `records` are
/// ignored.
pub fn build_problem(
    rows: &[GridRow],
    records: &[&ItemRecord],
    targets: ClassTargets,
    model: ModelKind,
) -> Result<Problem, OptimizeError> {
    let known: BTreeSet<&str> = records.iter().map(|r| r.item_id.as_str()).collect();
    let mut cells: BTreeMap<(&str, u64), &GridRow> = BTreeMap::new();
    let mut grid: Vec<f64> = Vec::new();
    for row in rows.iter().filter(|r| r.model == model && known.contains(r.item_id.as_str())) {
        if !(row.safety_stock_value.is_finite() && row.safety_stock_value >= 0.0) {
            return Err(OptimizeError::Corrupt(format!(
                "item {} at {} has safety stock value {}",
                row.item_id, row.target_sl, row.safety_stock_value
            )));
        }
        if cells.insert((row.item_id.as_str(), row.target_sl.to_bits()), row).is_some() {
            return Err(OptimizeError::Corrupt(format!(
                "duplicate {model} row for item {} at {}",
                row.item_id, row.target_sl
            )));
        }
        grid.push(row.target_sl);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite target"));
    grid.dedup();

    let weights = class_weights(records)?;
    let mut sorted: Vec<&&ItemRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut items = Vec::with_capacity(sorted.len());
    for r in sorted {
        let mut levels = Vec::with_capacity(grid.len());
        for &alpha in &grid {
            let row = cells
                .get(&(r.item_id.as_str(), alpha.to_bits()))
                .ok_or_else(|| OptimizeError::MissingCell {
                    item_id: r.item_id.clone(),
                    model,
                    target_sl: alpha,
                })?;
            levels.push(Level {
                target_sl: alpha,
                cost: row.safety_stock_value,
                service: row.realized_cycle_sl,
            });
        }
        if levels.is_empty() {
            return Err(OptimizeError::MissingCell {
                item_id: r.item_id.clone(),
                model,
                target_sl: f64::NAN,
            });
        }
        items.push(ProblemItem {
            item_id: r.item_id.clone(),
            class: r.class,
            weight: weights[&r.item_id],
            levels,
        });
    }
    Problem::new(items, targets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Choice {
    pub item_id: String,
    pub class: ItemClass,
    pub level: usize,
    pub target_sl: f64,
    pub cost: f64,
    pub service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassOutcome {
    pub class: ItemClass,
    pub target: Option<f64>,
    pub cost: f64,
    /// Σ W_i α_i over the chosen levels.
    pub weighted_service: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    /// One entry per problem item, in problem order.
    pub choices: Vec<Choice>,
    /// Sum of the per-class costs in class order.
    pub total_cost: f64,
    pub classes: Vec<ClassOutcome>,
}

impl Plan {
    pub fn level_of(&self, item_id: &str) -> Option<usize> {
        self.choices.iter().find(|c| c.item_id == item_id).map(|c| c.level)
    }

    /// Checks one-level-per-item and every class constraint.
    pub fn is_feasible(&self, problem: &Problem) -> bool {
        if self.choices.len() != problem.items.len() {
            return false;
        }
        for (c, it) in self.choices.iter().zip(&problem.items) {
            if c.item_id != it.item_id || c.level >= it.levels.len() {
                return false;
            }
        }
        problem.classes().into_iter().all(|class| match problem.targets.get(class) {
            None => true,
            Some(t) => {
                let ws: f64 = self
                    .choices
                    .iter()
                    .zip(&problem.items)
                    .filter(|(_, it)| it.class == class)
                    .map(|(c, it)| it.weight * it.levels[c.level].service)
                    .sum();
                ws >= t - FEASIBILITY_TOL
            }
        })
    }
}

struct ClassProblem {
    /// Positions of the class members in `Problem::items`.
    members: Vec<usize>,
    costs: Vec<Vec<f64>>,
    /// W_i α_ik
    gains: Vec<Vec<f64>>,
    target: Option<f64>,
}

#[derive(Debug, Clone)]
struct Candidate {
    cost: f64,
    gain: f64,
    choice: Vec<usize>,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        if self.cost != other.cost {
            return self.cost < other.cost;
        }
        if self.gain != other.gain {
            return self.gain > other.gain;
        }
        self.choice < other.choice
    }
}

impl ClassProblem {
    fn n(&self) -> usize {
        self.costs.len()
    }

    fn totals(&self, choice: &[usize]) -> (f64, f64) {
        let mut cost = 0.0;
        let mut gain = 0.0;
        for (i, &k) in choice.iter().enumerate() {
            cost += self.costs[i][k];
            gain += self.gains[i][k];
        }
        (cost, gain)
    }

    fn max_gain(&self) -> f64 {
        self.gains
            .iter()
            .fold(0.0, |acc, g| acc + g.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    fn feasible_gain(&self, gain: f64) -> bool {
        self.target.is_none_or(|t| gain >= t - FEASIBILITY_TOL)
    }

    /// Cheapest level per item (ties: more service, then lower index).
    fn per_item_minimum(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                (0..self.costs[i].len())
                    .min_by(|&a, &b| {
                        self.costs[i][a]
                            .partial_cmp(&self.costs[i][b])
                            .expect("finite")
                            .then(self.gains[i][b].partial_cmp(&self.gains[i][a]).expect("finite"))
                            .then(a.cmp(&b))
                    })
                    .expect("item has levels")
            })
            .collect()
    }

    fn infeasibility(&self, class: ItemClass) -> Option<InfeasibleClass> {
        let target = self.target?;
        let best = self.max_gain();
        (best < target - FEASIBILITY_TOL).then_some(InfeasibleClass {
            class,
            target,
            max_achievable: best,
        })
    }

    fn candidate(&self, choice: Vec<usize>) -> Candidate {
        let (cost, gain) = self.totals(&choice);
        Candidate { cost, gain, choice }
    }
}

fn assemble(problem: &Problem, per_class: Vec<(ItemClass, ClassProblem, Candidate)>) -> Plan {
    let mut levels = vec![0usize; problem.items.len()];
    let mut classes = Vec::new();
    let mut total_cost = 0.0;
    for (class, cp, cand) in per_class {
        for (pos, &k) in cp.members.iter().zip(&cand.choice) {
            levels[*pos] = k;
        }
        total_cost += cand.cost;
        classes.push(ClassOutcome {
            class,
            target: cp.target,
            cost: cand.cost,
            weighted_service: cand.gain,
        });
    }
    let choices = problem
        .items
        .iter()
        .zip(levels)
        .map(|(it, k)| Choice {
            item_id: it.item_id.clone(),
            class: it.class,
            level: k,
            target_sl: it.levels[k].target_sl,
            cost: it.levels[k].cost,
            service: it.levels[k].service,
        })
        .collect();
    Plan {
        choices,
        total_cost,
        classes,
    }
}

fn solve_with(
    problem: &Problem,
    solver: impl Fn(ItemClass, &ClassProblem) -> Result<Candidate, OptimizeError>,
) -> Result<Plan, OptimizeError> {
    let mut infeasible = Vec::new();
    let mut per_class = Vec::new();
    for class in problem.classes() {
        let cp = problem.class_problem(class);
        if let Some(bad) = cp.infeasibility(class) {
            infeasible.push(bad);
            continue;
        }
        let cand = if cp.target.is_none() {
            cp.candidate(cp.per_item_minimum())
        } else {
            solver(class, &cp)?
        };
        per_class.push((class, cp, cand));
    }
    if !infeasible.is_empty() {
        return Err(OptimizeError::Infeasible(infeasible));
    }
    Ok(assemble(problem, per_class))
}

/// Global optimum by enumerating every assignment of each constrained class.
pub fn solve_exhaustive(problem: &Problem) -> Result<Plan, OptimizeError> {
    solve_with(problem, |class, cp| {
        let radices: Vec<usize> = cp.costs.iter().map(|c| c.len()).collect();
        let combinations = radices.iter().map(|&r| r as u128).product::<u128>();
        if combinations > EXHAUSTIVE_LIMIT {
            return Err(OptimizeError::TooLarge { class, combinations });
        }
        let mut best: Option<Candidate> = None;
        let mut choice = vec![0usize; radices.len()];
        loop {
            let cand = cp.candidate(choice.clone());
            if cp.feasible_gain(cand.gain) && best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
            // Mixed-radix increment, last item fastest.
            let mut pos = radices.len();
            loop {
                if pos == 0 {
                    return Ok(best.expect("feasibility checked before search"));
                }
                pos -= 1;
                choice[pos] += 1;
                if choice[pos] < radices[pos] {
                    break;
                }
                choice[pos] = 0;
            }
        }
    })
}

/// One step along an item's lower convex hull of (service, cost).
#[derive(Debug, Clone, Copy)]
struct Step {
    slope: f64,
    gain: f64,
    cost: f64,
}

/// Lower convex hull of an item's levels starting from its cheapest level.
/// Returns the start (gain, cost) and the steps in increasing slope.
fn hull(costs: &[f64], gains: &[f64]) -> ((f64, f64), Vec<Step>) {
    let mut pts: Vec<(f64, f64)> = gains.iter().copied().zip(costs.iter().copied()).collect();
    // By gain ascending, then cost ascending.
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let min_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let start = pts
        .iter()
        .filter(|p| p.1 == min_cost)
        .cloned()
        .fold((f64::NEG_INFINITY, min_cost), |a, p| if p.0 > a.0 { p } else { a });
    // Points worth moving to: more gain than the start; per gain keep the cheapest.
    let mut cand: Vec<(f64, f64)> = Vec::new();
    for p in pts.into_iter().filter(|p| p.0 > start.0) {
        match cand.last() {
            Some(last) if last.0 == p.0 => {}
            _ => cand.push(p),
        }
    }
    let mut chain: Vec<(f64, f64)> = vec![start];
    for p in cand {
        // Drop points that are not cheaper per unit gain than continuing on.
        while chain.len() >= 2 {
            let a = chain[chain.len() - 2];
            let b = chain[chain.len() - 1];
            let s_ab = (b.1 - a.1) / (b.0 - a.0);
            let s_ap = (p.1 - a.1) / (p.0 - a.0);
            if s_ap <= s_ab {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(p);
    }
    // A hull point can only be cheaper than the start if the start was not the
    // cheapest; filter so costs never decrease.
    let steps = chain
        .windows(2)
        .map(|w| {
            let gain = w[1].0 - w[0].0;
            let cost = (w[1].1 - w[0].1).max(0.0);
            Step {
                slope: cost / gain,
                gain,
                cost,
            }
        })
        .collect();
    (start, steps)
}

/// LP-relaxation bounds for every suffix of the item order.
struct SuffixBounds {
    base_cost: Vec<f64>,
    base_gain: Vec<f64>,
    max_gain: Vec<f64>,
    steps: Vec<Vec<Step>>,
}

impl SuffixBounds {
    fn new(cp: &ClassProblem) -> Self {
        let n = cp.n();
        let hulls: Vec<_> = (0..n).map(|i| hull(&cp.costs[i], &cp.gains[i])).collect();
        let mut base_cost = vec![0.0; n + 1];
        let mut base_gain = vec![0.0; n + 1];
        let mut max_gain = vec![0.0; n + 1];
        let mut steps: Vec<Vec<Step>> = vec![Vec::new(); n + 1];
        for d in (0..n).rev() {
            let (start, ref st) = hulls[d];
            base_cost[d] = base_cost[d + 1] + start.1;
            base_gain[d] = base_gain[d + 1] + start.0;
            max_gain[d] = max_gain[d + 1] + cp.gains[d].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut merged = steps[d + 1].clone();
            merged.extend(st.iter().copied());
            merged.sort_by(|a, b| a.slope.partial_cmp(&b.slope).unwrap());
            steps[d] = merged;
        }
        Self {
            base_cost,
            base_gain,
            max_gain,
            steps,
        }
    }

    /// Minimum fractional cost for items `d..` to contribute `need` gain.
    fn bound(&self, d: usize, need: f64) -> f64 {
        if need <= self.base_gain[d] {
            return self.base_cost[d];
        }
        if need > self.max_gain[d] + FEASIBILITY_TOL {
            return f64::INFINITY;
        }
        let mut rem = need - self.base_gain[d];
        let mut cost = self.base_cost[d];
        for s in &self.steps[d] {
            if s.gain >= rem {
                return cost + s.slope * rem;
            }
            cost += s.cost;
            rem -= s.gain;
        }
        cost
    }
}

struct Search<'a> {
    cp: &'a ClassProblem,
    target: f64,
    bounds: SuffixBounds,
    order: Vec<Vec<usize>>,
    best: Option<Candidate>,
    choice: Vec<usize>,
    nodes: u64,
}

impl Search<'_> {
    fn dfs(&mut self, d: usize, cost: f64, gain: f64) {
        self.nodes += 1;
        let n = self.cp.n();
        if d == n {
            if gain >= self.target - FEASIBILITY_TOL {
                let cand = Candidate {
                    cost,
                    gain,
                    choice: self.choice.clone(),
                };
                if self.best.as_ref().is_none_or(|b| cand.beats(b)) {
                    self.best = Some(cand);
                }
            }
            return;
        }
        let need = self.target - FEASIBILITY_TOL - gain;
        let lb = cost + self.bounds.bound(d, need);
        if !lb.is_finite() {
            return;
        }
        if let Some(b) = &self.best {
            if lb > b.cost + 1e-9 * b.cost.abs().max(1.0) {
                return;
            }
        }
        for idx in 0..self.order[d].len() {
            let k = self.order[d][idx];
            self.choice[d] = k;
            self.dfs(d + 1, cost + self.cp.costs[d][k], gain + self.cp.gains[d][k]);
        }
    }
}

/// Exact optimum by branch-and-bound on each constrained class.
pub fn solve_bb(problem: &Problem) -> Result<Plan, OptimizeError> {
    solve_with(problem, |_, cp| Ok(branch_and_bound(cp).0))
}

fn branch_and_bound(cp: &ClassProblem) -> (Candidate, u64) {
    let target = cp.target.expect("constrained class");
    // Try cheap levels first so a good incumbent appears early.
    let order = (0..cp.n())
        .map(|i| {
            let mut ks: Vec<usize> = (0..cp.costs[i].len()).collect();
            ks.sort_by(|&a, &b| {
                cp.costs[i][a]
                    .partial_cmp(&cp.costs[i][b])
                    .unwrap()
                    .then(cp.gains[i][b].partial_cmp(&cp.gains[i][a]).unwrap())
                    .then(a.cmp(&b))
            });
            ks
        })
        .collect();
    let mut search = Search {
        cp,
        target,
        bounds: SuffixBounds::new(cp),
        order,
        best: None,
        choice: vec![0; cp.n()],
        nodes: 0,
    };
    search.dfs(0, 0.0, 0.0);
    let nodes = search.nodes;
    (search.best.expect("feasibility checked before search"), nodes)
}

/// Per class and model: unweighted means of the chosen cells and the total
/// safety-stock value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub class: ItemClass,
    pub model: ModelKind,
    pub items: usize,
    pub mean_cycle_sl: f64,
    pub mean_period_sl: f64,
    pub total_value: f64,
}

/// Class summary for the plans of each model, rows ordered by class then model.
pub fn summarize(plans: &[(ModelKind, &Plan)], rows: &[GridRow]) -> Result<Vec<SummaryRow>, OptimizeError> {
    let lookup: BTreeMap<(&str, ModelKind, u64), &GridRow> = rows
        .iter()
        .map(|r| ((r.item_id.as_str(), r.model, r.target_sl.to_bits()), r))
        .collect();
    let mut out = Vec::new();
    let classes: BTreeSet<ItemClass> = plans
        .iter()
        .flat_map(|(_, p)| p.choices.iter().map(|c| c.class))
        .collect();
    for class in classes {
        let mut per_model: Vec<&(ModelKind, &Plan)> = plans.iter().collect();
        per_model.sort_by_key(|(m, _)| *m);
        for (model, plan) in per_model {
            let chosen: Vec<&Choice> = plan.choices.iter().filter(|c| c.class == class).collect();
            if chosen.is_empty() {
                continue;
            }
            let mut cycle = 0.0;
            let mut period = 0.0;
            let mut value = 0.0;
            for c in &chosen {
                let row = lookup
                    .get(&(c.item_id.as_str(), *model, c.target_sl.to_bits()))
                    .ok_or_else(|| OptimizeError::MissingCell {
                        item_id: c.item_id.clone(),
                        model: *model,
                        target_sl: c.target_sl,
                    })?;
                cycle += row.realized_cycle_sl;
                period += row.realized_period_sl;
                value += c.cost;
            }
            let n = chosen.len() as f64;
            out.push(SummaryRow {
                class,
                model: *model,
                items: chosen.len(),
                mean_cycle_sl: cycle / n,
                mean_period_sl: period / n,
                total_value: value,
            });
        }
    }
    Ok(out)
}
