//! Exact branch and bound over canonical vertex assignments.
//!
//! Students are placed in index order, each into an existing group with room
//! or into a fresh group numbered one past the current maximum. That visits
//! every partition exactly once, as restricted growth strings in
//! lexicographic order. Nodes are cut by size completion, by balance-window
//! completion, and by a pair-count objective bound.
//!
//! The incumbent is ordered by (objective, assignment) exactly, so the
//! result does not depend on the order in which workers find solutions.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use super::feasibility::{composable, feasibility_check, Feasibility};
use super::{
    assignment_objective, candidate_better, ActiveBalance, DistanceMatrix, PartitionError,
    PartitionProblem, PartitionSolution, Sense,
};

/// Best (objective, assignment) found by one worker, and its node count.
type WorkerResult = (Option<(f64, Vec<usize>)>, u64);

/// Relative slack applied when comparing a bound against the incumbent.
const BOUND_SLACK: f64 = 1e-9;
const CLOCK_CHECK_INTERVAL: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub time_budget: Duration,
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_budget: Duration::from_secs(60),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: u64,
    pub elapsed: Duration,
    pub timed_out: bool,
}

/// Solves the problem to proven optimality, or returns the incumbent inside
/// [`PartitionError::TimeoutBudgetExceeded`] when the budget runs out.
pub fn solve_exact(
    problem: &PartitionProblem,
    options: &SolveOptions,
) -> Result<PartitionSolution, PartitionError> {
    solve_with_stats(problem, options).0
}

pub fn solve_with_stats(
    problem: &PartitionProblem,
    options: &SolveOptions,
) -> (Result<PartitionSolution, PartitionError>, SolveStats) {
    let start = Instant::now();
    if let Err(e) = problem.validate() {
        return (Err(e), SolveStats::default());
    }
    if let Feasibility::Infeasible(reason) = feasibility_check(problem) {
        return (
            Err(PartitionError::InfeasibleProblem(reason)),
            SolveStats::default(),
        );
    }

    let ctx = Context::new(problem, start + options.time_budget);
    let workers = options.workers.max(1);
    let prefixes = if workers == 1 {
        vec![Vec::new()]
    } else {
        ctx.split(workers * 16)
    };

    let next = AtomicUsize::new(0);
    let results: Vec<WorkerResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers.min(prefixes.len()))
            .map(|_| {
                scope.spawn(|| {
                    let mut search = Search::new(&ctx);
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= prefixes.len() || ctx.stopped() {
                            break;
                        }
                        search.run_from(&prefixes[i]);
                    }
                    (search.best, search.nodes)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver worker panicked"))
            .collect()
    });

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut nodes = 0;
    for (cand, n) in results {
        nodes += n;
        if let Some((obj, a)) = cand {
            let replace = match &best {
                None => true,
                Some((b, ba)) => candidate_better(ctx.sense, obj, &a, *b, ba),
            };
            if replace {
                best = Some((obj, a));
            }
        }
    }

    let timed_out = ctx.stopped();
    let stats = SolveStats {
        nodes,
        elapsed: start.elapsed(),
        timed_out,
    };
    let solution = best.map(|(_, a)| {
        PartitionSolution::from_assignment(&a, &problem.distances, problem.sense, !timed_out)
    });
    let result = match (solution, timed_out) {
        (Some(s), false) => Ok(s),
        (incumbent, true) => Err(PartitionError::TimeoutBudgetExceeded {
            incumbent: incumbent.map(Box::new),
        }),
        (None, false) => Err(PartitionError::InfeasibleProblem(
            "no partition satisfies the size and balance constraints jointly".into(),
        )),
    };
    (result, stats)
}

struct Context<'a> {
    n: usize,
    lo: usize,
    hi: usize,
    sense: Sense,
    d: &'a DistanceMatrix,
    balances: Vec<ActiveBalance>,
    /// suffix_attr[b][i]: attributed students among indices >= i.
    suffix_attr: Vec<Vec<usize>>,
    composable: Vec<bool>,
    /// pair_prefix[depth][p]: sum of the p most favourable distances among
    /// pairs whose larger index is >= depth (largest first when maximizing,
    /// smallest first when minimizing).
    pair_prefix: Vec<Vec<f64>>,
    deadline: Instant,
    stop: AtomicBool,
    shared_best: AtomicU64,
}

impl<'a> Context<'a> {
    fn new(problem: &'a PartitionProblem, deadline: Instant) -> Self {
        let n = problem.n();
        let d = &problem.distances;
        let balances = problem.active_balances();
        let suffix_attr = balances
            .iter()
            .map(|b| {
                let mut s = vec![0; n + 1];
                for i in (0..n).rev() {
                    s[i] = s[i + 1] + usize::from(b.column[i]);
                }
                s
            })
            .collect();
        let composable = (0..=n)
            .map(|x| composable(x, problem.min_size, problem.max_size))
            .collect();
        let pair_prefix = (0..=n)
            .map(|depth| {
                let mut v: Vec<f64> = (depth.max(1)..n)
                    .flat_map(|k| (0..k).map(move |m| (m, k)))
                    .map(|(m, k)| d.get(m, k))
                    .collect();
                match problem.sense {
                    Sense::Maximize => v.sort_by(|a, b| b.total_cmp(a)),
                    Sense::Minimize => v.sort_by(|a, b| a.total_cmp(b)),
                }
                let mut prefix = Vec::with_capacity(v.len() + 1);
                prefix.push(0.0);
                let mut acc = 0.0;
                for x in v {
                    acc += x;
                    prefix.push(acc);
                }
                prefix
            })
            .collect();
        let init = match problem.sense {
            Sense::Maximize => f64::NEG_INFINITY,
            Sense::Minimize => f64::INFINITY,
        };
        Self {
            n,
            lo: problem.min_size,
            hi: problem.max_size,
            sense: problem.sense,
            d,
            balances,
            suffix_attr,
            composable,
            pair_prefix,
            deadline,
            stop: AtomicBool::new(false),
            shared_best: AtomicU64::new(init.to_bits()),
        }
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Relaxed)
    }

    fn shared_best(&self) -> f64 {
        f64::from_bits(self.shared_best.load(Ordering::Relaxed))
    }

    fn offer(&self, obj: f64) {
        let mut cur = self.shared_best.load(Ordering::Relaxed);
        while self.sense.better(obj, f64::from_bits(cur)) {
            match self.shared_best.compare_exchange_weak(
                cur,
                obj.to_bits(),
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(actual) => cur = actual,
            }
        }
    }

    /// Feasible partial assignments of a fixed depth, in lexicographic
    /// order, deep enough to give at least `target` subtrees.
    fn split(&self, target: usize) -> Vec<Vec<usize>> {
        let mut level: Vec<Vec<usize>> = vec![Vec::new()];
        let mut search = Search::new(self);
        while level.len() < target && level.first().is_some_and(|p| p.len() + 1 < self.n) {
            let mut next = Vec::new();
            for prefix in &level {
                search.load(prefix);
                let groups = search.sizes.len();
                let i = prefix.len();
                for c in 0..=groups {
                    if c < groups && search.sizes[c] >= self.hi {
                        continue;
                    }
                    search.place(i, c);
                    if search.feasible(i + 1) {
                        let mut p = prefix.clone();
                        p.push(c);
                        next.push(p);
                    }
                    search.unplace(i, c);
                }
            }
            if next.is_empty() {
                break;
            }
            level = next;
        }
        level
    }
}

struct Search<'c, 'a> {
    ctx: &'c Context<'a>,
    assign: Vec<usize>,
    sizes: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// counts[g][b]: attributed members of group g for balance b.
    counts: Vec<Vec<usize>>,
    partial: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
    nodes: u64,
}

impl<'c, 'a> Search<'c, 'a> {
    fn new(ctx: &'c Context<'a>) -> Self {
        Self {
            ctx,
            assign: vec![0; ctx.n],
            sizes: Vec::new(),
            members: Vec::new(),
            counts: Vec::new(),
            partial: vec![0.0],
            best: None,
            nodes: 0,
        }
    }

    fn load(&mut self, prefix: &[usize]) {
        self.sizes.clear();
        self.members.clear();
        self.counts.clear();
        self.partial.truncate(1);
        for (i, &c) in prefix.iter().enumerate() {
            self.place(i, c);
        }
    }

    fn run_from(&mut self, prefix: &[usize]) {
        self.load(prefix);
        if self.feasible(prefix.len()) {
            self.dfs(prefix.len());
        }
    }

    fn place(&mut self, i: usize, c: usize) {
        if c == self.sizes.len() {
            self.sizes.push(0);
            self.members.push(Vec::new());
            self.counts.push(vec![0; self.ctx.balances.len()]);
        }
        let gain: f64 = self.members[c].iter().map(|&j| self.ctx.d.get(i, j)).sum();
        let base = *self.partial.last().expect("partial sums start non-empty");
        self.partial.push(base + gain);
        self.assign[i] = c;
        self.sizes[c] += 1;
        self.members[c].push(i);
        for (b, bal) in self.ctx.balances.iter().enumerate() {
            self.counts[c][b] += usize::from(bal.column[i]);
        }
    }

    fn unplace(&mut self, i: usize, c: usize) {
        self.partial.pop();
        self.sizes[c] -= 1;
        self.members[c].pop();
        for (b, bal) in self.ctx.balances.iter().enumerate() {
            self.counts[c][b] -= usize::from(bal.column[i]);
        }
        if self.sizes[c] == 0 {
            self.sizes.pop();
            self.members.pop();
            self.counts.pop();
        }
    }

    fn dfs(&mut self, depth: usize) {
        let ctx = self.ctx;
        self.nodes += 1;
        if (self.nodes - 1).is_multiple_of(CLOCK_CHECK_INTERVAL) && Instant::now() >= ctx.deadline {
            ctx.stop.store(true, Ordering::Relaxed);
        }
        if ctx.stopped() {
            return;
        }
        if depth == ctx.n {
            self.record_leaf();
            return;
        }
        let groups = self.sizes.len();
        for c in 0..=groups {
            if c < groups && self.sizes[c] >= ctx.hi {
                continue;
            }
            self.place(depth, c);
            if self.feasible(depth + 1) && !self.bound_prunes(depth + 1) {
                self.dfs(depth + 1);
            }
            self.unplace(depth, c);
        }
    }

    fn record_leaf(&mut self) {
        let assignment = &self.assign[..];
        let obj = assignment_objective(assignment, self.ctx.d);
        let replace = match &self.best {
            None => true,
            Some((b, ba)) => candidate_better(self.ctx.sense, obj, assignment, *b, ba),
        };
        if replace {
            self.best = Some((obj, assignment.to_vec()));
            self.ctx.offer(obj);
        }
    }

    /// Whether the first `depth` students can be completed into a partition
    /// meeting the size bounds and every balance window.
    fn feasible(&self, depth: usize) -> bool {
        let ctx = self.ctx;
        let remaining = ctx.n - depth;
        let (lo, hi) = (ctx.lo, ctx.hi);

        let deficit: usize = self.sizes.iter().map(|&s| lo.saturating_sub(s)).sum();
        if deficit > remaining {
            return false;
        }
        let spare: usize = self.sizes.iter().map(|&s| hi - s.max(lo)).sum();
        let rest = remaining - deficit;
        if !(rest.saturating_sub(spare)..=rest).any(|x| ctx.composable[x]) {
            return false;
        }

        for (b, bal) in ctx.balances.iter().enumerate() {
            let ra = ctx.suffix_attr[b][depth];
            let rp = remaining - ra;
            let (mut need_attr, mut need_plain) = (0usize, 0usize);
            for (g, &s) in self.sizes.iter().enumerate() {
                let c = self.counts[g][b];
                let mut best_attr = usize::MAX;
                let mut best_plain = usize::MAX;
                for size in s.max(lo)..=hi.min(s + remaining) {
                    let Some(w) = bal.windows[size] else { continue };
                    let added = size - s;
                    let kmin = c.max((c + added).saturating_sub(rp)).max(w.lo);
                    let kmax = (c + added).min(c + ra).min(w.hi);
                    if kmin <= kmax {
                        best_attr = best_attr.min(kmin - c);
                        best_plain = best_plain.min(added - (kmax - c));
                    }
                }
                if best_attr == usize::MAX {
                    return false;
                }
                need_attr += best_attr;
                need_plain += best_plain;
            }
            if need_attr > ra || need_plain > rp {
                return false;
            }
        }
        true
    }

    fn bound_prunes(&self, depth: usize) -> bool {
        let ctx = self.ctx;
        let mut reference = ctx.shared_best();
        if let Some((b, _)) = &self.best {
            if ctx.sense.better(*b, reference) {
                reference = *b;
            }
        }
        if !reference.is_finite() {
            return false;
        }
        let remaining = ctx.n - depth;
        let pairs = match ctx.sense {
            Sense::Maximize => max_new_pairs(&self.sizes, remaining, ctx.hi),
            Sense::Minimize => min_new_pairs(&self.sizes, remaining, ctx.lo),
        };
        let prefix = &ctx.pair_prefix[depth];
        let bound = self.partial.last().expect("non-empty") + prefix[pairs.min(prefix.len() - 1)];
        let slack = BOUND_SLACK * reference.abs().max(1.0);
        match ctx.sense {
            Sense::Maximize => bound < reference - slack,
            Sense::Minimize => bound > reference + slack,
        }
    }
}

/// Upper bound on intra-group pairs still to be created when `remaining`
/// students join groups of the given sizes or new groups, capacity `hi`.
pub(crate) fn max_new_pairs(sizes: &[usize], remaining: usize, hi: usize) -> usize {
    let mut open: Vec<usize> = sizes.iter().copied().filter(|&s| s < hi).collect();
    open.sort_unstable_by(|a, b| b.cmp(a));
    let mut r = remaining;
    let mut pairs = 0;
    for s in open {
        if r == 0 {
            break;
        }
        let a = (hi - s).min(r);
        pairs += a * s + a * (a - 1) / 2;
        r -= a;
    }
    pairs += (r / hi) * (hi * (hi - 1) / 2);
    let rem = r % hi;
    pairs + rem * rem.saturating_sub(1) / 2
}

/// Lower bound on intra-group pairs still to be created: groups below `lo`
/// must be topped up, and every other remaining student ends in a group of
/// at least `lo` members.
pub(crate) fn min_new_pairs(sizes: &[usize], remaining: usize, lo: usize) -> usize {
    let choose2 = |x: usize| x * x.saturating_sub(1) / 2;
    let mut forced = 0;
    let mut deficit = 0;
    for &s in sizes {
        if s < lo {
            forced += choose2(lo) - choose2(s);
            deficit += lo - s;
        }
    }
    let leftover = remaining.saturating_sub(deficit);
    forced + (leftover * (lo - 1)).div_ceil(2)
}
