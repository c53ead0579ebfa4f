use super::PartitionProblem;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible(String),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Whether `x` students can be split into groups with sizes in [lo, hi].
/// Zero students trivially qualify.
pub(crate) fn composable(x: usize, lo: usize, hi: usize) -> bool {
    x == 0 || x.div_ceil(hi) <= x / lo
}

/// Necessary conditions checked before search: a size composition exists,
/// and for each balance bound taken alone some composition admits per-group
/// counts inside their windows summing to the population count.
pub fn feasibility_check(problem: &PartitionProblem) -> Feasibility {
    let n = problem.n();
    let (lo, hi) = (problem.min_size, problem.max_size);
    if !composable(n, lo, hi) {
        let reason = if lo == hi {
            format!("no composition of {n} into parts of size exactly {lo}")
        } else {
            format!("no composition of {n} into parts with sizes between {lo} and {hi}")
        };
        return Feasibility::Infeasible(reason);
    }

    for active in problem.active_balances() {
        // reach[s][c]: some groups of total size s can hold c attributed
        // members with every group inside its window.
        let mut reach = vec![vec![false; active.total + 1]; n + 1];
        reach[0][0] = true;
        for s in 0..n {
            for c in 0..=active.total {
                if !reach[s][c] {
                    continue;
                }
                for g in lo..=hi.min(n - s) {
                    let Some(w) = active.windows[g] else { continue };
                    for k in w.lo..=w.hi.min(active.total - c) {
                        reach[s + g][c + k] = true;
                    }
                }
            }
        }
        if !reach[n][active.total] {
            return Feasibility::Infeasible(format!(
                "balance bound {} on {} cannot be met: no group sizes in [{lo}, {hi}] \
                 admit per-group counts summing to the {} attributed students",
                active.lower, active.name, active.total
            ));
        }
    }
    Feasibility::Feasible
}
