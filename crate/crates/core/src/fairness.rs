//! Group attribute ratios, balance, and the integer count windows that a
//! balance lower bound induces on a group of a given size.

use serde::Serialize;
use thiserror::Error;

use crate::cohort::{AttributeTable, CohortError};

/// Slack on count-window boundaries so that exact products like 0.2·5 land
/// on the right integer.
pub const WINDOW_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
}

impl From<CohortError> for FairnessError {
    fn from(e: CohortError) -> Self {
        match e {
            CohortError::UnknownAttribute(s) => Self::UnknownAttribute(s),
            other => Self::UnknownAttribute(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRecord {
    pub group_id: usize,
    pub attribute: String,
    pub group_ratio: f64,
    pub population_ratio: f64,
    pub balance: f64,
}

/// Share of members of group `c` carrying attribute `s`.
pub fn group_ratio(
    assignment: &[usize],
    attrs: &AttributeTable,
    s: &str,
    c: usize,
) -> Result<f64, FairnessError> {
    let col = attrs.column(s)?;
    let (mut size, mut hits) = (0usize, 0usize);
    for (m, &g) in assignment.iter().enumerate() {
        if g == c {
            size += 1;
            hits += usize::from(col[m]);
        }
    }
    if size == 0 {
        return Err(FairnessError::EmptyGroup(c));
    }
    Ok(hits as f64 / size as f64)
}

/// min(a_cs / a_s, a_s / a_cs). Zero when exactly one ratio is zero, one
/// when both are.
pub fn balance(group: f64, population: f64) -> f64 {
    match (group > 0.0, population > 0.0) {
        (false, false) => 1.0,
        (true, false) | (false, true) => 0.0,
        // min(R, 1/R) written so that it is exactly symmetric.
        (true, true) => group.min(population) / group.max(population),
    }
}

/// Inclusive range of admissible attributed-member counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountWindow {
    pub lo: usize,
    pub hi: usize,
}

impl CountWindow {
    pub fn contains(&self, k: usize) -> bool {
        (self.lo..=self.hi).contains(&k)
    }
}

/// Counts `k` for which a group of `size` with `k` attributed members has
/// balance at least `lower` against population ratio `population`. `None`
/// when no integer qualifies.
pub fn count_window(size: usize, population: f64, lower: f64) -> Option<CountWindow> {
    let g = size as f64;
    if lower <= 0.0 {
        return Some(CountWindow { lo: 0, hi: size });
    }
    let lo_real = (lower * population * g - WINDOW_EPS).ceil().max(0.0);
    let hi_real = ((population / lower).min(1.0) * g + WINDOW_EPS)
        .floor()
        .min(g);
    // A zero count has balance 0 whenever the population ratio is positive.
    let lo = if population > 0.0 {
        (lo_real as usize).max(1)
    } else {
        lo_real as usize
    };
    let hi = hi_real as usize;
    (lo <= hi).then_some(CountWindow { lo, hi })
}

/// Balance records for every group and the listed attributes.
pub fn balance_records(
    assignment: &[usize],
    attrs: &AttributeTable,
    attributes: &[String],
) -> Result<Vec<BalanceRecord>, FairnessError> {
    let groups = assignment.iter().copied().max().map_or(0, |g| g + 1);
    let mut out = Vec::new();
    for s in attributes {
        let pop = attrs.count(s)? as f64 / attrs.len() as f64;
        for c in 0..groups {
            let ratio = group_ratio(assignment, attrs, s, c)?;
            out.push(BalanceRecord {
                group_id: c,
                attribute: s.clone(),
                group_ratio: ratio,
                population_ratio: pop,
                balance: balance(ratio, pop),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn table(bits: Vec<bool>) -> AttributeTable {
        let ids = (0..bits.len()).map(|i| format!("s{i}")).collect();
        AttributeTable::new(ids, BTreeMap::from([("s".to_string(), bits)])).unwrap()
    }

    /// Ratio computed per vertex from the pair-indicator view: attributed
    /// neighbours plus self over neighbour count plus one.
    fn vertex_centric_ratio(assignment: &[usize], bits: &[bool], m: usize) -> f64 {
        let mut linked = 0usize;
        let mut attributed = 0usize;
        for n in 0..assignment.len() {
            if n != m && assignment[n] == assignment[m] {
                linked += 1;
                attributed += usize::from(bits[n]);
            }
        }
        (attributed + usize::from(bits[m])) as f64 / (linked + 1) as f64
    }

    #[test]
    fn group_ratio_examples() {
        let attrs = table(vec![
            true, false, false, false, false, true, true, false, false, false,
        ]);
        let assignment = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        assert_eq!(group_ratio(&assignment, &attrs, "s", 0).unwrap(), 0.2);
        assert_eq!(group_ratio(&assignment, &attrs, "s", 1).unwrap(), 0.4);
        let attrs = table(vec![false; 10]);
        assert_eq!(group_ratio(&assignment, &attrs, "s", 1).unwrap(), 0.0);
        assert_eq!(
            group_ratio(&assignment, &attrs, "s", 2),
            Err(FairnessError::EmptyGroup(2))
        );
        assert_eq!(
            group_ratio(&assignment, &attrs, "gender", 0),
            Err(FairnessError::UnknownAttribute("gender".into()))
        );
    }

    #[test]
    fn balance_examples() {
        assert_eq!(balance(0.2, 0.2), 1.0);
        assert_eq!(balance(0.4, 0.2), 0.5);
        assert_eq!(balance(0.0, 0.2), 0.0);
        assert_eq!(balance(0.3, 0.0), 0.0);
        assert_eq!(balance(0.0, 0.0), 1.0);
    }

    #[test]
    fn window_examples() {
        assert_eq!(
            count_window(5, 0.2, 1.0),
            Some(CountWindow { lo: 1, hi: 1 })
        );
        assert_eq!(
            count_window(5, 0.2, 0.0),
            Some(CountWindow { lo: 0, hi: 5 })
        );
        assert_eq!(count_window(4, 0.2, 1.0), None);
        assert_eq!(
            count_window(10, 0.2, 0.5),
            Some(CountWindow { lo: 1, hi: 4 })
        );
    }

    #[test]
    fn records_cover_groups() {
        let attrs = table(vec![
            true, true, false, false, false, false, false, false, false, false,
        ]);
        let assignment = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let recs = balance_records(&assignment, &attrs, &["s".to_string()]).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].group_ratio, 0.4);
        assert_eq!(recs[1].group_ratio, 0.0);
        assert_eq!(recs[0].balance, 0.5);
        assert_eq!(recs[1].balance, 0.0);
    }

    proptest! {
        #[test]
        fn balance_symmetric_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            prop_assert_eq!(balance(a, b), balance(b, a));
            prop_assert!((0.0..=1.0).contains(&balance(a, b)));
        }

        #[test]
        fn balance_of_equal_ratios_is_one(x in 1e-6f64..=1.0) {
            prop_assert_eq!(balance(x, x), 1.0);
        }

        #[test]
        fn window_matches_balance(g in 1usize..40, count in 1usize..40, n in 1usize..40, lower in 0.0f64..=1.0) {
            prop_assume!(count < n);
            let a_s = count as f64 / n as f64;
            let w = count_window(g, a_s, lower);
            for k in 0..=g {
                let b = balance(k as f64 / g as f64, a_s);
                match w {
                    Some(w) if w.contains(k) => prop_assert!(b >= lower - 1e-9, "k={} b={}", k, b),
                    _ => prop_assert!(b < lower, "k={} b={} window={:?}", k, b, w),
                }
            }
        }

        #[test]
        fn group_ratio_matches_vertex_view(
            assignment in proptest::collection::vec(0usize..4, 1..20),
            seed in any::<u64>(),
        ) {
            // Relabel to dense ids so every group is nonempty.
            let mut map = std::collections::BTreeMap::new();
            let assignment: Vec<usize> = assignment.iter().map(|&g| {
                let next = map.len();
                *map.entry(g).or_insert(next)
            }).collect();
            let bits: Vec<bool> = (0..assignment.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let attrs = table(bits.clone());
            for m in 0..assignment.len() {
                let a = group_ratio(&assignment, &attrs, "s", assignment[m]).unwrap();
                let b = vertex_centric_ratio(&assignment, &bits, m);
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
