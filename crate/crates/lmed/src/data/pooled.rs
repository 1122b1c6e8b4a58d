//! Pooled expansion of a dataset over hypothetical mediator values.
//!
//! The sequential estimator regresses pseudo-outcomes that depend on a
//! hypothetical mediator suffix `(m_t, ..., m_tau)`, so each observation is
//! replicated once per suffix. Expansion proceeds backwards: the level for
//! time `tau` replicates every source row once per mediator level at `tau`;
//! the level for time `t` replicates every level-`t+1` row once per mediator
//! level at `t`, prepending the new value to the suffix.
//!
//! Rows are ordered parent-major with the new mediator level ascending, so a
//! child row `r` maps to parent row `r / arity` and carries level code
//! `r % arity`. Projecting out the new value therefore recovers the parent
//! exactly, and all bookkeeping is integer arithmetic instead of stored
//! columns.

use crate::data::LongitudinalDataset;

/// A full mediator path `(m_1, ..., m_tau)` in dictionary codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MediatorPath(pub Vec<i64>);

impl MediatorPath {
    /// Decode to level labels using the dataset dictionaries.
    pub fn labels(&self, data: &LongitudinalDataset) -> Vec<String> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &c)| data.mediator_support(i + 1)[c as usize].clone())
            .collect()
    }
}

/// One expansion level: the pooled rows carrying suffixes `(m_t, ..., m_tau)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledLevel {
    /// Time this level expands (1-based).
    pub t: usize,
    /// Number of mediator levels at time `t`.
    pub arity: usize,
    /// Total pooled rows at this level.
    pub rows: usize,
}

impl PooledLevel {
    /// Expand a parent with `parent_rows` rows by `arity` mediator levels.
    pub fn expand(t: usize, parent_rows: usize, arity: usize) -> PooledLevel {
        PooledLevel { t, arity, rows: parent_rows * arity }
    }

    /// Parent row of pooled row `r` (a level-`t+1` row, or a source row when
    /// this is the deepest level).
    pub fn parent_row(&self, r: usize) -> usize {
        r / self.arity
    }

    /// Mediator code this pooled row hypothesizes at time `t`.
    pub fn m_code(&self, r: usize) -> i64 {
        (r % self.arity) as i64
    }
}

/// The whole stack of expansion levels for a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PooledStack {
    /// `levels[t - 1]` is the level for time `t`.
    pub levels: Vec<PooledLevel>,
    /// Source dataset row count.
    pub n: usize,
}

impl PooledStack {
    /// Build all levels from `tau` down to 1.
    pub fn build(data: &LongitudinalDataset) -> PooledStack {
        let tau = data.schema().tau();
        let n = data.n();
        let mut levels = vec![None; tau];
        let mut parent_rows = n;
        for t in (1..=tau).rev() {
            let level = PooledLevel::expand(t, parent_rows, data.mediator_arity(t));
            parent_rows = level.rows;
            levels[t - 1] = Some(level);
        }
        PooledStack { levels: levels.into_iter().map(Option::unwrap).collect(), n }
    }

    pub fn level(&self, t: usize) -> &PooledLevel {
        &self.levels[t - 1]
    }

    /// Source dataset row underlying pooled row `r` at level `t`.
    pub fn source_row(&self, t: usize, r: usize) -> usize {
        let tau = self.levels.len();
        let mut row = r;
        for s in t..=tau {
            row = self.levels[s - 1].parent_row(row);
        }
        row
    }

    /// Ancestor pooled row at level `s >= t` of row `r` at level `t`.
    pub fn ancestor_row(&self, t: usize, r: usize, s: usize) -> usize {
        debug_assert!(s >= t);
        let mut row = r;
        for u in t..s {
            row = self.levels[u - 1].parent_row(row);
        }
        row
    }

    /// Hypothesized mediator code at time `s >= t` for row `r` at level `t`.
    pub fn suffix_code(&self, t: usize, r: usize, s: usize) -> i64 {
        let anc = self.ancestor_row(t, r, s);
        self.levels[s - 1].m_code(anc)
    }

    /// Full suffix `(m_t, ..., m_tau)` of row `r` at level `t`.
    pub fn suffix(&self, t: usize, r: usize) -> Vec<i64> {
        (t..=self.levels.len()).map(|s| self.suffix_code(t, r, s)).collect()
    }

    /// Pooled row at level 1 for (source row, full path), inverting
    /// [`PooledStack::source_row`] + [`PooledStack::suffix`].
    pub fn row_for_path(&self, source: usize, path: &MediatorPath) -> usize {
        let tau = self.levels.len();
        let mut row = source;
        for t in (1..=tau).rev() {
            row = row * self.levels[t - 1].arity + path.0[t - 1] as usize;
        }
        row
    }

    /// Every full mediator path, in row order of the level-1 expansion of a
    /// single source row.
    pub fn all_paths(&self) -> Vec<MediatorPath> {
        let tau = self.levels.len();
        let mut paths = vec![Vec::new()];
        // Build outer-to-inner: the level-1 code varies fastest in row order,
        // so enumerate times tau..1 as successively faster axes.
        for t in (1..=tau).rev() {
            let arity = self.levels[t - 1].arity;
            let mut next = Vec::with_capacity(paths.len() * arity);
            for p in &paths {
                for code in 0..arity {
                    let mut q = p.clone();
                    q.push(code as i64);
                    next.push(q);
                }
            }
            paths = next;
        }
        paths
            .into_iter()
            .map(|mut p| {
                p.reverse();
                MediatorPath(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::NodeSchema;

    fn tiny_dataset(n: usize, arities: &[usize]) -> LongitudinalDataset {
        let tau = arities.len();
        let schema = NodeSchema::new(
            tau,
            vec![Vec::new(); tau],
            (1..=tau).map(|t| format!("a{t}")).collect(),
            vec![Vec::new(); tau],
            (1..=tau).map(|t| format!("m{t}")).collect(),
            "y".into(),
            Vec::new(),
            Vec::new(),
            None,
        )
        .unwrap();
        LongitudinalDataset::from_parts(
            schema,
            vec![Vec::new(); tau],
            vec![Vec::new(); tau],
            vec![vec![0; n]; tau],
            (0..tau).map(|t| (0..n).map(|i| (i % arities[t]) as i64).collect()).collect(),
            vec![0.0; n],
            vec![vec!["0".into(), "1".into()]; tau],
            arities
                .iter()
                .map(|&j| (0..j).map(|c| c.to_string()).collect())
                .collect(),
            None,
        )
    }

    #[test]
    fn expansion_multiplies_rows_and_prepends_codes() {
        let data = tiny_dataset(10, &[2, 3]);
        let stack = PooledStack::build(&data);
        assert_eq!(stack.level(2).rows, 30);
        assert_eq!(stack.level(1).rows, 60);
        // Parent row 7 at level 2 expands into level-1 rows 14 and 15 with
        // codes 0 and 1 prepended.
        assert_eq!(stack.level(1).parent_row(14), 7);
        assert_eq!(stack.level(1).parent_row(15), 7);
        assert_eq!(stack.level(1).m_code(14), 0);
        assert_eq!(stack.level(1).m_code(15), 1);
    }

    #[test]
    fn suffixes_and_sources_are_consistent() {
        let data = tiny_dataset(4, &[2, 3]);
        let stack = PooledStack::build(&data);
        for r in 0..stack.level(1).rows {
            let suffix = stack.suffix(1, r);
            assert_eq!(suffix.len(), 2);
            assert_eq!(suffix[0], stack.level(1).m_code(r));
            let parent = stack.level(1).parent_row(r);
            assert_eq!(suffix[1], stack.level(2).m_code(parent));
            let source = stack.source_row(1, r);
            assert_eq!(source, stack.level(2).parent_row(parent));
            // Round-trip through row_for_path.
            assert_eq!(stack.row_for_path(source, &MediatorPath(suffix)), r);
        }
    }

    #[test]
    fn projecting_out_the_new_value_recovers_the_parent() {
        let data = tiny_dataset(5, &[3]);
        let stack = PooledStack::build(&data);
        let lvl = stack.level(1);
        // Group children by parent: each parent appears exactly `arity` times
        // with codes 0..arity in order.
        let mut per_parent = vec![Vec::new(); 5];
        for r in 0..lvl.rows {
            per_parent[lvl.parent_row(r)].push(lvl.m_code(r));
        }
        for codes in per_parent {
            assert_eq!(codes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn all_paths_match_level1_row_order() {
        let data = tiny_dataset(1, &[2, 3]);
        let stack = PooledStack::build(&data);
        let paths = stack.all_paths();
        assert_eq!(paths.len(), 6);
        for (i, p) in paths.iter().enumerate() {
            assert_eq!(stack.suffix(1, i), p.0, "path {i}");
            assert_eq!(stack.row_for_path(0, p), i);
        }
    }
}
