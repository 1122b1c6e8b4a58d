//! Joint law of a discrete model: node ordering, state enumeration (with
//! optional interventions), stratum indexing over arbitrary column sets, and
//! conditional-probability lookups.
//!
//! A state is a `Vec<i64>` of codes in node order `L_1, A_1, Z_1, M_1, ...,
//! L_tau, A_tau, Z_tau, M_tau, Y`. Strata are mixed-radix indices over an
//! ordered column list with the first column most significant, which is also
//! how every conditional table in [`NpsemSpec`] is laid out.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Censoring, ColumnRef, HistoryKind, NodeSchema, Role};
use crate::error::{Error, Result};

use super::{NpsemSpec, RandomSpecOptions, CPT_ROW_TOL};

/// A stochastic node of the model. `Covariate(t)` covers `t = 1..=tau + 1`,
/// with `tau + 1` naming the outcome draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeId {
    Covariate(usize),
    Treatment(usize),
    Confounder(usize),
    Mediator(usize),
}

/// A validated model together with its derived schema and state geometry.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    spec: NpsemSpec,
    schema: NodeSchema,
}

impl DiscreteLaw {
    /// Wrap a model, deriving the canonical schema (`l1, a1, z1, m1, ..., y`).
    /// Table contents are checked separately by [`DiscreteLaw::check_tables`],
    /// which `NpsemSpec::validate` calls; only structural sizes are needed
    /// here.
    pub fn new(spec: &NpsemSpec) -> Result<DiscreteLaw> {
        let tau = spec.tau;
        if spec.covariate_cards.len() != tau
            || spec.treatment_cards.len() != tau
            || spec.confounder_cards.len() != tau
            || spec.mediator_cards.len() != tau
        {
            return Err(Error::validation("model card lists must all have length tau"));
        }
        let label_range = |card: usize| (0..card as i64).map(|v| v.to_string()).collect();
        let schema = NodeSchema::new(
            tau,
            (1..=tau).map(|t| vec![format!("l{t}")]).collect(),
            (1..=tau).map(|t| format!("a{t}")).collect(),
            (1..=tau).map(|t| vec![format!("z{t}")]).collect(),
            (1..=tau).map(|t| format!("m{t}")).collect(),
            "y".to_string(),
            spec.mediator_cards.iter().map(|&c| Some(label_range(c))).collect(),
            spec.treatment_cards.iter().map(|&c| Some(label_range(c))).collect(),
            spec.censored_level.map(|c| Censoring { censored_level: c.to_string() }),
        )?;
        Ok(DiscreteLaw { spec: spec.clone(), schema })
    }

    pub fn spec(&self) -> &NpsemSpec {
        &self.spec
    }

    pub fn schema(&self) -> &NodeSchema {
        &self.schema
    }

    pub fn tau(&self) -> usize {
        self.spec.tau
    }

    /// Length of a state vector: four nodes per time plus the outcome.
    pub fn state_len(&self) -> usize {
        4 * self.spec.tau + 1
    }

    /// All stochastic nodes in sampling order.
    pub fn nodes(&self) -> Vec<NodeId> {
        let tau = self.spec.tau;
        let mut out = Vec::with_capacity(self.state_len());
        for t in 1..=tau {
            out.push(NodeId::Covariate(t));
            out.push(NodeId::Treatment(t));
            out.push(NodeId::Confounder(t));
            out.push(NodeId::Mediator(t));
        }
        out.push(NodeId::Covariate(tau + 1));
        out
    }

    /// The column a node writes. The outcome draw maps to the covariate slot
    /// at `tau + 1`, which is exactly what history lookups expect.
    pub fn node_column(&self, node: NodeId) -> ColumnRef {
        match node {
            NodeId::Covariate(t) => ColumnRef { role: Role::Covariate, time: t, slot: 0 },
            NodeId::Treatment(t) => ColumnRef { role: Role::Treatment, time: t, slot: 0 },
            NodeId::Confounder(t) => ColumnRef { role: Role::Confounder, time: t, slot: 0 },
            NodeId::Mediator(t) => ColumnRef { role: Role::Mediator, time: t, slot: 0 },
        }
    }

    /// Position of a column inside a state vector.
    pub fn node_pos(&self, c: ColumnRef) -> usize {
        let tau = self.spec.tau;
        match c.role {
            Role::Covariate if c.time == tau + 1 => 4 * tau,
            Role::Covariate => 4 * (c.time - 1),
            Role::Treatment => 4 * (c.time - 1) + 1,
            Role::Confounder => 4 * (c.time - 1) + 2,
            Role::Mediator => 4 * (c.time - 1) + 3,
            Role::Outcome => 4 * tau,
        }
    }

    /// Card of the variable a column refers to.
    pub fn card(&self, c: ColumnRef) -> usize {
        let tau = self.spec.tau;
        match c.role {
            Role::Covariate if c.time == tau + 1 => self.spec.outcome_values.len(),
            Role::Covariate => self.spec.covariate_cards[c.time - 1],
            Role::Treatment => self.spec.treatment_cards[c.time - 1],
            Role::Confounder => self.spec.confounder_cards[c.time - 1],
            Role::Mediator => self.spec.mediator_cards[c.time - 1],
            Role::Outcome => self.spec.outcome_values.len(),
        }
    }

    pub fn node_card(&self, node: NodeId) -> usize {
        self.card(self.node_column(node))
    }

    /// Conditioning history of a node, in table layout order.
    pub fn history(&self, node: NodeId) -> Vec<ColumnRef> {
        match node {
            NodeId::Covariate(t) => self.schema.history_columns(HistoryKind::Covariate, t),
            NodeId::Treatment(t) => self.schema.history_columns(HistoryKind::Treatment, t),
            NodeId::Confounder(t) => self.schema.history_columns(HistoryKind::Confounder, t),
            NodeId::Mediator(t) => self.schema.history_columns(HistoryKind::Mediator, t),
        }
    }

    /// Flat conditional table of a node.
    pub fn table(&self, node: NodeId) -> &[f64] {
        match node {
            NodeId::Covariate(1) => &self.spec.initial_covariate,
            NodeId::Covariate(t) => &self.spec.next_covariate[t - 2],
            NodeId::Treatment(t) => &self.spec.treatment[t - 1],
            NodeId::Confounder(t) => &self.spec.confounder[t - 1],
            NodeId::Mediator(t) => &self.spec.mediator[t - 1],
        }
    }

    fn node_name(&self, node: NodeId) -> String {
        match node {
            NodeId::Covariate(t) if t == self.spec.tau + 1 => "outcome".to_string(),
            NodeId::Covariate(t) => format!("covariate t={t}"),
            NodeId::Treatment(t) => format!("treatment t={t}"),
            NodeId::Confounder(t) => format!("confounder t={t}"),
            NodeId::Mediator(t) => format!("mediator t={t}"),
        }
    }

    /// Number of strata a column list spans.
    pub fn stratum_count(&self, cols: &[ColumnRef]) -> usize {
        cols.iter().map(|&c| self.card(c)).product()
    }

    /// Mixed-radix stratum index of a state over `cols` (first column most
    /// significant).
    pub fn stratum_of_state(&self, cols: &[ColumnRef], state: &[i64]) -> usize {
        self.stratum_of_state_with(cols, state, |_| None)
    }

    /// Like [`DiscreteLaw::stratum_of_state`] but letting the caller override
    /// the value read for selected columns (used to evaluate histories "with
    /// treatments replaced by a fixed regime").
    pub fn stratum_of_state_with(
        &self,
        cols: &[ColumnRef],
        state: &[i64],
        value_override: impl Fn(ColumnRef) -> Option<i64>,
    ) -> usize {
        let mut idx = 0usize;
        for &c in cols {
            let v = value_override(c).unwrap_or_else(|| state[self.node_pos(c)]);
            debug_assert!((0..self.card(c) as i64).contains(&v));
            idx = idx * self.card(c) + v as usize;
        }
        idx
    }

    /// Values (in `cols` order) encoded by a stratum index.
    pub fn decode_stratum(&self, cols: &[ColumnRef], idx: usize) -> Vec<i64> {
        let mut rem = idx;
        let mut out = vec![0i64; cols.len()];
        for (i, &c) in cols.iter().enumerate().rev() {
            let card = self.card(c);
            out[i] = (rem % card) as i64;
            rem /= card;
        }
        debug_assert_eq!(rem, 0, "stratum index out of range");
        out
    }

    /// Conditional row of a node given the history values read from a state.
    pub fn row(&self, node: NodeId, state: &[i64]) -> &[f64] {
        let hist = self.history(node);
        let stratum = self.stratum_of_state(&hist, state);
        let card = self.node_card(node);
        &self.table(node)[stratum * card..(stratum + 1) * card]
    }

    /// Conditional probability of `value` at a node given a state's history.
    pub fn cond_prob(&self, node: NodeId, value: i64, state: &[i64]) -> f64 {
        self.row(node, state)[value as usize]
    }

    /// Real outcome value of a state.
    pub fn outcome_value(&self, state: &[i64]) -> f64 {
        self.spec.outcome_values[state[4 * self.spec.tau] as usize]
    }

    /// Verify table shapes, entry ranges and row sums.
    pub(crate) fn check_tables(&self) -> Result<()> {
        for node in self.nodes() {
            let card = self.node_card(node);
            let strata = self.stratum_count(&self.history(node));
            let table = self.table(node);
            let name = self.node_name(node);
            if table.len() != strata * card {
                return Err(Error::validation(format!(
                    "{name}: table has {} entries, expected {} strata x {} values",
                    table.len(),
                    strata,
                    card
                )));
            }
            for (i, &p) in table.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::validation(format!(
                        "{name}: entry {i} is {p}, probabilities must be finite and nonnegative"
                    )));
                }
            }
            for s in 0..strata {
                let sum: f64 = table[s * card..(s + 1) * card].iter().sum();
                if (sum - 1.0).abs() > CPT_ROW_TOL {
                    return Err(Error::validation(format!(
                        "{name}: row {s} sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Enumerate every state with positive probability under the observed
    /// law, calling `f(state, probability)`.
    pub fn for_each_state(&self, mut f: impl FnMut(&[i64], f64)) {
        self.for_each_state_mutilated(None, None, &mut f);
    }

    /// Enumerate states of the intervened model in which treatments and/or
    /// mediators are externally set (their conditional factors drop out).
    /// Probabilities are those of the mutilated model; zero-probability
    /// branches are pruned.
    pub fn for_each_state_mutilated(
        &self,
        forced_treatments: Option<&[i64]>,
        forced_mediators: Option<&[i64]>,
        f: &mut impl FnMut(&[i64], f64),
    ) {
        let nodes = self.nodes();
        let mut state = vec![0i64; self.state_len()];
        self.walk(&nodes, 0, &mut state, 1.0, forced_treatments, forced_mediators, f);
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        nodes: &[NodeId],
        i: usize,
        state: &mut Vec<i64>,
        p: f64,
        forced_treatments: Option<&[i64]>,
        forced_mediators: Option<&[i64]>,
        f: &mut impl FnMut(&[i64], f64),
    ) {
        if i == nodes.len() {
            f(state, p);
            return;
        }
        let node = nodes[i];
        let pos = self.node_pos(self.node_column(node));
        let forced = match node {
            NodeId::Treatment(t) => forced_treatments.map(|v| v[t - 1]),
            NodeId::Mediator(t) => forced_mediators.map(|v| v[t - 1]),
            _ => None,
        };
        match forced {
            Some(v) => {
                state[pos] = v;
                self.walk(nodes, i + 1, state, p, forced_treatments, forced_mediators, f);
            }
            None => {
                let card = self.node_card(node);
                let hist = self.history(node);
                let stratum = self.stratum_of_state(&hist, state);
                for v in 0..card {
                    let q = self.table(node)[stratum * card + v];
                    if q > 0.0 {
                        state[pos] = v as i64;
                        self.walk(
                            nodes,
                            i + 1,
                            state,
                            p * q,
                            forced_treatments,
                            forced_mediators,
                            f,
                        );
                    }
                }
            }
        }
        state[pos] = 0;
    }
}

// ---------------------------------------------------------------------------
// Random model generation
// ---------------------------------------------------------------------------

/// Draw one probability row with all entries at or above `floor`.
fn draw_row(rng: &mut ChaCha8Rng, card: usize, floor: f64) -> Vec<f64> {
    assert!(floor * card as f64 <= 1.0, "floor too large for card {card}");
    for _ in 0..10_000 {
        let raw: Vec<f64> = (0..card).map(|_| rng.random::<f64>().max(1e-12)).collect();
        let total: f64 = raw.iter().sum();
        let row: Vec<f64> = raw.iter().map(|x| x / total).collect();
        if row.iter().all(|&p| p >= floor) {
            return row;
        }
    }
    vec![1.0 / card as f64; card]
}

/// Generate a flat conditional table over `hist`, drawing one row per
/// distinct value pattern of the non-ignored history columns so that the
/// node is conditionally independent of every ignored column.
fn gen_table(
    law_geometry: &DiscreteLaw,
    rng: &mut ChaCha8Rng,
    hist: &[ColumnRef],
    card: usize,
    floor: f64,
    ignore: impl Fn(ColumnRef) -> bool,
) -> Vec<f64> {
    let strata = law_geometry.stratum_count(hist);
    let mut cache: HashMap<Vec<i64>, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(strata * card);
    for idx in 0..strata {
        let values = law_geometry.decode_stratum(hist, idx);
        let key: Vec<i64> = hist
            .iter()
            .zip(&values)
            .filter(|(c, _)| !ignore(**c))
            .map(|(_, &v)| v)
            .collect();
        let row = match cache.get(&key) {
            Some(row) => row.clone(),
            None => {
                let row = draw_row(rng, card, floor);
                cache.insert(key, row.clone());
                row
            }
        };
        out.extend_from_slice(&row);
    }
    out
}

pub(super) fn generate_random_spec(opts: &RandomSpecOptions, seed: u64) -> NpsemSpec {
    assert!(opts.tau >= 1, "tau must be at least 1");
    assert!(opts.floor > 0.0 && opts.floor < 0.5, "floor must lie in (0, 0.5)");
    let tau = opts.tau;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let treatment_card = if opts.censoring { 3 } else { 2 };

    // A placeholder spec carrying only the geometry (cards and tau); its
    // tables are filled below. Zero-filled tables are never read by the
    // generator, which only uses stratum arithmetic.
    let mut spec = NpsemSpec {
        tau,
        covariate_cards: vec![2; tau],
        treatment_cards: vec![treatment_card; tau],
        confounder_cards: vec![2; tau],
        mediator_cards: vec![2; tau],
        outcome_values: vec![0.0, 1.0],
        initial_covariate: Vec::new(),
        treatment: vec![Vec::new(); tau],
        confounder: vec![Vec::new(); tau],
        mediator: vec![Vec::new(); tau],
        next_covariate: vec![Vec::new(); tau],
        censored_level: if opts.censoring { Some(2) } else { None },
    };
    let geometry = DiscreteLaw::new(&spec).expect("generator geometry is well formed");

    // When confounding through the intermediate variable is switched off, Z
    // ignores its whole history and everything downstream ignores Z. When the
    // mediator is null, outcome-path nodes (Z and next covariates, hence the
    // outcome) ignore all mediator columns; treatment assignment may still
    // read them.
    let drop_confounder = |c: ColumnRef| !opts.z_confounding && c.role == Role::Confounder;
    let drop_mediator = |c: ColumnRef| opts.null_mediator && c.role == Role::Mediator;

    spec.initial_covariate = draw_row(&mut rng, 2, opts.floor);
    for t in 1..=tau {
        spec.treatment[t - 1] = gen_table(
            &geometry,
            &mut rng,
            &geometry.history(NodeId::Treatment(t)),
            treatment_card,
            opts.floor,
            drop_confounder,
        );
        spec.confounder[t - 1] = gen_table(
            &geometry,
            &mut rng,
            &geometry.history(NodeId::Confounder(t)),
            2,
            opts.floor,
            |c| !opts.z_confounding || drop_mediator(c),
        );
        spec.mediator[t - 1] = gen_table(
            &geometry,
            &mut rng,
            &geometry.history(NodeId::Mediator(t)),
            2,
            opts.floor,
            drop_confounder,
        );
        spec.next_covariate[t - 1] = gen_table(
            &geometry,
            &mut rng,
            &geometry.history(NodeId::Covariate(t + 1)),
            if t == tau { spec.outcome_values.len() } else { 2 },
            opts.floor,
            |c| drop_confounder(c) || drop_mediator(c),
        );
    }
    spec
}
