//! Exact sequential nuisance tables for a discrete model, plus controlled
//! perturbations of them.
//!
//! For a fixed intervention pair the backward recursions produce, per time
//! `t` and mediator suffix `(m_t, ..., m_tau)`:
//!
//! * `q_med` — outcome regression at the mediator step: the expectation of
//!   the next treatment-step score given `M_t = m_t` and the mediator-step
//!   history (a function of that history);
//! * `q_trt` — outcome regression at the treatment step under the primary
//!   regime, a function of the treatment-step history;
//! * `q_path` — probability that the remaining mediators follow the suffix
//!   under the reference regime, a function of the treatment-step history.
//!
//! All tables are total functions of their stratum: they are computed by
//! direct sums over conditional probability rows, never by dividing empirical
//! masses, so no entry is ever NaN even on unreachable strata.
//!
//! [`NuisanceTables::perturbed`] produces the "arbitrary nuisance value" used
//! by the expansion-remainder checks: multiplicative exponential tilts on
//! propensity rows (renormalized, preserving zeros) and additive tilts on
//! regressions, with the path-probability table clamped to `[0, 1]`.
//! Directions are drawn from the seed alone, so sweeps at `eps` and `2 eps`
//! move along the same direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ColumnRef;
use crate::estimator::TrajectorySlices;

use super::law::{DiscreteLaw, NodeId};
use super::InterventionPair;

/// Exact (or perturbed) nuisances: propensities and sequential regressions.
#[derive(Debug, Clone)]
pub struct NuisanceTables {
    tau: usize,
    mediator_cards: Vec<usize>,
    treatment_cards: Vec<usize>,
    /// `[t-1][stratum * card + value]`, the model's assignment tables.
    g_trt: Vec<Vec<f64>>,
    g_med: Vec<Vec<f64>>,
    /// `[t-1][suffix * strata + stratum]` over mediator-step histories.
    q_med: Vec<Vec<f64>>,
    /// `[t-1][suffix * strata + stratum]` over treatment-step histories.
    q_trt: Vec<Vec<f64>>,
    q_path: Vec<Vec<f64>>,
    /// Cached history layouts and stratum counts per time.
    hist_trt: Vec<Vec<ColumnRef>>,
    hist_med: Vec<Vec<ColumnRef>>,
    strata_trt: Vec<usize>,
    strata_med: Vec<usize>,
    trt_pos: Vec<usize>,
    med_pos: Vec<usize>,
    pair: InterventionPair,
}

/// Which nuisance families a perturbation tilts.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationOptions {
    pub eps: f64,
    pub tilt_propensities: bool,
    pub tilt_regressions: bool,
}

impl PerturbationOptions {
    pub fn all(eps: f64) -> PerturbationOptions {
        PerturbationOptions { eps, tilt_propensities: true, tilt_regressions: true }
    }
}

/// Reusable buffers for per-trajectory slice evaluation.
#[derive(Debug, Default)]
pub struct SliceBufs {
    w_trt_prime: Vec<f64>,
    w_trt_star: Vec<f64>,
    w_med: Vec<f64>,
    m_match: Vec<bool>,
    q_med: Vec<f64>,
    q_trt: Vec<f64>,
    q_path: Vec<f64>,
}

impl SliceBufs {
    pub fn new() -> SliceBufs {
        SliceBufs::default()
    }

    fn clear(&mut self) {
        self.w_trt_prime.clear();
        self.w_trt_star.clear();
        self.w_med.clear();
        self.m_match.clear();
        self.q_med.clear();
        self.q_trt.clear();
        self.q_path.clear();
    }
}

impl NuisanceTables {
    /// Build the exact tables for a model and intervention pair by backward
    /// recursion over the conditional probability tables.
    pub fn exact(law: &DiscreteLaw, pair: &InterventionPair) -> NuisanceTables {
        let tau = law.tau();
        let spec = law.spec();
        let mut tables = NuisanceTables {
            tau,
            mediator_cards: spec.mediator_cards.clone(),
            treatment_cards: spec.treatment_cards.clone(),
            g_trt: (1..=tau).map(|t| law.table(NodeId::Treatment(t)).to_vec()).collect(),
            g_med: (1..=tau).map(|t| law.table(NodeId::Mediator(t)).to_vec()).collect(),
            q_med: vec![Vec::new(); tau],
            q_trt: vec![Vec::new(); tau],
            q_path: vec![Vec::new(); tau],
            hist_trt: (1..=tau).map(|t| law.history(NodeId::Treatment(t))).collect(),
            hist_med: (1..=tau).map(|t| law.history(NodeId::Mediator(t))).collect(),
            strata_trt: Vec::new(),
            strata_med: Vec::new(),
            trt_pos: (1..=tau)
                .map(|t| law.node_pos(law.node_column(NodeId::Treatment(t))))
                .collect(),
            med_pos: (1..=tau)
                .map(|t| law.node_pos(law.node_column(NodeId::Mediator(t))))
                .collect(),
            pair: pair.clone(),
        };
        tables.strata_trt = tables.hist_trt.iter().map(|h| law.stratum_count(h)).collect();
        tables.strata_med = tables.hist_med.iter().map(|h| law.stratum_count(h)).collect();

        let mut state = vec![0i64; law.state_len()];
        for t in (1..=tau).rev() {
            tables.build_q_med(law, t, &mut state);
            tables.build_q_trt(law, t, &mut state);
            tables.build_q_path(law, t, &mut state);
        }
        tables
    }

    /// Write the values encoded by a stratum into a state vector.
    fn fill_state(law: &DiscreteLaw, cols: &[ColumnRef], stratum: usize, state: &mut [i64]) {
        state.fill(0);
        let values = law.decode_stratum(cols, stratum);
        for (c, &v) in cols.iter().zip(&values) {
            state[law.node_pos(*c)] = v;
        }
    }

    fn build_q_med(&mut self, law: &DiscreteLaw, t: usize, state: &mut Vec<i64>) {
        let strata = self.strata_med[t - 1];
        let n_suffix = self.n_suffix(t);
        let next_cov = NodeId::Covariate(t + 1);
        let cov_hist = law.history(next_cov);
        let cov_card = law.node_card(next_cov);
        let cov_pos = law.node_pos(law.node_column(next_cov));
        let mut out = vec![0.0; n_suffix * strata];
        for suffix in 0..n_suffix {
            let (m_t, rest) = self.split_suffix(t, suffix);
            for h in 0..strata {
                Self::fill_state(law, &self.hist_med[t - 1], h, state);
                state[self.med_pos[t - 1]] = m_t;
                let cov_stratum = law.stratum_of_state(&cov_hist, state);
                let row = &law.table(next_cov)[cov_stratum * cov_card..(cov_stratum + 1) * cov_card];
                let mut total = 0.0;
                for (l, &p) in row.iter().enumerate() {
                    let next = if t == self.tau {
                        law.spec().outcome_values[l]
                    } else {
                        state[cov_pos] = l as i64;
                        let ha = law.stratum_of_state(&self.hist_trt[t], state);
                        self.q_trt_at(t + 1, rest, ha)
                    };
                    total += p * next;
                }
                out[suffix * strata + h] = total;
            }
        }
        self.q_med[t - 1] = out;
    }

    fn build_q_trt(&mut self, law: &DiscreteLaw, t: usize, state: &mut Vec<i64>) {
        let strata = self.strata_trt[t - 1];
        let n_suffix = self.n_suffix(t);
        let z_node = NodeId::Confounder(t);
        let z_hist = law.history(z_node);
        let z_card = law.node_card(z_node);
        let z_pos = law.node_pos(law.node_column(z_node));
        let mut out = vec![0.0; n_suffix * strata];
        for suffix in 0..n_suffix {
            for h in 0..strata {
                Self::fill_state(law, &self.hist_trt[t - 1], h, state);
                state[self.trt_pos[t - 1]] = self.pair.primary[t - 1];
                let z_stratum = law.stratum_of_state(&z_hist, state);
                let row = &law.table(z_node)[z_stratum * z_card..(z_stratum + 1) * z_card];
                let mut total = 0.0;
                for (z, &p) in row.iter().enumerate() {
                    state[z_pos] = z as i64;
                    let hm = law.stratum_of_state(&self.hist_med[t - 1], state);
                    total += p * self.q_med_at(t, suffix, hm);
                }
                out[suffix * strata + h] = total;
            }
        }
        self.q_trt[t - 1] = out;
    }

    fn build_q_path(&mut self, law: &DiscreteLaw, t: usize, state: &mut Vec<i64>) {
        let strata = self.strata_trt[t - 1];
        let n_suffix = self.n_suffix(t);
        let z_node = NodeId::Confounder(t);
        let z_hist = law.history(z_node);
        let z_card = law.node_card(z_node);
        let z_pos = law.node_pos(law.node_column(z_node));
        let m_node = NodeId::Mediator(t);
        let next_cov = NodeId::Covariate(t + 1);
        let cov_hist = law.history(next_cov);
        let cov_card = law.node_card(next_cov);
        let cov_pos = law.node_pos(law.node_column(next_cov));
        let mut out = vec![0.0; n_suffix * strata];
        for suffix in 0..n_suffix {
            let (m_t, rest) = self.split_suffix(t, suffix);
            for h in 0..strata {
                Self::fill_state(law, &self.hist_trt[t - 1], h, state);
                state[self.trt_pos[t - 1]] = self.pair.reference[t - 1];
                let z_stratum = law.stratum_of_state(&z_hist, state);
                let z_row = &law.table(z_node)[z_stratum * z_card..(z_stratum + 1) * z_card];
                let mut total = 0.0;
                for (z, &pz) in z_row.iter().enumerate() {
                    state[z_pos] = z as i64;
                    let pm = law.cond_prob(m_node, m_t, state);
                    if pm == 0.0 {
                        continue;
                    }
                    let inner = if t == self.tau {
                        1.0
                    } else {
                        state[self.med_pos[t - 1]] = m_t;
                        let cov_stratum = law.stratum_of_state(&cov_hist, state);
                        let row = &law.table(next_cov)
                            [cov_stratum * cov_card..(cov_stratum + 1) * cov_card];
                        let mut acc = 0.0;
                        for (l, &pl) in row.iter().enumerate() {
                            state[cov_pos] = l as i64;
                            let ha = law.stratum_of_state(&self.hist_trt[t], state);
                            acc += pl * self.q_path_at(t + 1, rest, ha);
                        }
                        // Clean up the positions written for the inner sum so
                        // the next z iteration reads a consistent state.
                        state[cov_pos] = 0;
                        state[self.med_pos[t - 1]] = 0;
                        acc
                    };
                    total += pz * pm * inner;
                }
                out[suffix * strata + h] = total;
            }
        }
        self.q_path[t - 1] = out;
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn pair(&self) -> &InterventionPair {
        &self.pair
    }

    pub fn treatment_history(&self, t: usize) -> &[ColumnRef] {
        &self.hist_trt[t - 1]
    }

    pub fn mediator_history(&self, t: usize) -> &[ColumnRef] {
        &self.hist_med[t - 1]
    }

    pub fn treatment_strata(&self, t: usize) -> usize {
        self.strata_trt[t - 1]
    }

    pub fn mediator_strata(&self, t: usize) -> usize {
        self.strata_med[t - 1]
    }

    /// Number of mediator suffixes at level `t` (1 when `t = tau + 1`).
    pub fn n_suffix(&self, t: usize) -> usize {
        self.mediator_cards[t - 1..].iter().product()
    }

    /// Suffix index of `(path[t-1], ..., path[tau-1])`.
    pub fn suffix_index(&self, t: usize, path: &[i64]) -> usize {
        path[t - 1..]
            .iter()
            .zip(&self.mediator_cards[t - 1..])
            .fold(0usize, |idx, (&m, &card)| idx * card + m as usize)
    }

    /// Split a level-`t` suffix into `(m_t, suffix at level t + 1)`.
    pub fn split_suffix(&self, t: usize, suffix: usize) -> (i64, usize) {
        let rest = self.n_suffix(t + 1);
        ((suffix / rest) as i64, suffix % rest)
    }

    /// Every full mediator path, in suffix-index order.
    pub fn all_paths(&self) -> Vec<Vec<i64>> {
        let total = self.n_suffix(1);
        (0..total)
            .map(|mut idx| {
                let mut path = vec![0i64; self.tau];
                for t in (1..=self.tau).rev() {
                    let card = self.mediator_cards[t - 1];
                    path[t - 1] = (idx % card) as i64;
                    idx /= card;
                }
                path
            })
            .collect()
    }

    pub fn q_med_at(&self, t: usize, suffix: usize, stratum: usize) -> f64 {
        self.q_med[t - 1][suffix * self.strata_med[t - 1] + stratum]
    }

    pub fn q_trt_at(&self, t: usize, suffix: usize, stratum: usize) -> f64 {
        self.q_trt[t - 1][suffix * self.strata_trt[t - 1] + stratum]
    }

    pub fn q_path_at(&self, t: usize, suffix: usize, stratum: usize) -> f64 {
        self.q_path[t - 1][suffix * self.strata_trt[t - 1] + stratum]
    }

    pub fn g_trt_at(&self, t: usize, stratum: usize, value: i64) -> f64 {
        self.g_trt[t - 1][stratum * self.treatment_cards[t - 1] + value as usize]
    }

    pub fn g_med_at(&self, t: usize, stratum: usize, value: i64) -> f64 {
        self.g_med[t - 1][stratum * self.mediator_cards[t - 1] + value as usize]
    }

    /// Outcome-path functional of a mediator path: the level-0 seed of the
    /// treatment-step recursion, averaging over the first covariate.
    pub fn phi(&self, law: &DiscreteLaw, path: &[i64]) -> f64 {
        let suffix = self.suffix_index(1, path);
        let first = law.table(NodeId::Covariate(1));
        first
            .iter()
            .enumerate()
            .map(|(l, &p)| p * self.q_trt_at(1, suffix, l))
            .sum()
    }

    /// Path-probability functional of a mediator path under the reference
    /// regime: the level-0 seed of the path recursion.
    pub fn lambda(&self, law: &DiscreteLaw, path: &[i64]) -> f64 {
        let suffix = self.suffix_index(1, path);
        let first = law.table(NodeId::Covariate(1));
        first
            .iter()
            .enumerate()
            .map(|(l, &p)| p * self.q_path_at(1, suffix, l))
            .sum()
    }

    /// Target functional through the sequential-regression route.
    pub fn theta(&self, law: &DiscreteLaw) -> f64 {
        self.all_paths()
            .iter()
            .map(|path| self.phi(law, path) * self.lambda(law, path))
            .sum()
    }

    /// Evaluate the per-time nuisance slices of one trajectory for a mediator
    /// path, starting at `t0`. Ratio weights are indicator-gated: a mismatch
    /// yields exactly zero without touching the denominator.
    pub fn fill_slices<'a>(
        &self,
        law: &DiscreteLaw,
        state: &[i64],
        path: &[i64],
        t0: usize,
        bufs: &'a mut SliceBufs,
    ) -> TrajectorySlices<'a> {
        bufs.clear();
        for t in t0..=self.tau {
            let ha = law.stratum_of_state(&self.hist_trt[t - 1], state);
            let hm = law.stratum_of_state(&self.hist_med[t - 1], state);
            let a = state[self.trt_pos[t - 1]];
            let m = state[self.med_pos[t - 1]];
            let suffix = self.suffix_index(t, path);
            bufs.w_trt_prime.push(if a == self.pair.primary[t - 1] {
                1.0 / self.g_trt_at(t, ha, a)
            } else {
                0.0
            });
            bufs.w_trt_star.push(if a == self.pair.reference[t - 1] {
                1.0 / self.g_trt_at(t, ha, a)
            } else {
                0.0
            });
            let matches = m == path[t - 1];
            bufs.w_med.push(if matches { 1.0 / self.g_med_at(t, hm, m) } else { 0.0 });
            bufs.m_match.push(matches);
            bufs.q_med.push(self.q_med_at(t, suffix, hm));
            bufs.q_trt.push(self.q_trt_at(t, suffix, ha));
            bufs.q_path.push(self.q_path_at(t, suffix, ha));
        }
        TrajectorySlices {
            t0,
            w_trt_prime: &bufs.w_trt_prime,
            w_trt_star: &bufs.w_trt_star,
            w_med: &bufs.w_med,
            m_match: &bufs.m_match,
            q_med: &bufs.q_med,
            q_trt: &bufs.q_trt,
            q_path: &bufs.q_path,
            y: law.outcome_value(state),
        }
    }

    /// Tilted copy of the tables. Directions are drawn deterministically from
    /// `seed` for every table (regardless of which families are enabled), so
    /// different magnitudes and family subsets share directions.
    pub fn perturbed(&self, seed: u64, opts: &PerturbationOptions) -> NuisanceTables {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for t in 1..=self.tau {
            tilt_propensity_rows(
                &mut out.g_trt[t - 1],
                self.treatment_cards[t - 1],
                opts.eps,
                opts.tilt_propensities,
                &mut rng,
            );
            tilt_propensity_rows(
                &mut out.g_med[t - 1],
                self.mediator_cards[t - 1],
                opts.eps,
                opts.tilt_propensities,
                &mut rng,
            );
            tilt_additive(&mut out.q_med[t - 1], opts.eps, opts.tilt_regressions, false, &mut rng);
            tilt_additive(&mut out.q_trt[t - 1], opts.eps, opts.tilt_regressions, false, &mut rng);
            tilt_additive(&mut out.q_path[t - 1], opts.eps, opts.tilt_regressions, true, &mut rng);
        }
        out
    }
}

/// Multiplicative exponential tilt of each probability row, renormalized.
/// Zero entries stay zero, so the support never grows.
fn tilt_propensity_rows(
    table: &mut [f64],
    card: usize,
    eps: f64,
    enabled: bool,
    rng: &mut ChaCha8Rng,
) {
    for row in table.chunks_mut(card) {
        let dirs: Vec<f64> = (0..card).map(|_| rng.random_range(-1.0..1.0)).collect();
        if !enabled {
            continue;
        }
        let mut total = 0.0;
        for (p, d) in row.iter_mut().zip(&dirs) {
            *p *= (eps * d).exp();
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
}

/// Additive tilt of every entry, optionally clamped to `[0, 1]` (for the
/// path-probability table, which must stay a probability).
fn tilt_additive(table: &mut [f64], eps: f64, enabled: bool, clamp_unit: bool, rng: &mut ChaCha8Rng) {
    for q in table.iter_mut() {
        let d: f64 = rng.random_range(-1.0..1.0);
        if !enabled {
            continue;
        }
        *q += eps * d;
        if clamp_unit {
            *q = q.clamp(0.0, 1.0);
        }
    }
}
