//! Expansion-identity checks: each sequential regression equals the
//! conditional mean of the next score evaluated at an *arbitrary* nuisance
//! value, plus a remainder that is a sum of products of nuisance errors.
//!
//! With exact tables on one side and a perturbed copy on the other, every
//! identity must hold to numerical precision on every reachable stratum, and
//! the remainder must shrink quadratically as the perturbation shrinks. Both
//! facts are what make the one-step estimator sequentially doubly robust, so
//! the oracle verifies them directly by full enumeration.
//!
//! For the path-probability family the remainder carries the in-window
//! mediator-match indicators (`M_k = m_k` for `k` from the regression time up
//! to the error time); the commonly displayed form omits them and is only
//! claimed on strata whose mediator history already matches the path prefix.
//! That variant's residual is reported separately for reference.

use crate::data::{ColumnRef, Role};
use crate::error::Result;
use crate::estimator::TrajectorySlices;

use super::law::DiscreteLaw;
use super::tables::{NuisanceTables, PerturbationOptions, SliceBufs};
use super::{InterventionPair, NpsemSpec};

/// One checked stratum: left side, conditional-mean term, remainder and the
/// residual `lhs - mean - remainder`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VonMisesEntry {
    pub lhs: f64,
    pub expectation_term: f64,
    pub remainder: f64,
    pub residual: f64,
}

/// Aggregate over all reachable strata of one regression family at one time.
#[derive(Debug, Clone)]
pub struct VonMisesFamily {
    /// `"mediator-step"`, `"treatment-step"` or `"path"`.
    pub family: &'static str,
    pub t: usize,
    /// Number of (suffix, stratum) cells with positive conditioning mass.
    pub cells_checked: usize,
    pub max_abs_residual: f64,
    pub worst: VonMisesEntry,
    /// Probability-weighted root-mean-square of the remainder, the quantity
    /// swept over perturbation magnitudes to verify quadratic decay.
    pub remainder_rms: f64,
    /// Path family only: worst residual of the indicator-free remainder form
    /// on mediator-prefix-matching strata.
    pub displayed_variant_max_residual: Option<f64>,
}

/// Full report over every family and time.
#[derive(Debug, Clone)]
pub struct VonMisesReport {
    pub eps: f64,
    pub families: Vec<VonMisesFamily>,
    pub max_abs_residual: f64,
}

impl VonMisesReport {
    /// Remainder norm of one family at one time.
    pub fn remainder_rms(&self, family: &str, t: usize) -> f64 {
        self.families
            .iter()
            .find(|f| f.family == family && f.t == t)
            .map(|f| f.remainder_rms)
            .expect("family/time present in report")
    }
}

/// Check all identities for a model and intervention pair, perturbing every
/// nuisance family by `eps` along seeded random directions.
pub fn von_mises_check(
    spec: &NpsemSpec,
    pair: &InterventionPair,
    eps: f64,
    seed: u64,
) -> Result<VonMisesReport> {
    spec.validate()?;
    pair.validate_for(spec)?;
    let law = DiscreteLaw::new(spec)?;
    let exact = NuisanceTables::exact(&law, pair);
    let tilde = exact.perturbed(seed, &PerturbationOptions::all(eps));
    Ok(von_mises_check_tables(&law, &exact, &tilde, eps))
}

/// Same check for caller-supplied table pairs (e.g. single-family tilts).
pub fn von_mises_check_tables(
    law: &DiscreteLaw,
    exact: &NuisanceTables,
    tilde: &NuisanceTables,
    eps: f64,
) -> VonMisesReport {
    let tau = exact.tau();
    let mut families = Vec::new();
    for t in 1..=tau {
        families.push(check_mediator_step(law, exact, tilde, t));
        families.push(check_treatment_step(law, exact, tilde, t));
        families.push(check_path(law, exact, tilde, t));
    }
    let max_abs_residual = families.iter().map(|f| f.max_abs_residual).fold(0.0, f64::max);
    VonMisesReport { eps, families, max_abs_residual }
}

/// Mediator path with the level-`t` suffix decoded into positions `t..=tau`
/// (earlier entries are never read at that level).
fn path_from_suffix(tables: &NuisanceTables, t: usize, suffix: usize) -> Vec<i64> {
    let tau = tables.tau();
    let mut path = vec![0i64; tau];
    let mut idx = suffix;
    for s in (t..=tau).rev() {
        let card = tables.n_suffix(s) / tables.n_suffix(s + 1);
        path[s - 1] = (idx % card) as i64;
        idx /= card;
    }
    path
}

/// Accumulator over (suffix or path) x stratum cells of one family.
struct CellAccum {
    num_e: Vec<f64>,
    num_rem: Vec<f64>,
    den: Vec<f64>,
}

impl CellAccum {
    fn new(strata: usize) -> CellAccum {
        CellAccum { num_e: vec![0.0; strata], num_rem: vec![0.0; strata], den: vec![0.0; strata] }
    }
}

/// Fold one family's accumulated cells into the report row.
struct FamilyAggregate {
    cells: usize,
    max_abs_residual: f64,
    worst: VonMisesEntry,
    sq_sum: f64,
    weight_sum: f64,
}

impl FamilyAggregate {
    fn new() -> FamilyAggregate {
        FamilyAggregate {
            cells: 0,
            max_abs_residual: 0.0,
            worst: VonMisesEntry::default(),
            sq_sum: 0.0,
            weight_sum: 0.0,
        }
    }

    fn add_cell(&mut self, lhs: f64, acc_e: f64, acc_rem: f64, den: f64) {
        if den <= 0.0 {
            return;
        }
        let expectation_term = acc_e / den;
        let remainder = acc_rem / den;
        let residual = lhs - expectation_term - remainder;
        self.cells += 1;
        self.sq_sum += den * remainder * remainder;
        self.weight_sum += den;
        if residual.abs() > self.max_abs_residual {
            self.max_abs_residual = residual.abs();
            self.worst = VonMisesEntry { lhs, expectation_term, remainder, residual };
        } else if self.cells == 1 {
            self.worst = VonMisesEntry { lhs, expectation_term, remainder, residual };
        }
    }

    fn finish(
        self,
        family: &'static str,
        t: usize,
        displayed_variant_max_residual: Option<f64>,
    ) -> VonMisesFamily {
        let remainder_rms = if self.weight_sum > 0.0 {
            (self.sq_sum / self.weight_sum).sqrt()
        } else {
            0.0
        };
        VonMisesFamily {
            family,
            t,
            cells_checked: self.cells,
            max_abs_residual: self.max_abs_residual,
            worst: self.worst,
            remainder_rms,
            displayed_variant_max_residual,
        }
    }
}

fn product(xs: &[f64], range: std::ops::Range<usize>) -> f64 {
    range.map(|j| xs[j]).product()
}

/// Remainder integrand for the mediator-step regression at `t`, evaluated on
/// slices starting at `t`: errors at times `s > t`, each behind the tilted
/// inverse-probability products from `t + 1`.
fn rem_mediator_step(tilde: &TrajectorySlices, exact: &TrajectorySlices, n: usize) -> f64 {
    let mut rem = 0.0;
    for i in 1..n {
        let k_full = product(tilde.w_trt_prime, 1..i + 1);
        let k_m1 = product(tilde.w_trt_prime, 1..i);
        let h_m1 = product(tilde.w_med, 1..i);
        rem += k_full * h_m1 * (tilde.w_med[i] - exact.w_med[i]) * (tilde.q_med[i] - exact.q_med[i]);
        rem += k_m1 * h_m1 * (tilde.w_trt_prime[i] - exact.w_trt_prime[i])
            * (tilde.q_trt[i] - exact.q_trt[i]);
    }
    rem
}

/// Remainder integrand for the treatment-step regression at `t`: mediator
/// errors start at `s = t`, treatment errors at `s = t + 1`.
fn rem_treatment_step(tilde: &TrajectorySlices, exact: &TrajectorySlices, n: usize) -> f64 {
    let mut rem = 0.0;
    for i in 0..n {
        let k_full = product(tilde.w_trt_prime, 1..i + 1);
        let h_m1 = product(tilde.w_med, 0..i);
        rem += k_full * h_m1 * (tilde.w_med[i] - exact.w_med[i]) * (tilde.q_med[i] - exact.q_med[i]);
        if i >= 1 {
            let k_m1 = product(tilde.w_trt_prime, 1..i);
            rem += k_m1 * h_m1 * (tilde.w_trt_prime[i] - exact.w_trt_prime[i])
                * (tilde.q_trt[i] - exact.q_trt[i]);
        }
    }
    rem
}

/// Remainder integrand for the path regression at `t`, carrying the
/// in-window mediator-match indicators. With `with_indicators` false this is
/// the commonly displayed (indicator-free) form.
fn rem_path(
    tilde: &TrajectorySlices,
    exact: &TrajectorySlices,
    n: usize,
    with_indicators: bool,
) -> f64 {
    let mut rem = 0.0;
    for i in 1..n {
        if with_indicators && !tilde.m_match[..i].iter().all(|&b| b) {
            continue;
        }
        let k_m1 = product(tilde.w_trt_star, 1..i);
        rem += k_m1 * (tilde.w_trt_star[i] - exact.w_trt_star[i])
            * (tilde.q_path[i] - exact.q_path[i]);
    }
    rem
}

/// Identity: the mediator-step regression equals the conditional mean of the
/// next treatment-step score given the mediator value and history.
fn check_mediator_step(
    law: &DiscreteLaw,
    exact: &NuisanceTables,
    tilde: &NuisanceTables,
    t: usize,
) -> VonMisesFamily {
    let strata = exact.mediator_strata(t);
    let hist = exact.mediator_history(t).to_vec();
    let med_col = law.node_pos(ColumnRef {
        role: Role::Mediator,
        time: t,
        slot: 0,
    });
    let n = exact.tau() - t + 1;
    let mut agg = FamilyAggregate::new();
    let mut bufs_t = SliceBufs::new();
    let mut bufs_e = SliceBufs::new();
    for suffix in 0..exact.n_suffix(t) {
        let path = path_from_suffix(exact, t, suffix);
        let m_t = path[t - 1];
        let mut acc = CellAccum::new(strata);
        law.for_each_state(|state, p| {
            if state[med_col] != m_t {
                return;
            }
            let h = law.stratum_of_state(&hist, state);
            let st = tilde.fill_slices(law, state, &path, t, &mut bufs_t);
            let se = exact.fill_slices(law, state, &path, t, &mut bufs_e);
            acc.den[h] += p;
            acc.num_e[h] += p * st.tail(1).score_trt();
            acc.num_rem[h] += p * rem_mediator_step(&st, &se, n);
        });
        for h in 0..strata {
            agg.add_cell(exact.q_med_at(t, suffix, h), acc.num_e[h], acc.num_rem[h], acc.den[h]);
        }
    }
    agg.finish("mediator-step", t, None)
}

/// Identity: the treatment-step regression equals the conditional mean of
/// the mediator-step score given the primary treatment and history.
fn check_treatment_step(
    law: &DiscreteLaw,
    exact: &NuisanceTables,
    tilde: &NuisanceTables,
    t: usize,
) -> VonMisesFamily {
    let strata = exact.treatment_strata(t);
    let hist = exact.treatment_history(t).to_vec();
    let trt_col = law.node_pos(ColumnRef {
        role: Role::Treatment,
        time: t,
        slot: 0,
    });
    let a_prime = exact.pair().primary[t - 1];
    let n = exact.tau() - t + 1;
    let mut agg = FamilyAggregate::new();
    let mut bufs_t = SliceBufs::new();
    let mut bufs_e = SliceBufs::new();
    for suffix in 0..exact.n_suffix(t) {
        let path = path_from_suffix(exact, t, suffix);
        let mut acc = CellAccum::new(strata);
        law.for_each_state(|state, p| {
            if state[trt_col] != a_prime {
                return;
            }
            let h = law.stratum_of_state(&hist, state);
            let st = tilde.fill_slices(law, state, &path, t, &mut bufs_t);
            let se = exact.fill_slices(law, state, &path, t, &mut bufs_e);
            acc.den[h] += p;
            acc.num_e[h] += p * st.score_med();
            acc.num_rem[h] += p * rem_treatment_step(&st, &se, n);
        });
        for h in 0..strata {
            agg.add_cell(exact.q_trt_at(t, suffix, h), acc.num_e[h], acc.num_rem[h], acc.den[h]);
        }
    }
    agg.finish("treatment-step", t, None)
}

/// Identity: the path regression equals the conditional mean of the matched
/// next path score given the reference treatment and history — on every
/// reachable stratum with the in-window-indicator remainder, and on
/// prefix-matching strata with the indicator-free displayed form.
fn check_path(
    law: &DiscreteLaw,
    exact: &NuisanceTables,
    tilde: &NuisanceTables,
    t: usize,
) -> VonMisesFamily {
    let strata = exact.treatment_strata(t);
    let hist = exact.treatment_history(t).to_vec();
    let trt_col = law.node_pos(ColumnRef {
        role: Role::Treatment,
        time: t,
        slot: 0,
    });
    let med_cols: Vec<usize> = (1..=exact.tau())
        .map(|k| {
            law.node_pos(ColumnRef {
                role: Role::Mediator,
                time: k,
                slot: 0,
            })
        })
        .collect();
    let a_star = exact.pair().reference[t - 1];
    let n = exact.tau() - t + 1;
    let mut agg = FamilyAggregate::new();
    let mut bufs_t = SliceBufs::new();
    let mut bufs_e = SliceBufs::new();

    // Primary identity, per suffix, over every reachable stratum.
    for suffix in 0..exact.n_suffix(t) {
        let path = path_from_suffix(exact, t, suffix);
        let mut acc = CellAccum::new(strata);
        law.for_each_state(|state, p| {
            if state[trt_col] != a_star {
                return;
            }
            let h = law.stratum_of_state(&hist, state);
            let st = tilde.fill_slices(law, state, &path, t, &mut bufs_t);
            let se = exact.fill_slices(law, state, &path, t, &mut bufs_e);
            acc.den[h] += p;
            if st.m_match[0] {
                acc.num_e[h] += p * st.tail(1).score_path();
            }
            acc.num_rem[h] += p * rem_path(&st, &se, n, true);
        });
        for h in 0..strata {
            agg.add_cell(exact.q_path_at(t, suffix, h), acc.num_e[h], acc.num_rem[h], acc.den[h]);
        }
    }

    // Displayed variant, per full path, restricted to strata whose mediator
    // history matches the path prefix.
    let mut variant_max = 0.0f64;
    for path in exact.all_paths() {
        let suffix = exact.suffix_index(t, &path);
        let mut acc = CellAccum::new(strata);
        law.for_each_state(|state, p| {
            if state[trt_col] != a_star {
                return;
            }
            if !(1..t).all(|k| state[med_cols[k - 1]] == path[k - 1]) {
                return;
            }
            let h = law.stratum_of_state(&hist, state);
            let st = tilde.fill_slices(law, state, &path, t, &mut bufs_t);
            let se = exact.fill_slices(law, state, &path, t, &mut bufs_e);
            acc.den[h] += p;
            if st.m_match[0] {
                acc.num_e[h] += p * st.tail(1).score_path();
            }
            acc.num_rem[h] += p * rem_path(&st, &se, n, false);
        });
        for h in 0..strata {
            if acc.den[h] > 0.0 {
                let lhs = exact.q_path_at(t, suffix, h);
                let residual = lhs - acc.num_e[h] / acc.den[h] - acc.num_rem[h] / acc.den[h];
                variant_max = variant_max.max(residual.abs());
            }
        }
    }

    agg.finish("path", t, Some(variant_max))
}
