//! Shared helpers for integration tests.
//!
//! The centerpiece is an independent influence-score evaluator written as
//! literal sums of inverse-probability products times regression increments —
//! no recursion, no gating, no shared code with the production evaluator —
//! so agreement between the two is evidence about the algebra rather than
//! about one implementation agreeing with itself.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// One trajectory's nuisance values for times `1..=tau`, in plain owned
/// form. Index `i` holds time `t = i + 1`.
pub struct ReferenceSlices {
    /// Primary-regime treatment weight `1{A_t = a'_t} / g'_t`.
    pub w_prime: Vec<f64>,
    /// Reference-regime treatment weight `1{A_t = a*_t} / g*_t`.
    pub w_star: Vec<f64>,
    /// Mediator weight at the hypothetical path value.
    pub w_med: Vec<f64>,
    /// Whether the observed mediator equals the hypothetical value.
    pub m_match: Vec<bool>,
    /// Outcome-scale regression, mediator step.
    pub q_med: Vec<f64>,
    /// Outcome-scale regression, treatment step.
    pub q_trt: Vec<f64>,
    /// Path-probability regression.
    pub q_path: Vec<f64>,
    pub y: f64,
}

impl ReferenceSlices {
    pub fn tau(&self) -> usize {
        self.w_prime.len()
    }

    /// Product of primary-regime treatment weights over times `l..=u`
    /// (1-based, empty when `l > u`).
    fn k_prime(&self, l: usize, u: usize) -> f64 {
        (l..=u).map(|t| self.w_prime[t - 1]).product()
    }

    /// Product of reference-regime treatment weights over `l..=u`.
    fn k_star(&self, l: usize, u: usize) -> f64 {
        (l..=u).map(|t| self.w_star[t - 1]).product()
    }

    /// Product of mediator weights over `l..=u`.
    fn h(&self, l: usize, u: usize) -> f64 {
        (l..=u).map(|t| self.w_med[t - 1]).product()
    }

    /// Product of mediator-match indicators over `l..=u`.
    fn match_prod(&self, l: usize, u: usize) -> f64 {
        (l..=u).map(|t| if self.m_match[t - 1] { 1.0 } else { 0.0 }).product()
    }

    /// Treatment-step regression with the terminal convention `Q(tau+1) = Y`.
    fn q_trt_ext(&self, t: usize) -> f64 {
        if t == self.tau() + 1 {
            self.y
        } else {
            self.q_trt[t - 1]
        }
    }

    /// Path regression with the terminal convention `Q(tau+1) = 1`.
    fn q_path_ext(&self, t: usize) -> f64 {
        if t == self.tau() + 1 {
            1.0
        } else {
            self.q_path[t - 1]
        }
    }

    /// Outcome-side score at the mediator step of time `t`, as the displayed
    /// double sum.
    pub fn d_med(&self, t: usize) -> f64 {
        let tau = self.tau();
        let mut total = self.q_med[t - 1];
        for s in t..=tau {
            total += self.k_prime(t + 1, s)
                * self.h(t, s)
                * (self.q_trt_ext(s + 1) - self.q_med[s - 1]);
        }
        for s in (t + 1)..=tau {
            total += self.k_prime(t + 1, s)
                * self.h(t, s - 1)
                * (self.q_med[s - 1] - self.q_trt[s - 1]);
        }
        total
    }

    /// Outcome-side score at the treatment step of time `t`.
    pub fn d_trt(&self, t: usize) -> f64 {
        let tau = self.tau();
        let mut total = self.q_trt[t - 1];
        for s in t..=tau {
            total += self.k_prime(t, s)
                * self.h(t, s)
                * (self.q_trt_ext(s + 1) - self.q_med[s - 1]);
        }
        for s in t..=tau {
            total += self.k_prime(t, s)
                * self.h(t, s - 1)
                * (self.q_med[s - 1] - self.q_trt[s - 1]);
        }
        total
    }

    /// Path-probability score at time `t`.
    pub fn d_path(&self, t: usize) -> f64 {
        let tau = self.tau();
        let mut total = self.q_path[t - 1];
        for s in t..=tau {
            let ind_s = if self.m_match[s - 1] { 1.0 } else { 0.0 };
            total += self.k_star(t, s)
                * self.match_prod(t, s - 1)
                * (ind_s * self.q_path_ext(s + 1) - self.q_path[s - 1]);
        }
        total
    }
}

/// Draw a random, fully finite slice table. Weights land in `[0, 2]` with a
/// point mass at exactly zero (truncation and mismatch produce exact zeros in
/// production), regressions and the outcome in `[-1, 1]`.
pub fn random_reference_slices(tau: usize, rng: &mut StdRng) -> ReferenceSlices {
    let weight = |rng: &mut StdRng| -> f64 {
        if rng.random::<f64>() < 0.15 {
            0.0
        } else {
            rng.random_range(0.05..2.0)
        }
    };
    ReferenceSlices {
        w_prime: (0..tau).map(|_| weight(rng)).collect(),
        w_star: (0..tau).map(|_| weight(rng)).collect(),
        w_med: (0..tau).map(|_| weight(rng)).collect(),
        m_match: (0..tau).map(|_| rng.random::<f64>() < 0.6).collect(),
        q_med: (0..tau).map(|_| rng.random_range(-1.0..1.0)).collect(),
        q_trt: (0..tau).map(|_| rng.random_range(-1.0..1.0)).collect(),
        q_path: (0..tau).map(|_| rng.random_range(0.0..1.0)).collect(),
        y: rng.random_range(-1.0..1.0),
    }
}

/// Deterministic RNG for tests.
pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
