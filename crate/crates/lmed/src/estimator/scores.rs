//! Influence-score evaluation along a single trajectory.
//!
//! Given one observation paired with a hypothetical mediator suffix
//! `(m_t, ..., m_tau)`, three augmented pseudo-outcomes are defined by
//! backward recursions over `s = tau, ..., t`:
//!
//! * outcome side, mediator step: `dm_s = qm_s + wm_s * (dt_{s+1} - qm_s)`
//! * outcome side, treatment step: `dt_s = qt_s + wp_s * (dm_s - qt_s)`
//! * path-probability side:        `dp_s = qp_s + ws_s * (1{M_s=m_s} * dp_{s+1} - qp_s)`
//!
//! seeded with `dt_{tau+1} = Y` and `dp_{tau+1} = 1`. Here `qm/qt/qp` are the
//! fitted sequential regressions, `wp/ws` are indicator-over-propensity
//! weights for the primary and reference treatment regimes, and `wm` is the
//! analogous weight for the mediator taking its hypothetical value.
//!
//! Unrolling the recursions yields the usual sums over `s` of inverse-
//! probability products times regression increments; the recursive form is
//! used in production because it is `O(tau)` and lets a zero weight cut off
//! everything deeper — important for censored rows, whose regressions past
//! the censoring time are undefined and must never be touched.

/// Per-trajectory nuisance slices for times `t0..=tau` (index `s - t0`).
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySlices<'a> {
    /// First time covered by the slices (the recursion target).
    pub t0: usize,
    /// Weight `1{A_s = a'_s} / g_s(a'_s | past)` for the primary regime.
    pub w_trt_prime: &'a [f64],
    /// Weight `1{A_s = a*_s} / g_s(a*_s | past)` for the reference regime.
    pub w_trt_star: &'a [f64],
    /// Weight `1{M_s = m_s} / g_{M,s}(m_s | past)` at the suffix value.
    pub w_med: &'a [f64],
    /// Indicator `M_s = m_s` (false when the mediator is missing).
    pub m_match: &'a [bool],
    /// Outcome-side regression conditioned on the mediator step.
    pub q_med: &'a [f64],
    /// Outcome-side regression conditioned on the treatment step.
    pub q_trt: &'a [f64],
    /// Path-probability regression.
    pub q_path: &'a [f64],
    /// Final outcome.
    pub y: f64,
}

/// `base + w * (inner - base)`, treating a zero weight as an exact gate so a
/// non-finite `inner` (undefined past a censoring point) cannot leak through.
#[inline]
pub(crate) fn gated(base: f64, w: f64, inner: f64) -> f64 {
    if w == 0.0 {
        base
    } else {
        base + w * (inner - base)
    }
}

impl TrajectorySlices<'_> {
    fn len(&self) -> usize {
        self.w_trt_prime.len()
    }

    /// The sub-trajectory starting `k` steps later (same outcome).
    pub fn tail(&self, k: usize) -> TrajectorySlices<'_> {
        TrajectorySlices {
            t0: self.t0 + k,
            w_trt_prime: &self.w_trt_prime[k..],
            w_trt_star: &self.w_trt_star[k..],
            w_med: &self.w_med[k..],
            m_match: &self.m_match[k..],
            q_med: &self.q_med[k..],
            q_trt: &self.q_trt[k..],
            q_path: &self.q_path[k..],
            y: self.y,
        }
    }

    /// Outcome-side score starting at the mediator step of `t0`.
    pub fn score_med(&self) -> f64 {
        self.outcome_pair().0
    }

    /// Outcome-side score starting at the treatment step of `t0`.
    pub fn score_trt(&self) -> f64 {
        self.outcome_pair().1
    }

    /// `(mediator-step, treatment-step)` scores at `t0` in one pass.
    ///
    /// Empty slices (`t0 = tau + 1`) return the recursion seeds: the
    /// treatment-step score is the outcome itself and the mediator-step score
    /// is undefined.
    pub fn outcome_pair(&self) -> (f64, f64) {
        let n = self.len();
        let mut dt = self.y;
        let mut dm = f64::NAN;
        for i in (0..n).rev() {
            dm = gated(self.q_med[i], self.w_med[i], dt);
            dt = gated(self.q_trt[i], self.w_trt_prime[i], dm);
        }
        (dm, dt)
    }

    /// Path-probability score at `t0`.
    pub fn score_path(&self) -> f64 {
        let n = self.len();
        let mut dp_next = 1.0;
        for i in (0..n).rev() {
            let inner = if self.m_match[i] { dp_next } else { 0.0 };
            dp_next = gated(self.q_path[i], self.w_trt_star[i], inner);
        }
        dp_next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_period_worked_values() {
        // One period, fully observed row: mediator weight 4 with outcome gap
        // 0.4 over a regression value 0.6; treatment weight 2 with regression
        // values 0.5/0.6; reference-regime weight 2 with path regression 0.3
        // and a matching mediator.
        let s = TrajectorySlices {
            t0: 1,
            w_trt_prime: &[2.0],
            w_trt_star: &[2.0],
            w_med: &[4.0],
            m_match: &[true],
            q_med: &[0.6],
            q_trt: &[0.5],
            q_path: &[0.3],
            y: 1.0,
        };
        assert!((s.score_med() - 2.2).abs() < 1e-12); // 0.6 + 4*(1.0-0.6)
        assert!((s.score_trt() - 3.9).abs() < 1e-12); // 0.5 + 2*(2.2-0.5)
        assert!((s.score_path() - 1.7).abs() < 1e-12); // 0.3 + 2*(1-0.3)
    }

    #[test]
    fn zero_weights_reduce_to_the_regressions() {
        let s = TrajectorySlices {
            t0: 1,
            w_trt_prime: &[0.0],
            w_trt_star: &[0.0],
            w_med: &[0.0],
            m_match: &[false],
            q_med: &[0.6],
            q_trt: &[0.5],
            q_path: &[0.3],
            y: 123.0,
        };
        assert_eq!(s.score_med(), 0.6);
        assert_eq!(s.score_trt(), 0.5);
        assert_eq!(s.score_path(), 0.3);
    }

    #[test]
    fn zero_weight_gates_out_undefined_deeper_values() {
        // Values past a censoring point are NaN; the zero weight at the
        // censored step must stop them from propagating down.
        let s = TrajectorySlices {
            t0: 1,
            w_trt_prime: &[2.0, 0.0],
            w_trt_star: &[2.0, 0.0],
            w_med: &[0.0, 0.0],
            m_match: &[false, false],
            q_med: &[0.25, f64::NAN],
            q_trt: &[0.5, 0.75],
            q_path: &[0.3, 0.4],
            y: f64::NAN,
        };
        // dm_2 = NaN (its own regression), but dt_2 = 0.75 via the zero gate,
        // dm_1 = 0.25 via the zero mediator weight, dt_1 = 0.5 + 2*(0.25-0.5).
        assert_eq!(s.score_trt(), 0.0);
        assert_eq!(s.score_med(), 0.25);
        // Path side: dp_2 = 0.4 via gate, dp_1 = 0.3 + 2*(0 - 0.3) = -0.3.
        assert!((s.score_path() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn two_period_recursion_matches_hand_rolled_sums() {
        let s = TrajectorySlices {
            t0: 1,
            w_trt_prime: &[1.5, 2.5],
            w_trt_star: &[1.2, 0.8],
            w_med: &[3.0, 1.5],
            m_match: &[true, false],
            q_med: &[0.4, 0.7],
            q_trt: &[0.3, 0.6],
            q_path: &[0.2, 0.5],
            y: 2.0,
        };
        // Backward by hand.
        let dm2 = 0.7 + 1.5 * (2.0 - 0.7);
        let dt2 = 0.6 + 2.5 * (dm2 - 0.6);
        let dm1 = 0.4 + 3.0 * (dt2 - 0.4);
        let dt1 = 0.3 + 1.5 * (dm1 - 0.3);
        assert!((s.score_med() - dm1).abs() < 1e-12);
        assert!((s.score_trt() - dt1).abs() < 1e-12);
        let dp2 = 0.5 + 0.8 * (0.0 - 0.5);
        let dp1 = 0.2 + 1.2 * (dp2 - 0.2);
        assert!((s.score_path() - dp1).abs() < 1e-12);
    }
}
