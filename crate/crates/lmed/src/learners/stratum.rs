//! Saturated stratum lookup models: group rows by their exact joint feature
//! key and report per-stratum (weighted) means or class frequencies.

use std::collections::HashMap;

/// Exact-match key for a feature row. Values are keyed by their bit pattern
/// (with `-0.0` normalized to `0.0`), so categorical codes and exactly-equal
/// numeric values land in the same stratum.
fn key_of(row: &[f64]) -> Vec<u64> {
    row.iter()
        .map(|&v| {
            let v = if v == 0.0 { 0.0 } else { v };
            v.to_bits()
        })
        .collect()
}

/// Per-stratum weighted mean with optional shrinkage toward the global mean.
///
/// With shrinkage strength `alpha`, a stratum with weight `W` and weighted sum
/// `S` predicts `(S + alpha * global) / (W + alpha)`; `alpha = 0` gives the
/// exact stratum average. Unseen strata predict the global mean.
#[derive(Debug, Clone)]
pub struct StratumMeanModel {
    map: HashMap<Vec<u64>, f64>,
    global: f64,
}

impl StratumMeanModel {
    pub fn fit(
        x: &super::DesignMatrix,
        y: &[f64],
        w: Option<&[f64]>,
        alpha: f64,
    ) -> StratumMeanModel {
        let mut acc: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        let mut gsum = 0.0;
        let mut gw = 0.0;
        for r in 0..x.rows() {
            let wi = w.map_or(1.0, |w| w[r]);
            if wi == 0.0 {
                continue;
            }
            let e = acc.entry(key_of(x.row(r))).or_insert((0.0, 0.0));
            e.0 += wi * y[r];
            e.1 += wi;
            gsum += wi * y[r];
            gw += wi;
        }
        let global = gsum / gw;
        let map = acc
            .into_iter()
            .map(|(k, (s, n))| (k, (s + alpha * global) / (n + alpha)))
            .collect();
        StratumMeanModel { map, global }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        *self.map.get(&key_of(row)).unwrap_or(&self.global)
    }
}

/// Per-stratum class frequencies with add-`alpha` smoothing. Unseen strata
/// fall back to the global class frequencies.
#[derive(Debug, Clone)]
pub struct StratumProbModel {
    map: HashMap<Vec<u64>, Vec<f64>>,
    global: Vec<f64>,
}

impl StratumProbModel {
    pub fn fit(
        x: &super::DesignMatrix,
        codes: &[i64],
        card: usize,
        w: Option<&[f64]>,
        alpha: f64,
    ) -> StratumProbModel {
        let mut acc: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
        let mut gcounts = vec![0.0; card];
        for r in 0..x.rows() {
            let wi = w.map_or(1.0, |w| w[r]);
            if wi == 0.0 {
                continue;
            }
            let e = acc.entry(key_of(x.row(r))).or_insert_with(|| vec![0.0; card]);
            e[codes[r] as usize] += wi;
            gcounts[codes[r] as usize] += wi;
        }
        let freq = |counts: &[f64]| -> Vec<f64> {
            let total: f64 = counts.iter().sum();
            counts
                .iter()
                .map(|&c| (c + alpha) / (total + alpha * card as f64))
                .collect()
        };
        let global = freq(&gcounts);
        let map = acc.into_iter().map(|(k, counts)| (k, freq(&counts))).collect();
        StratumProbModel { map, global }
    }

    pub fn predict(&self, row: &[f64]) -> Vec<f64> {
        self.map.get(&key_of(row)).unwrap_or(&self.global).clone()
    }
}
