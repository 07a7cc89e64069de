//! Soft-argmax depth regression, inverse-depth index conversions, Huber loss,
//! and the evaluation metrics.

use crate::tensor::Tensor;

/// Differentiable expectation of the 1-based sphere index under a softmax of
/// each cost row. Direct (non-graph) evaluation; the graph op in
/// [`crate::autodiff`] computes the same quantity.
pub fn soft_argmax(costs: &Tensor) -> Vec<f64> {
    assert_eq!(costs.shape().len(), 2, "costs must be [V, N]");
    let n = costs.shape()[1];
    costs
        .data()
        .chunks(n)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            let mut e = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let p = (x - m).exp();
                z += p;
                e += (j + 1) as f64 * p;
            }
            e / z
        })
        .collect()
}

/// Ground-truth inverse-depth index: `D = 1 + (d_min/d_gt)·(N−1)`.
pub fn gt_index(d_gt: f64, d_min: f64, n: usize) -> f64 {
    assert!(d_gt > 0.0, "ground-truth depth must be positive");
    1.0 + d_min / d_gt * (n - 1) as f64
}

/// Algebraic inverse of [`gt_index`]: `d = d_min·(N−1)/(D−1)`. Indices at or
/// below 1 sit beyond the far plane and return `None`.
pub fn index_to_depth(index: f64, d_min: f64, n: usize) -> Option<f64> {
    if index <= 1.0 {
        return None;
    }
    Some(d_min * (n - 1) as f64 / (index - 1.0))
}

/// Mean Huber loss with δ = 1 over all vertices.
pub fn huber_loss(pred: &[f64], gt: &[f64]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "prediction/ground-truth length mismatch");
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let e = p - g;
            if e.abs() <= 1.0 {
                0.5 * e * e
            } else {
                e.abs() - 0.5
            }
        })
        .sum();
    sum / pred.len() as f64
}

/// Index-error metrics: `E(i) = 100·|D̂(i) − D_gt(i)|/N` over masked vertices,
/// summarized as MAE, RMS, and the percentage of vertices with E above 1, 3,
/// and 5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rms: f64,
    pub gt1: f64,
    pub gt3: f64,
    pub gt5: f64,
    pub count: usize,
}

pub fn metrics(pred: &[f64], gt: &[f64], mask: &[bool], n: usize) -> Metrics {
    assert_eq!(pred.len(), gt.len());
    assert_eq!(pred.len(), mask.len());
    let errors: Vec<f64> = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| 100.0 * (p - g).abs() / n as f64)
        .collect();
    assert!(!errors.is_empty(), "metrics over an empty mask");
    summarize_errors(&errors)
}

/// Metrics from an already-pooled list of per-vertex errors (used to merge
/// several scenes into one row).
pub fn summarize_errors(errors: &[f64]) -> Metrics {
    assert!(!errors.is_empty());
    let count = errors.len();
    let mae = errors.iter().sum::<f64>() / count as f64;
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / count as f64).sqrt();
    let frac = |t: f64| 100.0 * errors.iter().filter(|&&e| e > t).count() as f64 / count as f64;
    Metrics {
        mae,
        rms,
        gt1: frac(1.0),
        gt3: frac(3.0),
        gt5: frac(5.0),
        count,
    }
}

impl Metrics {
    /// One CSV row matching the header `angle,model,gt1,gt3,gt5,mae,rms`.
    pub fn csv_row(&self, angle_deg: f64, model: &str) -> String {
        format!(
            "{angle_deg},{model},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.gt1, self.gt3, self.gt5, self.mae, self.rms
        )
    }

    pub const CSV_HEADER: &'static str = "angle,model,gt1,gt3,gt5,mae,rms";

    /// Flat key=value report.
    pub fn report(&self) -> String {
        format!(
            "gt1={:.4}\ngt3={:.4}\ngt5={:.4}\nmae={:.4}\nrms={:.4}\ncount={}\n",
            self.gt1, self.gt3, self.gt5, self.mae, self.rms, self.count
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_argmax_near_one_hot() {
        let mut row = vec![-20.0; 8];
        row[4] = 20.0; // 1-based index 5
        let d = soft_argmax(&Tensor::from_vec(&[1, 8], row));
        assert!((d[0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn soft_argmax_uniform_is_midpoint() {
        let d = soft_argmax(&Tensor::filled(&[1, 32], 0.3));
        assert!((d[0] - 16.5).abs() < 1e-9);
    }

    #[test]
    fn soft_argmax_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row: Vec<f64> = (0..16).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let d = soft_argmax(&Tensor::from_vec(&[1, 16], row.clone()))[0];
        // Direct evaluation without the max-shift trick.
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        let e: f64 = row
            .iter()
            .enumerate()
            .map(|(j, x)| (j + 1) as f64 * x.exp() / z)
            .sum();
        assert!((d - e).abs() < 1e-9);
    }

    #[test]
    fn soft_argmax_strictly_inside_range_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let row: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() * 40.0 - 20.0).collect();
            let d = soft_argmax(&Tensor::from_vec(&[1, 8], row.clone()))[0];
            assert!(d > 1.0 && d < 8.0);
            let shifted: Vec<f64> = row.iter().map(|x| x + 7.3).collect();
            let d2 = soft_argmax(&Tensor::from_vec(&[1, 8], shifted))[0];
            assert!((d - d2).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_argmax_monotone_pull() {
        // Raising the score of sphere j moves the expectation toward j+1.
        let row = vec![0.0, 0.5, -0.3, 0.2];
        let base = soft_argmax(&Tensor::from_vec(&[1, 4], row.clone()))[0];
        for j in 0..4 {
            let mut bumped = row.clone();
            bumped[j] += 1e-6;
            let d = soft_argmax(&Tensor::from_vec(&[1, 4], bumped))[0];
            if ((j + 1) as f64) > base {
                assert!(d > base);
            } else {
                assert!(d < base);
            }
        }
    }

    #[test]
    fn gt_index_examples() {
        assert!((gt_index(0.55, 0.55, 32) - 32.0).abs() < 1e-12);
        assert!((gt_index(1e12, 0.55, 32) - 1.0).abs() < 1e-10);
        assert!((gt_index(1.1, 0.55, 32) - 16.5).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn gt_index_rejects_nonpositive_depth() {
        let _ = gt_index(0.0, 0.55, 32);
    }

    #[test]
    fn index_depth_round_trip() {
        assert!((index_to_depth(32.0, 0.55, 32).unwrap() - 0.55).abs() < 1e-12);
        assert!((index_to_depth(16.5, 0.55, 32).unwrap() - 1.1).abs() < 1e-12);
        assert!(index_to_depth(1.0, 0.55, 32).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d = 1.0 + rng.gen::<f64>() * 31.0;
            let depth = index_to_depth(d, 0.55, 32).unwrap();
            assert!((gt_index(depth, 0.55, 32) - d).abs() < 1e-9);
        }
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber_loss(&[1.0], &[1.0]), 0.0);
        assert!((huber_loss(&[1.5], &[1.0]) - 0.125).abs() < 1e-12);
        assert!((huber_loss(&[3.0], &[1.0]) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_unit_error_case() {
        let pred = vec![5.0; 10];
        let gt = vec![4.0; 10];
        let mask = vec![true; 10];
        let m = metrics(&pred, &gt, &mask, 32);
        assert!((m.mae - 3.125).abs() < 1e-12);
        assert!((m.rms - 3.125).abs() < 1e-12);
        assert_eq!(m.gt1, 100.0);
        assert_eq!(m.gt3, 100.0);
        assert_eq!(m.gt5, 0.0);
    }

    #[test]
    fn metrics_zero_when_exact() {
        let pred = vec![2.0, 3.5, 7.0];
        let m = metrics(&pred, &pred.clone(), &[true, true, true], 8);
        assert_eq!((m.mae, m.rms, m.gt1, m.gt3, m.gt5), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn metrics_match_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 32;
        let pred: Vec<f64> = (0..100).map(|_| 1.0 + rng.gen::<f64>() * 31.0).collect();
        let gt: Vec<f64> = (0..100).map(|_| 1.0 + rng.gen::<f64>() * 31.0).collect();
        let mask: Vec<bool> = (0..100).map(|i| i % 3 != 0).collect();
        let m = metrics(&pred, &gt, &mask, n);
        let mut es = Vec::new();
        for i in 0..100 {
            if mask[i] {
                es.push(100.0 * (pred[i] - gt[i]).abs() / n as f64);
            }
        }
        let mae = es.iter().sum::<f64>() / es.len() as f64;
        assert!((m.mae - mae).abs() < 1e-12);
        let over3 = 100.0 * es.iter().filter(|&&e| e > 3.0).count() as f64 / es.len() as f64;
        assert!((m.gt3 - over3).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn metrics_empty_mask_is_contract_violation() {
        let _ = metrics(&[1.0], &[1.0], &[false], 8);
    }
}
