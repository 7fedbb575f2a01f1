//! Transfer metrics and critic-calibration diagnostics.

use crate::morphology::MORPH_DIM;

/// Distance between normalized descriptors, scaled so that in-range
/// descriptors are at most 1 apart.
pub fn morph_distance(a: &[f64; MORPH_DIM], b: &[f64; MORPH_DIM]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    sq.sqrt() / (2.0 * (MORPH_DIM as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpeedMetrics {
    /// Best mean forward speed over a fall-free window of length `t_win`.
    pub v_bar: f64,
    pub t_win: f64,
    /// Longest contiguous fall-free duration.
    pub t_max: f64,
}

/// Windowed speed metrics of a trajectory sampled every `dt` seconds.
/// `fallen[i]` marks samples where the robot is down. `v_bar` is floored at 0.
pub fn stable_speed_metrics(speeds: &[f64], fallen: &[bool], dt: f64, window: f64) -> SpeedMetrics {
    assert_eq!(speeds.len(), fallen.len(), "speed and fall traces differ in length");
    let mut segments = Vec::new();
    let mut start = None;
    for (i, &f) in fallen.iter().enumerate() {
        match (f, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                segments.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push(s..fallen.len());
    }
    let longest = segments.iter().map(|r| r.len()).max().unwrap_or(0);
    if longest == 0 {
        return SpeedMetrics::default();
    }
    let t_max = longest as f64 * dt;
    let t_win = window.min(t_max);
    let k = ((t_win / dt).round() as usize).clamp(1, longest);
    let mut best = f64::NEG_INFINITY;
    for seg in segments.iter().filter(|r| r.len() >= k) {
        let s = &speeds[seg.clone()];
        let mut sum: f64 = s[..k].iter().sum();
        best = best.max(sum);
        for i in k..s.len() {
            sum += s[i] - s[i - k];
            best = best.max(sum);
        }
    }
    SpeedMetrics {
        v_bar: (best / k as f64).max(0.0),
        t_win,
        t_max,
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// `1 - Var(G - V) / Var(G)`; `None` with fewer than two samples or
/// constant returns.
pub fn explained_variance(returns: &[f64], values: &[f64]) -> Option<f64> {
    assert_eq!(returns.len(), values.len(), "returns and values differ in length");
    if returns.len() < 2 {
        return None;
    }
    let vg = variance(returns);
    if vg == 0.0 {
        return None;
    }
    let resid: Vec<f64> = returns.iter().zip(values).map(|(g, v)| g - v).collect();
    Some(1.0 - variance(&resid) / vg)
}

fn split(x: &[f64], buckets: &[usize], n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); n];
    for (&v, &b) in x.iter().zip(buckets) {
        out[b].push(v);
    }
    out
}

/// Explained variance within each of `n` buckets.
pub fn bucketed_explained_variance(returns: &[f64], values: &[f64], buckets: &[usize], n: usize) -> Vec<Option<f64>> {
    let g = split(returns, buckets, n);
    let v = split(values, buckets, n);
    g.iter().zip(&v).map(|(g, v)| explained_variance(g, v)).collect()
}

/// Within-bucket standard deviation of the advantages in units of the
/// global mean absolute advantage. `None` for buckets with fewer than two
/// samples or when every advantage is zero.
pub fn advantage_noise(advantages: &[f64], buckets: &[usize], n: usize) -> Vec<Option<f64>> {
    assert_eq!(advantages.len(), buckets.len(), "advantages and buckets differ in length");
    let scale = if advantages.is_empty() {
        0.0
    } else {
        advantages.iter().map(|a| a.abs()).sum::<f64>() / advantages.len() as f64
    };
    split(advantages, buckets, n)
        .iter()
        .map(|a| (a.len() >= 2 && scale > 0.0).then(|| variance(a).sqrt() / scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_closed_forms() {
        let z = [0.0; MORPH_DIM];
        assert_eq!(morph_distance(&z, &z), 0.0);
        let mut one = z;
        one[3] = 1.0;
        let mut other = z;
        other[3] = -1.0;
        assert!((morph_distance(&one, &other) - 0.301_511_344_577_763_6).abs() < 1e-12);
        assert!((morph_distance(&[1.0; MORPH_DIM], &[-1.0; MORPH_DIM]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_run() {
        let n = 2003;
        let m = stable_speed_metrics(&vec![1.0; n], &vec![false; n], 0.01, 3.0);
        assert!((m.v_bar - 1.0).abs() < 1e-12);
        assert_eq!(m.t_win, 3.0);
        assert!((m.t_max - 20.03).abs() < 1e-9);
    }

    #[test]
    fn early_fall() {
        let mut fallen = vec![false; 36];
        fallen.push(true);
        let m = stable_speed_metrics(&vec![0.5; 37], &fallen, 0.02, 3.0);
        assert!((m.t_max - 0.72).abs() < 1e-12);
        assert_eq!(m.t_win, m.t_max);
        assert!((m.v_bar - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_and_all_fallen() {
        assert_eq!(stable_speed_metrics(&[], &[], 0.02, 3.0), SpeedMetrics::default());
        assert_eq!(stable_speed_metrics(&[1.0, 2.0], &[true, true], 0.02, 3.0), SpeedMetrics::default());
    }

    #[test]
    fn ev_cases() {
        assert_eq!(explained_variance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(explained_variance(&[1.0, 2.0, 3.0], &[2.0; 3]), Some(0.0));
        let expected = 1.0 - variance(&[0.0, 0.0, 1.0]) / variance(&[1.0, 2.0, 3.0]);
        assert_eq!(explained_variance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]), Some(expected));
        assert_eq!(explained_variance(&[1.0], &[1.0]), None);
        assert_eq!(explained_variance(&[2.0, 2.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn noise_proxy_cases() {
        let a = [1.0, 1.0, 1.0, 3.0, 5.0, 3.0, 5.0];
        let b = [0, 0, 0, 1, 1, 2, 2];
        let p = advantage_noise(&a, &b, 4);
        assert_eq!(p[0], Some(0.0));
        assert_eq!(p[1], p[2]);
        assert_eq!(p[3], None);
    }
}
