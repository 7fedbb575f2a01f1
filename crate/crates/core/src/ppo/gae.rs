//! Generalized advantage estimation.

/// GAE over one environment's steps in time order.
///
/// `dones[t]` ends the episode after step `t`. `bootstrap[t]` is the value
/// credited beyond a time-limited ending and is 0 for real terminations.
/// `last_value` continues the final step when the sequence stops mid-episode.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae_sequence(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n && bootstrap.len() == n, "gae input lengths differ");
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if dones[t] {
            bootstrap[t]
        } else if t + 1 < n {
            values[t + 1]
        } else {
            last_value
        };
        let delta = rewards[t] + gamma * next - values[t];
        let carry = if dones[t] { 0.0 } else { gamma * lambda * running };
        running = delta + carry;
        adv[t] = running;
    }
    let returns: Vec<f64> = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    // re-derive so that returns - values == advantages holds bit for bit
    let adv = returns.iter().zip(values).map(|(g, v)| g - v).collect();
    (adv, returns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, g) = gae_sequence(&[1.0], &[0.0], &[true], &[0.0], 5.0, 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3];
        let (a, _) = gae_sequence(&r, &v, &[false; 3], &[0.0; 3], 0.7, 0.9, 0.0);
        assert_eq!(a[0], 0.5 + 0.9 * 0.2 - 0.1);
        assert_eq!(a[1], -1.0 + 0.9 * 0.3 - 0.2);
        assert_eq!(a[2], 2.0 + 0.9 * 0.7 - 0.3);
    }

    #[test]
    fn timeout_uses_bootstrap() {
        let (a, _) = gae_sequence(&[1.0, 1.0], &[0.0, 0.0], &[true, false], &[3.0, 0.0], 0.0, 0.5, 1.0);
        assert_eq!(a[0], 1.0 + 0.5 * 3.0);
        assert_eq!(a[1], 1.0);
    }
}
