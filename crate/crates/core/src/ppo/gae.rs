/// Generalized advantage estimates for one trajectory.
///
/// `values[t + 1]` bootstraps step `t` unless `dones[t]`; the final step uses
/// `bootstrap`. Returns (advantages, returns) with returns = advantages + values.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "trajectory arrays must align");
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to mean 0 and (population) standard deviation 1.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { *x - mean };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[2.0], &[0.5], &[true], 9.0, 0.99, 0.95);
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn lambda_zero_is_td_residual() {
        let rw = [1.0, -0.5, 0.25, 2.0];
        let v = [0.3, 0.1, -0.2, 0.7];
        let d = [false, false, false, false];
        let (a, _) = compute_gae(&rw, &v, &d, 0.4, 0.9, 0.0);
        for t in 0..4 {
            let next = if t + 1 < 4 { v[t + 1] } else { 0.4 };
            assert_eq!(a[t], rw[t] + 0.9 * next - v[t]);
        }
    }

    #[test]
    fn monte_carlo_limit() {
        let rw = [1.0, -0.5, 0.25, 2.0];
        let v = [0.3, 0.1, -0.2, 0.7];
        let d = [false, false, false, true];
        let (a, _) = compute_gae(&rw, &v, &d, 123.0, 1.0, 1.0);
        for t in 0..4 {
            let g: f64 = rw[t..].iter().sum();
            assert!((a[t] - (g - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_moments() {
        let mut x = vec![3.0, -1.0, 4.0, 1.5, 9.0, -2.6];
        normalize(&mut x);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6);
    }
}
