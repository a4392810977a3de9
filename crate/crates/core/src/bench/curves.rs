use crate::ppo::UpdateMetrics;

/// Reward and entropy curves from a training log, as two CSV documents.
pub fn emit_curves(log: &str) -> Result<(String, String), String> {
    let rows = UpdateMetrics::parse_csv(log)?;
    let mut reward = String::from("env_steps,mean_episode_reward\n");
    let mut entropy = String::from("env_steps,mean_entropy\n");
    for r in rows {
        reward += &format!("{},{}\n", r.env_steps, r.mean_episode_reward);
        entropy += &format!("{},{}\n", r.env_steps, r.mean_entropy);
    }
    Ok((reward, entropy))
}

/// Mean of a trailing `window` of `xs` ending at each index.
pub fn windowed_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::METRICS_HEADER;

    #[test]
    fn one_row_per_update() {
        let log = format!("{METRICS_HEADER}\n0,512,1.5,1.6,0.1,0.2,0.0\n1,1030,2.0,1.5,0.1,0.2,0.1\n");
        let (r, e) = emit_curves(&log).unwrap();
        assert_eq!(r, "env_steps,mean_episode_reward\n512,1.5\n1030,2\n");
        assert_eq!(e.lines().count(), 3);
        assert!(emit_curves("nonsense").is_err());
    }

    #[test]
    fn window_means() {
        assert_eq!(windowed_mean(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }
}
