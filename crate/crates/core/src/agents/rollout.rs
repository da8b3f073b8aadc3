use super::Scalar;

/// Generalized advantage estimates and value targets for one trajectory
/// segment with no terminal states. `last_value` bootstraps the step after
/// the segment. Returns `(advantages, returns)` with `returns = adv + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt() + 1e-8;
    xs.iter().map(|x| (x - mean) / sd).collect()
}

/// On-policy samples collected between two policy updates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<[Scalar; 2]>,
    /// Grid index for categorical policies, pre-squash sample for Gaussian ones.
    pub actions: Vec<Scalar>,
    pub log_probs: Vec<Scalar>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lambda_one_gives_discounted_returns_minus_values() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.25, 1.0];
        let (adv, ret) = compute_gae(&r, &v, 3.0, 0.9, 1.0);
        let g2 = 2.0 + 0.9 * 3.0;
        let g1 = 0.0 + 0.9 * g2;
        let g0 = 1.0 + 0.9 * g1;
        for (a, (g, vv)) in adv.iter().zip([g0, g1, g2].iter().zip(v)) {
            assert!((a - (g - vv)).abs() < 1e-12);
        }
        for (x, g) in ret.iter().zip([g0, g1, g2]) {
            assert!((x - g).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_zero_gives_one_step_errors() {
        let r = [1.0, -1.0];
        let v = [0.2, 0.4];
        let (adv, _) = compute_gae(&r, &v, 0.8, 0.5, 0.0);
        assert!((adv[0] - (1.0 + 0.5 * 0.4 - 0.2)).abs() < 1e-12);
        assert!((adv[1] - (-1.0 + 0.5 * 0.8 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn exact_values_give_zero_advantage() {
        // constant reward r with V = r / (1 - gamma) everywhere
        let gamma = 0.9;
        let vstar = 2.0 / (1.0 - gamma);
        let (adv, ret) = compute_gae(&[2.0; 6], &[vstar; 6], vstar, gamma, 0.95);
        assert!(adv.iter().all(|a| a.abs() < 1e-12));
        assert!(ret.iter().all(|x| (x - vstar).abs() < 1e-12));
    }

    #[test]
    fn normalize_moments() {
        let z = normalize(&[1.0, 2.0, 3.0, 10.0]);
        let mean = z.iter().sum::<f64>() / 4.0;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
        assert!(normalize(&[4.0; 3]).iter().all(|x| *x == 0.0));
    }

    proptest! {
        #[test]
        fn gae_recursion_holds(
            data in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50),
            last in -5.0f64..5.0,
            gamma in 0.0f64..1.0,
            lambda in 0.0f64..1.0,
        ) {
            let (r, v): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            let (adv, ret) = compute_gae(&r, &v, last, gamma, lambda);
            let n = r.len();
            for t in 0..n {
                let next_v = if t + 1 < n { v[t + 1] } else { last };
                let next_a = if t + 1 < n { adv[t + 1] } else { 0.0 };
                let delta = r[t] + gamma * next_v - v[t];
                prop_assert!((adv[t] - (delta + gamma * lambda * next_a)).abs() < 1e-9);
                prop_assert!((ret[t] - adv[t] - v[t]).abs() < 1e-12);
            }
        }
    }
}
