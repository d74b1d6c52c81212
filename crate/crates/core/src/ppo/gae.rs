use super::PpoError;

/// Generalized advantage estimation for one reward channel.
///
/// `values[t]` estimates state `t`; `last_value` estimates the state after the
/// final transition and is ignored when that transition is terminal.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if n == 0 {
        return Err(PpoError::EmptyBuffer);
    }
    if values.len() != n || dones.len() != n {
        return Err(PpoError::Shape("rewards, values and dones must have equal length".into()));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
