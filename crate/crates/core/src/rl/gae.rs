use super::RlError;

/// Generalized advantage estimates and value targets.
///
/// `dones[t]` marks the last step of an episode; the value after it is taken
/// as zero, as is the value after the final element.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(RlError::Shape(format!(
            "gae inputs differ in length: {n} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_adv = 0.0;
            next_value = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_td_residual() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.25, 1.0];
        let (a, _) = gae(&r, &v, &[false, false, true], 0.9, 0.0).unwrap();
        assert_eq!(a, vec![1.0 + 0.9 * 0.25 - 0.5, 2.0 + 0.9 * 1.0 - 0.25, 3.0 - 1.0]);
    }

    #[test]
    fn zeros_in_zeros_out() {
        let (a, r) = gae(&[0.0; 5], &[0.0; 5], &[false; 5], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![0.0; 5]);
        assert_eq!(r, vec![0.0; 5]);
    }

    #[test]
    fn length_mismatch() {
        assert!(gae(&[1.0], &[], &[true], 0.9, 0.9).is_err());
    }

    #[test]
    fn episodes_do_not_leak() {
        let (a, _) = gae(&[0.0, 10.0], &[0.0, 0.0], &[true, true], 1.0, 1.0).unwrap();
        assert_eq!(a, vec![0.0, 10.0]);
    }
}
