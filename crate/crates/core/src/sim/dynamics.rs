//! Pure transition equations of the student model. Everything here is a
//! total function of its arguments; the stateful composition lives in
//! [`Simulator`](super::Simulator).

use serde::{Deserialize, Serialize};

use super::{AffectState, StudentProfile};

/// 1 when `m <= d <= m + w`, else 0.
pub fn zpd_indicator(mastery: f64, difficulty: f64, width: f64) -> u8 {
    u8::from(mastery <= difficulty && difficulty <= mastery + width)
}

/// IRT-style gated gain: `m + alpha * gate * (1 - m)`.
pub fn mastery_after_gain(mastery: f64, alpha: f64, gate: u8) -> f64 {
    mastery + alpha * f64::from(gate) * (1.0 - mastery)
}

/// Ebbinghaus decay of a concept idle for `idle_steps` with stability `stability`.
pub fn decayed_mastery(mastery: f64, idle_steps: f64, stability: f64) -> f64 {
    mastery * (-idle_steps / stability).exp()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that an inactive misconception switches on:
/// `sigmoid(beta * ambiguity - gamma * m_host)`.
pub fn activation_probability(beta: f64, gamma: f64, ambiguity: f64, host_mastery: f64) -> f64 {
    logistic(beta * ambiguity - gamma * host_mastery)
}

/// Proactive question trigger, `kappa * curiosity * F * (1 - confidence)` clamped to [0, 1].
pub fn ask_probability(profile: &StudentProfile, affect: &AffectState, kappa: f64) -> f64 {
    (kappa * profile.curiosity * affect.frustration * (1.0 - profile.confidence)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffectCoefficients {
    pub eta_frustration: f64,
    pub relief_frustration: f64,
    pub eta_boredom: f64,
    pub relief_boredom: f64,
    pub eta_engagement: f64,
    pub drain_engagement: f64,
    /// Mastery at or above which content counts as redundant.
    pub redundant_mastery: f64,
}

impl Default for AffectCoefficients {
    fn default() -> Self {
        Self {
            eta_frustration: 0.2,
            relief_frustration: 0.15,
            eta_boredom: 0.15,
            relief_boredom: 0.05,
            eta_engagement: 0.1,
            drain_engagement: 0.1,
            redundant_mastery: 0.9,
        }
    }
}

/// Flow-theory affect update. `mastery` is the pre-update mastery of the
/// targeted concept.
pub fn update_affect(
    affect: &AffectState,
    mastery: f64,
    zpd_width: f64,
    difficulty: f64,
    tone: f64,
    k: &AffectCoefficients,
) -> AffectState {
    let unit = |x: f64| x.clamp(0.0, 1.0);
    let in_zpd = f64::from(zpd_indicator(mastery, difficulty, zpd_width));
    let too_hard = f64::from(u8::from(difficulty > mastery + zpd_width));
    let redundant = f64::from(u8::from(mastery >= k.redundant_mastery));

    let frustration =
        unit(affect.frustration + k.eta_frustration * too_hard - k.relief_frustration * tone);
    let boredom = unit(affect.boredom + k.eta_boredom * redundant - k.relief_boredom * in_zpd);
    let cognitive_load = unit((difficulty - mastery).max(0.0));
    let engagement = unit(
        affect.engagement + k.eta_engagement * in_zpd
            - k.drain_engagement * (frustration + boredom) / 2.0,
    );
    AffectState {
        frustration,
        engagement,
        cognitive_load,
        boredom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(curiosity: f64, confidence: f64) -> StudentProfile {
        StudentProfile {
            alpha: 0.5,
            w_zpd: 0.2,
            s_memory: 10.0,
            curiosity,
            confidence,
            expressiveness: 0.5,
        }
    }

    fn affect(f: f64) -> AffectState {
        AffectState {
            frustration: f,
            engagement: 0.5,
            cognitive_load: 0.0,
            boredom: 0.0,
        }
    }

    #[test]
    fn zpd_branches() {
        assert_eq!(zpd_indicator(0.3, 0.4, 0.2), 1);
        assert_eq!(zpd_indicator(0.3, 0.2, 0.2), 0);
        assert_eq!(zpd_indicator(0.3, 0.6, 0.2), 0);
        // closed interval on both ends
        assert_eq!(zpd_indicator(0.25, 0.25, 0.5), 1);
        assert_eq!(zpd_indicator(0.25, 0.75, 0.5), 1);
    }

    #[test]
    fn gain_examples() {
        assert!((mastery_after_gain(0.3, 0.5, 1) - 0.65).abs() < 1e-15);
        assert_eq!(mastery_after_gain(1.0, 0.9, 1), 1.0);
        assert_eq!(mastery_after_gain(0.3, 0.5, 0), 0.3);
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decayed_mastery(0.8, 0.0, 10.0), 0.8);
        let m = decayed_mastery(0.8, 10.0, 10.0);
        assert!((m - 0.294_303_552_937_153_9).abs() < 1e-12);
        assert!((m - 0.29430).abs() < 5e-6);
    }

    #[test]
    fn logistic_examples() {
        assert_eq!(activation_probability(2.0, 4.0, 0.5, 0.25), 0.5);
        assert!((activation_probability(4.0, 4.0, 1.0, 0.0) - 0.982_013_790_037_908_4).abs() < 1e-12);
        assert!((activation_probability(0.0, 6.0, 0.0, 1.0) - 0.002_472_623_156_634_775).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }

    #[test]
    fn logistic_monotone_on_grid() {
        for i in 0..20 {
            let a0 = i as f64 / 20.0;
            let a1 = (i + 1) as f64 / 20.0;
            for j in 0..=20 {
                let m = j as f64 / 20.0;
                let p0 = activation_probability(3.0, 2.0, a0, m);
                let p1 = activation_probability(3.0, 2.0, a1, m);
                assert!(p1 > p0 && p0 > 0.0 && p1 < 1.0);
                let q0 = activation_probability(3.0, 2.0, m, a0);
                let q1 = activation_probability(3.0, 2.0, m, a1);
                assert!(q1 < q0);
            }
        }
    }

    #[test]
    fn ask_examples() {
        assert_eq!(ask_probability(&profile(0.8, 1.0), &affect(0.5), 1.0), 0.0);
        assert!((ask_probability(&profile(0.8, 0.25), &affect(0.5), 1.0) - 0.3).abs() < 1e-15);
        assert_eq!(ask_probability(&profile(0.8, 0.25), &affect(0.0), 1.0), 0.0);
        assert_eq!(ask_probability(&profile(1.0, 0.0), &affect(1.0), 5.0), 1.0);
    }

    #[test]
    fn affect_in_zpd_calms_and_engages() {
        let k = AffectCoefficients::default();
        for f in [0.0, 0.3, 1.0] {
            let before = affect(f);
            let after = update_affect(&before, 0.3, 0.2, 0.4, 0.0, &k);
            assert!(after.frustration <= before.frustration);
            assert!(after.engagement >= before.engagement);
        }
    }

    #[test]
    fn affect_too_hard_raises_frustration() {
        let k = AffectCoefficients::default();
        let after = update_affect(&affect(0.1), 0.0, 0.2, 1.0, 0.0, &k);
        assert!((after.frustration - 0.3).abs() < 1e-15);
        assert_eq!(after.cognitive_load, 1.0);
    }

    #[test]
    fn boredom_saturates() {
        let k = AffectCoefficients::default();
        let mut a = affect(0.0);
        let steps = (1.0 / k.eta_boredom).ceil() as usize;
        for _ in 0..steps {
            a = update_affect(&a, 0.95, 0.2, 0.0, 0.0, &k);
        }
        assert_eq!(a.boredom, 1.0);
    }
}
