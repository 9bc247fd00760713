//! Resilient backpropagation: four sign-based full-batch optimizers.
//!
//! Each parameter owns a step size `delta` that is adapted multiplicatively
//! from the sign agreement of consecutive epoch gradients: grown by
//! `eta_plus` (capped at `delta_max`) on agreement, shrunk by `eta_minus`
//! (floored at `delta_min`) on a flip. Gradient magnitudes are never
//! consumed, only signs, so the weight trajectory is invariant to positive
//! rescaling of the gradients.
//!
//! Variants differ only in what happens on a sign flip:
//! - `RpropPlus`: revert the previous step (weight-backtracking).
//! - `RpropMinus`: take a normal step with the shrunk delta.
//! - `IRpropPlus`: revert only if the epoch error increased, else hold.
//! - `IRpropMinus`: zero the stored gradient, then step with the shrunk
//!   delta.

use thiserror::Error;

use crate::cfnn::GradientBundle;

#[derive(Debug, Error)]
pub enum RpropError {
    #[error("invalid rprop configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: state has {state} parameters, gradients have {grads}")]
    ShapeMismatch { state: usize, grads: usize },
    #[error("epoch error must be finite, got {0}")]
    NonFiniteError(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpropVariant {
    RpropPlus,
    RpropMinus,
    IRpropPlus,
    IRpropMinus,
}

impl RpropVariant {
    pub fn parse(s: &str) -> Result<Self, RpropError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rprop_plus" | "rprop+" => Ok(Self::RpropPlus),
            "rprop_minus" | "rprop-" => Ok(Self::RpropMinus),
            "irprop_plus" | "irprop+" => Ok(Self::IRpropPlus),
            "irprop_minus" | "irprop-" => Ok(Self::IRpropMinus),
            other => Err(RpropError::InvalidConfig(format!(
                "unknown variant {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::RpropPlus => "rprop_plus",
            Self::RpropMinus => "rprop_minus",
            Self::IRpropPlus => "irprop_plus",
            Self::IRpropMinus => "irprop_minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpropConfig {
    /// Step growth factor on consistent gradient signs (> 1).
    pub eta_plus: f64,
    /// Step shrink factor on a sign flip (in (0, 1)).
    pub eta_minus: f64,
    /// Initial per-parameter step size.
    pub delta0: f64,
    /// Largest allowed step size.
    pub delta_max: f64,
    /// Smallest allowed step size.
    pub delta_min: f64,
    pub variant: RpropVariant,
}

impl Default for RpropConfig {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta0: 0.1,
            delta_max: 50.0,
            delta_min: 1e-6,
            variant: RpropVariant::IRpropMinus,
        }
    }
}

impl RpropConfig {
    pub fn validate(&self) -> Result<(), RpropError> {
        if !(self.eta_minus > 0.0 && self.eta_minus < 1.0 && self.eta_plus > 1.0) {
            return Err(RpropError::InvalidConfig(format!(
                "need 0 < eta_minus < 1 < eta_plus, got eta_minus={}, eta_plus={}",
                self.eta_minus, self.eta_plus
            )));
        }
        if !(self.delta_min > 0.0 && self.delta_min <= self.delta0 && self.delta0 <= self.delta_max)
        {
            return Err(RpropError::InvalidConfig(format!(
                "need 0 < delta_min <= delta0 <= delta_max, got ({}, {}, {})",
                self.delta_min, self.delta0, self.delta_max
            )));
        }
        Ok(())
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct RpropState {
    /// Current step size per parameter, always in `[delta_min, delta_max]`.
    pub delta: Vec<f64>,
    /// Gradient seen at the previous epoch (zeroed on flips by the
    /// backtracking and improved variants).
    pub prev_grad: Vec<f64>,
    /// Step applied at the previous epoch (consumed by backtracking).
    pub prev_step: Vec<f64>,
    /// Epoch error at the previous step call; starts at +inf so the first
    /// epoch of `IRpropPlus` can never revert spuriously.
    pub prev_error: f64,
}

/// Fresh state: every step size at `delta0`, previous gradients and steps
/// at zero, previous error at +inf.
pub fn init_state(cfg: &RpropConfig, n_params: usize) -> RpropState {
    RpropState {
        delta: vec![cfg.delta0; n_params],
        prev_grad: vec![0.0; n_params],
        prev_step: vec![0.0; n_params],
        prev_error: f64::INFINITY,
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One full-batch update. Returns the weight deltas to add to the
/// parameters; `state` is updated in place. A parameter's emitted step
/// magnitude is always either zero or exactly its current step size.
pub fn step(
    state: &mut RpropState,
    grads: &GradientBundle,
    epoch_error: f64,
    cfg: &RpropConfig,
) -> Result<Vec<f64>, RpropError> {
    cfg.validate()?;
    if state.delta.len() != grads.data.len() {
        return Err(RpropError::ShapeMismatch {
            state: state.delta.len(),
            grads: grads.data.len(),
        });
    }
    if !epoch_error.is_finite() {
        return Err(RpropError::NonFiniteError(epoch_error));
    }
    let error_increased = epoch_error > state.prev_error;
    let mut steps = vec![0.0; grads.data.len()];
    for (i, out) in steps.iter_mut().enumerate() {
        let g = grads.data[i];
        let s = sign(state.prev_grad[i]) * sign(g);
        let dw;
        if s > 0.0 {
            state.delta[i] = (state.delta[i] * cfg.eta_plus).min(cfg.delta_max);
            dw = -sign(g) * state.delta[i];
            state.prev_grad[i] = g;
        } else if s < 0.0 {
            state.delta[i] = (state.delta[i] * cfg.eta_minus).max(cfg.delta_min);
            match cfg.variant {
                RpropVariant::RpropPlus => {
                    dw = -state.prev_step[i];
                    state.prev_grad[i] = 0.0;
                }
                RpropVariant::RpropMinus => {
                    dw = -sign(g) * state.delta[i];
                    state.prev_grad[i] = g;
                }
                RpropVariant::IRpropPlus => {
                    dw = if error_increased {
                        -state.prev_step[i]
                    } else {
                        0.0
                    };
                    state.prev_grad[i] = 0.0;
                }
                RpropVariant::IRpropMinus => {
                    dw = -sign(g) * state.delta[i];
                    state.prev_grad[i] = 0.0;
                }
            }
        } else {
            // no previous gradient or a zero gradient: plain sign step,
            // delta unchanged (zero gradient gives a zero step)
            dw = -sign(g) * state.delta[i];
            state.prev_grad[i] = g;
        }
        state.prev_step[i] = dw;
        *out = dw;
    }
    state.prev_error = epoch_error;
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grads(values: &[f64]) -> GradientBundle {
        GradientBundle {
            data: values.to_vec(),
        }
    }

    fn cfg(variant: RpropVariant) -> RpropConfig {
        RpropConfig {
            variant,
            ..RpropConfig::default()
        }
    }

    #[test]
    fn consistent_sign_grows_step_by_eta_plus() {
        let c = cfg(RpropVariant::RpropMinus);
        let mut st = init_state(&c, 1);
        step(&mut st, &grads(&[1.0]), 1.0, &c).unwrap(); // s = 0 row: delta stays 0.1
        assert_eq!(st.delta[0], 0.1);
        step(&mut st, &grads(&[2.0]), 0.9, &c).unwrap(); // same sign
        assert!((st.delta[0] - 0.12).abs() < 1e-15);
    }

    #[test]
    fn sign_flip_shrinks_step_by_eta_minus_and_rprop_plus_backtracks() {
        let c = cfg(RpropVariant::RpropPlus);
        let mut st = init_state(&c, 1);
        let first = step(&mut st, &grads(&[1.0]), 1.0, &c).unwrap();
        assert_eq!(first[0], -0.1);
        let second = step(&mut st, &grads(&[-1.0]), 2.0, &c).unwrap();
        assert!((st.delta[0] - 0.05).abs() < 1e-15);
        // backtracking: exact negation of the previous step
        assert_eq!(second[0], -first[0]);
        assert_eq!(st.prev_grad[0], 0.0);
    }

    #[test]
    fn step_saturates_at_delta_max_and_delta_min() {
        let c = cfg(RpropVariant::RpropMinus);
        let mut st = init_state(&c, 2);
        st.delta = vec![45.0, 2e-6];
        st.prev_grad = vec![1.0, 1.0];
        let s = step(&mut st, &grads(&[0.5, -0.5]), 1.0, &c).unwrap();
        assert_eq!(st.delta[0], 50.0); // min(45 * 1.2, 50)
        assert_eq!(st.delta[1], 1e-6); // max(2e-6 * 0.5, 1e-6)
        assert_eq!(s[0], -50.0);
        assert_eq!(s[1], 1e-6);
    }

    #[test]
    fn zero_gradient_emits_zero_step_and_keeps_delta() {
        for variant in [
            RpropVariant::RpropPlus,
            RpropVariant::RpropMinus,
            RpropVariant::IRpropPlus,
            RpropVariant::IRpropMinus,
        ] {
            let c = cfg(variant);
            let mut st = init_state(&c, 1);
            st.delta = vec![0.3];
            st.prev_grad = vec![0.7];
            let s = step(&mut st, &grads(&[0.0]), 1.0, &c).unwrap();
            assert_eq!(s[0], 0.0);
            assert_eq!(st.delta[0], 0.3);
        }
    }

    #[test]
    fn init_state_examples() {
        let c = RpropConfig::default();
        let mut st = init_state(&c, 4);
        assert!(st.delta.iter().all(|&d| d == c.delta0));
        assert_eq!(st.prev_error, f64::INFINITY);
        // first step: previous gradient is zero, so every parameter takes
        // the s = 0 row with magnitude delta0 against the gradient sign
        let s = step(&mut st, &grads(&[3.0, -2.0, 0.0, 1e-9]), 5.0, &c).unwrap();
        assert_eq!(s, vec![-0.1, 0.1, 0.0, -0.1]);
    }

    #[test]
    fn irprop_plus_reverts_only_when_error_increases() {
        let c = cfg(RpropVariant::IRpropPlus);
        let mut st = init_state(&c, 1);
        let first = step(&mut st, &grads(&[1.0]), 1.0, &c).unwrap();
        // flip with decreasing error: hold
        let hold = step(&mut st, &grads(&[-1.0]), 0.5, &c).unwrap();
        assert_eq!(hold[0], 0.0);
        assert_eq!(st.prev_grad[0], 0.0);
        // build up again, then flip with increasing error: revert
        let again = step(&mut st, &grads(&[1.0]), 0.4, &c).unwrap();
        let revert = step(&mut st, &grads(&[-1.0]), 1.4, &c).unwrap();
        assert_eq!(revert[0], -again[0]);
        let _ = first;
    }

    #[test]
    fn plus_variants_agree_when_error_increases_on_flip() {
        // drive two fresh states through the same history whose flip epoch
        // has increasing error; the emitted steps must match
        let history: &[(f64, f64)] = &[(1.0, 3.0), (0.5, 2.0), (-0.8, 2.5)];
        let mut plus = init_state(&cfg(RpropVariant::RpropPlus), 1);
        let mut iplus = init_state(&cfg(RpropVariant::IRpropPlus), 1);
        for &(g, e) in history {
            let a = step(&mut plus, &grads(&[g]), e, &cfg(RpropVariant::RpropPlus)).unwrap();
            let b = step(&mut iplus, &grads(&[g]), e, &cfg(RpropVariant::IRpropPlus)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gradient_scale_invariance_is_bit_exact() {
        for variant in [
            RpropVariant::RpropPlus,
            RpropVariant::RpropMinus,
            RpropVariant::IRpropMinus,
        ] {
            let c = cfg(variant);
            let mut rng = crate::rng::SplitMix64::new(77);
            let seq: Vec<(Vec<f64>, f64)> = (0..100)
                .map(|_| {
                    let g: Vec<f64> = (0..8).map(|_| rng.next_range(-2.0, 2.0)).collect();
                    (g, rng.next_range(0.1, 10.0))
                })
                .collect();
            let mut st_a = init_state(&c, 8);
            let mut st_b = init_state(&c, 8);
            let mut w_a = [0.0f64; 8];
            let mut w_b = [0.0f64; 8];
            for (g, e) in &seq {
                let scaled: Vec<f64> = g.iter().map(|x| x * 1234.5).collect();
                let sa = step(&mut st_a, &grads(g), *e, &c).unwrap();
                let sb = step(&mut st_b, &grads(&scaled), *e, &c).unwrap();
                for i in 0..8 {
                    w_a[i] += sa[i];
                    w_b[i] += sb[i];
                }
            }
            for i in 0..8 {
                assert_eq!(w_a[i].to_bits(), w_b[i].to_bits(), "variant {variant:?}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let c = RpropConfig::default();
        let mut st = init_state(&c, 3);
        assert!(matches!(
            step(&mut st, &grads(&[1.0, 2.0]), 1.0, &c),
            Err(RpropError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn config_invariants_are_enforced() {
        let c = RpropConfig {
            eta_plus: 0.9,
            ..RpropConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RpropConfig {
            eta_minus: 1.1,
            ..RpropConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RpropConfig {
            delta0: 100.0,
            ..RpropConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(RpropConfig::default().validate().is_ok());
    }

    #[test]
    fn variant_tokens_parse_both_spellings() {
        assert_eq!(
            RpropVariant::parse("rprop+").unwrap(),
            RpropVariant::RpropPlus
        );
        assert_eq!(
            RpropVariant::parse("irprop_minus").unwrap(),
            RpropVariant::IRpropMinus
        );
        assert!(RpropVariant::parse("sgd").is_err());
    }

    proptest! {
        #[test]
        fn deltas_stay_bounded_and_steps_are_zero_or_delta(
            seed in 0u64..500,
            n_epochs in 1usize..60,
        ) {
            let c = RpropConfig::default();
            let mut rng = crate::rng::SplitMix64::new(seed);
            let mut st = init_state(&c, 5);
            for _ in 0..n_epochs {
                let g: Vec<f64> = (0..5)
                    .map(|_| {
                        // mix zeros in to hit the otherwise row
                        if rng.next_unit() < 0.2 { 0.0 } else { rng.next_range(-3.0, 3.0) }
                    })
                    .collect();
                let e = rng.next_range(0.0, 5.0);
                let deltas_before = st.delta.clone();
                let prev_steps = st.prev_step.clone();
                let s = step(&mut st, &grads(&g), e, &c).unwrap();
                for i in 0..5 {
                    prop_assert!(st.delta[i] >= c.delta_min && st.delta[i] <= c.delta_max);
                    // emitted magnitude is 0, the current delta, or (for
                    // backtracking variants) the magnitude of the reverted step
                    let m = s[i].abs();
                    let ok = m == 0.0
                        || (m - st.delta[i]).abs() < 1e-18
                        || (m - prev_steps[i].abs()).abs() < 1e-18;
                    prop_assert!(ok, "step {m}, delta {}, before {}", st.delta[i], deltas_before[i]);
                }
            }
        }

        #[test]
        fn step_is_a_pure_function_of_its_inputs(seed in 0u64..200) {
            let c = cfg(RpropVariant::IRpropMinus);
            let mut rng = crate::rng::SplitMix64::new(seed);
            let g: Vec<f64> = (0..6).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let mut st1 = init_state(&c, 6);
            st1.prev_grad = (0..6).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let mut st2 = st1.clone();
            let a = step(&mut st1, &grads(&g), 2.0, &c).unwrap();
            let b = step(&mut st2, &grads(&g), 2.0, &c).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(st1, st2);
        }
    }
}
