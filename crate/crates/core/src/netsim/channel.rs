use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetsimError;

/// Stationary loss probability `P / (P + R)` of the two-state chain.
pub fn steady_state_loss(p: f64, r: f64) -> Result<f64, NetsimError> {
    check_probability("P", p)?;
    check_probability("R", r)?;
    if p + r == 0.0 {
        return Err(NetsimError::DegenerateChain);
    }
    Ok(p / (p + r))
}

fn check_probability(name: &'static str, value: f64) -> Result<(), NetsimError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NetsimError::InvalidProbability { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossModel {
    /// Simplified Gilbert-Elliott: Good drops nothing, Bad drops everything.
    GilbertElliott { p: f64, r: f64 },
    /// Independent per-packet loss.
    Uniform { rate: f64 },
}

impl LossModel {
    /// Transition probabilities `(P, R)`. Uniform loss is the memoryless
    /// chain with `P + R = 1`.
    pub fn transition_probabilities(&self) -> (f64, f64) {
        match *self {
            LossModel::GilbertElliott { p, r } => (p, r),
            LossModel::Uniform { rate } => (rate, 1.0 - rate),
        }
    }

    pub fn loss_rate(&self) -> Result<f64, NetsimError> {
        match *self {
            LossModel::Uniform { rate } => {
                check_probability("uniform_rate", rate)?;
                Ok(rate)
            }
            LossModel::GilbertElliott { p, r } => steady_state_loss(p, r),
        }
    }

    /// Lag-1 autocorrelation `1 - P - R` of the drop indicator.
    pub fn autocorrelation(&self) -> f64 {
        let (p, r) = self.transition_probabilities();
        1.0 - p - r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Good,
    Bad,
}

/// Two-state Markov loss process. Each call to [`step`](Self::step)
/// corresponds to one datagram transmission attempt.
#[derive(Debug, Clone)]
pub struct GilbertElliottChannel {
    p: f64,
    r: f64,
    state: ChannelState,
    rng: ChaCha8Rng,
}

impl GilbertElliottChannel {
    /// Starts in a state drawn from the stationary distribution (Good when
    /// the chain is degenerate).
    pub fn new(model: LossModel, seed: u64) -> Result<Self, NetsimError> {
        let (p, r) = model.transition_probabilities();
        check_probability("P", p)?;
        check_probability("R", r)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = if p + r > 0.0 && rng.random::<f64>() < p / (p + r) {
            ChannelState::Bad
        } else {
            ChannelState::Good
        };
        Ok(Self { p, r, state, rng })
    }

    pub fn with_state(p: f64, r: f64, state: ChannelState, seed: u64) -> Result<Self, NetsimError> {
        check_probability("P", p)?;
        check_probability("R", r)?;
        Ok(Self {
            p,
            r,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    /// Reports whether the current datagram is dropped, then advances the
    /// chain with one random draw.
    pub fn step(&mut self) -> bool {
        let drop = self.state == ChannelState::Bad;
        let u: f64 = self.rng.random();
        self.state = match self.state {
            ChannelState::Good if u < self.p => ChannelState::Bad,
            ChannelState::Bad if u < self.r => ChannelState::Good,
            s => s,
        };
        drop
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_matches_formula() {
        // Preset parameters and their stationary loss.
        let rows = [
            (3.0e-3, 128.0e-3, 0.02290),
            (4.0e-3, 81.0e-3, 0.04706),
            (2.5e-3, 43.1e-3, 0.05482),
            (0.6e-3, 7.7e-3, 0.07229),
            (9.0e-3, 82.0e-3, 0.09890),
        ];
        for (p, r, pi) in rows {
            let got = steady_state_loss(p, r).unwrap();
            assert!((got - pi).abs() <= 1e-5, "({p}, {r}) -> {got}");
        }
    }

    #[test]
    fn steady_state_edges() {
        assert_eq!(steady_state_loss(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(steady_state_loss(0.0, 0.0), Err(NetsimError::DegenerateChain));
        assert!(matches!(
            steady_state_loss(1.5, 0.1),
            Err(NetsimError::InvalidProbability { name: "P", .. })
        ));
    }

    #[test]
    fn absorbing_good_never_drops() {
        let mut ch = GilbertElliottChannel::with_state(0.0, 0.5, ChannelState::Good, 3).unwrap();
        assert!((0..100_000).all(|_| !ch.step()));
        let mut ch = GilbertElliottChannel::new(LossModel::Uniform { rate: 0.0 }, 3).unwrap();
        assert!((0..100_000).all(|_| !ch.step()));
    }

    #[test]
    fn certain_transitions_alternate() {
        let mut ch = GilbertElliottChannel::with_state(1.0, 1.0, ChannelState::Good, 11).unwrap();
        let drops: Vec<bool> = (0..6).map(|_| ch.step()).collect();
        assert_eq!(drops, [false, true, false, true, false, true]);
    }

    #[test]
    fn absorbing_bad_after_first_step() {
        let mut ch = GilbertElliottChannel::with_state(1.0, 0.0, ChannelState::Good, 1).unwrap();
        ch.step();
        assert!((0..1000).all(|_| ch.step()));
    }

    #[test]
    fn uniform_is_memoryless_chain() {
        let m = LossModel::Uniform { rate: 0.12 };
        assert_eq!(m.transition_probabilities(), (0.12, 0.88));
        assert!(m.autocorrelation().abs() < 1e-12);
        assert!((m.loss_rate().unwrap() - 0.12).abs() < 1e-12);
    }

    #[test]
    fn uniform_empirical_rate_within_binomial_bound() {
        // For P + R = 1 the drops are i.i.d., so the binomial standard
        // error is exact.
        let n = 1_000_000;
        for (seed, rate) in [(1u64, 0.12), (2, 0.2), (3, 0.0734)] {
            let mut ch = GilbertElliottChannel::new(LossModel::Uniform { rate }, seed).unwrap();
            let drops = (0..n).filter(|_| ch.step()).count();
            let frac = drops as f64 / n as f64;
            let se = (rate * (1.0 - rate) / n as f64).sqrt();
            assert!((frac - rate).abs() < 4.0 * se, "seed {seed}: {frac} vs {rate}");
        }
    }

    #[test]
    fn bursty_rate_within_markov_bound() {
        // Drops are correlated with lag-one coefficient 1 - P - R, which
        // inflates the variance of the mean by (1 + l) / (1 - l).
        let n = 1_000_000;
        for (seed, p, r) in [(5u64, 9.0e-3, 82.0e-3), (6, 2.5e-3, 43.1e-3)] {
            let m = LossModel::GilbertElliott { p, r };
            let pi = m.loss_rate().unwrap();
            let l = m.autocorrelation();
            let mut ch = GilbertElliottChannel::new(m, seed).unwrap();
            let frac = (0..n).filter(|_| ch.step()).count() as f64 / n as f64;
            let se = (pi * (1.0 - pi) / n as f64 * (1.0 + l) / (1.0 - l)).sqrt();
            assert!((frac - pi).abs() < 4.0 * se, "seed {seed}: {frac} vs {pi}");
        }
    }

    #[test]
    fn lag_one_autocorrelation() {
        let m = LossModel::GilbertElliott { p: 0.05, r: 0.25 };
        let mut ch = GilbertElliottChannel::new(m, 8).unwrap();
        let xs: Vec<f64> = (0..400_000).map(|_| f64::from(u8::from(ch.step()))).collect();
        let rho = crate::metrics::pearson(&xs[..xs.len() - 1], &xs[1..]).unwrap();
        assert!((rho - m.autocorrelation()).abs() < 0.01, "{rho}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let m = LossModel::GilbertElliott { p: 9.0e-3, r: 82.0e-3 };
        let mut a = GilbertElliottChannel::new(m, 99).unwrap();
        let mut b = GilbertElliottChannel::new(m, 99).unwrap();
        assert!((0..10_000).all(|_| a.step() == b.step()));
    }
}
