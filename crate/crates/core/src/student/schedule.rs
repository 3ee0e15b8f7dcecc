use serde::{Deserialize, Serialize};

/// Linear annealing `ε(t) = init + (final - init) · min(1, t / decay_steps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_init: f64,
    pub eps_final: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, t: u64) -> f64 {
        if t >= self.decay_steps {
            return self.eps_final;
        }
        let frac = t as f64 / self.decay_steps as f64;
        // Convex-combination form is exact at the midpoint.
        self.eps_init * (1.0 - frac) + self.eps_final * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = EpsilonSchedule {
            eps_init: 1.0,
            eps_final: 0.01,
            decay_steps: 500_000,
        };
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(250_000), (1.0 + 0.01) / 2.0);
        assert_eq!(s.value(500_000), 0.01);
        assert_eq!(s.value(9_000_000), 0.01);
    }

    #[test]
    fn non_increasing() {
        let s = EpsilonSchedule {
            eps_init: 1.0,
            eps_final: 0.05,
            decay_steps: 97,
        };
        for t in 0..200 {
            assert!(s.value(t + 1) <= s.value(t));
        }
    }
}
