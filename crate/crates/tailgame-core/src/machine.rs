//! Finite-memory strategy machines.
//!
//! A [`FiniteMemoryProfile`] is a Mealy machine describing how *all* players
//! jointly play: each state prescribes one mixed action per player, and the
//! realized joint profile drives a deterministic state transition. Running
//! the machine on a history therefore needs no randomness — the history
//! already fixes the walk — and the prescription after a history is just the
//! output at the reached state.
//!
//! Machines double as opponents: the verifier treats "everyone except player
//! `i` follows the machine" as a Markov decision process over machine states,
//! which is what makes best responses exactly computable.

use crate::model::{GameSpec, History, MixedAction, ModelError, PlayerId, ProfileId, StateId};
use thiserror::Error;

/// Problems with a machine description.
#[derive(Debug, Error)]
pub enum MachineError {
    #[error("machine must have at least one state")]
    NoStates,
    #[error("initial state {0} out of range")]
    BadInitial(StateId),
    #[error("state {state}: transition row covers {got} profiles, game has {expected}")]
    TransitionArity {
        state: StateId,
        got: usize,
        expected: usize,
    },
    #[error("state {state}: transition on profile {profile} targets missing state {target}")]
    BadTarget {
        state: StateId,
        profile: ProfileId,
        target: StateId,
    },
    #[error("state {state}: {source}")]
    BadOutput { state: StateId, source: ModelError },
    #[error("duplicate state name '{0}'")]
    DuplicateState(String),
}

/// A joint finite-memory strategy: per-state mixed outputs for every player
/// plus a deterministic transition on realized profiles.
#[derive(Debug, Clone)]
pub struct FiniteMemoryProfile {
    /// Human-readable state names (unique).
    pub names: Vec<String>,
    /// Start state.
    pub initial: StateId,
    /// `transition[state][profile]` = successor state.
    pub transition: Vec<Vec<StateId>>,
    /// `output[state][player]` = that player's prescribed mixed action.
    pub output: Vec<Vec<MixedAction>>,
}

impl FiniteMemoryProfile {
    /// Validates the machine against a game's action sets.
    pub fn validate(&self, game: &GameSpec) -> Result<(), MachineError> {
        let n_states = self.names.len();
        if n_states == 0 {
            return Err(MachineError::NoStates);
        }
        if self.initial >= n_states {
            return Err(MachineError::BadInitial(self.initial));
        }
        {
            let mut seen = std::collections::BTreeSet::new();
            for name in &self.names {
                if !seen.insert(name) {
                    return Err(MachineError::DuplicateState(name.clone()));
                }
            }
        }
        let n_profiles = game.profile_count();
        for s in 0..n_states {
            if self.transition[s].len() != n_profiles {
                return Err(MachineError::TransitionArity {
                    state: s,
                    got: self.transition[s].len(),
                    expected: n_profiles,
                });
            }
            for (p, &t) in self.transition[s].iter().enumerate() {
                if t >= n_states {
                    return Err(MachineError::BadTarget {
                        state: s,
                        profile: p,
                        target: t,
                    });
                }
            }
            game.validate_outputs(&self.output[s])
                .map_err(|source| MachineError::BadOutput { state: s, source })?;
        }
        Ok(())
    }

    /// Number of states.
    pub fn n_states(&self) -> usize {
        self.names.len()
    }

    /// The state reached after observing `history` from the start state.
    pub fn state_after(&self, history: &History) -> StateId {
        let mut s = self.initial;
        for &p in &history.0 {
            s = self.transition[s][p];
        }
        s
    }

    /// The per-player prescriptions after observing `history`.
    pub fn run(&self, history: &History) -> &[MixedAction] {
        &self.output[self.state_after(history)]
    }

    /// True when every output in every state is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.output
            .iter()
            .flatten()
            .all(|m| m.as_pure().is_some())
    }

    /// Players whose action in `profile` has probability zero at `state` —
    /// i.e. whose participation in this profile proves a deviation.
    pub fn support_violators(
        &self,
        game: &GameSpec,
        state: StateId,
        profile: ProfileId,
    ) -> Vec<PlayerId> {
        let actions = game.decode(profile);
        (0..game.n_players())
            .filter(|&j| {
                use num::Zero;
                self.output[state][j].prob(actions[j]).is_zero()
            })
            .collect()
    }

    /// Single-state machine that plays `outputs` forever.
    pub fn stationary(game: &GameSpec, outputs: Vec<MixedAction>) -> Self {
        FiniteMemoryProfile {
            names: vec!["stay".to_string()],
            initial: 0,
            transition: vec![vec![0; game.profile_count()]],
            output: vec![outputs],
        }
    }
}
