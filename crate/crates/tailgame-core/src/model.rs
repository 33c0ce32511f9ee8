//! Game descriptions and exact evaluation of ultimately periodic plays.
//!
//! A [`GameSpec`] lists the players, each player's finite action set, and one
//! [`Objective`] per player. A *profile* is a joint choice of one action per
//! player; profiles are indexed densely ([`ProfileId`]) in lexicographic
//! order of the per-player action indices, player 0 most significant.
//!
//! Plays that matter computationally are *lassos*: a finite prefix followed
//! by a finite cycle repeated forever ([`LassoPlay`]). Every supported
//! objective is tail-measurable, so the prefix never influences the value:
//!
//! * mean-payoff (limsup or liminf flavor) — the average weight over the
//!   cycle; the two flavors agree on every lasso because the stage averages
//!   of an ultimately periodic play converge;
//! * limsup-weight — the maximum weight occurring on the cycle;
//! * Büchi — 1 when the cycle meets the target set, else 0;
//! * co-Büchi — 1 when the cycle avoids the bad set entirely, else 0;
//! * parity — 1 when the minimum priority on the cycle is even, else 0.
//!
//! # Example
//!
//! ```
//! use tailgame_core::model::{GameSpec, LassoPlay, Objective};
//! use tailgame_core::rational::rat;
//!
//! // One player, actions {a, b}, weights w(a) = 0, w(b) = 2.
//! let game = GameSpec::new(
//!     vec!["solo".into()],
//!     vec![vec!["a".into(), "b".into()]],
//!     vec![Objective::MeanLimsup(vec![rat(0), rat(2)])],
//! )
//! .unwrap();
//! let play = LassoPlay::new(vec![], game.encode_labels(&[&["a"], &["b"]]).unwrap());
//! // Cycle [a, b] averages (0 + 2) / 2 = 1.
//! assert_eq!(game.objectives[0].eval_lasso(&play).unwrap(), rat(1));
//! ```

use crate::rational::{self, rat, Rational};
use num::{One, Signed, Zero};
use std::collections::BTreeSet;
use thiserror::Error;

/// Index of a player in the game's player list.
pub type PlayerId = usize;

/// Index of an action within one player's action list.
pub type ActionId = usize;

/// Dense index of a joint action profile (player 0 most significant).
pub type ProfileId = usize;

/// Index of a state in a strategy machine.
pub type StateId = usize;

/// Problems with a game description or a play evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("game must have at least one player")]
    NoPlayers,
    #[error("player {0} has an empty action set")]
    EmptyActionSet(PlayerId),
    #[error("expected one objective per player ({players} players, {objectives} objectives)")]
    ObjectiveCountMismatch { players: usize, objectives: usize },
    #[error("objective for player {player} covers {covered} profiles, game has {expected}")]
    ObjectiveCoverage {
        player: PlayerId,
        covered: usize,
        expected: usize,
    },
    #[error("profile id {0} out of range")]
    ProfileOutOfRange(ProfileId),
    #[error("unknown player name '{0}'")]
    UnknownPlayer(String),
    #[error("unknown action '{action}' for player {player}")]
    UnknownAction { player: PlayerId, action: String },
    #[error("lasso play must have a nonempty cycle")]
    EmptyCycle,
    #[error("mixed action for player {player} has {got} entries, expected {expected}")]
    MixedActionArity {
        player: PlayerId,
        got: usize,
        expected: usize,
    },
    #[error("mixed action for player {0} has a negative probability")]
    NegativeProbability(PlayerId),
    #[error("mixed action for player {player} sums to {sum}, not 1 (tolerance 1e-12)")]
    ProbabilitySum { player: PlayerId, sum: String },
}

/// A probability distribution over one player's actions, stored exactly.
///
/// Invariant: entries are nonnegative rationals summing to exactly 1.
/// Double-valued inputs are accepted when they sum to 1 within `1e-12`; they
/// are converted exactly (every finite double is rational) and renormalized
/// so the invariant holds exactly afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedAction {
    player: PlayerId,
    probs: Vec<Rational>,
}

impl MixedAction {
    /// Builds a distribution from exact probabilities; the sum must be 1.
    pub fn new(player: PlayerId, probs: Vec<Rational>) -> Result<Self, ModelError> {
        if probs.iter().any(|p| p.is_negative()) {
            return Err(ModelError::NegativeProbability(player));
        }
        let total = rational::sum(probs.iter());
        if !total.is_one() {
            return Err(ModelError::ProbabilitySum {
                player,
                sum: rational::format(&total),
            });
        }
        Ok(MixedAction { player, probs })
    }

    /// Builds a distribution from doubles, requiring the sum within 1e-12 of
    /// one, then renormalizing exactly.
    pub fn from_f64s(player: PlayerId, probs: &[f64]) -> Result<Self, ModelError> {
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(ModelError::NegativeProbability(player));
        }
        let exact: Vec<Rational> = probs.iter().map(|&p| rational::from_f64(p)).collect();
        let total = rational::sum(exact.iter());
        let drift = (rational::to_f64(&total) - 1.0).abs();
        if drift > 1e-12 {
            return Err(ModelError::ProbabilitySum {
                player,
                sum: rational::format(&total),
            });
        }
        let probs = exact.into_iter().map(|p| p / total.clone()).collect();
        Ok(MixedAction { player, probs })
    }

    /// Point mass on a single action.
    pub fn pure(player: PlayerId, action: ActionId, n_actions: usize) -> Self {
        let mut probs = vec![Rational::zero(); n_actions];
        probs[action] = Rational::one();
        MixedAction { player, probs }
    }

    /// Uniform distribution over `n_actions` actions.
    pub fn uniform(player: PlayerId, n_actions: usize) -> Self {
        let p = Rational::new(1.into(), (n_actions as i64).into());
        MixedAction {
            player,
            probs: vec![p; n_actions],
        }
    }

    /// The player this distribution belongs to.
    pub fn player(&self) -> PlayerId {
        self.player
    }

    /// Exact probability of `action`.
    pub fn prob(&self, action: ActionId) -> &Rational {
        &self.probs[action]
    }

    /// All probabilities, indexed by action.
    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    /// Number of actions covered.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// True when the distribution covers zero actions (never valid in a game).
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// The action carrying all mass, if the distribution is a point mass.
    pub fn as_pure(&self) -> Option<ActionId> {
        let mut found = None;
        for (a, p) in self.probs.iter().enumerate() {
            if !p.is_zero() {
                if found.is_some() {
                    return None;
                }
                found = Some(a);
            }
        }
        found
    }

    /// Actions with strictly positive probability.
    pub fn support(&self) -> Vec<ActionId> {
        (0..self.probs.len())
            .filter(|&a| !self.probs[a].is_zero())
            .collect()
    }
}

/// Per-player scoring rule for infinite plays.
///
/// Weight-based kinds carry one exact weight per profile; recurrence kinds
/// carry the profile sets (or priorities) that define them. All kinds are
/// tail-measurable by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Objective {
    /// Limit superior of the stage-weight running averages.
    MeanLimsup(Vec<Rational>),
    /// Limit inferior of the stage-weight running averages.
    MeanLiminf(Vec<Rational>),
    /// Limit superior of the raw stage weights (max weight seen infinitely often).
    LimsupWeight(Vec<Rational>),
    /// 1 when some target profile occurs infinitely often.
    Buchi(BTreeSet<ProfileId>),
    /// 1 when every bad profile occurs only finitely often.
    CoBuchi(BTreeSet<ProfileId>),
    /// 1 when the minimum priority among profiles seen infinitely often is even.
    Parity(Vec<u32>),
}

impl Objective {
    /// Short lowercase name used in files and reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::MeanLimsup(_) => "mean-limsup",
            Objective::MeanLiminf(_) => "mean-liminf",
            Objective::LimsupWeight(_) => "limsup-weight",
            Objective::Buchi(_) => "buchi",
            Objective::CoBuchi(_) => "cobuchi",
            Objective::Parity(_) => "parity",
        }
    }

    /// Stage weights when the objective is weight-based.
    pub fn weights(&self) -> Option<&[Rational]> {
        match self {
            Objective::MeanLimsup(w) | Objective::MeanLiminf(w) | Objective::LimsupWeight(w) => {
                Some(w)
            }
            _ => None,
        }
    }

    /// True for the two long-run-average kinds.
    pub fn is_mean_payoff(&self) -> bool {
        matches!(self, Objective::MeanLimsup(_) | Objective::MeanLiminf(_))
    }

    /// Upper bound on the objective's absolute value over all plays.
    ///
    /// Weight kinds are bounded by the largest absolute weight; recurrence
    /// kinds take values in {0, 1}.
    pub fn sup_norm(&self) -> Rational {
        match self.weights() {
            Some(w) => rational::max(w.iter().map(|x| x.abs())).unwrap_or_else(Rational::zero),
            None => Rational::one(),
        }
    }

    /// Exact value of an ultimately periodic play.
    ///
    /// Only the cycle matters: all supported objectives ignore any finite
    /// prefix, which is checked by [`Objective::prefix_invariant`].
    pub fn eval_lasso(&self, play: &LassoPlay) -> Result<Rational, ModelError> {
        if play.cycle.is_empty() {
            return Err(ModelError::EmptyCycle);
        }
        let check = |w: &[Rational]| -> Result<(), ModelError> {
            for &p in play.prefix.iter().chain(play.cycle.iter()) {
                if p >= w.len() {
                    return Err(ModelError::ProfileOutOfRange(p));
                }
            }
            Ok(())
        };
        match self {
            Objective::MeanLimsup(w) | Objective::MeanLiminf(w) => {
                check(w)?;
                let total = rational::sum(play.cycle.iter().map(|&p| &w[p]));
                Ok(total / rat(play.cycle.len() as i64))
            }
            Objective::LimsupWeight(w) => {
                check(w)?;
                Ok(rational::max(play.cycle.iter().map(|&p| w[p].clone())).unwrap())
            }
            Objective::Buchi(target) => {
                let hit = play.cycle.iter().any(|p| target.contains(p));
                Ok(if hit { Rational::one() } else { Rational::zero() })
            }
            Objective::CoBuchi(bad) => {
                let hit = play.cycle.iter().any(|p| bad.contains(p));
                Ok(if hit { Rational::zero() } else { Rational::one() })
            }
            Objective::Parity(priority) => {
                check_parity_bounds(priority, play)?;
                let min = play.cycle.iter().map(|&p| priority[p]).min().unwrap();
                Ok(if min % 2 == 0 {
                    Rational::one()
                } else {
                    Rational::zero()
                })
            }
        }
    }

    /// True when replacing the play's prefix by `alt_prefix` leaves the value
    /// unchanged — which this module guarantees for every kind.
    pub fn prefix_invariant(&self, play: &LassoPlay, alt_prefix: &[ProfileId]) -> bool {
        let altered = LassoPlay::new(alt_prefix.to_vec(), play.cycle.clone());
        match (self.eval_lasso(play), self.eval_lasso(&altered)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }

    /// Value of a recurrence objective given the exact set of profiles that
    /// occur infinitely often. Mean-payoff kinds have no set-determined value
    /// and return `None`.
    pub fn eval_recurring_set(&self, recurring: &BTreeSet<ProfileId>) -> Option<Rational> {
        match self {
            Objective::MeanLimsup(_) | Objective::MeanLiminf(_) => None,
            Objective::LimsupWeight(w) => {
                rational::max(recurring.iter().map(|&p| w[p].clone()))
            }
            Objective::Buchi(target) => Some(bool_rat(!recurring.is_disjoint(target))),
            Objective::CoBuchi(bad) => Some(bool_rat(recurring.is_disjoint(bad))),
            Objective::Parity(priority) => {
                let min = recurring.iter().map(|&p| priority[p]).min()?;
                Some(bool_rat(min % 2 == 0))
            }
        }
    }

    fn coverage(&self) -> Option<usize> {
        match self {
            Objective::MeanLimsup(w) | Objective::MeanLiminf(w) | Objective::LimsupWeight(w) => {
                Some(w.len())
            }
            Objective::Parity(p) => Some(p.len()),
            _ => None,
        }
    }
}

fn bool_rat(b: bool) -> Rational {
    if b {
        Rational::one()
    } else {
        Rational::zero()
    }
}

fn check_parity_bounds(priority: &[u32], play: &LassoPlay) -> Result<(), ModelError> {
    for &p in play.prefix.iter().chain(play.cycle.iter()) {
        if p >= priority.len() {
            return Err(ModelError::ProfileOutOfRange(p));
        }
    }
    Ok(())
}

/// An ultimately periodic play: `prefix` once, then `cycle` forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoPlay {
    pub prefix: Vec<ProfileId>,
    pub cycle: Vec<ProfileId>,
}

impl LassoPlay {
    pub fn new(prefix: Vec<ProfileId>, cycle: Vec<ProfileId>) -> Self {
        LassoPlay { prefix, cycle }
    }

    /// The profile prescribed at stage `t` (0-based).
    pub fn profile_at(&self, t: usize) -> ProfileId {
        if t < self.prefix.len() {
            self.prefix[t]
        } else {
            self.cycle[(t - self.prefix.len()) % self.cycle.len()]
        }
    }
}

/// A finite record of realized profiles, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History(pub Vec<ProfileId>);

impl History {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A complete game: players, action sets, and one objective per player.
#[derive(Debug, Clone)]
pub struct GameSpec {
    /// Player names, fixing the player order used everywhere.
    pub players: Vec<String>,
    /// Action labels per player, fixing each player's action order.
    pub actions: Vec<Vec<String>>,
    /// One objective per player.
    pub objectives: Vec<Objective>,
}

impl GameSpec {
    /// Validates and builds a game description.
    pub fn new(
        players: Vec<String>,
        actions: Vec<Vec<String>>,
        objectives: Vec<Objective>,
    ) -> Result<Self, ModelError> {
        if players.is_empty() {
            return Err(ModelError::NoPlayers);
        }
        if players.len() != objectives.len() {
            return Err(ModelError::ObjectiveCountMismatch {
                players: players.len(),
                objectives: objectives.len(),
            });
        }
        for (i, acts) in actions.iter().enumerate() {
            if acts.is_empty() {
                return Err(ModelError::EmptyActionSet(i));
            }
        }
        let game = GameSpec {
            players,
            actions,
            objectives,
        };
        let n = game.profile_count();
        for (i, obj) in game.objectives.iter().enumerate() {
            if let Some(covered) = obj.coverage() {
                if covered != n {
                    return Err(ModelError::ObjectiveCoverage {
                        player: i,
                        covered,
                        expected: n,
                    });
                }
            }
            match obj {
                Objective::Buchi(set) | Objective::CoBuchi(set) => {
                    if let Some(&p) = set.iter().rev().next() {
                        if p >= n {
                            return Err(ModelError::ProfileOutOfRange(p));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(game)
    }

    /// Number of players.
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    /// Number of actions available to `player`.
    pub fn n_actions(&self, player: PlayerId) -> usize {
        self.actions[player].len()
    }

    /// Total number of joint action profiles.
    pub fn profile_count(&self) -> usize {
        self.actions.iter().map(|a| a.len()).product()
    }

    /// Encodes per-player action indices into a dense profile id.
    pub fn encode(&self, actions: &[ActionId]) -> ProfileId {
        debug_assert_eq!(actions.len(), self.n_players());
        let mut id = 0;
        for (i, &a) in actions.iter().enumerate() {
            debug_assert!(a < self.n_actions(i));
            id = id * self.n_actions(i) + a;
        }
        id
    }

    /// Decodes a profile id into per-player action indices.
    pub fn decode(&self, profile: ProfileId) -> Vec<ActionId> {
        let mut rem = profile;
        let mut out = vec![0; self.n_players()];
        for i in (0..self.n_players()).rev() {
            let n = self.n_actions(i);
            out[i] = rem % n;
            rem /= n;
        }
        out
    }

    /// The action `player` takes in `profile`.
    pub fn action_of(&self, profile: ProfileId, player: PlayerId) -> ActionId {
        let mut rem = profile;
        for i in ((player + 1)..self.n_players()).rev() {
            rem /= self.n_actions(i);
        }
        rem % self.n_actions(player)
    }

    /// Looks up a player index by name.
    pub fn player_index(&self, name: &str) -> Result<PlayerId, ModelError> {
        self.players
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| ModelError::UnknownPlayer(name.to_string()))
    }

    /// Looks up an action index by label for a given player.
    pub fn action_index(&self, player: PlayerId, label: &str) -> Result<ActionId, ModelError> {
        self.actions[player]
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| ModelError::UnknownAction {
                player,
                action: label.to_string(),
            })
    }

    /// Encodes a sequence of labeled profiles, e.g. `[["C","C"],["D","D"]]`.
    pub fn encode_labels(&self, rows: &[&[&str]]) -> Result<Vec<ProfileId>, ModelError> {
        rows.iter()
            .map(|row| {
                let mut actions = Vec::with_capacity(self.n_players());
                for (i, label) in row.iter().enumerate() {
                    actions.push(self.action_index(i, label)?);
                }
                Ok(self.encode(&actions))
            })
            .collect()
    }

    /// Renders a profile as comma-joined action labels, e.g. `C,D`.
    pub fn profile_label(&self, profile: ProfileId) -> String {
        self.decode(profile)
            .iter()
            .enumerate()
            .map(|(i, &a)| self.actions[i][a].clone())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Number of joint actions available to the coalition of everyone except
    /// `player` (1 when the game has a single player: the empty joint action).
    pub fn coalition_count(&self, player: PlayerId) -> usize {
        (0..self.n_players())
            .filter(|&j| j != player)
            .map(|j| self.n_actions(j))
            .product()
    }

    /// Combines `player`'s action with a coalition joint-action index into a
    /// full profile id. The coalition index ranges over the remaining players
    /// in player order, first such player most significant.
    pub fn compose(&self, player: PlayerId, own: ActionId, coalition: usize) -> ProfileId {
        let mut rem = coalition;
        let others: Vec<PlayerId> = (0..self.n_players()).filter(|&j| j != player).collect();
        let mut actions = vec![0; self.n_players()];
        for &j in others.iter().rev() {
            let n = self.n_actions(j);
            actions[j] = rem % n;
            rem /= n;
        }
        actions[player] = own;
        self.encode(&actions)
    }

    /// Splits a profile into `player`'s action and the coalition index.
    pub fn split(&self, player: PlayerId, profile: ProfileId) -> (ActionId, usize) {
        let actions = self.decode(profile);
        let mut coalition = 0;
        for j in 0..self.n_players() {
            if j != player {
                coalition = coalition * self.n_actions(j) + actions[j];
            }
        }
        (actions[player], coalition)
    }

    /// Exact probability of `profile` when every player mixes independently
    /// according to `outputs` (one distribution per player, in order).
    pub fn profile_probability(&self, outputs: &[MixedAction], profile: ProfileId) -> Rational {
        let actions = self.decode(profile);
        let mut p = Rational::one();
        for (i, &a) in actions.iter().enumerate() {
            p *= outputs[i].prob(a).clone();
            if p.is_zero() {
                break;
            }
        }
        p
    }

    /// Largest absolute objective value over all plays, across players.
    pub fn max_sup_norm(&self) -> Rational {
        rational::max(self.objectives.iter().map(|o| o.sup_norm()))
            .unwrap_or_else(Rational::zero)
    }

    /// Validates a per-player output vector against this game's action sets.
    pub fn validate_outputs(&self, outputs: &[MixedAction]) -> Result<(), ModelError> {
        if outputs.len() != self.n_players() {
            return Err(ModelError::ObjectiveCountMismatch {
                players: self.n_players(),
                objectives: outputs.len(),
            });
        }
        for (i, out) in outputs.iter().enumerate() {
            if out.player() != i || out.len() != self.n_actions(i) {
                return Err(ModelError::MixedActionArity {
                    player: i,
                    got: out.len(),
                    expected: self.n_actions(i),
                });
            }
        }
        Ok(())
    }
}
