//! Punishment levels of the repeated game: for every player, how low the
//! other players can hold that player's long-run payoff, together with a
//! stationary punishing profile that enforces the reported level.
//!
//! Mean-payoff levels come from exact stage-game analysis.  Recurrence
//! objectives (Büchi, co-Büchi, parity) are valued by iterating nested
//! fixpoints of stage matrix games in floating point with explicit
//! tolerances and iteration caps; the stationary punishing profile
//! extracted from the final stage game is then re-assessed exactly, so the
//! `independent` field is always an exactly enforceable level.  Limsup
//! stage-weight objectives only get a documented estimator.
//!
//! Every computation here is a function of the game alone.  There is no
//! history parameter anywhere: with tail-measurable objectives the level a
//! coalition can force is the same after every finite history, so the same
//! stationary punishment works no matter when punishment starts.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{GameSpec, MixedAction, Objective, PlayerId, ProfileId};
use crate::oneshot::{
    best_pure_reply, correlated_minmax, independent_minmax, MinmaxOptions, OneshotError,
};
use crate::rational::{self, Rational};
use crate::simplex::{solve_matrix_game, LpError};

/// How a threat entry was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreatMethod {
    /// Stage-game matrix solve (mean-payoff objectives).
    OneshotLp,
    /// Two-level greatest/least fixpoint.
    BuchiFixpoint,
    /// Dual two-level fixpoint.
    CobuchiFixpoint,
    /// Priority-indexed fixpoint nest (up to three distinct priorities).
    ParityReduction,
    /// Stationary-punishment estimator without an optimality proof.
    MonteCarloEstimate,
}

impl ThreatMethod {
    pub fn name(self) -> &'static str {
        match self {
            ThreatMethod::OneshotLp => "oneshot-lp",
            ThreatMethod::BuchiFixpoint => "buchi-fixpoint",
            ThreatMethod::CobuchiFixpoint => "cobuchi-fixpoint",
            ThreatMethod::ParityReduction => "parity-reduction",
            ThreatMethod::MonteCarloEstimate => "monte-carlo-estimate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "oneshot-lp" => ThreatMethod::OneshotLp,
            "buchi-fixpoint" => ThreatMethod::BuchiFixpoint,
            "cobuchi-fixpoint" => ThreatMethod::CobuchiFixpoint,
            "parity-reduction" => ThreatMethod::ParityReduction,
            "monte-carlo-estimate" => ThreatMethod::MonteCarloEstimate,
            _ => return None,
        })
    }
}

/// Punishment data for one player.
#[derive(Debug, Clone)]
pub struct ThreatEntry {
    pub player: PlayerId,
    pub method: ThreatMethod,
    /// Level when the punishers may correlate: exact for mean-payoff
    /// objectives, fixpoint approximation within `error_bound` for
    /// recurrence objectives.
    pub correlated: Rational,
    /// Exactly enforceable level: the player's exact best-reply value when
    /// the others play `punishment` forever.  Never below the correlated
    /// level minus `error_bound`.
    pub independent: Rational,
    /// Bound on the approximation error of `correlated`; zero when exact.
    pub error_bound: Rational,
    /// Stationary punishing profile, one mixed action per player; the
    /// punished player's own entry is uniform (their behaviour while
    /// punished does not matter to the others).
    pub punishment: Vec<MixedAction>,
    /// Whether iterative solvers converged within their caps.
    pub converged: bool,
    /// Enclosing interval for the correlated level when not converged.
    pub bracket: Option<(Rational, Rational)>,
    /// Stage matrix games solved (or estimator samples taken).
    pub iterations: usize,
    /// True when the values were replaced by a user-supplied override.
    pub overridden: bool,
}

/// Punishment data for every player.
#[derive(Debug, Clone)]
pub struct PunishmentReport {
    pub entries: Vec<ThreatEntry>,
}

impl PunishmentReport {
    pub fn entry(&self, player: PlayerId) -> &ThreatEntry {
        &self.entries[player]
    }

    /// Replace a player's threat values with a user-supplied level.  The
    /// punishing profile is kept; the entry is marked overridden and its
    /// error bound cleared, since the caller vouches for the level.
    pub fn override_threat(&mut self, player: PlayerId, value: Rational) {
        let entry = &mut self.entries[player];
        entry.correlated = value.clone();
        entry.independent = value;
        entry.error_bound = rational::rat(0);
        entry.bracket = None;
        entry.overridden = true;
    }
}

/// Options for threat computation.
#[derive(Debug, Clone)]
pub struct ThreatOptions {
    /// Fixpoint convergence tolerance.
    pub tol: f64,
    /// Cap on stage matrix games solved per fixpoint.
    pub max_iter: usize,
    /// Options for the stationary product-profile searches.
    pub minmax: MinmaxOptions,
    /// Cap on coalition support sets scanned by the limsup estimator.
    pub limsup_support_cap: usize,
}

impl Default for ThreatOptions {
    fn default() -> Self {
        ThreatOptions {
            tol: 1e-6,
            max_iter: 10_000,
            minmax: MinmaxOptions::default(),
            limsup_support_cap: 4096,
        }
    }
}

/// Errors from threat computation.
#[derive(Debug, Error)]
pub enum PunishError {
    #[error(
        "player {player}'s parity objective has {distinct} distinct priorities; \
         only up to 3 are solved exactly — use the simulation commands for a \
         Monte Carlo estimate and supply a threat override"
    )]
    ParityUnsupported { player: PlayerId, distinct: usize },
    #[error("stage-game solver failed for player {player}: {source}")]
    Oneshot {
        player: PlayerId,
        #[source]
        source: OneshotError,
    },
    #[error("stage matrix game failed for player {player}: {source}")]
    Lp {
        player: PlayerId,
        #[source]
        source: LpError,
    },
}

/// Compute threat entries for every player.
pub fn compute_threats(game: &GameSpec, options: &ThreatOptions) -> Result<PunishmentReport, PunishError> {
    let mut entries = Vec::with_capacity(game.n_players());
    for player in 0..game.n_players() {
        let entry = match &game.objectives[player] {
            Objective::MeanLimsup(w) | Objective::MeanLiminf(w) => {
                mean_payoff_threat(game, player, w, options)?
            }
            Objective::Buchi(target) => {
                recurrence_threat(game, player, ThreatMethod::BuchiFixpoint, target_priorities(game, target, 0, 1), options)?
            }
            Objective::CoBuchi(avoid) => {
                recurrence_threat(game, player, ThreatMethod::CobuchiFixpoint, target_priorities(game, avoid, 1, 2), options)?
            }
            Objective::Parity(priorities) => {
                let distinct: BTreeSet<u32> = priorities.iter().copied().collect();
                if distinct.len() > 3 {
                    return Err(PunishError::ParityUnsupported {
                        player,
                        distinct: distinct.len(),
                    });
                }
                recurrence_threat(game, player, ThreatMethod::ParityReduction, priorities.clone(), options)?
            }
            Objective::LimsupWeight(w) => limsup_threat(game, player, w, options),
        };
        debug_assert!(
            entry.correlated <= &entry.independent + &entry.error_bound,
            "correlated level exceeded enforceable level plus error bound"
        );
        entries.push(entry);
    }
    Ok(PunishmentReport { entries })
}

/// Priorities encoding a profile set: members get `inside`, others `outside`.
fn target_priorities(game: &GameSpec, set: &BTreeSet<ProfileId>, inside: u32, outside: u32) -> Vec<u32> {
    (0..game.profile_count())
        .map(|p| if set.contains(&p) { inside } else { outside })
        .collect()
}

fn mean_payoff_threat(
    game: &GameSpec,
    player: PlayerId,
    weights: &[Rational],
    options: &ThreatOptions,
) -> Result<ThreatEntry, PunishError> {
    let cor = correlated_minmax(game, weights, player)
        .map_err(|source| PunishError::Oneshot { player, source })?;
    let ind = independent_minmax(game, weights, player, &options.minmax)
        .map_err(|source| PunishError::Oneshot { player, source })?;
    let mut punishment = ind.profile;
    punishment[player] = MixedAction::uniform(player, game.n_actions(player));
    Ok(ThreatEntry {
        player,
        method: ThreatMethod::OneshotLp,
        correlated: cor.value,
        independent: ind.value,
        error_bound: rational::rat(0),
        punishment,
        converged: true,
        bracket: None,
        iterations: ind.rounds,
        overridden: false,
    })
}

/// Outcome of a fixpoint iteration, values in [0, 1].
#[derive(Debug, Clone)]
pub struct FixpointOutcome {
    pub value: f64,
    pub converged: bool,
    /// Stage matrix games solved.
    pub solves: usize,
    /// Iterates of the outermost fixpoint variable, for monotonicity audits.
    pub outer_trace: Vec<f64>,
    /// Interval known to contain the exact value when not converged.
    pub bracket: (f64, f64),
}

/// Value of the stage matrix game between `player` (rows, maximising) and
/// the correlated coalition (columns) with per-profile entries `entry`.
fn stage_value(game: &GameSpec, player: PlayerId, entry: &dyn Fn(ProfileId) -> f64) -> Result<f64, LpError> {
    let rows = game.n_actions(player);
    let cols = game.coalition_count(player);
    let mut matrix = vec![vec![0.0f64; cols]; rows];
    for (a, row) in matrix.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = entry(game.compose(player, a, c));
        }
    }
    Ok(solve_matrix_game(&matrix)?.value)
}

/// Probability-that-targets-recur value by the two-level fixpoint: the
/// outer variable (from above) is the value of having to hit the target
/// set once more and then repeat; the inner variable (from below) is the
/// value of reaching the target once with the outer value as the prize.
///
/// Iterates are monotone by construction — outer nonincreasing, inner
/// nondecreasing — and this is asserted at every step, with a slack of the
/// tolerance at the outer level because inner truncation can perturb
/// updates by up to the tolerance.
pub fn buchi_fixpoint(
    game: &GameSpec,
    player: PlayerId,
    target: &BTreeSet<ProfileId>,
    options: &ThreatOptions,
) -> Result<FixpointOutcome, LpError> {
    let mut solves = 0usize;
    let mut outer = 1.0f64;
    let mut outer_trace = vec![outer];
    let mut converged = false;
    while solves < options.max_iter {
        // Inner least fixpoint from zero.
        let mut inner = 0.0f64;
        let inner_value = loop {
            if solves >= options.max_iter {
                break inner;
            }
            solves += 1;
            let v = stage_value(game, player, &|p| if target.contains(&p) { outer } else { inner })?;
            assert!(
                v >= inner - 1e-9,
                "inner fixpoint iterate decreased ({inner} -> {v}); solver bug"
            );
            let done = (v - inner).abs() <= options.tol;
            inner = v;
            if done {
                break inner;
            }
        };
        assert!(
            inner_value <= outer + 2.0 * options.tol,
            "outer fixpoint iterate increased ({outer} -> {inner_value}); solver bug"
        );
        let done = (outer - inner_value).abs() <= options.tol;
        outer = inner_value.min(outer);
        outer_trace.push(outer);
        if done {
            converged = true;
            break;
        }
    }
    Ok(FixpointOutcome {
        value: outer,
        converged,
        solves,
        outer_trace,
        bracket: if converged { (outer - options.tol, outer + options.tol) } else { (0.0, outer) },
    })
}

/// General priority nest for up to three distinct priorities: one fixpoint
/// variable per distinct priority, ordered from the smallest (outermost) to
/// the largest (innermost); even priorities are greatest fixpoints (started
/// at one, nonincreasing), odd ones least fixpoints (started at zero,
/// nondecreasing).
pub fn parity_fixpoint(
    game: &GameSpec,
    player: PlayerId,
    priorities: &[u32],
    options: &ThreatOptions,
) -> Result<FixpointOutcome, LpError> {
    let distinct: Vec<u32> = {
        let set: BTreeSet<u32> = priorities.iter().copied().collect();
        set.into_iter().collect()
    };
    assert!(distinct.len() <= 3, "caller must reject more than 3 distinct priorities");
    let class_of: Vec<usize> = priorities
        .iter()
        .map(|p| distinct.binary_search(p).expect("priority in distinct set"))
        .collect();
    let levels = distinct.len();
    let is_greatest: Vec<bool> = distinct.iter().map(|p| p % 2 == 0).collect();

    struct Nest<'a> {
        game: &'a GameSpec,
        player: PlayerId,
        class_of: &'a [usize],
        is_greatest: &'a [bool],
        tol: f64,
        max_iter: usize,
        solves: usize,
        truncated: bool,
        outer_trace: Vec<f64>,
    }

    impl Nest<'_> {
        fn run(&mut self, level: usize, env: &mut Vec<f64>) -> Result<f64, LpError> {
            if level == env.len() {
                self.solves += 1;
                let class_of = self.class_of;
                let env_now: Vec<f64> = env.clone();
                return stage_value(self.game, self.player, &|p| env_now[class_of[p]]);
            }
            let greatest = self.is_greatest[level];
            let mut x = if greatest { 1.0 } else { 0.0 };
            // Monotonicity slack: the innermost level's update is a single
            // exact-to-float matrix solve; shallower levels see truncated
            // sub-fixpoints that can perturb updates by up to the tolerance.
            let slack = if level + 1 == env.len() { 1e-9 } else { 2.0 * self.tol };
            loop {
                if self.solves >= self.max_iter {
                    self.truncated = true;
                    return Ok(x);
                }
                env[level] = x;
                let v = self.run(level + 1, env)?;
                if greatest {
                    assert!(
                        v <= x + slack,
                        "greatest-fixpoint iterate increased ({x} -> {v}); solver bug"
                    );
                } else {
                    assert!(
                        v >= x - slack,
                        "least-fixpoint iterate decreased ({x} -> {v}); solver bug"
                    );
                }
                let done = (v - x).abs() <= self.tol;
                x = if greatest { v.min(x) } else { v.max(x) };
                if level == 0 {
                    self.outer_trace.push(x);
                }
                if done {
                    return Ok(x);
                }
            }
        }
    }

    let mut nest = Nest {
        game,
        player,
        class_of: &class_of,
        is_greatest: &is_greatest,
        tol: options.tol,
        max_iter: options.max_iter,
        solves: 0,
        truncated: false,
        outer_trace: Vec::new(),
    };
    let mut env = vec![0.0f64; levels];
    let seed = if is_greatest[0] { 1.0 } else { 0.0 };
    let mut outer_trace = vec![seed];
    let value = nest.run(0, &mut env)?;
    outer_trace.append(&mut nest.outer_trace);
    let converged = !nest.truncated;
    let bracket = if converged {
        (value - options.tol, value + options.tol)
    } else if is_greatest[0] {
        (0.0, value)
    } else {
        (value.min(1.0).max(0.0), 1.0)
    };
    Ok(FixpointOutcome {
        value,
        converged,
        solves: nest.solves,
        outer_trace,
        bracket,
    })
}

/// Threat entry for a recurrence objective given its priority encoding.
fn recurrence_threat(
    game: &GameSpec,
    player: PlayerId,
    method: ThreatMethod,
    priorities: Vec<u32>,
    options: &ThreatOptions,
) -> Result<ThreatEntry, PunishError> {
    let distinct: BTreeSet<u32> = priorities.iter().copied().collect();
    if distinct.len() == 1 {
        // Every play has the same recurring minimum priority; the value is
        // decided without solving anything.
        let value = if distinct.first().unwrap() % 2 == 0 {
            rational::rat(1)
        } else {
            rational::rat(0)
        };
        let punishment: Vec<MixedAction> = (0..game.n_players())
            .map(|j| MixedAction::uniform(j, game.n_actions(j)))
            .collect();
        return Ok(ThreatEntry {
            player,
            method,
            correlated: value.clone(),
            independent: value,
            error_bound: rational::rat(0),
            punishment,
            converged: true,
            bracket: None,
            iterations: 0,
        overridden: false,
        });
    }

    let outcome = match method {
        ThreatMethod::BuchiFixpoint => {
            let target: BTreeSet<ProfileId> = priorities
                .iter()
                .enumerate()
                .filter(|(_, p)| **p == 0)
                .map(|(i, _)| i)
                .collect();
            buchi_fixpoint(game, player, &target, options)
        }
        _ => parity_fixpoint(game, player, &priorities, options),
    }
    .map_err(|source| PunishError::Lp { player, source })?;

    // Extract a stationary punishing product profile from the converged
    // stage game, nudged by a tiny one-step preference so the degenerate
    // all-entries-equal matrix still yields a directed answer: the deviator
    // prefers profiles whose priority is even and small, the coalition the
    // opposite.  The extraction is heuristic; its quality is irrelevant to
    // soundness because the enforceable level below is recomputed exactly.
    let distinct_vec: Vec<u32> = distinct.iter().copied().collect();
    let eta = rational::ratio(1, 1 << 20);
    let fix_weights: Vec<Rational> = (0..game.profile_count())
        .map(|p| {
            let class = distinct_vec
                .binary_search(&priorities[p])
                .expect("priority in distinct set");
            // Fixpoint value of the class's variable approximated by the
            // class's contribution — use the overall value for every class
            // plus the preference nudge; only the nudge differentiates.
            let rank = rational::rat(1 + class as i64);
            let nudge = if priorities[p] % 2 == 0 {
                &eta / &rank
            } else {
                -(&eta / &rank)
            };
            rational::from_f64(outcome.value) + nudge
        })
        .collect();
    let extraction = independent_minmax(game, &fix_weights, player, &options.minmax)
        .map_err(|source| PunishError::Oneshot { player, source })?;
    let mut punishment = extraction.profile;
    punishment[player] = MixedAction::uniform(player, game.n_actions(player));

    let objective = &game.objectives[player];
    let independent = stationary_recurrence_best_reply(game, objective, player, &punishment);
    let correlated = rational::from_f64(outcome.value);
    let error_bound = rational::from_f64(options.tol);
    let bracket = if outcome.converged {
        None
    } else {
        Some((
            rational::from_f64(outcome.bracket.0),
            rational::from_f64(outcome.bracket.1),
        ))
    };
    // Enforceability sanity: a stationary best reply meets or beats the
    // true level, which the fixpoint approximates from within its bound.
    assert!(
        correlated <= &independent + &error_bound || !outcome.converged,
        "fixpoint value exceeded an exactly enforceable level; solver bug"
    );
    Ok(ThreatEntry {
        player,
        method,
        correlated,
        independent,
        error_bound,
        punishment,
        converged: outcome.converged,
        bracket,
        iterations: outcome.solves,
        overridden: false,
    })
}

/// Exact best-reply value for a recurrence or limsup objective against a
/// fixed stationary profile of the other players.
///
/// Against a stationary profile, the deviating player only controls which
/// of their own actions occur infinitely often; any nonempty recurring set
/// of own actions combines with the full support of the others.  The value
/// is therefore a maximum over the player's actions of a support-determined
/// quantity, and it is exact:
/// - targets-recur: 1 when some own action completes a supported target
///   profile (play it forever; it recurs almost surely), else 0;
/// - bad-set-finite: 1 when some own action never completes a supported
///   bad profile, else 0;
/// - parity: 1 when some own action's supported minimum priority is even;
/// - limsup weight: the largest weight on any supported profile.
pub fn stationary_recurrence_best_reply(
    game: &GameSpec,
    objective: &Objective,
    player: PlayerId,
    profile: &[MixedAction],
) -> Rational {
    let coalition_prob = |p: ProfileId| -> bool {
        let actions = game.decode(p);
        actions
            .iter()
            .enumerate()
            .all(|(k, &a)| k == player || profile[k].prob(a) != &rational::rat(0))
    };
    match objective {
        Objective::MeanLimsup(w) | Objective::MeanLiminf(w) => {
            best_pure_reply(game, w, profile, player).1
        }
        Objective::LimsupWeight(w) => {
            let mut best: Option<Rational> = None;
            for p in 0..game.profile_count() {
                if coalition_prob(p) {
                    let v = w[p].clone();
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            if v > b {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
            }
            best.expect("stationary profiles support at least one profile")
        }
        Objective::Buchi(target) => {
            let hit = target.iter().any(|&p| coalition_prob(p));
            if hit {
                rational::rat(1)
            } else {
                rational::rat(0)
            }
        }
        Objective::CoBuchi(avoid) => {
            let safe_action = (0..game.n_actions(player)).any(|a| {
                (0..game.profile_count()).all(|p| {
                    game.decode(p)[player] != a || !coalition_prob(p) || !avoid.contains(&p)
                })
            });
            if safe_action {
                rational::rat(1)
            } else {
                rational::rat(0)
            }
        }
        Objective::Parity(priorities) => {
            let even_action = (0..game.n_actions(player)).any(|a| {
                let min_priority = (0..game.profile_count())
                    .filter(|&p| game.decode(p)[player] == a && coalition_prob(p))
                    .map(|p| priorities[p])
                    .min()
                    .expect("stationary profiles support at least one profile");
                min_priority % 2 == 0
            });
            if even_action {
                rational::rat(1)
            } else {
                rational::rat(0)
            }
        }
    }
}

/// Estimator for limsup stage-weight threats: scan stationary coalition
/// supports (exhaustively when the count fits the cap, otherwise the pure
/// supports plus seeded random ones) and keep the profile minimising the
/// exact best-reply value.  The reported level is exact **for the scanned
/// stationary class**; no optimality over history-dependent punishments is
/// claimed, which is why construction against such entries requires an
/// explicit threat override, and why the bracket stretches down to the
/// smallest stage weight.
fn limsup_threat(game: &GameSpec, player: PlayerId, weights: &[Rational], options: &ThreatOptions) -> ThreatEntry {
    let opponents: Vec<PlayerId> = (0..game.n_players()).filter(|&j| j != player).collect();
    let support_counts: Vec<usize> = opponents
        .iter()
        .map(|&j| (1usize << game.n_actions(j)) - 1)
        .collect();
    let total: usize = support_counts.iter().product();
    let exhaustive = total <= options.limsup_support_cap;

    // Best reply against a coalition support assignment: the deviator picks
    // any action, so the value is the maximum weight over profiles whose
    // coalition coordinates are supported.
    let value_of = |masks: &[usize]| -> Rational {
        let mut best: Option<Rational> = None;
        for p in 0..game.profile_count() {
            let actions = game.decode(p);
            let supported = opponents
                .iter()
                .enumerate()
                .all(|(oi, &j)| masks[oi] & (1 << actions[j]) != 0);
            if supported {
                let v = weights[p].clone();
                best = Some(match best {
                    None => v,
                    Some(b) => if v > b { v } else { b },
                });
            }
        }
        best.expect("nonempty supports cover at least one profile")
    };

    let mut best_masks: Option<Vec<usize>> = None;
    let mut best_value: Option<Rational> = None;
    let mut samples = 0usize;
    let mut consider = |masks: Vec<usize>, samples: &mut usize| {
        *samples += 1;
        let v = value_of(&masks);
        let better = match &best_value {
            None => true,
            Some(b) => &v < b,
        };
        if better {
            best_value = Some(v);
            best_masks = Some(masks);
        }
    };

    if exhaustive {
        let mut masks: Vec<usize> = vec![1; opponents.len()];
        loop {
            consider(masks.clone(), &mut samples);
            let mut k = 0;
            loop {
                if k == opponents.len() {
                    break;
                }
                masks[k] += 1;
                if masks[k] <= support_counts[k] {
                    break;
                }
                masks[k] = 1;
                k += 1;
            }
            if k == opponents.len() {
                break;
            }
        }
    } else {
        use rand::Rng;
        use rand::SeedableRng;
        // All-singleton supports first (pure punishments), then random sets.
        for combo in 0..opponents.iter().map(|&j| game.n_actions(j)).product::<usize>().min(options.limsup_support_cap / 2) {
            let mut rem = combo;
            let mut masks = Vec::with_capacity(opponents.len());
            for &j in &opponents {
                let n = game.n_actions(j);
                masks.push(1usize << (rem % n));
                rem /= n;
            }
            consider(masks, &mut samples);
        }
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(options.minmax.seed ^ 0x11D5);
        while samples < options.limsup_support_cap {
            let masks: Vec<usize> = opponents
                .iter()
                .map(|&j| rng.gen_range(1..=(1usize << game.n_actions(j)) - 1))
                .collect();
            consider(masks, &mut samples);
        }
    }

    let best_masks = best_masks.expect("at least one support scanned");
    let value = best_value.expect("at least one support scanned");
    let mut punishment: Vec<MixedAction> = Vec::with_capacity(game.n_players());
    for j in 0..game.n_players() {
        if j == player {
            punishment.push(MixedAction::uniform(j, game.n_actions(j)));
        } else {
            let oi = opponents.iter().position(|&o| o == j).expect("opponent");
            let mask = best_masks[oi];
            let members: Vec<usize> = (0..game.n_actions(j)).filter(|a| mask & (1 << a) != 0).collect();
            let share = rational::ratio(1, members.len() as i64);
            let mut probs = vec![rational::rat(0); game.n_actions(j)];
            for a in members {
                probs[a] = share.clone();
            }
            punishment.push(MixedAction::new(j, probs).expect("uniform support distribution"));
        }
    }
    let floor = (0..game.profile_count())
        .map(|p| weights[p].clone())
        .min()
        .expect("games have at least one profile");
    let error_bound = &value - &floor;
    ThreatEntry {
        player,
        method: ThreatMethod::MonteCarloEstimate,
        correlated: value.clone(),
        independent: value.clone(),
        error_bound,
        punishment,
        converged: exhaustive,
        bracket: Some((floor, value)),
        iterations: samples,
        overridden: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    fn two_player(objectives: Vec<Objective>) -> GameSpec {
        GameSpec::new(
            vec!["row".into(), "col".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            objectives,
        )
        .unwrap()
    }

    fn dilemma() -> GameSpec {
        GameSpec::new(
            vec!["row".into(), "col".into()],
            vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
            vec![
                Objective::MeanLimsup(vec![rat(3), rat(0), rat(4), rat(1)]),
                Objective::MeanLimsup(vec![rat(3), rat(4), rat(0), rat(1)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn dilemma_threats_are_mutual_defection() {
        let game = dilemma();
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        for player in 0..2 {
            let entry = report.entry(player);
            assert_eq!(entry.method, ThreatMethod::OneshotLp);
            assert_eq!(entry.correlated, rat(1));
            assert_eq!(entry.independent, rat(1));
            assert_eq!(entry.error_bound, rat(0));
            let opponent = 1 - player;
            assert_eq!(entry.punishment[opponent].as_pure(), Some(1));
            // Punished player's own slot is uniform by convention.
            assert_eq!(entry.punishment[player].prob(0), &ratio(1, 2));
        }
    }

    #[test]
    fn mean_threat_equals_exact_best_reply_against_punishment() {
        let game = dilemma();
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        for player in 0..2 {
            let entry = report.entry(player);
            let weights = game.objectives[player].weights().unwrap();
            let (_, br) = best_pure_reply(&game, weights, &entry.punishment, player);
            assert_eq!(br, entry.independent);
        }
    }

    #[test]
    fn single_action_opponent_threat_is_own_maximum() {
        let game = GameSpec::new(
            vec!["solo".into(), "fixed".into()],
            vec![vec!["a".into(), "b".into()], vec!["only".into()]],
            vec![
                Objective::MeanLimsup(vec![rat(2), rat(5)]),
                Objective::MeanLimsup(vec![rat(0), rat(0)]),
            ],
        )
        .unwrap();
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        assert_eq!(report.entry(0).correlated, rat(5));
        assert_eq!(report.entry(0).independent, rat(5));
    }

    #[test]
    fn controlling_the_target_alone_gives_value_one() {
        // Target: every profile where player 0 plays H.
        let target: BTreeSet<ProfileId> = [0, 1].into_iter().collect();
        let game = two_player(vec![
            Objective::Buchi(target),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert_eq!(entry.method, ThreatMethod::BuchiFixpoint);
        assert!((rational::to_f64(&entry.correlated) - 1.0).abs() <= 1e-4);
        assert_eq!(entry.independent, rat(1));
        assert!(entry.converged);
    }

    #[test]
    fn coalition_avoidable_target_gives_value_zero() {
        // Target {(H,H)}: the opponent freezes on T and the target is dead.
        let target: BTreeSet<ProfileId> = [0].into_iter().collect();
        let game = two_player(vec![
            Objective::Buchi(target),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert!(rational::to_f64(&entry.correlated) <= 1e-4);
        assert_eq!(entry.independent, rat(0));
        // The punishing opponent avoids H outright.
        assert_eq!(entry.punishment[1].as_pure(), Some(1));
    }

    #[test]
    fn matching_target_needs_matching_and_converges_to_one() {
        // Target: the two matching profiles. Whatever the opponent does,
        // matching recurs with probability one under a uniform reply, so
        // the punishment level is 1.
        let target: BTreeSet<ProfileId> = [0, 3].into_iter().collect();
        let game = two_player(vec![
            Objective::Buchi(target),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert!(rational::to_f64(&entry.correlated) >= 1.0 - 1e-4);
        assert_eq!(entry.independent, rat(1));
    }

    #[test]
    fn cobuchi_boundary_cases() {
        // No profile is bad: value 1 without iteration.
        let game = two_player(vec![
            Objective::CoBuchi(BTreeSet::new()),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        assert_eq!(report.entry(0).correlated, rat(1));
        assert_eq!(report.entry(0).independent, rat(1));

        // Every profile is bad: value 0.
        let all: BTreeSet<ProfileId> = (0..4).collect();
        let game = two_player(vec![
            Objective::CoBuchi(all),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        assert_eq!(report.entry(0).correlated, rat(0));
        assert_eq!(report.entry(0).independent, rat(0));
    }

    #[test]
    fn two_priority_parity_matches_the_dedicated_buchi_loop() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x9A11);
        let options = ThreatOptions::default();
        for instance in 0..10 {
            let game = two_player(vec![
                Objective::MeanLimsup(vec![rat(0); 4]),
                Objective::MeanLimsup(vec![rat(0); 4]),
            ]);
            let mut target = BTreeSet::new();
            for p in 0..4 {
                if rng.gen_bool(0.5) {
                    target.insert(p);
                }
            }
            if target.is_empty() {
                target.insert(rng.gen_range(0..4));
            }
            let direct = buchi_fixpoint(&game, 0, &target, &options).unwrap();
            let encoded: Vec<u32> = (0..4).map(|p| if target.contains(&p) { 0 } else { 1 }).collect();
            let nested = parity_fixpoint(&game, 0, &encoded, &options).unwrap();
            assert!(
                (direct.value - nested.value).abs() <= 1e-6,
                "instance {instance}: dedicated loop {} vs nest {}",
                direct.value,
                nested.value
            );
        }
    }

    #[test]
    fn three_priority_parity_with_forced_even_minimum() {
        // Priorities: (H,H)=0, (H,T)=2, (T,H)=1, (T,T)=1. Playing H keeps
        // the supported minimum even whatever the opponent does.
        let game = two_player(vec![
            Objective::Parity(vec![0, 2, 1, 1]),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert_eq!(entry.method, ThreatMethod::ParityReduction);
        assert!(rational::to_f64(&entry.correlated) >= 1.0 - 1e-4);
        assert_eq!(entry.independent, rat(1));
    }

    #[test]
    fn three_priority_parity_with_forced_odd_minimum() {
        // Priorities: (H,H)=0, (H,T)=1, (T,H)=2, (T,T)=1. The opponent
        // freezes on T; both of the player's actions then sit on priority 1.
        let game = two_player(vec![
            Objective::Parity(vec![0, 1, 2, 1]),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert!(rational::to_f64(&entry.correlated) <= 1e-4);
        assert_eq!(entry.independent, rat(0));
    }

    #[test]
    fn four_distinct_priorities_are_rejected() {
        let game = two_player(vec![
            Objective::Parity(vec![0, 1, 2, 3]),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let err = compute_threats(&game, &ThreatOptions::default()).unwrap_err();
        assert!(matches!(err, PunishError::ParityUnsupported { player: 0, distinct: 4 }));
    }

    #[test]
    fn constant_priority_is_decided_without_iteration() {
        let game = two_player(vec![
            Objective::Parity(vec![2, 2, 2, 2]),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert_eq!(entry.correlated, rat(1));
        assert_eq!(entry.iterations, 0);
    }

    #[test]
    fn limsup_threat_scans_supports_exhaustively() {
        let game = two_player(vec![
            Objective::LimsupWeight(vec![rat(5), rat(1), rat(4), rat(2)]),
            Objective::MeanLimsup(vec![rat(0); 4]),
        ]);
        let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let entry = report.entry(0);
        assert_eq!(entry.method, ThreatMethod::MonteCarloEstimate);
        // Opponent support {T}: the deviator's best weight is max(1, 2) = 2.
        assert_eq!(entry.correlated, rat(2));
        assert_eq!(entry.punishment[1].as_pure(), Some(1));
        assert!(entry.converged);
        assert_eq!(entry.bracket.clone().unwrap().0, rat(1));
    }

    #[test]
    fn override_replaces_values_and_marks_the_entry() {
        let game = dilemma();
        let mut report = compute_threats(&game, &ThreatOptions::default()).unwrap();
        report.override_threat(0, ratio(3, 2));
        let entry = report.entry(0);
        assert_eq!(entry.correlated, ratio(3, 2));
        assert_eq!(entry.independent, ratio(3, 2));
        assert!(entry.overridden);
        assert_eq!(entry.error_bound, rat(0));
    }

    #[test]
    fn threat_computation_is_history_free_and_deterministic() {
        // The API takes no history anywhere; recomputation is bit-identical.
        let target: BTreeSet<ProfileId> = [0, 3].into_iter().collect();
        let game = two_player(vec![
            Objective::Buchi(target),
            Objective::MeanLimsup(vec![rat(1), rat(0), rat(0), rat(1)]),
        ]);
        let a = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let b = compute_threats(&game, &ThreatOptions::default()).unwrap();
        for player in 0..2 {
            assert_eq!(a.entry(player).correlated, b.entry(player).correlated);
            assert_eq!(a.entry(player).independent, b.entry(player).independent);
            for j in 0..2 {
                assert_eq!(
                    a.entry(player).punishment[j].probs(),
                    b.entry(player).punishment[j].probs()
                );
            }
        }
    }

    #[test]
    fn invariant_correlated_at_most_independent_plus_error() {
        let target: BTreeSet<ProfileId> = [0, 3].into_iter().collect();
        let games = vec![
            dilemma(),
            two_player(vec![
                Objective::Buchi(target.clone()),
                Objective::CoBuchi(target),
            ]),
            two_player(vec![
                Objective::Parity(vec![0, 2, 1, 1]),
                Objective::LimsupWeight(vec![rat(5), rat(1), rat(4), rat(2)]),
            ]),
        ];
        for game in games {
            let report = compute_threats(&game, &ThreatOptions::default()).unwrap();
            for entry in &report.entries {
                assert!(
                    entry.correlated <= &entry.independent + &entry.error_bound,
                    "player {} violated the level ordering",
                    entry.player
                );
            }
        }
    }

    #[test]
    fn stationary_best_reply_formulas_cover_all_kinds() {
        let game = dilemma();
        let profile = vec![
            MixedAction::uniform(0, 2),
            MixedAction::pure(1, 1, 2), // opponent defects
        ];
        // Mean: best reply against D is D, worth 1.
        let mean = stationary_recurrence_best_reply(&game, &game.objectives[0], 0, &profile);
        assert_eq!(mean, rat(1));

        // Targets-recur: only (C,C) is a target but the opponent never
        // plays C, so the value is 0; with target (C,D) it is 1.
        let dead: BTreeSet<ProfileId> = [0].into_iter().collect();
        assert_eq!(
            stationary_recurrence_best_reply(&game, &Objective::Buchi(dead), 0, &profile),
            rat(0)
        );
        let alive: BTreeSet<ProfileId> = [1].into_iter().collect();
        assert_eq!(
            stationary_recurrence_best_reply(&game, &Objective::Buchi(alive), 0, &profile),
            rat(1)
        );

        // Bad-set-finite: bad = {(D,D)}; playing C avoids it forever.
        let bad: BTreeSet<ProfileId> = [3].into_iter().collect();
        assert_eq!(
            stationary_recurrence_best_reply(&game, &Objective::CoBuchi(bad), 0, &profile),
            rat(1)
        );
        // Bad everywhere in the opponent's support: no escape.
        let bad_all: BTreeSet<ProfileId> = [1, 3].into_iter().collect();
        assert_eq!(
            stationary_recurrence_best_reply(&game, &Objective::CoBuchi(bad_all), 0, &profile),
            rat(0)
        );

        // Limsup weight: supported profiles are (C,D) and (D,D).
        let w = vec![rat(9), rat(2), rat(9), rat(6)];
        assert_eq!(
            stationary_recurrence_best_reply(&game, &Objective::LimsupWeight(w), 0, &profile),
            rat(6)
        );
    }
}
