//! Ground-truth certification of strategy machines: exact best-response
//! values, exact on-path values, deviation-gain certificates, seeded
//! simulation, and empirical blame-accuracy testing.
//!
//! Verification is the trust anchor of the crate: constructions elsewhere
//! may rely on floating-point estimates, but everything here that feeds a
//! certificate is computed in exact rational arithmetic, so an accepted
//! certificate is a proof, not an approximation.
//!
//! # Why machine states suffice against a finite-memory profile
//!
//! A deviating player faces opponents whose future behaviour depends on the
//! history only through the machine state, and the deviator's own objective
//! is tail-measurable, so the value obtainable from any history onward is a
//! function of the machine state alone.  The deviation problem is therefore
//! exactly the finite decision process whose states are machine states —
//! richer history dependence cannot help, because any history-dependent
//! strategy induces a distribution over machine-state trajectories that
//! some state-based strategy reproduces.  [`best_response_value`] solves
//! that decision process exactly; the claim itself is exercised in the
//! acceptance suite by brute-forcing depth-two history-dependent deviations
//! on small instances and comparing against the state-based optimum.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;
use thiserror::Error;

use crate::equilibrium::{
    wilson_interval, BuildMethod, EquilibriumMachine, MonitorSpec, StateClass,
};
use crate::machine::FiniteMemoryProfile;
use crate::mdp::{
    analyze_chain, max_reachability, maximal_end_components, optimal_average_reward, Mdp,
    SparseRow,
};
use crate::model::{GameSpec, History, LassoPlay, Objective, PlayerId, ProfileId, StateId};
use crate::punish::PunishmentReport;
use crate::rational::{self, Rational};

/// Slack added to the claimed `ε` when judging a certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("player {player}'s {kind} objective is not supported by {operation}")]
    ObjectiveUnsupported {
        operation: &'static str,
        player: PlayerId,
        kind: &'static str,
    },
    #[error("machine failed validation: {0}")]
    MachineInvalid(String),
    #[error("machine lacks a punishment state for player {0}, so blame cannot be enforced")]
    NoPunishmentState(PlayerId),
}

/// The deviation decision process for `player`: states are machine states,
/// actions are the player's stage actions, transitions mix over the other
/// players' prescribed actions, and rewards are expected stage weights
/// (zero for recurrence objectives, which are scored by the product
/// construction in [`best_response_value`] instead).
fn deviation_mdp(game: &GameSpec, machine: &FiniteMemoryProfile, player: PlayerId) -> Mdp {
    let n_states = machine.n_states();
    let weights = game.objectives[player].weights();
    let mut transitions = Vec::with_capacity(n_states);
    let mut rewards = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let mut state_rows = Vec::with_capacity(game.n_actions(player));
        let mut state_rewards = Vec::with_capacity(game.n_actions(player));
        for a in 0..game.n_actions(player) {
            let mut row: BTreeMap<StateId, Rational> = BTreeMap::new();
            let mut reward = Rational::zero();
            for p in 0..game.profile_count() {
                if game.action_of(p, player) != a {
                    continue;
                }
                let q = coalition_probability(game, &machine.output[s], player, p);
                if q.is_zero() {
                    continue;
                }
                if let Some(w) = weights {
                    reward += &q * &w[p];
                }
                *row.entry(machine.transition[s][p]).or_insert_with(Rational::zero) += q;
            }
            state_rows.push(row.into_iter().collect::<SparseRow>());
            state_rewards.push(reward);
        }
        transitions.push(state_rows);
        rewards.push(state_rewards);
    }
    Mdp {
        transitions,
        rewards,
    }
}

/// Probability that the players other than `player` jointly produce their
/// coordinates of `profile` under `outputs`.
fn coalition_probability(
    game: &GameSpec,
    outputs: &[crate::model::MixedAction],
    player: PlayerId,
    profile: ProfileId,
) -> Rational {
    let actions = game.decode(profile);
    let mut q = Rational::from_integer(1.into());
    for j in 0..game.n_players() {
        if j == player {
            continue;
        }
        q *= outputs[j].prob(actions[j]);
        if q.is_zero() {
            break;
        }
    }
    q
}

/// Exact optimal value `player` can secure against everyone else following
/// the machine, over all deviation strategies of any memory.
///
/// Mean-payoff objectives solve the multichain average-reward problem on
/// the deviation process exactly — when the process happens to be unichain
/// the limsup and liminf criteria coincide, and in general the optimal
/// stationary policy realizes its average as an almost-sure limit, so the
/// returned value is the optimum under both flavours.  Recurrence
/// objectives (including parity with any number of priorities) go through
/// an exact product construction: states are extended with the priority of
/// the profile just realized, winning end components are found per even
/// priority, and an exact reachability value to their union is returned.
pub fn best_response_value(
    game: &GameSpec,
    em: &EquilibriumMachine,
    player: PlayerId,
) -> Result<Rational, VerifyError> {
    match &game.objectives[player] {
        Objective::MeanLimsup(_) | Objective::MeanLiminf(_) => {
            let mdp = deviation_mdp(game, &em.machine, player);
            if let Some(gain) = deterministic_mean_gain(&mdp, em.machine.initial) {
                return Ok(gain);
            }
            let optimum = optimal_average_reward(&mdp);
            Ok(optimum.gain[em.machine.initial].clone())
        }
        Objective::Buchi(target) => {
            let priorities: Vec<u32> = (0..game.profile_count())
                .map(|p| if target.contains(&p) { 0 } else { 1 })
                .collect();
            parity_best_response(game, em, player, &priorities)
        }
        Objective::CoBuchi(avoid) => {
            let priorities: Vec<u32> = (0..game.profile_count())
                .map(|p| if avoid.contains(&p) { 1 } else { 2 })
                .collect();
            parity_best_response(game, em, player, &priorities)
        }
        Objective::Parity(priorities) => parity_best_response(game, em, player, priorities),
        Objective::LimsupWeight(_) => Err(VerifyError::ObjectiveUnsupported {
            operation: "best-response computation",
            player,
            kind: game.objectives[player].kind_name(),
        }),
    }
}

/// Exact probability with which `player` can make the minimal recurring
/// priority even, against the machine.
///
/// Product construction: a product state is (machine state, priority rank
/// of the profile just realized), with a sentinel rank for the start.  For
/// each even priority `k`, actions that can realize any priority below `k`
/// are banned, the end components of the surviving process are computed,
/// and those containing a rank-`k` state are winning: inside such a
/// component the player can stay forever, realize `k` infinitely often and
/// nothing smaller.  Every winning strategy conversely settles into such a
/// component, so the optimum equals the exact maximal probability of
/// reaching one.
fn parity_best_response(
    game: &GameSpec,
    em: &EquilibriumMachine,
    player: PlayerId,
    priorities: &[u32],
) -> Result<Rational, VerifyError> {
    let machine = &em.machine;
    let distinct: Vec<u32> = {
        let set: BTreeSet<u32> = priorities.iter().copied().collect();
        set.into_iter().collect()
    };
    let rank_of = |p: ProfileId| -> usize {
        distinct
            .binary_search(&priorities[p])
            .expect("priority present")
    };
    let flags = distinct.len() + 1; // +1 sentinel: nothing realized yet
    let sentinel = distinct.len();
    let n_states = machine.n_states() * flags;
    let product_id = |s: StateId, f: usize| s * flags + f;

    let mut transitions = Vec::with_capacity(n_states);
    let mut rewards = Vec::with_capacity(n_states);
    for s in 0..machine.n_states() {
        for _f in 0..flags {
            let mut rows = Vec::with_capacity(game.n_actions(player));
            for a in 0..game.n_actions(player) {
                let mut row: BTreeMap<StateId, Rational> = BTreeMap::new();
                for p in 0..game.profile_count() {
                    if game.action_of(p, player) != a {
                        continue;
                    }
                    let q = coalition_probability(game, &machine.output[s], player, p);
                    if q.is_zero() {
                        continue;
                    }
                    let t = product_id(machine.transition[s][p], rank_of(p));
                    *row.entry(t).or_insert_with(Rational::zero) += q;
                }
                rows.push(row.into_iter().collect::<SparseRow>());
            }
            rewards.push(vec![Rational::zero(); rows.len()]);
            transitions.push(rows);
        }
    }
    let product = Mdp {
        transitions,
        rewards,
    };

    let mut winning: BTreeSet<StateId> = BTreeSet::new();
    for (rank, &priority) in distinct.iter().enumerate() {
        if priority % 2 != 0 {
            continue;
        }
        // Ban actions that can realize any priority below `priority`; the
        // restriction depends only on the machine state and the action.
        let allowed = |product_state: StateId, action: usize| -> bool {
            let s = product_state / flags;
            (0..game.profile_count()).all(|p| {
                game.action_of(p, player) != action
                    || priorities[p] >= priority
                    || coalition_probability(game, &machine.output[s], player, p).is_zero()
            })
        };
        let Some((sub, original)) = restrict_actions(&product, &allowed) else {
            continue;
        };
        let all_sub: BTreeSet<StateId> = (0..sub.n_states()).collect();
        for component in maximal_end_components(&sub, &all_sub) {
            let has_rank_state = component
                .states
                .iter()
                .any(|&t| original[t] % flags == rank);
            if has_rank_state {
                winning.extend(component.states.iter().map(|&t| original[t]));
            }
        }
    }

    if winning.is_empty() {
        return Ok(Rational::zero());
    }
    let values = max_reachability(&product, &winning);
    Ok(values[product_id(machine.initial, sentinel)].clone())
}

/// Keep only actions passing `allowed`, then iteratively drop states left
/// without actions and actions leading into dropped states.  Returns the
/// surviving process and the map from its state ids back to the original
/// ones, or `None` when nothing survives.
fn restrict_actions(
    mdp: &Mdp,
    allowed: &dyn Fn(StateId, usize) -> bool,
) -> Option<(Mdp, Vec<StateId>)> {
    let n = mdp.n_states();
    let mut alive = vec![true; n];
    let mut kept: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..mdp.n_actions(s)).filter(|&a| allowed(s, a)).collect())
        .collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !alive[s] {
                continue;
            }
            kept[s].retain(|&a| {
                mdp.transitions[s][a]
                    .iter()
                    .all(|&(t, _)| alive[t])
            });
            if kept[s].is_empty() {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let original: Vec<StateId> = (0..n).filter(|&s| alive[s]).collect();
    if original.is_empty() {
        return None;
    }
    let index: BTreeMap<StateId, StateId> = original
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect();
    let transitions: Vec<Vec<SparseRow>> = original
        .iter()
        .map(|&s| {
            kept[s]
                .iter()
                .map(|&a| {
                    mdp.transitions[s][a]
                        .iter()
                        .map(|&(t, ref q)| (index[&t], q.clone()))
                        .collect()
                })
                .collect()
        })
        .collect();
    let rewards: Vec<Vec<Rational>> = original
        .iter()
        .map(|&s| kept[s].iter().map(|&a| mdp.rewards[s][a].clone()).collect())
        .collect();
    Some((
        Mdp {
            transitions,
            rewards,
        },
        original,
    ))
}

/// Exact value `player` receives when everyone follows the machine: the
/// induced play is a finite Markov chain over machine states, each of its
/// recurrent classes determines the objective's value exactly — long-run
/// average via stationary distributions for mean-payoff kinds, the
/// recurring profile set for recurrence and limsup kinds — and the result
/// is the absorption-weighted mix over classes reachable from the start.
pub fn on_path_value(
    game: &GameSpec,
    em: &EquilibriumMachine,
    player: PlayerId,
) -> Result<Rational, VerifyError> {
    let machine = &em.machine;
    if let Some(lasso) = pure_on_path_lasso(game, machine) {
        // Every reachable state prescribes a pure profile, so the play is a
        // single eventually-periodic trajectory and the objective evaluates
        // on it directly — no chain analysis needed.
        return Ok(game.objectives[player]
            .eval_lasso(&lasso)
            .expect("profiles come from the same game"));
    }
    let rows: Vec<SparseRow> = (0..machine.n_states())
        .map(|s| {
            let mut row: BTreeMap<StateId, Rational> = BTreeMap::new();
            for p in 0..game.profile_count() {
                let q = game.profile_probability(&machine.output[s], p);
                if q.is_zero() {
                    continue;
                }
                *row.entry(machine.transition[s][p]).or_insert_with(Rational::zero) += q;
            }
            row.into_iter().collect()
        })
        .collect();
    let chain = analyze_chain(&rows);
    let objective = &game.objectives[player];
    let class_values: Vec<Rational> = if objective.is_mean_payoff() {
        let w = objective.weights().expect("mean kind");
        let rewards: Vec<Rational> = (0..machine.n_states())
            .map(|s| {
                let mut r = Rational::zero();
                for p in 0..game.profile_count() {
                    let q = game.profile_probability(&machine.output[s], p);
                    if !q.is_zero() {
                        r += &q * &w[p];
                    }
                }
                r
            })
            .collect();
        chain.class_gains(&rewards)
    } else {
        chain
            .recurrent_classes
            .iter()
            .map(|class| {
                let mut recurring: BTreeSet<ProfileId> = BTreeSet::new();
                for &s in class {
                    for p in 0..game.profile_count() {
                        if !game.profile_probability(&machine.output[s], p).is_zero() {
                            recurring.insert(p);
                        }
                    }
                }
                objective
                    .eval_recurring_set(&recurring)
                    .expect("set-determined kind")
            })
            .collect()
    };
    let mut value = Rational::zero();
    for (k, v) in class_values.iter().enumerate() {
        let weight = &chain.absorption[machine.initial][k];
        if !weight.is_zero() {
            value += weight * v;
        }
    }
    Ok(value)
}

/// The eventually-periodic play the machine produces when every state it
/// can reach prescribes a pure profile, or `None` as soon as a reachable
/// state mixes.  Grim-trigger machines and their monitored variants always
/// qualify, which lets both their on-path value and (via
/// [`deterministic_mean_gain`]) their best responses skip the general
/// linear-algebra solvers.
fn pure_on_path_lasso(game: &GameSpec, machine: &FiniteMemoryProfile) -> Option<LassoPlay> {
    let mut first_seen: Vec<Option<usize>> = vec![None; machine.n_states()];
    let mut profiles: Vec<ProfileId> = Vec::new();
    let mut state = machine.initial;
    loop {
        if let Some(k) = first_seen[state] {
            let cycle = profiles.split_off(k);
            return Some(LassoPlay::new(profiles, cycle));
        }
        first_seen[state] = Some(profiles.len());
        let mut actions = Vec::with_capacity(game.n_players());
        for output in &machine.output[state] {
            actions.push(output.as_pure()?);
        }
        let p = game.encode(&actions);
        profiles.push(p);
        state = machine.transition[state][p];
    }
}

/// Exact optimal long-run average reward from `initial` when every action
/// of the process has a single successor, or `None` when some reachable
/// action mixes.  A deterministic process is optimized by walking to the
/// reachable cycle of maximal mean and looping there, so the value is the
/// maximal cycle mean of the reachable subgraph, found by Karp's method:
/// with `d(k, v)` the best total reward over `k`-edge walks from `initial`
/// to `v`, the answer is `max_v min_k (d(n, v) − d(k, v)) / (n − k)`.
/// For machines whose reachable outputs are pure this replaces cubic
/// policy iteration with an `O(states² · actions)` computation, which is
/// what keeps certification of long target cycles fast.
fn deterministic_mean_gain(mdp: &Mdp, initial: StateId) -> Option<Rational> {
    use num::One;
    let successor = |s: StateId, a: usize| -> Option<StateId> {
        let row = &mdp.transitions[s][a];
        if row.len() == 1 && row[0].1.is_one() {
            Some(row[0].0)
        } else {
            None
        }
    };
    // Restrict to the states reachable from `initial`; every vertex of the
    // restricted graph then lies on a walk from the source, as Karp's
    // recurrence requires.
    let mut reachable = vec![false; mdp.n_states()];
    let mut stack = vec![initial];
    reachable[initial] = true;
    while let Some(s) = stack.pop() {
        for a in 0..mdp.transitions[s].len() {
            let t = successor(s, a)?;
            if !reachable[t] {
                reachable[t] = true;
                stack.push(t);
            }
        }
    }
    let states: Vec<StateId> = (0..mdp.n_states()).filter(|&s| reachable[s]).collect();
    let index: BTreeMap<StateId, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = states.len();
    let mut d: Vec<Vec<Option<Rational>>> = vec![vec![None; n]; n + 1];
    d[0][index[&initial]] = Some(Rational::zero());
    for k in 1..=n {
        for (ui, &u) in states.iter().enumerate() {
            let Some(du) = d[k - 1][ui].clone() else { continue };
            for a in 0..mdp.transitions[u].len() {
                let t = successor(u, a).expect("checked during reachability");
                let ti = index[&t];
                let dt = &du + &mdp.rewards[u][a];
                if d[k][ti].as_ref().map_or(true, |old| dt > *old) {
                    d[k][ti] = Some(dt);
                }
            }
        }
    }
    let mut best: Option<Rational> = None;
    for vi in 0..n {
        let Some(dn) = d[n][vi].clone() else { continue };
        let mut worst: Option<Rational> = None;
        for k in 0..n {
            let Some(dk) = d[k][vi].as_ref() else { continue };
            let mean = (&dn - dk) / Rational::from_integer((n - k).into());
            if worst.as_ref().map_or(true, |old| mean < *old) {
                worst = Some(mean);
            }
        }
        let w = worst.expect("d(n, v) finite implies some shorter walk reaches v");
        if best.as_ref().map_or(true, |old| w > *old) {
            best = Some(w);
        }
    }
    Some(best.expect("every state has a successor, so a cycle is reachable"))
}

/// One player's row in a certificate.  All three values are exact; the
/// gain is exactly `best_response − on_path` and is never negative, since
/// following the machine is itself an available deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCertificate {
    pub player: PlayerId,
    pub on_path: Rational,
    pub best_response: Rational,
    pub gain: Rational,
}

/// The verifier's verdict on one machine at one claimed `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub epsilon: f64,
    pub tolerance: f64,
    pub method: BuildMethod,
    pub players: Vec<PlayerCertificate>,
    /// Players whose deviation gain exceeds `ε` plus the tolerance.
    pub gain_violators: Vec<PlayerId>,
    /// Players whose on-path value falls below their threat level minus
    /// `ε` (minus the threat's own error bound and the tolerance).
    pub floor_violators: Vec<PlayerId>,
    pub valid: bool,
}

/// Certify the machine at `ε`: compute every player's exact on-path value
/// and exact best-response value, and accept when no player gains more
/// than `ε` (plus tolerance) by deviating.  The per-player floor — the
/// on-path value must reach the threat level minus `ε` — is checked
/// alongside, so an accepted certificate also witnesses the individual
/// rationality of the path.  Invalid certificates are returned, never
/// errors, with the violating players named.
pub fn certify(
    game: &GameSpec,
    em: &EquilibriumMachine,
    epsilon: f64,
    threats: &PunishmentReport,
) -> Result<EquilibriumCertificate, VerifyError> {
    em.validate(game).map_err(VerifyError::MachineInvalid)?;
    let eps = rational::from_f64(epsilon);
    let tol = rational::from_f64(CERTIFICATE_TOLERANCE);
    let mut players = Vec::with_capacity(game.n_players());
    let mut gain_violators = Vec::new();
    let mut floor_violators = Vec::new();
    for i in 0..game.n_players() {
        let on_path = on_path_value(game, em, i)?;
        let best_response = best_response_value(game, em, i)?;
        let gain = &best_response - &on_path;
        assert!(
            gain >= Rational::zero(),
            "best response fell below the on-path value; solver bug"
        );
        if gain > &eps + &tol {
            gain_violators.push(i);
        }
        let entry = threats.entry(i);
        let floor = &(&entry.correlated - &eps) - &(&entry.error_bound + &tol);
        if on_path < floor {
            floor_violators.push(i);
        }
        players.push(PlayerCertificate {
            player: i,
            on_path,
            best_response,
            gain,
        });
    }
    let valid = gain_violators.is_empty() && floor_violators.is_empty();
    Ok(EquilibriumCertificate {
        epsilon,
        tolerance: CERTIFICATE_TOLERANCE,
        method: em.method,
        players,
        gain_violators,
        floor_violators,
        valid,
    })
}

/// One punishment switch observed in simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerEvent {
    pub run: usize,
    pub stage: usize,
    pub blamed: PlayerId,
    /// True when the band monitor fired; false for a support violation
    /// caught by the machine's own transitions.
    pub statistical: bool,
}

/// Aggregated simulation output.  Reruns with the same inputs and seed
/// reproduce this structure exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStats {
    pub runs: usize,
    pub horizon: usize,
    /// Final running average of each player's stage weights, per run.
    pub run_averages: Vec<Vec<f64>>,
    /// Mean of the final running averages across runs.
    pub average_payoff: Vec<f64>,
    pub triggers: Vec<TriggerEvent>,
}

/// Simulate everyone following the machine for `horizon` stages, `runs`
/// times, with per-run independent streams of one seeded generator.  When
/// a monitor is supplied, band exits after the warm-up switch play to the
/// punishment state of the blamed player; support violations switch play
/// through the machine's own transitions in all cases.
pub fn simulate(
    game: &GameSpec,
    em: &EquilibriumMachine,
    monitor: Option<&MonitorSpec>,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Result<SimulationStats, VerifyError> {
    run_simulation(game, em, monitor, None, horizon, runs, seed)
}

fn run_simulation(
    game: &GameSpec,
    em: &EquilibriumMachine,
    monitor: Option<&MonitorSpec>,
    deviation: Option<(PlayerId, &FiniteMemoryProfile)>,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Result<SimulationStats, VerifyError> {
    use rand::Rng;
    use rand::SeedableRng;
    assert!(horizon >= 1 && runs >= 1);
    em.validate(game).map_err(VerifyError::MachineInvalid)?;
    if let Some((_, dev)) = deviation {
        dev.validate(game).map_err(|e| VerifyError::MachineInvalid(e.to_string()))?;
    }
    if monitor.is_some() {
        for j in 0..game.n_players() {
            if em.punishing_state(j).is_none() {
                return Err(VerifyError::NoPunishmentState(j));
            }
        }
    }

    let n = game.n_players();
    let machine = &em.machine;
    let cdf_of = |outputs: &[crate::model::MixedAction], j: PlayerId| -> Vec<f64> {
        let mut acc = 0.0;
        outputs[j]
            .probs()
            .iter()
            .map(|p| {
                acc += rational::to_f64(p);
                acc
            })
            .collect()
    };
    let machine_cdf: Vec<Vec<Vec<f64>>> = (0..machine.n_states())
        .map(|s| (0..n).map(|j| cdf_of(&machine.output[s], j)).collect())
        .collect();
    let deviation_cdf: Option<Vec<Vec<f64>>> = deviation.map(|(j, dev)| {
        (0..dev.n_states())
            .map(|s| cdf_of(&dev.output[s], j))
            .collect()
    });
    let strides: Vec<usize> = (0..n)
        .map(|j| (j + 1..n).map(|k| game.n_actions(k)).product())
        .collect();
    let weights_f: Vec<Vec<f64>> = (0..n)
        .map(|i| match game.objectives[i].weights() {
            Some(w) => w.iter().map(rational::to_f64).collect(),
            None => vec![0.0; game.profile_count()],
        })
        .collect();

    let mut run_averages = Vec::with_capacity(runs);
    let mut triggers = Vec::new();
    for run in 0..runs {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(run as u64 + 1);
        let mut state = machine.initial;
        let mut dev_state = deviation.map(|(_, dev)| dev.initial).unwrap_or(0);
        let mut sums = vec![0.0f64; n];
        let mut history: Vec<ProfileId> = Vec::new();
        if monitor.is_some() {
            history.reserve(horizon);
        }
        for stage in 1..=horizon {
            let mut profile = 0usize;
            for j in 0..n {
                let cdf: &[f64] = match deviation {
                    Some((dj, _)) if dj == j => &deviation_cdf.as_ref().expect("present")[dev_state],
                    _ => &machine_cdf[state][j],
                };
                let u: f64 = rng.gen();
                let a = cdf.iter().position(|&q| u < q).unwrap_or(cdf.len() - 1);
                profile += a * strides[j];
            }
            for i in 0..n {
                sums[i] += weights_f[i][profile];
            }
            if monitor.is_some() {
                history.push(profile);
            }
            let before = em.class(state);
            let statistical_trigger = monitor
                .map(|m| before == StateClass::OnPath && m.trigger_at(&sums, stage))
                .unwrap_or(false);
            if statistical_trigger {
                let m = monitor.expect("checked");
                let blamed = m
                    .blame
                    .blame(game, machine, &History(history.clone()));
                triggers.push(TriggerEvent {
                    run,
                    stage,
                    blamed,
                    statistical: true,
                });
                state = em.punishing_state(blamed).expect("checked at entry");
            } else {
                state = machine.transition[state][profile];
                if before == StateClass::OnPath {
                    if let StateClass::Punishing(j) = em.class(state) {
                        triggers.push(TriggerEvent {
                            run,
                            stage,
                            blamed: j,
                            statistical: false,
                        });
                    }
                }
            }
            if let Some((_, dev)) = deviation {
                dev_state = dev.transition[dev_state][profile];
            }
        }
        run_averages.push(sums.iter().map(|s| s / horizon as f64).collect::<Vec<f64>>());
    }
    let average_payoff: Vec<f64> = (0..n)
        .map(|i| run_averages.iter().map(|r| r[i]).sum::<f64>() / runs as f64)
        .collect();
    Ok(SimulationStats {
        runs,
        horizon,
        run_averages,
        average_payoff,
        triggers,
    })
}

/// Empirical blame accuracy against one scripted deviator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlameTestReport {
    /// Theoretical ceiling `2·√((n−1)·δ)` the empirical rate is compared
    /// against.
    pub bound: f64,
    /// Fraction of runs in which punishment was triggered and the blame
    /// fell on someone other than the deviator.
    pub rate: f64,
    /// 95% Wilson confidence interval for that fraction.
    pub ci: (f64, f64),
    pub triggers: usize,
    pub misblamed: usize,
    pub runs: usize,
}

/// Estimate the probability that punishment triggers and blames the wrong
/// player, when `deviator` abandons the machine for the scripted
/// `deviation` profile and everyone else follows the monitored machine.
/// Each run counts at most one trigger — the first — because play switches
/// to punishment there.
pub fn blame_error_rate(
    game: &GameSpec,
    em: &EquilibriumMachine,
    monitor: &MonitorSpec,
    deviator: PlayerId,
    deviation: &FiniteMemoryProfile,
    runs: usize,
    horizon: usize,
    seed: u64,
) -> Result<BlameTestReport, VerifyError> {
    let stats = run_simulation(
        game,
        em,
        Some(monitor),
        Some((deviator, deviation)),
        horizon,
        runs,
        seed,
    )?;
    let mut first_blame: BTreeMap<usize, PlayerId> = BTreeMap::new();
    for event in &stats.triggers {
        first_blame.entry(event.run).or_insert(event.blamed);
    }
    let triggers = first_blame.len();
    let misblamed = first_blame.values().filter(|&&j| j != deviator).count();
    let rate = misblamed as f64 / runs as f64;
    let ci = wilson_interval(misblamed, runs, 1.96);
    let bound = 2.0 * ((game.n_players() as f64 - 1.0) * monitor.delta).sqrt();
    Ok(BlameTestReport {
        bound,
        rate,
        ci,
        triggers,
        misblamed,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{
        build_acceptable_stationary, build_grim_trigger, build_monitored_equilibrium,
        find_target_play, MonitorOptions,
    };
    use crate::model::{GameSpec, MixedAction};
    use crate::punish::{compute_threats, ThreatOptions};
    use crate::rational::{rat, ratio};

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

    fn matching_pennies() -> GameSpec {
        GameSpec::new(
            vec!["matcher".into(), "mismatcher".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            vec![
                Objective::MeanLimsup(vec![rat(1), rat(0), rat(0), rat(1)]),
                Objective::MeanLimsup(vec![rat(0), rat(1), rat(1), rat(0)]),
            ],
        )
        .unwrap()
    }

    fn grim_dilemma() -> (GameSpec, PunishmentReport, EquilibriumMachine) {
        let game = dilemma();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let play = find_target_play(&game, &threats, 0.1).unwrap();
        let em = build_grim_trigger(&game, &play, &threats).unwrap();
        (game, threats, em)
    }

    #[test]
    fn dilemma_grim_trigger_has_zero_deviation_gain() {
        let (game, threats, em) = grim_dilemma();
        for i in 0..2 {
            // Hand-solved three-state decision process: complying earns 3
            // forever; defecting earns 4 once, then 1 forever — so the
            // long-run optimum is to comply.
            assert_eq!(best_response_value(&game, &em, i).unwrap(), rat(3));
            assert_eq!(on_path_value(&game, &em, i).unwrap(), rat(3));
        }
        let cert = certify(&game, &em, 0.1, &threats).unwrap();
        assert!(cert.valid);
        assert!(cert.gain_violators.is_empty());
        assert!(cert.floor_violators.is_empty());
        for p in &cert.players {
            assert_eq!(p.gain, rat(0));
        }
    }

    #[test]
    fn cooperation_without_punishment_is_exploitable() {
        let game = dilemma();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        // Stationary (C,C) with no punishment states at all.
        let machine = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::pure(0, 0, 2), MixedAction::pure(1, 0, 2)],
        );
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        // Defecting forever against an opponent frozen on C earns 4.
        assert_eq!(best_response_value(&game, &em, 0).unwrap(), rat(4));
        let cert = certify(&game, &em, 0.1, &threats).unwrap();
        assert!(!cert.valid);
        assert_eq!(cert.gain_violators, vec![0, 1]);
        assert_eq!(cert.players[0].gain, rat(1));
    }

    #[test]
    fn constant_opponents_make_the_best_response_a_stage_maximum() {
        let game = dilemma();
        // Machine ignores player 0 and pins the column player to C.
        let machine = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::uniform(0, 2), MixedAction::pure(1, 0, 2)],
        );
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        // max(w(C,C), w(D,C)) = max(3, 4).
        assert_eq!(best_response_value(&game, &em, 0).unwrap(), rat(4));
    }

    #[test]
    fn punishing_only_machine_reproduces_the_reported_threat() {
        let game = dilemma();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        for j in 0..2 {
            let machine =
                FiniteMemoryProfile::stationary(&game, threats.entry(j).punishment.clone());
            let em = EquilibriumMachine {
                machine,
                classes: vec![crate::equilibrium::StateClass::Punishing(j)],
                method: BuildMethod::GrimTrigger,
                epsilon: None,
                delta: None,
            };
            assert_eq!(
                best_response_value(&game, &em, j).unwrap(),
                threats.entry(j).independent
            );
        }
    }

    #[test]
    fn punishing_only_machine_matches_recurrence_threats_too() {
        use std::collections::BTreeSet;
        let target: BTreeSet<ProfileId> = [0].into_iter().collect();
        let game = GameSpec::new(
            vec!["a".into(), "b".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            vec![
                Objective::Buchi(target),
                Objective::MeanLimsup(vec![rat(0); 4]),
            ],
        )
        .unwrap();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let machine = FiniteMemoryProfile::stationary(&game, threats.entry(0).punishment.clone());
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::Punishing(0)],
            method: BuildMethod::GrimTrigger,
            epsilon: None,
            delta: None,
        };
        assert_eq!(
            best_response_value(&game, &em, 0).unwrap(),
            threats.entry(0).independent
        );
    }

    #[test]
    fn grim_trigger_on_path_equals_the_lasso_value() {
        let (game, _, em) = grim_dilemma();
        assert_eq!(on_path_value(&game, &em, 0).unwrap(), rat(3));
        assert_eq!(on_path_value(&game, &em, 1).unwrap(), rat(3));
    }

    #[test]
    fn recurrence_values_against_a_uniform_machine() {
        use std::collections::BTreeSet;
        let matches: BTreeSet<ProfileId> = [0, 3].into_iter().collect();
        let game = GameSpec::new(
            vec!["a".into(), "b".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            vec![
                Objective::Buchi(matches.clone()),
                Objective::CoBuchi(matches),
            ],
        )
        .unwrap();
        let machine = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::uniform(0, 2), MixedAction::uniform(1, 2)],
        );
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        // Matching recurs almost surely whatever player 0 does: value 1.
        assert_eq!(on_path_value(&game, &em, 0).unwrap(), rat(1));
        assert_eq!(best_response_value(&game, &em, 0).unwrap(), rat(1));
        // Player 1 wants matches to stop recurring but the opponent mixes
        // uniformly forever: every own action keeps a match supported.
        assert_eq!(on_path_value(&game, &em, 1).unwrap(), rat(0));
        assert_eq!(best_response_value(&game, &em, 1).unwrap(), rat(0));
    }

    #[test]
    fn parity_best_response_prefers_the_even_cycle() {
        // Priorities: (H,H)=0, (H,T)=2, (T,H)=1, (T,T)=1; the machine pins
        // the opponent to T, so playing H realizes priority 2 forever while
        // T realizes 1 forever.
        let game = GameSpec::new(
            vec!["a".into(), "b".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            vec![
                Objective::Parity(vec![0, 2, 1, 1]),
                Objective::MeanLimsup(vec![rat(0); 4]),
            ],
        )
        .unwrap();
        let machine = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::uniform(0, 2), MixedAction::pure(1, 1, 2)],
        );
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        assert_eq!(best_response_value(&game, &em, 0).unwrap(), rat(1));
    }

    #[test]
    fn zero_sum_threat_values_are_complementary() {
        let game = matching_pennies();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        for j in 0..2 {
            let machine =
                FiniteMemoryProfile::stationary(&game, threats.entry(j).punishment.clone());
            let em = EquilibriumMachine {
                machine,
                classes: vec![crate::equilibrium::StateClass::Punishing(j)],
                method: BuildMethod::GrimTrigger,
                epsilon: None,
                delta: None,
            };
            // The stage game is constant-sum 1, so each player's defended
            // level is exactly one half.
            assert_eq!(best_response_value(&game, &em, j).unwrap(), ratio(1, 2));
        }
    }

    #[test]
    fn limsup_weight_on_path_is_supported_but_best_response_is_not() {
        let game = GameSpec::new(
            vec!["a".into(), "b".into()],
            vec![vec!["x".into(), "y".into()], vec!["x".into(), "y".into()]],
            vec![
                Objective::LimsupWeight(vec![rat(5), rat(1), rat(4), rat(2)]),
                Objective::MeanLimsup(vec![rat(0); 4]),
            ],
        )
        .unwrap();
        let machine = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::uniform(0, 2), MixedAction::uniform(1, 2)],
        );
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        // All four profiles recur, so the limsup weight is the maximum.
        assert_eq!(on_path_value(&game, &em, 0).unwrap(), rat(5));
        assert!(matches!(
            best_response_value(&game, &em, 0),
            Err(VerifyError::ObjectiveUnsupported { player: 0, .. })
        ));
    }

    #[test]
    fn deterministic_machine_simulates_identically_across_runs() {
        let (game, _, em) = grim_dilemma();
        let stats = simulate(&game, &em, None, 50, 8, 7).unwrap();
        assert!(stats.triggers.is_empty());
        for averages in &stats.run_averages {
            assert_eq!(averages, &vec![3.0, 3.0]);
        }
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let game = matching_pennies();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let em = build_acceptable_stationary(&game, &threats, 0.0).unwrap();
        let a = simulate(&game, &em, None, 200, 16, 42).unwrap();
        let b = simulate(&game, &em, None, 200, 16, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&game, &em, None, 200, 16, 43).unwrap();
        assert_ne!(a.run_averages, c.run_averages);
    }

    #[test]
    fn running_averages_concentrate_like_the_clt_predicts() {
        let game = matching_pennies();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let em = build_acceptable_stationary(&game, &threats, 0.0).unwrap();
        let horizon = 4096;
        let runs = 200;
        let stats = simulate(&game, &em, None, horizon, runs, 11).unwrap();
        // Stage weights are Bernoulli(1/2): three standard errors.
        let band = 3.0 * 0.5 / (horizon as f64).sqrt();
        let within = stats
            .run_averages
            .iter()
            .filter(|r| (r[0] - 0.5).abs() <= band && (r[1] - 0.5).abs() <= band)
            .count();
        assert!(
            within >= runs * 98 / 100,
            "only {within}/{runs} runs stayed within the 3-sigma band"
        );
    }

    #[test]
    fn support_violations_blame_the_deviator_exactly() {
        let (game, threats, base) = grim_dilemma();
        let (em, monitor) =
            build_monitored_equilibrium(&game, &base, 1.0, &threats, &MonitorOptions::default())
                .unwrap();
        // Deviator 0 defects forever; the very first stage is a support
        // violation, so the machine itself triggers and blames player 0.
        let defect = FiniteMemoryProfile::stationary(
            &game,
            vec![MixedAction::pure(0, 1, 2), MixedAction::pure(1, 1, 2)],
        );
        let report =
            blame_error_rate(&game, &em, &monitor, 0, &defect, 500, 40, 3).unwrap();
        assert_eq!(report.triggers, 500);
        assert_eq!(report.misblamed, 0);
        assert_eq!(report.rate, 0.0);
        assert!(report.rate < report.bound);
    }

    #[test]
    fn certifying_from_every_on_path_state_preserves_the_floor() {
        // A two-profile cycle: rotating the start state must leave the
        // certificate's on-path values and floors intact.
        let game = GameSpec::new(
            vec!["a".into(), "b".into()],
            vec![vec!["x".into(), "y".into()], vec!["x".into(), "y".into()]],
            vec![
                Objective::MeanLimsup(vec![rat(1), rat(0), rat(0), rat(0)]),
                Objective::MeanLimsup(vec![rat(0), rat(0), rat(0), rat(1)]),
            ],
        )
        .unwrap();
        let mut threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        threats.override_threat(0, ratio(1, 4));
        threats.override_threat(1, ratio(1, 4));
        let play = find_target_play(&game, &threats, 0.1).unwrap();
        let em = build_grim_trigger(&game, &play, &threats).unwrap();
        for &s in &em.on_path_states() {
            let mut shifted = em.clone();
            shifted.machine.initial = s;
            let cert = certify(&game, &shifted, 0.1, &threats).unwrap();
            assert!(cert.valid, "rotation to state {s} broke the certificate");
            assert_eq!(cert.players[0].on_path, ratio(1, 2));
            assert_eq!(cert.players[1].on_path, ratio(1, 2));
        }
    }

    #[test]
    fn confidence_intervals_shrink_with_the_square_root_of_runs() {
        let (lo1, hi1) = wilson_interval(50, 200, 1.96);
        let (lo2, hi2) = wilson_interval(200, 800, 1.96);
        let ratio = (hi1 - lo1) / (hi2 - lo2);
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "quadrupling runs should halve the width, got ratio {ratio}"
        );
    }

    #[test]
    fn best_response_never_falls_below_the_on_path_value() {
        let game = matching_pennies();
        let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
        let em = build_acceptable_stationary(&game, &threats, 0.0).unwrap();
        for i in 0..2 {
            let on_path = on_path_value(&game, &em, i).unwrap();
            let br = best_response_value(&game, &em, i).unwrap();
            assert!(br >= on_path);
        }
    }

    #[test]
    fn cycle_search_agrees_with_policy_iteration_on_deterministic_processes() {
        use num::One;
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0xCA_21);
        for case in 0..40 {
            let n_states = rng.gen_range(2..=6);
            let n_actions = rng.gen_range(1..=3);
            let mut transitions = Vec::with_capacity(n_states);
            let mut rewards = Vec::with_capacity(n_states);
            for _ in 0..n_states {
                let mut t_row = Vec::with_capacity(n_actions);
                let mut r_row = Vec::with_capacity(n_actions);
                for _ in 0..n_actions {
                    let target = rng.gen_range(0..n_states);
                    t_row.push(vec![(target, Rational::one())]);
                    r_row.push(rat(rng.gen_range(-3..=3)));
                }
                transitions.push(t_row);
                rewards.push(r_row);
            }
            let mdp = Mdp { transitions, rewards };
            let fast = deterministic_mean_gain(&mdp, 0).expect("all rows are deterministic");
            let slow = optimal_average_reward(&mdp).gain[0].clone();
            assert_eq!(fast, slow, "case {case} disagrees");
        }
    }

    #[test]
    fn stochastic_transitions_fall_back_to_the_general_solver() {
        // A scouting state mixes both players uniformly and moves to a
        // locked state only on (H, H), so the deviator's process has a
        // genuinely stochastic row; the locked state repeats (H, H) forever.
        let game = matching_pennies();
        let uniform = |player| MixedAction::uniform(player, 2);
        let machine = FiniteMemoryProfile {
            names: vec!["scout".into(), "lock".into()],
            initial: 0,
            transition: vec![vec![1, 0, 0, 0], vec![1, 1, 1, 1]],
            output: vec![
                vec![uniform(0), uniform(1)],
                vec![MixedAction::pure(0, 0, 2), MixedAction::pure(1, 0, 2)],
            ],
        };
        machine.validate(&game).unwrap();
        let em = EquilibriumMachine {
            machine,
            classes: vec![crate::equilibrium::StateClass::OnPath; 2],
            method: BuildMethod::AcceptableStationary,
            epsilon: None,
            delta: None,
        };
        // The matcher steers into the locked state by playing H (reached
        // with probability one half per stage) and then matches forever;
        // the transient stages do not affect the long-run average.
        assert_eq!(best_response_value(&game, &em, 0).unwrap(), rat(1));
        // On-path the scouting state is left only through (H, H), and the
        // locked state then pays the matcher 1 and the mismatcher 0.
        assert_eq!(on_path_value(&game, &em, 0).unwrap(), rat(1));
        assert_eq!(on_path_value(&game, &em, 1).unwrap(), rat(0));
    }
}
