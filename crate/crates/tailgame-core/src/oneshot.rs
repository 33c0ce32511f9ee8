//! Stage-game analysis: expectations under mixed profiles, correlated and
//! independent punishment levels, and stationary Nash profiles of the
//! expected-weight game.
//!
//! All final values are exact rationals.  Floating point appears only inside
//! the Newton polish used by the many-player Nash search, and every candidate
//! it produces is re-verified exactly before being returned.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::model::{ActionId, GameSpec, MixedAction, PlayerId};
use crate::rational::{self, Rational};
use crate::simplex::{solve_matrix_game, LpError};

/// Errors from the stage-game solvers.
#[derive(Debug, Error)]
pub enum OneshotError {
    /// The support-enumeration Nash search ran out of budget before finding a
    /// profile that passes exact verification.
    #[error(
        "no stage-game Nash profile found within the search budget \
         ({combos_tried} support combinations tried); raise the budget or \
         supply a profile directly"
    )]
    NashSearchExhausted {
        /// Number of support combinations examined.
        combos_tried: usize,
    },
    /// The underlying linear-programming solver failed; this indicates a bug
    /// or a malformed weight table rather than a property of the game.
    #[error("matrix-game solve failed: {0}")]
    Lp(#[from] LpError),
}

/// Expected weight of `weights` (indexed by profile id) under a product
/// distribution, one mixed action per player.
pub fn expected_weight(game: &GameSpec, weights: &[Rational], profile: &[MixedAction]) -> Rational {
    let mut total = rational::rat(0);
    for p in 0..game.profile_count() {
        if weights[p] == rational::rat(0) {
            continue;
        }
        let prob = game.profile_probability(profile, p);
        if prob != rational::rat(0) {
            total += &weights[p] * prob;
        }
    }
    total
}

/// Expected weight for each of `player`'s actions, holding everyone else at
/// the mixed actions in `profile` (the entry for `player` is ignored).
pub fn conditional_expectations(
    game: &GameSpec,
    weights: &[Rational],
    profile: &[MixedAction],
    player: PlayerId,
) -> Vec<Rational> {
    let mut out = vec![rational::rat(0); game.n_actions(player)];
    for p in 0..game.profile_count() {
        if weights[p] == rational::rat(0) {
            continue;
        }
        let actions = game.decode(p);
        let mut prob = rational::rat(1);
        for (k, &a) in actions.iter().enumerate() {
            if k == player {
                continue;
            }
            prob *= profile[k].prob(a);
            if prob == rational::rat(0) {
                break;
            }
        }
        if prob != rational::rat(0) {
            out[actions[player]] += &weights[p] * prob;
        }
    }
    out
}

/// The value and action of `player`'s best pure reply against the mixed
/// actions of everyone else in `profile`.  Ties break toward the lowest
/// action id.
pub fn best_pure_reply(
    game: &GameSpec,
    weights: &[Rational],
    profile: &[MixedAction],
    player: PlayerId,
) -> (ActionId, Rational) {
    let cond = conditional_expectations(game, weights, profile, player);
    let mut best = 0;
    for a in 1..cond.len() {
        if cond[a] > cond[best] {
            best = a;
        }
    }
    let value = cond[best].clone();
    (best, value)
}

/// Expected weight for each (own action, opponent action) pair, holding all
/// remaining players at their mixed actions in `profile`.
fn pairwise_expectations(
    game: &GameSpec,
    weights: &[Rational],
    profile: &[MixedAction],
    player: PlayerId,
    opponent: PlayerId,
) -> Vec<Vec<Rational>> {
    let mut out = vec![vec![rational::rat(0); game.n_actions(opponent)]; game.n_actions(player)];
    for p in 0..game.profile_count() {
        if weights[p] == rational::rat(0) {
            continue;
        }
        let actions = game.decode(p);
        let mut prob = rational::rat(1);
        for (k, &a) in actions.iter().enumerate() {
            if k == player || k == opponent {
                continue;
            }
            prob *= profile[k].prob(a);
            if prob == rational::rat(0) {
                break;
            }
        }
        if prob != rational::rat(0) {
            out[actions[player]][actions[opponent]] += &weights[p] * prob;
        }
    }
    out
}

/// Result of a correlated punishment-level computation.
#[derive(Debug, Clone)]
pub struct CorrelatedMinmax {
    /// The punishment level: the least expected weight the coalition of
    /// everyone else can force on the player, if they may correlate.
    pub value: Rational,
    /// The minimising correlated distribution over coalition action
    /// profiles, indexed by coalition profile id.
    pub coalition: Vec<Rational>,
    /// A maximising mixed action for the punished player.
    pub own: Vec<Rational>,
}

/// Exact correlated punishment level for `player` under `weights`.
///
/// Solved as a zero-sum matrix game: rows are the player's actions, columns
/// are joint coalition profiles, and the coalition minimises.  Both returned
/// strategies are exact optima of that game.
pub fn correlated_minmax(
    game: &GameSpec,
    weights: &[Rational],
    player: PlayerId,
) -> Result<CorrelatedMinmax, OneshotError> {
    let rows = game.n_actions(player);
    let cols = game.coalition_count(player);
    let mut matrix = vec![vec![rational::rat(0); cols]; rows];
    for (a, row) in matrix.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            let p = game.compose(player, a, c);
            *entry = weights[p].clone();
        }
    }
    let sol = solve_matrix_game(&matrix)?;
    Ok(CorrelatedMinmax {
        value: sol.value,
        coalition: sol.col_strategy,
        own: sol.row_strategy,
    })
}

/// Options for the independent punishment-level search.
#[derive(Debug, Clone)]
pub struct MinmaxOptions {
    /// Number of random restarts added on top of the deterministic starts.
    pub restarts: usize,
    /// Seed for the random restarts.
    pub seed: u64,
    /// Maximum rounds of coordinate descent per start.
    pub max_rounds: usize,
}

impl Default for MinmaxOptions {
    fn default() -> Self {
        MinmaxOptions {
            restarts: 16,
            seed: 0x7A11_6A4E,
            max_rounds: 64,
        }
    }
}

/// Result of an independent punishment-level search.
#[derive(Debug, Clone)]
pub struct IndependentMinmax {
    /// Best punishment level found: the expected weight the player secures
    /// when the others play `profile` and may not correlate.  This is an
    /// exact upper bound on the true independent level, and therefore never
    /// below the correlated level.
    pub value: Rational,
    /// The punishing product profile.  The punished player's own entry is
    /// set to their best pure reply, so the vector is a complete profile.
    pub profile: Vec<MixedAction>,
    /// Coordinate-descent rounds used by the best start.
    pub rounds: usize,
}

/// Independent punishment level for `player`: the least expected weight the
/// others can force with uncorrelated mixed actions.
///
/// The search alternates exact matrix-game solves, one opponent at a time,
/// from several starting profiles (uniform, diagonal pure profiles, and
/// seeded random profiles), and keeps the best exact evaluation.  Each
/// evaluation is exact, so the result is always a true upper bound on the
/// independent level; with two players it equals the correlated level
/// exactly because the single opponent's matrix-game solve is itself exact.
pub fn independent_minmax(
    game: &GameSpec,
    weights: &[Rational],
    player: PlayerId,
    options: &MinmaxOptions,
) -> Result<IndependentMinmax, OneshotError> {
    let n = game.n_players();
    let opponents: Vec<PlayerId> = (0..n).filter(|&j| j != player).collect();

    let mut starts: Vec<Vec<MixedAction>> = Vec::new();
    starts.push((0..n).map(|j| MixedAction::uniform(j, game.n_actions(j))).collect());
    let max_actions = (0..n).map(|j| game.n_actions(j)).max().unwrap_or(1);
    for k in 0..max_actions {
        starts.push(
            (0..n)
                .map(|j| MixedAction::pure(j, k.min(game.n_actions(j) - 1), game.n_actions(j)))
                .collect(),
        );
    }
    let mut rng = ChaCha12Rng::seed_from_u64(options.seed ^ (player as u64).wrapping_mul(0x9E37_79B9));
    for _ in 0..options.restarts {
        starts.push(
            (0..n)
                .map(|j| random_mixed(&mut rng, j, game.n_actions(j)))
                .collect(),
        );
    }

    let mut best: Option<IndependentMinmax> = None;
    for start in starts {
        let mut profile = start;
        let mut value = best_pure_reply(game, weights, &profile, player).1;
        let mut rounds = 0;
        for _ in 0..options.max_rounds {
            rounds += 1;
            let mut improved = false;
            for &j in &opponents {
                let matrix = pairwise_expectations(game, weights, &profile, player, j);
                let sol = solve_matrix_game(&matrix)?;
                let candidate = MixedAction::new(j, sol.col_strategy)
                    .expect("matrix-game column strategies are exact distributions");
                let mut trial = profile.clone();
                trial[j] = candidate;
                let trial_value = best_pure_reply(game, weights, &trial, player).1;
                if trial_value < value {
                    profile = trial;
                    value = trial_value;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        let better = match &best {
            None => true,
            Some(b) => value < b.value,
        };
        if better {
            let (reply, reply_value) = best_pure_reply(game, weights, &profile, player);
            debug_assert_eq!(reply_value, value);
            profile[player] = MixedAction::pure(player, reply, game.n_actions(player));
            best = Some(IndependentMinmax {
                value: value.clone(),
                profile,
                rounds,
            });
        }
    }
    Ok(best.expect("at least one start is always evaluated"))
}

fn random_mixed(rng: &mut ChaCha12Rng, player: PlayerId, n_actions: usize) -> MixedAction {
    let mut parts: Vec<Rational> = Vec::with_capacity(n_actions);
    let mut total = rational::rat(0);
    for _ in 0..n_actions {
        let u: f64 = rng.gen_range(1e-6..1.0);
        let w = rational::from_f64(-u.ln());
        total += &w;
        parts.push(w);
    }
    let probs: Vec<Rational> = parts.into_iter().map(|w| w / &total).collect();
    MixedAction::new(player, probs).expect("normalised weights sum to one")
}

/// Options for the stationary Nash search.
#[derive(Debug, Clone)]
pub struct NashOptions {
    /// Maximum number of support combinations to try before giving up.
    pub support_budget: usize,
    /// Newton iterations per support (many-player path).
    pub newton_iters: usize,
    /// Exact tolerance on pure-deviation gain accepted by verification,
    /// as a rational.
    pub tolerance: Rational,
}

impl Default for NashOptions {
    fn default() -> Self {
        NashOptions {
            support_budget: 20_000,
            newton_iters: 60,
            tolerance: rational::ratio(1, 1_000_000_000),
        }
    }
}

/// A stationary Nash profile of the expected-weight game together with its
/// exact expected weights and the exactly verified deviation bound.
#[derive(Debug, Clone)]
pub struct StageNash {
    /// One mixed action per player.
    pub profile: Vec<MixedAction>,
    /// Exact expected weight per player under the profile.
    pub values: Vec<Rational>,
    /// Exact upper bound on any player's pure-deviation gain; zero for the
    /// pure-scan and two-player exact paths.
    pub deviation_gain: Rational,
}

/// Find a stage-game Nash profile for one weight table per player.
///
/// Strategy: scan pure profiles first (exact, any number of players); then
/// for two players enumerate equal-size supports and solve the indifference
/// systems exactly; for three or more players enumerate supports and polish
/// with Newton in floating point, accepting only candidates whose
/// pure-deviation gains verify exactly below `options.tolerance`.
pub fn one_shot_nash(
    game: &GameSpec,
    weights: &[Vec<Rational>],
    options: &NashOptions,
) -> Result<StageNash, OneshotError> {
    assert_eq!(weights.len(), game.n_players(), "one weight table per player");

    if let Some(nash) = pure_nash(game, weights) {
        return Ok(nash);
    }
    let mut combos_tried = 0;
    if game.n_players() == 2 {
        if let Some(nash) = two_player_support_nash(game, weights, options, &mut combos_tried)? {
            return Ok(nash);
        }
    }
    if let Some(nash) = newton_support_nash(game, weights, options, &mut combos_tried) {
        return Ok(nash);
    }
    Err(OneshotError::NashSearchExhausted { combos_tried })
}

fn pure_nash(game: &GameSpec, weights: &[Vec<Rational>]) -> Option<StageNash> {
    'profiles: for p in 0..game.profile_count() {
        let actions = game.decode(p);
        for i in 0..game.n_players() {
            for a in 0..game.n_actions(i) {
                if a == actions[i] {
                    continue;
                }
                let mut deviated = actions.clone();
                deviated[i] = a;
                let q = game.encode(&deviated);
                if weights[i][q] > weights[i][p] {
                    continue 'profiles;
                }
            }
        }
        let profile: Vec<MixedAction> = actions
            .iter()
            .enumerate()
            .map(|(i, &a)| MixedAction::pure(i, a, game.n_actions(i)))
            .collect();
        let values = (0..game.n_players()).map(|i| weights[i][p].clone()).collect();
        return Some(StageNash {
            profile,
            values,
            deviation_gain: rational::rat(0),
        });
    }
    None
}

/// Exact support enumeration for two players.  For each pair of equal-size
/// supports, solve the opponent-indifference linear system over the
/// rationals and verify feasibility and optimality exactly.
fn two_player_support_nash(
    game: &GameSpec,
    weights: &[Vec<Rational>],
    options: &NashOptions,
    combos_tried: &mut usize,
) -> Result<Option<StageNash>, OneshotError> {
    let n0 = game.n_actions(0);
    let n1 = game.n_actions(1);
    let max_size = n0.min(n1);
    for size in 2..=max_size {
        let supports0 = subsets_of_size(n0, size);
        let supports1 = subsets_of_size(n1, size);
        for s0 in &supports0 {
            for s1 in &supports1 {
                if *combos_tried >= options.support_budget {
                    return Ok(None);
                }
                *combos_tried += 1;
                if let Some(nash) = try_two_player_support(game, weights, s0, s1) {
                    return Ok(Some(nash));
                }
            }
        }
    }
    Ok(None)
}

fn subsets_of_size(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn recurse(n: usize, size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for k in start..n {
            current.push(k);
            recurse(n, size, k + 1, current, out);
            current.pop();
        }
    }
    recurse(n, size, 0, &mut current, &mut out);
    out
}

/// Solve the two-player indifference system on a support pair.  Player 0's
/// mixture must make player 1 indifferent across `s1` and vice versa.
fn try_two_player_support(
    game: &GameSpec,
    weights: &[Vec<Rational>],
    s0: &[usize],
    s1: &[usize],
) -> Option<StageNash> {
    let x0 = solve_indifference(game, &weights[1], 0, s0, s1)?;
    let x1 = solve_indifference(game, &weights[0], 1, s1, s0)?;
    let profile = vec![
        support_to_mixed(0, game.n_actions(0), s0, &x0),
        support_to_mixed(1, game.n_actions(1), s1, &x1),
    ];
    // Exact optimality: no pure action (inside or outside the support) may
    // beat the support value for either player.
    let mut values = Vec::with_capacity(2);
    for i in 0..2 {
        let cond = conditional_expectations(game, &weights[i], &profile, i);
        let own_support = if i == 0 { s0 } else { s1 };
        let value = cond[own_support[0]].clone();
        for a in 0..cond.len() {
            if cond[a] > value {
                return None;
            }
        }
        for &a in own_support {
            if cond[a] != value {
                return None;
            }
        }
        values.push(value);
    }
    Some(StageNash {
        profile,
        values,
        deviation_gain: rational::rat(0),
    })
}

/// Find a nonnegative mixture for `mixer` over `mixer_support` that makes
/// the opponent exactly indifferent across `opponent_support` under
/// `opponent_weights`.  Returns the mixture or `None` if the linear system
/// is singular or the solution leaves the simplex.
fn solve_indifference(
    game: &GameSpec,
    opponent_weights: &[Rational],
    mixer: PlayerId,
    mixer_support: &[usize],
    opponent_support: &[usize],
) -> Option<Vec<Rational>> {
    let opponent = 1 - mixer;
    let k = mixer_support.len();
    // Unknowns: k mixture weights plus the opponent's common value v.
    // Equations: indifference across opponent_support (k of them since the
    // supports have equal size), plus normalisation.
    let mut matrix = vec![vec![rational::rat(0); k + 1]; k + 1];
    let mut rhs = vec![rational::rat(0); k + 1];
    for (row, &b) in opponent_support.iter().enumerate() {
        for (col, &a) in mixer_support.iter().enumerate() {
            let mut actions = vec![0; 2];
            actions[mixer] = a;
            actions[opponent] = b;
            matrix[row][col] = opponent_weights[game.encode(&actions)].clone();
        }
        matrix[row][k] = rational::rat(-1);
    }
    for col in 0..k {
        matrix[k][col] = rational::rat(1);
    }
    rhs[k] = rational::rat(1);
    let solution = crate::mdp::solve_linear_exact(matrix, rhs)?;
    let mixture: Vec<Rational> = solution[..k].to_vec();
    if mixture.iter().any(|w| w < &rational::rat(0)) {
        return None;
    }
    Some(mixture)
}

fn support_to_mixed(player: PlayerId, n_actions: usize, support: &[usize], mixture: &[Rational]) -> MixedAction {
    let mut probs = vec![rational::rat(0); n_actions];
    for (idx, &a) in support.iter().enumerate() {
        probs[a] = mixture[idx].clone();
    }
    MixedAction::new(player, probs).expect("indifference solutions are normalised")
}

/// Support enumeration with floating-point Newton polish for any number of
/// players.  Candidates are accepted only after their pure-deviation gains
/// verify exactly below the tolerance.
fn newton_support_nash(
    game: &GameSpec,
    weights: &[Vec<Rational>],
    options: &NashOptions,
    combos_tried: &mut usize,
) -> Option<StageNash> {
    let n = game.n_players();
    let weights_f: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| w.iter().map(rational::to_f64).collect())
        .collect();

    // Enumerate support-size vectors by total size, then supports in
    // lexicographic order, so results are deterministic.
    let mut size_vectors: Vec<Vec<usize>> = Vec::new();
    let mut sizes = vec![1usize; n];
    loop {
        size_vectors.push(sizes.clone());
        let mut k = n;
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if sizes[k] < game.n_actions(k) {
                sizes[k] += 1;
                for s in sizes.iter_mut().skip(k + 1) {
                    *s = 1;
                }
                break;
            }
            if k == 0 {
                sizes.clear();
                break;
            }
        }
        if sizes.is_empty() {
            break;
        }
    }
    size_vectors.sort_by_key(|v| (v.iter().sum::<usize>(), v.clone()));

    for size_vec in &size_vectors {
        if size_vec.iter().all(|&s| s == 1) {
            continue; // pure profiles were scanned exactly already
        }
        let per_player: Vec<Vec<Vec<usize>>> = (0..n)
            .map(|i| subsets_of_size(game.n_actions(i), size_vec[i]))
            .collect();
        let mut indices = vec![0usize; n];
        'supports: loop {
            if *combos_tried >= options.support_budget {
                return None;
            }
            *combos_tried += 1;
            let supports: Vec<&[usize]> = (0..n).map(|i| per_player[i][indices[i]].as_slice()).collect();
            if let Some(nash) = try_newton_support(game, weights, &weights_f, &supports, options) {
                return Some(nash);
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break 'supports;
                }
                k -= 1;
                indices[k] += 1;
                if indices[k] < per_player[k].len() {
                    break;
                }
                indices[k] = 0;
                if k == 0 {
                    break 'supports;
                }
            }
        }
    }
    None
}

/// One Newton run on a fixed support profile, followed by exact verification.
fn try_newton_support(
    game: &GameSpec,
    weights: &[Vec<Rational>],
    weights_f: &[Vec<f64>],
    supports: &[&[usize]],
    options: &NashOptions,
) -> Option<StageNash> {
    let n = game.n_players();
    // Variable layout: for each player, its support probabilities, then one
    // value variable per player at the end.
    let mut offsets = vec![0usize; n];
    let mut total = 0usize;
    for i in 0..n {
        offsets[i] = total;
        total += supports[i].len();
    }
    let value_offset = total;
    let dim = total + n;

    let mut x = vec![0.0f64; dim];
    for i in 0..n {
        let s = supports[i].len() as f64;
        for k in 0..supports[i].len() {
            x[offsets[i] + k] = 1.0 / s;
        }
    }

    let prob = |x: &[f64], i: usize, a: usize| -> f64 {
        supports[i]
            .iter()
            .position(|&b| b == a)
            .map(|k| x[offsets[i] + k])
            .unwrap_or(0.0)
    };
    // Expected weight for player i of pure action a, everyone else mixing
    // per x; optionally player j is also pinned to pure action b.
    let cond = |x: &[f64], i: usize, a: usize, pin: Option<(usize, usize)>| -> f64 {
        let mut total = 0.0;
        for p in 0..game.profile_count() {
            let w = weights_f[i][p];
            if w == 0.0 {
                continue;
            }
            let actions = game.decode(p);
            if actions[i] != a {
                continue;
            }
            if let Some((j, b)) = pin {
                if actions[j] != b {
                    continue;
                }
            }
            let mut pr = 1.0;
            for (k, &ak) in actions.iter().enumerate() {
                if k == i || Some(k) == pin.map(|(j, _)| j) {
                    continue;
                }
                pr *= prob(x, k, ak);
                if pr == 0.0 {
                    break;
                }
            }
            total += w * pr;
        }
        total
    };

    for _ in 0..options.newton_iters {
        // Residuals: indifference of every supported action with the
        // player's value variable, then normalisation per player.
        let mut f = vec![0.0f64; dim];
        let mut jac = vec![vec![0.0f64; dim]; dim];
        let mut row = 0;
        for i in 0..n {
            for &a in supports[i].iter() {
                f[row] = cond(&x, i, a, None) - x[value_offset + i];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    for (m, &b) in supports[j].iter().enumerate() {
                        jac[row][offsets[j] + m] = cond(&x, i, a, Some((j, b)));
                    }
                }
                jac[row][value_offset + i] = -1.0;
                row += 1;
            }
        }
        for i in 0..n {
            // One normalisation row per player; probability columns all one.
            f[row] = x[offsets[i]..offsets[i] + supports[i].len()].iter().sum::<f64>() - 1.0;
            for k in 0..supports[i].len() {
                jac[row][offsets[i] + k] = 1.0;
            }
            row += 1;
        }
        debug_assert_eq!(row, dim);

        let norm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm <= 1e-13 {
            break;
        }
        let step = solve_linear_f64(&mut jac, &mut f)?;
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi -= si;
        }
    }

    // Reject clearly infeasible points, clamp tiny noise, and re-normalise.
    let mut profile = Vec::with_capacity(n);
    for i in 0..n {
        let mut probs = vec![rational::rat(0); game.n_actions(i)];
        let mut sum = rational::rat(0);
        for (k, &a) in supports[i].iter().enumerate() {
            let v = x[offsets[i] + k];
            if !v.is_finite() || v < -1e-9 || v > 1.0 + 1e-9 {
                return None;
            }
            let w = rational::from_f64(v.max(0.0));
            sum += &w;
            probs[a] = w;
        }
        if sum == rational::rat(0) {
            return None;
        }
        for p in probs.iter_mut() {
            *p /= &sum;
        }
        profile.push(MixedAction::new(i, probs).expect("clamped probabilities renormalise"));
    }

    // Exact verification: the best pure reply may not beat the realised
    // expected weight by more than the tolerance, for any player.
    let mut values = Vec::with_capacity(n);
    let mut worst_gain = rational::rat(0);
    for i in 0..n {
        let value = expected_weight(game, &weights[i], &profile);
        let (_, reply) = best_pure_reply(game, &weights[i], &profile, i);
        let gain = &reply - &value;
        if gain > worst_gain {
            worst_gain = gain;
        }
        values.push(value);
    }
    if worst_gain > options.tolerance {
        return None;
    }
    Some(StageNash {
        profile,
        values,
        deviation_gain: worst_gain,
    })
}

/// Floating-point Gaussian elimination with partial pivoting; consumes the
/// inputs and returns the solution.
fn solve_linear_f64(matrix: &mut [Vec<f64>], rhs: &mut [f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let mut pivot_row = col;
        for r in col + 1..n {
            if matrix[r][col].abs() > matrix[pivot_row][col].abs() {
                pivot_row = r;
            }
        }
        if matrix[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        matrix.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = matrix[col][col];
        for entry in matrix[col].iter_mut() {
            *entry /= pivot;
        }
        rhs[col] /= pivot;
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = matrix[row][col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..n {
                let delta = factor * matrix[col][c];
                matrix[row][c] -= delta;
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    Some(rhs.to_vec())
}

/// Support of a mixed action as a sorted set, for reporting.
pub fn support_set(mixed: &MixedAction) -> BTreeSet<ActionId> {
    mixed.support().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    fn dilemma() -> (GameSpec, Vec<Vec<Rational>>) {
        let game = GameSpec::new(
            vec!["row".into(), "col".into()],
            vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
            vec![
                crate::model::Objective::MeanLimsup(vec![rat(3), rat(0), rat(4), rat(1)]),
                crate::model::Objective::MeanLimsup(vec![rat(3), rat(4), rat(0), rat(1)]),
            ],
        )
        .unwrap();
        let weights = vec![
            vec![rat(3), rat(0), rat(4), rat(1)],
            vec![rat(3), rat(4), rat(0), rat(1)],
        ];
        (game, weights)
    }

    fn matching_pennies() -> (GameSpec, Vec<Vec<Rational>>) {
        let game = GameSpec::new(
            vec!["row".into(), "col".into()],
            vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
            vec![
                crate::model::Objective::MeanLimsup(vec![rat(1), rat(0), rat(0), rat(1)]),
                crate::model::Objective::MeanLimsup(vec![rat(0), rat(1), rat(1), rat(0)]),
            ],
        )
        .unwrap();
        let weights = vec![
            vec![rat(1), rat(0), rat(0), rat(1)],
            vec![rat(0), rat(1), rat(1), rat(0)],
        ];
        (game, weights)
    }

    /// Three players; the first guesses the relation between the other two
    /// (same, first-only, second-only).  The partition structure makes the
    /// correlated level exactly 1/3 while no product profile goes below 4/9.
    fn guessing_game() -> (GameSpec, Vec<Rational>) {
        let game = GameSpec::new(
            vec!["guesser".into(), "left".into(), "right".into()],
            vec![
                vec!["same".into(), "ab".into(), "ba".into()],
                vec!["a".into(), "b".into()],
                vec!["a".into(), "b".into()],
            ],
            vec![
                crate::model::Objective::MeanLimsup(vec![rat(0); 12]),
                crate::model::Objective::MeanLimsup(vec![rat(0); 12]),
                crate::model::Objective::MeanLimsup(vec![rat(0); 12]),
            ],
        )
        .unwrap();
        let mut w0 = vec![rat(0); 12];
        for p in 0..12 {
            let a = game.decode(p);
            let hit = match a[0] {
                0 => a[1] == a[2],
                1 => a[1] == 0 && a[2] == 1,
                _ => a[1] == 1 && a[2] == 0,
            };
            if hit {
                w0[p] = rat(1);
            }
        }
        (game, w0)
    }

    #[test]
    fn expected_weight_matches_hand_computation() {
        let (game, weights) = dilemma();
        let profile = vec![
            MixedAction::new(0, vec![ratio(1, 2), ratio(1, 2)]).unwrap(),
            MixedAction::new(1, vec![ratio(1, 4), ratio(3, 4)]).unwrap(),
        ];
        // E[w_0] = 1/8*3 + 3/8*0 + 1/8*4 + 3/8*1 = 3/8 + 4/8 + 3/8 = 10/8.
        assert_eq!(expected_weight(&game, &weights[0], &profile), ratio(10, 8));
    }

    #[test]
    fn dilemma_punishment_level_is_mutual_defection() {
        let (game, weights) = dilemma();
        for player in 0..2 {
            let cor = correlated_minmax(&game, &weights[player], player).unwrap();
            assert_eq!(cor.value, rat(1));
            let ind = independent_minmax(&game, &weights[player], player, &MinmaxOptions::default()).unwrap();
            assert_eq!(ind.value, rat(1));
            // The punishing opponent defects outright.
            let opponent = 1 - player;
            assert_eq!(ind.profile[opponent].as_pure(), Some(1));
        }
    }

    #[test]
    fn matching_pennies_punishment_level_is_half() {
        let (game, weights) = matching_pennies();
        let cor = correlated_minmax(&game, &weights[0], 0).unwrap();
        assert_eq!(cor.value, ratio(1, 2));
        assert_eq!(cor.coalition, vec![ratio(1, 2), ratio(1, 2)]);
        let ind = independent_minmax(&game, &weights[0], 0, &MinmaxOptions::default()).unwrap();
        assert_eq!(ind.value, ratio(1, 2));
    }

    #[test]
    fn correlation_gap_appears_with_three_players() {
        let (game, w0) = guessing_game();
        let cor = correlated_minmax(&game, &w0, 0).unwrap();
        // The three guesses partition the coalition square, so the coalition
        // spreads mass equally across the three events.
        assert_eq!(cor.value, ratio(1, 3));
        let ind = independent_minmax(&game, &w0, 0, &MinmaxOptions::default()).unwrap();
        // Any product profile leaves at least 4/9 for the guesser; descent
        // plateaus sit below 1/2.
        assert!(ind.value >= ratio(4, 9), "independent level {} below 4/9", ind.value);
        assert!(ind.value <= ratio(1, 2));
        assert!(&ind.value - &cor.value >= ratio(1, 10));
    }

    #[test]
    fn independent_level_never_beats_the_correlated_level() {
        // Random small integer games: an exact invariant, no tolerance.
        let mut rng = ChaCha12Rng::seed_from_u64(0xFEED);
        for _ in 0..12 {
            let game = GameSpec::new(
                vec!["p0".into(), "p1".into(), "p2".into()],
                vec![
                    vec!["x".into(), "y".into()],
                    vec!["x".into(), "y".into()],
                    vec!["x".into(), "y".into()],
                ],
                vec![
                    crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
                    crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
                    crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
                ],
            )
            .unwrap();
            let weights: Vec<Rational> = (0..8).map(|_| rat(rng.gen_range(-5..=5))).collect();
            let cor = correlated_minmax(&game, &weights, 0).unwrap();
            let ind = independent_minmax(&game, &weights, 0, &MinmaxOptions::default()).unwrap();
            assert!(ind.value >= cor.value, "independent {} < correlated {}", ind.value, cor.value);
        }
    }

    #[test]
    fn dilemma_nash_is_mutual_defection() {
        let (game, weights) = dilemma();
        let nash = one_shot_nash(&game, &weights, &NashOptions::default()).unwrap();
        assert_eq!(nash.profile[0].as_pure(), Some(1));
        assert_eq!(nash.profile[1].as_pure(), Some(1));
        assert_eq!(nash.values, vec![rat(1), rat(1)]);
        assert_eq!(nash.deviation_gain, rat(0));
    }

    #[test]
    fn matching_pennies_nash_is_uniform_exactly() {
        let (game, weights) = matching_pennies();
        let nash = one_shot_nash(&game, &weights, &NashOptions::default()).unwrap();
        for i in 0..2 {
            assert_eq!(nash.profile[i].probs(), [ratio(1, 2), ratio(1, 2)].as_slice());
        }
        assert_eq!(nash.values, vec![ratio(1, 2), ratio(1, 2)]);
        assert_eq!(nash.deviation_gain, rat(0));
    }

    /// Three-player cyclic anti-coordination with a head-start bonus: each
    /// player wants to differ from the next one around the circle and gets a
    /// bonus of 1/4 for the first action.  No pure Nash exists; in the fully
    /// mixed one every player puts exactly 5/8 on the first action.
    #[test]
    fn three_player_mixed_nash_verifies_exactly() {
        let game = GameSpec::new(
            vec!["p0".into(), "p1".into(), "p2".into()],
            vec![
                vec!["H".into(), "T".into()],
                vec!["H".into(), "T".into()],
                vec!["H".into(), "T".into()],
            ],
            vec![
                crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
                crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
                crate::model::Objective::MeanLimsup(vec![rat(0); 8]),
            ],
        )
        .unwrap();
        let mut weights = vec![vec![rat(0); 8]; 3];
        for p in 0..8 {
            let a = game.decode(p);
            for i in 0..3 {
                let next = (i + 1) % 3;
                let mut w = rat(0);
                if a[i] != a[next] {
                    w += rat(1);
                }
                if a[i] == 0 {
                    w += ratio(1, 4);
                }
                weights[i][p] = w;
            }
        }
        let nash = one_shot_nash(&game, &weights, &NashOptions::default()).unwrap();
        assert!(nash.deviation_gain <= ratio(1, 1_000_000_000));
        for i in 0..3 {
            let p_first = nash.profile[i].prob(0).clone();
            let err = if p_first >= ratio(5, 8) {
                &p_first - ratio(5, 8)
            } else {
                ratio(5, 8) - &p_first
            };
            assert!(err <= ratio(1, 1_000_000), "player {i} weight on H was {p_first}");
        }
    }

    #[test]
    fn nash_search_budget_is_respected() {
        let (game, weights) = matching_pennies();
        let options = NashOptions {
            support_budget: 0,
            ..NashOptions::default()
        };
        let err = one_shot_nash(&game, &weights, &options).unwrap_err();
        assert!(matches!(err, OneshotError::NashSearchExhausted { .. }));
    }

    #[test]
    fn single_player_levels_are_plain_maxima() {
        let game = GameSpec::new(
            vec!["solo".into()],
            vec![vec!["a".into(), "b".into(), "c".into()]],
            vec![crate::model::Objective::MeanLimsup(vec![rat(2), rat(7), rat(5)])],
        )
        .unwrap();
        let weights = vec![rat(2), rat(7), rat(5)];
        let cor = correlated_minmax(&game, &weights, 0).unwrap();
        assert_eq!(cor.value, rat(7));
        let ind = independent_minmax(&game, &weights, 0, &MinmaxOptions::default()).unwrap();
        assert_eq!(ind.value, rat(7));
        assert_eq!(ind.profile[0].as_pure(), Some(1));
    }
}
