//! Exact finite Markov decision process machinery: chain analysis
//! (recurrent classes, stationary distributions, absorption probabilities),
//! multichain average-reward policy iteration, maximal end components, and
//! maximal reachability probabilities.
//!
//! Everything here is computed over exact rationals.  Policy iteration and
//! the reachability solver use strict-improvement rules that keep the
//! incumbent action on ties, which guarantees finite termination; hitting
//! the generous iteration caps would indicate a bug and panics.

use std::collections::BTreeSet;

use crate::model::{ActionId, StateId};
use crate::rational::{self, Rational};

/// One sparse row of a transition matrix: `(successor, probability)` pairs.
pub type SparseRow = Vec<(StateId, Rational)>;

/// A finite MDP with rational transition probabilities and rewards.
/// State `s` has `transitions[s].len()` actions; `transitions[s][a]` is the
/// successor distribution and `rewards[s][a]` the immediate reward.
#[derive(Debug, Clone)]
pub struct Mdp {
    pub transitions: Vec<Vec<SparseRow>>,
    pub rewards: Vec<Vec<Rational>>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_actions(&self, state: StateId) -> usize {
        self.transitions[state].len()
    }

    /// Check shape and stochasticity; used by debug assertions in the
    /// solvers and directly by tests.
    pub fn is_well_formed(&self) -> bool {
        if self.rewards.len() != self.transitions.len() {
            return false;
        }
        for (s, actions) in self.transitions.iter().enumerate() {
            if actions.is_empty() || self.rewards[s].len() != actions.len() {
                return false;
            }
            for row in actions {
                let mut total = rational::rat(0);
                for (t, p) in row {
                    if *t >= self.n_states() || p < &rational::rat(0) {
                        return false;
                    }
                    total += p;
                }
                if total != rational::rat(1) {
                    return false;
                }
            }
        }
        true
    }
}

/// Exact Gaussian elimination; returns `None` on a singular matrix.
pub(crate) fn solve_linear_exact(
    mut matrix: Vec<Vec<Rational>>,
    mut rhs: Vec<Rational>,
) -> Option<Vec<Rational>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot_row = (col..n).find(|&r| matrix[r][col] != rational::rat(0))?;
        matrix.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = matrix[col][col].clone();
        for entry in matrix[col].iter_mut() {
            *entry /= &pivot;
        }
        rhs[col] /= &pivot;
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = matrix[row][col].clone();
            if factor == rational::rat(0) {
                continue;
            }
            for c in 0..n {
                let delta = &factor * &matrix[col][c];
                matrix[row][c] -= delta;
            }
            let delta = &factor * &rhs[col];
            rhs[row] -= delta;
        }
    }
    Some(rhs)
}

/// Strongly connected components of a directed graph, via iterative Tarjan.
/// Components are returned in reverse topological order (every edge leaving
/// a component points to an earlier entry in the result).
pub fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adjacency.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components: Vec<Vec<usize>> = Vec::new();

    // Explicit DFS stack of (node, next-edge-position) to avoid recursion.
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut edge_pos)) = call_stack.last_mut() {
            if *edge_pos == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adjacency[v].get(*edge_pos) {
                *edge_pos += 1;
                if index[w] == usize::MAX {
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("Tarjan stack underflow");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
                call_stack.pop();
                if let Some(&mut (parent, _)) = call_stack.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    components
}

/// Full structural analysis of a finite Markov chain given by sparse rows.
#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    /// Recurrent (closed) classes, each sorted ascending.
    pub recurrent_classes: Vec<Vec<StateId>>,
    /// For each state, the index of its recurrent class, or `None` if the
    /// state is transient.
    pub class_of: Vec<Option<usize>>,
    /// Per class, the exact stationary distribution as a full-length vector
    /// (zero off the class).
    pub stationary: Vec<Vec<Rational>>,
    /// `absorption[s][c]` is the exact probability that the chain started
    /// at `s` eventually enters (and then stays in) class `c`.
    pub absorption: Vec<Vec<Rational>>,
}

/// Analyse a Markov chain: classify states, compute stationary
/// distributions of the recurrent classes, and absorption probabilities.
pub fn analyze_chain(rows: &[SparseRow]) -> ChainAnalysis {
    let n = rows.len();
    let adjacency: Vec<Vec<usize>> = rows
        .iter()
        .map(|row| row.iter().filter(|(_, p)| p != &rational::rat(0)).map(|(t, _)| *t).collect())
        .collect();
    let sccs = strongly_connected_components(&adjacency);

    let mut scc_of = vec![0usize; n];
    for (k, scc) in sccs.iter().enumerate() {
        for &s in scc {
            scc_of[s] = k;
        }
    }
    // A class is recurrent exactly when no edge leaves its component.
    let mut recurrent_classes = Vec::new();
    let mut class_of = vec![None; n];
    for scc in &sccs {
        let closed = scc
            .iter()
            .all(|&s| adjacency[s].iter().all(|&t| scc_of[t] == scc_of[scc[0]]));
        if closed {
            for &s in scc {
                class_of[s] = Some(recurrent_classes.len());
            }
            recurrent_classes.push(scc.clone());
        }
    }

    // Stationary distribution per class: solve mu P = mu, sum mu = 1 on the
    // class (replace one balance equation with the normalisation).
    let mut stationary = Vec::with_capacity(recurrent_classes.len());
    for class in &recurrent_classes {
        let k = class.len();
        let pos = |s: StateId| class.binary_search(&s).expect("state in its own class");
        let mut matrix = vec![vec![rational::rat(0); k]; k];
        let mut rhs = vec![rational::rat(0); k];
        // Rows 0..k-1: balance at class[1..]; row k-1 is replaced below.
        for (si, &s) in class.iter().enumerate() {
            for (t, p) in &rows[s] {
                if p == &rational::rat(0) {
                    continue;
                }
                let ti = pos(*t);
                if ti > 0 {
                    matrix[ti - 1][si] += p;
                }
            }
        }
        for si in 1..k {
            matrix[si - 1][si] -= rational::rat(1);
        }
        for entry in matrix[k - 1].iter_mut() {
            *entry = rational::rat(1);
        }
        rhs[k - 1] = rational::rat(1);
        let mu = solve_linear_exact(matrix, rhs).expect("irreducible classes have unique stationary laws");
        let mut full = vec![rational::rat(0); n];
        for (si, &s) in class.iter().enumerate() {
            full[s] = mu[si].clone();
        }
        stationary.push(full);
    }

    // Absorption probabilities from transient states: one exact solve of
    // (I - P_TT) h = P_{T -> class} per class.
    let transients: Vec<StateId> = (0..n).filter(|&s| class_of[s].is_none()).collect();
    let tpos = |s: StateId| transients.binary_search(&s).expect("transient state");
    let m = transients.len();
    let mut absorption = vec![vec![rational::rat(0); recurrent_classes.len()]; n];
    for (s, abs) in absorption.iter_mut().enumerate() {
        if let Some(c) = class_of[s] {
            abs[c] = rational::rat(1);
        }
    }
    if m > 0 {
        let mut base = vec![vec![rational::rat(0); m]; m];
        for (si, &s) in transients.iter().enumerate() {
            base[si][si] = rational::rat(1);
            for (t, p) in &rows[s] {
                if class_of[*t].is_none() {
                    base[si][tpos(*t)] -= p;
                }
            }
        }
        for c in 0..recurrent_classes.len() {
            let mut rhs = vec![rational::rat(0); m];
            for (si, &s) in transients.iter().enumerate() {
                for (t, p) in &rows[s] {
                    if class_of[*t] == Some(c) {
                        rhs[si] += p;
                    }
                }
            }
            let h = solve_linear_exact(base.clone(), rhs).expect("transient block is nonsingular");
            for (si, &s) in transients.iter().enumerate() {
                absorption[s][c] = h[si].clone();
            }
        }
    }

    ChainAnalysis {
        recurrent_classes,
        class_of,
        stationary,
        absorption,
    }
}

impl ChainAnalysis {
    /// Long-run average of `rewards` per recurrent class.
    pub fn class_gains(&self, rewards: &[Rational]) -> Vec<Rational> {
        self.stationary
            .iter()
            .map(|mu| {
                let mut g = rational::rat(0);
                for (s, m) in mu.iter().enumerate() {
                    if m != &rational::rat(0) {
                        g += m * &rewards[s];
                    }
                }
                g
            })
            .collect()
    }

    /// Expected long-run average reward starting from each state.
    pub fn state_gains(&self, rewards: &[Rational]) -> Vec<Rational> {
        let class_gain = self.class_gains(rewards);
        self.absorption
            .iter()
            .map(|abs| {
                let mut g = rational::rat(0);
                for (c, p) in abs.iter().enumerate() {
                    if p != &rational::rat(0) {
                        g += p * &class_gain[c];
                    }
                }
                g
            })
            .collect()
    }
}

/// Gain and bias of a fixed stationary policy.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub gain: Vec<Rational>,
    pub bias: Vec<Rational>,
}

/// Exact multichain policy evaluation.  The bias is normalised to zero at
/// the smallest state of every recurrent class.
pub fn evaluate_policy(mdp: &Mdp, policy: &[ActionId]) -> PolicyEvaluation {
    let n = mdp.n_states();
    let rows: Vec<SparseRow> = (0..n).map(|s| mdp.transitions[s][policy[s]].clone()).collect();
    let rewards: Vec<Rational> = (0..n).map(|s| mdp.rewards[s][policy[s]].clone()).collect();
    let analysis = analyze_chain(&rows);
    let gain = analysis.state_gains(&rewards);

    let mut bias = vec![rational::rat(0); n];
    // Recurrent classes: solve (I - P) h = r - g with h(reference) = 0,
    // replacing the reference state's balance row by the normalisation.
    for class in &analysis.recurrent_classes {
        let k = class.len();
        let pos = |s: StateId| class.binary_search(&s).expect("state in class");
        let mut matrix = vec![vec![rational::rat(0); k]; k];
        let mut rhs = vec![rational::rat(0); k];
        for (si, &s) in class.iter().enumerate() {
            if si == 0 {
                matrix[0][0] = rational::rat(1); // h(reference) = 0
                continue;
            }
            matrix[si][si] += rational::rat(1);
            for (t, p) in &rows[s] {
                matrix[si][pos(*t)] -= p;
            }
            rhs[si] = &rewards[s] - &gain[s];
        }
        let h = solve_linear_exact(matrix, rhs).expect("bias system is nonsingular on a class");
        for (si, &s) in class.iter().enumerate() {
            bias[s] = h[si].clone();
        }
    }
    // Transient states: (I - P_TT) h_T = r_T - g_T + P_{T->R} h_R.
    let transients: Vec<StateId> = (0..n).filter(|&s| analysis.class_of[s].is_none()).collect();
    if !transients.is_empty() {
        let m = transients.len();
        let tpos = |s: StateId| transients.binary_search(&s).expect("transient state");
        let mut matrix = vec![vec![rational::rat(0); m]; m];
        let mut rhs = vec![rational::rat(0); m];
        for (si, &s) in transients.iter().enumerate() {
            matrix[si][si] += rational::rat(1);
            rhs[si] = &rewards[s] - &gain[s];
            for (t, p) in &rows[s] {
                if analysis.class_of[*t].is_none() {
                    matrix[si][tpos(*t)] -= p;
                } else {
                    rhs[si] += p * &bias[*t];
                }
            }
        }
        let h = solve_linear_exact(matrix, rhs).expect("transient bias system is nonsingular");
        for (si, &s) in transients.iter().enumerate() {
            bias[s] = h[si].clone();
        }
    }

    PolicyEvaluation { gain, bias }
}

/// Result of average-reward optimisation.
#[derive(Debug, Clone)]
pub struct AverageOptimum {
    pub gain: Vec<Rational>,
    pub bias: Vec<Rational>,
    pub policy: Vec<ActionId>,
    pub iterations: usize,
}

const PI_ITERATION_CAP: usize = 100_000;

/// Exact multichain average-reward policy iteration.
///
/// Improvement is two-phase: raise the expected gain where possible; among
/// gain-preserving actions, raise the bias.  The incumbent action is kept
/// unless an alternative is strictly better, and ties among improvers break
/// toward the lowest action id, which together with exact arithmetic makes
/// the iteration finite and deterministic.
pub fn optimal_average_reward(mdp: &Mdp) -> AverageOptimum {
    debug_assert!(mdp.is_well_formed(), "malformed MDP");
    let n = mdp.n_states();
    let mut policy: Vec<ActionId> = vec![0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        assert!(
            iterations <= PI_ITERATION_CAP,
            "policy iteration did not terminate; this is a solver bug"
        );
        let eval = evaluate_policy(mdp, &policy);
        let mut changed = false;
        for s in 0..n {
            let expected_gain = |a: ActionId| -> Rational {
                let mut g = rational::rat(0);
                for (t, p) in &mdp.transitions[s][a] {
                    g += p * &eval.gain[*t];
                }
                g
            };
            let incumbent_gain = expected_gain(policy[s]);
            debug_assert_eq!(incumbent_gain, eval.gain[s], "evaluation fixed point violated");
            let mut best_action = policy[s];
            let mut best_gain = incumbent_gain;
            for a in 0..mdp.n_actions(s) {
                if a == policy[s] {
                    continue;
                }
                let g = expected_gain(a);
                if g > best_gain || (g == best_gain && best_action != policy[s] && a < best_action) {
                    best_gain = g;
                    best_action = a;
                }
            }
            if best_action != policy[s] {
                policy[s] = best_action;
                changed = true;
                continue;
            }
            // Phase two: among actions preserving the gain, improve bias.
            let weight = |a: ActionId| -> Rational {
                let mut w = &mdp.rewards[s][a] - &eval.gain[s];
                for (t, p) in &mdp.transitions[s][a] {
                    w += p * &eval.bias[*t];
                }
                w
            };
            let incumbent_weight = weight(policy[s]);
            debug_assert_eq!(incumbent_weight, eval.bias[s], "bias fixed point violated");
            let mut best_action = policy[s];
            let mut best_weight = incumbent_weight;
            for a in 0..mdp.n_actions(s) {
                if a == policy[s] || expected_gain(a) != eval.gain[s] {
                    continue;
                }
                let w = weight(a);
                if w > best_weight || (w == best_weight && best_action != policy[s] && a < best_action) {
                    best_weight = w;
                    best_action = a;
                }
            }
            if best_action != policy[s] {
                policy[s] = best_action;
                changed = true;
            }
        }
        if !changed {
            let eval = evaluate_policy(mdp, &policy);
            return AverageOptimum {
                gain: eval.gain,
                bias: eval.bias,
                policy,
                iterations,
            };
        }
    }
}

/// A maximal end component: its states and the state-action pairs that stay
/// inside it.
#[derive(Debug, Clone)]
pub struct EndComponent {
    pub states: Vec<StateId>,
    pub actions: Vec<(StateId, ActionId)>,
}

/// Maximal end components of the sub-MDP on `allowed` states (an action is
/// usable only if its whole successor support stays inside the candidate
/// component).  Components are returned sorted by smallest state.
pub fn maximal_end_components(mdp: &Mdp, allowed: &BTreeSet<StateId>) -> Vec<EndComponent> {
    let mut final_components: Vec<EndComponent> = Vec::new();
    let mut queue: Vec<Vec<StateId>> = vec![allowed.iter().copied().collect()];
    while let Some(candidate) = queue.pop() {
        if candidate.is_empty() {
            continue;
        }
        let inside: BTreeSet<StateId> = candidate.iter().copied().collect();
        // Actions whose support stays inside the candidate.
        let staying: Vec<Vec<ActionId>> = candidate
            .iter()
            .map(|&s| {
                (0..mdp.n_actions(s))
                    .filter(|&a| {
                        mdp.transitions[s][a]
                            .iter()
                            .all(|(t, p)| p == &rational::rat(0) || inside.contains(t))
                    })
                    .collect()
            })
            .collect();
        let index_of = |s: StateId| candidate.binary_search(&s).expect("state in candidate");
        let adjacency: Vec<Vec<usize>> = candidate
            .iter()
            .enumerate()
            .map(|(si, &s)| {
                let mut out: BTreeSet<usize> = BTreeSet::new();
                for &a in &staying[si] {
                    for (t, p) in &mdp.transitions[s][a] {
                        if p != &rational::rat(0) {
                            out.insert(index_of(*t));
                        }
                    }
                }
                out.into_iter().collect()
            })
            .collect();
        let sccs = strongly_connected_components(&adjacency);
        let is_whole = sccs.len() == 1 && sccs[0].len() == candidate.len();
        let all_have_actions = candidate
            .iter()
            .enumerate()
            .all(|(si, _)| !staying[si].is_empty());
        if is_whole && all_have_actions {
            // Stable: candidate is an end component. Singleton components
            // additionally need a self-looping action to qualify.
            if candidate.len() == 1 {
                let s = candidate[0];
                let has_loop = staying[0]
                    .iter()
                    .any(|&a| mdp.transitions[s][a].iter().any(|(t, p)| *t == s && p != &rational::rat(0)));
                if !has_loop {
                    continue;
                }
            }
            let actions = candidate
                .iter()
                .enumerate()
                .flat_map(|(si, &s)| staying[si].iter().map(move |&a| (s, a)))
                .collect();
            final_components.push(EndComponent {
                states: candidate.clone(),
                actions,
            });
            continue;
        }
        // Refine: recurse on each SCC, dropping states without any staying
        // action (they cannot belong to an end component inside this set).
        // Each refined set is strictly smaller (either the SCC split was
        // proper, or a state lost all of its actions), so this terminates.
        for scc in sccs {
            let sub: Vec<StateId> = scc
                .iter()
                .map(|&si| candidate[si])
                .filter(|&s| !staying[index_of(s)].is_empty())
                .collect();
            debug_assert!(sub.len() < candidate.len(), "end-component refinement must shrink");
            queue.push(sub);
        }
    }
    final_components.sort_by_key(|c| c.states[0]);
    final_components
}

const REACHABILITY_ITERATION_CAP: usize = 100_000;

/// Exact maximal probability of reaching `targets`, for every state.
///
/// Method: states that cannot reach a target in the support graph get value
/// zero; maximal end components among the remaining states are collapsed to
/// single nodes (their internal actions are irrelevant for reachability);
/// the quotient has no end components outside targets and dead states, so
/// every stationary policy is proper and policy iteration with strict
/// improvement terminates at the exact optimum.
pub fn max_reachability(mdp: &Mdp, targets: &BTreeSet<StateId>) -> Vec<Rational> {
    let n = mdp.n_states();
    // Backward reachability in the support graph: which states can reach a
    // target at all (under the best possible resolution of actions)?
    let mut can_reach = vec![false; n];
    let mut frontier: Vec<StateId> = targets.iter().copied().collect();
    for &t in targets {
        can_reach[t] = true;
    }
    let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for s in 0..n {
        for a in 0..mdp.n_actions(s) {
            for (t, p) in &mdp.transitions[s][a] {
                if p != &rational::rat(0) {
                    reverse[*t].push(s);
                }
            }
        }
    }
    while let Some(t) = frontier.pop() {
        for &s in &reverse[t] {
            if !can_reach[s] {
                can_reach[s] = true;
                frontier.push(s);
            }
        }
    }

    let mut value = vec![rational::rat(0); n];
    for &t in targets {
        value[t] = rational::rat(1);
    }
    let middle: BTreeSet<StateId> = (0..n)
        .filter(|&s| can_reach[s] && !targets.contains(&s))
        .collect();
    if middle.is_empty() {
        return value;
    }

    // Collapse maximal end components among the undecided states.
    let mecs = maximal_end_components(mdp, &middle);
    let mut node_of = vec![usize::MAX; n];
    let mut nodes: Vec<Vec<StateId>> = Vec::new();
    for mec in &mecs {
        for &s in &mec.states {
            node_of[s] = nodes.len();
        }
        nodes.push(mec.states.clone());
    }
    for &s in &middle {
        if node_of[s] == usize::MAX {
            node_of[s] = nodes.len();
            nodes.push(vec![s]);
        }
    }
    let n_nodes = nodes.len();
    let in_mec: Vec<BTreeSet<StateId>> = nodes.iter().map(|ns| ns.iter().copied().collect()).collect();

    // Quotient actions: every (state, action) of a node's members whose
    // support is not fully inside the node. Successors map to WIN (target),
    // LOSE (unreachable), or another node.
    #[derive(Clone)]
    enum QSucc {
        Win(Rational),
        Lose,
        Node(usize, Rational),
    }
    let mut q_actions: Vec<Vec<Vec<QSucc>>> = vec![Vec::new(); n_nodes];
    for (node, members) in nodes.iter().enumerate() {
        for &s in members {
            for a in 0..mdp.n_actions(s) {
                let stays = mdp.transitions[s][a]
                    .iter()
                    .all(|(t, p)| p == &rational::rat(0) || in_mec[node].contains(t));
                if stays {
                    continue;
                }
                let mut summary: Vec<QSucc> = Vec::new();
                let mut win = rational::rat(0);
                let mut lose = rational::rat(0);
                let mut per_node = vec![rational::rat(0); n_nodes];
                for (t, p) in &mdp.transitions[s][a] {
                    if p == &rational::rat(0) {
                        continue;
                    }
                    if targets.contains(t) {
                        win += p;
                    } else if !can_reach[*t] {
                        lose += p;
                    } else {
                        per_node[node_of[*t]] += p;
                    }
                }
                if win != rational::rat(0) {
                    summary.push(QSucc::Win(win));
                }
                if lose != rational::rat(0) {
                    summary.push(QSucc::Lose);
                }
                for (m, p) in per_node.into_iter().enumerate() {
                    if p != rational::rat(0) {
                        summary.push(QSucc::Node(m, p));
                    }
                }
                q_actions[node].push(summary);
            }
        }
        assert!(
            !q_actions[node].is_empty(),
            "an end component with no exit cannot reach the target and should have value zero"
        );
    }

    // Policy iteration on the quotient: every policy is proper, so the
    // evaluation system is nonsingular and strict improvement terminates.
    let mut policy: Vec<usize> = vec![0; n_nodes];
    let mut iterations = 0;
    let node_values: Vec<Rational> = loop {
        iterations += 1;
        assert!(
            iterations <= REACHABILITY_ITERATION_CAP,
            "reachability policy iteration did not terminate; this is a solver bug"
        );
        // Evaluate: (I - P) x = win-vector.
        let mut matrix = vec![vec![rational::rat(0); n_nodes]; n_nodes];
        let mut rhs = vec![rational::rat(0); n_nodes];
        for node in 0..n_nodes {
            matrix[node][node] += rational::rat(1);
            for succ in &q_actions[node][policy[node]] {
                match succ {
                    QSucc::Win(p) => rhs[node] += p,
                    QSucc::Lose => {}
                    QSucc::Node(m, p) => matrix[node][*m] -= p,
                }
            }
        }
        let x = solve_linear_exact(matrix, rhs)
            .expect("proper policies yield a nonsingular reachability system");
        let mut changed = false;
        for node in 0..n_nodes {
            let score = |a: usize| -> Rational {
                let mut v = rational::rat(0);
                for succ in &q_actions[node][a] {
                    match succ {
                        QSucc::Win(p) => v += p,
                        QSucc::Lose => {}
                        QSucc::Node(m, p) => v += p * &x[*m],
                    }
                }
                v
            };
            let incumbent = score(policy[node]);
            let mut best = policy[node];
            let mut best_score = incumbent;
            for a in 0..q_actions[node].len() {
                if a == policy[node] {
                    continue;
                }
                let v = score(a);
                if v > best_score || (v == best_score && best != policy[node] && a < best) {
                    best_score = v;
                    best = a;
                }
            }
            if best != policy[node] {
                policy[node] = best;
                changed = true;
            }
        }
        if !changed {
            break x;
        }
    };
    for s in &middle {
        value[*s] = node_values[node_of[*s]].clone();
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn row(entries: &[(usize, Rational)]) -> SparseRow {
        entries.to_vec()
    }

    #[test]
    fn chain_analysis_matches_hand_computation() {
        // 0 -> {1 w.p. 1/2, 3 w.p. 1/2}; 1 <-> 2 deterministically; 3 absorbing.
        let rows = vec![
            row(&[(1, ratio(1, 2)), (3, ratio(1, 2))]),
            row(&[(2, rat(1))]),
            row(&[(1, rat(1))]),
            row(&[(3, rat(1))]),
        ];
        let analysis = analyze_chain(&rows);
        assert_eq!(analysis.recurrent_classes.len(), 2);
        assert_eq!(analysis.class_of[0], None);
        let cycle_class = analysis.class_of[1].unwrap();
        assert_eq!(analysis.class_of[2], Some(cycle_class));
        let sink_class = analysis.class_of[3].unwrap();
        assert_eq!(analysis.stationary[cycle_class][1], ratio(1, 2));
        assert_eq!(analysis.stationary[cycle_class][2], ratio(1, 2));
        assert_eq!(analysis.absorption[0][cycle_class], ratio(1, 2));
        assert_eq!(analysis.absorption[0][sink_class], ratio(1, 2));
        // Gains: cycle averages rewards of states 1 and 2; start state mixes.
        let rewards = vec![rat(0), rat(2), rat(4), rat(1)];
        let gains = analysis.state_gains(&rewards);
        assert_eq!(gains[1], rat(3));
        assert_eq!(gains[3], rat(1));
        assert_eq!(gains[0], rat(2)); // (3 + 1) / 2
    }

    #[test]
    fn stationary_distribution_of_a_biased_two_cycle() {
        // 0 stays w.p. 2/3 else moves; 1 always returns to 0.
        let rows = vec![
            row(&[(0, ratio(2, 3)), (1, ratio(1, 3))]),
            row(&[(0, rat(1))]),
        ];
        let analysis = analyze_chain(&rows);
        assert_eq!(analysis.recurrent_classes.len(), 1);
        // mu solves mu0 = 2/3 mu0 + mu1, mu0 + mu1 = 1 => mu0 = 3/4.
        assert_eq!(analysis.stationary[0][0], ratio(3, 4));
        assert_eq!(analysis.stationary[0][1], ratio(1, 4));
    }

    #[test]
    fn policy_iteration_prefers_the_better_loop() {
        // State 0 chooses between two absorbing loops with different rewards.
        let mdp = Mdp {
            transitions: vec![
                vec![row(&[(1, rat(1))]), row(&[(2, rat(1))])],
                vec![row(&[(1, rat(1))])],
                vec![row(&[(2, rat(1))])],
            ],
            rewards: vec![vec![rat(0), rat(0)], vec![rat(1)], vec![rat(3)]],
        };
        let opt = optimal_average_reward(&mdp);
        assert_eq!(opt.gain, vec![rat(3), rat(1), rat(3)]);
        assert_eq!(opt.policy[0], 1);
    }

    #[test]
    fn policy_iteration_uses_bias_to_break_gain_ties() {
        // Both actions at state 0 eventually reach the same loop; the
        // second collects a better one-off reward on the way.
        let mdp = Mdp {
            transitions: vec![
                vec![row(&[(1, rat(1))]), row(&[(1, rat(1))])],
                vec![row(&[(1, rat(1))])],
            ],
            rewards: vec![vec![rat(0), rat(7)], vec![rat(2)]],
        };
        let opt = optimal_average_reward(&mdp);
        assert_eq!(opt.gain, vec![rat(2), rat(2)]);
        assert_eq!(opt.policy[0], 1);
        // Bias difference records the transient reward advantage.
        assert_eq!(opt.bias[0], rat(5)); // 7 - 2 (gain) + bias(1) = 5
    }

    #[test]
    fn policy_iteration_handles_randomised_transitions() {
        // A coin decides whether the jump pays off; staying is safe.
        let mdp = Mdp {
            transitions: vec![
                vec![
                    row(&[(0, rat(1))]),
                    row(&[(1, ratio(1, 2)), (2, ratio(1, 2))]),
                ],
                vec![row(&[(1, rat(1))])],
                vec![row(&[(2, rat(1))])],
            ],
            rewards: vec![vec![rat(2), rat(0)], vec![rat(6)], vec![rat(0)]],
        };
        let opt = optimal_average_reward(&mdp);
        // Jumping earns (6 + 0) / 2 = 3 on average, beating 2.
        assert_eq!(opt.gain[0], rat(3));
        assert_eq!(opt.policy[0], 1);
    }

    /// Independent oracle: enumerate every stationary deterministic policy,
    /// evaluate its gain exactly through the chain machinery, and compare
    /// the per-state maxima with the policy-iteration result.
    #[test]
    fn policy_iteration_matches_exhaustive_policy_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xBEEF);
        for instance in 0..20 {
            let n = 3 + (instance % 2); // 3 or 4 states
            let mdp = random_mdp(&mut rng, n, 2);
            let opt = optimal_average_reward(&mdp);
            let brute = brute_force_gains(&mdp);
            assert_eq!(opt.gain, brute, "instance {instance} disagreed");
        }
    }

    fn random_mdp(rng: &mut ChaCha12Rng, n: usize, actions: usize) -> Mdp {
        let mut transitions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let mut state_rows = Vec::with_capacity(actions);
            let mut state_rewards = Vec::with_capacity(actions);
            for _ in 0..actions {
                // Sparse random row over a small denominator grid.
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                let num = rng.gen_range(0..=4);
                let p = ratio(num, 4);
                let q = rat(1) - &p;
                let mut row: SparseRow = Vec::new();
                if p != rat(0) {
                    row.push((a, p));
                }
                if q != rat(0) {
                    row.push((b, q));
                }
                if row.is_empty() {
                    row.push((a, rat(1)));
                }
                // Merge duplicate successors for cleanliness.
                row.sort_by_key(|(t, _)| *t);
                let mut merged: SparseRow = Vec::new();
                for (t, p) in row {
                    match merged.last_mut() {
                        Some((lt, lp)) if *lt == t => *lp += p,
                        _ => merged.push((t, p)),
                    }
                }
                state_rows.push(merged);
                state_rewards.push(rat(rng.gen_range(-5..=5)));
            }
            transitions.push(state_rows);
            rewards.push(state_rewards);
        }
        Mdp { transitions, rewards }
    }

    fn brute_force_gains(mdp: &Mdp) -> Vec<Rational> {
        let n = mdp.n_states();
        let mut best: Option<Vec<Rational>> = None;
        let mut policy = vec![0usize; n];
        loop {
            let rows: Vec<SparseRow> = (0..n).map(|s| mdp.transitions[s][policy[s]].clone()).collect();
            let rewards: Vec<Rational> = (0..n).map(|s| mdp.rewards[s][policy[s]].clone()).collect();
            let gains = analyze_chain(&rows).state_gains(&rewards);
            best = Some(match best {
                None => gains,
                Some(b) => b
                    .into_iter()
                    .zip(gains)
                    .map(|(x, y)| if y > x { y } else { x })
                    .collect(),
            });
            // Odometer over policies.
            let mut k = 0;
            loop {
                if k == n {
                    return best.unwrap();
                }
                policy[k] += 1;
                if policy[k] < mdp.n_actions(k) {
                    break;
                }
                policy[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn end_components_are_found_and_refined() {
        // States 0,1 loop into each other; state 2 has only an exit action
        // back to 0 (not an EC on its own); state 3 self-loops.
        let mdp = Mdp {
            transitions: vec![
                vec![row(&[(1, rat(1))]), row(&[(2, rat(1))])],
                vec![row(&[(0, rat(1))])],
                vec![row(&[(3, rat(1))])],
                vec![row(&[(3, rat(1))])],
            ],
            rewards: vec![vec![rat(0), rat(0)], vec![rat(0)], vec![rat(0)], vec![rat(0)]],
        };
        let all: BTreeSet<StateId> = (0..4).collect();
        let mecs = maximal_end_components(&mdp, &all);
        let state_sets: Vec<Vec<StateId>> = mecs.iter().map(|m| m.states.clone()).collect();
        assert_eq!(state_sets, vec![vec![0, 1], vec![3]]);
        // The {0,1} component keeps only the staying action of state 0.
        assert!(mecs[0].actions.contains(&(0, 0)));
        assert!(!mecs[0].actions.contains(&(0, 1)));
    }

    #[test]
    fn reachability_handles_traps_and_choices() {
        // State 0 may gamble (reach target 3 w.p. 1/2, else trap 2) or walk
        // safely through 1 with certainty.
        let mdp = Mdp {
            transitions: vec![
                vec![
                    row(&[(3, ratio(1, 2)), (2, ratio(1, 2))]),
                    row(&[(1, rat(1))]),
                ],
                vec![row(&[(3, rat(1))])],
                vec![row(&[(2, rat(1))])],
                vec![row(&[(3, rat(1))])],
            ],
            rewards: vec![vec![rat(0), rat(0)], vec![rat(0)], vec![rat(0)], vec![rat(0)]],
        };
        let targets: BTreeSet<StateId> = [3].into_iter().collect();
        let value = max_reachability(&mdp, &targets);
        assert_eq!(value, vec![rat(1), rat(1), rat(0), rat(1)]);
    }

    #[test]
    fn reachability_escapes_end_components() {
        // States 0 and 1 form an end component; 1 can also exit to the
        // target. The optimal policy leaves, so the value is 1 everywhere
        // in the component.
        let mdp = Mdp {
            transitions: vec![
                vec![row(&[(1, rat(1))])],
                vec![row(&[(0, rat(1))]), row(&[(2, rat(1))])],
                vec![row(&[(2, rat(1))])],
            ],
            rewards: vec![vec![rat(0)], vec![rat(0), rat(0)], vec![rat(0)]],
        };
        let targets: BTreeSet<StateId> = [2].into_iter().collect();
        let value = max_reachability(&mdp, &targets);
        assert_eq!(value, vec![rat(1), rat(1), rat(1)]);
    }

    /// Independent oracle: enumerate every policy, make targets absorbing,
    /// and read the reach probability off the absorption analysis.
    #[test]
    fn reachability_matches_exhaustive_policy_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xCAFE);
        for instance in 0..20 {
            let n = 4;
            let mdp = random_mdp(&mut rng, n, 2);
            let targets: BTreeSet<StateId> = [0].into_iter().collect();
            let value = max_reachability(&mdp, &targets);
            let brute = brute_force_reachability(&mdp, &targets);
            assert_eq!(value, brute, "instance {instance} disagreed");
        }
    }

    fn brute_force_reachability(mdp: &Mdp, targets: &BTreeSet<StateId>) -> Vec<Rational> {
        let n = mdp.n_states();
        let mut best = vec![rat(0); n];
        let mut policy = vec![0usize; n];
        loop {
            let rows: Vec<SparseRow> = (0..n)
                .map(|s| {
                    if targets.contains(&s) {
                        vec![(s, rat(1))]
                    } else {
                        mdp.transitions[s][policy[s]].clone()
                    }
                })
                .collect();
            let analysis = analyze_chain(&rows);
            for s in 0..n {
                let mut reach = rat(0);
                for (c, class) in analysis.recurrent_classes.iter().enumerate() {
                    if class.iter().any(|t| targets.contains(t)) {
                        reach += &analysis.absorption[s][c];
                    }
                }
                if reach > best[s] {
                    best[s] = reach;
                }
            }
            let mut k = 0;
            loop {
                if k == n {
                    return best;
                }
                policy[k] += 1;
                if policy[k] < mdp.n_actions(k) {
                    break;
                }
                policy[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn sccs_of_a_line_graph_are_singletons_in_reverse_order() {
        let adjacency = vec![vec![1], vec![2], vec![]];
        let sccs = strongly_connected_components(&adjacency);
        assert_eq!(sccs, vec![vec![2], vec![1], vec![0]]);
    }
}
