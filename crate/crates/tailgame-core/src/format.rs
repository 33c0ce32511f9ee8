//! Line-oriented text formats for games, strategy machines, threat
//! reports, monitors, and certificates, plus content hashing.
//!
//! All formats share one shape: UTF-8 text, one record per line, fields
//! separated by whitespace, `#` starting a comment that runs to the end of
//! the line, blank lines ignored, and record order free except where a
//! record references another (nothing does — every parser resolves
//! references after reading the whole file).  Writers emit canonical
//! output — the same value always serializes to the same bytes — so files
//! can be content-hashed and independent runs compared byte-for-byte.
//!
//! Numbers are exact rationals (`3`, `-1/2`) except for the tolerance
//! parameters `epsilon` and `delta`, which are doubles printed in the
//! shortest form that parses back to the identical bit pattern.

use num::Zero;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::equilibrium::{BlameRule, BuildMethod, EquilibriumMachine, MonitorSpec, StateClass};
use crate::machine::FiniteMemoryProfile;
use crate::model::{ActionId, GameSpec, MixedAction, Objective, PlayerId, ProfileId, StateId};
use crate::punish::{PunishmentReport, ThreatEntry, ThreatMethod};
use crate::rational::{self, Rational};
use crate::verify::EquilibriumCertificate;

/// A parse failure, with the 1-based line it was detected on (line 0 marks
/// whole-file problems such as missing records).
#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn fail<T>(line: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        line,
        message: message.into(),
    })
}

/// SHA-256 of the text, lowercase hex.  Used to tie certificates to the
/// exact files they were computed from.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Meaningful lines: 1-based number plus comment-stripped, trimmed text.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            None
        } else {
            Some((k + 1, stripped))
        }
    })
}

fn parse_rational(token: &str, line: usize) -> Result<Rational, FormatError> {
    rational::parse(token).or_else(|e| fail(line, format!("bad rational '{token}': {e}")))
}

fn parse_bool(token: &str, line: usize) -> Result<bool, FormatError> {
    match token {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => fail(line, format!("expected 'true' or 'false', got '{token}'")),
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64, FormatError> {
    token
        .parse::<f64>()
        .or_else(|e| fail(line, format!("bad number '{token}': {e}")))
}

fn parse_usize(token: &str, line: usize) -> Result<usize, FormatError> {
    token
        .parse::<usize>()
        .or_else(|e| fail(line, format!("bad count '{token}': {e}")))
}

fn player_of(game: &GameSpec, name: &str, line: usize) -> Result<PlayerId, FormatError> {
    game.players
        .iter()
        .position(|p| p == name)
        .map_or_else(|| fail(line, format!("unknown player '{name}'")), Ok)
}

/// Resolve a comma-joined action-label tuple like `C,D` to a profile id.
fn profile_of(game: &GameSpec, text: &str, line: usize) -> Result<ProfileId, FormatError> {
    let labels: Vec<&str> = text.split(',').collect();
    if labels.len() != game.n_players() {
        return fail(
            line,
            format!(
                "profile '{text}' names {} actions, game has {} players",
                labels.len(),
                game.n_players()
            ),
        );
    }
    let mut actions: Vec<ActionId> = Vec::with_capacity(labels.len());
    for (j, label) in labels.iter().enumerate() {
        match game.actions[j].iter().position(|a| a == label) {
            Some(a) => actions.push(a),
            None => {
                return fail(
                    line,
                    format!("player '{}' has no action '{label}'", game.players[j]),
                )
            }
        }
    }
    Ok(game.encode(&actions))
}

/// Canonical comma-joined label for a profile.
fn profile_label(game: &GameSpec, profile: ProfileId) -> String {
    game.decode(profile)
        .iter()
        .enumerate()
        .map(|(j, &a)| game.actions[j][a].as_str())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Games
// ---------------------------------------------------------------------------

/// Parse a game description.
///
/// Records:
///
/// * `players <name>...` — exactly once; fixes player order.
/// * `actions <player> <label>...` — once per player; fixes action order.
/// * `objective <player> <kind> [args]` — once per player.  Kinds
///   `mean-limsup`, `mean-liminf` and `limsup-weight` take their weights
///   from the `row` records; `buchi` and `cobuchi` list their profiles
///   inline (`objective a buchi C,C D,D`); `parity` lists
///   `<profile>=<priority>` pairs covering every profile.
/// * `row <profile> <weight>...` — one weight per player; required for
///   every profile when any objective is weight-based, ignored columns
///   (players with recurrence objectives) conventionally written as `0`.
pub fn parse_game(text: &str) -> Result<GameSpec, FormatError> {
    let mut players: Option<(usize, Vec<String>)> = None;
    let mut action_decls: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut objective_decls: Vec<(usize, String, String, Vec<String>)> = Vec::new();
    let mut row_decls: Vec<(usize, String, Vec<String>)> = Vec::new();

    for (line, record) in records(text) {
        let mut tokens = record.split_whitespace().map(str::to_string);
        let keyword = tokens.next().expect("records are nonempty");
        let rest: Vec<String> = tokens.collect();
        match keyword.as_str() {
            "players" => {
                if players.is_some() {
                    return fail(line, "duplicate 'players' record");
                }
                if rest.is_empty() {
                    return fail(line, "'players' needs at least one name");
                }
                players = Some((line, rest));
            }
            "actions" => {
                if rest.len() < 2 {
                    return fail(line, "'actions' needs a player and at least one label");
                }
                action_decls.push((line, rest[0].clone(), rest[1..].to_vec()));
            }
            "objective" => {
                if rest.len() < 2 {
                    return fail(line, "'objective' needs a player and a kind");
                }
                objective_decls.push((line, rest[0].clone(), rest[1].clone(), rest[2..].to_vec()));
            }
            "row" => {
                if rest.is_empty() {
                    return fail(line, "'row' needs a profile and weights");
                }
                row_decls.push((line, rest[0].clone(), rest[1..].to_vec()));
            }
            other => return fail(line, format!("unknown record '{other}'")),
        }
    }

    let (players_line, names) = match players {
        Some(p) => p,
        None => return fail(0, "missing 'players' record"),
    };
    {
        let mut seen = BTreeSet::new();
        for name in &names {
            if !seen.insert(name.clone()) {
                return fail(players_line, format!("duplicate player name '{name}'"));
            }
        }
    }
    let n = names.len();
    let index_of = |name: &str, line: usize| -> Result<PlayerId, FormatError> {
        names
            .iter()
            .position(|p| p == name)
            .map_or_else(|| fail(line, format!("unknown player '{name}'")), Ok)
    };

    let mut actions: Vec<Option<(usize, Vec<String>)>> = vec![None; n];
    for (line, player, labels) in action_decls {
        let j = index_of(&player, line)?;
        if actions[j].is_some() {
            return fail(line, format!("duplicate 'actions' record for '{player}'"));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.contains(',') {
                return fail(line, format!("action label '{label}' may not contain ','"));
            }
            if !seen.insert(label.clone()) {
                return fail(line, format!("duplicate action label '{label}'"));
            }
        }
        actions[j] = Some((line, labels));
    }
    let actions: Vec<Vec<String>> = {
        let mut out = Vec::with_capacity(n);
        for (j, slot) in actions.into_iter().enumerate() {
            match slot {
                Some((_, labels)) => out.push(labels),
                None => return fail(0, format!("missing 'actions' record for '{}'", names[j])),
            }
        }
        out
    };

    // A scaffold game with placeholder objectives gives us profile encoding
    // and labels while the real objectives are still being assembled.
    let scaffold = GameSpec::new(
        names.clone(),
        actions.clone(),
        vec![Objective::MeanLimsup(vec![Rational::zero(); profile_space(&actions)]); n],
    )
    .map_err(|e| FormatError {
        line: 0,
        message: e.to_string(),
    })?;
    let m = scaffold.profile_count();

    let mut weights: Vec<Vec<Option<Rational>>> = vec![vec![None; m]; n];
    let mut any_row_line = 0usize;
    for (line, profile_text, cols) in &row_decls {
        let p = profile_of(&scaffold, profile_text, *line)?;
        if cols.len() != n {
            return fail(
                *line,
                format!("row has {} weights, game has {n} players", cols.len()),
            );
        }
        any_row_line = *line;
        for (i, col) in cols.iter().enumerate() {
            let w = parse_rational(col, *line)?;
            if weights[i][p].replace(w).is_some() {
                return fail(*line, format!("duplicate row for profile '{profile_text}'"));
            }
        }
    }

    let mut objectives: Vec<Option<Objective>> = vec![None; n];
    let mut needs_rows = false;
    for (line, player, kind, args) in objective_decls {
        let i = index_of(&player, line)?;
        if objectives[i].is_some() {
            return fail(line, format!("duplicate 'objective' record for '{player}'"));
        }
        let objective = match kind.as_str() {
            "mean-limsup" | "mean-liminf" | "limsup-weight" => {
                if !args.is_empty() {
                    return fail(line, format!("'{kind}' takes its weights from row records"));
                }
                needs_rows = true;
                let w: Result<Vec<Rational>, FormatError> = (0..m)
                    .map(|p| {
                        weights[i][p].clone().map_or_else(
                            || {
                                fail(
                                    0,
                                    format!(
                                        "player '{player}' needs a weight for profile '{}'",
                                        profile_label(&scaffold, p)
                                    ),
                                )
                            },
                            Ok,
                        )
                    })
                    .collect();
                match kind.as_str() {
                    "mean-limsup" => Objective::MeanLimsup(w?),
                    "mean-liminf" => Objective::MeanLiminf(w?),
                    _ => Objective::LimsupWeight(w?),
                }
            }
            "buchi" | "cobuchi" => {
                let mut set = BTreeSet::new();
                for arg in &args {
                    set.insert(profile_of(&scaffold, arg, line)?);
                }
                if kind == "buchi" {
                    Objective::Buchi(set)
                } else {
                    Objective::CoBuchi(set)
                }
            }
            "parity" => {
                let mut priorities: Vec<Option<u32>> = vec![None; m];
                for arg in &args {
                    let Some((label, prio)) = arg.split_once('=') else {
                        return fail(line, format!("expected '<profile>=<priority>', got '{arg}'"));
                    };
                    let p = profile_of(&scaffold, label, line)?;
                    let prio: u32 = prio
                        .parse()
                        .or_else(|e| fail(line, format!("bad priority '{prio}': {e}")))?;
                    if priorities[p].replace(prio).is_some() {
                        return fail(line, format!("duplicate priority for '{label}'"));
                    }
                }
                let full: Result<Vec<u32>, FormatError> = priorities
                    .iter()
                    .enumerate()
                    .map(|(p, slot)| {
                        slot.map_or_else(
                            || {
                                fail(
                                    line,
                                    format!(
                                        "missing priority for profile '{}'",
                                        profile_label(&scaffold, p)
                                    ),
                                )
                            },
                            Ok,
                        )
                    })
                    .collect();
                Objective::Parity(full?)
            }
            other => return fail(line, format!("unknown objective kind '{other}'")),
        };
        objectives[i] = Some(objective);
    }
    let objectives: Vec<Objective> = {
        let mut out = Vec::with_capacity(n);
        for (i, slot) in objectives.into_iter().enumerate() {
            match slot {
                Some(o) => out.push(o),
                None => {
                    return fail(0, format!("missing 'objective' record for '{}'", names[i]))
                }
            }
        }
        out
    };

    if needs_rows {
        let have = weights[0].iter().filter(|w| w.is_some()).count();
        if have != m {
            return fail(
                any_row_line,
                format!("weight-based objectives need all {m} rows, found {have}"),
            );
        }
    }

    GameSpec::new(names, actions, objectives).map_err(|e| FormatError {
        line: 0,
        message: e.to_string(),
    })
}

fn profile_space(actions: &[Vec<String>]) -> usize {
    actions.iter().map(Vec::len).product()
}

/// Canonical serialization of a game; `parse_game` inverts it.
pub fn write_game(game: &GameSpec) -> String {
    let mut out = String::new();
    writeln!(out, "players {}", game.players.join(" ")).unwrap();
    for (j, labels) in game.actions.iter().enumerate() {
        writeln!(out, "actions {} {}", game.players[j], labels.join(" ")).unwrap();
    }
    for (i, objective) in game.objectives.iter().enumerate() {
        write!(out, "objective {} {}", game.players[i], objective.kind_name()).unwrap();
        match objective {
            Objective::Buchi(set) | Objective::CoBuchi(set) => {
                for &p in set {
                    write!(out, " {}", profile_label(game, p)).unwrap();
                }
            }
            Objective::Parity(priorities) => {
                for (p, prio) in priorities.iter().enumerate() {
                    write!(out, " {}={prio}", profile_label(game, p)).unwrap();
                }
            }
            _ => {}
        }
        out.push('\n');
    }
    if game.objectives.iter().any(|o| o.weights().is_some()) {
        for p in 0..game.profile_count() {
            write!(out, "row {}", profile_label(game, p)).unwrap();
            for objective in &game.objectives {
                let w = objective
                    .weights()
                    .map_or_else(Rational::zero, |w| w[p].clone());
                write!(out, " {}", rational::format(&w)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Machines
// ---------------------------------------------------------------------------

/// Parse a strategy machine against its game.
///
/// Records:
///
/// * `machine <method>` — exactly once: `grim-trigger`,
///   `acceptable-stationary` or `monitored-blame`.
/// * `epsilon <x>` / `delta <x>` — optional build parameters.
/// * `state <name> on-path` or `state <name> punishing <player>` —
///   declaration order fixes state ids.
/// * `initial <state>` — exactly once.
/// * `transition <state> <profile> <state>` — one per state and profile.
/// * `output <state> <player> <prob>...` — one per state and player, one
///   probability per action.
///
/// The assembled machine is fully validated, including the punishment- and
/// on-path-closure invariants.
pub fn parse_machine(text: &str, game: &GameSpec) -> Result<EquilibriumMachine, FormatError> {
    let mut method: Option<(usize, BuildMethod)> = None;
    let mut epsilon: Option<f64> = None;
    let mut delta: Option<f64> = None;
    let mut names: Vec<String> = Vec::new();
    let mut classes: Vec<StateClass> = Vec::new();
    let mut deferred: Vec<(usize, Vec<String>)> = Vec::new();

    for (line, record) in records(text) {
        let tokens: Vec<String> = record.split_whitespace().map(str::to_string).collect();
        match tokens[0].as_str() {
            "machine" => {
                if method.is_some() {
                    return fail(line, "duplicate 'machine' record");
                }
                if tokens.len() != 2 {
                    return fail(line, "'machine' needs exactly one method name");
                }
                match BuildMethod::from_name(&tokens[1]) {
                    Some(m) => method = Some((line, m)),
                    None => return fail(line, format!("unknown method '{}'", tokens[1])),
                }
            }
            "epsilon" => {
                if tokens.len() != 2 {
                    return fail(line, "'epsilon' needs one value");
                }
                epsilon = Some(parse_f64(&tokens[1], line)?);
            }
            "delta" => {
                if tokens.len() != 2 {
                    return fail(line, "'delta' needs one value");
                }
                delta = Some(parse_f64(&tokens[1], line)?);
            }
            "state" => {
                let class = match tokens.get(2).map(String::as_str) {
                    Some("on-path") if tokens.len() == 3 => StateClass::OnPath,
                    Some("punishing") if tokens.len() == 4 => {
                        StateClass::Punishing(player_of(game, &tokens[3], line)?)
                    }
                    _ => {
                        return fail(
                            line,
                            "expected 'state <name> on-path' or 'state <name> punishing <player>'",
                        )
                    }
                };
                if names.contains(&tokens[1]) {
                    return fail(line, format!("duplicate state '{}'", tokens[1]));
                }
                names.push(tokens[1].clone());
                classes.push(class);
            }
            "initial" | "transition" | "output" => deferred.push((line, tokens)),
            other => return fail(line, format!("unknown record '{other}'")),
        }
    }

    let Some((_, method)) = method else {
        return fail(0, "missing 'machine' record");
    };
    if names.is_empty() {
        return fail(0, "machine declares no states");
    }
    let state_of = |name: &str, line: usize| -> Result<StateId, FormatError> {
        names
            .iter()
            .position(|s| s == name)
            .map_or_else(|| fail(line, format!("unknown state '{name}'")), Ok)
    };

    let n_states = names.len();
    let m = game.profile_count();
    let n = game.n_players();
    let mut initial: Option<StateId> = None;
    let mut transition: Vec<Vec<Option<StateId>>> = vec![vec![None; m]; n_states];
    let mut output: Vec<Vec<Option<MixedAction>>> = vec![vec![None; n]; n_states];

    for (line, tokens) in deferred {
        match tokens[0].as_str() {
            "initial" => {
                if tokens.len() != 2 {
                    return fail(line, "'initial' needs one state name");
                }
                if initial.is_some() {
                    return fail(line, "duplicate 'initial' record");
                }
                initial = Some(state_of(&tokens[1], line)?);
            }
            "transition" => {
                if tokens.len() != 4 {
                    return fail(line, "expected 'transition <state> <profile> <state>'");
                }
                let s = state_of(&tokens[1], line)?;
                let p = profile_of(game, &tokens[2], line)?;
                let t = state_of(&tokens[3], line)?;
                if transition[s][p].replace(t).is_some() {
                    return fail(line, "duplicate transition record");
                }
            }
            "output" => {
                if tokens.len() < 4 {
                    return fail(line, "expected 'output <state> <player> <prob>...'");
                }
                let s = state_of(&tokens[1], line)?;
                let j = player_of(game, &tokens[2], line)?;
                if tokens.len() - 3 != game.n_actions(j) {
                    return fail(
                        line,
                        format!(
                            "output lists {} probabilities, player '{}' has {} actions",
                            tokens.len() - 3,
                            game.players[j],
                            game.n_actions(j)
                        ),
                    );
                }
                let probs: Result<Vec<Rational>, FormatError> = tokens[3..]
                    .iter()
                    .map(|t| parse_rational(t, line))
                    .collect();
                let action = MixedAction::new(j, probs?)
                    .map_err(|e| FormatError {
                        line,
                        message: e.to_string(),
                    })?;
                if output[s][j].replace(action).is_some() {
                    return fail(line, "duplicate output record");
                }
            }
            _ => unreachable!("deferred records are filtered"),
        }
    }

    let Some(initial) = initial else {
        return fail(0, "missing 'initial' record");
    };
    let transition: Vec<Vec<StateId>> = transition
        .into_iter()
        .enumerate()
        .map(|(s, row)| {
            row.into_iter()
                .enumerate()
                .map(|(p, slot)| {
                    slot.map_or_else(
                        || {
                            fail(
                                0,
                                format!(
                                    "state '{}' lacks a transition for profile '{}'",
                                    names[s],
                                    profile_label(game, p)
                                ),
                            )
                        },
                        Ok,
                    )
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let output: Vec<Vec<MixedAction>> = output
        .into_iter()
        .enumerate()
        .map(|(s, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, slot)| {
                    slot.map_or_else(
                        || {
                            fail(
                                0,
                                format!(
                                    "state '{}' lacks an output for player '{}'",
                                    names[s], game.players[j]
                                ),
                            )
                        },
                        Ok,
                    )
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let em = EquilibriumMachine {
        machine: FiniteMemoryProfile {
            names,
            initial,
            transition,
            output,
        },
        classes,
        method,
        epsilon,
        delta,
    };
    em.validate(game)
        .map_err(|message| FormatError { line: 0, message })?;
    Ok(em)
}

/// Canonical serialization of a machine; `parse_machine` inverts it.
pub fn write_machine(em: &EquilibriumMachine, game: &GameSpec) -> String {
    let machine = &em.machine;
    let mut out = String::new();
    writeln!(out, "machine {}", em.method.name()).unwrap();
    if let Some(e) = em.epsilon {
        writeln!(out, "epsilon {e}").unwrap();
    }
    if let Some(d) = em.delta {
        writeln!(out, "delta {d}").unwrap();
    }
    for (s, name) in machine.names.iter().enumerate() {
        match em.classes[s] {
            StateClass::OnPath => writeln!(out, "state {name} on-path").unwrap(),
            StateClass::Punishing(j) => {
                writeln!(out, "state {name} punishing {}", game.players[j]).unwrap()
            }
        }
    }
    writeln!(out, "initial {}", machine.names[machine.initial]).unwrap();
    for (s, row) in machine.transition.iter().enumerate() {
        for (p, &t) in row.iter().enumerate() {
            writeln!(
                out,
                "transition {} {} {}",
                machine.names[s],
                profile_label(game, p),
                machine.names[t]
            )
            .unwrap();
        }
    }
    for (s, outputs) in machine.output.iter().enumerate() {
        for (j, action) in outputs.iter().enumerate() {
            write!(out, "output {} {}", machine.names[s], game.players[j]).unwrap();
            for prob in action.probs() {
                write!(out, " {}", rational::format(prob)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Threat reports
// ---------------------------------------------------------------------------

/// Parse a threat report against its game.
///
/// Records:
///
/// * `threat <player> method <name> correlated <x> independent <x> error
///   <x> iterations <k> converged <bool> overridden <bool>` — once per
///   player.
/// * `bracket <player> <lo> <hi>` — optional enclosing interval.
/// * `punish <player> <coordinate-player> <prob>...` — the stationary
///   punishing profile against `<player>`, one record per coordinate.
pub fn parse_threats(text: &str, game: &GameSpec) -> Result<PunishmentReport, FormatError> {
    let n = game.n_players();
    struct Partial {
        line: usize,
        method: ThreatMethod,
        correlated: Rational,
        independent: Rational,
        error_bound: Rational,
        iterations: usize,
        converged: bool,
        overridden: bool,
    }
    let mut partial: Vec<Option<Partial>> = (0..n).map(|_| None).collect();
    let mut brackets: Vec<Option<(Rational, Rational)>> = vec![None; n];
    let mut punishment: Vec<Vec<Option<MixedAction>>> = vec![(0..n).map(|_| None).collect(); n];

    for (line, record) in records(text) {
        let tokens: Vec<&str> = record.split_whitespace().collect();
        match tokens[0] {
            "threat" => {
                if tokens.len() != 16 {
                    return fail(
                        line,
                        "expected 'threat <player> method <m> correlated <x> independent <x> \
                         error <x> iterations <k> converged <b> overridden <b>'",
                    );
                }
                let j = player_of(game, tokens[1], line)?;
                let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
                for pair in tokens[2..].chunks(2) {
                    fields.insert(pair[0], pair[1]);
                }
                let field = |key: &str| -> Result<&str, FormatError> {
                    fields
                        .get(key)
                        .copied()
                        .map_or_else(|| fail(line, format!("missing field '{key}'")), Ok)
                };
                let method_name = field("method")?;
                let Some(method) = ThreatMethod::from_name(method_name) else {
                    return fail(line, format!("unknown threat method '{method_name}'"));
                };
                let entry = Partial {
                    line,
                    method,
                    correlated: parse_rational(field("correlated")?, line)?,
                    independent: parse_rational(field("independent")?, line)?,
                    error_bound: parse_rational(field("error")?, line)?,
                    iterations: parse_usize(field("iterations")?, line)?,
                    converged: parse_bool(field("converged")?, line)?,
                    overridden: parse_bool(field("overridden")?, line)?,
                };
                if partial[j].replace(entry).is_some() {
                    return fail(line, format!("duplicate threat for '{}'", tokens[1]));
                }
            }
            "bracket" => {
                if tokens.len() != 4 {
                    return fail(line, "expected 'bracket <player> <lo> <hi>'");
                }
                let j = player_of(game, tokens[1], line)?;
                let lo = parse_rational(tokens[2], line)?;
                let hi = parse_rational(tokens[3], line)?;
                if brackets[j].replace((lo, hi)).is_some() {
                    return fail(line, format!("duplicate bracket for '{}'", tokens[1]));
                }
            }
            "punish" => {
                if tokens.len() < 4 {
                    return fail(line, "expected 'punish <player> <coordinate> <prob>...'");
                }
                let j = player_of(game, tokens[1], line)?;
                let c = player_of(game, tokens[2], line)?;
                if tokens.len() - 3 != game.n_actions(c) {
                    return fail(
                        line,
                        format!(
                            "punish record lists {} probabilities, player '{}' has {} actions",
                            tokens.len() - 3,
                            game.players[c],
                            game.n_actions(c)
                        ),
                    );
                }
                let probs: Result<Vec<Rational>, FormatError> = tokens[3..]
                    .iter()
                    .map(|t| parse_rational(t, line))
                    .collect();
                let action = MixedAction::new(c, probs?)
                    .map_err(|e| FormatError {
                        line,
                        message: e.to_string(),
                    })?;
                if punishment[j][c].replace(action).is_some() {
                    return fail(line, "duplicate punish record");
                }
            }
            other => return fail(line, format!("unknown record '{other}'")),
        }
    }

    let mut entries = Vec::with_capacity(n);
    for j in 0..n {
        let Some(p) = partial[j].take() else {
            return fail(0, format!("missing threat for '{}'", game.players[j]));
        };
        let mut actions = Vec::with_capacity(n);
        for (c, slot) in punishment[j].iter_mut().enumerate() {
            match slot.take() {
                Some(a) => actions.push(a),
                None => {
                    return fail(
                        p.line,
                        format!(
                            "threat for '{}' lacks the punish record for '{}'",
                            game.players[j], game.players[c]
                        ),
                    )
                }
            }
        }
        entries.push(ThreatEntry {
            player: j,
            method: p.method,
            correlated: p.correlated,
            independent: p.independent,
            error_bound: p.error_bound,
            punishment: actions,
            converged: p.converged,
            bracket: brackets[j].take(),
            iterations: p.iterations,
            overridden: p.overridden,
        });
    }
    Ok(PunishmentReport { entries })
}

/// Canonical serialization of a threat report; `parse_threats` inverts it.
pub fn write_threats(report: &PunishmentReport, game: &GameSpec) -> String {
    let mut out = String::new();
    for entry in &report.entries {
        let name = &game.players[entry.player];
        writeln!(
            out,
            "threat {name} method {} correlated {} independent {} error {} \
             iterations {} converged {} overridden {}",
            entry.method.name(),
            rational::format(&entry.correlated),
            rational::format(&entry.independent),
            rational::format(&entry.error_bound),
            entry.iterations,
            entry.converged,
            entry.overridden,
        )
        .unwrap();
        if let Some((lo, hi)) = &entry.bracket {
            writeln!(
                out,
                "bracket {name} {} {}",
                rational::format(lo),
                rational::format(hi)
            )
            .unwrap();
        }
        for (c, action) in entry.punishment.iter().enumerate() {
            write!(out, "punish {name} {}", game.players[c]).unwrap();
            for prob in action.probs() {
                write!(out, " {}", rational::format(prob)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Monitors
// ---------------------------------------------------------------------------

/// Parse a monitor description against its game.
///
/// Records: `monitor <blame-rule>`, `delta <x>`, `warmup <k>`, and one
/// `payoff <player> <x>` per player (the long-run payoff the band is
/// centered on).
pub fn parse_monitor(text: &str, game: &GameSpec) -> Result<MonitorSpec, FormatError> {
    let n = game.n_players();
    let mut blame: Option<BlameRule> = None;
    let mut delta: Option<f64> = None;
    let mut warmup: Option<usize> = None;
    let mut payoffs: Vec<Option<Rational>> = vec![None; n];
    for (line, record) in records(text) {
        let tokens: Vec<&str> = record.split_whitespace().collect();
        match tokens[0] {
            "monitor" => {
                if tokens.len() != 2 || tokens[1] != BlameRule.scoring_name() {
                    return fail(
                        line,
                        format!("expected 'monitor {}'", BlameRule.scoring_name()),
                    );
                }
                if blame.replace(BlameRule).is_some() {
                    return fail(line, "duplicate 'monitor' record");
                }
            }
            "delta" => {
                if tokens.len() != 2 {
                    return fail(line, "'delta' needs one value");
                }
                if delta.replace(parse_f64(tokens[1], line)?).is_some() {
                    return fail(line, "duplicate 'delta' record");
                }
            }
            "warmup" => {
                if tokens.len() != 2 {
                    return fail(line, "'warmup' needs one value");
                }
                if warmup.replace(parse_usize(tokens[1], line)?).is_some() {
                    return fail(line, "duplicate 'warmup' record");
                }
            }
            "payoff" => {
                if tokens.len() != 3 {
                    return fail(line, "expected 'payoff <player> <value>'");
                }
                let j = player_of(game, tokens[1], line)?;
                if payoffs[j].replace(parse_rational(tokens[2], line)?).is_some() {
                    return fail(line, format!("duplicate payoff for '{}'", tokens[1]));
                }
            }
            other => return fail(line, format!("unknown record '{other}'")),
        }
    }
    let Some(blame) = blame else {
        return fail(0, "missing 'monitor' record");
    };
    let Some(delta) = delta else {
        return fail(0, "missing 'delta' record");
    };
    let Some(warmup) = warmup else {
        return fail(0, "missing 'warmup' record");
    };
    let mut c = Vec::with_capacity(n);
    for (j, slot) in payoffs.into_iter().enumerate() {
        match slot {
            Some(x) => c.push(x),
            None => return fail(0, format!("missing payoff for '{}'", game.players[j])),
        }
    }
    Ok(MonitorSpec {
        c,
        delta,
        warmup,
        blame,
    })
}

/// Canonical serialization of a monitor; `parse_monitor` inverts it.
pub fn write_monitor(monitor: &MonitorSpec, game: &GameSpec) -> String {
    let mut out = String::new();
    writeln!(out, "monitor {}", monitor.blame.scoring_name()).unwrap();
    writeln!(out, "delta {}", monitor.delta).unwrap();
    writeln!(out, "warmup {}", monitor.warmup).unwrap();
    for (j, x) in monitor.c.iter().enumerate() {
        writeln!(out, "payoff {} {}", game.players[j], rational::format(x)).unwrap();
    }
    out
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Serialize a certificate.  `inputs` are `(label, sha256-hex)` pairs tying
/// the verdict to the exact files it was computed from; pass the hashes
/// from [`content_hash`].
pub fn write_certificate(
    certificate: &EquilibriumCertificate,
    game: &GameSpec,
    inputs: &[(&str, String)],
) -> String {
    let mut out = String::new();
    writeln!(out, "certificate").unwrap();
    writeln!(out, "method {}", certificate.method.name()).unwrap();
    writeln!(out, "epsilon {}", certificate.epsilon).unwrap();
    writeln!(out, "tolerance {}", certificate.tolerance).unwrap();
    for (label, hash) in inputs {
        writeln!(out, "input {label} sha256 {hash}").unwrap();
    }
    for p in &certificate.players {
        writeln!(
            out,
            "player {} on-path {} best-response {} gain {}",
            game.players[p.player],
            rational::format(&p.on_path),
            rational::format(&p.best_response),
            rational::format(&p.gain),
        )
        .unwrap();
    }
    let list = |players: &[PlayerId]| -> String {
        if players.is_empty() {
            "none".to_string()
        } else {
            players
                .iter()
                .map(|&j| game.players[j].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        }
    };
    writeln!(out, "gain-violators {}", list(&certificate.gain_violators)).unwrap();
    writeln!(out, "floor-violators {}", list(&certificate.floor_violators)).unwrap();
    writeln!(out, "valid {}", certificate.valid).unwrap();
    out
}
