//! Command-line pipeline: validate → threats → target play → build →
//! certify → simulate, with every artifact written as canonical text.
//!
//! # Exit codes
//!
//! | code | meaning                                                |
//! |------|--------------------------------------------------------|
//! | 0    | success (certificate valid where one is produced)      |
//! | 1    | pipeline completed but the certificate is invalid      |
//! | 2    | command-line usage error                               |
//! | 3    | input file failed to parse or validate                 |
//! | 4    | threat computation failed                              |
//! | 5    | no feasible target play                                |
//! | 6    | machine construction failed                            |
//! | 7    | verification or simulation computation failed          |
//! | 8    | filesystem error                                       |
//!
//! Given the same inputs, flags, and seed, every command writes
//! byte-identical output.  The log level is controlled only by the
//! `RUST_LOG` environment variable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tailgame_core::equilibrium::{
    build_acceptable_stationary, build_grim_trigger, build_monitored_equilibrium,
    find_target_play, BuildError, EquilibriumMachine, MonitorOptions, MonitorSpec,
};
use tailgame_core::format;
use tailgame_core::machine::FiniteMemoryProfile;
use tailgame_core::model::{GameSpec, LassoPlay, PlayerId};
use tailgame_core::oneshot::MinmaxOptions;
use tailgame_core::punish::{compute_threats, PunishmentReport, ThreatOptions};
use tailgame_core::rational;
use tailgame_core::verify::{blame_error_rate, certify, simulate, SimulationStats};

/// Exit codes; see the module documentation for the table.
mod exit {
    pub const INVALID_CERTIFICATE: u8 = 1;
    pub const PARSE: u8 = 3;
    pub const THREATS: u8 = 4;
    pub const FIND_PLAY: u8 = 5;
    pub const BUILD: u8 = 6;
    pub const VERIFY: u8 = 7;
    pub const IO: u8 = 8;
}

/// A stage failure carrying its exit code.
struct Failure {
    code: u8,
    stage: &'static str,
    message: String,
}

type StageResult<T> = Result<T, Failure>;

fn failure(code: u8, stage: &'static str, message: impl ToString) -> Failure {
    Failure {
        code,
        stage,
        message: message.to_string(),
    }
}

#[derive(Parser)]
#[command(
    name = "tailgame-cli",
    version,
    about = "Build and exactly certify near-equilibria in repeated games with tail-measurable objectives"
)]
struct RunConfig {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that computes threat values.
#[derive(Args)]
struct ThreatFlags {
    /// Convergence tolerance for iterative threat solvers.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Iteration cap for threat fixpoints.
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Replace a player's threat value: `--threat-override player=value`
    /// (value is a rational like `1/2`).  Repeatable.
    #[arg(long = "threat-override", value_name = "PLAYER=VALUE")]
    threat_override: Vec<String>,
}

impl ThreatFlags {
    fn options(&self) -> ThreatOptions {
        ThreatOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            minmax: MinmaxOptions::default(),
            ..ThreatOptions::default()
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BaseKind {
    /// Grim trigger around a target play.
    Grim,
    /// Stationary one-shot equilibrium.
    Acceptable,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a game description.
    Validate {
        /// Game description file.
        game: PathBuf,
    },
    /// Compute per-player threat (punishment) values.
    Minmax {
        game: PathBuf,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        /// Write the threat report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find an ultimately periodic target play clearing every threat
    /// minus epsilon.
    FindPlay {
        game: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        epsilon: f64,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write threats, machine, and certificate.
    Build {
        #[command(subcommand)]
        method: BuildCommand,
    },
    /// Exactly certify a machine file at a given epsilon.
    Certify {
        game: PathBuf,
        machine: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        epsilon: f64,
        /// Threat report file; recomputed from the game when omitted.
        #[arg(long)]
        threats: Option<PathBuf>,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate everyone following a machine.
    Simulate {
        game: PathBuf,
        machine: PathBuf,
        /// Monitor file; when present, band exits trigger punishment.
        #[arg(long)]
        monitor: Option<PathBuf>,
        #[arg(long, default_value_t = 1000, value_parser = positive_usize)]
        horizon: usize,
        #[arg(long, default_value_t = 100, value_parser = positive_usize)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate how often a monitored machine blames the wrong player
    /// against a scripted deviator.
    BlameTest {
        game: PathBuf,
        machine: PathBuf,
        #[arg(long)]
        monitor: PathBuf,
        /// Deviation script file: `deviation <player>` then
        /// `script <action>...` played cyclically.
        #[arg(long)]
        deviation: PathBuf,
        #[arg(long, default_value_t = 1000, value_parser = positive_usize)]
        horizon: usize,
        #[arg(long, default_value_t = 1000, value_parser = positive_usize)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BuildCommand {
    /// Grim trigger around a feasible target play.
    Grim {
        game: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        epsilon: f64,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        /// Output directory for the artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Stationary one-shot equilibrium, checked for acceptability.
    Acceptable {
        game: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        epsilon: f64,
        /// Acceptability slack; defaults to epsilon.
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Statistically monitored machine with a blame rule.
    Monitored {
        game: PathBuf,
        #[arg(long, value_parser = positive_f64)]
        epsilon: f64,
        /// Base construction to monitor.
        #[arg(long, value_enum, default_value_t = BaseKind::Grim)]
        base: BaseKind,
        /// Simulation runs used to estimate the warm-up length.
        #[arg(long, default_value_t = 1024, value_parser = positive_usize)]
        runs: usize,
        #[arg(long, default_value_t = 0xB1A7E)]
        seed: u64,
        #[command(flatten)]
        threat_flags: ThreatFlags,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err("must be a positive finite number".into())
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    let x: usize = s.parse().map_err(|e| format!("{e}"))?;
    if x >= 1 {
        Ok(x)
    } else {
        Err("must be at least 1".into())
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let config = RunConfig::parse();
    match run(config.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error in {} stage: {}", f.stage, f.message);
            ExitCode::from(f.code)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared stage helpers
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> StageResult<String> {
    fs::read_to_string(path)
        .map_err(|e| failure(exit::IO, "io", format!("{}: {e}", path.display())))
}

fn load_game(path: &Path) -> StageResult<(GameSpec, String)> {
    let text = read_file(path)?;
    let game = format::parse_game(&text)
        .map_err(|e| failure(exit::PARSE, "parse", format!("{}: {e}", path.display())))?;
    Ok((game, text))
}

fn load_machine(path: &Path, game: &GameSpec) -> StageResult<(EquilibriumMachine, String)> {
    let text = read_file(path)?;
    let em = format::parse_machine(&text, game)
        .map_err(|e| failure(exit::PARSE, "parse", format!("{}: {e}", path.display())))?;
    Ok((em, text))
}

fn threats_for(
    game: &GameSpec,
    flags: &ThreatFlags,
) -> StageResult<PunishmentReport> {
    let mut report = compute_threats(game, &flags.options())
        .map_err(|e| failure(exit::THREATS, "threats", e))?;
    for spec in &flags.threat_override {
        let Some((name, value)) = spec.split_once('=') else {
            return Err(failure(
                exit::PARSE,
                "parse",
                format!("threat override '{spec}' is not 'player=value'"),
            ));
        };
        let Some(player) = game.players.iter().position(|p| p == name) else {
            return Err(failure(
                exit::PARSE,
                "parse",
                format!("threat override names unknown player '{name}'"),
            ));
        };
        let value = rational::parse(value).map_err(|e| {
            failure(exit::PARSE, "parse", format!("threat override '{spec}': {e}"))
        })?;
        report.override_threat(player, value);
        log::info!("threat for {name} overridden");
    }
    Ok(report)
}

/// Write to the file when given, else stdout.
fn emit(out: Option<&Path>, text: &str) -> StageResult<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| failure(exit::IO, "io", format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_artifact(dir: &Path, name: &str, text: &str) -> StageResult<()> {
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| failure(exit::IO, "io", format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn play_text(game: &GameSpec, play: &LassoPlay) -> String {
    let label = |p: usize| {
        game.decode(p)
            .iter()
            .enumerate()
            .map(|(j, &a)| game.actions[j][a].as_str())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = String::new();
    out.push_str("play\n");
    if !play.prefix.is_empty() {
        let labels: Vec<String> = play.prefix.iter().map(|&p| label(p)).collect();
        writeln!(out, "prefix {}", labels.join(" ")).unwrap();
    }
    let labels: Vec<String> = play.cycle.iter().map(|&p| label(p)).collect();
    writeln!(out, "cycle {}", labels.join(" ")).unwrap();
    for (i, objective) in game.objectives.iter().enumerate() {
        writeln!(
            out,
            "value {} {}",
            game.players[i],
            rational::format(
                &objective
                    .eval_lasso(play)
                    .expect("play produced for this game evaluates cleanly")
            )
        )
        .unwrap();
    }
    out
}

fn simulation_text(game: &GameSpec, stats: &SimulationStats, seed: u64) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "simulation horizon {} runs {} seed {seed}",
        stats.horizon, stats.runs
    )
    .unwrap();
    writeln!(out, "players {}", game.players.join(" ")).unwrap();
    let row = |values: &[f64]| {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(out, "average {}", row(&stats.average_payoff)).unwrap();
    for (run, averages) in stats.run_averages.iter().enumerate() {
        writeln!(out, "run {run} {}", row(averages)).unwrap();
    }
    for t in &stats.triggers {
        writeln!(
            out,
            "trigger run {} stage {} blamed {} {}",
            t.run,
            t.stage,
            game.players[t.blamed],
            if t.statistical { "statistical" } else { "support" }
        )
        .unwrap();
    }
    writeln!(out, "triggers {}", stats.triggers.len()).unwrap();
    out
}

/// Parse a deviation script: `deviation <player>` plus `script <action>...`
/// played cyclically, every other coordinate irrelevant.
fn parse_deviation(
    text: &str,
    game: &GameSpec,
) -> Result<(PlayerId, FiniteMemoryProfile), String> {
    let mut player: Option<PlayerId> = None;
    let mut script: Option<Vec<usize>> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens[0] {
            "deviation" => {
                if tokens.len() != 2 {
                    return Err(format!("line {}: expected 'deviation <player>'", k + 1));
                }
                match game.players.iter().position(|p| p == tokens[1]) {
                    Some(j) => player = Some(j),
                    None => return Err(format!("line {}: unknown player '{}'", k + 1, tokens[1])),
                }
            }
            "script" => {
                let Some(j) = player else {
                    return Err(format!("line {}: 'script' before 'deviation'", k + 1));
                };
                if tokens.len() < 2 {
                    return Err(format!("line {}: empty script", k + 1));
                }
                let mut actions = Vec::with_capacity(tokens.len() - 1);
                for label in &tokens[1..] {
                    match game.actions[j].iter().position(|a| a == label) {
                        Some(a) => actions.push(a),
                        None => {
                            return Err(format!(
                                "line {}: player '{}' has no action '{label}'",
                                k + 1,
                                game.players[j]
                            ))
                        }
                    }
                }
                script = Some(actions);
            }
            other => return Err(format!("line {}: unknown record '{other}'", k + 1)),
        }
    }
    let (Some(j), Some(script)) = (player, script) else {
        return Err("deviation file needs 'deviation' and 'script' records".into());
    };
    let states = script.len();
    let names = (0..states).map(|k| format!("step-{k}")).collect();
    let transition = (0..states)
        .map(|k| vec![(k + 1) % states; game.profile_count()])
        .collect();
    let output = (0..states)
        .map(|k| {
            (0..game.n_players())
                .map(|i| {
                    if i == j {
                        tailgame_core::model::MixedAction::pure(i, script[k], game.n_actions(i))
                    } else {
                        tailgame_core::model::MixedAction::uniform(i, game.n_actions(i))
                    }
                })
                .collect()
        })
        .collect();
    Ok((
        j,
        FiniteMemoryProfile {
            names,
            initial: 0,
            transition,
            output,
        },
    ))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn run(command: Command) -> StageResult<u8> {
    match command {
        Command::Validate { game } => cmd_validate(&game),
        Command::Minmax {
            game,
            threat_flags,
            out,
        } => {
            let (game, _) = load_game(&game)?;
            let report = threats_for(&game, &threat_flags)?;
            emit(out.as_deref(), &format::write_threats(&report, &game))?;
            Ok(0)
        }
        Command::FindPlay {
            game,
            epsilon,
            threat_flags,
            out,
        } => {
            let (game, _) = load_game(&game)?;
            let report = threats_for(&game, &threat_flags)?;
            let play = find_target_play(&game, &report, epsilon)
                .map_err(|e| failure(exit::FIND_PLAY, "find-play", e))?;
            emit(out.as_deref(), &play_text(&game, &play))?;
            Ok(0)
        }
        Command::Build { method } => cmd_pipeline(method),
        Command::Certify {
            game,
            machine,
            epsilon,
            threats,
            threat_flags,
            out,
        } => {
            let (game, game_text) = load_game(&game)?;
            let (em, machine_text) = load_machine(&machine, &game)?;
            let report = match threats {
                Some(path) => {
                    let text = read_file(&path)?;
                    format::parse_threats(&text, &game).map_err(|e| {
                        failure(exit::PARSE, "parse", format!("{}: {e}", path.display()))
                    })?
                }
                None => threats_for(&game, &threat_flags)?,
            };
            let certificate = certify(&game, &em, epsilon, &report)
                .map_err(|e| failure(exit::VERIFY, "certify", e))?;
            let text = format::write_certificate(
                &certificate,
                &game,
                &[
                    ("game", format::content_hash(&game_text)),
                    ("machine", format::content_hash(&machine_text)),
                ],
            );
            emit(out.as_deref(), &text)?;
            Ok(if certificate.valid {
                0
            } else {
                exit::INVALID_CERTIFICATE
            })
        }
        Command::Simulate {
            game,
            machine,
            monitor,
            horizon,
            runs,
            seed,
            out,
        } => {
            let (game, _) = load_game(&game)?;
            let (em, _) = load_machine(&machine, &game)?;
            let monitor: Option<MonitorSpec> = match monitor {
                Some(path) => {
                    let text = read_file(&path)?;
                    Some(format::parse_monitor(&text, &game).map_err(|e| {
                        failure(exit::PARSE, "parse", format!("{}: {e}", path.display()))
                    })?)
                }
                None => None,
            };
            let stats = simulate(&game, &em, monitor.as_ref(), horizon, runs, seed)
                .map_err(|e| failure(exit::VERIFY, "simulate", e))?;
            emit(out.as_deref(), &simulation_text(&game, &stats, seed))?;
            Ok(0)
        }
        Command::BlameTest {
            game,
            machine,
            monitor,
            deviation,
            horizon,
            runs,
            seed,
            out,
        } => {
            let (game, _) = load_game(&game)?;
            let (em, _) = load_machine(&machine, &game)?;
            let monitor_text = read_file(&monitor)?;
            let monitor_spec = format::parse_monitor(&monitor_text, &game).map_err(|e| {
                failure(exit::PARSE, "parse", format!("{}: {e}", monitor.display()))
            })?;
            let deviation_text = read_file(&deviation)?;
            let (deviator, profile) = parse_deviation(&deviation_text, &game).map_err(|e| {
                failure(exit::PARSE, "parse", format!("{}: {e}", deviation.display()))
            })?;
            let report = blame_error_rate(
                &game,
                &em,
                &monitor_spec,
                deviator,
                &profile,
                runs,
                horizon,
                seed,
            )
            .map_err(|e| failure(exit::VERIFY, "simulate", e))?;
            let mut text = String::new();
            writeln!(
                text,
                "blame-test deviator {} horizon {horizon} runs {} seed {seed}",
                game.players[deviator], report.runs
            )
            .unwrap();
            writeln!(text, "triggers {}", report.triggers).unwrap();
            writeln!(text, "misblamed {}", report.misblamed).unwrap();
            writeln!(text, "rate {}", report.rate).unwrap();
            writeln!(text, "bound {}", report.bound).unwrap();
            writeln!(text, "ci {} {}", report.ci.0, report.ci.1).unwrap();
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn cmd_validate(path: &Path) -> StageResult<u8> {
    let text = read_file(path)?;
    match format::parse_game(&text) {
        Ok(game) => {
            let mut out = String::new();
            out.push_str("game valid\n");
            writeln!(out, "players {}", game.n_players()).unwrap();
            writeln!(out, "profiles {}", game.profile_count()).unwrap();
            for (i, objective) in game.objectives.iter().enumerate() {
                writeln!(
                    out,
                    "objective {} {}",
                    game.players[i],
                    objective.kind_name()
                )
                .unwrap();
            }
            print!("{out}");
            Ok(0)
        }
        Err(e) => {
            println!("game invalid");
            println!("{e}");
            Err(failure(exit::PARSE, "parse", format!("{}: {e}", path.display())))
        }
    }
}

/// The full pipeline behind `build`: threats → (play) → machine →
/// certificate, writing each artifact as soon as its stage completes and a
/// `failure.txt` manifest if a later stage fails.
fn cmd_pipeline(method: BuildCommand) -> StageResult<u8> {
    let (game_path, out_dir) = match &method {
        BuildCommand::Grim { game, out, .. }
        | BuildCommand::Acceptable { game, out, .. }
        | BuildCommand::Monitored { game, out, .. } => (game.clone(), out.clone()),
    };
    fs::create_dir_all(&out_dir)
        .map_err(|e| failure(exit::IO, "io", format!("{}: {e}", out_dir.display())))?;
    match pipeline_stages(&method, &game_path, &out_dir) {
        Ok(code) => Ok(code),
        Err(f) => {
            let manifest = format!(
                "failure\nstage {}\nexit-code {}\nerror {}\n",
                f.stage, f.code, f.message
            );
            // Best effort: the manifest must not mask the original failure.
            let _ = fs::write(out_dir.join("failure.txt"), manifest);
            Err(f)
        }
    }
}

fn pipeline_stages(method: &BuildCommand, game_path: &Path, out: &Path) -> StageResult<u8> {
    let (game, game_text) = load_game(game_path)?;
    let flags = match method {
        BuildCommand::Grim { threat_flags, .. }
        | BuildCommand::Acceptable { threat_flags, .. }
        | BuildCommand::Monitored { threat_flags, .. } => threat_flags,
    };
    log::info!("computing threats");
    let threats = threats_for(&game, flags)?;
    write_artifact(out, "threats.txt", &format::write_threats(&threats, &game))?;

    let build_failure = |e: BuildError| failure(exit::BUILD, "build", e);
    let (em, monitor) = match method {
        BuildCommand::Grim { epsilon, .. } => {
            log::info!("searching for a target play");
            let play = find_target_play(&game, &threats, *epsilon)
                .map_err(|e| failure(exit::FIND_PLAY, "find-play", e))?;
            write_artifact(out, "play.txt", &play_text(&game, &play))?;
            log::info!("building the grim trigger");
            let em = build_grim_trigger(&game, &play, &threats).map_err(build_failure)?;
            (em, None)
        }
        BuildCommand::Acceptable { epsilon, delta, .. } => {
            let slack = delta.unwrap_or(*epsilon);
            log::info!("building the stationary profile");
            let em =
                build_acceptable_stationary(&game, &threats, slack).map_err(build_failure)?;
            (em, None)
        }
        BuildCommand::Monitored {
            epsilon,
            base,
            runs,
            seed,
            ..
        } => {
            let base_machine = match base {
                BaseKind::Grim => {
                    log::info!("searching for a target play");
                    let play = find_target_play(&game, &threats, *epsilon)
                        .map_err(|e| failure(exit::FIND_PLAY, "find-play", e))?;
                    write_artifact(out, "play.txt", &play_text(&game, &play))?;
                    build_grim_trigger(&game, &play, &threats).map_err(build_failure)?
                }
                BaseKind::Acceptable => {
                    build_acceptable_stationary(&game, &threats, *epsilon)
                        .map_err(build_failure)?
                }
            };
            log::info!("fitting the monitor");
            let options = MonitorOptions {
                runs: *runs,
                seed: *seed,
                ..MonitorOptions::default()
            };
            let (em, monitor) =
                build_monitored_equilibrium(&game, &base_machine, *epsilon, &threats, &options)
                    .map_err(build_failure)?;
            (em, Some(monitor))
        }
    };

    let machine_text = format::write_machine(&em, &game);
    write_artifact(out, "machine.txt", &machine_text)?;
    if let Some(monitor) = &monitor {
        write_artifact(out, "monitor.txt", &format::write_monitor(monitor, &game))?;
    }

    let epsilon = match method {
        BuildCommand::Grim { epsilon, .. }
        | BuildCommand::Acceptable { epsilon, .. }
        | BuildCommand::Monitored { epsilon, .. } => *epsilon,
    };
    log::info!("certifying");
    let certificate = certify(&game, &em, epsilon, &threats)
        .map_err(|e| failure(exit::VERIFY, "certify", e))?;
    let cert_text = format::write_certificate(
        &certificate,
        &game,
        &[
            ("game", format::content_hash(&game_text)),
            ("machine", format::content_hash(&machine_text)),
        ],
    );
    write_artifact(out, "certificate.txt", &cert_text)?;
    if certificate.valid {
        Ok(0)
    } else {
        Err(failure(
            exit::INVALID_CERTIFICATE,
            "certify",
            "certificate is invalid; see certificate.txt",
        ))
    }
}
