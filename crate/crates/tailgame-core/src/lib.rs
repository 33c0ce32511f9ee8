//! Construction and exact certification of near-equilibria in infinitely
//! repeated games whose payoffs only depend on the tail of the play.
//!
//! A game here is a finite set of players, each with a finite action set, who
//! simultaneously pick actions at every stage `t = 0, 1, 2, ...` forever. The
//! realized infinite stream of action profiles is scored per player by an
//! [`model::Objective`]: long-run average weight (limsup or liminf flavor),
//! limsup of stage weights, or a recurrence condition on the set of profiles
//! played infinitely often (Büchi / co-Büchi / parity). Every supported
//! objective is *tail-measurable*: editing finitely many stages of a play
//! never changes its value. That invariance is what makes history-independent
//! punishment values and simple trigger constructions sound, and the library
//! leans on it throughout.
//!
//! The crate is organized as a pipeline:
//!
//! * [`model`] — game descriptions, finite-memory strategy machines, and
//!   exact evaluation of ultimately-periodic ("lasso") plays;
//! * [`oneshot`] — exact one-shot tensor solvers: product expectations,
//!   correlated and independent threat values, Nash profiles;
//! * [`punish`] — per-player punishment (threat) values for the repeated
//!   game: exact LP values for mean-payoff objectives, iterated fixpoints
//!   for recurrence objectives, Monte Carlo estimates where no exact method
//!   is offered;
//! * [`equilibrium`] — constructions that turn threats into strategy
//!   machines: grim trigger around a target play, acceptable stationary
//!   profiles, and statistically monitored profiles with a blame rule;
//! * [`verify`] — the trust anchor: exact best-response and on-path values
//!   against a strategy machine, certificates, seeded simulation, and blame
//!   error estimation.
//!
//! Payoff-relevant arithmetic is exact: weights, probabilities, and
//! certificate values are big rationals ([`rational::Rational`]). Doubles
//! appear only inside iterative numeric solvers (fixpoints, local search)
//! and always travel with explicit tolerances or brackets.
//!
//! # Example
//!
//! Build and certify a grim-trigger equilibrium for a 2x2 dilemma game:
//!
//! ```
//! use tailgame_core::equilibrium::{build_grim_trigger, find_target_play};
//! use tailgame_core::punish::{compute_threats, ThreatOptions};
//! use tailgame_core::verify::certify;
//! use tailgame_core::format::parse_game;
//!
//! let game = parse_game(
//!     "players alice bob\n\
//!      actions alice C D\n\
//!      actions bob C D\n\
//!      objective alice mean-limsup\n\
//!      objective bob mean-limsup\n\
//!      row C,C 3 3\n\
//!      row C,D 0 4\n\
//!      row D,C 4 0\n\
//!      row D,D 1 1\n",
//! )
//! .unwrap();
//!
//! let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
//! let play = find_target_play(&game, &threats, 0.1).unwrap();
//! let machine = build_grim_trigger(&game, &play, &threats).unwrap();
//! let cert = certify(&game, &machine, 0.1, &threats).unwrap();
//! assert!(cert.valid);
//! ```

#![forbid(unsafe_code)]

pub mod equilibrium;
pub mod format;
pub mod machine;
pub mod mdp;
pub mod model;
pub mod oneshot;
pub mod punish;
pub mod rational;
pub mod simplex;
pub mod verify;

pub use equilibrium::EquilibriumMachine;
pub use machine::FiniteMemoryProfile;
pub use model::{GameSpec, History, LassoPlay, MixedAction, Objective, PlayerId, ProfileId};
pub use punish::{PunishmentReport, ThreatEntry};
pub use rational::Rational;
pub use verify::EquilibriumCertificate;
