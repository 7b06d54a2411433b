//! Hybrid momentum-based Nash set seeking over networks.
//!
//! This crate simulates restarted accelerated pseudogradient dynamics for
//! n-player noncooperative games, modeled as hybrid dynamical systems
//! `H = (C, F, D, G)` with flow sets, jump sets and set-valued jump maps:
//!
//! * [`momentum`] — full-information dynamics with per-player momentum
//!   states, periodic timer-triggered resets and a set-valued coordination
//!   map that synchronizes resets over a communication graph, plus the
//!   un-restarted baseline ODE and the plain pseudogradient flow.
//! * [`estimation`] — partial-information dynamics where players estimate
//!   each other's actions through fast consensus on the graph.
//! * [`payoff`] — model-free dynamics driven by cost measurements and
//!   sinusoidal dither oscillators, with and without consensus estimation.
//! * [`certificates`] — closed-form tuning certificates: reset conditions,
//!   global-contractivity tests, quasi-optimal restart period, settling
//!   time and the time-scale-separation bound for the consensus gain.
//! * [`lyapunov`] — trajectory diagnostics: Lyapunov evaluation along arcs,
//!   flow/jump decrease checks, convergence-rate bound checks and
//!   exponential rate fitting.
//! * [`engine`] — the generic hybrid simulator: RK4 flows with event
//!   bisection, sequential jump cascades, hybrid time domains and
//!   `(T, J, eps)`-closeness of arcs.
//!
//! Batch helpers in [`batch`] run independent simulations in parallel with
//! rayon; disabling the `parallel` feature falls back to sequential
//! execution with identical results.

pub mod batch;
pub mod certificates;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod game;
pub mod graph;
pub mod lyapunov;
pub mod momentum;
pub mod payoff;
pub mod synth;

pub use error::{Error, Result};
