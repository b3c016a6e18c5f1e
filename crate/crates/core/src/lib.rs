//! Performance analysis for vision-language-action policies on edge and
//! workstation accelerators.
//!
//! * [`roofline`]: hardware and phase profiles, ridge points, boundedness.
//! * [`leaderboard`]: cost, energy and time feasibility gates and ranking.
//! * [`dpcache`]: a toy diffusion policy with denoising-step caching.
//! * [`fusion`]: overlapping the backbone with stale-feature denoising.
//! * [`sim`]: a virtual-clock model of the control loop under each schedule.
//! * [`catalog`], [`events`], [`api`], [`service`]: data files, traces, and
//!   the shared CLI / HTTP surface.

pub mod api;
pub mod catalog;
pub mod dpcache;
pub mod error;
pub mod events;
pub mod fusion;
pub mod leaderboard;
pub mod roofline;
pub mod service;
pub mod sim;

pub use error::{Error, Result};
