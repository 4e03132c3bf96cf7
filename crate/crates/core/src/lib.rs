//! Price-jump detection, news association, collective jumps and
//! volume/return tail dependence on one-minute equity data.

pub mod collective;
pub mod error;
pub mod eventstudy;
pub mod io;
pub mod jumps;
pub mod newsfeed;
pub mod optim;
pub mod synth;
pub mod tail;
pub mod taildep;
pub mod timebase;

pub use error::{Error, Result};
