//! Run configuration: one TOML section per subcommand plus `--set` overrides.

use std::path::{Path, PathBuf};

use chrono::{NaiveTime, Timelike};
use jumplab::jumps::WindowPolicy;
use jumplab::synth::{files, GenConfig};
use jumplab::taildep::Pooling;
use jumplab::Error;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Artifacts go to one subdirectory per command.
    pub out_dir: PathBuf,
    pub synth: GenConfig,
    pub ingest: IngestConfig,
    #[serde(rename = "detect-jumps")]
    pub detect_jumps: DetectConfig,
    #[serde(rename = "event-study")]
    pub event_study: EventStudyConfig,
    pub collective: CollectiveConfig,
    pub taildep: TaildepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("jumplab-out"),
            synth: GenConfig::default(),
            ingest: IngestConfig::default(),
            detect_jumps: DetectConfig::default(),
            event_study: EventStudyConfig::default(),
            collective: CollectiveConfig::default(),
            taildep: TaildepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub bars: Option<PathBuf>,
    /// Tickers to keep; empty keeps all.
    pub universe: Vec<String>,
    /// One ticker per line, added to `universe`.
    pub universe_file: Option<PathBuf>,
    pub session_open: String,
    pub session_close: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            bars: None,
            universe: Vec::new(),
            universe_file: None,
            session_open: "09:30".into(),
            session_close: "16:00".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Detection threshold; later commands may only raise it.
    pub s: f64,
    pub window: usize,
    pub min_history: usize,
    pub window_policy: WindowPolicy,
    /// Top fraction of scores in the Hill fit.
    pub tail_fraction: f64,
    pub count_thresholds: Vec<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            s: 4.0,
            window: 120,
            min_history: 30,
            window_policy: WindowPolicy::Span,
            tail_fraction: 0.05,
            count_thresholds: vec![4.0, 5.0, 6.0, 8.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventStudyConfig {
    pub news_primary: Option<PathBuf>,
    pub news_secondary: Option<PathBuf>,
    pub use_secondary: bool,
    pub aliases: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    /// Minutes.
    pub match_window: f64,
    /// Minutes.
    pub silence: f64,
    /// Bins before a jump in which news marks it as news-driven.
    pub assoc_window: usize,
    pub max_lag: usize,
    pub tau_max: usize,
    pub inner: i64,
    pub s_values: Vec<f64>,
    pub tail_fraction: f64,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        Self {
            news_primary: None,
            news_secondary: None,
            use_secondary: true,
            aliases: None,
            blocklist: None,
            match_window: 15.0,
            silence: 30.0,
            assoc_window: 2,
            max_lag: 120,
            tau_max: 120,
            inner: 30,
            s_values: vec![4.0, 8.0],
            tail_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectiveConfig {
    pub sectors: Option<PathBuf>,
    pub use_sectors: bool,
    pub s: f64,
    pub s_prime: f64,
    pub half_windows: Vec<usize>,
    /// Chi values above this enter the Hill fit.
    pub chi_fit_min: f64,
}

impl Default for CollectiveConfig {
    fn default() -> Self {
        Self {
            sectors: None,
            use_sectors: true,
            s: 4.0,
            s_prime: 0.1,
            half_windows: vec![0, 1, 2, 5],
            chi_fit_min: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaildepConfig {
    pub trades: Option<PathBuf>,
    pub use_trades: bool,
    pub pooling: Pooling,
    pub per_decade: usize,
}

impl Default for TaildepConfig {
    fn default() -> Self {
        Self {
            trades: None,
            use_trades: true,
            pooling: Pooling::Standardized,
            per_decade: 10,
        }
    }
}

fn check(ok: bool, name: &'static str, reason: impl Into<String>) -> Result<(), Error> {
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(name, reason))
    }
}

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Minutes since midnight from `HH:MM`.
pub fn session_minute(s: &str, name: &'static str) -> Result<u16, Error> {
    let t = NaiveTime::parse_from_str(s, "%H:%M").map_err(|e| Error::invalid(name, format!("`{s}`: {e}")))?;
    Ok((t.hour() * 60 + t.minute()) as u16)
}

impl RunConfig {
    /// Parse TOML text, apply `section.key=value` overrides, deserialize.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Input(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Input(format!("config: {}", e.message())))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Core(Error::io(p, e)))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn dir(&self, command: &str) -> PathBuf {
        self.out_dir.join(command)
    }

    /// A configured path, or the file `synth` writes under the output directory.
    pub fn input(&self, configured: &Option<PathBuf>, synth_file: &str) -> PathBuf {
        configured.clone().unwrap_or_else(|| self.dir("synth").join(synth_file))
    }

    pub fn bars_path(&self) -> PathBuf {
        self.input(&self.ingest.bars, files::BARS)
    }

    pub fn validate_ingest(&self) -> Result<(), Error> {
        let open = session_minute(&self.ingest.session_open, "ingest.session_open")?;
        let close = session_minute(&self.ingest.session_close, "ingest.session_close")?;
        check(close > open, "ingest.session_close", "must be after session_open")
    }

    pub fn validate_detect(&self) -> Result<(), Error> {
        let d = &self.detect_jumps;
        check(d.s.is_finite() && d.s > 1.0, "detect-jumps.s", format!("{} must exceed 1", d.s))?;
        check(d.window >= 1, "detect-jumps.window", "must be at least 1")?;
        check(
            d.min_history >= 1 && d.min_history <= d.window,
            "detect-jumps.min_history",
            format!("{} must be in [1, window]", d.min_history),
        )?;
        check(
            d.tail_fraction > 0.0 && d.tail_fraction < 1.0,
            "detect-jumps.tail_fraction",
            format!("{} must be in (0, 1)", d.tail_fraction),
        )?;
        check(
            d.count_thresholds.iter().all(|&t| positive_finite(t)),
            "detect-jumps.count_thresholds",
            "must be positive",
        )
    }

    pub fn validate_event_study(&self) -> Result<(), Error> {
        let e = &self.event_study;
        check(positive_finite(e.match_window), "event-study.match_window", "must be positive")?;
        check(e.silence.is_finite() && e.silence >= 0.0, "event-study.silence", "must be nonnegative")?;
        check(e.max_lag >= 2, "event-study.max_lag", "must be at least 2")?;
        check(
            e.tau_max >= 3 && e.tau_max <= e.max_lag,
            "event-study.tau_max",
            format!("{} must be in [3, max_lag]", e.tau_max),
        )?;
        check(
            e.inner >= 1 && e.inner < e.max_lag as i64,
            "event-study.inner",
            format!("{} must be in [1, max_lag)", e.inner),
        )?;
        check(!e.s_values.is_empty(), "event-study.s_values", "must not be empty")?;
        check(
            e.s_values.iter().all(|&s| s.is_finite() && s >= self.detect_jumps.s),
            "event-study.s_values",
            format!("each value must be at least detect-jumps.s = {}", self.detect_jumps.s),
        )?;
        check(
            e.tail_fraction > 0.0 && e.tail_fraction < 1.0,
            "event-study.tail_fraction",
            format!("{} must be in (0, 1)", e.tail_fraction),
        )
    }

    pub fn validate_collective(&self) -> Result<(), Error> {
        let c = &self.collective;
        check(
            c.s.is_finite() && c.s >= self.detect_jumps.s,
            "collective.s",
            format!("{} must be at least detect-jumps.s = {}", c.s, self.detect_jumps.s),
        )?;
        check(
            c.s_prime > 0.0 && c.s_prime <= 1.0,
            "collective.s_prime",
            format!("{} must be in (0, 1]", c.s_prime),
        )?;
        check(positive_finite(c.chi_fit_min), "collective.chi_fit_min", "must be positive")
    }

    pub fn validate_taildep(&self) -> Result<(), Error> {
        check(self.taildep.per_decade >= 1, "taildep.per_decade", "must be at least 1")
    }
}

/// `a.b.c=value`; the value is read as a TOML value, or as a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set `{assignment}`: expected key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("--set `{assignment}`: empty key segment")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Input(format!("--set `{assignment}`: `{p}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
