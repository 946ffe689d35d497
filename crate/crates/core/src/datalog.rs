//! Per-step experiment log and its CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::{g17, parse_f64};
use crate::plant::Channel;
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopMode {
    Closed,
    Open,
}

impl LoopMode {
    pub fn name(self) -> &'static str {
        match self {
            LoopMode::Closed => "closed",
            LoopMode::Open => "open",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub config_hash: String,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub channel: Channel,
    pub axis_lock: bool,
    pub loop_mode: LoopMode,
    /// Free-form description of the excitation, e.g. `training`.
    pub signal: String,
}

impl Default for LogHeader {
    fn default() -> Self {
        LogHeader {
            config_hash: String::new(),
            seed: 0,
            sample_rate_hz: 250.0,
            channel: Channel::Roll,
            axis_lock: true,
            loop_mode: LoopMode::Closed,
            signal: String::new(),
        }
    }
}

pub const LOG_COLUMNS: [&str; 6] = ["t", "r", "d_s", "u", "y_rate", "y_angle"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataLog {
    pub header: LogHeader,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub d_s: Vec<f64>,
    pub u: Vec<f64>,
    pub y_rate: Vec<f64>,
    pub y_angle: Vec<f64>,
}

impl DataLog {
    pub fn with_header(header: LogHeader) -> Self {
        DataLog { header, ..DataLog::default() }
    }

    pub fn push(&mut self, t: f64, r: f64, d_s: f64, u: f64, y_rate: f64, y_angle: f64) {
        self.t.push(t);
        self.r.push(r);
        self.d_s.push(d_s);
        self.u.push(u);
        self.y_rate.push(y_rate);
        self.y_angle.push(y_angle);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_time(&self) -> f64 {
        1.0 / self.header.sample_rate_hz
    }

    pub fn signal(&self, column: &str) -> Result<Signal> {
        let v = match column {
            "t" => &self.t,
            "r" => &self.r,
            "d_s" => &self.d_s,
            "u" => &self.u,
            "y_rate" => &self.y_rate,
            "y_angle" => &self.y_angle,
            other => return Err(Error::Data(format!("no log column '{other}'"))),
        };
        Signal::new(v.clone(), self.sample_time(), column)
    }

    pub fn to_csv(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "# config_hash = {}", h.config_hash);
        let _ = writeln!(s, "# seed = {}", h.seed);
        let _ = writeln!(s, "# sample_rate_hz = {}", g17(h.sample_rate_hz));
        let _ = writeln!(s, "# channel = {}", h.channel);
        let _ = writeln!(s, "# axis_lock = {}", h.axis_lock);
        let _ = writeln!(s, "# loop_mode = {}", h.loop_mode.name());
        let _ = writeln!(s, "# signal = {}", h.signal);
        let _ = writeln!(s, "{}", LOG_COLUMNS.join(","));
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                g17(self.t[i]),
                g17(self.r[i]),
                g17(self.d_s[i]),
                g17(self.u[i]),
                g17(self.y_rate[i]),
                g17(self.y_angle[i])
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut header = LogHeader::default();
        let mut seen_seed = false;
        let mut log = DataLog::default();
        let mut columns_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.split_once('=') else { continue };
                let v = v.trim();
                match k.trim() {
                    "config_hash" => header.config_hash = v.to_string(),
                    "seed" => {
                        header.seed = v.parse().map_err(|_| Error::Parse(format!("bad seed '{v}'")))?;
                        seen_seed = true;
                    }
                    "sample_rate_hz" => {
                        header.sample_rate_hz = parse_f64(v)
                            .filter(|r| *r > 0.0)
                            .ok_or_else(|| Error::Parse(format!("bad sample rate '{v}'")))?
                    }
                    "channel" => header.channel = v.parse()?,
                    "axis_lock" => {
                        header.axis_lock = v.parse().map_err(|_| Error::Parse(format!("bad axis_lock '{v}'")))?
                    }
                    "loop_mode" => {
                        header.loop_mode = match v {
                            "closed" => LoopMode::Closed,
                            "open" => LoopMode::Open,
                            _ => return Err(Error::Parse(format!("bad loop_mode '{v}'"))),
                        }
                    }
                    "signal" => header.signal = v.to_string(),
                    _ => {}
                }
                continue;
            }
            if !columns_seen {
                if line.split(',').map(str::trim).ne(LOG_COLUMNS) {
                    return Err(Error::Parse(format!("unexpected log columns '{line}'")));
                }
                columns_seen = true;
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| parse_f64(f.trim()).ok_or_else(|| Error::Parse(format!("line {}: bad number '{f}'", lineno + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != LOG_COLUMNS.len() {
                return Err(Error::Parse(format!("line {}: expected 6 fields", lineno + 1)));
            }
            log.push(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]);
        }
        if !seen_seed {
            return Err(Error::Parse("log header lacks a seed".into()));
        }
        if !columns_seen {
            return Err(Error::Parse("log lacks a column header".into()));
        }
        log.header = header;
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
