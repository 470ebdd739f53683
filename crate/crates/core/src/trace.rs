//! Uniformly sampled scalar traces and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalUnit {
    Volt,
    Tesla,
    /// Model units (normalized fluorescence, populations).
    Dimensionless,
}

impl SignalUnit {
    fn column(self) -> &'static str {
        match self {
            SignalUnit::Volt => "value_v",
            SignalUnit::Tesla => "value_t",
            SignalUnit::Dimensionless => "value",
        }
    }

    fn from_column(name: &str) -> Option<Self> {
        match name {
            "value_v" => Some(SignalUnit::Volt),
            "value_t" => Some(SignalUnit::Tesla),
            "value" => Some(SignalUnit::Dimensionless),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub samples: Vec<f64>,
    /// Hz.
    pub sample_rate: f64,
    /// Time of the first sample, s.
    pub start_time: f64,
    pub unit: SignalUnit,
}

impl TimeTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64, unit: SignalUnit) -> Result<Self> {
        Self::with_start(samples, sample_rate, 0.0, unit)
    }

    pub fn with_start(samples: Vec<f64>, sample_rate: f64, start_time: f64, unit: SignalUnit) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid("sample_rate", format!("must be > 0, got {sample_rate}")));
        }
        if samples.len() < 2 {
            return Err(invalid("samples", "a trace needs at least 2 samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Total covered time N/fs, s.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|i| self.time(i)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| f(x)).collect(),
            ..self.clone()
        }
    }

    /// Converts a voltage trace to field using a scalar factor in V/T.
    pub fn to_tesla(&self, scalar_factor: f64) -> Result<Self> {
        if self.unit != SignalUnit::Volt {
            return Err(invalid("unit", "only volt traces can be converted to tesla"));
        }
        if !(scalar_factor.is_finite() && scalar_factor != 0.0) {
            return Err(invalid("scalar_factor", "must be finite and nonzero"));
        }
        let mut out = self.map(|v| v / scalar_factor);
        out.unit = SignalUnit::Tesla;
        Ok(out)
    }

    pub fn to_csv_string(&self, header_comments: &[String]) -> String {
        let mut s = String::with_capacity(self.samples.len() * 40);
        for line in header_comments {
            for l in line.lines() {
                let _ = writeln!(s, "# {l}");
            }
        }
        let _ = writeln!(s, "time_s,{}", self.unit.column());
        for (i, v) in self.samples.iter().enumerate() {
            // `{:?}` on f64 prints the shortest representation that round-trips.
            let _ = writeln!(s, "{:?},{:?}", self.time(i), v);
        }
        s
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, header_comments: &[String]) -> Result<()> {
        fs::write(path, self.to_csv_string(header_comments))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    /// Parses `time_s,value_v|value_t|value` CSV. Lines starting with `#` are skipped.
    /// Timestamps must be uniformly spaced within 1 ppm of the mean step.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut unit = None;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if unit.is_none() {
                if fields.len() != 2 || fields[0] != "time_s" {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: format!("expected header `time_s,value_v|value_t`, got `{line}`"),
                    });
                }
                unit = Some(SignalUnit::from_column(fields[1]).ok_or_else(|| Error::Parse {
                    line: line_no,
                    reason: format!("unknown value column `{}`", fields[1]),
                })?);
                continue;
            }
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("malformed {what} `{s}`"),
                })
            };
            let t = parse(fields[0], "time")?;
            let v = parse(fields[1], "value")?;
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    reason: "non-finite number".into(),
                });
            }
            times.push(t);
            values.push(v);
            lines.push(line_no);
        }
        let unit = unit.ok_or(Error::Parse {
            line: 0,
            reason: "missing header".into(),
        })?;
        if times.len() < 2 {
            return Err(Error::Parse {
                line: lines.last().copied().unwrap_or(0),
                reason: "a trace needs at least 2 rows".into(),
            });
        }
        let n = times.len();
        let step = (times[n - 1] - times[0]) / (n - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::Parse {
                line: lines[1],
                reason: "timestamps must be strictly increasing".into(),
            });
        }
        for i in 1..n {
            let expected = times[0] + i as f64 * step;
            if (times[i] - expected).abs() > 1e-6 * step {
                return Err(Error::Parse {
                    line: lines[i],
                    reason: format!(
                        "non-uniform sample spacing: t = {} s deviates from {} s by more than 1 ppm of the step",
                        times[i], expected
                    ),
                });
            }
        }
        Self::with_start(values, 1.0 / step, times[0], unit)
    }
}
