use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{ttc_of, CutInAction, SubjectState};

pub const HEADER: [&str; 4] = ["v_s", "v_lc", "gap", "ttc"];

/// Subject-speed band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpeedBand {
    Low,
    Med,
    High,
}

impl SpeedBand {
    pub const ALL: [SpeedBand; 3] = [SpeedBand::Low, SpeedBand::Med, SpeedBand::High];

    /// LOW up to 15 m/s, MED up to 25 m/s, HIGH above.
    pub fn of(v_s: f64) -> Self {
        if v_s <= 15.0 {
            SpeedBand::Low
        } else if v_s <= 25.0 {
            SpeedBand::Med
        } else {
            SpeedBand::High
        }
    }
}

impl fmt::Display for SpeedBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedBand::Low => "LOW",
            SpeedBand::Med => "MED",
            SpeedBand::High => "HIGH",
        })
    }
}

impl FromStr for SpeedBand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LOW" => Ok(SpeedBand::Low),
            "MED" | "MEDIUM" => Ok(SpeedBand::Med),
            "HIGH" => Ok(SpeedBand::High),
            _ => Err(Error::Config(format!("unknown speed band {s:?}"))),
        }
    }
}

/// One observed cut-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub v_s: f64,
    pub v_lc: f64,
    pub gap: f64,
    /// `+inf` when the gap was not closing.
    pub ttc: f64,
}

impl Observation {
    /// Build from a state and action, deriving the TTC.
    pub fn from_action(v_s: f64, action: &CutInAction) -> Self {
        let ttc = ttc_of(&SubjectState { v_s }, action);
        Self { v_s, v_lc: action.v_lc, gap: action.gap, ttc }
    }

    pub fn band(&self) -> SpeedBand {
        SpeedBand::of(self.v_s)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("v_s", self.v_s), ("v_lc", self.v_lc), ("gap", self.gap)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if self.ttc.is_nan() || self.ttc < 0.0 {
            return Err(format!("ttc = {} must be >= 0 or inf", self.ttc));
        }
        let expect = ttc_of(&SubjectState { v_s: self.v_s }, &CutInAction { v_lc: self.v_lc, gap: self.gap });
        let consistent = if expect.is_infinite() || self.ttc.is_infinite() {
            expect == self.ttc
        } else {
            (expect - self.ttc).abs() <= 1e-6 * expect.max(1.0)
        };
        if !consistent {
            return Err(format!("ttc = {} inconsistent with gap/(v_s - v_lc) = {expect}", self.ttc));
        }
        Ok(())
    }
}

/// A collection of observations in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub records: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(records: Vec<Observation>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn band(&self, band: SpeedBand) -> Vec<Observation> {
        self.records.iter().filter(|o| o.band() == band).copied().collect()
    }

    /// Parse CSV with the exact header `v_s,v_lc,gap,ttc`. Every bad row is
    /// reported with its line number.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?;
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Data(format!(
                "line 1: expected header {:?}, found {:?}",
                HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        let mut problems = Vec::new();
        for row in rdr.records() {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line());
                    problems.push(format!("line {line}: {e}"));
                    continue;
                }
            };
            let line = row.position().map_or(0, |p| p.line());
            let parsed: std::result::Result<Vec<f64>, _> = row.iter().map(|f| f.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 4 => {
                    let o = Observation { v_s: v[0], v_lc: v[1], gap: v[2], ttc: v[3] };
                    match o.validate() {
                        Ok(()) => records.push(o),
                        Err(msg) => problems.push(format!("line {line}: {msg}")),
                    }
                }
                Ok(v) => problems.push(format!("line {line}: expected 4 fields, found {}", v.len())),
                Err(e) => problems.push(format!("line {line}: {e}")),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Data(format!("{} rejected row(s): {}", problems.len(), problems.join("; "))));
        }
        Ok(Self { records })
    }

    pub fn read_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::read_csv(std::io::BufReader::new(f)).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.as_ref().display())),
            other => other,
        })
    }

    /// Shortest round-trip float formatting; infinite TTC is written `inf`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", HEADER.join(","))?;
        for o in &self.records {
            writeln!(w, "{},{},{},{}", o.v_s, o.v_lc, o.gap, o.ttc)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        assert_eq!(SpeedBand::of(15.0), SpeedBand::Low);
        assert_eq!(SpeedBand::of(15.01), SpeedBand::Med);
        assert_eq!(SpeedBand::of(25.0), SpeedBand::Med);
        assert_eq!(SpeedBand::of(25.5), SpeedBand::High);
        assert_eq!("high".parse::<SpeedBand>().unwrap(), SpeedBand::High);
    }

    #[test]
    fn csv_round_trip() {
        let set = ObservationSet::new(vec![
            Observation::from_action(20.0, &CutInAction { v_lc: 15.0, gap: 10.0 }),
            Observation::from_action(10.0, &CutInAction { v_lc: 12.5, gap: 0.1 + 0.2 }),
        ]);
        assert_eq!(set.records[0].ttc, 2.0);
        assert!(set.records[1].ttc.is_infinite());
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "v_s,v_lc,gap,ttc\n20,15,10,2\n10,12.5,0.30000000000000004,inf\n");
        assert_eq!(ObservationSet::read_csv(&buf[..]).unwrap(), set);
    }

    #[test]
    fn rejects_with_line_numbers() {
        let text = "v_s,v_lc,gap,ttc\n20,15,10,2\n20,15,10,3\n-1,0,1,inf\n20,x,1,1\n";
        let err = ObservationSet::read_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("3 rejected"), "{err}");
        assert!(err.contains("line 3:") && err.contains("line 4:") && err.contains("line 5:"), "{err}");
        assert!(!err.contains("line 2:"));
    }

    #[test]
    fn rejects_bad_header() {
        let err = ObservationSet::read_csv("v_s,gap,v_lc,ttc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.starts_with("line 1")));
        assert_eq!(err.exit_code(), 3);
    }
}
