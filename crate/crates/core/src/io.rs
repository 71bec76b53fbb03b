//! File formats used by the command-line tool.
//!
//! - responses: CSV with the response in the first column and an optional
//!   stratum label in the second; a non-numeric first row is a header;
//! - schedules: JSON `{"n": 350, "looks": [{"r": 250, "n1": 126, "t": 0.36}, ...]}`
//!   with `n` and the per-look `t` optional;
//! - assignment sequences: one 0/1 string per line, blank lines and lines
//!   starting with `#` ignored.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::design::TreatmentSequence;
use crate::error::{Error, Result};
use crate::sampler::{Look, LookSchedule};

/// Responses in trial order, with optional stratum labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseData {
    pub responses: Vec<f64>,
    pub strata: Option<Vec<String>>,
}

impl ResponseData {
    /// Positions of each stratum, in order of first appearance.
    pub fn stratum_positions(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        if let Some(labels) = &self.strata {
            for (i, label) in labels.iter().enumerate() {
                match groups.iter_mut().find(|(l, _)| l == label) {
                    Some((_, idx)) => idx.push(i),
                    None => groups.push((label.clone(), vec![i])),
                }
            }
        }
        groups
    }
}

/// A look schedule with its optional horizon and information fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleFile {
    pub n: Option<u64>,
    pub schedule: LookSchedule,
    /// Present only when every look carries a `t`.
    pub fractions: Option<Vec<f64>>,
}

impl ScheduleFile {
    /// Planned horizon: `n` when given, else the last look.
    pub fn horizon(&self) -> u64 {
        self.n.unwrap_or_else(|| self.schedule.horizon())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleRepr {
    #[serde(default)]
    n: Option<u64>,
    looks: Vec<LookRepr>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LookRepr {
    r: u64,
    n1: u64,
    #[serde(default)]
    t: Option<f64>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses response CSV text; `path` is used for diagnostics only.
pub fn parse_responses(text: &str, path: &Path) -> Result<ResponseData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut responses = Vec::new();
    let mut strata: Vec<String> = Vec::new();
    let mut columns = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let first = record.get(0).unwrap_or("");
        if first.is_empty() && record.len() <= 1 {
            continue;
        }
        let value = match first.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            Ok(_) => return Err(parse_error(path, line, format!("non-finite response '{first}'"))),
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(parse_error(path, line, format!("invalid response '{first}'"))),
        };
        let width = record.len();
        if width > 2 {
            return Err(parse_error(path, line, format!("expected 1 or 2 columns, found {width}")));
        }
        match columns {
            None => columns = Some(width),
            Some(w) if w != width => {
                return Err(parse_error(path, line, format!("expected {w} columns, found {width}")));
            }
            Some(_) => {}
        }
        responses.push(value);
        if width == 2 {
            strata.push(record[1].to_string());
        }
    }
    if responses.is_empty() {
        return Err(parse_error(path, 1, "no responses"));
    }
    let strata = (columns == Some(2)).then_some(strata);
    Ok(ResponseData { responses, strata })
}

pub fn read_responses(path: &Path) -> Result<ResponseData> {
    parse_responses(&read_to_string(path)?, path)
}

pub fn parse_schedule(text: &str, path: &Path) -> Result<ScheduleFile> {
    let repr: ScheduleRepr =
        serde_json::from_str(text).map_err(|e| parse_error(path, e.line(), e.to_string()))?;
    let fractions: Option<Vec<f64>> = repr.looks.iter().map(|l| l.t).collect();
    let schedule = LookSchedule::new(repr.looks.iter().map(|l| Look { r: l.r, n1: l.n1 }).collect())
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    if let Some(n) = repr.n {
        if n < schedule.horizon() {
            return Err(parse_error(
                path,
                1,
                format!("horizon n = {n} precedes the last look at {}", schedule.horizon()),
            ));
        }
    }
    if let Some(t) = &fractions {
        if t.iter().any(|&t| !(t > 0.0 && t <= 1.0)) || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(parse_error(path, 1, "information fractions must increase within (0, 1]"));
        }
    }
    Ok(ScheduleFile {
        n: repr.n,
        schedule,
        fractions,
    })
}

pub fn read_schedule(path: &Path) -> Result<ScheduleFile> {
    parse_schedule(&read_to_string(path)?, path)
}

pub fn parse_sequences(text: &str, path: &Path) -> Result<Vec<TreatmentSequence>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let seq = line
            .parse::<TreatmentSequence>()
            .map_err(|e| parse_error(path, i + 1, e.to_string()))?;
        out.push(seq);
    }
    if out.is_empty() {
        return Err(parse_error(path, 1, "no assignment sequences"));
    }
    Ok(out)
}

pub fn read_sequences(path: &Path) -> Result<Vec<TreatmentSequence>> {
    parse_sequences(&read_to_string(path)?, path)
}

/// Writes `content` to `path`, or to standard output when `path` is `None`.
pub fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("input")
    }

    #[test]
    fn responses_with_and_without_header() {
        let d = parse_responses("response\n1.5\n-2\n3e0\n", p()).unwrap();
        assert_eq!(d.responses, vec![1.5, -2.0, 3.0]);
        assert!(d.strata.is_none());
        let d = parse_responses("0.1,a\n0.2,b\n# note\n0.3,a\n", p()).unwrap();
        assert_eq!(d.strata.as_deref().unwrap(), ["a", "b", "a"]);
        assert_eq!(
            d.stratum_positions(),
            vec![("a".to_string(), vec![0, 2]), ("b".to_string(), vec![1])]
        );
    }

    #[test]
    fn response_errors_carry_line_numbers() {
        match parse_responses("y\n1\nfoo\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_responses("1\n2,a\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_responses("header\n", p()).is_err());
    }

    #[test]
    fn schedules() {
        let s = parse_schedule(r#"{"looks":[{"r":250,"n1":126},{"r":300,"n1":148}]}"#, p()).unwrap();
        assert_eq!(s.schedule, LookSchedule::from_pairs(&[(250, 126), (300, 148)]).unwrap());
        assert_eq!(s.horizon(), 300);
        assert!(s.fractions.is_none());
        let s = parse_schedule(
            r#"{"n":350,"looks":[{"r":250,"n1":126,"t":0.36},{"r":350,"n1":174,"t":1}]}"#,
            p(),
        )
        .unwrap();
        assert_eq!(s.horizon(), 350);
        assert_eq!(s.fractions, Some(vec![0.36, 1.0]));
        match parse_schedule("{\n\"looks\": [\n{\"r\": x}]}", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_schedule(r#"{"looks":[{"r":4,"n1":5}]}"#, p()).is_err());
        assert!(parse_schedule(r#"{"n":3,"looks":[{"r":4,"n1":2}]}"#, p()).is_err());
    }

    #[test]
    fn sequences() {
        let s = parse_sequences("# seed=1\n0101\n\n1100\n", p()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].assignments(), &[true, true, false, false]);
        match parse_sequences("01\n0x\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_schedule(Path::new("/nonexistent/schedule.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/schedule.json"));
    }
}
