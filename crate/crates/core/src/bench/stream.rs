use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::{Stream, StreamSource};
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::primitives::{Example, FeatureId, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// `label idx:val idx:val ...`; indices are used as raw feature ids.
    Libsvm,
    /// Header row `label,f1,...,fk`; column `j` becomes feature id `j`.
    Csv,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Libsvm => "libsvm",
            Format::Csv => "csv",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "libsvm" | "svmlight" => Ok(Format::Libsvm),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(
                "format",
                format!("unknown format `{other}` (expected libsvm or csv)"),
            )),
        }
    }
}

/// Interval labels are rescaled into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRange {
    #[default]
    Symmetric,
    Unit,
}

impl LabelRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            LabelRange::Symmetric => (-1.0, 1.0),
            LabelRange::Unit => (0.0, 1.0),
        }
    }
}

impl fmt::Display for LabelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.bounds();
        write!(f, "[{a},{b}]")
    }
}

impl FromStr for LabelRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '[' && *c != ']')
            .collect();
        match t.as_str() {
            "-1,1" | "-1:1" | "symmetric" => Ok(LabelRange::Symmetric),
            "0,1" | "0:1" | "unit" => Ok(LabelRange::Unit),
            _ => Err(Error::invalid(
                "label_range",
                format!("`{s}` is neither [-1,1] nor [0,1]"),
            )),
        }
    }
}

const RANGE_DIRECTIVE: &str = "label-range:";

/// Reads a stream from disk. Labels are mapped affinely from their source
/// range onto `label_range`; the source range comes from a leading
/// `# label-range: lo hi` line when present and from a scan of all labels
/// otherwise.
pub fn parse_stream(
    path: impl AsRef<Path>,
    format: Format,
    label_range: LabelRange,
    family: LossFamily,
) -> Result<Stream> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let examples = parse_examples(&text, format, label_range)?;
    Stream::new(
        StreamSource::File {
            path: path.display().to_string(),
        },
        family,
        examples,
    )
}

/// [`parse_stream`] over in-memory text.
pub fn parse_reader(text: &str, format: Format, label_range: LabelRange, family: LossFamily) -> Result<Stream> {
    let examples = parse_examples(text, format, label_range)?;
    Stream::new(
        StreamSource::File {
            path: "<memory>".to_string(),
        },
        family,
        examples,
    )
}

struct RawRow {
    line: usize,
    label: f64,
    features: Vec<(FeatureId, f64)>,
}

fn parse_examples(text: &str, format: Format, label_range: LabelRange) -> Result<Vec<Example>> {
    let declared = declared_range(text)?;
    let rows = match format {
        Format::Libsvm => parse_libsvm(text)?,
        Format::Csv => parse_csv(text)?,
    };
    if rows.is_empty() {
        return Err(Error::Data("stream file contains no examples".into()));
    }
    let (lo, hi) = match declared {
        Some((lo, hi)) => {
            if let Some(r) = rows.iter().find(|r| r.label < lo || r.label > hi) {
                return Err(Error::Parse {
                    line: r.line,
                    message: format!("label {} outside the declared range [{lo}, {hi}]", r.label),
                });
            }
            (lo, hi)
        }
        None => rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.label), hi.max(r.label))
        }),
    };
    let (a, b) = label_range.bounds();
    let rescale = |y: f64| {
        if lo == a && hi == b {
            y
        } else if hi == lo {
            0.5 * (a + b)
        } else {
            a + (y - lo) * (b - a) / (hi - lo)
        }
    };
    rows.into_iter()
        .enumerate()
        .map(|(t, r)| {
            let label = Prediction::scalar(rescale(r.label));
            Example::new(t as u64, r.features, Some(label)).map_err(|e| Error::Parse {
                line: r.line,
                message: e.to_string(),
            })
        })
        .collect()
}

fn declared_range(text: &str) -> Result<Option<(f64, f64)>> {
    let Some(first) = text.lines().next() else {
        return Ok(None);
    };
    let Some(rest) = first.trim().strip_prefix('#') else {
        return Ok(None);
    };
    let Some(spec) = rest.trim().strip_prefix(RANGE_DIRECTIVE) else {
        return Ok(None);
    };
    let bad = |m: String| Error::Parse { line: 1, message: m };
    let nums: Vec<f64> = spec
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("`{s}` in label-range header is not a number")))
        })
        .collect::<Result<_>>()?;
    match nums[..] {
        [lo, hi] if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(Some((lo, hi))),
        _ => Err(bad("label-range header needs two finite numbers lo <= hi".into())),
    }
}

fn parse_label(token: &str, line: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("label `{token}` is not a finite number"),
        }),
    }
}

fn parse_libsvm(text: &str) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().expect("non-empty line"), line)?;
        let mut features = Vec::new();
        for tok in tokens {
            let err = |m: &str| Error::Parse {
                line,
                message: format!("feature `{tok}`: {m}"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(|| err("expected idx:value"))?;
            if idx == "qid" {
                continue;
            }
            let idx: u32 = idx.parse().map_err(|_| err("index is not a non-negative integer"))?;
            let val: f64 = val.parse().map_err(|_| err("value is not a number"))?;
            if !val.is_finite() {
                return Err(err("value is not finite"));
            }
            features.push((FeatureId(idx), val));
        }
        rows.push(RawRow { line, label, features });
    }
    Ok(rows)
}

fn parse_csv(text: &str) -> Result<Vec<RawRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: e.to_string(),
        }
    };
    let width = reader.headers().map_err(csv_err)?.len();
    if width == 0 {
        return Err(Error::Data("csv file has no header row".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let label = parse_label(&record[0], line)?;
        let mut features = Vec::with_capacity(width - 1);
        for (j, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {} value `{field}` is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {} value is not finite", j + 1),
                });
            }
            features.push((FeatureId(j as u32), v));
        }
        rows.push(RawRow { line, label, features });
    }
    Ok(rows)
}

/// Serializes a stream whose labels already lie in `label_range`. The
/// output declares that range, so parsing it back with the same range
/// reproduces the stream exactly.
pub fn write_stream(stream: &Stream, format: Format, label_range: LabelRange) -> Result<String> {
    let (a, b) = label_range.bounds();
    let mut out = String::new();
    writeln!(out, "# {RANGE_DIRECTIVE} {a} {b}").expect("write to string");
    for (t, (x, _)) in stream.iter().enumerate() {
        let y = x.label().map(|l| l.first()).unwrap_or(0.0);
        if !(a..=b).contains(&y) {
            return Err(Error::Data(format!("round {t}: label {y} outside {label_range}")));
        }
    }
    match format {
        Format::Libsvm => {
            for (x, _) in stream.iter() {
                write!(out, "{}", x.label().map(|l| l.first()).unwrap_or(0.0)).expect("write to string");
                for f in x.features() {
                    write!(out, " {}:{}", f.id.0, f.value).expect("write to string");
                }
                out.push('\n');
            }
        }
        Format::Csv => {
            let width = stream
                .examples()
                .flat_map(|x| x.features().iter().map(|f| f.id.0))
                .max()
                .unwrap_or(0);
            if stream.examples().any(|x| x.features().iter().any(|f| f.id.0 == 0)) {
                return Err(Error::Data("feature id 0 has no csv column".into()));
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let header: Vec<String> = std::iter::once("label".to_string())
                .chain((1..=width).map(|j| format!("f{j}")))
                .collect();
            let io = |e: csv::Error| Error::Data(e.to_string());
            w.write_record(&header).map_err(io)?;
            for x in stream.examples() {
                let mut rec = vec![x.label().map(|l| l.first()).unwrap_or(0.0).to_string()];
                rec.extend((1..=width).map(|j| x.value(FeatureId(j)).to_string()));
                w.write_record(&rec).map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
            out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        }
    }
    Ok(out)
}
