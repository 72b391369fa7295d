//! Delimited price / return files and non-overlapping windowing.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{GossetError, Result};

/// What the value column of an input file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesFormat {
    /// Closing prices, converted to log returns `ln(P_{i+1}/P_i)`.
    Closes,
    /// Daily log returns, passed through.
    Returns,
}

impl FromStr for SeriesFormat {
    type Err = GossetError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "closes" | "close" | "prices" => Ok(SeriesFormat::Closes),
            "returns" | "return" => Ok(SeriesFormat::Returns),
            other => Err(GossetError::invalid("format", format!("expected closes or returns, got `{other}`"))),
        }
    }
}

/// Header names for the value and date columns.
///
/// `None` means auto-detect: the value column is the first header matching a
/// known price or return name (falling back to the last column), and the
/// date column is a header named `date` if one exists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnMap {
    pub value: Option<String>,
    pub date: Option<String>,
}

impl ColumnMap {
    pub fn value(name: impl Into<String>) -> Self {
        Self {
            value: Some(name.into()),
            date: None,
        }
    }

    pub fn with_date(mut self, name: impl Into<String>) -> Self {
        self.date = Some(name.into());
        self
    }
}

const VALUE_HEADERS: [&str; 6] = ["adj close", "close", "price", "return", "returns", "value"];

/// Daily log returns with optional dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Option<Vec<NaiveDate>>,
    returns: Vec<f64>,
    source: String,
}

impl ReturnSeries {
    pub fn new(returns: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if returns.is_empty() {
            return Err(GossetError::invalid("returns", "series is empty"));
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(GossetError::invalid("returns", format!("non-finite value {} at index {i}", returns[i])));
        }
        Ok(Self {
            dates: None,
            returns,
            source: source.into(),
        })
    }

    /// Log returns of a close series; needs at least two positive prices.
    pub fn from_closes(closes: &[f64], source: impl Into<String>) -> Result<Self> {
        if closes.len() < 2 {
            return Err(GossetError::invalid("closes", format!("need at least 2 prices, got {}", closes.len())));
        }
        if let Some(i) = closes.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(GossetError::invalid("closes", format!("price {} at index {i} is not positive", closes[i])));
        }
        let returns = closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        Self::new(returns, source)
    }

    /// Attaches one date per return; dates must be strictly increasing.
    pub fn with_dates(mut self, dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.len() != self.returns.len() {
            return Err(GossetError::invalid(
                "dates",
                format!("{} dates for {} returns", dates.len(), self.returns.len()),
            ));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(GossetError::invalid("dates", format!("{} does not follow {}", w[1], w[0])));
        }
        self.dates = Some(dates);
        Ok(self)
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn dates(&self) -> Option<&[NaiveDate]> {
        self.dates.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Running sum of returns, i.e. `ln(P_i / P_0)` for `i ≥ 1`.
    pub fn cumulative(&self) -> Vec<f64> {
        self.returns
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect()
    }
}

/// Loads a header-led delimited file.
pub fn load_series(
    path: impl AsRef<Path>,
    format: SeriesFormat,
    delimiter: u8,
    columns: &ColumnMap,
) -> Result<ReturnSeries> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| GossetError::Io {
            path: shown.clone(),
            source,
        })?;
    parse_series(&text, &shown, format, delimiter, columns)
}

/// [`load_series`] over in-memory text; `source` labels errors.
pub fn parse_series(
    text: &str,
    source: &str,
    format: SeriesFormat,
    delimiter: u8,
    columns: &ColumnMap,
) -> Result<ReturnSeries> {
    let malformed = |line: u64, message: String| GossetError::MalformedRow {
        path: source.to_string(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(malformed(1, "missing header row".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));

    let value_col = match &columns.value {
        Some(name) => find(name).ok_or_else(|| malformed(1, format!("no column named `{name}`")))?,
        None => VALUE_HEADERS
            .iter()
            .find_map(|name| find(name))
            .unwrap_or(headers.len() - 1),
    };
    let date_col = match &columns.date {
        Some(name) => Some(find(name).ok_or_else(|| malformed(1, format!("no column named `{name}`")))?),
        None => find("date").filter(|&c| c != value_col),
    };

    let mut values = Vec::new();
    let mut dates = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record
            .get(value_col)
            .ok_or_else(|| malformed(line, format!("missing column {}", value_col + 1)))?;
        let value: f64 = field
            .parse()
            .map_err(|_| malformed(line, format!("cannot parse `{field}` as a number")))?;
        if !value.is_finite() {
            return Err(malformed(line, format!("non-finite value `{field}`")));
        }
        if format == SeriesFormat::Closes && value <= 0.0 {
            return Err(malformed(line, format!("price {value} is not positive")));
        }
        values.push(value);
        if let Some(c) = date_col {
            let field = record
                .get(c)
                .ok_or_else(|| malformed(line, format!("missing column {}", c + 1)))?;
            let date = NaiveDate::parse_from_str(field, "%Y-%m-%d")
                .map_err(|e| malformed(line, format!("bad date `{field}`: {e}")))?;
            if let Some(prev) = dates.last() {
                if date <= *prev {
                    return Err(malformed(line, format!("date {date} does not follow {prev}")));
                }
            }
            dates.push(date);
        }
    }

    let series = match format {
        SeriesFormat::Closes => {
            if !dates.is_empty() {
                dates.remove(0);
            }
            ReturnSeries::from_closes(&values, source)?
        }
        SeriesFormat::Returns => ReturnSeries::new(values, source)?,
    };
    if date_col.is_some() {
        series.with_dates(dates)
    } else {
        Ok(series)
    }
}

/// Consecutive non-overlapping windows from the start; the trailing partial
/// window is dropped, so there are `⌊n / window_len⌋` of them.
pub fn segment(series: &ReturnSeries, window_len: usize) -> Result<Vec<&[f64]>> {
    if window_len < 2 {
        return Err(GossetError::invalid("window_len", format!("must be at least 2, got {window_len}")));
    }
    Ok(series.returns.chunks_exact(window_len).collect())
}
