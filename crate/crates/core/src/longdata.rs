//! Person-by-time panels of two binary treatments, a time-varying covariate
//! and a continuous outcome.
//!
//! Row `t` of an individual holds `(A_t, B_t, L_t, Y_t)`. Treatments and the
//! covariate exist for `t = 0..T-1`; outcomes for `t = 0..T`, where `Y_0` is
//! the baseline outcome and `Y_{t+1}` follows treatment at `t`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("individual {id} time {time}: treatment `{column}` is not 0 or 1")]
    NonBinaryTreatment {
        id: String,
        time: usize,
        column: &'static str,
    },
    #[error("individual {id}: time index jumps from {from} to {to}")]
    NonContiguousTime { id: String, from: i64, to: usize },
    #[error("individual {id} has two rows for time {time}")]
    DuplicateRow { id: String, time: usize },
    #[error("individual {id}: {message}")]
    InvalidRow { id: String, message: String },
    #[error("line {line}: cannot parse `{column}` value `{value}`")]
    Parse {
        line: u64,
        column: String,
        value: String,
    },
    #[error("individual {id} follows {found} times, others follow {expected}")]
    InconsistentHorizon {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("dataset has no individuals")]
    Empty,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Joint status of the two treatments at one time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComboCode(u8);

impl ComboCode {
    pub const NONE: ComboCode = ComboCode(0);
    pub const A_ONLY: ComboCode = ComboCode(1);
    pub const B_ONLY: ComboCode = ComboCode(2);
    pub const BOTH: ComboCode = ComboCode(3);
    pub const ALL: [ComboCode; 4] = [Self::NONE, Self::A_ONLY, Self::B_ONLY, Self::BOTH];

    pub fn encode(a: bool, b: bool) -> Self {
        ComboCode(u8::from(a) + 2 * u8::from(b))
    }

    pub fn from_value(v: u8) -> Option<Self> {
        (v < 4).then_some(ComboCode(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn decode(self) -> (bool, bool) {
        (self.a(), self.b())
    }

    pub fn a(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn b(self) -> bool {
        self.0 & 2 == 2
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            0 => "0",
            1 => "A",
            2 => "B",
            _ => "AB",
        }
    }
}

/// Convenience wrapper over [`ComboCode::encode`] for 0/1 inputs.
pub fn encode_combo(a: u8, b: u8) -> ComboCode {
    ComboCode::encode(a == 1, b == 1)
}

/// The six pairwise comparisons of sustained strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Comparison {
    AvsNone,
    BvsNone,
    AvsB,
    ABvsNone,
    ABvsA,
    ABvsB,
}

impl Comparison {
    pub const ALL: [Comparison; 6] = [
        Comparison::AvsNone,
        Comparison::BvsNone,
        Comparison::AvsB,
        Comparison::ABvsNone,
        Comparison::ABvsA,
        Comparison::ABvsB,
    ];

    /// `(treated, reference)` strategies.
    pub fn arms(self) -> (ComboCode, ComboCode) {
        match self {
            Comparison::AvsNone => (ComboCode::A_ONLY, ComboCode::NONE),
            Comparison::BvsNone => (ComboCode::B_ONLY, ComboCode::NONE),
            Comparison::AvsB => (ComboCode::A_ONLY, ComboCode::B_ONLY),
            Comparison::ABvsNone => (ComboCode::BOTH, ComboCode::NONE),
            Comparison::ABvsA => (ComboCode::BOTH, ComboCode::A_ONLY),
            Comparison::ABvsB => (ComboCode::BOTH, ComboCode::B_ONLY),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Comparison::AvsNone => "A-0",
            Comparison::BvsNone => "B-0",
            Comparison::AvsB => "A-B",
            Comparison::ABvsNone => "AB-0",
            Comparison::ABvsA => "AB-A",
            Comparison::ABvsB => "AB-B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().replace(['−', '–'], "-").to_ascii_uppercase();
        Self::ALL.into_iter().find(|c| c.label() == norm)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One comparison at one horizon (years since baseline, `1..=T`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EstimandId {
    pub comparison: Comparison,
    pub horizon: usize,
}

impl EstimandId {
    pub fn new(comparison: Comparison, horizon: usize) -> Self {
        Self {
            comparison,
            horizon,
        }
    }

    /// All comparisons crossed with horizons `1..=horizons`, comparison-major.
    pub fn all(horizons: usize) -> Vec<EstimandId> {
        Comparison::ALL
            .iter()
            .flat_map(|&c| (1..=horizons).map(move |h| EstimandId::new(c, h)))
            .collect()
    }
}

/// Immutable panel.
///
/// Arrays are dense per individual. Entries after an individual's last
/// observed time hold placeholder values and must not be read; use
/// [`LongitudinalDataset::observed_times`] and
/// [`LongitudinalDataset::last_outcome`].
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    ids: Vec<String>,
    times: usize,
    width: usize,
    a: Vec<u8>,
    b: Vec<u8>,
    z: Vec<ComboCode>,
    l: Vec<f64>,
    y: Vec<f64>,
    /// Last observed outcome index per individual (`times` when uncensored).
    last: Vec<usize>,
    has_censoring: bool,
}

/// Column-wise builder input for [`LongitudinalDataset::from_parts`].
#[derive(Debug, Clone, Default)]
pub struct PanelParts {
    pub ids: Vec<String>,
    /// Treatment times per individual.
    pub times: usize,
    /// `n * times` values, individual-major.
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    /// `n * times * covariate_width` values.
    pub l: Vec<f64>,
    /// `n * (times + 1)` values.
    pub y: Vec<f64>,
    /// Optional last observed outcome index per individual.
    pub last: Option<Vec<usize>>,
    pub covariate_width: usize,
}

impl LongitudinalDataset {
    pub fn from_parts(parts: PanelParts) -> Result<Self, DataError> {
        let n = parts.ids.len();
        let t = parts.times;
        let width = parts.covariate_width.max(1);
        if n == 0 {
            return Err(DataError::Empty);
        }
        let sizes_ok = parts.a.len() == n * t
            && parts.b.len() == n * t
            && parts.l.len() == n * t * width
            && parts.y.len() == n * (t + 1);
        if !sizes_ok {
            return Err(DataError::IndexOutOfRange(
                "panel arrays do not match n and T".into(),
            ));
        }
        for (k, (&a, &b)) in parts.a.iter().zip(&parts.b).enumerate() {
            for (v, column) in [(a, "a"), (b, "b")] {
                if v > 1 {
                    return Err(DataError::NonBinaryTreatment {
                        id: parts.ids[k / t.max(1)].clone(),
                        time: k % t.max(1),
                        column,
                    });
                }
            }
        }
        let has_censoring = parts.last.is_some();
        let last = parts.last.unwrap_or_else(|| vec![t; n]);
        if last.len() != n || last.iter().any(|&m| m > t) {
            return Err(DataError::IndexOutOfRange("last observed time".into()));
        }
        let z = parts
            .a
            .iter()
            .zip(&parts.b)
            .map(|(&a, &b)| encode_combo(a, b))
            .collect();
        Ok(Self {
            ids: parts.ids,
            times: t,
            width,
            a: parts.a,
            b: parts.b,
            z,
            l: parts.l,
            y: parts.y,
            last,
            has_censoring,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.ids.len()
    }

    /// Number of treatment times `T`.
    pub fn times(&self) -> usize {
        self.times
    }

    pub fn covariate_width(&self) -> usize {
        self.width
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn has_censoring(&self) -> bool {
        self.has_censoring
    }

    pub fn a(&self, i: usize, t: usize) -> u8 {
        self.a[i * self.times + t]
    }

    pub fn b(&self, i: usize, t: usize) -> u8 {
        self.b[i * self.times + t]
    }

    pub fn z(&self, i: usize, t: usize) -> ComboCode {
        self.z[i * self.times + t]
    }

    /// Treatment history `z_0..z_{T-1}` (placeholders past censoring).
    pub fn z_row(&self, i: usize) -> &[ComboCode] {
        &self.z[i * self.times..(i + 1) * self.times]
    }

    /// First covariate component.
    pub fn l(&self, i: usize, t: usize) -> f64 {
        self.l[(i * self.times + t) * self.width]
    }

    pub fn l_vec(&self, i: usize, t: usize) -> &[f64] {
        let k = (i * self.times + t) * self.width;
        &self.l[k..k + self.width]
    }

    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y[i * (self.times + 1) + t]
    }

    /// Index of the last observed outcome for individual `i`.
    pub fn last_outcome(&self, i: usize) -> usize {
        self.last[i]
    }

    /// Number of treatment times with observed `(A, B, L)`.
    pub fn observed_times(&self, i: usize) -> usize {
        self.last[i].min(self.times)
    }

    /// Whether individual `i` is still under follow-up at time `t`.
    pub fn is_uncensored(&self, i: usize, t: usize) -> bool {
        t <= self.last[i]
    }

    /// `I(z_j = c)` for `j = 0..=t`, `c = 1..=3`, laid out time-major:
    /// `[I(z_0=1), I(z_0=2), I(z_0=3), I(z_1=1), ..]`.
    pub fn history_indicators(&self, i: usize, t: usize) -> Result<Vec<f64>, DataError> {
        if i >= self.n_individuals() {
            return Err(DataError::IndexOutOfRange(format!("individual {i}")));
        }
        if t >= self.observed_times(i) {
            return Err(DataError::IndexOutOfRange(format!(
                "time {t} for individual {}",
                self.ids[i]
            )));
        }
        let mut out = vec![0.0; 3 * (t + 1)];
        for j in 0..=t {
            let c = self.z(i, j).index();
            if c > 0 {
                out[3 * j + c - 1] = 1.0;
            }
        }
        Ok(out)
    }

    /// Whether `z_0..=z_t` all equal `z_0`.
    pub fn adherent_through(&self, i: usize, t: usize) -> bool {
        let row = self.z_row(i);
        t < self.observed_times(i) && row[..=t].iter().all(|&z| z == row[0])
    }

    /// Among individuals starting on `combo`, the fraction that keep it
    /// through treatment time `through` (inclusive). `None` if nobody starts on it.
    pub fn sustained_fraction(&self, combo: ComboCode, through: usize) -> Option<f64> {
        let mut starters = 0usize;
        let mut kept = 0usize;
        for i in 0..self.n_individuals() {
            if self.observed_times(i) == 0 || self.z(i, 0) != combo {
                continue;
            }
            starters += 1;
            if self.adherent_through(i, through) {
                kept += 1;
            }
        }
        (starters > 0).then(|| kept as f64 / starters as f64)
    }

    /// New panel made of the listed individuals (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let t = self.times;
        let w = self.width;
        let mut out = Self {
            ids: Vec::with_capacity(indices.len()),
            times: t,
            width: w,
            a: Vec::with_capacity(indices.len() * t),
            b: Vec::with_capacity(indices.len() * t),
            z: Vec::with_capacity(indices.len() * t),
            l: Vec::with_capacity(indices.len() * t * w),
            y: Vec::with_capacity(indices.len() * (t + 1)),
            last: Vec::with_capacity(indices.len()),
            has_censoring: self.has_censoring,
        };
        for &i in indices {
            out.ids.push(self.ids[i].clone());
            out.a.extend_from_slice(&self.a[i * t..(i + 1) * t]);
            out.b.extend_from_slice(&self.b[i * t..(i + 1) * t]);
            out.z.extend_from_slice(&self.z[i * t..(i + 1) * t]);
            out.l.extend_from_slice(&self.l[i * t * w..(i + 1) * t * w]);
            out.y
                .extend_from_slice(&self.y[i * (t + 1)..(i + 1) * (t + 1)]);
            out.last.push(self.last[i]);
        }
        out
    }

    /// Copy with `delta` added to every outcome.
    pub fn shift_outcomes(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.y {
            *v += delta;
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    column: &str,
) -> Result<Option<T>, DataError> {
    let raw = rec.get(idx).unwrap_or("").trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    raw.parse::<T>().map(Some).map_err(|_| DataError::Parse {
        line: rec.position().map_or(0, |p| p.line()),
        column: column.to_string(),
        value: raw.to_string(),
    })
}

struct RawRow {
    time: usize,
    a: Option<i64>,
    b: Option<i64>,
    l: Vec<Option<f64>>,
    y: Option<f64>,
    censored: bool,
}

/// Reads the long CSV schema `id,time,a,b,l,y[,censored]`.
///
/// Extra covariate columns `l2, l3, ..` widen the covariate vector. The row
/// at time `T` carries only the final outcome. A row with `censored = 1`
/// marks the first time with no data; it and any later rows are ignored.
pub fn load_long_csv<R: Read>(source: R) -> Result<LongitudinalDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let col = |name: &str| find(name).ok_or_else(|| DataError::MissingColumn(name.to_string()));
    let (c_id, c_time, c_a, c_b, c_l, c_y) =
        (col("id")?, col("time")?, col("a")?, col("b")?, col("l")?, col("y")?);
    let c_cens = find("censored");
    let mut l_cols = vec![c_l];
    let mut k = 2;
    while let Some(c) = find(&format!("l{k}")) {
        l_cols.push(c);
        k += 1;
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, BTreeMap<usize, RawRow>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let id = rec.get(c_id).unwrap_or("").trim().to_string();
        let time: usize = parse_field(&rec, c_time, "time")?.ok_or_else(|| DataError::Parse {
            line: rec.position().map_or(0, |p| p.line()),
            column: "time".into(),
            value: String::new(),
        })?;
        let row = RawRow {
            time,
            a: parse_field(&rec, c_a, "a")?,
            b: parse_field(&rec, c_b, "b")?,
            l: l_cols
                .iter()
                .map(|&c| parse_field(&rec, c, "l"))
                .collect::<Result<_, _>>()?,
            y: parse_field(&rec, c_y, "y")?,
            censored: match c_cens {
                Some(c) => parse_field::<i64>(&rec, c, "censored")?.unwrap_or(0) == 1,
                None => false,
            },
        };
        for (v, column) in [(row.a, "a"), (row.b, "b")] {
            if matches!(v, Some(x) if x != 0 && x != 1) {
                return Err(DataError::NonBinaryTreatment { id, time, column });
            }
        }
        let person = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if person.insert(time, row).is_some() {
            return Err(DataError::DuplicateRow { id, time });
        }
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }

    // per individual: contiguous times starting at 0, truncated at censoring
    let mut spans: Vec<(String, Vec<RawRow>, bool)> = Vec::with_capacity(order.len());
    for id in &order {
        let person = rows.remove(id).expect("id recorded on insert");
        let mut kept = Vec::new();
        let mut censored = false;
        let mut expect = 0usize;
        for (time, row) in person {
            if time != expect {
                return Err(DataError::NonContiguousTime {
                    id: id.clone(),
                    from: expect as i64 - 1,
                    to: time,
                });
            }
            expect += 1;
            if censored {
                continue;
            }
            if row.censored {
                censored = true;
                continue;
            }
            kept.push(row);
        }
        spans.push((id.clone(), kept, censored));
    }

    let times = spans
        .iter()
        .filter(|(_, _, c)| !c)
        .map(|(_, r, _)| r.len().saturating_sub(1))
        .max()
        .or_else(|| spans.iter().map(|(_, r, _)| r.len().saturating_sub(1)).max())
        .unwrap_or(0);
    if times == 0 {
        return Err(DataError::InvalidRow {
            id: spans[0].0.clone(),
            message: "needs at least one treatment time and one follow-up outcome".into(),
        });
    }

    let width = l_cols.len();
    let n = spans.len();
    let any_censored = spans.iter().any(|(_, _, c)| *c);
    let mut parts = PanelParts {
        ids: Vec::with_capacity(n),
        times,
        a: vec![0; n * times],
        b: vec![0; n * times],
        l: vec![0.0; n * times * width],
        y: vec![0.0; n * (times + 1)],
        last: Some(Vec::with_capacity(n)),
        covariate_width: width,
    };
    for (i, (id, kept, censored)) in spans.into_iter().enumerate() {
        let last = kept.len().saturating_sub(1);
        if !censored && last != times {
            return Err(DataError::InconsistentHorizon {
                id,
                expected: times,
                found: last,
            });
        }
        if kept.is_empty() {
            return Err(DataError::InvalidRow {
                id,
                message: "censored before the baseline row".into(),
            });
        }
        for row in &kept {
            let t = row.time;
            let bad = |what: &str| DataError::InvalidRow {
                id: id.clone(),
                message: format!("time {t}: missing {what}"),
            };
            parts.y[i * (times + 1) + t] = row.y.ok_or_else(|| bad("y"))?;
            // treatment rows are those followed by an observed outcome
            if t < last {
                parts.a[i * times + t] = row.a.ok_or_else(|| bad("a"))? as u8;
                parts.b[i * times + t] = row.b.ok_or_else(|| bad("b"))? as u8;
                for (w, v) in row.l.iter().enumerate() {
                    parts.l[(i * times + t) * width + w] = v.ok_or_else(|| bad("l"))?;
                }
            }
        }
        parts.ids.push(id);
        parts.last.as_mut().expect("set above").push(last);
    }
    if !any_censored {
        parts.last = None;
    }
    LongitudinalDataset::from_parts(parts)
}

/// Writes the long CSV schema. Floats use the shortest round-trip form.
pub fn write_long_csv<W: Write>(ds: &LongitudinalDataset, sink: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_string(), "time".into(), "a".into(), "b".into(), "l".into()];
    for k in 2..=ds.width {
        header.push(format!("l{k}"));
    }
    header.push("y".into());
    if ds.has_censoring {
        header.push("censored".into());
    }
    w.write_record(&header)?;
    let t_max = ds.times;
    for i in 0..ds.n_individuals() {
        let last = ds.last_outcome(i);
        for t in 0..=t_max {
            let mut rec: Vec<String> = vec![ds.ids[i].clone(), t.to_string()];
            if t > last {
                rec.extend(std::iter::repeat_n(String::new(), 3 + ds.width));
                rec.push("1".into());
                w.write_record(&rec)?;
                break;
            }
            if t < last {
                rec.push(ds.a(i, t).to_string());
                rec.push(ds.b(i, t).to_string());
                rec.extend(ds.l_vec(i, t).iter().map(|v| v.to_string()));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), 2 + ds.width));
            }
            rec.push(ds.y(i, t).to_string());
            if ds.has_censoring {
                rec.push("0".into());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(z: &[&[u8]]) -> LongitudinalDataset {
        let times = z[0].len();
        let n = z.len();
        let mut parts = PanelParts {
            ids: (0..n).map(|i| i.to_string()).collect(),
            times,
            covariate_width: 1,
            l: vec![0.0; n * times],
            y: vec![0.0; n * (times + 1)],
            ..Default::default()
        };
        for row in z {
            for &c in *row {
                let code = ComboCode::from_value(c).unwrap();
                parts.a.push(u8::from(code.a()));
                parts.b.push(u8::from(code.b()));
            }
        }
        LongitudinalDataset::from_parts(parts).unwrap()
    }

    #[test]
    fn combo_codes() {
        assert_eq!(encode_combo(0, 0).value(), 0);
        assert_eq!(encode_combo(1, 0).value(), 1);
        assert_eq!(encode_combo(0, 1).value(), 2);
        assert_eq!(encode_combo(1, 1).value(), 3);
        for v in 0..4 {
            let c = ComboCode::from_value(v).unwrap();
            let (a, b) = c.decode();
            assert_eq!(ComboCode::encode(a, b), c);
        }
        assert!(ComboCode::from_value(4).is_none());
    }

    #[test]
    fn thirty_estimands() {
        let all = EstimandId::all(5);
        assert_eq!(all.len(), 30);
        let set: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(set.len(), 30);
        assert_eq!(Comparison::parse("AB−B"), Some(Comparison::ABvsB));
    }

    #[test]
    fn history_layout() {
        let ds = tiny(&[&[0, 0], &[3, 1], &[1, 3]]);
        assert_eq!(ds.history_indicators(0, 1).unwrap(), vec![0.0; 6]);
        assert_eq!(ds.history_indicators(1, 0).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(
            ds.history_indicators(2, 1).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert!(matches!(
            ds.history_indicators(0, 2),
            Err(DataError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn minimal_csv() {
        let text = "id,time,a,b,l,y\n7,0,1,0,0.5,0.1\n7,1,,,,1.2\n";
        let ds = load_long_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n_individuals(), 1);
        assert_eq!(ds.times(), 1);
        assert_eq!(ds.z(0, 0), ComboCode::A_ONLY);
        assert_eq!(ds.y(0, 1), 1.2);
    }

    #[test]
    fn csv_errors() {
        let bad_a = "id,time,a,b,l,y\n1,0,2,0,0,0\n1,1,,,,0\n";
        assert!(matches!(
            load_long_csv(bad_a.as_bytes()),
            Err(DataError::NonBinaryTreatment { .. })
        ));
        let gap = "id,time,a,b,l,y\n1,0,0,0,0,0\n1,2,,,,0\n";
        assert!(matches!(
            load_long_csv(gap.as_bytes()),
            Err(DataError::NonContiguousTime { .. })
        ));
        let dup = "id,time,a,b,l,y\n1,0,0,0,0,0\n1,0,0,0,0,0\n1,1,,,,0\n";
        assert!(matches!(
            load_long_csv(dup.as_bytes()),
            Err(DataError::DuplicateRow { .. })
        ));
        let missing = "id,time,a,l,y\n1,0,0,0,0\n";
        assert!(matches!(
            load_long_csv(missing.as_bytes()),
            Err(DataError::MissingColumn(c)) if c == "b"
        ));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let text = "id,time,a,b,l,y\n1,1,,,,2\n2,0,0,1,0.3,0\n1,0,1,1,0.1,0\n2,1,,,,3\n";
        let ds = load_long_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.n_individuals(), 2);
        assert_eq!(ds.id(0), "1");
        assert_eq!(ds.z(0, 0), ComboCode::BOTH);
        assert_eq!(ds.z(1, 0), ComboCode::B_ONLY);
    }

    #[test]
    fn censoring_round_trip() {
        let text = "id,time,a,b,l,y,censored\n\
                    1,0,1,0,0.5,0.1,0\n1,1,1,0,0.2,1.1,0\n1,2,,,,2.0,0\n\
                    2,0,0,0,-0.5,0.3,0\n2,1,,,,0.4,0\n2,2,,,,,1\n";
        let ds = load_long_csv(text.as_bytes()).unwrap();
        assert!(ds.has_censoring());
        assert_eq!(ds.times(), 2);
        assert_eq!(ds.last_outcome(1), 1);
        assert_eq!(ds.observed_times(1), 1);
        let mut buf = Vec::new();
        write_long_csv(&ds, &mut buf).unwrap();
        let again = load_long_csv(buf.as_slice()).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn adherence_and_retention() {
        let ds = tiny(&[&[1, 1, 3], &[1, 1, 1], &[2, 2, 2], &[2, 0, 2]]);
        assert!(ds.adherent_through(0, 1));
        assert!(!ds.adherent_through(0, 2));
        assert_eq!(ds.sustained_fraction(ComboCode::A_ONLY, 2), Some(0.5));
        assert_eq!(ds.sustained_fraction(ComboCode::B_ONLY, 2), Some(0.5));
        assert_eq!(ds.sustained_fraction(ComboCode::BOTH, 2), None);
    }
}
