//! Core domain types: team indexing, match records, datasets, CSV ingestion
//! and chronological splitting.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 0-based team identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TeamId(pub usize);

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijection between team names and contiguous ids 0..Q-1, assigned in order
/// of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TeamIndex {
    names: Vec<String>,
    #[serde(skip)]
    by_name: HashMap<String, TeamId>,
}

impl TeamIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, inserting it if unseen.
    pub fn intern(&mut self, name: &str) -> TeamId {
        if let Some(&id) = self.by_name.get(name) {
            return id;
        }
        let id = TeamId(self.names.len());
        self.names.push(name.to_string());
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<TeamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: TeamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn from_names<I: IntoIterator<Item = S>, S: AsRef<str>>(names: I) -> Self {
        let mut idx = Self::new();
        for n in names {
            idx.intern(n.as_ref());
        }
        idx
    }

    /// Rebuilds the name lookup; needed after deserialization.
    fn reindex(&mut self) {
        self.by_name = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), TeamId(i)))
            .collect();
    }
}

/// Ternary match outcome from the home side's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    HomeWin,
    Draw,
    AwayWin,
}

impl Outcome {
    pub fn from_goals(home: u32, away: u32) -> Self {
        match home.cmp(&away) {
            std::cmp::Ordering::Greater => Outcome::HomeWin,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::AwayWin,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Outcome::HomeWin => "H",
            Outcome::Draw => "D",
            Outcome::AwayWin => "A",
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "H" => Some(Outcome::HomeWin),
            "D" => Some(Outcome::Draw),
            "A" => Some(Outcome::AwayWin),
            _ => None,
        }
    }
}

/// Decimal bookmaker odds for the three outcomes; each must exceed 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecimalOdds {
    pub home: f64,
    pub draw: f64,
    pub away: f64,
}

/// One observed pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub home_goals: u32,
    pub away_goals: u32,
    pub outcome: Outcome,
    pub odds: Option<DecimalOdds>,
}

impl MatchRecord {
    /// Score difference from the home side; positive favours the home team.
    pub fn score_diff(&self) -> i64 {
        self.home_goals as i64 - self.away_goals as i64
    }
}

/// Probability mass over {win, draw, lose} from the home side.
/// Binary predictions are represented with `p_draw == 0` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub p_win: f64,
    pub p_draw: f64,
    pub p_lose: f64,
}

impl OutcomeDistribution {
    pub fn new(p_win: f64, p_draw: f64, p_lose: f64) -> Result<Self> {
        let d = Self {
            p_win,
            p_draw,
            p_lose,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn binary(p_win: f64) -> Self {
        Self {
            p_win,
            p_draw: 0.0,
            p_lose: 1.0 - p_win,
        }
    }

    pub fn uniform() -> Self {
        Self {
            p_win: 1.0 / 3.0,
            p_draw: 1.0 / 3.0,
            p_lose: 1.0 / 3.0,
        }
    }

    /// Normalizes so the components sum to 1.0 exactly (left-to-right).
    pub fn normalized(p_win: f64, p_draw: f64, p_lose: f64) -> Self {
        let total = p_win + p_draw + p_lose;
        let w = p_win / total;
        let d = p_draw / total;
        Self {
            p_win: w,
            p_draw: d,
            p_lose: 1.0 - (w + d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range =
            |p: f64| -> bool { p.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&p) };
        if !(in_range(self.p_win) && in_range(self.p_draw) && in_range(self.p_lose)) {
            return Err(Error::Domain(format!(
                "probabilities out of range: ({}, {}, {})",
                self.p_win, self.p_draw, self.p_lose
            )));
        }
        let sum = self.p_win + self.p_draw + self.p_lose;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn mass(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::HomeWin => self.p_win,
            Outcome::Draw => self.p_draw,
            Outcome::AwayWin => self.p_lose,
        }
    }

    /// Highest-probability outcome; ties broken win > draw > lose.
    pub fn argmax(&self) -> Outcome {
        if self.p_win >= self.p_draw && self.p_win >= self.p_lose {
            Outcome::HomeWin
        } else if self.p_draw >= self.p_lose {
            Outcome::Draw
        } else {
            Outcome::AwayWin
        }
    }
}

/// A chronologically sorted collection of match records with its team index.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<MatchRecord>,
    teams: TeamIndex,
}

impl Dataset {
    /// Builds a dataset from records, sorting by date (stable on ties).
    pub fn new(mut records: Vec<MatchRecord>, mut teams: TeamIndex) -> Self {
        records.sort_by_key(|r| r.date);
        teams.reindex();
        Self { records, teams }
    }

    pub fn records(&self) -> &[MatchRecord] {
        &self.records
    }

    pub fn teams(&self) -> &TeamIndex {
        &self.teams
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.records.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.records.last().map(|r| r.date)
    }

    /// A dataset holding the given contiguous slice of records and sharing
    /// this dataset's team index.
    fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            records: self.records[range].to_vec(),
            teams: self.teams.clone(),
        }
    }

    /// Concatenation preserving chronological order; the team indices must
    /// agree (splits of a common parent always do).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if !other.is_empty() && !self.is_empty() {
            if self.teams != other.teams {
                return Err(Error::Invalid(
                    "concat requires datasets sharing one team index".into(),
                ));
            }
            if self.last_date() > other.first_date() {
                return Err(Error::Invalid(
                    "concat would violate chronological order".into(),
                ));
            }
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        let teams = if self.is_empty() {
            other.teams.clone()
        } else {
            self.teams.clone()
        };
        Ok(Dataset { records, teams })
    }
}

/// Chronological three-way split: train = dates before `tune_start`,
/// tune = [tune_start, test_start), test = [test_start, ..).
pub fn split_by_dates(
    d: &Dataset,
    tune_start: NaiveDate,
    test_start: NaiveDate,
) -> Result<(Dataset, Dataset, Dataset)> {
    if tune_start >= test_start {
        return Err(Error::Invalid(format!(
            "tune_start {tune_start} must precede test_start {test_start}"
        )));
    }
    let a = d.records.partition_point(|r| r.date < tune_start);
    let b = d.records.partition_point(|r| r.date < test_start);
    Ok((d.slice(0..a), d.slice(a..b), d.slice(b..d.len())))
}

/// Batch formation policy for the schedule of on-line training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchPolicy {
    /// One record per batch.
    PerMatch,
    /// Group by (year, quarter).
    CalendarQuarter,
    /// Contiguous runs of `n` records; the remainder forms a final,
    /// shorter batch.
    FixedCount(usize),
}

/// Splits a dataset into contiguous, ordered batches whose concatenation is
/// the input.
pub fn partition_batches(d: &Dataset, policy: BatchPolicy) -> Result<Vec<Dataset>> {
    if d.is_empty() {
        return Err(Error::Invalid("cannot partition an empty dataset".into()));
    }
    let bounds = partition_bounds(d, policy);
    Ok(bounds.into_iter().map(|r| d.slice(r)).collect())
}

/// Batch boundaries as index ranges into `d.records()`.
pub fn partition_bounds(d: &Dataset, policy: BatchPolicy) -> Vec<std::ops::Range<usize>> {
    let n = d.len();
    match policy {
        BatchPolicy::PerMatch => (0..n).map(|i| i..i + 1).collect(),
        BatchPolicy::FixedCount(k) => {
            let k = k.max(1);
            let mut out = Vec::new();
            let mut start = 0;
            while start < n {
                let end = (start + k).min(n);
                out.push(start..end);
                start = end;
            }
            out
        }
        BatchPolicy::CalendarQuarter => {
            let quarter = |date: NaiveDate| (date.year(), (date.month0() / 3) as i32);
            let mut out = Vec::new();
            let mut start = 0;
            for i in 1..=n {
                if i == n || quarter(d.records[i].date) != quarter(d.records[start].date) {
                    out.push(start..i);
                    start = i;
                }
            }
            out
        }
    }
}

/// Column-name mapping for CSV ingestion. Defaults to the football-data
/// layout (Date, HomeTeam, AwayTeam, FTHG, FTAG, FTR, B365H/B365D/B365A).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date: String,
    pub home: String,
    pub away: String,
    pub home_goals: String,
    pub away_goals: String,
    pub result: String,
    pub odds_home: String,
    pub odds_draw: String,
    pub odds_away: String,
    /// Reject files containing columns outside this mapping.
    pub strict: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "Date".into(),
            home: "HomeTeam".into(),
            away: "AwayTeam".into(),
            home_goals: "FTHG".into(),
            away_goals: "FTAG".into(),
            result: "FTR".into(),
            odds_home: "B365H".into(),
            odds_draw: "B365D".into(),
            odds_away: "B365A".into(),
            strict: false,
        }
    }
}

impl CsvSchema {
    fn known(&self, col: &str) -> bool {
        [
            &self.date,
            &self.home,
            &self.away,
            &self.home_goals,
            &self.away_goals,
            &self.result,
            &self.odds_home,
            &self.odds_draw,
            &self.odds_away,
        ]
        .iter()
        .any(|c| c.as_str() == col)
    }
}

/// Parses a match-record CSV file. Rows are sorted by date afterwards; team
/// ids are assigned in order of first appearance in the file.
pub fn parse_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_csv_reader(file, schema)
}

pub fn parse_csv_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| Error::Csv {
            row: 1,
            msg: format!("missing required column {name:?}"),
        })
    };

    let c_date = require(&schema.date)?;
    let c_home = require(&schema.home)?;
    let c_away = require(&schema.away)?;
    let c_hg = require(&schema.home_goals)?;
    let c_ag = require(&schema.away_goals)?;
    let c_ftr = require(&schema.result)?;
    let c_oh = col(&schema.odds_home);
    let c_od = col(&schema.odds_draw);
    let c_oa = col(&schema.odds_away);

    if schema.strict {
        for h in headers.iter() {
            if !h.is_empty() && !schema.known(h) {
                return Err(Error::Csv {
                    row: 1,
                    msg: format!("unknown column {h:?} under strict mode"),
                });
            }
        }
    }

    let mut teams = TeamIndex::new();
    let mut records = Vec::new();
    // The date format (two- or four-digit year) is detected from the first
    // data row and then applied to the whole file.
    let mut year_digits: Option<usize> = None;

    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::Csv {
            row: row_no,
            msg: e.to_string(),
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("").trim();
        // Skip blank padding rows (common in hand-maintained files).
        if field(c_date).is_empty() && field(c_home).is_empty() {
            continue;
        }

        let date_txt = field(c_date);
        let digits = date_txt.rsplit('/').next().unwrap_or("").len();
        let expected = *year_digits.get_or_insert(digits);
        if digits != expected {
            return Err(Error::Csv {
                row: row_no,
                msg: format!(
                    "date {date_txt:?} uses a {digits}-digit year but the file started with {expected}"
                ),
            });
        }
        let date = parse_date(date_txt).map_err(|msg| Error::Csv { row: row_no, msg })?;

        let goals = |idx: usize, label: &str| -> Result<u32> {
            field(idx).parse::<u32>().map_err(|_| Error::Csv {
                row: row_no,
                msg: format!("non-integer {label} goals {:?}", field(idx)),
            })
        };
        let home_goals = goals(c_hg, "home")?;
        let away_goals = goals(c_ag, "away")?;

        let home = teams.intern(field(c_home));
        let away = teams.intern(field(c_away));
        if home == away {
            return Err(Error::Csv {
                row: row_no,
                msg: format!("home and away team are both {:?}", field(c_home)),
            });
        }

        let outcome = Outcome::from_goals(home_goals, away_goals);
        let stated = Outcome::from_code(field(c_ftr)).ok_or_else(|| Error::Csv {
            row: row_no,
            msg: format!("unrecognized result code {:?}", field(c_ftr)),
        })?;
        if stated != outcome {
            return Err(Error::Csv {
                row: row_no,
                msg: format!(
                    "outcome inconsistent at row {row_no}: result {:?} but score {home_goals}-{away_goals}",
                    field(c_ftr)
                ),
            });
        }

        let odds = match (c_oh, c_od, c_oa) {
            (Some(oh), Some(od), Some(oa)) => {
                let triple = (field(oh), field(od), field(oa));
                if triple.0.is_empty() || triple.1.is_empty() || triple.2.is_empty() {
                    None
                } else {
                    let parse_odd = |t: &str, label: &str| -> Result<f64> {
                        let v: f64 = t.parse().map_err(|_| Error::Csv {
                            row: row_no,
                            msg: format!("malformed {label} odds {t:?}"),
                        })?;
                        if v <= 1.0 {
                            return Err(Error::Csv {
                                row: row_no,
                                msg: format!("{label} odds {v} not greater than 1"),
                            });
                        }
                        Ok(v)
                    };
                    Some(DecimalOdds {
                        home: parse_odd(triple.0, "home")?,
                        draw: parse_odd(triple.1, "draw")?,
                        away: parse_odd(triple.2, "away")?,
                    })
                }
            }
            _ => None,
        };

        records.push(MatchRecord {
            date,
            home,
            away,
            home_goals,
            away_goals,
            outcome,
            odds,
        });
    }

    Ok(Dataset::new(records, teams))
}

/// Parses DD/MM/YY or DD/MM/YYYY. Two-digit years pivot at 70: 70-99 map to
/// 19xx, 00-69 to 20xx.
fn parse_date(text: &str) -> std::result::Result<NaiveDate, String> {
    let parts: Vec<&str> = text.split('/').collect();
    if parts.len() != 3 {
        return Err(format!("malformed date {text:?}"));
    }
    let num = |s: &str| -> std::result::Result<u32, String> {
        s.parse::<u32>().map_err(|_| format!("malformed date {text:?}"))
    };
    let day = num(parts[0])?;
    let month = num(parts[1])?;
    let year_raw = num(parts[2])?;
    let year = match parts[2].len() {
        2 => {
            if year_raw >= 70 {
                1900 + year_raw
            } else {
                2000 + year_raw
            }
        }
        4 => year_raw,
        _ => return Err(format!("malformed date {text:?}: year must have 2 or 4 digits")),
    };
    NaiveDate::from_ymd_opt(year as i32, month, day)
        .ok_or_else(|| format!("invalid calendar date {text:?}"))
}

/// Serializes a dataset back to CSV in the given schema; re-parsing yields an
/// identical dataset. Odds columns are written only if any record has odds.
pub fn write_csv<W: std::io::Write>(d: &Dataset, schema: &CsvSchema, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let with_odds = d.records.iter().any(|r| r.odds.is_some());
    let mut header = vec![
        schema.date.clone(),
        schema.home.clone(),
        schema.away.clone(),
        schema.home_goals.clone(),
        schema.away_goals.clone(),
        schema.result.clone(),
    ];
    if with_odds {
        header.extend([
            schema.odds_home.clone(),
            schema.odds_draw.clone(),
            schema.odds_away.clone(),
        ]);
    }
    wtr.write_record(&header).map_err(csv_io)?;
    for r in &d.records {
        let mut row = vec![
            r.date.format("%d/%m/%Y").to_string(),
            d.teams.name(r.home).to_string(),
            d.teams.name(r.away).to_string(),
            r.home_goals.to_string(),
            r.away_goals.to_string(),
            r.outcome.code().to_string(),
        ];
        if with_odds {
            match r.odds {
                Some(o) => row.extend([
                    o.home.to_string(),
                    o.draw.to_string(),
                    o.away.to_string(),
                ]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        wtr.write_record(&row).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Invalid(format!("csv write: {e}"))
}

/// Football seasons run July-June; a match in month >= 7 belongs to the
/// season starting that year.
pub fn season_of(date: NaiveDate) -> i32 {
    if date.month() >= 7 {
        date.year()
    } else {
        date.year() - 1
    }
}

/// Per-record (home_promoted, away_promoted) indicator features: a team is
/// "promoted" in a season if it appears in that season but not the previous
/// one. Teams in the earliest observed season are never flagged.
pub fn promotion_features(d: &Dataset) -> Vec<(bool, bool)> {
    use std::collections::HashSet;
    let mut season_teams: HashMap<i32, HashSet<TeamId>> = HashMap::new();
    for r in d.records() {
        let s = season_of(r.date);
        let entry = season_teams.entry(s).or_default();
        entry.insert(r.home);
        entry.insert(r.away);
    }
    let first_season = season_teams.keys().copied().min();
    let promoted = |team: TeamId, season: i32| -> bool {
        match first_season {
            Some(first) if season > first => season_teams
                .get(&(season - 1))
                .map_or(true, |prev| !prev.contains(&team)),
            _ => false,
        }
    };
    d.records()
        .iter()
        .map(|r| {
            let s = season_of(r.date);
            (promoted(r.home, s), promoted(r.away, s))
        })
        .collect()
}
