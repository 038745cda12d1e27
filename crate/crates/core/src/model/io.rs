//! Versioned plain-text serialization of fitted models. One parameter block
//! per line, full decimal precision (the shortest representation that
//! round-trips f64 exactly).

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Link, ModelSpec, ModelState, Structure};
use crate::data::TeamIndex;
use crate::error::{Error, Result};

const MAGIC: &str = "structured-logodds-model";
const VERSION: u32 = 1;

pub fn save_model<P: AsRef<Path>>(
    path: P,
    spec: &ModelSpec,
    state: &ModelState,
    teams: &TeamIndex,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_model(&mut file, spec, state, teams)
}

pub fn write_model<W: Write>(
    w: &mut W,
    spec: &ModelSpec,
    state: &ModelState,
    teams: &TeamIndex,
) -> Result<()> {
    writeln!(w, "{MAGIC} v{VERSION}")?;
    writeln!(w, "structure {}", spec.structure.name())?;
    writeln!(w, "link {}", spec.link.name())?;
    writeln!(w, "covariates {}", spec.covariates as u8)?;
    writeln!(w, "n_teams {}", spec.n_teams)?;
    for (i, name) in teams.names().iter().enumerate() {
        writeln!(w, "team {i} {name}")?;
    }
    let vec_line = |values: &[f64]| {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "theta {}", vec_line(&state.theta))?;
    writeln!(w, "u {}", vec_line(&state.u))?;
    writeln!(w, "v {}", vec_line(&state.v))?;
    writeln!(w, "h {}", state.h)?;
    writeln!(w, "psi {}", state.psi)?;
    writeln!(w, "beta_home {}", state.beta_home)?;
    writeln!(w, "beta_away {}", state.beta_away)?;
    writeln!(w, "skellam_u {}", vec_line(&state.skellam_u))?;
    writeln!(w, "skellam_v {}", vec_line(&state.skellam_v))?;
    Ok(())
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<(ModelSpec, ModelState, TeamIndex)> {
    let file = std::fs::File::open(path)?;
    read_model(file)
}

pub fn read_model<R: Read>(r: R) -> Result<(ModelSpec, ModelState, TeamIndex)> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines();

    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::ModelFormat("empty file".into()))?;
    let expected = format!("{MAGIC} v{VERSION}");
    if header.trim() != expected {
        return Err(Error::ModelFormat(format!(
            "bad header {header:?}, expected {expected:?}"
        )));
    }

    let mut structure = None;
    let mut link = None;
    let mut covariates = None;
    let mut n_teams = None;
    let mut team_names: Vec<(usize, String)> = Vec::new();
    let mut state = ModelState::zeros(2);
    let mut seen_state = false;

    let parse_vec = |rest: &str, key: &str| -> Result<Vec<f64>> {
        rest.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::ModelFormat(format!("bad float {t:?} in {key}")))
            })
            .collect()
    };
    let parse_scalar = |rest: &str, key: &str| -> Result<f64> {
        rest.trim()
            .parse::<f64>()
            .map_err(|_| Error::ModelFormat(format!("bad float {rest:?} in {key}")))
    };

    for line in lines {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "structure" => {
                structure = Some(Structure::from_name(rest.trim()).ok_or_else(|| {
                    Error::ModelFormat(format!("unknown structure {rest:?}"))
                })?)
            }
            "link" => {
                link = Some(
                    Link::from_name(rest.trim())
                        .ok_or_else(|| Error::ModelFormat(format!("unknown link {rest:?}")))?,
                )
            }
            "covariates" => covariates = Some(rest.trim() == "1"),
            "n_teams" => {
                let q: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("bad n_teams {rest:?}")))?;
                n_teams = Some(q);
                state = ModelState::zeros(q);
                seen_state = true;
            }
            "team" => {
                let (id, name) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::ModelFormat(format!("bad team line {rest:?}")))?;
                let id: usize = id
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("bad team id {id:?}")))?;
                team_names.push((id, name.to_string()));
            }
            "theta" => state.theta = parse_vec(rest, key)?,
            "u" => state.u = parse_vec(rest, key)?,
            "v" => state.v = parse_vec(rest, key)?,
            "h" => state.h = parse_scalar(rest, key)?,
            "psi" => state.psi = parse_scalar(rest, key)?,
            "beta_home" => state.beta_home = parse_scalar(rest, key)?,
            "beta_away" => state.beta_away = parse_scalar(rest, key)?,
            "skellam_u" => state.skellam_u = parse_vec(rest, key)?,
            "skellam_v" => state.skellam_v = parse_vec(rest, key)?,
            other => {
                return Err(Error::ModelFormat(format!("unknown key {other:?}")));
            }
        }
    }

    let n_teams = n_teams.ok_or_else(|| Error::ModelFormat("missing n_teams".into()))?;
    let spec = ModelSpec::new(
        structure.ok_or_else(|| Error::ModelFormat("missing structure".into()))?,
        link.ok_or_else(|| Error::ModelFormat("missing link".into()))?,
        covariates.ok_or_else(|| Error::ModelFormat("missing covariates".into()))?,
        n_teams,
    )?;
    if !seen_state {
        return Err(Error::ModelFormat("missing parameter blocks".into()));
    }
    state.check_dims(&spec)?;

    team_names.sort_by_key(|(id, _)| *id);
    if team_names
        .iter()
        .enumerate()
        .any(|(want, (id, _))| *id != want)
        || team_names.len() != n_teams
    {
        return Err(Error::ModelFormat(
            "team ids must be contiguous from 0 and match n_teams".into(),
        ));
    }
    let teams = TeamIndex::from_names(team_names.iter().map(|(_, n)| n.as_str()));

    Ok((spec, state, teams))
}
