use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::control::CascadeConfig;
use crate::datalog::DataLog;
use crate::error::{Error, Result};
use crate::estimation::{
    estimate_armax, estimate_arx, estimate_iv, ArmaxOptions, DataRole, Dataset, PolyModel,
};
use crate::excitation::persistency_order;
use crate::validation::{
    compare_models, rmse_tie_tolerance, score_candidate, stage2_rmse, validation_residuals, CandidateKey,
    CandidateScores, ComparisonRow, Method, ResidualReport, Thresholds,
};

fn parse_range(v: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("bad range '{v}' (expected N or LO..HI)"));
    match v.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
            if lo > hi {
                return Err(bad());
            }
            Ok((lo, hi))
        }
        None => {
            let x = v.trim().parse().map_err(|_| bad())?;
            Ok((x, x))
        }
    }
}

/// Parses a candidate grid. Entries are separated by `;` and are either
/// ranges (`na=2..10,nb=1..10,nk=1..8` gives ARX and IV candidates; adding
/// `nc=..` gives ARMAX ones instead) or explicit models (`arx:10,10,5`,
/// `iv:5,5,4`, `armax:3,3,3,1` with orders na, nb, [nc,] nk). Duplicates
/// collapse; the result is sorted.
pub fn parse_grid(text: &str) -> Result<Vec<CandidateKey>> {
    let mut out = BTreeSet::new();
    for entry in text.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        if let Some((method, orders)) = entry.split_once(':') {
            let nums: Vec<usize> = orders
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad order '{t}' in '{entry}'"))))
                .collect::<Result<_>>()?;
            let key = match (method.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
                ("arx", &[na, nb, nk]) => CandidateKey { method: Method::Arx, na, nb, nc: 0, nk },
                ("iv", &[na, nb, nk]) => CandidateKey { method: Method::Iv, na, nb, nc: 0, nk },
                ("armax", &[na, nb, nc, nk]) if nc > 0 => CandidateKey { method: Method::Armax, na, nb, nc, nk },
                ("bj", _) | ("oe", _) => {
                    return Err(Error::NotImplemented(format!("'{method}' candidates are not supported")))
                }
                _ => return Err(Error::Parse(format!("bad candidate '{entry}'"))),
            };
            if key.nb == 0 {
                return Err(Error::Parse(format!("nb must be at least 1 in '{entry}'")));
            }
            out.insert(key);
            continue;
        }
        let (mut na, mut nb, mut nk, mut nc) = (None, None, None, None);
        for part in entry.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=range, got '{part}'")))?;
            let slot = match k.trim() {
                "na" => &mut na,
                "nb" => &mut nb,
                "nk" => &mut nk,
                "nc" => &mut nc,
                other => return Err(Error::Parse(format!("unknown grid key '{other}'"))),
            };
            *slot = Some(parse_range(v)?);
        }
        let (na, nb, nk) = match (na, nb, nk) {
            (Some(a), Some(b), Some(k)) => (a, b, k),
            _ => return Err(Error::Parse(format!("grid entry '{entry}' needs na, nb and nk"))),
        };
        if nb.0 == 0 {
            return Err(Error::Parse("nb must be at least 1".into()));
        }
        let methods: Vec<(Method, (usize, usize))> = match nc {
            None => vec![(Method::Arx, (0, 0)), (Method::Iv, (0, 0))],
            Some((lo, _)) if lo == 0 => return Err(Error::Parse("nc must be at least 1".into())),
            Some(c) => vec![(Method::Armax, c)],
        };
        for (method, (c_lo, c_hi)) in methods {
            for a in na.0..=na.1 {
                for b in nb.0..=nb.1 {
                    for c in c_lo..=c_hi {
                        for k in nk.0..=nk.1 {
                            out.insert(CandidateKey { method, na: a, nb: b, nc: c, nk: k });
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty candidate grid".into()));
    }
    Ok(out.into_iter().collect())
}

/// The three records feeding one identification run.
#[derive(Debug, Clone)]
pub struct IdentificationData {
    pub training: DataLog,
    pub validation_prbs: DataLog,
    pub validation_square: DataLog,
}

#[derive(Debug, Clone)]
pub struct IdentifySettings {
    pub thresholds: Thresholds,
    pub cascade: CascadeConfig,
    pub trim_s: f64,
    pub armax: ArmaxOptions,
}

#[derive(Debug, Clone)]
pub struct Identification {
    /// Ranked, winner first.
    pub rows: Vec<ComparisonRow>,
    pub winner: CandidateKey,
    pub model: PolyModel,
    pub residuals: ResidualReport,
    /// Persistency order of the training input that capped the grid.
    pub persistency: usize,
    /// Candidates dropped before ranking, with the reason.
    pub skipped: Vec<(CandidateKey, String)>,
    pub plant_rate_rms: f64,
}

/// The whole log as a dataset (controller output to measured rate). The
/// logs are already deviations from the hover trim, so no means are removed:
/// with integrating rate dynamics a mean shift in `u` would become a ramp.
pub fn log_dataset(log: &DataLog, role: DataRole) -> Result<Dataset> {
    Dataset::new(log.signal("u")?, log.signal("y_rate")?, log.header.channel, role)
}

/// Samples covered by the start-up trim.
pub fn trim_samples(log: &DataLog, trim_s: f64) -> Result<usize> {
    let skip = (trim_s * log.header.sample_rate_hz).round() as usize;
    if log.len() <= skip {
        return Err(Error::Data(format!("log of {} samples is shorter than the {trim_s} s trim", log.len())));
    }
    Ok(skip)
}

pub fn estimate(key: &CandidateKey, d: &Dataset, armax: ArmaxOptions) -> Result<PolyModel> {
    match key.method {
        Method::Arx => estimate_arx(d, key.na, key.nb, key.nk),
        Method::Iv => estimate_iv(d, key.na, key.nb, key.nk),
        Method::Armax => match estimate_armax(d, key.na, key.nb, key.nc, key.nk, armax) {
            // the best iterate still competes on the same gates
            Err(Error::Estimation { best, .. }) => Ok(*best),
            other => other,
        },
    }
}

enum Outcome {
    Scored(CandidateScores, Option<f64>),
    Skipped(String),
}

/// The ranked table of a grid run, before a winner is picked.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Ranked: stage-1 passers by stage-2 RMSE first.
    pub rows: Vec<ComparisonRow>,
    /// Persistency order of the training input that capped the grid.
    pub persistency: usize,
    /// Candidates dropped before ranking, with the reason.
    pub skipped: Vec<(CandidateKey, String)>,
    pub plant_rate_rms: f64,
}

struct Prepared {
    training: Dataset,
    val_prbs: Dataset,
    val_square: Dataset,
    skip: usize,
}

fn prepare(data: &IdentificationData, trim_s: f64) -> Result<Prepared> {
    let skip = trim_samples(&data.training, trim_s)?;
    let training = log_dataset(&data.training, DataRole::Training)?.skip(skip);
    let skip = trim_samples(&data.validation_prbs, trim_s)?;
    trim_samples(&data.validation_square, trim_s)?;
    let val_prbs = log_dataset(&data.validation_prbs, DataRole::ValidationPrbs)?;
    let val_square = log_dataset(&data.validation_square, DataRole::ValidationSquare)?;
    Ok(Prepared { training, val_prbs, val_square, skip })
}

/// Estimates every candidate, gates them through both stages and ranks them.
pub fn evaluate_grid(data: &IdentificationData, grid: &[CandidateKey], s: &IdentifySettings) -> Result<Evaluation> {
    let Prepared { training, val_prbs, val_square, skip } = prepare(data, s.trim_s)?;
    let plant_rate_rms = {
        let y = &data.validation_prbs.y_rate[skip..];
        (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt()
    };

    let max_params = grid.iter().map(CandidateKey::n_params).max().unwrap_or(0);
    let probe = max_params.min((training.len().saturating_sub(1)) / 5);
    let persistency = persistency_order(&training.u, probe)?;

    let outcomes: Vec<(CandidateKey, Outcome)> = grid
        .par_iter()
        .map(|key| {
            if key.n_params() > persistency {
                return (*key, Outcome::Skipped(format!("{} parameters exceed persistency order {persistency}", key.n_params())));
            }
            let scored = estimate(key, &training, s.armax).and_then(|m| {
                let (sc, _) = score_candidate(*key, &m, &training, &val_prbs, &val_square, skip, &s.thresholds)?;
                let r = if sc.stage1_pass(&s.thresholds) {
                    Some(stage2_rmse(&m, &data.validation_prbs, &s.cascade, skip).unwrap_or(f64::INFINITY))
                } else {
                    None
                };
                Ok((sc, r))
            });
            match scored {
                Ok((sc, r)) => (*key, Outcome::Scored(sc, r)),
                Err(e) => (*key, Outcome::Skipped(e.to_string())),
            }
        })
        .collect();

    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (key, o) in outcomes {
        match o {
            Outcome::Scored(sc, r) => scored.push((sc, r)),
            Outcome::Skipped(why) => skipped.push((key, why)),
        }
    }
    if scored.is_empty() {
        return Err(Error::Pipeline(format!(
            "no candidate could be estimated ({} skipped{})",
            skipped.len(),
            skipped.first().map(|(k, w)| format!("; first: {k}: {w}")).unwrap_or_default()
        )));
    }
    let rows = compare_models(&scored, plant_rate_rms, &s.thresholds)?;
    Ok(Evaluation { rows, persistency, skipped, plant_rate_rms })
}

/// Picks the winner of an evaluated grid and re-estimates it. Fails with the
/// nearest misses when no candidate passed stage 1.
pub fn select_winner(data: &IdentificationData, ev: Evaluation, s: &IdentifySettings) -> Result<Identification> {
    let rows = &ev.rows;
    let winner_row = rows.first().filter(|r| r.stage1_pass && r.rmse.is_finite());
    let Some(winner_row) = winner_row else {
        let mut near: Vec<&ComparisonRow> = rows.iter().collect();
        let worst = |r: &ComparisonRow| {
            (r.training_fit - s.thresholds.training_fit)
                .min(r.validation_prbs_fit - s.thresholds.validation_fit)
                .min(r.validation_square_fit - s.thresholds.validation_fit)
        };
        near.sort_by(|a, b| worst(b).total_cmp(&worst(a)).then(a.key.cmp(&b.key)));
        let list: Vec<String> = near
            .iter()
            .take(5)
            .map(|r| {
                format!(
                    "{} (fits {:.2}/{:.2}/{:.2}, white {}, causal {})",
                    r.key, r.training_fit, r.validation_prbs_fit, r.validation_square_fit, r.whiteness_pass, r.causality_pass
                )
            })
            .collect();
        return Err(Error::Pipeline(format!("no candidate passed stage 1; nearest: {}", list.join("; "))));
    };
    let winner = winner_row.key;
    let tol = rmse_tie_tolerance(ev.plant_rate_rms);
    assert!(
        rows.iter().filter(|r| r.stage1_pass).all(|r| !(r.rmse < winner_row.rmse - tol)),
        "winner must have the minimal stage-2 RMSE"
    );
    let Prepared { training, val_prbs, skip, .. } = prepare(data, s.trim_s)?;
    let model = estimate(&winner, &training, s.armax)?;
    let residuals = validation_residuals(&model, &val_prbs, skip, s.thresholds.max_lag)?;
    Ok(Identification {
        rows: ev.rows,
        winner,
        model,
        residuals,
        persistency: ev.persistency,
        skipped: ev.skipped,
        plant_rate_rms: ev.plant_rate_rms,
    })
}

pub fn identify(data: &IdentificationData, grid: &[CandidateKey], s: &IdentifySettings) -> Result<Identification> {
    select_winner(data, evaluate_grid(data, grid, s)?, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_grid() {
        let g = parse_grid("na=2..3,nb=1,nk=1..2").unwrap();
        assert_eq!(g.len(), 2 * 2 * 2);
        assert!(g.iter().all(|k| k.nc == 0));
    }

    #[test]
    fn explicit_grid_and_dedup() {
        let g = parse_grid("arx:10,10,5; iv:5,5,4; armax:3,3,3,1; arx:10,10,5").unwrap();
        let labels: Vec<String> = g.iter().map(|k| k.to_string()).collect();
        assert_eq!(labels, vec!["ARX 10105", "IV 554", "ARMAX 3331"]);
    }

    #[test]
    fn armax_range() {
        let g = parse_grid("na=2,nb=2,nc=1..2,nk=1").unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|k| k.method == Method::Armax));
    }

    #[test]
    fn bad_grids() {
        assert!(parse_grid("").is_err());
        assert!(parse_grid("na=3..2,nb=1,nk=1").is_err());
        assert!(parse_grid("na=2,nb=0,nk=1").is_err());
        assert!(parse_grid("na=2,nk=1").is_err());
        assert!(parse_grid("armax:1,1,0,1").is_err());
        assert!(matches!(parse_grid("bj:2,3,2,2,1"), Err(Error::NotImplemented(_))));
    }
}
