//! Plain-text input and output.
//!
//! Everything is headered CSV with unquoted fields (identifiers are plain
//! tokens, numbers use Rust's shortest round-trip formatting), plus a
//! `key = value` manifest format. Readers validate structure eagerly and
//! report the offending line; writers emit nothing non-deterministic, so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::encode::{RawTrajectory, TrajSample};
use crate::error::{Error, Result};
use crate::filter::StepSummary;
use crate::inference::summary::StateProfile;
use crate::inference::Draw;
use crate::observe::ObservationSeq;
use crate::params::TrafficParams;
use crate::sim::GroundTruth;

fn bad_line(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::InvalidInput { path: Some(path.to_path_buf()), line: Some(line), msg: msg.into() }
}

/// Write a whole text file, wrapping failures with the path.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// `vehicle_id,time_s,dist_m`, one row per sample, samples of one vehicle
/// contiguous and time-ordered.
pub fn write_trajectories(path: &Path, trajectories: &[RawTrajectory]) -> Result<()> {
    let mut out = String::from("vehicle_id,time_s,dist_m\n");
    for traj in trajectories {
        for s in &traj.samples {
            let _ = writeln!(out, "{},{},{}", traj.vehicle_id, s.time_s, s.dist_m);
        }
    }
    write_text(path, &out)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<RawTrajectory>> {
    let lines = read_lines(path)?;
    if lines.first().map(|l| l.trim()) != Some("vehicle_id,time_s,dist_m") {
        return Err(bad_line(path, 1, "expected header 'vehicle_id,time_s,dist_m'"));
    }
    let mut out: Vec<(String, Vec<TrajSample>)> = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(id), Some(t), Some(d), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad_line(path, lineno, "expected 3 fields"));
        };
        let time_s: f64 = t.trim().parse().map_err(|_| bad_line(path, lineno, "bad time_s"))?;
        let dist_m: f64 = d.trim().parse().map_err(|_| bad_line(path, lineno, "bad dist_m"))?;
        match out.last_mut() {
            Some((last_id, samples)) if last_id == id => {
                samples.push(TrajSample { time_s, dist_m })
            }
            _ => {
                if out.iter().any(|(seen, _)| seen == id) {
                    return Err(bad_line(
                        path,
                        lineno,
                        format!("vehicle '{id}' appears in two separate blocks"),
                    ));
                }
                out.push((id.to_string(), vec![TrajSample { time_s, dist_m }]));
            }
        }
    }
    out.into_iter().map(|(vehicle_id, samples)| RawTrajectory::new(vehicle_id, samples)).collect()
}

/// `t,arrival,slot` over every step: `arrival` is 0/1, `slot` is empty on
/// silent steps.
pub fn write_observations(path: &Path, obs: &ObservationSeq) -> Result<()> {
    let mut out = String::from("t,arrival,slot\n");
    for t in 1..=obs.horizon() {
        match obs.slot(t) {
            Some(v) => {
                let _ = writeln!(out, "{t},1,{v}");
            }
            None => {
                let _ = writeln!(out, "{t},0,");
            }
        }
    }
    write_text(path, &out)
}

pub fn read_observations(path: &Path) -> Result<ObservationSeq> {
    let lines = read_lines(path)?;
    if lines.first().map(|l| l.trim()) != Some("t,arrival,slot") {
        return Err(bad_line(path, 1, "expected header 't,arrival,slot'"));
    }
    let mut a_tilde = Vec::new();
    let mut x_tilde = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(t), Some(a), Some(v), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(bad_line(path, lineno, "expected 3 fields"));
        };
        let t: usize = t.trim().parse().map_err(|_| bad_line(path, lineno, "bad t"))?;
        if t != a_tilde.len() + 1 {
            return Err(bad_line(
                path,
                lineno,
                format!("steps must be contiguous from 1; expected {}, got {t}", a_tilde.len() + 1),
            ));
        }
        let arrival = match a.trim() {
            "0" => false,
            "1" => true,
            other => return Err(bad_line(path, lineno, format!("bad arrival '{other}'"))),
        };
        let slot = match v.trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad_line(path, lineno, "bad slot"))?),
        };
        if arrival != slot.is_some() {
            return Err(bad_line(path, lineno, "slot must be present exactly when arrival=1"));
        }
        a_tilde.push(arrival);
        x_tilde.push(slot);
    }
    ObservationSeq::new(a_tilde, x_tilde)
}

/// `t,green,arrival,queue`; the pre-window queue is written as step 0.
pub fn write_truth(
    path: &Path,
    truth: &GroundTruth,
    grid: &crate::grid::DiscreteGrid,
) -> Result<()> {
    let mut out = String::from("t,green,arrival,queue\n");
    let _ = writeln!(out, "0,0,0,{}", truth.initial_queue);
    for t in 1..=grid.horizon() {
        let _ = writeln!(
            out,
            "{t},{},{},{}",
            grid.is_green(t) as u8,
            truth.arrivals[t - 1] as u8,
            truth.queues[t - 1]
        );
    }
    write_text(path, &out)
}

/// Per-step filter summaries at a fixed parameter value:
/// `t,mean,p05,p50,p95,arrival_post,loglik_cum`.
pub fn write_filter_profile(path: &Path, steps: &[StepSummary]) -> Result<()> {
    let mut out = String::from("t,mean,p05,p50,p95,arrival_post,loglik_cum\n");
    for (i, s) in steps.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            s.mean,
            s.p05,
            s.p50,
            s.p95,
            s.arrival_post,
            s.cum_log_lik
        );
    }
    write_text(path, &out)
}

/// Posterior-mixture state profile: `t,mean,p05,p50,p95,arrival_post`.
pub fn write_state_profile(path: &Path, profile: &StateProfile) -> Result<()> {
    let mut out = String::from("t,mean,p05,p50,p95,arrival_post\n");
    for t in 0..profile.mean.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t + 1,
            profile.mean[t],
            profile.p05[t],
            profile.p50[t],
            profile.p95[t],
            profile.arrival_post[t]
        );
    }
    write_text(path, &out)
}

/// Weighted parameter draws: `draw,weight,log_post,<rate columns>,phi`.
pub fn write_draws(path: &Path, draws: &[Draw]) -> Result<()> {
    let Some(first) = draws.first() else {
        return Err(Error::InvalidParam("no draws to write".into()));
    };
    let mut out = String::from("draw,weight,log_post");
    for name in first.params.names() {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, d) in draws.iter().enumerate() {
        let _ = write!(out, "{},{},{}", i, d.weight, d.log_post);
        for v in d.params.flatten() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Read draws written by [`write_draws`]; `template` supplies the profile
/// structure the rate columns refer to.
pub fn read_draws(path: &Path, template: &TrafficParams) -> Result<Vec<Draw>> {
    let lines = read_lines(path)?;
    let rate_count = template.profile.rate_count();
    let mut expected = String::from("draw,weight,log_post");
    for name in template.names() {
        let _ = write!(expected, ",{name}");
    }
    if lines.first().map(|l| l.trim()) != Some(expected.as_str()) {
        return Err(bad_line(path, 1, format!("expected header '{expected}'")));
    }
    let space = crate::inference::ParamSpace::for_params(template);
    let mut draws = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + rate_count + 1 {
            return Err(bad_line(path, lineno, "wrong field count"));
        }
        let weight: f64 =
            fields[1].trim().parse().map_err(|_| bad_line(path, lineno, "bad weight"))?;
        let log_post: f64 =
            fields[2].trim().parse().map_err(|_| bad_line(path, lineno, "bad log_post"))?;
        let mut flat = Vec::with_capacity(rate_count + 1);
        for f in &fields[3..] {
            flat.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| bad_line(path, lineno, "bad parameter value"))?,
            );
        }
        let params = template
            .unflatten(&flat)
            .map_err(|e| bad_line(path, lineno, format!("invalid parameters: {e}")))?;
        let z = space.to_unconstrained(&params);
        draws.push(Draw { params, z, log_post, weight });
    }
    if draws.is_empty() {
        return Err(bad_line(path, lines.len(), "no draws in file"));
    }
    Ok(draws)
}

/// `key = value` manifest, keys written in the given order.
pub fn write_manifest(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    write_text(path, &out)
}
