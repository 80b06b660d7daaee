//! CSV readers and writers. Every file carries a header row; floats are
//! written with shortest round-trip formatting so a parse of an emitted file
//! reproduces the values bit for bit.

use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, Writer};

use crate::convergence::{FanTrajectory, FlowErrorSample};
use crate::dynamics::TracePoint;
use crate::error::{Error, Result};
use crate::estimator::WeightMatrix;
use crate::model::{Dataset, GlmmData};
use crate::real::Real;
use crate::samplers::ChainRecord;

fn fmt<F: Real>(v: F) -> String {
    format!("{v}")
}

fn parse<T: std::str::FromStr>(rec: &StringRecord, col: usize, what: &str) -> Result<T> {
    let field = rec
        .get(col)
        .ok_or_else(|| Error::Format(format!("missing {what} field")))?;
    field.trim().parse().map_err(|_| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::Format(format!("line {line}: cannot parse {what} from '{field}'"))
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    ReaderBuilder::new().has_headers(true).from_reader(r)
}

fn expect_header(found: &StringRecord, expected: &[String]) -> Result<()> {
    if found.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format(format!(
            "unexpected header '{}', expected '{}'",
            found.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn theta_columns(d: usize) -> impl Iterator<Item = String> {
    (0..d).map(|j| format!("theta_{j}"))
}

fn chain_header(d: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string()];
    h.extend(theta_columns(d));
    h.extend(["log_phat", "hamiltonian", "accepted"].map(String::from));
    h
}

/// Writes chain records as `iter, theta_0..theta_{d-1}, log_phat, hamiltonian, accepted`.
/// The burn-in flag is not part of the schema; callers choose which records to emit.
pub fn write_chain<F: Real, W: Write>(w: W, records: &[ChainRecord<F>]) -> Result<()> {
    let d = records.first().map_or(0, |r| r.theta.len());
    let mut out = Writer::from_writer(w);
    out.write_record(chain_header(d))?;
    for r in records {
        if r.theta.len() != d {
            return Err(Error::Dimension {
                what: "chain record parameters",
                expected: d,
                got: r.theta.len(),
            });
        }
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.theta.iter().map(|&v| fmt(v)));
        row.push(fmt(r.log_phat));
        row.push(fmt(r.hamiltonian));
        row.push(u8::from(r.accepted).to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_chain<F: Real, R: Read>(r: R) -> Result<Vec<ChainRecord<F>>> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 4 {
        return Err(Error::Format("chain header has too few columns".into()));
    }
    let d = header.len() - 4;
    expect_header(&header, &chain_header(d))?;
    let mut records = Vec::new();
    for row in rd.records() {
        let row = row?;
        let theta = (0..d)
            .map(|j| parse(&row, 1 + j, "theta"))
            .collect::<Result<Vec<F>>>()?;
        let accepted = match row.get(d + 3).map(str::trim) {
            Some("1" | "true") => true,
            Some("0" | "false") => false,
            other => {
                return Err(Error::Format(format!(
                    "accepted must be 0 or 1, got {other:?}"
                )))
            }
        };
        records.push(ChainRecord {
            iteration: parse(&row, 0, "iter")?,
            theta,
            log_phat: parse(&row, d + 1, "log_phat")?,
            hamiltonian: parse(&row, d + 2, "hamiltonian")?,
            accepted,
            burn_in: false,
        });
    }
    Ok(records)
}

fn glmm_header(p: usize) -> Vec<String> {
    let mut h = vec!["subject".to_string(), "obs".into(), "y".into()];
    h.extend((0..p).map(|j| format!("z_{j}")));
    h
}

/// Scalar data sets are a single `y` column; GLMM data sets use
/// `subject, obs, y, z_0..z_{p-1}` with one row per observation.
pub fn write_dataset<F: Real, W: Write>(w: W, data: &Dataset<F>) -> Result<()> {
    let mut out = Writer::from_writer(w);
    match data {
        Dataset::Scalar(y) => {
            out.write_record(["y"])?;
            for &v in y {
                out.write_record([fmt(v)])?;
            }
        }
        Dataset::Glmm(g) => {
            g.validate()?;
            out.write_record(glmm_header(g.covariates))?;
            for s in 0..g.subjects {
                for o in 0..g.per_subject {
                    let i = s * g.per_subject + o;
                    let mut row = vec![s.to_string(), o.to_string(), fmt(g.y[i])];
                    let z = &g.z[i * g.covariates..(i + 1) * g.covariates];
                    row.extend(z.iter().map(|&v| fmt(v)));
                    out.write_record(&row)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<F: Real, R: Read>(r: R) -> Result<Dataset<F>> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    if header.len() == 1 && header.get(0).map(str::trim) == Some("y") {
        let y = rd
            .records()
            .map(|row| parse(&row?, 0, "y"))
            .collect::<Result<Vec<F>>>()?;
        return Ok(Dataset::Scalar(y));
    }
    if header.len() < 3 {
        return Err(Error::Format("unrecognized data set header".into()));
    }
    let p = header.len() - 3;
    expect_header(&header, &glmm_header(p))?;
    let (mut z, mut y, mut keys) = (Vec::new(), Vec::new(), Vec::new());
    for row in rd.records() {
        let row = row?;
        let s: usize = parse(&row, 0, "subject")?;
        let o: usize = parse(&row, 1, "obs")?;
        keys.push((s, o));
        y.push(parse(&row, 2, "y")?);
        for j in 0..p {
            z.push(parse(&row, 3 + j, "z")?);
        }
    }
    let per_subject = keys.iter().filter(|k| k.0 == 0).count();
    let subjects = if per_subject == 0 { 0 } else { keys.len() / per_subject };
    for (i, &(s, o)) in keys.iter().enumerate() {
        if (s, o) != (i / per_subject, i % per_subject) {
            return Err(Error::Format(format!(
                "observation ({s}, {o}) breaks the balanced subject/obs layout"
            )));
        }
    }
    let data = GlmmData {
        subjects,
        per_subject,
        covariates: p,
        z,
        y,
    };
    data.validate()?;
    Ok(Dataset::Glmm(data))
}

/// One row per `(datum, sample)` pair.
pub fn write_weight_matrix<F: Real, W: Write>(w: W, m: &WeightMatrix<F>) -> Result<()> {
    let mut out = Writer::from_writer(w);
    out.write_record(["datum", "sample", "log_w", "softmax"])?;
    for k in 0..m.data {
        let (lw, sm) = m.row(k);
        for i in 0..m.samples {
            out.write_record([k.to_string(), i.to_string(), fmt(lw[i]), fmt(sm[i])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Trajectory dump with columns `t, theta_j.., rho_j.., H`.
pub fn write_trace<F: Real, W: Write>(w: W, points: &[TracePoint<F>]) -> Result<()> {
    let d = points.first().map_or(0, |p| p.theta.len());
    let mut out = Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(theta_columns(d));
    header.extend((0..d).map(|j| format!("rho_{j}")));
    header.push("H".into());
    out.write_record(&header)?;
    for p in points {
        let mut row = vec![fmt(p.t)];
        row.extend(p.theta.iter().chain(&p.rho).map(|&v| fmt(v)));
        row.push(fmt(p.hamiltonian));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_flow_errors<F: Real, W: Write>(w: W, samples: &[FlowErrorSample<F>]) -> Result<()> {
    let mut out = Writer::from_writer(w);
    out.write_record(["N", "seed", "sup_error"])?;
    for s in samples {
        out.write_record([s.n.to_string(), s.seed.to_string(), fmt(s.sup_error)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_flow_errors<F: Real, R: Read>(r: R) -> Result<Vec<FlowErrorSample<F>>> {
    let mut rd = reader(r);
    expect_header(rd.headers()?, &["N", "seed", "sup_error"].map(String::from))?;
    rd.records()
        .map(|row| {
            let row = row?;
            Ok(FlowErrorSample {
                n: parse(&row, 0, "N")?,
                seed: parse(&row, 1, "seed")?,
                sup_error: parse(&row, 2, "sup_error")?,
            })
        })
        .collect()
}

/// Dense trajectory of one fan member: `t, theta_hat, theta_exact`.
pub fn write_fan<F: Real, W: Write>(w: W, fan: &FanTrajectory<F>) -> Result<()> {
    let mut out = Writer::from_writer(w);
    out.write_record(["t", "theta_hat", "theta_exact"])?;
    for ((&t, &a), &b) in fan.times.iter().zip(&fan.theta_hat).zip(&fan.theta_exact) {
        out.write_record([fmt(t), fmt(a), fmt(b)])?;
    }
    out.flush()?;
    Ok(())
}
