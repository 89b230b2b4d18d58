//! CSV encoding of simulation traces.
//!
//! Columns are `k, t`, then for every loop in order the command `r_<loop>_<i>`,
//! then all `y_`, `yt_`, `u_req_`, `u_` groups, then one `beta_<loop>`,
//! `qp_iter_<loop>` and `qp_cost_<loop>` column per loop. Floats are written
//! in scientific notation with 17 significant digits, so writing is
//! deterministic and reading recovers every value exactly.

use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sim::{LoopInfo, LoopRecord, SimulationTrace, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    R,
    Y,
    Yt,
    UReq,
    U,
}

const VECTOR_GROUPS: [(Group, &str); 5] = [
    (Group::R, "r"),
    (Group::Y, "y"),
    (Group::Yt, "yt"),
    (Group::UReq, "u_req"),
    (Group::U, "u"),
];

fn group_len(info: &LoopInfo, g: Group) -> usize {
    match g {
        Group::R | Group::Yt => info.commands,
        Group::Y => info.outputs,
        Group::UReq | Group::U => info.inputs,
    }
}

fn group_values(rec: &LoopRecord, g: Group) -> &DVector<f64> {
    match g {
        Group::R => &rec.r,
        Group::Y => &rec.y,
        Group::Yt => &rec.yt,
        Group::UReq => &rec.u_req,
        Group::U => &rec.u,
    }
}

/// Header names in column order.
pub fn trace_header(loops: &[LoopInfo]) -> Vec<String> {
    let mut h = vec!["k".to_string(), "t".to_string()];
    for (g, prefix) in VECTOR_GROUPS {
        for info in loops {
            for i in 0..group_len(info, g) {
                h.push(format!("{prefix}_{}_{i}", info.name));
            }
        }
    }
    for prefix in ["beta", "qp_iter", "qp_cost"] {
        for info in loops {
            h.push(format!("{prefix}_{}", info.name));
        }
    }
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(trace_header(&trace.loops)).map_err(csv_err)?;
    for step in &trace.steps {
        let mut row = vec![step.k.to_string(), fmt(step.t)];
        for (g, _) in VECTOR_GROUPS {
            for rec in &step.loops {
                row.extend(group_values(rec, g).iter().map(|&v| fmt(v)));
            }
        }
        row.extend(step.loops.iter().map(|r| fmt(r.beta)));
        row.extend(step.loops.iter().map(|r| r.qp_iterations.to_string()));
        row.extend(step.loops.iter().map(|r| fmt(r.qp_cost)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Recovers loop names and dimensions from a header row.
fn parse_header(header: &csv::StringRecord) -> Result<Vec<LoopInfo>> {
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "k" || cols[1] != "t" {
        return Err(Error::Parse("trace header must start with `k,t`".into()));
    }
    let names: Vec<String> = cols
        .iter()
        .filter_map(|c| c.strip_prefix("beta_"))
        .map(str::to_string)
        .collect();
    if names.is_empty() {
        return Err(Error::Parse("trace header has no loop columns".into()));
    }
    let mut loops: Vec<LoopInfo> = names
        .iter()
        .map(|n| LoopInfo {
            name: n.clone(),
            outputs: 0,
            commands: 0,
            inputs: 0,
        })
        .collect();
    for (g, prefix) in VECTOR_GROUPS {
        for info in &mut loops {
            let stem = format!("{prefix}_{}_", info.name);
            let count = cols
                .iter()
                .filter(|c| c.strip_prefix(&stem).is_some_and(|i| i.parse::<usize>().is_ok()))
                .count();
            match g {
                Group::R => info.commands = count,
                Group::Y => info.outputs = count,
                Group::UReq => info.inputs = count,
                Group::Yt | Group::U => {}
            }
        }
    }
    let expected = trace_header(&loops);
    if expected.len() != cols.len() || expected.iter().zip(&cols).any(|(a, b)| a != b) {
        return Err(Error::Parse("trace header does not follow the column schema".into()));
    }
    Ok(loops)
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<SimulationTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    let header = rdr.headers().map_err(csv_err)?.clone();
    let loops = parse_header(&header)?;
    let mut steps = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut fields = rec.iter();
        let mut next_f64 = || -> Result<f64> {
            let f = fields
                .next()
                .ok_or_else(|| Error::Parse(format!("row {line} is short")))?;
            f.parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {line}: `{f}` is not a number")))
        };
        let k = next_f64()? as usize;
        let t = next_f64()?;
        let mut records: Vec<LoopRecord> = loops
            .iter()
            .map(|info| LoopRecord {
                r: DVector::zeros(info.commands),
                y: DVector::zeros(info.outputs),
                yt: DVector::zeros(info.commands),
                u_req: DVector::zeros(info.inputs),
                u: DVector::zeros(info.inputs),
                beta: 0.0,
                qp_iterations: 0,
                qp_cost: 0.0,
                theta_norm: None,
            })
            .collect();
        for (g, _) in VECTOR_GROUPS {
            for rec in records.iter_mut() {
                let target = match g {
                    Group::R => &mut rec.r,
                    Group::Y => &mut rec.y,
                    Group::Yt => &mut rec.yt,
                    Group::UReq => &mut rec.u_req,
                    Group::U => &mut rec.u,
                };
                for v in target.iter_mut() {
                    *v = next_f64()?;
                }
            }
        }
        for rec in records.iter_mut() {
            rec.beta = next_f64()?;
        }
        for rec in records.iter_mut() {
            rec.qp_iterations = next_f64()? as usize;
        }
        for rec in records.iter_mut() {
            rec.qp_cost = next_f64()?;
        }
        steps.push(StepRecord { k, t, loops: records });
    }
    let sample_time = match steps.as_slice() {
        [a, b, ..] => b.t - a.t,
        _ => 0.0,
    };
    Ok(SimulationTrace {
        sample_time,
        loops,
        steps,
        diagnostics: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    const LINEAR_ALT_BANK: &str = include_str!("../../../../scenarios/linear_alt_bank.toml");

    fn short_run(steps: usize) -> SimulationTrace {
        let mut s = Scenario::from_toml_str(LINEAR_ALT_BANK).unwrap();
        s.steps = steps;
        s.run().unwrap()
    }

    fn to_text(trace: &SimulationTrace) -> String {
        let mut buf = Vec::new();
        write_trace_csv(trace, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn one_step_trace_is_two_lines() {
        let text = to_text(&short_run(1));
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("k,t,r_long_0,r_lat_0,y_long_0,y_long_1,y_lat_0,"));
    }

    #[test]
    fn column_count_follows_the_loop_dimensions() {
        let trace = short_run(3);
        let expected: usize = 2 + trace
            .loops
            .iter()
            .map(|l| 2 * l.commands + l.outputs + 2 * l.inputs + 3)
            .sum::<usize>();
        // long: p_t = 1, p = 2, m = 1; lat: p_t = 1, p = 1, m = 1
        assert_eq!(expected, 2 + (2 + 2 + 2 + 3) + (2 + 1 + 2 + 3));
        for line in to_text(&trace).lines() {
            assert_eq!(line.split(',').count(), expected);
        }
    }

    #[test]
    fn round_trip_recovers_every_value() {
        let trace = short_run(40);
        let text = to_text(&trace);
        let back = read_trace_csv(text.as_bytes()).unwrap();
        assert_eq!(back.loops, trace.loops);
        assert_eq!(back.steps.len(), trace.steps.len());
        assert_eq!(back.sample_time, trace.steps[1].t - trace.steps[0].t);
        for (a, b) in back.steps.iter().zip(&trace.steps) {
            assert_eq!((a.k, a.t), (b.k, b.t));
            for (ra, rb) in a.loops.iter().zip(&b.loops) {
                assert_eq!(ra.theta_norm, None);
                let rb = LoopRecord {
                    theta_norm: None,
                    ..rb.clone()
                };
                assert_eq!(*ra, rb);
            }
        }
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn floats_carry_seventeen_significant_digits() {
        let text = to_text(&short_run(2));
        let row = text.lines().nth(2).unwrap();
        let t = row.split(',').nth(1).unwrap();
        assert_eq!(t, "5.0000000000000003e-2");
    }

    #[test]
    fn malformed_headers_are_rejected() {
        assert!(read_trace_csv("x,t\n".as_bytes()).is_err());
        assert!(read_trace_csv("k,t\n".as_bytes()).is_err());
        assert!(read_trace_csv("k,t,beta_a,qp_iter_a\n".as_bytes()).is_err());
        let text = to_text(&short_run(1)).replacen("y_long_1,", "", 1);
        assert!(read_trace_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let text = to_text(&short_run(1));
        let (header, row) = text.split_once('\n').unwrap();
        let bad = format!("{header}\n{}", row.replacen(',', ",oops,", 1));
        assert!(read_trace_csv(bad.as_bytes()).is_err());
    }
}
