use std::io::{BufRead, Write};

use super::{ConvergenceRow, ProtocolError, RoundRecord, Trace, TraceHeader};

/// Writes the header object on the first line, then one round per line.
pub fn write_jsonl<W: Write>(trace: &Trace, mut out: W) -> Result<(), ProtocolError> {
    let to_io = |e: serde_json::Error| ProtocolError::Io(e.into());
    serde_json::to_writer(&mut out, &trace.header).map_err(to_io)?;
    out.write_all(b"\n")?;
    for r in &trace.rounds {
        serde_json::to_writer(&mut out, r).map_err(to_io)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Trace, ProtocolError> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let bad = |line: usize, e: serde_json::Error| ProtocolError::Format {
        line: line + 1,
        reason: e.to_string(),
    };
    let (first, head) = lines.next().ok_or(ProtocolError::Format {
        line: 1,
        reason: "missing header".into(),
    })?;
    let header: TraceHeader = serde_json::from_str(&head?).map_err(|e| bad(first, e))?;
    let mut rounds = Vec::new();
    for (idx, line) in lines {
        let r: RoundRecord = serde_json::from_str(&line?).map_err(|e| bad(idx, e))?;
        if r.k != rounds.len() {
            return Err(ProtocolError::Format {
                line: idx + 1,
                reason: format!("round {} where {} was expected", r.k, rounds.len()),
            });
        }
        rounds.push(r);
    }
    Ok(Trace { header, rounds })
}

/// CSV with columns `k,mean_distance,max_consensus_error`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<(), ProtocolError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["k", "mean_distance", "max_consensus_error"])
        .map_err(csv_io)?;
    for r in rows {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> ProtocolError {
    ProtocolError::Io(std::io::Error::other(e))
}
