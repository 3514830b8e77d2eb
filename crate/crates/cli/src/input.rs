use std::path::Path;

use anyhow::Context;
use pairsurv::{build_sample, PairedSample, Record};
use serde::Deserialize;

use crate::exit::{Failure, Kind};

#[derive(Debug, Deserialize)]
struct Row {
    pair_id: String,
    position: u8,
    treated: u8,
    time: f64,
    event: u8,
}

fn flag(value: u8, column: &str, line: u64) -> anyhow::Result<bool> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Failure::new(Kind::Input, format!("line {line}: `{column}` must be 0 or 1, got {v}")).into()),
    }
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::new(Kind::Input, format!("cannot open {}: {e}", path.display())))?;
    let expected = ["pair_id", "position", "treated", "time", "event"];
    let headers = reader.headers().map_err(|e| Failure::new(Kind::Input, e.to_string()))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Failure::new(
            Kind::Input,
            format!("expected header `{}`, found `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        )
        .into());
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Failure::new(Kind::Input, e.to_string()))?;
        let line = out.len() as u64 + 2;
        out.push(Record {
            pair_id: row.pair_id,
            position: row.position,
            treated: flag(row.treated, "treated", line)?,
            time: row.time,
            event: flag(row.event, "event", line)?,
        });
    }
    Ok(out)
}

pub fn read_sample(path: &Path) -> anyhow::Result<PairedSample> {
    let records = read_records(path)?;
    build_sample(&records).with_context(|| format!("reading {}", path.display()))
}
