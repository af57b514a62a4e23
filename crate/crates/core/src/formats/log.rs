use super::FormatError;
use crate::train::{EpochRecord, TrainLog};

pub fn format_record(r: &EpochRecord) -> String {
    format!(
        "epoch={} stage={} l_dme={} l_df={} l_wd={} loss={} wall_s={:.3}",
        r.epoch, r.stage, r.l_dme, r.l_df, r.l_wd, r.loss, r.wall_s
    )
}

/// One `epoch=<n> stage=<s> l_dme=.. l_df=.. l_wd=.. loss=.. wall_s=..` line per record.
pub fn format_log(log: &TrainLog) -> String {
    log.records.iter().map(|r| format_record(r) + "\n").collect()
}

pub fn parse_log(text: &str) -> Result<TrainLog, FormatError> {
    let what = "training log";
    let mut log = TrainLog::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| FormatError::malformed(what, format!("line {}: {m}", i + 1));
        let mut fields = std::collections::HashMap::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|_| bad(&format!("bad `{k}`")));
        log.records.push(EpochRecord {
            epoch: get("epoch")?.parse().map_err(|_| bad("bad `epoch`"))?,
            stage: get("stage")?.parse().map_err(|e: String| bad(&e))?,
            l_dme: num("l_dme")?,
            l_df: num("l_df")?,
            l_wd: num("l_wd")?,
            loss: num("loss")?,
            wall_s: num("wall_s")?,
        });
    }
    Ok(log)
}
