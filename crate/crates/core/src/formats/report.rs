use super::FormatError;
use crate::metrics::{EvalReport, ImageRecord, MetricMeans};

/// Key-value metadata, a `[means]` block and an `[images]` table. Numbers are
/// written in shortest round-trip form.
pub fn format_report(r: &EvalReport) -> String {
    let mut out = String::from("# evaluation report\n");
    out.push_str(&format!("checkpoint = {}\n", r.checkpoint));
    out.push_str(&format!("dataset = {}\n", r.dataset));
    out.push_str(&format!("variant = {}\n", r.variant));
    out.push_str(&format!("images = {}\n\n[means]\n", r.records.len()));
    let m = &r.means;
    out.push_str(&format!("psnr = {}\nssim = {}\nmae_dm = {}\nmse_dm = {}\n\n", m.psnr, m.ssim, m.mae_dm, m.mse_dm));
    out.push_str("[images]\nid psnr ssim mae_dm mse_dm\n");
    for rec in &r.records {
        out.push_str(&format!("{} {} {} {} {}\n", rec.id, rec.psnr, rec.ssim, rec.mae_dm, rec.mse_dm));
    }
    out
}

pub fn parse_report(text: &str) -> Result<EvalReport, FormatError> {
    let what = "report";
    let bad = |line: usize, m: &str| FormatError::malformed(what, format!("line {line}: {m}"));
    let num = |line: usize, s: &str| s.parse::<f64>().map_err(|_| bad(line, &format!("bad number `{s}`")));
    let mut meta = std::collections::HashMap::new();
    let mut means = std::collections::HashMap::new();
    let mut records = Vec::new();
    let mut section = "";
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if l.starts_with('[') {
            section = if l == "[means]" { "means" } else if l == "[images]" { "images" } else { return Err(bad(line, l)) };
            continue;
        }
        match section {
            "" | "means" => {
                let (k, v) = l.split_once('=').ok_or_else(|| bad(line, "expected `key = value`"))?;
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                if section == "means" {
                    means.insert(k, num(line, &v)?);
                } else {
                    meta.insert(k, v);
                }
            }
            _ => {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t == ["id", "psnr", "ssim", "mae_dm", "mse_dm"] {
                    continue;
                }
                let [id, p, s, a, e] = t[..] else { return Err(bad(line, "expected 5 columns")) };
                records.push(ImageRecord {
                    id: id.to_string(),
                    psnr: num(line, p)?,
                    ssim: num(line, s)?,
                    mae_dm: num(line, a)?,
                    mse_dm: num(line, e)?,
                });
            }
        }
    }
    let take = |m: &mut std::collections::HashMap<String, String>, k: &str| {
        m.remove(k).ok_or_else(|| FormatError::malformed(what, format!("missing `{k}`")))
    };
    let mean = |k: &str| means.get(k).copied().ok_or_else(|| FormatError::malformed(what, format!("missing mean `{k}`")));
    Ok(EvalReport {
        checkpoint: take(&mut meta, "checkpoint")?,
        dataset: take(&mut meta, "dataset")?,
        variant: take(&mut meta, "variant")?,
        means: MetricMeans { psnr: mean("psnr")?, ssim: mean("ssim")?, mae_dm: mean("mae_dm")?, mse_dm: mean("mse_dm")? },
        records,
    })
}
