use std::io::{Read, Write};

use crate::error::{Error, Result};
use serde::Serialize;

use crate::network::AllocationPair;
use crate::sim::SimOutcome;

use super::sweep::{SweepMode, SweepRow};

/// Significant digits of every float written to CSV.
pub const CSV_DIGITS: usize = 10;

/// `%g`-style rendering with `digits` significant digits: fixed notation
/// for decimal exponents in `[-5, digits)`, scientific otherwise, trailing
/// zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format_sig(x, CSV_DIGITS)).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io {
        path: "csv".to_string(),
        reason: e.to_string(),
    }
}

pub fn csv_header(num_tiers: usize) -> Vec<String> {
    let mut h = vec!["threshold".to_string(), "mode".into(), "objective".into()];
    for prefix in ["A", "w", "B"] {
        h.extend((1..=num_tiers).map(|k| format!("{prefix}_{k}")));
    }
    h.extend(
        [
            "converged",
            "mc_estimate",
            "mc_stderr",
            "config_hash",
            "seed",
            "tolerance",
        ]
        .map(String::from),
    );
    h
}

pub fn write_csv<W: Write>(rows: &[SweepRow], num_tiers: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(num_tiers)).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![
            opt(row.threshold),
            row.mode.name().to_string(),
            opt(row.objective),
        ];
        for v in [&row.assoc, &row.spectrum, &row.biases] {
            if v.is_empty() {
                rec.extend(std::iter::repeat_n(String::new(), num_tiers));
            } else {
                rec.extend(v.iter().map(|&x| format_sig(x, CSV_DIGITS)));
            }
        }
        rec.push(row.converged.to_string());
        rec.push(opt(row.mc_estimate));
        rec.push(opt(row.mc_stderr));
        rec.push(row.config_hash.clone());
        rec.push(row.seed.to_string());
        rec.push(format_sig(row.tolerance, CSV_DIGITS));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "csv".to_string(),
        reason: e.to_string(),
    })
}

fn parse_f64(field: &str, row: usize, col: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| {
        Error::invalid(
            format!("rows[{row}].{col}"),
            format!("`{field}` is not a number"),
        )
    })
}

/// Reads a table written by [`write_csv`] and validates every row.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let fixed = csv_header(0).len();
    if header.len() < fixed || !(header.len() - fixed).is_multiple_of(3) {
        return Err(Error::invalid("header", "unexpected column count"));
    }
    let k = (header.len() - fixed) / 3;
    if header != csv_header(k) {
        return Err(Error::invalid(
            "header",
            "columns do not match the sweep layout",
        ));
    }

    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize| parse_f64(get(c), i, &header[c]);
        let block = |start: usize| -> Result<Vec<f64>> {
            let v: Vec<Option<f64>> = (start..start + k).map(num).collect::<Result<_>>()?;
            Ok(if v.iter().all(Option::is_none) {
                Vec::new()
            } else {
                v.into_iter()
                    .map(|x| x.ok_or_else(|| Error::invalid(format!("rows[{i}]"), "missing entry")))
                    .collect::<Result<_>>()?
            })
        };
        let tail = 3 + 3 * k;
        let row = SweepRow {
            threshold: num(0)?,
            mode: get(1).parse::<SweepMode>()?,
            objective: num(2)?,
            assoc: block(3)?,
            spectrum: block(3 + k)?,
            biases: block(3 + 2 * k)?,
            converged: get(tail)
                .parse()
                .map_err(|_| Error::invalid(format!("rows[{i}].converged"), "not a boolean"))?,
            mc_estimate: num(tail + 1)?,
            mc_stderr: num(tail + 2)?,
            error: None,
            config_hash: get(tail + 3).to_string(),
            seed: get(tail + 4)
                .parse()
                .map_err(|_| Error::invalid(format!("rows[{i}].seed"), "not an integer"))?,
            tolerance: num(tail + 5)?
                .ok_or_else(|| Error::invalid(format!("rows[{i}].tolerance"), "missing"))?,
        };
        row.validate(k)
            .map_err(|e| Error::invalid(format!("rows[{i}]"), e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_json<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    writeln!(out, "{text}").map_err(|e| Error::Io {
        path: "json".to_string(),
        reason: e.to_string(),
    })
}

/// Reads a JSON array written by [`write_json`] and validates every row.
pub fn read_json(text: &str) -> Result<Vec<SweepRow>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let rows: Vec<SweepRow> = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: "json".to_string(),
        field: e.path().to_string(),
        reason: e.inner().to_string(),
    })?;
    for (i, row) in rows.iter().enumerate() {
        row.validate(row.assoc.len())
            .map_err(|e| Error::invalid(format!("[{i}]"), e.to_string()))?;
    }
    Ok(rows)
}

/// Single-row CSV for a Monte Carlo run next to its analytic value.
pub fn write_sim_csv<W: Write>(outcome: &SimOutcome, analytic: f64, out: W) -> Result<()> {
    let k = outcome.per_tier_coverage.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "coverage_estimate".to_string(),
        "std_error".into(),
        "analytic".into(),
        "drops".into(),
        "seed".into(),
    ];
    header.extend((1..=k).map(|t| format!("assoc_{t}")));
    header.extend((1..=k).map(|t| format!("coverage_{t}")));
    w.write_record(&header).map_err(csv_err)?;
    let mut rec = vec![
        format_sig(outcome.coverage_estimate, CSV_DIGITS),
        format_sig(outcome.std_error, CSV_DIGITS),
        format_sig(analytic, CSV_DIGITS),
        outcome.drops.to_string(),
        outcome.seed.to_string(),
    ];
    rec.extend(
        outcome
            .per_tier_assoc_empirical
            .iter()
            .chain(&outcome.per_tier_coverage)
            .map(|&x| format_sig(x, CSV_DIGITS)),
    );
    w.write_record(&rec).map_err(csv_err)?;
    w.flush().map_err(|e| Error::Io {
        path: "csv".to_string(),
        reason: e.to_string(),
    })
}

/// JSON document for a Monte Carlo run with its analytic counterpart and
/// the allocation it was run at.
pub fn sim_json(outcome: &SimOutcome, analytic: f64, alloc: &AllocationPair) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        analytic: f64,
        allocation: &'a AllocationPair,
        #[serde(flatten)]
        outcome: &'a SimOutcome,
    }
    serde_json::to_string_pretty(&Doc {
        analytic,
        allocation: alloc,
        outcome,
    })
    .expect("outcome serializes")
}
