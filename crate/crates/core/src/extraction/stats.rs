//! Five-number summaries of PET per functional type.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::num::Real;

use super::functional::FunctionalType;
use super::ConcreteScenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber<T> {
    pub count: usize,
    pub min: T,
    pub q1: T,
    pub median: T,
    pub q3: T,
    pub max: T,
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `(n - 1) * p`).
pub fn quantile_sorted<T: Real>(sorted: &[T], p: T) -> T {
    let n = sorted.len();
    if n == 0 {
        return T::nan();
    }
    let h = T::from_usize(n - 1).unwrap() * p;
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0).min(n - 1);
    let j = (i + 1).min(n - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (h - lo)
}

/// Summary of the finite values in `data`; count 0 and NaN fields when empty.
pub fn five_number<T: Real>(data: &[T]) -> FiveNumber<T> {
    let mut v: Vec<T> = data.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        return FiveNumber {
            count: 0,
            min: T::nan(),
            q1: T::nan(),
            median: T::nan(),
            q3: T::nan(),
            max: T::nan(),
        };
    }
    FiveNumber {
        count: v.len(),
        min: v[0],
        q1: quantile_sorted(&v, T::lit(0.25)),
        median: quantile_sorted(&v, T::half()),
        q3: quantile_sorted(&v, T::lit(0.75)),
        max: v[v.len() - 1],
    }
}

/// Per-type PET summaries. Every type in `types` gets a row, even when empty;
/// types seen only in the scenarios are appended.
pub fn pet_stats(scenarios: &[ConcreteScenario], types: &[FunctionalType]) -> Vec<(FunctionalType, FiveNumber<f64>)> {
    let mut groups: BTreeMap<FunctionalType, Vec<f64>> = BTreeMap::new();
    let mut order: Vec<FunctionalType> = types.to_vec();
    for t in types {
        groups.entry(t.clone()).or_default();
    }
    for s in scenarios {
        let ft = &s.core.functional_type;
        if !groups.contains_key(ft) {
            order.push(ft.clone());
        }
        let g = groups.entry(ft.clone()).or_default();
        if let Some(p) = s.core.pet.pet {
            g.push(p);
        }
    }
    order
        .into_iter()
        .map(|t| {
            let summary = five_number(&groups[&t]);
            (t, summary)
        })
        .collect()
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

/// CSV with columns `type,count,min,q1,median,q3,max`.
pub fn write_stats_csv<W: Write>(rows: &[(FunctionalType, FiveNumber<f64>)], out: W, header_comment: Option<&str>) -> Result<()> {
    let mut out = out;
    if let Some(c) = header_comment {
        writeln!(out, "# {c}").map_err(|e| Error::io("stats", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["type", "count", "min", "q1", "median", "q3", "max"])?;
    for (t, s) in rows {
        w.write_record([
            t.to_string(),
            s.count.to_string(),
            fmt_num(s.min),
            fmt_num(s.q1),
            fmt_num(s.median),
            fmt_num(s.q3),
            fmt_num(s.max),
        ])?;
    }
    w.flush().map_err(|e| Error::io("stats", e))?;
    Ok(())
}
