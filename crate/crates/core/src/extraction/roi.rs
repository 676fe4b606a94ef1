use std::collections::BTreeMap;

use crate::trajdata::Track;

/// Ids of tracks within `radius` (center to center, closed ball) of `ego`,
/// for every frame of the ego's lifetime where at least one exists.
pub fn roi_neighbors(ego: &Track, others: &[&Track], radius: f64) -> BTreeMap<i64, Vec<i64>> {
    let mut out: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    let r2 = radius * radius;
    for o in others {
        if o.track_id == ego.track_id {
            continue;
        }
        let lo = ego.initial_frame.max(o.initial_frame);
        let hi = ego.final_frame.min(o.final_frame);
        for f in lo..=hi {
            let (Some(a), Some(b)) = (ego.sample_at(f), o.sample_at(f)) else {
                continue;
            };
            if (a.position - b.position).norm_sq() <= r2 {
                out.entry(f).or_default().push(o.track_id);
            }
        }
    }
    for v in out.values_mut() {
        v.sort_unstable();
    }
    out
}

/// First frame at which `a` and `b` are within `radius` of each other.
pub fn first_contact(a: &Track, b: &Track, radius: f64) -> Option<i64> {
    let r2 = radius * radius;
    let lo = a.initial_frame.max(b.initial_frame);
    let hi = a.final_frame.min(b.final_frame);
    (lo..=hi).find(|&f| match (a.sample_at(f), b.sample_at(f)) {
        (Some(x), Some(y)) => (x.position - y.position).norm_sq() <= r2,
        _ => false,
    })
}

/// Whether `a` and `b` come within `radius` during `[start, end]`.
pub fn in_contact_during(a: &Track, b: &Track, radius: f64, start: i64, end: i64) -> bool {
    let r2 = radius * radius;
    let lo = a.initial_frame.max(b.initial_frame).max(start);
    let hi = a.final_frame.min(b.final_frame).min(end);
    (lo..=hi).any(|f| match (a.sample_at(f), b.sample_at(f)) {
        (Some(x), Some(y)) => (x.position - y.position).norm_sq() <= r2,
        _ => false,
    })
}
