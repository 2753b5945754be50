//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use segctl_core::mask::{build_mask, current_row};
use segctl_core::plan::{build_plan, SegmentPlan};

/// Region of a 0-based index in `[C, x, s]`.
enum Region {
    Cond(usize),
    Text(usize),
    Sem(usize),
}

fn region(plan: &SegmentPlan, u: usize) -> Region {
    let cond = plan.num_segments() * plan.cond_block_len();
    if u < cond {
        Region::Cond(u / plan.cond_block_len() + 1)
    } else if u < cond + plan.text_len() {
        Region::Text(u - cond + 1)
    } else {
        Region::Sem(u - cond - plan.text_len() + 1)
    }
}

/// Entry-by-entry rule evaluation.
fn oracle(plan: &SegmentPlan, seg_of_sem: &[usize], u: usize, v: usize) -> bool {
    let own = match region(plan, u) {
        Region::Cond(m) => {
            return matches!(region(plan, v), Region::Cond(n) if n == m);
        }
        Region::Text(t) => plan.segment_of_text(t).unwrap(),
        Region::Sem(r) => seg_of_sem[r - 1],
    };
    match region(plan, v) {
        Region::Cond(n) => n == own,
        _ => v <= u,
    }
}

pub fn check_oracle(plan: &SegmentPlan, seg_s: &[usize], active: usize) -> Result<(), String> {
    let step = seg_s.len() + 1;
    let mask = build_mask(plan, seg_s, step, active).map_err(|e| e.to_string())?;
    let mut full = seg_s.to_vec();
    full.push(active);
    let q = mask.size();
    if q != plan.num_segments() * plan.cond_block_len() + plan.text_len() + step {
        return Err(format!("size {q} for {plan:?}"));
    }
    for u in 0..q {
        for v in 0..q {
            if mask.is_visible(u, v) != oracle(plan, &full, u, v) {
                return Err(format!("plan {plan:?} seg_s {full:?} differs at ({u},{v})"));
            }
        }
    }
    Ok(())
}

fn boundary_sets(t: usize, m: usize) -> Vec<Vec<usize>> {
    // strictly increasing (m-1)-subsets of 1..t-1
    fn rec(start: usize, t: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for b in start..t {
            cur.push(b);
            rec(b + 1, t, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, t, m - 1, &mut Vec::new(), &mut out);
    out
}

/// Every (M, L_C, T, boundaries, i) in the grid with two segment-id
/// sequences each: an even spread over 1..=M and everything in the last
/// segment.
pub fn exhaustive_grid() -> Result<usize, String> {
    let mut n = 0;
    for m in 1..=5 {
        for l in 1..=2 {
            for t in m..=12 {
                for bounds in boundary_sets(t, m) {
                    let plan = build_plan(t, &bounds, l, None).unwrap();
                    for i in 1..=8 {
                        let spread: Vec<usize> = (0..i).map(|r| 1 + r * m / i).collect();
                        check_oracle(&plan, &spread[..i - 1], spread[i - 1])?;
                        let last = vec![m; i];
                        check_oracle(&plan, &last[..i - 1], m)?;
                        n += 2;
                    }
                }
            }
        }
    }
    Ok(n)
}

pub fn structural(plan: &SegmentPlan, seg_s: &[usize], active: usize) -> Result<(), String> {
    let step = seg_s.len() + 1;
    let mask = build_mask(plan, seg_s, step, active).map_err(|e| e.to_string())?;
    let lay = mask.layout();
    let cond = lay.cond_len();
    let q = mask.size();
    let mut ids = seg_s.to_vec();
    ids.push(active);
    for u in cond..q {
        for v in u + 1..q {
            if mask.is_visible(u, v) {
                return Err(format!("causality broken at ({u},{v})"));
            }
        }
        let own = if u < lay.semantic_offset() {
            plan.segment_of_text(u - cond + 1).unwrap()
        } else {
            ids[u - lay.semantic_offset()]
        };
        if (0..cond).any(|c| mask.is_visible(u, c) != lay.block(own).contains(&c)) {
            return Err(format!("row {u} sees blocks {:?}", mask.visible_blocks(u)));
        }
        if !mask.is_visible(u, u) {
            return Err(format!("diagonal masked at {u}"));
        }
    }
    for m in 1..=plan.num_segments() {
        for r in lay.block(m) {
            if (0..cond).any(|c| mask.is_visible(r, c) && !lay.block(m).contains(&c)) {
                return Err(format!("condition row {r} leaks"));
            }
        }
    }
    // incremental consistency with the next step
    let mut next = seg_s.to_vec();
    next.push(active);
    let bigger = build_mask(plan, &next, step + 1, active).map_err(|e| e.to_string())?;
    for u in 0..q {
        if &bigger.row(u)[..q] != mask.row(u) {
            return Err(format!("row {u} changed at step {}", step + 1));
        }
    }
    let row = current_row(plan, seg_s, active).map_err(|e| e.to_string())?;
    if row.as_slice() != mask.row(q - 1) {
        return Err("current_row disagrees with the full mask".into());
    }
    Ok(())
}

/// One predict/select/update step evaluated straight from the filter
/// equations. `att[l][h]` is a normalised slice over positions.
pub struct BruteStep {
    pub prior: Vec<f64>,
    pub head: (usize, usize),
    pub posterior: Vec<f64>,
}

pub fn brute_msa_step(
    posterior: &[f64],
    att: &[Vec<Vec<f64>>],
    p: f64,
    sigma: f64,
    radius: i64,
    floor: f64,
) -> BruteStep {
    let n = posterior.len();
    let prior: Vec<f64> = (0..n)
        .map(|t| {
            let stay = if t + 1 == n {
                posterior[t]
            } else {
                (1.0 - p) * posterior[t]
            };
            let come = if t > 0 { p * posterior[t - 1] } else { 0.0 };
            stay + come
        })
        .collect();
    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    for (l, layer) in att.iter().enumerate() {
        for (h, a) in layer.iter().enumerate() {
            let s: f64 = (0..n).map(|t| prior[t] * a[t].max(floor).ln()).sum();
            if s > best_score {
                best_score = s;
                best = (l, h);
            }
        }
    }
    let a = &att[best.0][best.1];
    let g = |k: i64| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp();
    let evidence: Vec<f64> = (0..n as i64)
        .map(|t| {
            let lo = (t - radius).max(0);
            let hi = (t + radius).min(n as i64 - 1);
            let num: f64 = (lo..=hi).map(|s| g(s - t) * a[s as usize]).sum();
            let den: f64 = (lo..=hi).map(|s| g(s - t)).sum();
            num / den
        })
        .collect();
    let z: f64 = (0..n).map(|t| prior[t] * evidence[t]).sum();
    let post = if z < 1e-12 {
        prior.clone()
    } else {
        (0..n).map(|t| prior[t] * evidence[t] / z).collect()
    };
    BruteStep {
        prior,
        head: (best.0 + 1, best.1 + 1),
        posterior: post,
    }
}

/// Proportional correction with deadband, rounding half away from zero and
/// symmetric clamp.
pub fn correction_oracle(delta_r: f64, k: f64, eps: f64, max: i64) -> i64 {
    if delta_r.abs() <= eps {
        return 0;
    }
    let x = k * delta_r;
    let r = x.signum() * (x.abs() + 0.5).floor();
    (r as i64).max(-max).min(max)
}

/// Final-segment EOS bias from the four anchors.
pub fn eos_oracle(rho: f64) -> f64 {
    let lerp = |x0: f64, y0: f64, x1: f64, y1: f64| y0 + (y1 - y0) * (rho - x0) / (x1 - x0);
    if rho <= 0.5 {
        -5.0
    } else if rho < 0.8 {
        lerp(0.5, -5.0, 0.8, 0.0)
    } else if rho <= 1.1 {
        0.0
    } else if rho < 1.2 {
        lerp(1.1, 0.0, 1.2, 15.0)
    } else {
        15.0
    }
}
