//! Segment-local 2D causal attention mask.
//!
//! The query/key sequence at decode step `i` is laid out as
//! `[C_1 .. C_M, x_1 .. x_T, s_1 .. s_i]`: `M` condition blocks of `L_C`
//! tokens each, then the text, then the semantic tokens generated so far
//! (including the one being produced). All indices here are 0-based rows
//! and columns into that concatenation.
//!
//! The rules are applied in order, later rules overwriting earlier ones:
//!
//! 1. causal visibility over the whole concatenation;
//! 2. every text row sees only the condition block of its own segment;
//! 3. every semantic row sees only the condition block of the segment it
//!    was generated under;
//! 4. every condition row sees only its own condition block.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::plan::SegmentPlan;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("step {step} needs {expected} semantic segment ids, got {got}")]
    SegLength {
        step: usize,
        expected: usize,
        got: usize,
    },
    #[error("segment id {id} at semantic token {token} outside 1..={num_segments}")]
    SegRange {
        token: usize,
        id: usize,
        num_segments: usize,
    },
    #[error("semantic segment ids decrease at token {token}")]
    SegOrder { token: usize },
    #[error("row {row} outside mask of size {size}")]
    OutOfRange { row: usize, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Visible,
    Masked,
}

impl Visibility {
    /// Additive attention bias.
    pub fn bias(self) -> f32 {
        match self {
            Visibility::Visible => 0.0,
            Visibility::Masked => f32::NEG_INFINITY,
        }
    }
}

/// Offsets of the three regions of the concatenated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskLayout {
    pub num_segments: usize,
    pub cond_block_len: usize,
    pub text_len: usize,
    pub semantic_len: usize,
}

impl MaskLayout {
    pub fn cond_len(&self) -> usize {
        self.num_segments * self.cond_block_len
    }

    pub fn text_offset(&self) -> usize {
        self.cond_len()
    }

    pub fn semantic_offset(&self) -> usize {
        self.cond_len() + self.text_len
    }

    pub fn size(&self) -> usize {
        self.semantic_offset() + self.semantic_len
    }

    /// Column range of condition block `m` (1-based).
    pub fn block(&self, m: usize) -> std::ops::Range<usize> {
        (m - 1) * self.cond_block_len..m * self.cond_block_len
    }
}

/// Visibility matrix for one decode step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasMask {
    layout: MaskLayout,
    visible: Vec<bool>,
}

impl BiasMask {
    pub fn layout(&self) -> MaskLayout {
        self.layout
    }

    /// Side length `q = M * L_C + T + i`.
    pub fn size(&self) -> usize {
        self.layout.size()
    }

    pub fn get(&self, row: usize, col: usize) -> Visibility {
        if self.visible[row * self.size() + col] {
            Visibility::Visible
        } else {
            Visibility::Masked
        }
    }

    pub fn is_visible(&self, row: usize, col: usize) -> bool {
        self.visible[row * self.size() + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        let q = self.size();
        &self.visible[row * q..(row + 1) * q]
    }

    /// Additive bias row as consumed by an attention kernel.
    pub fn bias_row(&self, row: usize) -> Vec<f32> {
        self.row(row)
            .iter()
            .map(|&v| if v { 0.0 } else { f32::NEG_INFINITY })
            .collect()
    }

    /// Columns visible from `row`.
    pub fn visible_set(&self, row: usize) -> Result<BTreeSet<usize>, MaskError> {
        if row >= self.size() {
            return Err(MaskError::OutOfRange {
                row,
                size: self.size(),
            });
        }
        Ok(self
            .row(row)
            .iter()
            .enumerate()
            .filter_map(|(c, &v)| v.then_some(c))
            .collect())
    }

    /// Condition blocks visible from `row`, as 1-based segment indices.
    pub fn visible_blocks(&self, row: usize) -> Vec<usize> {
        let l = self.layout;
        (1..=l.num_segments)
            .filter(|&m| l.block(m).any(|c| self.is_visible(row, c)))
            .collect()
    }

    /// Plain-text grid, one line per row: `#` visible, `.` masked.
    pub fn to_text_grid(&self) -> String {
        let q = self.size();
        let mut out = String::with_capacity(q * (q + 1));
        for r in 0..q {
            for &v in self.row(r) {
                out.push(if v { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    /// CSV grid of intensities: 1 visible, 0 masked.
    pub fn to_csv(&self) -> String {
        let q = self.size();
        let mut out = String::with_capacity(2 * q * q);
        for r in 0..q {
            for (c, &v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                out.push(if v { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Number of condition blocks whose rows see exactly their own block and
    /// nothing else in the condition region.
    pub fn isolated_condition_blocks(&self) -> usize {
        let l = self.layout;
        (1..=l.num_segments)
            .filter(|&m| {
                l.block(m).all(|r| {
                    (0..l.cond_len()).all(|c| self.is_visible(r, c) == l.block(m).contains(&c))
                })
            })
            .count()
    }
}

/// Conventional dump file stem, `mask_M{M}_i{i}`.
pub fn dump_stem(mask: &BiasMask) -> String {
    let l = mask.layout();
    format!("mask_M{}_i{}", l.num_segments, l.semantic_len)
}

/// Text grid and CSV renderings of a mask, with a short header on the text
/// grid describing the layout.
pub fn dump_mask(mask: &BiasMask) -> (String, String) {
    let l = mask.layout();
    let mut txt = String::new();
    let _ = writeln!(
        txt,
        "# M={} L_C={} T={} i={} q={}  (# visible, . masked)",
        l.num_segments,
        l.cond_block_len,
        l.text_len,
        l.semantic_len,
        l.size()
    );
    txt.push_str(&mask.to_text_grid());
    (txt, mask.to_csv())
}

fn check_seg_s(
    plan: &SegmentPlan,
    seg_s: &[usize],
    step: usize,
    active: usize,
) -> Result<(), MaskError> {
    if step == 0 || seg_s.len() + 1 != step {
        return Err(MaskError::SegLength {
            step,
            expected: step.saturating_sub(1),
            got: seg_s.len(),
        });
    }
    let m = plan.num_segments();
    let mut prev = 1;
    for (idx, &id) in seg_s.iter().chain(std::iter::once(&active)).enumerate() {
        if id < 1 || id > m {
            return Err(MaskError::SegRange {
                token: idx + 1,
                id,
                num_segments: m,
            });
        }
        if id < prev {
            return Err(MaskError::SegOrder { token: idx + 1 });
        }
        prev = id;
    }
    Ok(())
}

/// Builds the step-`step` mask.
///
/// `seg_s` holds the segment ids of the `step - 1` semantic tokens already
/// generated; `active` is the segment the current token is generated under
/// and governs the last semantic row. Ids must be nondecreasing.
pub fn build_mask(
    plan: &SegmentPlan,
    seg_s: &[usize],
    step: usize,
    active: usize,
) -> Result<BiasMask, MaskError> {
    check_seg_s(plan, seg_s, step, active)?;
    let layout = MaskLayout {
        num_segments: plan.num_segments(),
        cond_block_len: plan.cond_block_len(),
        text_len: plan.text_len(),
        semantic_len: step,
    };
    let q = layout.size();
    let cond = layout.cond_len();
    let mut visible = vec![false; q * q];

    // 1.1 causal
    for u in 0..q {
        visible[u * q..=u * q + u].fill(true);
    }

    let reopen = |row: usize, m: usize, visible: &mut Vec<bool>| {
        visible[row * q..row * q + cond].fill(false);
        let b = layout.block(m);
        visible[row * q + b.start..row * q + b.end].fill(true);
    };

    // 1.2 text -> own segment's condition block
    let toff = layout.text_offset();
    for t in 1..=plan.text_len() {
        let m = plan.segment_of_text(t).expect("position in range");
        reopen(toff + t - 1, m, &mut visible);
    }

    // 1.3 semantic -> condition block of its segment
    let soff = layout.semantic_offset();
    for (r, &m) in seg_s.iter().chain(std::iter::once(&active)).enumerate() {
        reopen(soff + r, m, &mut visible);
    }

    // 1.4 condition -> own block only
    for m in 1..=layout.num_segments {
        for row in layout.block(m) {
            reopen(row, m, &mut visible);
        }
    }

    Ok(BiasMask { layout, visible })
}

/// Visibility row of the current (last) semantic token at step
/// `seg_s.len() + 1`, computed without materialising the whole mask. Equals
/// the last row of [`build_mask`].
pub fn current_row(
    plan: &SegmentPlan,
    seg_s: &[usize],
    active: usize,
) -> Result<Vec<bool>, MaskError> {
    let step = seg_s.len() + 1;
    check_seg_s(plan, seg_s, step, active)?;
    let q = plan.cond_region_len() + plan.text_len() + step;
    let mut row = vec![true; q];
    let l = plan.cond_block_len();
    for (c, v) in row[..plan.cond_region_len()].iter_mut().enumerate() {
        *v = c / l + 1 == active;
    }
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::build_plan;

    #[test]
    fn single_segment_is_plain_causal() {
        let plan = build_plan(2, &[], 1, None).unwrap();
        let mask = build_mask(&plan, &[], 1, 1).unwrap();
        assert_eq!(mask.size(), 4);
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(mask.is_visible(u, v), v <= u, "({u},{v})");
            }
        }
    }

    #[test]
    fn text_row_sees_only_own_condition() {
        let plan = build_plan(4, &[2], 1, None).unwrap();
        let mask = build_mask(&plan, &[1], 2, 1).unwrap();
        assert_eq!(mask.size(), 8);
        // text position 3 sits at row M*L_C + 2
        let row = 2 + 2;
        assert_eq!(mask.get(row, 0), Visibility::Masked);
        assert_eq!(mask.get(row, 1), Visibility::Visible);
    }

    #[test]
    fn condition_blocks_are_isolated() {
        let plan = build_plan(9, &[3, 6], 2, None).unwrap();
        let mask = build_mask(&plan, &[1, 1, 2], 4, 2).unwrap();
        for row in 2..4 {
            let vis = mask.visible_set(row).unwrap();
            assert_eq!(vis, BTreeSet::from([2, 3]));
        }
        assert_eq!(mask.isolated_condition_blocks(), 3);
    }

    #[test]
    fn visible_set_examples() {
        let plan = build_plan(3, &[1], 1, None).unwrap();
        let mask = build_mask(&plan, &[], 1, 1).unwrap();
        assert_eq!(mask.visible_set(0).unwrap(), BTreeSet::from([0]));

        let plan = build_plan(3, &[], 1, None).unwrap();
        let mask = build_mask(&plan, &[], 1, 1).unwrap();
        assert_eq!(mask.visible_set(1).unwrap(), BTreeSet::from([0, 1]));
        assert!(mask.visible_set(mask.size()).is_err());
    }

    #[test]
    fn last_semantic_row_toy_instance() {
        // M=3, L_C=1, T=6, b=[2,4]; tokens 1..3 under segments 1,2,2, token 4 under 3.
        // q = 3 + 6 + 4 = 13. The last row (12) sees its causal prefix minus
        // condition columns 0 and 1, i.e. {2} ∪ {3..=12}.
        let plan = build_plan(6, &[2, 4], 1, None).unwrap();
        let mask = build_mask(&plan, &[1, 2, 2], 4, 3).unwrap();
        let expected: BTreeSet<usize> = std::iter::once(2).chain(3..=12).collect();
        assert_eq!(mask.visible_set(12).unwrap(), expected);
        // token 2 (row 10) was generated under segment 2
        let expected: BTreeSet<usize> = std::iter::once(1).chain(3..=10).collect();
        assert_eq!(mask.visible_set(10).unwrap(), expected);
    }

    #[test]
    fn rejects_inconsistent_segment_ids() {
        let plan = build_plan(6, &[2, 4], 1, None).unwrap();
        assert!(matches!(
            build_mask(&plan, &[1], 3, 1),
            Err(MaskError::SegLength { .. })
        ));
        assert!(matches!(
            build_mask(&plan, &[1, 4], 3, 3),
            Err(MaskError::SegRange { .. })
        ));
        assert!(matches!(
            build_mask(&plan, &[2, 1], 3, 2),
            Err(MaskError::SegOrder { .. })
        ));
        assert!(matches!(
            build_mask(&plan, &[1, 2], 3, 1),
            Err(MaskError::SegOrder { .. })
        ));
    }

    #[test]
    fn dumps_have_expected_shape() {
        let plan = build_plan(8, &[2, 4, 6], 2, None).unwrap();
        let mask = build_mask(&plan, &[1, 1], 3, 2).unwrap();
        let (txt, csv) = dump_mask(&mask);
        let q = mask.size();
        assert_eq!(txt.lines().count(), q + 1);
        assert_eq!(csv.lines().count(), q);
        assert!(csv.lines().all(|l| l.split(',').count() == q));
        assert_eq!(dump_stem(&mask), "mask_M4_i3");
        assert_eq!(mask.bias_row(0)[2], f32::NEG_INFINITY);
    }
}
