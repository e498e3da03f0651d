//! Semantic scene completion (SSC) and semantic segmentation (SG) metrics.
//!
//! Surface voxels are those with a known |tsdf| < voxel_size — the same
//! band the renderer's view selection uses. SSC evaluates predicted labels
//! on ground-truth surface voxels (missing predictions count as wrong) and
//! reports geometric IoU/recall between surface sets; SG fixes geometry and
//! evaluates labels on the input's surface voxels only.

use crate::error::SemvoxError;
use crate::grid::VoxelGrid;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Ssc,
    SgRaw,
    SgComp,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Ssc => write!(f, "ssc"),
            Protocol::SgRaw => write!(f, "sg_raw"),
            Protocol::SgComp => write!(f, "sg_comp"),
        }
    }
}

/// Per-class and aggregate metrics. Classes absent from both prediction and
/// ground truth (within the evaluated voxel set) carry None and are
/// excluded from the macro means.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_acc: Vec<Option<f64>>,
    /// Macro mean IoU over present classes.
    pub m_iou: f64,
    /// Macro mean per-class accuracy (recall) over classes with GT voxels.
    pub m_acc: f64,
    /// Micro accuracy: correct / evaluated.
    pub acc_micro: f64,
    pub geo_iou: f64,
    pub geo_recall: f64,
    /// Number of voxels semantics were evaluated on (the normalizer).
    pub n_eval_voxels: usize,
    pub n_pred_surface: usize,
    pub n_gt_surface: usize,
}

fn check_aligned(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.spec.dims != b.spec.dims {
        return Err(SemvoxError::GridMismatch(format!(
            "dims {:?} vs {:?}",
            a.spec.dims, b.spec.dims
        )));
    }
    if a.n_sem() != b.n_sem() {
        return Err(SemvoxError::GridMismatch(format!(
            "n_sem {} vs {}",
            a.n_sem(),
            b.n_sem()
        )));
    }
    Ok(())
}

/// Sentinel confusion column for "no prediction at this voxel".
const MISSING: usize = usize::MAX;

struct Confusion {
    n: usize,
    /// counts[gt][pred]; the extra last column collects missing preds.
    counts: Vec<u64>,
}

impl Confusion {
    fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * (n + 1)] }
    }

    fn add(&mut self, gt: usize, pred: usize) {
        let col = if pred == MISSING { self.n } else { pred };
        self.counts[gt * (self.n + 1) + col] += 1;
    }

    fn gt_total(&self, c: usize) -> u64 {
        self.counts[c * (self.n + 1)..(c + 1) * (self.n + 1)].iter().sum()
    }

    fn pred_total(&self, c: usize) -> u64 {
        (0..self.n).map(|g| self.counts[g * (self.n + 1) + c]).sum()
    }

    fn tp(&self, c: usize) -> u64 {
        self.counts[c * (self.n + 1) + c]
    }

    fn report(&self, protocol: Protocol, geo: (f64, f64, usize, usize)) -> EvalReport {
        let n = self.n;
        let mut per_class_iou = vec![None; n];
        let mut per_class_acc = vec![None; n];
        let mut iou_sum = 0.0;
        let mut iou_cnt = 0usize;
        let mut acc_sum = 0.0;
        let mut acc_cnt = 0usize;
        let mut correct = 0u64;
        let mut total = 0u64;
        for c in 0..n {
            let tp = self.tp(c);
            let gt = self.gt_total(c);
            let pred = self.pred_total(c);
            total += gt;
            correct += tp;
            if gt == 0 && pred == 0 {
                continue;
            }
            let union = gt + pred - tp;
            let iou = if union > 0 { tp as f64 / union as f64 } else { 0.0 };
            per_class_iou[c] = Some(iou);
            iou_sum += iou;
            iou_cnt += 1;
            if gt > 0 {
                let acc = tp as f64 / gt as f64;
                per_class_acc[c] = Some(acc);
                acc_sum += acc;
                acc_cnt += 1;
            }
        }
        EvalReport {
            protocol,
            per_class_iou,
            per_class_acc,
            m_iou: if iou_cnt > 0 { iou_sum / iou_cnt as f64 } else { 0.0 },
            m_acc: if acc_cnt > 0 { acc_sum / acc_cnt as f64 } else { 0.0 },
            acc_micro: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            geo_iou: geo.0,
            geo_recall: geo.1,
            n_eval_voxels: total as usize,
            n_pred_surface: geo.2,
            n_gt_surface: geo.3,
        }
    }
}

/// Semantic scene completion: semantics over GT surface voxels with the
/// prediction's argmax labels (unknown prediction voxels count as wrong);
/// geometry compared between the two surface-voxel sets.
pub fn eval_ssc(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<EvalReport> {
    check_aligned(pred, gt)?;
    let dims = gt.spec.dims;
    let band = gt.spec.voxel_size;
    let n = gt.n_sem();
    let mut conf = Confusion::new(n);
    let mut n_pred = 0usize;
    let mut n_gt = 0usize;
    let mut n_both = 0usize;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let in_pred = pred.surface_voxel(x, y, z, band);
                let in_gt = gt.surface_voxel(x, y, z, band);
                n_pred += in_pred as usize;
                n_gt += in_gt as usize;
                n_both += (in_pred && in_gt) as usize;
                if in_gt && n > 0 {
                    let g = gt.label_at(x, y, z) as usize;
                    if pred.is_known(x, y, z) {
                        conf.add(g, pred.label_at(x, y, z) as usize);
                    } else {
                        conf.add(g, MISSING);
                    }
                }
            }
        }
    }
    let union = n_pred + n_gt - n_both;
    let geo_iou = if union > 0 { n_both as f64 / union as f64 } else { 1.0 };
    let geo_recall = if n_gt > 0 { n_both as f64 / n_gt as f64 } else { 1.0 };
    Ok(conf.report(Protocol::Ssc, (geo_iou, geo_recall, n_pred, n_gt)))
}

/// Semantic segmentation with fixed geometry: labels evaluated on the
/// input's surface voxels against the input's own (ground-truth) labels.
/// `raw` passes the partial scan as input, `comp` the complete one; the
/// formula is identical, so identical inputs yield identical reports.
/// Geometry metrics are reported as 1.0 since geometry is not predicted.
pub fn eval_sg(pred: &VoxelGrid, input: &VoxelGrid, protocol: Protocol) -> Result<EvalReport> {
    check_aligned(pred, input)?;
    let dims = input.spec.dims;
    let band = input.spec.voxel_size;
    let n = input.n_sem();
    let mut conf = Confusion::new(n);
    let mut n_eval = 0usize;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if !input.surface_voxel(x, y, z, band) {
                    continue;
                }
                n_eval += 1;
                if n == 0 {
                    continue;
                }
                let g = input.label_at(x, y, z) as usize;
                if pred.is_known(x, y, z) {
                    conf.add(g, pred.label_at(x, y, z) as usize);
                } else {
                    conf.add(g, MISSING);
                }
            }
        }
    }
    Ok(conf.report(protocol, (1.0, 1.0, n_eval, n_eval)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labeled_grid(dims: [usize; 3], n_sem: usize, f: impl Fn(usize) -> Option<(f64, u16)>) -> VoxelGrid {
        let spec = GridSpec::with_default_truncation([0.0; 3], 0.02, dims).unwrap();
        let mut g = VoxelGrid::new(spec, n_sem);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let i = g.spec.index(x, y, z);
                    if let Some((d, label)) = f(i) {
                        g.set_voxel(x, y, z, d, 1.0, [0.0; 3]);
                        let mut logits = vec![0.0; n_sem];
                        logits[label as usize] = 1.0;
                        g.set_logits(x, y, z, &logits);
                    }
                }
            }
        }
        g
    }

    #[test]
    fn identical_grids_score_one() {
        let g = labeled_grid([6, 6, 6], 3, |i| Some((0.01 * ((i % 5) as f64 - 2.0), (i % 3) as u16)));
        let r = eval_ssc(&g, &g).unwrap();
        assert_eq!(r.m_iou, 1.0);
        assert_eq!(r.m_acc, 1.0);
        assert_eq!(r.geo_iou, 1.0);
        assert_eq!(r.geo_recall, 1.0);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gt = labeled_grid([4, 4, 4], 2, |i| Some((0.005, (i % 2) as u16)));
        let pred = labeled_grid([4, 4, 4], 2, |_| None);
        let r = eval_ssc(&pred, &gt).unwrap();
        assert_eq!(r.geo_recall, 0.0);
        assert_eq!(r.m_acc, 0.0);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = labeled_grid([4, 4, 4], 2, |_| None);
        let b = labeled_grid([4, 4, 5], 2, |_| None);
        match eval_ssc(&a, &b) {
            Err(SemvoxError::GridMismatch(_)) => {}
            other => panic!("expected GridMismatch, got {other:?}"),
        }
    }

    #[test]
    fn balanced_two_class_mislabeling() {
        // Two balanced classes on the surface; class 0 entirely predicted
        // as class 1: IoU_0 = 0, IoU_1 = 1/2, m_iou = 0.25.
        let n = 16;
        let gt = labeled_grid([n, 1, 1], 2, |i| Some((0.001, (i % 2) as u16)));
        let pred = labeled_grid([n, 1, 1], 2, |_| Some((0.001, 1)));
        let r = eval_ssc(&pred, &gt).unwrap();
        assert_eq!(r.per_class_iou[0], Some(0.0));
        assert_eq!(r.per_class_iou[1], Some(0.5));
        assert!((r.m_iou - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sg_raw_and_comp_agree_on_same_input() {
        let input = labeled_grid([5, 5, 5], 3, |i| Some((0.004, (i % 3) as u16)));
        let pred = labeled_grid([5, 5, 5], 3, |i| Some((0.004, ((i + 1) % 3) as u16)));
        let raw = eval_sg(&pred, &input, Protocol::SgRaw).unwrap();
        let comp = eval_sg(&pred, &input, Protocol::SgComp).unwrap();
        assert_eq!(raw.m_iou, comp.m_iou);
        assert_eq!(raw.acc_micro, comp.acc_micro);
        assert_eq!(raw.geo_iou, 1.0);
    }

    #[test]
    fn perfect_sg_labels() {
        let input = labeled_grid([5, 5, 5], 3, |i| Some((0.004, (i % 3) as u16)));
        let r = eval_sg(&input, &input, Protocol::SgComp).unwrap();
        assert_eq!(r.m_iou, 1.0);
    }

    #[test]
    fn geo_recall_dominates_geo_iou() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let gt = labeled_grid([8, 8, 8], 2, |i| {
                Some((if (i * 7 + trial) % 3 == 0 { 0.005 } else { 0.05 }, (i % 2) as u16))
            });
            let pred = labeled_grid([8, 8, 8], 2, |i| {
                if (i + trial) % 4 == 0 {
                    None
                } else {
                    Some((if rng_hash(i, trial) { 0.005 } else { 0.05 }, (i % 2) as u16))
                }
            });
            let _ = &mut rng;
            let r = eval_ssc(&pred, &gt).unwrap();
            assert!(r.geo_recall >= r.geo_iou - 1e-15);
        }
    }

    fn rng_hash(i: usize, t: usize) -> bool {
        (i.wrapping_mul(2654435761) ^ t.wrapping_mul(40503)) % 5 < 2
    }

    #[test]
    fn class_relabeling_invariance() {
        // Swapping two class ids consistently in pred and gt permutes the
        // per-class arrays but leaves the means unchanged.
        let gt = labeled_grid([6, 6, 6], 3, |i| Some((0.003, (i % 3) as u16)));
        let pred = labeled_grid([6, 6, 6], 3, |i| Some((0.003, ((i / 2) % 3) as u16)));
        let swap = |g: &VoxelGrid| {
            let dims = g.spec.dims;
            let mut out = VoxelGrid::new(g.spec.clone(), 3);
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        if let Some(d) = g.tsdf_at(x, y, z) {
                            out.set_voxel(x, y, z, d, 1.0, [0.0; 3]);
                            let l = g.label_at(x, y, z);
                            let l2 = match l {
                                0 => 1,
                                1 => 0,
                                other => other,
                            };
                            let mut logits = vec![0.0; 3];
                            logits[l2 as usize] = 1.0;
                            out.set_logits(x, y, z, &logits);
                        }
                    }
                }
            }
            out
        };
        let a = eval_ssc(&pred, &gt).unwrap();
        let b = eval_ssc(&swap(&pred), &swap(&gt)).unwrap();
        assert!((a.m_iou - b.m_iou).abs() < 1e-15);
        assert!((a.m_acc - b.m_acc).abs() < 1e-15);
        assert_eq!(a.per_class_iou[0], b.per_class_iou[1]);
    }

    /// Brute-force oracle: recompute everything from scratch with sets.
    fn brute_force_ssc(pred: &VoxelGrid, gt: &VoxelGrid) -> (f64, f64, f64, f64, f64) {
        let dims = gt.spec.dims;
        let band = gt.spec.voxel_size;
        let n = gt.n_sem();
        let mut pred_set = vec![];
        let mut gt_set = vec![];
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if pred.surface_voxel(x, y, z, band) {
                        pred_set.push((x, y, z));
                    }
                    if gt.surface_voxel(x, y, z, band) {
                        gt_set.push((x, y, z));
                    }
                }
            }
        }
        let inter = gt_set.iter().filter(|v| pred_set.contains(v)).count();
        let union = pred_set.len() + gt_set.len() - inter;
        let geo_iou = if union > 0 { inter as f64 / union as f64 } else { 1.0 };
        let geo_recall = if !gt_set.is_empty() { inter as f64 / gt_set.len() as f64 } else { 1.0 };

        // usize::MAX tags missing predictions.
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for &(x, y, z) in &gt_set {
            let g = gt.label_at(x, y, z) as usize;
            let p = if pred.is_known(x, y, z) { pred.label_at(x, y, z) as usize } else { usize::MAX };
            pairs.push((g, p));
        }
        let mut iou_sum = 0.0;
        let mut iou_cnt = 0;
        let mut acc_sum = 0.0;
        let mut acc_cnt = 0;
        let mut correct = 0;
        for c in 0..n {
            let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count();
            let gt_c = pairs.iter().filter(|&&(g, _)| g == c).count();
            let pred_c = pairs.iter().filter(|&&(_, p)| p == c).count();
            correct += tp;
            if gt_c == 0 && pred_c == 0 {
                continue;
            }
            let union_c = gt_c + pred_c - tp;
            iou_sum += if union_c > 0 { tp as f64 / union_c as f64 } else { 0.0 };
            iou_cnt += 1;
            if gt_c > 0 {
                acc_sum += tp as f64 / gt_c as f64;
                acc_cnt += 1;
            }
        }
        (
            if iou_cnt > 0 { iou_sum / iou_cnt as f64 } else { 0.0 },
            if acc_cnt > 0 { acc_sum / acc_cnt as f64 } else { 0.0 },
            if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 },
            geo_iou,
            geo_recall,
        )
    }

    #[test]
    fn random_fixtures_match_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let n_sem = rng.random_range(2..5usize);
            let mk = |rng: &mut ChaCha8Rng| {
                let vals: Vec<Option<(f64, u16)>> = (0..16 * 16 * 16)
                    .map(|_| {
                        if rng.random_bool(0.8) {
                            Some((rng.random_range(-0.05..0.05), rng.random_range(0..n_sem as u16)))
                        } else {
                            None
                        }
                    })
                    .collect();
                labeled_grid([16, 16, 16], n_sem, move |i| vals[i])
            };
            let pred = mk(&mut rng);
            let gt = mk(&mut rng);
            let r = eval_ssc(&pred, &gt).unwrap();
            let (m_iou, m_acc, micro, geo_iou, geo_recall) = brute_force_ssc(&pred, &gt);
            assert!((r.m_iou - m_iou).abs() < 1e-12);
            assert!((r.m_acc - m_acc).abs() < 1e-12);
            assert!((r.acc_micro - micro).abs() < 1e-12);
            assert!((r.geo_iou - geo_iou).abs() < 1e-12);
            assert!((r.geo_recall - geo_recall).abs() < 1e-12);
        }
    }
}
