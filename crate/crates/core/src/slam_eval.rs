//! Odometry evaluation: association with gap filling, segment
//! concatenation, similarity alignment and per-frame relative errors.

use std::fmt::Write as _;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::geomio::{GeomIoError, Pose, PoseSeq};

/// Timestamp matching tolerance in seconds.
pub const TIME_TOL: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum SlamEvalError {
    #[error("estimate shares no timestamps with the ground truth")]
    EmptyOverlap,
    #[error("segments overlap or are out of order at t={0}")]
    Overlap(f64),
    #[error("empty segment {0}")]
    EmptySegment(usize),
    #[error("no ground-truth pose at t={0}")]
    MissingGroundTruth(f64),
    #[error("sequences differ in length ({gt} vs {est})")]
    LengthMismatch { gt: usize, est: usize },
    #[error("timestamps differ at index {index}: {gt} vs {est}")]
    TimestampMismatch { index: usize, gt: f64, est: f64 },
    #[error("need at least {need} poses, got {got}")]
    TooFewPoses { need: usize, got: usize },
    #[error("positions are collinear; similarity is not unique")]
    Degenerate,
    #[error(transparent)]
    Pose(#[from] GeomIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    /// Mean relative translation error, meters per frame.
    pub t_rel: f64,
    /// Mean relative rotation error, degrees per frame.
    pub r_rel: f64,
    pub frames_evaluated: usize,
    pub frames_interpolated: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SlamEvalConfig {
    /// Longest run of missing frames that is interpolated rather than split.
    pub max_gap: usize,
    pub scale_align: bool,
}

impl Default for SlamEvalConfig {
    fn default() -> Self {
        Self { max_gap: 10, scale_align: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    /// Tracked segments on ground-truth timestamps, gaps filled.
    pub segments: Vec<PoseSeq>,
    pub interpolated: usize,
    /// Estimate entries that matched no ground-truth timestamp.
    pub unmatched: usize,
}

fn nearest_index(gt: &[Pose], t: f64) -> Option<usize> {
    let k = gt.partition_point(|p| p.t < t);
    [k.checked_sub(1), Some(k)]
        .into_iter()
        .flatten()
        .filter(|&i| i < gt.len() && (gt[i].t - t).abs() <= TIME_TOL)
        .min_by(|&a, &b| (gt[a].t - t).abs().total_cmp(&(gt[b].t - t).abs()))
}

fn interpolate(a: &Pose, b: &Pose, t: f64) -> Pose {
    let f = (t - a.t) / (b.t - a.t);
    Pose::new(t, a.translation.lerp(&b.translation, f), a.rotation.slerp(&b.rotation, f))
}

/// Put `est` on the ground-truth clock. Runs of at most `max_gap` missing
/// frames between two present estimates are interpolated; longer runs split
/// the estimate into separate segments.
pub fn associate_and_fill(gt: &PoseSeq, est: &PoseSeq, max_gap: usize) -> Result<Association, SlamEvalError> {
    let g = gt.entries();
    let mut slots: Vec<Option<Pose>> = vec![None; g.len()];
    let mut unmatched = 0;
    for p in est.entries() {
        match nearest_index(g, p.t) {
            Some(i) => slots[i] = Some(Pose { t: g[i].t, ..*p }),
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        log::warn!("{unmatched} estimate poses have no ground-truth timestamp within {TIME_TOL} s");
    }
    let present: Vec<usize> = (0..g.len()).filter(|&i| slots[i].is_some()).collect();
    if present.is_empty() {
        return Err(SlamEvalError::EmptyOverlap);
    }
    let mut segments = Vec::new();
    let mut current = vec![slots[present[0]].unwrap()];
    let mut interpolated = 0;
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (slots[a].unwrap(), slots[b].unwrap());
        let gap = b - a - 1;
        if gap > max_gap {
            segments.push(PoseSeq::new(std::mem::take(&mut current))?);
        } else {
            for entry in &g[a + 1..b] {
                current.push(interpolate(&pa, &pb, entry.t));
            }
            interpolated += gap;
        }
        current.push(pb);
    }
    segments.push(PoseSeq::new(current)?);
    Ok(Association { segments, interpolated, unmatched })
}

fn gt_pose_at(gt: &PoseSeq, t: f64) -> Result<&Pose, SlamEvalError> {
    nearest_index(gt.entries(), t).map(|i| &gt.entries()[i]).ok_or(SlamEvalError::MissingGroundTruth(t))
}

/// Join segments into one sequence. Every segment after the first is moved
/// rigidly so that its first pose coincides with the ground truth.
pub fn concat_segments(segments: &[PoseSeq], gt: &PoseSeq) -> Result<PoseSeq, SlamEvalError> {
    let mut out: Vec<Pose> = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        let e = seg.entries();
        let first = e.first().ok_or(SlamEvalError::EmptySegment(k))?;
        if let Some(prev) = out.last() {
            if first.t <= prev.t {
                return Err(SlamEvalError::Overlap(first.t));
            }
        }
        if k == 0 {
            out.extend_from_slice(e);
            continue;
        }
        let anchor = gt_pose_at(gt, first.t)?.isometry() * first.isometry().inverse();
        out.extend(e.iter().map(|p| Pose::from_isometry(p.t, &(anchor * p.isometry()))));
    }
    Ok(PoseSeq::new(out)?)
}

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, p: &Pose) -> Pose {
        Pose::new(p.t, self.scale * (self.rotation * p.translation) + self.translation, self.rotation * p.rotation)
    }

    pub fn apply_seq(&self, seq: &PoseSeq) -> PoseSeq {
        PoseSeq::new(seq.entries().iter().map(|p| self.apply(p)).collect()).expect("timestamps unchanged")
    }
}

/// Closed-form least-squares similarity taking `src` positions onto `dst`
/// (Umeyama). With `with_scale == false` the scale is fixed at 1.
pub fn fit_similarity(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Result<Similarity, SlamEvalError> {
    let n = src.len();
    if n != dst.len() {
        return Err(SlamEvalError::LengthMismatch { gt: dst.len(), est: n });
    }
    if n < 3 {
        return Err(SlamEvalError::TooFewPoses { need: 3, got: n });
    }
    let mean = |v: &[Vector3<f64>]| v.iter().sum::<Vector3<f64>>() / n as f64;
    let (mx, my) = (mean(src), mean(dst));
    let mut cov = Matrix3::zeros();
    let mut cxx = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in src.iter().zip(dst) {
        let (dx, dy) = (x - mx, y - my);
        cov += dy * dx.transpose();
        cxx += dx * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n as f64;
    var_x /= n as f64;
    let mut ev = cxx.symmetric_eigenvalues();
    ev.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(ev[1] > 1e-12 * ev[0].max(f64::MIN_POSITIVE)) {
        return Err(SlamEvalError::Degenerate);
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    let scale = if with_scale { (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_x } else { 1.0 };
    let rotation = UnitQuaternion::from_matrix(&r);
    Ok(Similarity { scale, rotation, translation: my - scale * (rotation * mx) })
}

/// Fit on matched positions and apply to `est`. Sequences must share timestamps.
pub fn similarity_align(est: &PoseSeq, gt: &PoseSeq) -> Result<(PoseSeq, Similarity), SlamEvalError> {
    check_matched(gt, est, 3)?;
    let src: Vec<_> = est.entries().iter().map(|p| p.translation).collect();
    let dst: Vec<_> = gt.entries().iter().map(|p| p.translation).collect();
    let sim = fit_similarity(&src, &dst, true)?;
    Ok((sim.apply_seq(est), sim))
}

fn check_matched(gt: &PoseSeq, est: &PoseSeq, need: usize) -> Result<(), SlamEvalError> {
    if gt.len() != est.len() {
        return Err(SlamEvalError::LengthMismatch { gt: gt.len(), est: est.len() });
    }
    if gt.len() < need {
        return Err(SlamEvalError::TooFewPoses { need, got: gt.len() });
    }
    for (index, (a, b)) in gt.entries().iter().zip(est.entries()).enumerate() {
        if (a.t - b.t).abs() > TIME_TOL {
            return Err(SlamEvalError::TimestampMismatch { index, gt: a.t, est: b.t });
        }
    }
    Ok(())
}

/// Geodesic angle of a unit quaternion, radians.
pub fn rotation_angle(q: &UnitQuaternion<f64>) -> f64 {
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Angle of `a^-1 b`, evaluated so that identical inputs give exactly zero.
fn angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (va, vb) = (a.imag(), b.imag());
    let v = va.cross(&vb);
    let imag = Vector3::new(
        a.w * vb.x - b.w * va.x - v.x,
        a.w * vb.y - b.w * va.y - v.y,
        a.w * vb.z - b.w * va.z - v.z,
    );
    let w = a.w * b.w + va.dot(&vb);
    2.0 * imag.norm().atan2(w.abs())
}

/// Relative pose `(R_a^-1 R_b, R_a^-1 (p_b - p_a))`.
fn delta(a: &Pose, b: &Pose) -> (UnitQuaternion<f64>, Vector3<f64>) {
    let inv = a.rotation.inverse();
    (inv * b.rotation, inv * (b.translation - a.translation))
}

/// Mean error of consecutive relative poses. `E = dP_gt^-1 dP_est`;
/// translation error is `|t(E)|`, rotation error the angle of `R(E)` in degrees.
pub fn relative_errors(gt: &PoseSeq, est: &PoseSeq) -> Result<EvalReport, SlamEvalError> {
    check_matched(gt, est, 2)?;
    let (g, e) = (gt.entries(), est.entries());
    let pairs = g.len() - 1;
    let (mut t_sum, mut r_sum) = (0.0, 0.0);
    for i in 0..pairs {
        let (rg, tg) = delta(&g[i], &g[i + 1]);
        let (re, te) = delta(&e[i], &e[i + 1]);
        t_sum += (rg.inverse() * (te - tg)).norm();
        r_sum += angle_between(&rg, &re).to_degrees();
    }
    Ok(EvalReport {
        t_rel: t_sum / pairs as f64,
        r_rel: r_sum / pairs as f64,
        frames_evaluated: pairs,
        frames_interpolated: 0,
        segments: 1,
    })
}

/// Associate, optionally scale-align, concatenate and score an estimate.
/// Returns the report and the concatenated estimate.
pub fn evaluate(gt: &PoseSeq, est: &PoseSeq, cfg: &SlamEvalConfig) -> Result<(EvalReport, PoseSeq), SlamEvalError> {
    let assoc = associate_and_fill(gt, est, cfg.max_gap)?;
    let mut segments = assoc.segments;
    if cfg.scale_align {
        let all: Vec<Pose> = segments.iter().flat_map(|s| s.entries().iter().copied()).collect();
        let src: Vec<_> = all.iter().map(|p| p.translation).collect();
        let dst: Vec<_> = all.iter().map(|p| gt_pose_at(gt, p.t).map(|q| q.translation)).collect::<Result<_, _>>()?;
        let sim = fit_similarity(&src, &dst, true)?;
        log::info!("similarity alignment scale {:.6}", sim.scale);
        segments = segments.iter().map(|s| sim.apply_seq(s)).collect();
    }
    let joined = concat_segments(&segments, gt)?;
    let gt_sub = PoseSeq::new(joined.entries().iter().map(|p| gt_pose_at(gt, p.t).copied()).collect::<Result<_, _>>()?)?;
    let mut report = relative_errors(&gt_sub, &joined)?;
    report.frames_interpolated = assoc.interpolated;
    report.segments = segments.len();
    Ok((report, joined))
}

pub fn format_report_table(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:>14}", "metric", "value");
    let _ = writeln!(out, "{:<22}{:>14.6}", "t_rel [m/frame]", r.t_rel);
    let _ = writeln!(out, "{:<22}{:>14.6}", "r_rel [deg/frame]", r.r_rel);
    let _ = writeln!(out, "{:<22}{:>14}", "frames_evaluated", r.frames_evaluated);
    let _ = writeln!(out, "{:<22}{:>14}", "frames_interpolated", r.frames_interpolated);
    let _ = writeln!(out, "{:<22}{:>14}", "segments", r.segments);
    out
}

/// `key=value` lines with full precision.
pub fn format_report_kv(r: &EvalReport) -> String {
    format!(
        "t_rel={}\nr_rel={}\nframes_evaluated={}\nframes_interpolated={}\nsegments={}\n",
        r.t_rel, r.r_rel, r.frames_evaluated, r.frames_interpolated, r.segments
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn seq(poses: Vec<Pose>) -> PoseSeq {
        PoseSeq::new(poses).unwrap()
    }

    fn line(n: usize, step: f64) -> PoseSeq {
        seq((0..n).map(|k| Pose::new(k as f64 * 0.1, Vector3::new(k as f64 * step, 0.0, 0.0), UnitQuaternion::identity())).collect())
    }

    #[test]
    fn complete_estimate_is_unchanged() {
        let gt = line(5, 1.0);
        let a = associate_and_fill(&gt, &gt, 10).unwrap();
        assert_eq!(a.segments, vec![gt]);
        assert_eq!(a.interpolated, 0);
    }

    #[test]
    fn fills_midpoint_translation_and_rotation() {
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let gt = seq((0..3).map(|k| Pose::identity(k as f64)).collect());
        let est = seq(vec![Pose::identity(0.0), Pose::new(2.0, Vector3::new(2.0, 0.0, 0.0), yaw)]);
        let a = associate_and_fill(&gt, &est, 10).unwrap();
        let mid = a.segments[0].entries()[1];
        assert_eq!(a.interpolated, 1);
        assert!((mid.translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((rotation_angle(&mid.rotation) - FRAC_PI_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn long_gap_splits() {
        let gt = line(20, 1.0);
        let keep: Vec<Pose> = gt.entries().iter().enumerate().filter(|(k, _)| !(3..15).contains(k)).map(|(_, p)| *p).collect();
        let a = associate_and_fill(&gt, &seq(keep), 10).unwrap();
        assert_eq!(a.segments.len(), 2);
        let other = seq(vec![Pose::identity(100.0)]);
        assert!(matches!(associate_and_fill(&gt, &other, 10), Err(SlamEvalError::EmptyOverlap)));
    }

    #[test]
    fn relative_error_cases() {
        let gt = line(6, 1.0);
        let r = relative_errors(&gt, &gt).unwrap();
        assert_eq!((r.t_rel, r.r_rel), (0.0, 0.0));
        let r = relative_errors(&gt, &line(6, 1.1)).unwrap();
        assert!((r.t_rel - 0.1).abs() < 1e-12 && r.r_rel == 0.0);
        assert_eq!(r.frames_evaluated, 5);
        assert!(relative_errors(&line(1, 1.0), &line(1, 1.0)).is_err());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let gt = line(6, 1.0);
        let s = seq(gt.entries()[..3].to_vec());
        assert!(matches!(concat_segments(&[s.clone(), s], &gt), Err(SlamEvalError::Overlap(_))));
    }

    #[test]
    fn scale_recovered_and_collinear_rejected() {
        let pts = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0), Vector3::new(0.0, 0.0, 3.0)];
        let est: Vec<_> = pts.iter().map(|p| 2.0 * p).collect();
        let sim = fit_similarity(&est, &pts, true).unwrap();
        assert!((sim.scale - 0.5).abs() < 1e-12);
        assert!(rotation_angle(&sim.rotation) < 1e-9);
        assert!(matches!(fit_similarity(&pts[..2], &pts[..2], true), Err(SlamEvalError::TooFewPoses { .. })));
        let col: Vec<_> = (0..5).map(|k| Vector3::new(k as f64, 0.0, 0.0)).collect();
        assert!(matches!(fit_similarity(&col, &col, true), Err(SlamEvalError::Degenerate)));
    }

    #[test]
    fn report_formats() {
        let r = EvalReport { t_rel: 0.5, r_rel: 1.0, frames_evaluated: 3, frames_interpolated: 1, segments: 2 };
        assert!(format_report_kv(&r).starts_with("t_rel=0.5\nr_rel=1\n"));
        assert!(format_report_table(&r).contains("segments"));
    }
}
