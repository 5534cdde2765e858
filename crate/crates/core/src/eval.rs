//! Absolute trajectory error.

use alloc::vec::Vec;

use crate::geometry::{rotation_from_matrix, Mat3, Pose, Vec3};
use crate::math;

/// Max timestamp gap for associating an estimate with a ground-truth pose, seconds.
pub const MATCH_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    poses: Vec<(f64, Pose)>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("timestamp {timestamp} at index {index} does not increase")]
    NonIncreasing { index: usize, timestamp: f64 },
    #[error("no estimated timestamp matches the ground truth")]
    EmptyOverlap,
}

impl Trajectory {
    pub fn new(poses: Vec<(f64, Pose)>) -> Result<Self, EvalError> {
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(EvalError::NonIncreasing {
                    index: i + 1,
                    timestamp: w[1].0,
                });
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[(f64, Pose)] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Index of the pose nearest to `t`, if within [`MATCH_TOLERANCE`].
    pub fn nearest(&self, t: f64) -> Option<usize> {
        let i = self.poses.partition_point(|(s, _)| *s < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.poses.len())
            .map(|j| (math::abs(self.poses[j].0 - t), j))
            .filter(|(gap, _)| *gap <= MATCH_TOLERANCE)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, j)| j)
    }

    /// Applies `t` on the left of every pose.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            poses: self.poses.iter().map(|(s, p)| (*s, t.compose(p))).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alignment {
    None,
    Rigid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameError {
    /// Index into the estimated trajectory.
    pub index: usize,
    pub timestamp: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub errors: Vec<FrameError>,
    /// Transform applied to the estimate before differencing.
    pub alignment: Pose,
    /// Estimated poses without a ground-truth match.
    pub unmatched: usize,
}

/// Least-squares rigid transform `T` minimizing `Σ |T·src_i − dst_i|²`.
pub fn rigid_alignment(src: &[Vec3], dst: &[Vec3]) -> Pose {
    let n = src.len().min(dst.len());
    if n == 0 {
        return Pose::identity();
    }
    let inv = 1.0 / n as f64;
    let mu_s = src[..n].iter().fold(Vec3::zeros(), |a, p| a + p) * inv;
    let mu_d = dst[..n].iter().fold(Vec3::zeros(), |a, p| a + p) * inv;
    let mut cov = Mat3::zeros();
    for (s, d) in src[..n].iter().zip(&dst[..n]) {
        cov += (d - mu_d) * (s - mu_s).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut fix = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = u * fix * v_t;
    let rotation = rotation_from_matrix(&r);
    let t = mu_d - rotation * mu_s;
    Pose::from_rotation(rotation, t)
}

pub fn ate(est: &Trajectory, gt: &Trajectory, align: Alignment) -> Result<AteResult, EvalError> {
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    for (i, (t, p)) in est.poses.iter().enumerate() {
        match gt.nearest(*t) {
            Some(j) => pairs.push((i, *t, *p.translation(), *gt.poses[j].1.translation())),
            None => unmatched += 1,
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyOverlap);
    }
    let alignment = match align {
        Alignment::None => Pose::identity(),
        Alignment::Rigid => {
            let src: Vec<Vec3> = pairs.iter().map(|p| p.2).collect();
            let dst: Vec<Vec3> = pairs.iter().map(|p| p.3).collect();
            rigid_alignment(&src, &dst)
        }
    };
    let errors: Vec<FrameError> = pairs
        .iter()
        .map(|(i, t, e, g)| FrameError {
            index: *i,
            timestamp: *t,
            error: (alignment.transform_point(e) - g).norm(),
        })
        .collect();
    let n = errors.len() as f64;
    let mean = errors.iter().map(|e| e.error).sum::<f64>() / n;
    let mean_sq = errors.iter().map(|e| e.error * e.error).sum::<f64>() / n;
    let var = errors.iter().map(|e| (e.error - mean) * (e.error - mean)).sum::<f64>() / n;
    Ok(AteResult {
        rmse: math::sqrt(mean_sq),
        mean,
        std: math::sqrt(var),
        errors,
        alignment,
        unmatched,
    })
}
