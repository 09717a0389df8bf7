//! Centroid-aware inner weights, the weighted focal loss over in-box labels
//! with its analytic logit gradient, and the softmax cross-entropy baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Point3};
use crate::labels::{LabelState, LabelVolume, PseudoPointGrid};
use crate::scalar::{pairwise_sum, Real};
use crate::tensor::{Dim, FeatureTensor};

/// Lower clamp for `log` arguments.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    Softmax,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    Sum,
    /// Mean over non-Ignore elements.
    #[default]
    MeanOverSupervised,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub activation: Activation,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            activation: Activation::Sigmoid,
            reduction: Reduction::MeanOverSupervised,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Raw depth logits over a `[D, H, W]` grid and the activation applied to them.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVolume<T> {
    dims: (usize, usize, usize),
    logits: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> ScoreVolume<T> {
    pub fn new(
        dims: (usize, usize, usize),
        logits: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if logits.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::contract("logit count does not match dims"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("logits must be finite"));
        }
        Ok(Self {
            dims,
            logits,
            activation,
        })
    }

    pub fn from_tensor(t: &FeatureTensor<T>, activation: Activation) -> Result<Self> {
        let [d, h, w] = t.expect_layout([Dim::D, Dim::H, Dim::W])?;
        Self::new((d, h, w), t.data().to_vec(), activation)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [T] {
        &mut self.logits
    }

    /// Activated scores `p`, laid out like the logits.
    pub fn activated(&self) -> Vec<T> {
        match self.activation {
            Activation::Sigmoid => self.logits.iter().map(|&x| sigmoid(x)).collect(),
            Activation::Softmax => {
                let (d, h, w) = self.dims;
                let plane = h * w;
                let mut out = vec![T::zero(); self.logits.len()];
                for pix in 0..plane {
                    let m = (0..d).fold(T::neg_infinity(), |m, di| {
                        m.max(self.logits[di * plane + pix])
                    });
                    let mut sum = T::zero();
                    for di in 0..d {
                        let e = (self.logits[di * plane + pix] - m).exp();
                        out[di * plane + pix] = e;
                        sum += e;
                    }
                    for di in 0..d {
                        out[di * plane + pix] /= sum;
                    }
                }
                out
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn ratio<T: Real>(a: T, b: T) -> T {
    let hi = a.max(b);
    if hi <= T::zero() {
        T::zero()
    } else {
        a.min(b) / hi
    }
}

/// Centroid-aware inner weight of a point inside `b`: the cube root of the
/// product of min/max face-distance ratios along the three box axes.
/// 1 at the centroid, 0 on any face.
pub fn cai_weight<T: Real>(p: &Point3<T>, b: &OrientedBox<T>) -> Result<T> {
    let f = b.face_distances(p)?;
    Ok((ratio(f.front, f.back) * ratio(f.left, f.right) * ratio(f.up, f.down)).cbrt())
}

/// Fills CAI weights for every positive: [`cai_weight`] for box positives,
/// 1 for background (surface) positives, 0 elsewhere.
pub fn attach_cai_weights<T: Real>(
    mut labels: LabelVolume,
    points: &PseudoPointGrid<T>,
    boxes: &[OrientedBox<T>],
) -> Result<LabelVolume> {
    if labels.dims() != points.dims {
        return Err(Error::contract(
            "pseudo-point grid does not match the labels",
        ));
    }
    for k in 0..labels.len() {
        if labels.states()[k] != LabelState::Positive {
            continue;
        }
        let id = labels.box_ids()[k];
        let w = if id < 0 {
            T::one()
        } else {
            let b = boxes.get(id as usize).ok_or_else(|| {
                Error::contract(format!("box id {id} out of range ({} boxes)", boxes.len()))
            })?;
            cai_weight(&points.points[k], b)?
        };
        labels.set_weight(k, w.to_f64_() as f32);
    }
    Ok(labels)
}

fn check_focal_inputs<T: Real>(
    scores: &ScoreVolume<T>,
    labels: &LabelVolume,
    cfg: &LossConfig,
) -> Result<()> {
    cfg.validate()?;
    if cfg.activation != Activation::Sigmoid || scores.activation != Activation::Sigmoid {
        return Err(Error::config(
            "the CAI focal loss requires sigmoid-activated scores",
        ));
    }
    if scores.dims() != labels.dims() {
        return Err(Error::contract(format!(
            "scores are {:?}, labels are {:?}",
            scores.dims(),
            labels.dims()
        )));
    }
    Ok(())
}

fn supervised_scale<T: Real>(labels: &LabelVolume, reduction: Reduction) -> T {
    match reduction {
        Reduction::Sum => T::one(),
        Reduction::MeanOverSupervised => {
            let n = labels
                .states()
                .iter()
                .filter(|s| **s != LabelState::Ignore)
                .count();
            if n == 0 {
                T::zero()
            } else {
                T::one() / T::from_usize_(n)
            }
        }
    }
}

/// Per-element weighted focal loss: `-(1-a) p^g log(1-p)` on negatives,
/// `-W a (1-p)^g log p` on positives, 0 on Ignore.
#[inline]
fn element_loss<T: Real>(x: T, state: LabelState, weight: T, alpha: T, gamma: T) -> T {
    let eps = T::lit(LOG_CLAMP);
    let p = sigmoid(x);
    let one = T::one();
    match state {
        LabelState::Ignore => T::zero(),
        LabelState::Positive => -weight * alpha * (one - p).powf(gamma) * p.max(eps).ln(),
        LabelState::Negative => -(one - alpha) * p.powf(gamma) * (one - p).max(eps).ln(),
    }
}

/// Derivative of [`element_loss`] with respect to the logit `x`.
#[inline]
fn element_grad<T: Real>(x: T, state: LabelState, weight: T, alpha: T, gamma: T) -> T {
    let eps = T::lit(LOG_CLAMP);
    let p = sigmoid(x);
    let one = T::one();
    let q = one - p;
    match state {
        LabelState::Ignore => T::zero(),
        LabelState::Positive => {
            let log_term = if p >= eps { q } else { T::zero() };
            weight * alpha * q.powf(gamma) * (gamma * p * p.max(eps).ln() - log_term)
        }
        LabelState::Negative => {
            let log_term = if q >= eps { p } else { T::zero() };
            (one - alpha) * p.powf(gamma) * (log_term - gamma * q * q.max(eps).ln())
        }
    }
}

/// CAI focal loss over sigmoid scores, reduced per `cfg.reduction`.
pub fn cai_focal_loss<T: Real>(
    scores: &ScoreVolume<T>,
    labels: &LabelVolume,
    cfg: &LossConfig,
) -> Result<T> {
    check_focal_inputs(scores, labels, cfg)?;
    let (alpha, gamma) = (T::lit(cfg.alpha), T::lit(cfg.gamma));
    let per: Vec<T> = scores
        .logits()
        .par_iter()
        .zip(labels.states().par_iter())
        .zip(labels.cai_weights().par_iter())
        .map(|((&x, &s), &w)| element_loss(x, s, T::lit(w as f64), alpha, gamma))
        .collect();
    Ok(pairwise_sum(&per) * supervised_scale::<T>(labels, cfg.reduction))
}

/// Analytic gradient of [`cai_focal_loss`] with respect to the logits, `[D, H, W]`.
pub fn cai_focal_grad<T: Real>(
    scores: &ScoreVolume<T>,
    labels: &LabelVolume,
    cfg: &LossConfig,
) -> Result<FeatureTensor<T>> {
    check_focal_inputs(scores, labels, cfg)?;
    let (alpha, gamma) = (T::lit(cfg.alpha), T::lit(cfg.gamma));
    let scale = supervised_scale::<T>(labels, cfg.reduction);
    let grad: Vec<T> = scores
        .logits()
        .par_iter()
        .zip(labels.states().par_iter())
        .zip(labels.cai_weights().par_iter())
        .map(|((&x, &s), &w)| element_grad(x, s, T::lit(w as f64), alpha, gamma) * scale)
        .collect();
    let (d, h, w) = scores.dims();
    Ok(FeatureTensor::from_parts(
        vec![(Dim::D, d), (Dim::H, h), (Dim::W, w)],
        grad,
    ))
}

/// Softmax cross-entropy against one-hot labels: mean over pixels holding
/// exactly one Positive of `-log p` at that bin. Pixels without a Positive
/// are unsupervised; several Positives on one pixel is a contract violation.
pub fn ce_depth_loss<T: Real>(scores: &ScoreVolume<T>, labels: &LabelVolume) -> Result<T> {
    if scores.activation != Activation::Softmax {
        return Err(Error::config(
            "the cross-entropy depth loss requires softmax scores",
        ));
    }
    if scores.dims() != labels.dims() {
        return Err(Error::contract("scores and labels differ in shape"));
    }
    let (d, h, w) = scores.dims();
    let p = scores.activated();
    let plane = h * w;
    let eps = T::lit(LOG_CLAMP);
    let mut per = Vec::new();
    for pix in 0..plane {
        let mut hot = None;
        for di in 0..d {
            if labels.states()[di * plane + pix] == LabelState::Positive {
                if hot.is_some() {
                    return Err(Error::contract(format!(
                        "pixel ({}, {}) has several positive bins",
                        pix / w,
                        pix % w
                    )));
                }
                hot = Some(di);
            }
        }
        if let Some(di) = hot {
            per.push(-p[di * plane + pix].max(eps).ln());
        }
    }
    if per.is_empty() {
        return Ok(T::zero());
    }
    Ok(pairwise_sum(&per) / T::from_usize_(per.len()))
}
