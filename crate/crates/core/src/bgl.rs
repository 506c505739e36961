//! Box Gaussian loss.
//!
//! A box `[x, y, z, l, w, h, θ]` becomes `N(μ, Σ)` with `μ = (x, y, z)` and
//! `Σ = R(θ) · diag((l/2a)², (w/2a)², (h/2a)²) · R(θ)ᵀ`, `R` the yaw rotation.
//! Predicted and target Gaussians are compared with
//!
//! ```text
//! KL(ĝ, g) = ½ [ (μ̂−μ)ᵀ Σ⁻¹ (μ̂−μ) + Tr(Σ⁻¹ Σ̂) + ln(|Σ| / |Σ̂|) − 3 ]
//! ```
//!
//! Box-sourced Gaussians carry their precision matrix and log-determinant in
//! closed form, so no numerical inversion happens on the loss path.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::{congruence_diag, rot_z, sub3, Mat3, Vec3, SINGULAR_DET};

/// Smallest box dimension accepted after sanitization, meters.
pub const SIZE_FLOOR: f64 = 1e-3;

/// Loss weight on the KL term when combined with the base regression loss.
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    /// Yaw about +z, radians.
    pub theta: f64,
}

impl Box3D {
    pub const fn new(x: f64, y: f64, z: f64, l: f64, w: f64, h: f64, theta: f64) -> Self {
        Box3D {
            x,
            y,
            z,
            l,
            w,
            h,
            theta,
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.l, self.w, self.h, self.theta]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Box3D::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }

    pub fn center(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }

    /// Clamps dimensions to [`SIZE_FLOOR`]; with `strict` set, undersized
    /// dimensions are an error instead.
    pub fn sanitized(&self, strict: bool) -> Result<Box3D> {
        let mut b = *self;
        for (name, v) in [("l", &mut b.l), ("w", &mut b.w), ("h", &mut b.h)] {
            if !v.is_finite() || *v < SIZE_FLOOR {
                if strict || !v.is_finite() {
                    return Err(Error::DegenerateBox { name, value: *v });
                }
                *v = SIZE_FLOOR;
            }
        }
        if ![b.x, b.y, b.z, b.theta].iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateBox {
                name: "center/theta",
                value: f64::NAN,
            });
        }
        Ok(b)
    }
}

/// Object categories with a per-class `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Cyclist,
    Truck,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Car,
        ObjectClass::Pedestrian,
        ObjectClass::Cyclist,
        ObjectClass::Truck,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Cyclist => "cyclist",
            ObjectClass::Truck => "truck",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(ObjectClass::Car),
            "pedestrian" | "ped" => Ok(ObjectClass::Pedestrian),
            "cyclist" | "cyc" => Ok(ObjectClass::Cyclist),
            "truck" => Ok(ObjectClass::Truck),
            other => Err(Error::InvalidConfig(format!("unknown class {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BglConfig {
    pub a_per_class: BTreeMap<ObjectClass, f64>,
    /// `a` for boxes without a class.
    pub a_default: f64,
    pub lambda: f64,
    /// Reject undersized boxes instead of clamping them.
    pub strict: bool,
}

impl Default for BglConfig {
    fn default() -> Self {
        BglConfig {
            a_per_class: BTreeMap::from([
                (ObjectClass::Car, 3.0),
                (ObjectClass::Pedestrian, 1.0),
                (ObjectClass::Cyclist, 1.0),
                (ObjectClass::Truck, 3.0),
            ]),
            a_default: 1.0,
            lambda: DEFAULT_LAMBDA,
            strict: false,
        }
    }
}

impl BglConfig {
    pub fn a_for(&self, class: Option<ObjectClass>) -> f64 {
        class
            .and_then(|c| self.a_per_class.get(&c).copied())
            .unwrap_or(self.a_default)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, a) in self
            .a_per_class
            .iter()
            .map(|(c, a)| (c.as_str(), *a))
            .chain([("default", self.a_default)])
        {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidConfig(format!("a for {c} must be positive, got {a}")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `N(mu, sigma)` with its precision matrix and `ln|Σ|` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDistribution3D {
    pub mu: Vec3,
    pub sigma: Mat3,
    pub precision: Mat3,
    pub log_det: f64,
}

impl GaussianDistribution3D {
    /// From an arbitrary covariance; inverse and determinant are computed numerically.
    pub fn new(mu: Vec3, sigma: Mat3) -> Result<Self> {
        let det = sigma.det();
        if !(det > SINGULAR_DET) || !(sigma.0[0][0] > 0.0) {
            return Err(Error::SingularCovariance { det });
        }
        let precision = sigma.inverse().map_err(|_| Error::SingularCovariance { det })?;
        Ok(GaussianDistribution3D {
            mu,
            sigma,
            precision,
            log_det: det.ln(),
        })
    }
}

fn half_extents(b: &Box3D, a: f64) -> Vec3 {
    [b.l / (2.0 * a), b.w / (2.0 * a), b.h / (2.0 * a)]
}

/// Box → Gaussian with scale hyperparameter `a > 0`.
pub fn box_to_gaussian(b: &Box3D, a: f64, strict: bool) -> Result<GaussianDistribution3D> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidConfig(format!("a must be positive, got {a}")));
    }
    let b = b.sanitized(strict)?;
    let s = half_extents(&b, a);
    let r = rot_z(b.theta);
    let var = [s[0] * s[0], s[1] * s[1], s[2] * s[2]];
    Ok(GaussianDistribution3D {
        mu: b.center(),
        sigma: congruence_diag(&r, &var),
        precision: congruence_diag(&r, &[1.0 / var[0], 1.0 / var[1], 1.0 / var[2]]),
        log_det: 2.0 * (s[0].ln() + s[1].ln() + s[2].ln()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlTerms {
    /// `(μ̂−μ)ᵀ Σ⁻¹ (μ̂−μ)`
    pub mahalanobis: f64,
    /// `Tr(Σ⁻¹ Σ̂)`
    pub trace: f64,
    /// `ln(|Σ| / |Σ̂|)`
    pub logdet: f64,
    pub total: f64,
}

/// KL divergence of the prediction `g_hat` from the target `g`.
///
/// `total` is evaluated with the trace term as `Tr(Σ⁻¹ (Σ̂ − Σ))`, which equals
/// `Tr(Σ⁻¹ Σ̂) − 3` and is exactly zero for identical covariances.
pub fn kl_divergence(g_hat: &GaussianDistribution3D, g: &GaussianDistribution3D) -> KlTerms {
    let delta = sub3(&g_hat.mu, &g.mu);
    let mahalanobis = g.precision.quad_form(&delta);
    let trace = (g.precision * g_hat.sigma).trace();
    let trace_excess = (g.precision * (g_hat.sigma - g.sigma)).trace();
    let logdet = g.log_det - g_hat.log_det;
    KlTerms {
        mahalanobis,
        trace,
        logdet,
        total: 0.5 * (mahalanobis + trace_excess + logdet),
    }
}

/// KL terms for one predicted/target box pair.
pub fn box_kl(pred: &Box3D, gt: &Box3D, a: f64, strict: bool) -> Result<KlTerms> {
    Ok(kl_divergence(
        &box_to_gaussian(pred, a, strict)?,
        &box_to_gaussian(gt, a, strict)?,
    ))
}

/// Mean KL over index-aligned pairs; `a` comes from each target's class.
pub fn bgl(pred: &[Box3D], gt: &[Box3D], classes: &[Option<ObjectClass>], cfg: &BglConfig) -> Result<f64> {
    Ok(bgl_terms(pred, gt, classes, cfg)?.1)
}

/// Per-pair terms and their mean total. The mean is reduced as a pairwise
/// tree over pair index (split at `len / 2`), independent of thread count.
pub fn bgl_terms(
    pred: &[Box3D],
    gt: &[Box3D],
    classes: &[Option<ObjectClass>],
    cfg: &BglConfig,
) -> Result<(Vec<KlTerms>, f64)> {
    cfg.validate()?;
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if classes.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: classes.len(),
            right: gt.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let terms = crate::par::map_range(gt.len(), |i| {
        box_kl(&pred[i], &gt[i], cfg.a_for(classes[i]), cfg.strict)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let totals: Vec<f64> = terms.iter().map(|t| t.total).collect();
    Ok((terms, pairwise_sum(&totals) / totals.len() as f64))
}

fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// `l_ori + λ · l_bgl`
pub fn combined_reg_loss(l_ori: f64, l_bgl: f64, lambda: f64) -> f64 {
    l_ori + lambda * l_bgl
}

/// Analytic gradient of `KL(box_to_gaussian(pred), box_to_gaussian(gt))` with
/// respect to the predicted `(x, y, z, l, w, h, θ)`.
///
/// With `P = Σ⁻¹`, `δ = μ̂ − μ`, `r_k` the columns of `R(θ̂)` and
/// `d_k = (dim_k / 2a)²`:
///
/// ```text
/// ∂/∂μ̂     = P δ
/// ∂/∂dim_k = dim_k / (4a²) · r_kᵀ P r_k − 1 / dim_k
/// ∂/∂θ̂     = Tr(P R' D Rᵀ)
/// ```
///
/// Clamped dimensions (below [`SIZE_FLOOR`]) get a zero derivative.
pub fn bgl_gradient(pred: &Box3D, gt: &Box3D, a: f64) -> Result<[f64; 7]> {
    let target = box_to_gaussian(gt, a, false)?;
    let p_box = pred.sanitized(false)?;
    let p = &target.precision;
    let delta = sub3(&p_box.center(), &target.mu);
    let d_mu = p.mul_vec(&delta);

    let r = rot_z(p_box.theta);
    let (s, c) = p_box.theta.sin_cos();
    let r_dot = Mat3([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]]);
    let dims = [p_box.l, p_box.w, p_box.h];
    let raw = [pred.l, pred.w, pred.h];
    let mut d_dims = [0.0; 3];
    for k in 0..3 {
        if raw[k] < SIZE_FLOOR {
            continue;
        }
        let rk = r.col(k);
        d_dims[k] = dims[k] / (4.0 * a * a) * p.quad_form(&rk) - 1.0 / dims[k];
    }
    let var = half_extents(&p_box, a).map(|v| v * v);
    let d_theta = (*p * r_dot * Mat3::diag(var) * r.transpose()).trace();
    Ok([d_mu[0], d_mu[1], d_mu[2], d_dims[0], d_dims[1], d_dims[2], d_theta])
}

/// Central finite-difference gradient of the box KL, for verification.
pub fn bgl_gradient_fd(pred: &Box3D, gt: &Box3D, a: f64, step: f64) -> Result<[f64; 7]> {
    let base = pred.to_array();
    let mut out = [0.0; 7];
    for (k, o) in out.iter_mut().enumerate() {
        let mut plus = base;
        let mut minus = base;
        plus[k] += step;
        minus[k] -= step;
        let fp = box_kl(&Box3D::from_array(plus), gt, a, false)?.total;
        let fm = box_kl(&Box3D::from_array(minus), gt, a, false)?.total;
        *o = (fp - fm) / (2.0 * step);
    }
    Ok(out)
}

/// Largest `|analytic − fd| / max(1, |analytic|)` over the seven components.
pub fn gradient_rel_error(analytic: &[f64; 7], fd: &[f64; 7]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(g, f)| (g - f).abs() / g.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// A parsed box file: boxes plus an optional class per row.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxList {
    pub boxes: Vec<Box3D>,
    pub classes: Vec<Option<ObjectClass>>,
}

/// CSV with header `x,y,z,l,w,h,theta[,class]`.
pub fn boxes_from_csv(text: &str, origin: &str) -> Result<BoxList> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::format(origin, "missing header"))?
        .split(',')
        .map(str::trim)
        .collect();
    let base = ["x", "y", "z", "l", "w", "h", "theta"];
    let with_class = match header.as_slice() {
        h if h == base => false,
        h if h.len() == 8 && h[..7] == base && h[7] == "class" => true,
        _ => return Err(Error::format(origin, format!("bad header {:?}", header.join(",")))),
    };
    let mut out = BoxList {
        boxes: Vec::new(),
        classes: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let want = if with_class { 8 } else { 7 };
        if fields.len() != want {
            return Err(Error::format(
                origin,
                format!("row {}: expected {want} columns, found {}", n + 1, fields.len()),
            ));
        }
        let mut v = [0.0; 7];
        for (k, f) in fields[..7].iter().enumerate() {
            v[k] = f
                .parse()
                .map_err(|e| Error::format(origin, format!("row {}: {e}", n + 1)))?;
        }
        out.boxes.push(Box3D::from_array(v));
        out.classes.push(match with_class {
            true if !fields[7].is_empty() => Some(
                fields[7]
                    .parse()
                    .map_err(|e: Error| Error::format(origin, format!("row {}: {e}", n + 1)))?,
            ),
            _ => None,
        });
    }
    Ok(out)
}

pub fn boxes_to_csv(list: &BoxList) -> String {
    let with_class = list.classes.iter().any(Option::is_some);
    let mut out = String::from("x,y,z,l,w,h,theta");
    if with_class {
        out.push_str(",class");
    }
    out.push('\n');
    for (b, c) in list.boxes.iter().zip(&list.classes) {
        let row: Vec<String> = b.to_array().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        if with_class {
            out.push(',');
            out.push_str(c.map_or("", |c| c.as_str()));
        }
        out.push('\n');
    }
    out
}

pub fn read_boxes(path: impl AsRef<Path>) -> Result<BoxList> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(&origin, "not UTF-8"))?;
    boxes_from_csv(&text, &origin)
}
