use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{covariance_from_scale_rot, Mat3, Quaternion, Vec3};
use crate::nn::{softplus, LinearLayer, Matrix};

/// Lower bound on predicted scales, meters.
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-3;

/// One renderable Gaussian: mean at the source point, opacity fixed to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrimitive3D {
    pub mean: Vec3,
    pub scales: Vec3,
    pub quat: Quaternion,
    pub opacity: f64,
    pub features: Vec<f64>,
}

impl GaussianPrimitive3D {
    pub fn covariance(&self) -> Result<Mat3> {
        covariance_from_scale_rot(&self.scales, &self.quat.to_rotation())
    }
}

/// Maps raw head outputs to positive scales: `softplus(x) + floor`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleActivation {
    pub floor: f64,
}

impl Default for ScaleActivation {
    fn default() -> Self {
        ScaleActivation {
            floor: DEFAULT_SCALE_FLOOR,
        }
    }
}

impl ScaleActivation {
    pub fn apply(&self, x: f64) -> f64 {
        softplus(x) + self.floor
    }
}

/// Per point: `raw = head([f, f_lfa, f_gfa])`, split as 3 scales, 4 quaternion
/// logits and the feature vector.
pub fn predict_attributes(
    cloud: &PointCloud,
    f_lfa: &Matrix,
    f_gfa: &Matrix,
    head: &LinearLayer,
    activation: ScaleActivation,
) -> Result<Vec<GaussianPrimitive3D>> {
    let n = cloud.len();
    if f_lfa.rows() != n || f_gfa.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "feature rows ({}, {}) do not match {n} points",
            f_lfa.rows(),
            f_gfa.rows()
        )));
    }
    let in_dim = cloud.c_raw() + f_lfa.cols() + f_gfa.cols();
    if head.in_dim() != in_dim {
        return Err(Error::ShapeMismatch(format!(
            "attribute head takes {} inputs, concat is {in_dim} wide",
            head.in_dim()
        )));
    }
    if head.out_dim() < 7 {
        return Err(Error::ShapeMismatch(format!(
            "attribute head has {} outputs, needs at least 7",
            head.out_dim()
        )));
    }
    if !(activation.floor > 0.0) {
        return Err(Error::NonPositiveScale {
            index: 0,
            value: activation.floor,
        });
    }
    let mut input = Vec::with_capacity(in_dim);
    let mut raw = vec![0.0; head.out_dim()];
    (0..n)
        .map(|i| {
            input.clear();
            input.extend_from_slice(cloud.features(i));
            input.extend_from_slice(f_lfa.row(i));
            input.extend_from_slice(f_gfa.row(i));
            head.apply_into(&input, &mut raw);
            let quat = Quaternion::new(raw[3], raw[4], raw[5], raw[6]).normalize()?;
            Ok(GaussianPrimitive3D {
                mean: *cloud.position(i),
                scales: [
                    activation.apply(raw[0]),
                    activation.apply(raw[1]),
                    activation.apply(raw[2]),
                ],
                quat,
                opacity: 1.0,
                features: raw[7..].to_vec(),
            })
        })
        .collect()
}
