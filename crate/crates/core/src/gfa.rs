//! Global feature aggregation: one pre-norm self-attention block over all
//! points of a cloud.
//!
//! ```text
//! f1    = input(f)
//! q,k,v = qkv(LayerNorm1(f1))
//! f2    = out_proj(softmax(q kᵀ / √d_head) v) + f1     (per head, heads concatenated)
//! out   = ffn2(gelu(ffn1(LayerNorm2(f2)))) + f2
//! ```

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::nn::{gelu, LayerNorm, LinearLayer, Matrix};
use crate::par;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    pub input: LinearLayer,
    pub norm1: LayerNorm,
    /// Joint projection to `[q | k | v]`, each `dim` wide.
    pub qkv: LinearLayer,
    pub out_proj: LinearLayer,
    pub norm2: LayerNorm,
    pub ffn1: LinearLayer,
    pub ffn2: LinearLayer,
    pub heads: usize,
}

impl AttentionBlock {
    /// Seeded block with FFN hidden width `2·dim`. Layers draw from `rng` in
    /// field order: input, qkv, out_proj, ffn1, ffn2.
    pub fn init(in_dim: usize, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::ShapeMismatch(format!(
                "{heads} heads do not divide model dim {dim}"
            )));
        }
        Ok(AttentionBlock {
            input: LinearLayer::init(in_dim, dim, true, rng),
            norm1: LayerNorm::new(dim),
            qkv: LinearLayer::init(dim, 3 * dim, true, rng),
            out_proj: LinearLayer::init(dim, dim, true, rng),
            norm2: LayerNorm::new(dim),
            ffn1: LinearLayer::init(dim, 2 * dim, true, rng),
            ffn2: LinearLayer::init(2 * dim, dim, true, rng),
            heads,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.input.in_dim()
    }

    pub fn dim(&self) -> usize {
        self.input.out_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.dim();
        let shapes = [
            ("qkv", self.qkv.in_dim(), c, self.qkv.out_dim(), 3 * c),
            ("out_proj", self.out_proj.in_dim(), c, self.out_proj.out_dim(), c),
            ("ffn1", self.ffn1.in_dim(), c, self.ffn1.out_dim(), self.ffn2.in_dim()),
            ("ffn2", self.ffn2.in_dim(), self.ffn1.out_dim(), self.ffn2.out_dim(), c),
        ];
        for (name, got_in, want_in, got_out, want_out) in shapes {
            if got_in != want_in || got_out != want_out {
                return Err(Error::ShapeMismatch(format!(
                    "gfa.{name} is {got_out}x{got_in}, expected {want_out}x{want_in}"
                )));
            }
        }
        if self.norm1.dim() != c || self.norm2.dim() != c {
            return Err(Error::ShapeMismatch(
                "gfa layer norm width differs from model dim".into(),
            ));
        }
        if self.heads == 0 || !c.is_multiple_of(self.heads) {
            return Err(Error::ShapeMismatch(format!(
                "{} heads do not divide model dim {c}",
                self.heads
            )));
        }
        Ok(())
    }
}

/// Applies the block to the raw features of `cloud`, one output row per point.
pub fn gfa(cloud: &PointCloud, block: &AttentionBlock) -> Result<Matrix> {
    block.validate()?;
    if block.in_dim() != cloud.c_raw() {
        return Err(Error::ShapeMismatch(format!(
            "GFA input takes {} channels, cloud has c_raw = {}",
            block.in_dim(),
            cloud.c_raw()
        )));
    }
    let n = cloud.len();
    let c = block.dim();
    let heads = block.heads;
    let dh = c / heads;

    let f1: Vec<Vec<f64>> = par::map_range(n, |i| block.input.apply(cloud.features(i)));
    let qkv: Vec<Vec<f64>> = par::map_range(n, |i| {
        let mut normed = vec![0.0; c];
        block.norm1.apply_into(&f1[i], &mut normed);
        block.qkv.apply(&normed)
    });
    let scale = 1.0 / (dh as f64).sqrt();

    let rows: Vec<Vec<f64>> = par::map_range(n, |i| {
        let mut attended = vec![0.0; c];
        let mut scores = vec![0.0; n];
        for h in 0..heads {
            let q = &qkv[i][h * dh..(h + 1) * dh];
            for (j, s) in scores.iter_mut().enumerate() {
                let k = &qkv[j][c + h * dh..c + (h + 1) * dh];
                *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                denom += *s;
            }
            let head_out = &mut attended[h * dh..(h + 1) * dh];
            for (j, s) in scores.iter().enumerate() {
                let v = &qkv[j][2 * c + h * dh..2 * c + (h + 1) * dh];
                let w = s / denom;
                head_out.iter_mut().zip(v).for_each(|(o, vv)| *o += w * vv);
            }
        }
        let mut f2 = block.out_proj.apply(&attended);
        f2.iter_mut().zip(&f1[i]).for_each(|(a, b)| *a += b);

        let mut normed = vec![0.0; c];
        block.norm2.apply_into(&f2, &mut normed);
        let hidden: Vec<f64> = block.ffn1.apply(&normed).into_iter().map(gelu).collect();
        let mut out = block.ffn2.apply(&hidden);
        out.iter_mut().zip(&f2).for_each(|(a, b)| *a += b);
        out
    });
    Matrix::from_rows(rows, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{generate_scene, SceneSpec};

    fn block(seed: u64, c: usize, heads: usize) -> AttentionBlock {
        AttentionBlock::init(4, c, heads, &mut Rng::seed_from_u64(seed)).unwrap()
    }

    /// Straight-line evaluation of the block for a single token, where the
    /// attention weight is exactly 1 and the attended value is `v` itself.
    fn single_token_by_hand(b: &AttentionBlock, f: &[f64]) -> Vec<f64> {
        let c = b.dim();
        let mat_vec = |l: &LinearLayer, x: &[f64]| -> Vec<f64> {
            (0..l.out_dim())
                .map(|o| {
                    let w = &l.weight()[o * l.in_dim()..(o + 1) * l.in_dim()];
                    l.bias().map_or(0.0, |bb| bb[o]) + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        };
        let norm = |x: &[f64]| -> Vec<f64> {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
            x.iter().map(|a| (a - m) / (v + 1e-5).sqrt()).collect()
        };
        let f1 = mat_vec(&b.input, f);
        let qkv = mat_vec(&b.qkv, &norm(&f1));
        let v = &qkv[2 * c..];
        let f2: Vec<f64> = mat_vec(&b.out_proj, v).iter().zip(&f1).map(|(a, b)| a + b).collect();
        let hidden: Vec<f64> = mat_vec(&b.ffn1, &norm(&f2))
            .into_iter()
            .map(|x| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh()))
            .collect();
        mat_vec(&b.ffn2, &hidden).iter().zip(&f2).map(|(a, b)| a + b).collect()
    }

    #[test]
    fn single_point_closed_form() {
        let cloud = generate_scene(&SceneSpec::new(4, 1)).unwrap();
        for heads in [1, 4] {
            let b = block(21, 16, heads);
            let got = gfa(&cloud, &b).unwrap();
            let want = single_token_by_hand(&b, cloud.features(0));
            for (g, w) in got.row(0).iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let cloud = generate_scene(&SceneSpec::new(6, 60)).unwrap();
        let b = block(3, 32, 2);
        let base = gfa(&cloud, &b).unwrap();
        let mut rng = Rng::seed_from_u64(77);
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..cloud.len()).collect();
            rng.shuffle(&mut perm);
            let out = gfa(&cloud.permuted(&perm), &b).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                for (a, bb) in out.row(k).iter().zip(base.row(i)) {
                    assert!((a - bb).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_value_projection_keeps_residual() {
        let cloud = generate_scene(&SceneSpec::new(9, 20)).unwrap();
        let mut b = block(5, 16, 1);
        let c = b.dim();
        let in_dim = b.qkv.in_dim();
        b.qkv.weight_mut()[2 * c * in_dim..].fill(0.0);
        b.qkv.bias_mut().unwrap()[2 * c..].fill(0.0);
        b.out_proj.bias_mut().unwrap().fill(0.0);
        // with ffn zeroed too, output reduces to f1
        b.ffn2.weight_mut().fill(0.0);
        b.ffn2.bias_mut().unwrap().fill(0.0);
        let out = gfa(&cloud, &b).unwrap();
        for i in 0..cloud.len() {
            let f1 = b.input.apply(cloud.features(i));
            assert_eq!(out.row(i), f1.as_slice());
        }
    }

    #[test]
    fn shape_errors() {
        let cloud = generate_scene(&SceneSpec::new(1, 3)).unwrap();
        let b = AttentionBlock::init(5, 16, 1, &mut Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(gfa(&cloud, &b), Err(Error::ShapeMismatch(_))));
        assert!(AttentionBlock::init(4, 16, 3, &mut Rng::seed_from_u64(0)).is_err());
        let empty = gfa(&PointCloud::empty(4), &block(0, 8, 1)).unwrap();
        assert_eq!(empty.rows(), 0);
    }
}
