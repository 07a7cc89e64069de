//! The depth network: a small residual crown-convolution feature extractor
//! (two stride-2 stages, so features land two levels below the input) and a
//! three-layer 3D crown-convolution cost regularizer.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::chart::{build_chart_at, Orientation, UnfoldChart};
use crate::icosphere::Icosphere;
use crate::sweep::SweepCache;
use crate::tensor::Tensor;

/// Channel width of the middle extractor stages.
pub const MID_CHANNELS: usize = 16;
/// Channel width of the regularizer's hidden layers.
pub const REG_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy)]
struct ConvIds {
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    conv1: ConvIds,
    conv2: ConvIds,
}

/// Charts for the input level and the two levels below it.
pub struct Charts {
    pub input: Arc<UnfoldChart>,
    pub mid: Arc<UnfoldChart>,
    pub out: Arc<UnfoldChart>,
}

/// Builds the three charts the extractor needs from one icosphere hierarchy.
pub fn build_charts(ico: &Icosphere) -> Charts {
    let l = ico.level();
    assert!(l >= 2, "input level must be at least 2 for two stride-2 stages");
    Charts {
        input: Arc::new(build_chart_at(ico, l)),
        mid: Arc::new(build_chart_at(ico, l - 1)),
        out: Arc::new(build_chart_at(ico, l - 2)),
    }
}

/// Parameter handles for the whole network. Weights live in a [`ParamStore`].
pub struct IcoSweepNet {
    pub c_feat: usize,
    pub num_cameras: usize,
    pub validity_channel: bool,
    stem: ConvIds,
    block1: BlockIds,
    block2: BlockIds,
    transition: ConvIds,
    block3: BlockIds,
    head: ConvIds,
    reg1: ConvIds,
    reg2: ConvIds,
    reg3: ConvIds,
}

impl IcoSweepNet {
    /// Registers all parameters with fan-in-scaled uniform kernels and zero
    /// biases, seeded for reproducibility.
    pub fn new(params: &mut ParamStore, c_feat: usize, num_cameras: usize, seed: u64) -> IcoSweepNet {
        Self::with_options(params, c_feat, num_cameras, seed, false)
    }

    /// Like [`IcoSweepNet::new`] with the cost-volume validity channels
    /// toggled.
    pub fn with_options(
        params: &mut ParamStore,
        c_feat: usize,
        num_cameras: usize,
        seed: u64,
        validity_channel: bool,
    ) -> IcoSweepNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MID_CHANNELS;
        let r = REG_CHANNELS;
        let mut conv2 = |params: &mut ParamStore, name: &str, co: usize, ci: usize| ConvIds {
            kernel: params.add_uniform(&format!("{name}.kernel"), &[co, ci, 3, 3], ci * 9, &mut rng),
            bias: params.add(&format!("{name}.bias"), Tensor::zeros(&[co])),
        };
        let stem = conv2(params, "stem", m, 3);
        let block1 = BlockIds {
            conv1: conv2(params, "block1.conv1", m, m),
            conv2: conv2(params, "block1.conv2", m, m),
        };
        let block2 = BlockIds {
            conv1: conv2(params, "block2.conv1", m, m),
            conv2: conv2(params, "block2.conv2", m, m),
        };
        let transition = conv2(params, "transition", c_feat, m);
        let block3 = BlockIds {
            conv1: conv2(params, "block3.conv1", c_feat, c_feat),
            conv2: conv2(params, "block3.conv2", c_feat, c_feat),
        };
        let head = conv2(params, "head", c_feat, c_feat);

        let mut rng3 = ChaCha8Rng::seed_from_u64(seed ^ 0xababab);
        let mut conv3 = |params: &mut ParamStore, name: &str, co: usize, ci: usize| ConvIds {
            kernel: params.add_uniform(
                &format!("{name}.kernel"),
                &[co, ci, 3, 3, 3],
                ci * 27,
                &mut rng3,
            ),
            bias: params.add(&format!("{name}.bias"), Tensor::zeros(&[co])),
        };
        let reg_in = num_cameras * c_feat + if validity_channel { num_cameras } else { 0 };
        let reg1 = conv3(params, "reg1", r, reg_in);
        let reg2 = conv3(params, "reg2", r, r);
        let reg3 = conv3(params, "reg3", 1, r);

        IcoSweepNet {
            c_feat,
            num_cameras,
            validity_channel,
            stem,
            block1,
            block2,
            transition,
            block3,
            head,
            reg1,
            reg2,
            reg3,
        }
    }

    fn crown_conv(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        col: NodeId,
        row: NodeId,
        ids: ConvIds,
        stride: usize,
    ) -> (NodeId, NodeId) {
        let pc = g.pad_replicate2(col, 1);
        let pr = g.pad_replicate2(row, 1);
        (
            g.conv2d(params, pc, ids.kernel, ids.bias, stride, Orientation::Col),
            g.conv2d(params, pr, ids.kernel, ids.bias, stride, Orientation::Row),
        )
    }

    fn res_block(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        col: NodeId,
        row: NodeId,
        block: BlockIds,
    ) -> (NodeId, NodeId) {
        let (c1, r1) = self.crown_conv(g, params, col, row, block.conv1, 1);
        let (c1, r1) = (g.relu(c1), g.relu(r1));
        let (c2, r2) = self.crown_conv(g, params, c1, r1, block.conv2, 1);
        let (cs, rs) = (g.add(col, c2), g.add(row, r2));
        (g.relu(cs), g.relu(rs))
    }

    fn crown_conv3(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        col: NodeId,
        row: NodeId,
        ids: ConvIds,
    ) -> (NodeId, NodeId) {
        let pc = g.pad_replicate3(col, 1);
        let pr = g.pad_replicate3(row, 1);
        (
            g.conv3d(params, pc, ids.kernel, ids.bias, Orientation::Col),
            g.conv3d(params, pr, ids.kernel, ids.bias, Orientation::Row),
        )
    }

    /// Feature extraction: input level l → features at level l−2 with
    /// `c_feat` channels. Duplicate cells are resynchronized through Π⁻¹/Π
    /// after each stride-2 stage and folded once more at the end.
    pub fn extract_features(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        input: NodeId,
        charts: &Charts,
    ) -> NodeId {
        let col = g.to_crown(input, &charts.input, Orientation::Col);
        let row = g.to_crown(input, &charts.input, Orientation::Row);
        let (col, row) = self.crown_conv(g, params, col, row, self.stem, 2);
        let (col, row) = (g.relu(col), g.relu(row));

        let f = g.from_crown(col, row, &charts.mid);
        let col = g.to_crown(f, &charts.mid, Orientation::Col);
        let row = g.to_crown(f, &charts.mid, Orientation::Row);
        let (col, row) = self.res_block(g, params, col, row, self.block1);
        let (col, row) = self.res_block(g, params, col, row, self.block2);

        let (col, row) = self.crown_conv(g, params, col, row, self.transition, 2);
        let (col, row) = (g.relu(col), g.relu(row));

        let f = g.from_crown(col, row, &charts.out);
        let col = g.to_crown(f, &charts.out, Orientation::Col);
        let row = g.to_crown(f, &charts.out, Orientation::Row);
        let (col, row) = self.res_block(g, params, col, row, self.block3);
        let (col, row) = self.crown_conv(g, params, col, row, self.head, 1);
        g.from_crown(col, row, &charts.out)
    }

    /// Cost regularization: `[V, N, K·C]` volume → single-channel `[V, N]`
    /// scores through three 3D crown convolutions.
    pub fn regularize(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        volume: NodeId,
        chart: &Arc<UnfoldChart>,
    ) -> NodeId {
        let col = g.to_crown_vol(volume, chart, Orientation::Col);
        let row = g.to_crown_vol(volume, chart, Orientation::Row);
        let (col, row) = self.crown_conv3(g, params, col, row, self.reg1);
        let (col, row) = (g.relu(col), g.relu(row));
        let (col, row) = self.crown_conv3(g, params, col, row, self.reg2);
        let (col, row) = (g.relu(col), g.relu(row));
        let (col, row) = self.crown_conv3(g, params, col, row, self.reg3);
        let v = g.from_crown_vol(col, row, chart);
        g.squeeze_last(v)
    }

    /// Full forward pass: per-camera icosphere images → per-vertex
    /// inverse-depth index prediction.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        ico_values: &[Tensor],
        charts: &Charts,
        cache: &Arc<SweepCache>,
    ) -> NodeId {
        assert_eq!(ico_values.len(), self.num_cameras);
        let feats: Vec<NodeId> = ico_values
            .iter()
            .map(|t| {
                let input = g.input(t.clone());
                self.extract_features(g, params, input, charts)
            })
            .collect();
        let volume = g.cost_volume(feats, cache, self.validity_channel);
        let scores = self.regularize(g, params, volume, &charts.out);
        g.soft_argmax(scores)
    }

    /// Sets the head convolution to zero (used by tests and as a calm start).
    pub fn zero_head(&self, params: &mut ParamStore) {
        params.get_mut(self.head.kernel).data_mut().fill(0.0);
        params.get_mut(self.head.bias).data_mut().fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::conv2d_forward;
    use crate::icosphere::build_icosphere;
    use crate::tensor::Tensor;
    use rand::prelude::*;

    #[test]
    fn extractor_lands_on_level_minus_two() {
        for level in [3usize, 4] {
            let ico = build_icosphere(level).unwrap();
            let charts = build_charts(&ico);
            let mut params = ParamStore::new();
            let net = IcoSweepNet::new(&mut params, 8, 4, 1);
            let mut g = Graph::new();
            let v = ico.num_vertices();
            let input = g.input(Tensor::filled(&[v, 3], 0.25));
            let out = net.extract_features(&mut g, &params, input, &charts);
            let expect = crate::icosphere::vertex_count(level - 2);
            assert_eq!(g.value(out).shape(), &[expect, 8]);
        }
    }

    #[test]
    fn stride2_shapes_land_on_next_level() {
        for level in 3..=6usize {
            let (h, w) = crate::chart::rect_shape(level);
            let input = Tensor::zeros(&[1, 1, h + 2, w + 2]); // padded by 1
            let kernel = Tensor::zeros(&[1, 1, 3, 3]);
            let bias = Tensor::zeros(&[1]);
            let out = conv2d_forward(&input, &kernel, &bias, 2);
            let (h1, w1) = crate::chart::rect_shape(level - 1);
            assert_eq!(out.shape(), &[1, 1, h1, w1], "level {level}");
        }
    }

    #[test]
    fn zeroed_head_produces_zero_features() {
        let ico = build_icosphere(3).unwrap();
        let charts = build_charts(&ico);
        let mut params = ParamStore::new();
        let net = IcoSweepNet::new(&mut params, 4, 4, 2);
        net.zero_head(&mut params);
        let mut g = Graph::new();
        let input = g.input(Tensor::filled(&[ico.num_vertices(), 3], 0.7));
        let out = net.extract_features(&mut g, &params, input, &charts);
        assert!(g.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_kernel_crown_conv_is_identity() {
        let ico = build_icosphere(3).unwrap();
        let chart = Arc::new(build_chart_at(&ico, 3));
        let mut params = ParamStore::new();
        let mut kernel = Tensor::zeros(&[2, 2, 3, 3]);
        // Center tap of each channel's own kernel.
        kernel.data_mut()[0 * 2 * 9 + 0 * 9 + 4] = 1.0;
        kernel.data_mut()[1 * 2 * 9 + 1 * 9 + 4] = 1.0;
        let k = params.add("k", kernel);
        let b = params.add("b", Tensor::zeros(&[2]));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f = Tensor::from_vec(
            &[ico.num_vertices(), 2],
            (0..ico.num_vertices() * 2).map(|_| rng.gen::<f64>()).collect(),
        );
        let mut g = Graph::new();
        let input = g.input(f.clone());
        for orientation in [Orientation::Col, Orientation::Row] {
            let grid = g.to_crown(input, &chart, orientation);
            let padded = g.pad_replicate2(grid, 1);
            let out = g.conv2d(&params, padded, k, b, 1, orientation);
            assert_eq!(g.value(out), g.value(grid));
        }
    }

    #[test]
    fn constant_input_mean_kernel_scales_by_weight_sum() {
        let ico = build_icosphere(3).unwrap();
        let chart = Arc::new(build_chart_at(&ico, 3));
        let mut params = ParamStore::new();
        let kernel = Tensor::filled(&[1, 1, 3, 3], 0.25);
        let k = params.add("k", kernel);
        let b = params.add("b", Tensor::zeros(&[1]));
        let c = 1.6;
        let mut g = Graph::new();
        let input = g.input(Tensor::filled(&[ico.num_vertices(), 1], c));
        for orientation in [Orientation::Col, Orientation::Row] {
            let grid = g.to_crown(input, &chart, orientation);
            let padded = g.pad_replicate2(grid, 1);
            let out = g.conv2d(&params, padded, k, b, 1, orientation);
            let expect = 9.0 * 0.25 * c;
            assert!(g
                .value(out)
                .data()
                .iter()
                .all(|&x| (x - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn rotation_equivariance_between_orientations() {
        // conv(rot90ccw(x), Row) == rot90ccw(conv(x, Col)) with replicate pad.
        fn rot90ccw(t: &Tensor) -> Tensor {
            let s = t.shape();
            let (h, w) = (s[2], s[3]);
            let mut out = Tensor::zeros(&[1, 1, w, h]);
            for i in 0..w {
                for j in 0..h {
                    // out[i][j] = in[j][w-1-i]
                    out.data_mut()[i * h + j] = t.data()[j * w + (w - 1 - i)];
                }
            }
            out
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::from_vec(&[1, 1, 9, 5], (0..45).map(|_| rng.gen::<f64>()).collect());
        let mut params = ParamStore::new();
        let k = params.add_uniform("k", &[1, 1, 3, 3], 9, &mut rng);
        let b = params.add("b", Tensor::zeros(&[1]));

        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let xp = g.pad_replicate2(xi, 1);
        let col_out = g.conv2d(&params, xp, k, b, 1, Orientation::Col);

        let xr = g.input(rot90ccw(&x));
        let xrp = g.pad_replicate2(xr, 1);
        let row_out = g.conv2d(&params, xrp, k, b, 1, Orientation::Row);

        let expected = rot90ccw(g.value(col_out));
        for (a, e) in g.value(row_out).data().iter().zip(expected.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn conv3d_identity_and_impulse() {
        let mut params = ParamStore::new();
        let mut ident = Tensor::zeros(&[1, 1, 3, 3, 3]);
        ident.data_mut()[13] = 1.0; // center of 3x3x3
        let ki = params.add("ki", ident);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let kr = params.add_uniform("kr", &[1, 1, 3, 3, 3], 27, &mut rng);
        let b = params.add("b", Tensor::zeros(&[1]));

        let x = Tensor::from_vec(&[1, 1, 4, 5, 6], (0..120).map(|_| rng.gen::<f64>()).collect());
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let xp = g.pad_replicate3(xi, 1);
        let same = g.conv3d(&params, xp, ki, b, Orientation::Col);
        assert_eq!(g.value(same), &x);

        // Interior impulse response reads the kernel back (mirrored).
        let mut imp = Tensor::zeros(&[1, 1, 7, 7, 7]);
        let (qz, qy, qx) = (3, 3, 3);
        imp.data_mut()[(qz * 7 + qy) * 7 + qx] = 1.0;
        let ii = g.input(imp);
        let out = g.conv3d(&params, ii, kr, b, Orientation::Col); // valid, no pad: [1,1,5,5,5]
        let kd = params.get(kr).data();
        let od = g.value(out).data();
        for dz in 0..3 {
            for dy in 0..3 {
                for dx in 0..3 {
                    let o = od[((qz - dz) * 5 + (qy - dy)) * 5 + (qx - dx)];
                    let kv = kd[(dz * 3 + dy) * 3 + dx];
                    assert!((o - kv).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn regularizer_identity_layer_passes_volume_through() {
        // Single-layer identity check of the 3D path: one channel volume,
        // identity kernel, zero bias gives back the volume after Π⁻¹∘conv∘Π.
        let ico = build_icosphere(2).unwrap();
        let chart = Arc::new(build_chart_at(&ico, 2));
        let mut params = ParamStore::new();
        let mut ident = Tensor::zeros(&[1, 1, 3, 3, 3]);
        ident.data_mut()[13] = 1.0;
        let k = params.add("k", ident);
        let b = params.add("b", Tensor::zeros(&[1]));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let v = ico.num_vertices();
        let vol = Tensor::from_vec(&[v, 4, 1], (0..v * 4).map(|_| rng.gen::<f64>()).collect());
        let mut g = Graph::new();
        let vi = g.input(vol.clone());
        let col = g.to_crown_vol(vi, &chart, Orientation::Col);
        let row = g.to_crown_vol(vi, &chart, Orientation::Row);
        let pc = g.pad_replicate3(col, 1);
        let pr = g.pad_replicate3(row, 1);
        let cc = g.conv3d(&params, pc, k, b, Orientation::Col);
        let cr = g.conv3d(&params, pr, k, b, Orientation::Row);
        let back = g.from_crown_vol(cc, cr, &chart);
        for (a, e) in g.value(back).data().iter().zip(vol.data()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_volume_regularizes_constant() {
        let ico = build_icosphere(2).unwrap();
        let charts = build_charts(&build_icosphere(4).unwrap());
        let _ = charts;
        let chart = Arc::new(build_chart_at(&ico, 2));
        let mut params = ParamStore::new();
        let net = IcoSweepNet::new(&mut params, 2, 2, 3);
        let v = ico.num_vertices();
        let vol = Tensor::filled(&[v, 3, 4], 0.8);
        let mut g = Graph::new();
        let vi = g.input(vol);
        let out = net.regularize(&mut g, &params, vi, &chart);
        assert_eq!(g.value(out).shape(), &[v, 3]);
        let first = g.value(out).data()[0];
        assert!(g
            .value(out)
            .data()
            .iter()
            .all(|&x| (x - first).abs() < 1e-9));
    }
}
