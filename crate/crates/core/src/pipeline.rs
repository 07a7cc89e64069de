//! End-to-end wiring: geometry construction, scene preparation, timed
//! inference, and pooled evaluation. Shared by training, evaluation, and the
//! CLI so every path reports identical numbers.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::autodiff::{Graph, ParamStore};
use crate::camera::{project_to_icosphere, CameraRig, IcoImage, Image};
use crate::config::RunConfig;
use crate::error::Result;
use crate::icosphere::{build_icosphere, Icosphere};
use crate::network::{build_charts, Charts, IcoSweepNet};
use crate::regress::{gt_index, summarize_errors, Metrics};
use crate::scenegen::{gt_depth_ico, render_fisheye, Scene};
use crate::sweep::{build_sweep_cache, overlap_mask, sphere_radii, SphereSet, SweepCache};
use crate::tensor::Tensor;

/// Immutable run geometry plus the network parameters.
pub struct Pipeline {
    pub level: usize,
    pub ico_in: Icosphere,
    pub ico_out: Icosphere,
    pub charts: Charts,
    pub spheres: SphereSet,
    pub params: ParamStore,
    pub net: IcoSweepNet,
    pub num_spheres: usize,
    pub d_min: f64,
}

/// Wall-clock cost of each inference stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub projection: Duration,
    pub extraction: Duration,
    pub sweep: Duration,
    pub regularize: Duration,
    pub regress: Duration,
}

impl StageTimings {
    pub fn report(&self) -> String {
        format!(
            "projection={:.3}s extraction={:.3}s sweep={:.3}s regularize={:.3}s regress={:.3}s",
            self.projection.as_secs_f64(),
            self.extraction.as_secs_f64(),
            self.sweep.as_secs_f64(),
            self.regularize.as_secs_f64(),
            self.regress.as_secs_f64()
        )
    }
}

impl Pipeline {
    pub fn new(config: &RunConfig, num_cameras: usize) -> Result<Pipeline> {
        config.validate()?;
        let ico_in = build_icosphere(config.level)?;
        let ico_out = build_icosphere(config.level - 2)?;
        let charts = build_charts(&ico_in);
        let spheres = sphere_radii(config.num_spheres, config.d_min, config.eps);
        let mut params = ParamStore::new();
        let net = IcoSweepNet::with_options(
            &mut params,
            config.c_feat,
            num_cameras,
            config.seed,
            config.validity_channel,
        );
        Ok(Pipeline {
            level: config.level,
            ico_in,
            ico_out,
            charts,
            spheres,
            params,
            net,
            num_spheres: config.num_spheres,
            d_min: config.d_min,
        })
    }

    pub fn build_cache(&self, rig: &CameraRig) -> SweepCache {
        build_sweep_cache(rig, &self.ico_out, &self.spheres)
    }

    /// Projects one camera set of images onto the input icosphere.
    pub fn project(&self, rig: &CameraRig, images: &[Image]) -> Vec<IcoImage> {
        assert_eq!(rig.len(), images.len(), "image count != camera count");
        rig.cameras
            .iter()
            .zip(images)
            .map(|(cam, img)| project_to_icosphere(img, &cam.intrinsics, &cam.extrinsics, &self.ico_in))
            .collect()
    }

    /// Full inference from projected icosphere images; stage-timed.
    pub fn infer(&self, ico_images: &[IcoImage], cache: &Arc<SweepCache>) -> (Vec<f64>, StageTimings) {
        let mut timings = StageTimings::default();
        let mut g = Graph::new();

        let t0 = Instant::now();
        let feats: Vec<_> = ico_images
            .iter()
            .map(|ii| {
                let input = g.input(ii.values.clone());
                self.net
                    .extract_features(&mut g, &self.params, input, &self.charts)
            })
            .collect();
        timings.extraction = t0.elapsed();

        let t1 = Instant::now();
        let volume = g.cost_volume(feats, cache, self.net.validity_channel);
        timings.sweep = t1.elapsed();

        let t2 = Instant::now();
        let scores = self.net.regularize(&mut g, &self.params, volume, &self.charts.out);
        timings.regularize = t2.elapsed();

        let t3 = Instant::now();
        let pred = g.soft_argmax(scores);
        timings.regress = t3.elapsed();

        (g.value(pred).data().to_vec(), timings)
    }

    /// Inference straight from images (projection timed as its own stage).
    pub fn infer_images(
        &self,
        rig: &CameraRig,
        images: &[Image],
        cache: &Arc<SweepCache>,
    ) -> (Vec<f64>, StageTimings) {
        let t = Instant::now();
        let ico_images = self.project(rig, images);
        let projection = t.elapsed();
        let (pred, mut timings) = self.infer(&ico_images, cache);
        timings.projection = projection;
        (pred, timings)
    }
}

/// A scene rendered and projected for one specific rig.
pub struct SceneData {
    pub scene: Scene,
    pub images: Vec<Image>,
    pub ico_values: Vec<Tensor>,
    pub gt_depth: Vec<f64>,
    pub gt_index: Tensor,
}

/// Renders, projects, and derives ground truth for one scene under a rig.
pub fn prepare_scene(scene: &Scene, rig: &CameraRig, pipe: &Pipeline) -> SceneData {
    let images: Vec<Image> = rig
        .cameras
        .iter()
        .map(|cam| {
            render_fisheye(
                scene,
                &cam.extrinsics,
                &cam.intrinsics,
                cam.intrinsics.width(),
                cam.intrinsics.height(),
            )
        })
        .collect();
    let ico_images = pipe.project(rig, &images);
    let ico_values = ico_images.into_iter().map(|ii| ii.values).collect();
    let center = rig.center();
    let gt_depth = gt_depth_ico(scene, &center, &pipe.ico_out);
    let gt_index = Tensor::from_vec(
        &[gt_depth.len()],
        gt_depth
            .iter()
            .map(|&d| gt_index(d, pipe.d_min, pipe.num_spheres))
            .collect(),
    );
    SceneData {
        scene: scene.clone(),
        images,
        ico_values,
        gt_depth,
        gt_index,
    }
}

/// Masked metrics pooled over several scenes (per-vertex errors concatenated
/// before summarizing, so scenes with more visible vertices weigh more).
pub fn evaluate_scenes(
    pipe: &Pipeline,
    scenes: &[SceneData],
    cache: &Arc<SweepCache>,
) -> Metrics {
    let mut errors = Vec::new();
    for sd in scenes {
        let (pred, _) = pipe.infer_values(&sd.ico_values, cache);
        let mask = overlap_mask(cache, sd.gt_index.data());
        for i in 0..pred.len() {
            if mask[i] {
                errors.push(100.0 * (pred[i] - sd.gt_index.data()[i]).abs() / pipe.num_spheres as f64);
            }
        }
    }
    summarize_errors(&errors)
}

impl Pipeline {
    /// Inference from raw per-camera value tensors (already projected).
    pub fn infer_values(
        &self,
        ico_values: &[Tensor],
        cache: &Arc<SweepCache>,
    ) -> (Vec<f64>, StageTimings) {
        let mut g = Graph::new();
        let mut timings = StageTimings::default();
        let t0 = Instant::now();
        let pred = self
            .net
            .forward(&mut g, &self.params, ico_values, &self.charts, cache);
        timings.extraction = t0.elapsed();
        (g.value(pred).data().to_vec(), timings)
    }
}
