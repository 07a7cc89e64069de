//! Diagnostic: where does the pitch-45 error live?

use std::sync::Arc;

use icosweep_core::config::RunConfig;
use icosweep_core::pipeline::{evaluate_scenes, prepare_scene};
use icosweep_core::scenegen::{generate, rotate_rig};
use icosweep_core::sweep::overlap_mask;
use icosweep_core::train::{rig_from_config, train};

fn main() {
    let mut cfg = RunConfig::default();
    for arg in std::env::args().skip(1) {
        if let Some((k, v)) = arg.split_once('=') {
            match k {
                "iterations" => cfg.iterations = v.parse().unwrap(),
                "validity_channel" => cfg.validity_channel = v.parse().unwrap(),
                "yaw_aug" => cfg.yaw_aug = v.parse().unwrap(),
                "fov" => cfg.fov_deg = v.parse().unwrap(),
                "mask_aug" => cfg.mask_aug = v.parse().unwrap(),
                "cam_dropout" => cfg.cam_dropout = v.parse().unwrap(),
                "color_jitter" => cfg.color_jitter = v.parse().unwrap(),
                "seed" => cfg.seed = v.parse().unwrap(),
                _ => panic!("unknown arg {k}"),
            }
        }
    }
    let (pipe, report) = train(&cfg, |_| {}).unwrap();
    println!(
        "train mae {:.3} -> {:.3}",
        report.initial_train.mae, report.final_train.mae
    );

    let base = rig_from_config(&cfg).unwrap();
    for pitch in [0.0, 45.0] {
        let rig = rotate_rig(&base, pitch);
        let cache = Arc::new(pipe.build_cache(&rig));
        let scenes: Vec<_> = cfg
            .val_scene_seeds
            .iter()
            .map(|&s| prepare_scene(&generate(s), &rig, &pipe))
            .collect();
        let m = evaluate_scenes(&pipe, &scenes, &cache);
        println!("pitch {pitch}: mae {:.3} count {}", m.mae, m.count);

        // Error by elevation band and by camera coverage at the gt sphere.
        let mut band_err = vec![(0.0, 0usize); 6];
        let mut cam_err = vec![(0.0, 0usize); 5];
        for sd in &scenes {
            let (pred, _) = pipe.infer_values(&sd.ico_values, &cache);
            let mask = overlap_mask(&cache, sd.gt_index.data());
            for i in 0..pred.len() {
                if !mask[i] {
                    continue;
                }
                let e = 100.0 * (pred[i] - sd.gt_index.data()[i]).abs() / cfg.num_spheres as f64;
                let z = pipe.ico_out.vertex(i).z;
                let band = (((z + 1.0) / 2.0 * 5.9999) as usize).min(5);
                band_err[band].0 += e;
                band_err[band].1 += 1;
                let j = (sd.gt_index.data()[i].round().clamp(1.0, cfg.num_spheres as f64) - 1.0)
                    as usize;
                let cams = (0..cache.num_cameras)
                    .filter(|&k| cache.entry(k, i, j).valid)
                    .count();
                cam_err[cams].0 += e;
                cam_err[cams].1 += 1;
            }
        }
        for (b, (s, c)) in band_err.iter().enumerate() {
            if *c > 0 {
                println!(
                    "  z band {:>2} [{:+.2}..{:+.2}]: mae {:.2} (n={})",
                    b,
                    -1.0 + b as f64 / 3.0,
                    -1.0 + (b + 1) as f64 / 3.0,
                    s / *c as f64,
                    c
                );
            }
        }
        for (k, (s, c)) in cam_err.iter().enumerate() {
            if *c > 0 {
                println!("  {k} cams valid: mae {:.2} (n={})", s / *c as f64, c);
            }
        }
    }
}
