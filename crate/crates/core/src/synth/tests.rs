use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::detect::TileGrid;
use crate::imaging::{iou, rgb_pixel_to_hsv, BoundingBox, ColorSpace, Image};
use crate::label::LightCombination as L;
use crate::Error;

fn one_tower_scene(model: TowerModel, segments: Vec<LightSegment>, frames: usize) -> Scene {
    Scene {
        width: 160,
        height: 200,
        towers: vec![TowerSpec { id: "a".to_string(), model, position: BoundingBox::new(60, 40, 40, 110) }],
        background: BackgroundSpec::plain(1),
        timeline: Timeline { frames, towers: vec![segments], occluders: vec![] },
        noise_sigma: 0.005,
    }
}

fn seg(start: usize, combination: L, fade_frames: usize) -> LightSegment {
    LightSegment { start, combination, fade_frames }
}

fn lens_hsv(img: &Image, tower: &TowerSpec, i: usize) -> (f64, f64, f64) {
    let (cx, cy) = lens_center(tower, i);
    let p = img.pixel(cx as usize, cy as usize);
    rgb_pixel_to_hsv(p[0], p[1], p[2])
}

/// Independent reading of a rendered tower: lens-centre thresholds only.
fn pixel_rule(img: &Image, tower: &TowerSpec) -> Option<L> {
    let mut on = [false; 4];
    for (i, lamp) in tower.model.lamps().iter().enumerate() {
        let (_, s, v) = lens_hsv(img, tower, i);
        let lit = match lamp {
            Lamp::White => v >= 0.9,
            _ => v >= 0.9 && s >= 0.8,
        };
        if !lit && v > 0.25 {
            return None;
        }
        let slot = match lamp {
            Lamp::Green => 0,
            Lamp::Yellow => 1,
            Lamp::Red => 2,
            Lamp::White => 3,
        };
        on[slot] = lit;
    }
    L::from_lamps(on[0], on[1], on[2], on[3])
}

#[test]
fn green_lens_hue() {
    let scene = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Green, 0)], 5);
    let (img, ann) = render_frame(&scene, 2, 11).unwrap();
    assert_eq!(ann.towers[0].label, L::Green);
    assert_eq!(ann.towers[0].fade, 1.0);
    let (h, s, v) = lens_hsv(&img, &scene.towers[0], 2);
    assert!((h - 1.0 / 3.0).abs() <= 0.05, "hue {h}");
    assert!(s >= 0.8 && v >= 0.9);
    for i in 0..2 {
        assert!(lens_hsv(&img, &scene.towers[0], i).2 <= 0.25);
    }
}

#[test]
fn fade_midpoint_is_linear() {
    let scene = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Off, 0), seg(10, L::Green, 8)], 30);
    let (img, ann) = render_frame(&scene, 14, 5).unwrap();
    assert_eq!(ann.towers[0].fade, 0.5);
    assert_eq!(ann.towers[0].label, L::Green);
    assert!(ann.towers[0].ambiguous);
    let lit = lamp_rgb(Lamp::Green)[1];
    let unlit = 0.15 * lit + 0.04;
    let v = lens_hsv(&img, &scene.towers[0], 2).2;
    assert!((v - (lit + unlit) / 2.0).abs() < 0.03, "v {v}");

    let early = scene.annotate(11).unwrap().towers[0].clone();
    assert_eq!(early.label, L::Off);
    assert_eq!(early.fade, 0.125);
    assert!(!early.ambiguous);
    assert_eq!(scene.annotate(18).unwrap().towers[0].fade, 1.0);
}

#[test]
fn rendering_is_deterministic() {
    let mut a = DatasetPlan::new(SceneConfig { width: 1280, height: 720, ..Default::default() }, TimelineConfig::default(), 17).unwrap();
    let mut b = a.clone();
    let (sa, sb) = (a.next(40).unwrap(), b.next(40).unwrap());
    assert_eq!(sa, sb);
    let (ia, aa) = render_frame(&sa, 7, 99).unwrap();
    let (ib, ab) = render_frame(&sb, 7, 99).unwrap();
    assert_eq!(ia, ib);
    assert_eq!(aa, ab);
    let (ic, _) = render_frame(&sa, 7, 100).unwrap();
    assert_ne!(ia, ic);
}

#[test]
fn frame_outside_timeline() {
    let scene = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Red, 0)], 5);
    assert!(matches!(render_frame(&scene, 5, 0), Err(Error::InvalidArgument(_))));
    assert!(matches!(scene.annotate(9), Err(Error::InvalidArgument(_))));
}

#[test]
fn scene_validation() {
    let bad_model = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::GreenWhite, 0)], 5);
    assert!(bad_model.validate().is_err());
    let bad_model = one_tower_scene(TowerModel::Bicolor, vec![seg(0, L::YellowRed, 0)], 5);
    assert!(bad_model.validate().is_err());
    let long_fade = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Red, 0), seg(3, L::Green, 2)], 5);
    assert!(long_fade.validate().is_err());
    let late_start = one_tower_scene(TowerModel::Tricolor, vec![seg(1, L::Red, 0)], 5);
    assert!(late_start.validate().is_err());
    let mut noisy = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Red, 0)], 5);
    noisy.noise_sigma = 0.02;
    assert!(noisy.validate().is_err());
    let mut outside = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Red, 0)], 5);
    outside.towers[0].position = BoundingBox::new(150, 40, 40, 110);
    assert!(outside.validate().is_err());
}

#[test]
fn model_support() {
    assert!(TowerModel::Bicolor.supports(L::GreenWhite));
    assert!(TowerModel::Bicolor.supports(L::Off));
    assert!(!TowerModel::Bicolor.supports(L::Yellow));
    assert!(!TowerModel::Tricolor.supports(L::GreenWhite));
    assert!(TowerModel::Tricolor.supports(L::GreenYellowRed));
    assert!(!TowerModel::Tricolor.supports(L::Other));
    assert_eq!(TowerModel::Tricolor.lamps().len(), 3);
    assert_eq!(TowerModel::Bicolor.lamps().len(), 2);
}

#[test]
fn occluder_relabels_as_other() {
    let mut scene = one_tower_scene(TowerModel::Tricolor, vec![seg(0, L::Red, 0)], 10);
    let tower = scene.towers[0].position;
    scene.timeline.occluders.push(OccluderEvent { start: 2, end: 5, from: tower.expand_clipped(4, 4, 4, 4, 160, 200), to: tower, color: [0.5, 0.4, 0.4] });
    scene.timeline.occluders.push(OccluderEvent { start: 6, end: 8, from: BoundingBox::new(60, 40, 10, 110), to: BoundingBox::new(60, 40, 10, 110), color: [0.5, 0.4, 0.4] });
    let a = scene.annotate(1).unwrap();
    assert_eq!(a.towers[0].label, L::Red);
    assert!(!a.towers[0].occluded);
    for f in 2..5 {
        let t = &scene.annotate(f).unwrap().towers[0];
        assert_eq!(t.label, L::Other);
        assert!(t.occluded);
    }
    let partial = &scene.annotate(6).unwrap().towers[0];
    assert_eq!(partial.label, L::Red);
    assert!(partial.occluded && partial.ambiguous);
    let (img, _) = render_frame(&scene, 3, 0).unwrap();
    assert!(pixel_rule(&img, &scene.towers[0]).is_none());
}

#[test]
fn generated_scenes_respect_layout_rules() {
    let cfg = SceneConfig::default();
    let mut plan = DatasetPlan::new(cfg.clone(), TimelineConfig::default(), 5).unwrap();
    let grid = TileGrid::default();
    for scene in plan.scenes(400).unwrap() {
        assert_eq!(scene.towers.len(), 5);
        assert_eq!(scene.towers.iter().filter(|t| t.model == TowerModel::Bicolor).count(), 1);
        for (i, t) in scene.towers.iter().enumerate() {
            let b = t.position;
            assert!((TOWER_WIDTH_RANGE.0..=TOWER_WIDTH_RANGE.1).contains(&b.w));
            assert!((TOWER_HEIGHT_RANGE.0..=TOWER_HEIGHT_RANGE.1).contains(&b.h));
            let wb = b.scaled(grid.working_width() as f64 / cfg.width as f64, grid.working_height() as f64 / cfg.height as f64);
            let tiles: Vec<usize> = (0..grid.len()).filter(|&k| grid.tile_box(k).intersection(&wb).is_some()).collect();
            assert_eq!(tiles.len(), 1, "tower {b:?} crosses a tile seam");
            for u in &scene.towers[i + 1..] {
                assert!(u.position.intersection(&b).is_none());
            }
        }
    }
}

#[test]
fn manifest_counts() {
    let mut plan = DatasetPlan::new(SceneConfig::default(), TimelineConfig::default(), 1).unwrap();
    let scenes = plan.scenes(100).unwrap();
    let mut entries = 0;
    let mut frames = 0;
    for s in &scenes {
        for f in 0..s.timeline.frames {
            let a = s.annotate(f).unwrap();
            entries += a.towers.len();
            frames += 1;
            for t in &a.towers {
                assert!(t.bbox.fits_within(s.width, s.height));
            }
        }
    }
    assert_eq!((frames, entries), (100, 500));
}

#[test]
fn class_mixture_tracks_distribution() {
    let dist = ClassDistribution::slcd();
    let target = dist.shares().unwrap();
    assert!((target[L::Other.index()] - 0.151).abs() < 0.001);
    let mut plan = DatasetPlan::new(SceneConfig::default(), TimelineConfig::default(), 21).unwrap();
    let mut counts = [0usize; 10];
    let mut total = 0;
    for s in plan.scenes(3000).unwrap() {
        for f in 0..s.timeline.frames {
            for t in s.annotate(f).unwrap().towers {
                counts[t.label.index()] += 1;
                total += 1;
            }
        }
    }
    for c in 0..10 {
        let share = counts[c] as f64 / total as f64;
        assert!((share - target[c]).abs() <= 0.03, "{}: {share:.4} vs {:.4}", L::ALL[c], target[c]);
    }
}

#[test]
fn pixel_rule_agrees_with_annotations() {
    let cfg = SceneConfig { width: 1280, height: 720, ..SceneConfig::default() };
    let mut plan = DatasetPlan::new(cfg, TimelineConfig::default(), 8).unwrap();
    let mut checked = 0;
    for scene in plan.scenes(200).unwrap() {
        let r = SceneRenderer::new(&scene).unwrap();
        for f in (0..scene.timeline.frames).step_by(7) {
            let (img, ann) = r.render(f, 4).unwrap();
            for (t, a) in scene.towers.iter().zip(&ann.towers) {
                if a.occluded || (a.fade != 0.0 && a.fade != 1.0) {
                    continue;
                }
                assert_eq!(pixel_rule(&img, t), Some(a.label), "frame {f} tower {}", a.id);
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn crop_margins_are_uniform() {
    let b = BoundingBox::new(100, 100, 30, 90);
    let mut sums = [0.0f64; 4];
    let n = 10_000;
    for s in 0..n {
        let c = light_crop_box(400, 400, b, s);
        let m = [b.x - c.x, b.y - c.y, c.right() - b.right(), c.bottom() - b.bottom()];
        for k in 0..4 {
            assert!(m[k] <= MARGIN_MAX);
            sums[k] += m[k] as f64;
        }
    }
    for s in sums {
        assert!((s / n as f64 - 10.0).abs() <= 0.5, "mean margin {}", s / n as f64);
    }
}

#[test]
fn crop_at_frame_edge_is_clipped() {
    let frame = Image::filled(100, 120, ColorSpace::Rgb, &[0.2, 0.3, 0.4]).unwrap();
    let b = BoundingBox::new(0, 0, 30, 90);
    for s in 0..50 {
        let c = light_crop_box(100, 120, b, s);
        assert_eq!((c.x, c.y), (0, 0));
        assert!(c.fits_within(100, 120));
        let img = crop_light(&frame, b, s).unwrap();
        assert_eq!((img.width(), img.height()), (c.w as usize, c.h as usize));
        assert_eq!(img, frame.crop(c).unwrap());
    }
    assert!(crop_light(&frame, BoundingBox::new(90, 0, 30, 90), 0).is_err());
}

#[test]
fn other_crops_avoid_towers() {
    let frame = Image::filled(400, 300, ColorSpace::Rgb, &[0.5, 0.5, 0.5]).unwrap();
    let towers = [BoundingBox::new(50, 50, 40, 110), BoundingBox::new(250, 100, 30, 100)];
    for s in 0..1000 {
        let (img, b) = random_other_crop(&frame, &towers, (20, 60), (60, 120), s).unwrap();
        assert!((20..=60).contains(&b.w) && (60..=120).contains(&b.h));
        assert_eq!((img.width(), img.height()), (b.w as usize, b.h as usize));
        assert!(towers.iter().all(|t| iou(&b, t) < 0.2));
    }
    let (_, b) = random_other_crop(&frame, &[], (400, 400), (300, 300), 0).unwrap();
    assert_eq!(b, BoundingBox::new(0, 0, 400, 300));
    let everywhere = [BoundingBox::new(0, 0, 400, 300)];
    assert!(matches!(random_other_crop(&frame, &everywhere, (300, 400), (250, 300), 0), Err(Error::Placement(_))));
    assert!(matches!(random_other_crop(&frame, &[], (10, 500), (10, 20), 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn crop_set_follows_quotas() {
    let cfg = CropSetConfig::default();
    let crops = sample_crops(&cfg, 200, 3).unwrap();
    assert_eq!(crops.len(), 200);
    let shares = cfg.distribution.shares().unwrap();
    for c in 0..10 {
        let n = crops.iter().filter(|k| k.label.index() == c).count() as f64;
        assert!((n - shares[c] * 200.0).abs() <= 1.0);
    }
    for (i, k) in crops.iter().enumerate() {
        assert_eq!(k.id, i as u64);
        assert!(k.image.width() >= 25 && k.image.height() >= 86);
        assert_eq!(k.image.colorspace(), ColorSpace::Rgb);
    }
    assert_eq!(sample_crops(&cfg, 200, 3).unwrap(), crops);
    let labels = crop_labels(&cfg, 200, 3).unwrap();
    assert!(crops.iter().zip(&labels).all(|(k, l)| k.label == *l));
    let picked = sample_crops_at(&cfg, 200, 3, &[7, 150, 3]).unwrap();
    assert_eq!(picked, vec![crops[7].clone(), crops[150].clone(), crops[3].clone()]);
    assert!(sample_crops_at(&cfg, 200, 3, &[200]).is_err());
}

#[test]
fn dataset_plan_rejects_bad_configs() {
    let bad = SceneConfig { towers: 2, bicolor_towers: 3, ..SceneConfig::default() };
    assert!(DatasetPlan::new(bad, TimelineConfig::default(), 0).is_err());
    let bad = TimelineConfig { min_segment: 50, max_segment: 10, ..TimelineConfig::default() };
    assert!(DatasetPlan::new(SceneConfig::default(), bad, 0).is_err());
    let tiny = SceneConfig { width: 100, height: 100, ..SceneConfig::default() };
    assert!(matches!(DatasetPlan::new(tiny, TimelineConfig::default(), 0).unwrap().next(10), Err(Error::InvalidArgument(_))));
    for bad in [
        CropSetConfig { fade_fraction: 1.5, ..CropSetConfig::default() },
        CropSetConfig { backdrop_other_fraction: -0.1, ..CropSetConfig::default() },
        CropSetConfig { noise_sigma: 0.2, ..CropSetConfig::default() },
    ] {
        assert!(sample_crops(&bad, 3, 0).is_err());
    }
}

#[test]
fn manifest_line_json_shape() {
    let line = ManifestLine {
        frame: "f000001.png".to_string(),
        index: 1,
        towers: vec![TowerAnnotation { id: "m0".to_string(), bbox: BoundingBox::new(1, 2, 3, 4), label: L::GreenYellow, fade: 1.0, occluded: false, ambiguous: false }],
    };
    let v: serde_json::Value = serde_json::to_value(&line).unwrap();
    assert_eq!(v["frame"], "f000001.png");
    assert_eq!(v["towers"][0]["box"], serde_json::json!([1, 2, 3, 4]));
    assert_eq!(v["towers"][0]["label"], "GreenYellow");
    assert_eq!(v["towers"][0]["fade"], 1.0);
    let back: ManifestLine = serde_json::from_value(v).unwrap();
    assert_eq!(back, line);
}
