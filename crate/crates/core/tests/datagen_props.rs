mod oracles;

use std::path::{Path, PathBuf};

use deskew::datagen::{
    self, generate_dataset, plan_sample, DatasetManifest, GenConfig, GenerateOptions, Split,
};
use deskew::fixtures::write_fixture_set;
use deskew::homography::Point2;
use deskew::imaging::ImageBuffer;
use deskew::seeded_rng;
use proptest::prelude::*;

fn small_config(seed: u64) -> GenConfig {
    GenConfig {
        output_size: [96, 64],
        working_size: [192, 128],
        seed,
        ..GenConfig::default()
    }
}

fn fixtures(dir: &Path) -> (PathBuf, Vec<PathBuf>) {
    let set = write_fixture_set(dir, 4, 4, 11).unwrap();
    (set.docs, vec![set.backgrounds])
}

#[test]
fn annotation_oracle_two_hundred_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let (docs, bgs) = fixtures(tmp.path());
    let mut cfg = small_config(5);
    cfg.occlusion_margins = None;
    let m = generate_dataset(
        &docs,
        &bgs,
        200,
        &cfg,
        tmp.path().join("ds"),
        Default::default(),
    )
    .unwrap();
    assert_eq!(m.records.len(), 200);
    for rec in &m.records {
        let want = oracles::oracle_corners(rec);
        for (a, b) in rec.corners.to_flat().iter().zip(want) {
            assert!((a - b).abs() <= 1e-6, "{}: {a} vs {b}", rec.id);
        }
    }
}

#[test]
fn parallelism_does_not_change_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (docs, bgs) = fixtures(tmp.path());
    let cfg = small_config(7);
    let run = |name: &str, threads| {
        let out = tmp.path().join(name);
        generate_dataset(
            &docs,
            &bgs,
            12,
            &cfg,
            &out,
            GenerateOptions {
                threads: Some(threads),
            },
        )
        .unwrap();
        out
    };
    let a = run("one", 1);
    let b = run("three", 3);
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let m = DatasetManifest::load(a.join("manifest.json")).unwrap();
    for rec in &m.records {
        let ia = std::fs::read(a.join(&rec.image_path)).unwrap();
        let ib = std::fs::read(b.join(&rec.image_path)).unwrap();
        assert_eq!(ia, ib, "{}", rec.image_path);
        assert!(a.join(&rec.image_path).is_file());
    }
}

#[test]
fn split_is_a_partition() {
    let tmp = tempfile::tempdir().unwrap();
    let (docs, bgs) = fixtures(tmp.path());
    let m = generate_dataset(
        &docs,
        &bgs,
        10,
        &small_config(1),
        tmp.path().join("ds"),
        Default::default(),
    )
    .unwrap();
    let count = |s| m.records.iter().filter(|r| r.split == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (8, 1, 1)
    );
    assert_eq!((m.counts.train, m.counts.val, m.counts.test), (8, 1, 1));
    let mut ids: Vec<&str> = m.records.iter().map(|r| r.id.as_str()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 10);
    for r in &m.records {
        assert!(r.image_path.starts_with(r.split.name()));
    }
}

#[test]
fn empty_source_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let (docs, _) = fixtures(tmp.path());
    let err = generate_dataset(
        &docs,
        &[empty],
        3,
        &small_config(0),
        tmp.path().join("o"),
        Default::default(),
    );
    assert!(matches!(err, Err(deskew::Error::EmptySourceDirectory(_))));
}

#[test]
fn occlusion_keeps_annotations() {
    let doc = deskew::fixtures::document(&mut seeded_rng(1), 200, 280).unwrap();
    let bg = deskew::fixtures::texture(&mut seeded_rng(2), 300, 200).unwrap();
    let plain = GenConfig::default();
    let occluded = GenConfig {
        occlusion_margins: Some(Default::default()),
        ..GenConfig::default()
    };
    for seed in 0..5 {
        let (_, a) = datagen::generate_sample(&doc, &bg, &mut seeded_rng(seed), &plain).unwrap();
        let (img, b) =
            datagen::generate_sample(&doc, &bg, &mut seeded_rng(seed), &occluded).unwrap();
        assert_eq!(a.corners, b.corners);
        assert_eq!(a.source_h, b.source_h);
        assert_eq!(img.get(29, 100, 0), 0.0);
        assert_eq!(img.get(200, 39, 2), 0.0);
    }
}

#[test]
fn most_samples_keep_a_corner_in_frame() {
    // default geometry over 1000 plans; a 384x256 frame and a portrait page
    let cfg = GenConfig::default();
    let mut visible = 0;
    for i in 0..1000u64 {
        let mut rng = seeded_rng(datagen::sample_seed(99, i));
        let (p, h) = plan_sample(&mut rng, &cfg, (300, 420), (640, 480)).unwrap();
        let c = datagen::planned_corners(&p, &h).unwrap();
        assert!(c.corners.iter().all(Point2::is_finite));
        if datagen::corners_in_frame(&c, 384, 256) > 0 {
            visible += 1;
        }
    }
    assert!(visible >= 990, "{visible}/1000");
}

#[test]
fn fixed_seed_sample_is_byte_identical() {
    let doc = deskew::fixtures::document(&mut seeded_rng(3), 150, 200).unwrap();
    let bg = deskew::fixtures::texture(&mut seeded_rng(4), 200, 150).unwrap();
    let cfg = small_config(0);
    let (a, ra) = datagen::generate_sample(&doc, &bg, &mut seeded_rng(8), &cfg).unwrap();
    let (b, rb) = datagen::generate_sample(&doc, &bg, &mut seeded_rng(8), &cfg).unwrap();
    assert_eq!(deskew::imaging::to_bytes(&a), deskew::imaging::to_bytes(&b));
    assert_eq!(
        serde_json::to_string(&ra).unwrap(),
        serde_json::to_string(&rb).unwrap()
    );
}

#[test]
fn manifest_schema_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("manifest.json");
    std::fs::write(&p, r#"{"version": 1, "config": {}, "counts": {"train": 0, "val": 0, "test": 0}, "records": [], "extra": 1}"#).unwrap();
    let err = DatasetManifest::load(&p).unwrap_err().to_string();
    assert!(err.contains("extra"), "{err}");
    std::fs::write(&p, r#"{"version": 1, "config": {"seed": "x"}, "counts": {"train": 0, "val": 0, "test": 0}, "records": []}"#).unwrap();
    let err = DatasetManifest::load(&p).unwrap_err().to_string();
    assert!(err.contains("config.seed"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_stay_in_range(seed in any::<u64>(), pw in 50usize..500, ph in 50usize..500) {
        let cfg = GenConfig::default();
        let h = datagen::sample_homography(&mut seeded_rng(seed), &cfg, (pw, ph), (768, 512)).unwrap();
        prop_assert!((0.7..=1.3).contains(&h.coeff(1, 1)) && (0.7..=1.3).contains(&h.coeff(2, 2)));
        prop_assert!((-0.3..=0.3).contains(&h.coeff(1, 2)) && (-0.3..=0.3).contains(&h.coeff(2, 1)));
        prop_assert!(h.coeff(3, 1).abs() <= 0.0015 && h.coeff(3, 2).abs() <= 0.0015);
        prop_assert_eq!(h.coeff(3, 3), 1.0);
    }

    #[test]
    fn split_counts_follow_the_rounding_rule(n in 1usize..500, seed in any::<u64>()) {
        let f = [0.8, 0.1, 0.1];
        let splits = datagen::assign_splits(n, f, seed);
        let c = datagen::SplitCounts::for_total(n, f);
        prop_assert_eq!(c.train + c.val + c.test, n);
        prop_assert_eq!(c.val, (n as f64 * 0.1).floor() as usize);
        for s in Split::ALL {
            prop_assert_eq!(splits.iter().filter(|&&x| x == s).count(), c.get(s));
        }
    }

    #[test]
    fn zero_margins_only_touches_bands(lr in 0usize..10, tb in 0usize..10, v in 0.0f32..1.0) {
        let img = ImageBuffer::filled(24, 20, 3, v).unwrap();
        let z = datagen::zero_margins(&img, lr, tb).unwrap();
        for y in 0..20 {
            for x in 0..24 {
                let band = x < lr || x >= 24 - lr || y < tb || y >= 20 - tb;
                prop_assert_eq!(z.get(x, y, 1), if band { 0.0 } else { v });
            }
        }
    }
}
