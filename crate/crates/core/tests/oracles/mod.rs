//! Independent reference computations shared by the test suites and the
//! acceptance report.
#![allow(dead_code)]

pub mod gradients;

use deskew::datagen::{self, GenConfig, SampleRecord};
use deskew::eval;
use deskew::imaging::{self, ImageBuffer};
use deskew::seeded_rng;

/// Maps the outer page corners of the source document through margins,
/// page fit, homography and final resize, written out coordinate by
/// coordinate without the pipeline's helpers.
pub fn oracle_corners(rec: &SampleRecord) -> [f64; 8] {
    let p = &rec.params;
    let m = p.margins;
    let (w, h) = (p.doc_size[0] as f64, p.doc_size[1] as f64);
    // outer corners in source-document pixels (margins extend past the page)
    let doc_corners = [
        (-(m.left as f64), -(m.top as f64)),
        (w - 1.0 + m.right as f64, -(m.top as f64)),
        (w - 1.0 + m.right as f64, h - 1.0 + m.bottom as f64),
        (-(m.left as f64), h - 1.0 + m.bottom as f64),
    ];
    let page_w = (p.doc_size[0] + m.left + m.right) as f64;
    let page_h = (p.doc_size[1] + m.top + m.bottom) as f64;
    let fx = (p.fit_size[0] as f64 - 1.0) / (page_w - 1.0);
    let fy = (p.fit_size[1] as f64 - 1.0) / (page_h - 1.0);
    let hm = rec.source_h.to_row_major();
    let ox = (p.output_size[0] as f64 - 1.0) / (p.frame_size[0] as f64 - 1.0);
    let oy = (p.output_size[1] as f64 - 1.0) / (p.frame_size[1] as f64 - 1.0);
    let mut out = [0.0; 8];
    for (i, (x, y)) in doc_corners.into_iter().enumerate() {
        let u = (x + m.left as f64) * fx - p.page_center.x;
        let v = (y + m.top as f64) * fy - p.page_center.y;
        let den = hm[6] * u + hm[7] * v + hm[8];
        let fxp = (hm[0] * u + hm[1] * v + hm[2]) / den;
        let fyp = (hm[3] * u + hm[4] * v + hm[5]) / den;
        out[2 * i] = fxp * ox;
        out[2 * i + 1] = fyp * oy;
    }
    out
}

/// Pages from the fixture corpus rendered without photometric effects,
/// rectified with their own annotation and compared against the undistorted
/// page at output scale. Returns the worst channel error per sample.
pub fn deskew_round_trip_errors(n: u64) -> Vec<f64> {
    let tmp = tempfile::tempdir().unwrap();
    let set = deskew::fixtures::write_fixture_set(tmp.path(), 10, 10, 3).unwrap();
    let docs: Vec<ImageBuffer> = datagen::list_images(&set.docs)
        .unwrap()
        .iter()
        .map(|p| imaging::load_image(p).unwrap())
        .collect();
    let bgs: Vec<ImageBuffer> = datagen::list_images(&set.backgrounds)
        .unwrap()
        .iter()
        .map(|p| imaging::load_image(p).unwrap())
        .collect();
    let mut cfg = GenConfig::default();
    cfg.motion_blur.probability = 0.0;
    cfg.gaussian_blur.probability = 0.0;
    cfg.lighting.probability = 0.0;
    (0..n)
        .map(|i| {
            let doc = &docs[i as usize % docs.len()];
            let bg = &bgs[(i as usize * 7) % bgs.len()];
            let mut rng = seeded_rng(datagen::sample_seed(3, i));
            let (img, rec) = datagen::generate_sample(doc, bg, &mut rng, &cfg).unwrap();
            let p = &rec.params;
            let page = datagen::fitted_page(doc, p).unwrap();
            let rw =
                (p.fit_size[0] as f64 * p.output_size[0] as f64 / p.frame_size[0] as f64).round();
            let rh =
                (p.fit_size[1] as f64 * p.output_size[1] as f64 / p.frame_size[1] as f64).round();
            let reference = imaging::resize_bilinear(&page, rw as usize, rh as usize).unwrap();
            eval::reconstruction_error(&img, &rec.corners, &reference, 2)
                .unwrap()
                .expect("some page pixels are visible")
                .into_iter()
                .fold(0.0, f64::max)
        })
        .collect()
}
