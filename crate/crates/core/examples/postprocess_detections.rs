//! Detector clean-up: strict confidence filter, fragment merge, then NMS.

use doctags_prior::layout::{postprocess, BBox, Detection, PageDetections, PostprocessConfig};

fn det(cls: i64, score: f64, b: [f64; 4]) -> Detection {
    Detection::new(cls, score, BBox::new(b[0], b[1], b[2], b[3]).unwrap()).unwrap()
}

fn main() {
    let page = PageDetections::new(
        "p1",
        1000,
        1400,
        vec![
            det(9, 0.95, [100.0, 100.0, 900.0, 300.0]),
            // near-duplicate text box: mostly inside the first, so the two merge into their hull
            det(9, 0.90, [110.0, 105.0, 905.0, 310.0]),
            // fragment inside the first box, absorbed by the same merge
            det(9, 0.85, [120.0, 120.0, 400.0, 180.0]),
            // exactly at the threshold: dropped, the filter is strict
            det(6, 0.60, [100.0, 400.0, 900.0, 900.0]),
            det(6, 0.61, [100.0, 400.0, 900.0, 900.0]),
            // spills off the page and is clamped on load
            det(4, 0.99, [100.0, 1350.0, 900.0, 1500.0]),
            // same class, IoU 0.6 with the picture but IoS only 0.75: not merged, NMS keeps the higher score
            det(6, 0.70, [100.0, 525.0, 900.0, 1025.0]),
        ],
    )
    .unwrap();

    let cfg = PostprocessConfig::default();
    let out = postprocess(&page, &cfg);
    for d in &out.detections {
        println!("class {:>2} score {:.2} bbox {:?}", d.cls, d.score, d.bbox);
    }
    assert_eq!(postprocess(&out, &cfg), out);
}
