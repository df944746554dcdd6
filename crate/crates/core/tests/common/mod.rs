#![allow(dead_code)]

use doctags_prior::doctags::{DocElement, DocTagsDoc, LayoutTag, Locs, MAX_LOC};
use doctags_prior::layout::{BBox, Detection, PageDetections};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "alpha", "beta", "Gamma", "12.5%", "naïve", "東京", "a&b", "x>y", "(1)", "--", "über", "€42", "'q'", "\"z\"",
];

pub fn words(rng: &mut StdRng, max: usize) -> String {
    let n = rng.gen_range(0..=max);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str([" ", " ", "  ", "\t", "\n"].choose(rng).unwrap());
        }
        s.push_str(WORDS.choose(rng).unwrap());
    }
    s
}

pub fn locs(rng: &mut StdRng) -> Locs {
    let mut pair = || {
        let a = rng.gen_range(0..=MAX_LOC);
        let b = rng.gen_range(0..=MAX_LOC);
        (a.min(b), a.max(b))
    };
    let (x0, x1) = pair();
    let (y0, y1) = pair();
    Locs::new(x0, y0, x1, y1).unwrap()
}

pub fn otsl_body(rng: &mut StdRng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..12) {
        match rng.gen_range(0..6) {
            0 | 1 => {
                s.push_str("<fcel>");
                s.push_str(&words(rng, 2));
            }
            2 => s.push_str("<ecel>"),
            3 => s.push_str("<lcel>"),
            4 => s.push_str("<ucel>"),
            _ => s.push_str("<nl>"),
        }
    }
    s
}

pub fn element(rng: &mut StdRng, depth: usize) -> DocElement {
    let tag = *LayoutTag::ALL.choose(rng).unwrap();
    let mut el = DocElement::new(tag);
    if rng.gen_bool(0.7) {
        el = el.with_locs(locs(rng));
    }
    if tag == LayoutTag::Otsl {
        return el.with_content(otsl_body(rng));
    }
    if depth < 3 && rng.gen_bool(0.25) {
        let n = rng.gen_range(1..4);
        return el.with_children((0..n).map(|_| element(rng, depth + 1)).collect());
    }
    let content = words(rng, 6);
    if content.trim().is_empty() {
        el
    } else {
        el.with_content(content)
    }
}

pub fn doc(rng: &mut StdRng) -> DocTagsDoc {
    let n = rng.gen_range(0..8);
    DocTagsDoc::new((0..n).map(|_| element(rng, 0)).collect())
}

/// Detections on a `w x h` page, some off-page, with clustered overlaps.
pub fn page(rng: &mut StdRng, id: &str) -> PageDetections {
    let (w, h) = (rng.gen_range(100..2000), rng.gen_range(100..2000));
    let n = rng.gen_range(0..25);
    let mut dets = Vec::with_capacity(n);
    for _ in 0..n {
        let cls = rng.gen_range(0..17);
        // coarse grid and a few score levels so ties actually happen
        let x0 = f64::from(rng.gen_range(-2..20)) * w as f64 / 20.0;
        let y0 = f64::from(rng.gen_range(-2..20)) * h as f64 / 20.0;
        let x1 = x0 + f64::from(rng.gen_range(0..8)) * w as f64 / 20.0;
        let y1 = y0 + f64::from(rng.gen_range(0..8)) * h as f64 / 20.0;
        let score = f64::from(rng.gen_range(0..=20)) / 20.0;
        dets.push(Detection::new(cls, score, BBox::new(x0.max(0.0), y0.max(0.0), x1.max(0.0), y1.max(0.0)).unwrap()).unwrap());
    }
    PageDetections::new(id, w, h, dets).unwrap()
}
