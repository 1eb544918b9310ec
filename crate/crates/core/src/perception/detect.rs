//! Blob, post, obstacle and line-crossing detection on segmented images.

use super::camera::{depression, unproject_pixel, unproject_to_height, CameraPose, FisheyeCamera};
use super::lut::ColorClass;
use super::segment::{BinaryImage, Segmentation, BLOCK};
use crate::messages::{BallObs, CrossingKind, CrossingObs, DetectionSet, ObstacleObs};
use nalgebra::Vector3;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// subsampled pixels
    pub min_ball_blocks: usize,
    pub min_post_blocks: usize,
    pub min_obstacle_blocks: usize,
    /// bounding-box height/width above which a yellow blob is a post
    pub post_aspect: f64,
    pub ball_radius: f64,
    pub post_radius: f64,
    /// ring radius for skeleton branch counting, subsampled pixels
    pub crossing_ring: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            min_ball_blocks: 2,
            min_post_blocks: 3,
            min_obstacle_blocks: 6,
            post_aspect: 1.5,
            ball_radius: 0.1,
            post_radius: 0.05,
            crossing_ring: 3,
        }
    }
}

/// A 4-connected component of a binary image.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub pixels: Vec<(usize, usize)>,
    /// inclusive (x0, y0, x1, y1)
    pub bbox: (usize, usize, usize, usize),
}

impl Blob {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }

    pub fn width(&self) -> usize {
        self.bbox.2 - self.bbox.0 + 1
    }

    pub fn height(&self) -> usize {
        self.bbox.3 - self.bbox.1 + 1
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
        [sx / n, sy / n]
    }
}

pub fn blobs(img: &BinaryImage) -> Vec<Blob> {
    blobs_of(img.width, img.height, |x, y| img.get(x, y))
}

fn blobs_of(w: usize, h: usize, set: impl Fn(usize, usize) -> bool) -> Vec<Blob> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if seen[y0 * w + x0] || !set(x0, y0) {
                continue;
            }
            seen[y0 * w + x0] = true;
            stack.push((x0, y0));
            let mut blob = Blob {
                pixels: Vec::new(),
                bbox: (x0, y0, x0, y0),
            };
            while let Some((x, y)) = stack.pop() {
                blob.pixels.push((x, y));
                let b = &mut blob.bbox;
                *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
                let mut visit = |nx: usize, ny: usize| {
                    if !seen[ny * w + nx] && set(nx, ny) {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                };
                if x > 0 {
                    visit(x - 1, y);
                }
                if x + 1 < w {
                    visit(x + 1, y);
                }
                if y > 0 {
                    visit(x, y - 1);
                }
                if y + 1 < h {
                    visit(x, y + 1);
                }
            }
            out.push(blob);
        }
    }
    out
}

/// Convex hull, counter-clockwise in image coordinates.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn inside_hull(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-9
    })
}

fn block_center(x: f64, y: f64) -> [f64; 2] {
    [
        x * BLOCK as f64 + BLOCK as f64 / 2.0,
        y * BLOCK as f64 + BLOCK as f64 / 2.0,
    ]
}

/// Full-resolution pixels of `class` inside a blob's padded block box.
fn full_res_pixels(seg: &Segmentation, blob: &Blob, class: ColorClass) -> Vec<[usize; 2]> {
    let x0 = (blob.bbox.0 * BLOCK).saturating_sub(BLOCK);
    let y0 = (blob.bbox.1 * BLOCK).saturating_sub(BLOCK);
    let x1 = ((blob.bbox.2 + 2) * BLOCK).min(seg.width);
    let y1 = ((blob.bbox.3 + 2) * BLOCK).min(seg.height);
    let mut out = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            if seg.class_at(x, y) == class as u8 {
                out.push([x, y]);
            }
        }
    }
    out
}

/// Pixel whose ray points furthest below the horizon: the near base of an
/// upright object.
fn lowest_pixel(camera: &FisheyeCamera, pose: &CameraPose, pixels: &[[usize; 2]]) -> Option<[f64; 2]> {
    pixels
        .iter()
        .filter_map(|p| {
            let px = [p[0] as f64 + 0.5, p[1] as f64 + 0.5];
            depression(camera, pose, px).map(|d| (d, px))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, px)| px)
}

/// Ground point of the near surface pushed back by `radius` along the view.
fn foot_to_center(pose: &CameraPose, ground: Vector3<f64>, radius: f64) -> [f64; 2] {
    let cam = pose.position();
    let (dx, dy) = (ground.x - cam.x, ground.y - cam.y);
    let n = dx.hypot(dy);
    if n == 0.0 {
        return [ground.x, ground.y];
    }
    [ground.x + radius * dx / n, ground.y + radius * dy / n]
}

pub fn detect_objects(
    seg: &Segmentation,
    camera: &FisheyeCamera,
    pose: &CameraPose,
    p: &DetectorParams,
) -> DetectionSet {
    let green = seg.binary(ColorClass::Green);
    let green_pts: Vec<[f64; 2]> = green
        .bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| block_center((i % green.width) as f64, (i / green.width) as f64))
        .collect();
    let hull = convex_hull(&green_pts);
    let mut out = DetectionSet {
        field_hull: hull.clone(),
        ..DetectionSet::default()
    };

    // ball: largest orange blob inside the field
    let mut balls: Vec<Blob> = blobs(seg.binary(ColorClass::Orange))
        .into_iter()
        .filter(|b| b.size() >= p.min_ball_blocks)
        .filter(|b| {
            let c = b.centroid();
            inside_hull(&hull, block_center(c[0], c[1]))
        })
        .collect();
    balls.sort_by_key(|b| std::cmp::Reverse(b.size()));
    if let Some(b) = balls.first() {
        let px = full_res_pixels(seg, b, ColorClass::Orange);
        if !px.is_empty() {
            let n = px.len() as f64;
            let (sx, sy) = px
                .iter()
                .fold((0.0, 0.0), |(a, c), q| (a + q[0] as f64, c + q[1] as f64));
            let center = [sx / n + 0.5, sy / n + 0.5];
            let x0 = px.iter().map(|q| q[0]).min().unwrap_or(0);
            let x1 = px.iter().map(|q| q[0]).max().unwrap_or(0);
            let y0 = px.iter().map(|q| q[1]).min().unwrap_or(0);
            let y1 = px.iter().map(|q| q[1]).max().unwrap_or(0);
            let (xs, ys) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
            let fill = (n / (PI / 4.0 * xs * ys)).min(1.0);
            if let Ok(v) = unproject_to_height(camera, pose, center, Some(p.ball_radius)) {
                out.ball = Some(BallObs {
                    position: [v.x, v.y],
                    pixel: center,
                    confidence: fill,
                });
            }
        }
    }

    // goal posts: upright yellow blobs, biggest two
    let mut posts: Vec<Blob> = blobs(seg.binary(ColorClass::Yellow))
        .into_iter()
        .filter(|b| b.size() >= p.min_post_blocks && b.height() as f64 / b.width() as f64 > p.post_aspect)
        .collect();
    posts.sort_by_key(|b| std::cmp::Reverse(b.size()));
    for b in posts.iter().take(2) {
        let px = full_res_pixels(seg, b, ColorClass::Yellow);
        if let Some(foot) = lowest_pixel(camera, pose, &px) {
            if let Ok(g) = unproject_pixel(camera, pose, foot, true) {
                out.posts.push(foot_to_center(pose, g, p.post_radius));
            }
        }
    }

    // obstacles: black blobs standing inside the field
    for b in blobs(seg.binary(ColorClass::Black)) {
        if b.size() < p.min_obstacle_blocks {
            continue;
        }
        let px = full_res_pixels(seg, &b, ColorClass::Black);
        let Some(foot) = lowest_pixel(camera, pose, &px) else {
            continue;
        };
        if !inside_hull(&hull, foot) {
            continue;
        }
        let Ok(g) = unproject_pixel(camera, pose, foot, true) else {
            continue;
        };
        let range = (g - pose.position()).norm();
        let width = b.width() as f64 * BLOCK as f64 / camera.focal * range;
        out.obstacles.push(ObstacleObs {
            position: foot_to_center(pose, g, width / 2.0),
            width,
        });
    }

    out.crossings = detect_crossings(seg, &hull, camera, pose, p.crossing_ring);
    out
}

/// Zhang–Suen thinning of a binary grid (row-major).
pub fn thin(w: usize, h: usize, bits: &[bool]) -> Vec<bool> {
    let mut img = bits.to_vec();
    let at = |img: &[bool], x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && img[y as usize * w + x as usize]
    };
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut remove = Vec::new();
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if !at(&img, x, y) {
                        continue;
                    }
                    // P2..P9 clockwise from north
                    let n = [
                        at(&img, x, y - 1),
                        at(&img, x + 1, y - 1),
                        at(&img, x + 1, y),
                        at(&img, x + 1, y + 1),
                        at(&img, x, y + 1),
                        at(&img, x - 1, y + 1),
                        at(&img, x - 1, y),
                        at(&img, x - 1, y - 1),
                    ];
                    let b = n.iter().filter(|&&v| v).count();
                    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let cond = if step == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if (2..=6).contains(&b) && a == 1 && cond {
                        remove.push(y as usize * w + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            return img;
        }
    }
}

/// Branch directions leaving a skeleton pixel, measured where connected
/// skeleton paths cross the square ring of radius `r`.
pub fn branches(w: usize, h: usize, skel: &[bool], cx: usize, cy: usize, r: usize) -> Vec<f64> {
    let r = r as isize;
    let (cx, cy) = (cx as isize, cy as isize);
    let inside = |x: isize, y: isize| (x - cx).abs() <= r && (y - cy).abs() <= r;
    let set = |x: isize, y: isize| {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && skel[y as usize * w + x as usize]
    };
    // flood the skeleton inside the window from the center
    let side = (2 * r + 1) as usize;
    let mut reached = vec![false; side * side];
    let idx = |x: isize, y: isize| ((y - cy + r) as usize) * side + (x - cx + r) as usize;
    let mut stack = vec![(cx, cy)];
    reached[idx(cx, cy)] = true;
    while let Some((x, y)) = stack.pop() {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if inside(nx, ny) && set(nx, ny) && !reached[idx(nx, ny)] {
                    reached[idx(nx, ny)] = true;
                    stack.push((nx, ny));
                }
            }
        }
    }
    // ring pixels in angular order
    let mut ring = Vec::new();
    for k in -r..r {
        ring.push((cx + k, cy - r));
    }
    for k in -r..r {
        ring.push((cx + r, cy + k));
    }
    for k in -r..r {
        ring.push((cx - k, cy + r));
    }
    for k in -r..r {
        ring.push((cx - r, cy - k));
    }
    let on: Vec<bool> = ring.iter().map(|&(x, y)| set(x, y) && reached[idx(x, y)]).collect();
    let n = on.len();
    let Some(start) = (0..n).find(|&i| !on[i]) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut run: Vec<(isize, isize)> = Vec::new();
    for k in 1..=n {
        let i = (start + k) % n;
        if on[i] {
            run.push(ring[i]);
        } else if !run.is_empty() {
            let (sx, sy) = run
                .iter()
                .fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - cx) as f64, b + (y - cy) as f64));
            out.push(sy.atan2(sx));
            run.clear();
        }
    }
    out
}

fn classify_branches(dirs: &[f64]) -> Option<CrossingKind> {
    match dirs.len() {
        2 => {
            let mut d = (dirs[0] - dirs[1]).abs();
            if d > PI {
                d = 2.0 * PI - d;
            }
            (d < 0.75 * PI).then_some(CrossingKind::L)
        }
        3 => Some(CrossingKind::T),
        4 => Some(CrossingKind::X),
        _ => None,
    }
}

fn detect_crossings(
    seg: &Segmentation,
    hull: &[[f64; 2]],
    camera: &FisheyeCamera,
    pose: &CameraPose,
    ring: usize,
) -> Vec<CrossingObs> {
    let white = seg.binary(ColorClass::White);
    let (w, h) = (white.width, white.height);
    let masked: Vec<bool> = (0..w * h)
        .map(|i| white.bits[i] && inside_hull(hull, block_center((i % w) as f64, (i / w) as f64)))
        .collect();
    let skel = thin(w, h, &masked);
    let mut candidates: Vec<(usize, usize, CrossingKind)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if skel[y * w + x] {
                if let Some(kind) = classify_branches(&branches(w, h, &skel, x, y, ring)) {
                    candidates.push((x, y, kind));
                }
            }
        }
    }
    // greedy grouping of nearby candidates; a group takes its most frequent kind
    let mut groups: Vec<Vec<(usize, usize, CrossingKind)>> = Vec::new();
    for c in candidates {
        let near = groups
            .iter_mut()
            .find(|g| g.iter().any(|m| m.0.abs_diff(c.0) <= ring && m.1.abs_diff(c.1) <= ring));
        match near {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    let mut out = Vec::new();
    for members in groups.iter().filter(|g| g.len() >= 2) {
        let mut votes = [0usize; 3];
        for m in members {
            votes[m.2 as usize] += 1;
        }
        let k = (0..3).max_by_key(|&k| (votes[k], k)).unwrap();
        let kind = [CrossingKind::L, CrossingKind::T, CrossingKind::X][k];
        let n = members.len() as f64;
        let (sx, sy) = members
            .iter()
            .fold((0.0, 0.0), |(a, b), m| (a + m.0 as f64, b + m.1 as f64));
        let px = block_center(sx / n, sy / n);
        if let Ok(g) = unproject_pixel(camera, pose, px, true) {
            out.push(CrossingObs {
                position: [g.x, g.y],
                kind,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_and_containment() {
        let pts = [[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0], [2.0, 2.0]];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!(inside_hull(&h, [1.0, 3.0]));
        assert!(!inside_hull(&h, [5.0, 1.0]));
    }

    fn grid(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> Vec<bool> {
        (0..w * h).map(|i| f(i % w, i / w)).collect()
    }

    #[test]
    fn skeleton_branch_counts() {
        let (w, h) = (30, 30);
        // thick plus sign
        let plus = grid(w, h, |x, y| (13..=16).contains(&x) || (13..=16).contains(&y));
        let s = thin(w, h, &plus);
        let centre = (10..20)
            .flat_map(|y| (10..20).map(move |x| (x, y)))
            .filter(|&(x, y)| s[y * w + x])
            .map(|(x, y)| branches(w, h, &s, x, y, 4).len())
            .max();
        assert_eq!(centre, Some(4));
        // T: horizontal bar with a stem going down
        let t = grid(w, h, |x, y| (5..=7).contains(&y) || ((14..=16).contains(&x) && y >= 5));
        let s = thin(w, h, &t);
        let best = (0..w * h)
            .filter(|&i| s[i])
            .map(|i| branches(w, h, &s, i % w, i / w, 4).len())
            .max();
        assert_eq!(best, Some(3));
    }

    #[test]
    fn blob_labels_are_four_connected() {
        let img = BinaryImage {
            width: 3,
            height: 3,
            class: ColorClass::Orange,
            bits: vec![true, false, false, false, true, false, false, false, true],
        };
        assert_eq!(blobs(&img).len(), 3);
    }
}
