//! Mosaicking an unordered set of images.
//!
//! Every unordered pair is registered once to fill a pairwise transform
//! table. Planning then proceeds in rounds: the unplaced image with the most
//! table neighbours becomes the round's reference, and every unplaced image
//! with an entry to an already placed image is stitched in the same round,
//! its placement composed along that entry. Rounds continue until no
//! unplaced image is left or none of them connects to the mosaic.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compositor::{compute_canvas, warp_and_blend, Canvas, Placement};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imaging::IntensityImage;
use crate::pipeline::{match_prepared, prepare, PreparedImage};
use crate::registration::{ransac_rigid, RigidTransform};
use crate::report::StageTimes;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    /// Maps the column image's coordinates into the row image's frame.
    pub transform: RigidTransform,
    pub inliers: usize,
}

/// Symmetric `n x n` table of verified pairwise transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTransformTable {
    n: usize,
    entries: Vec<Option<TableEntry>>,
}

impl PairwiseTransformTable {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: vec![None; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> Option<&TableEntry> {
        self.entries[a * self.n + b].as_ref()
    }

    /// Stores `b -> a` at `(a, b)` and its inverse at `(b, a)`.
    pub fn insert(&mut self, a: usize, b: usize, b_to_a: RigidTransform, inliers: usize) {
        assert!(a != b, "diagonal entries are not allowed");
        self.entries[a * self.n + b] = Some(TableEntry {
            transform: b_to_a,
            inliers,
        });
        self.entries[b * self.n + a] = Some(TableEntry {
            transform: b_to_a.inverse(),
            inliers,
        });
    }

    /// Present entries in row `a` restricted to `among`.
    pub fn neighbour_count(&self, a: usize, among: &BTreeSet<usize>) -> usize {
        among.iter().filter(|&&b| b != a && self.get(a, b).is_some()).count()
    }

    pub fn present_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| (a + 1..self.n).map(move |b| (a, b)))
            .filter(|&(a, b)| self.get(a, b).is_some())
            .collect()
    }
}

/// Outcome of registering one unordered pair `(a, b)`, `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: usize,
    pub b: usize,
    pub matched_pairs: usize,
    /// Zero when registration failed.
    pub inliers: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct TableBuild {
    pub table: PairwiseTransformTable,
    pub pairs: Vec<PairRecord>,
    pub matching_time: f64,
    pub registration_time: f64,
}

/// Registers every unordered pair of prepared images exactly once.
pub fn build_table_from_prepared(prepared: &[PreparedImage], cfg: &PipelineConfig) -> Result<TableBuild> {
    let n = prepared.len();
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();

    let t = Instant::now();
    let matches = jobs
        .par_iter()
        .map(|&(a, b)| match_prepared(&prepared[a], &prepared[b], cfg))
        .collect::<Result<Vec<_>>>()?;
    let matching_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let results: Vec<_> = matches.par_iter().map(|m| ransac_rigid(m, &cfg.ransac).ok()).collect();
    let registration_time = t.elapsed().as_secs_f64();

    let mut table = PairwiseTransformTable::new(n);
    let mut pairs = Vec::with_capacity(jobs.len());
    for ((&(a, b), m), r) in jobs.iter().zip(&matches).zip(results) {
        let inliers = r.as_ref().map_or(0, |r| r.inliers.len());
        if let Some(r) = &r {
            table.insert(a, b, r.transform, inliers);
        }
        pairs.push(PairRecord {
            a,
            b,
            matched_pairs: m.len(),
            inliers,
            accepted: r.is_some(),
        });
    }
    Ok(TableBuild {
        table,
        pairs,
        matching_time,
        registration_time,
    })
}

/// Prepares every image and registers every pair.
pub fn build_pairwise_table(images: &[IntensityImage], cfg: &PipelineConfig) -> Result<PairwiseTransformTable> {
    if images.len() < 2 {
        return Err(Error::config(format!("need at least 2 images, got {}", images.len())));
    }
    let prepared = images.par_iter().map(|img| prepare(img, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(build_table_from_prepared(&prepared, cfg)?.table)
}

/// The image in `remaining` with the most table neighbours inside
/// `remaining`; ties go to the lowest id.
pub fn select_reference(table: &PairwiseTransformTable, remaining: &BTreeSet<usize>) -> Option<usize> {
    select_among(table, remaining, remaining)
}

fn select_among(table: &PairwiseTransformTable, candidates: &BTreeSet<usize>, remaining: &BTreeSet<usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &id in candidates {
        let count = table.neighbour_count(id, remaining);
        if best.map_or(true, |(_, c)| count > c) {
            best = Some((id, count));
        }
    }
    best.map(|(id, _)| id)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicRound {
    pub reference: usize,
    pub stitched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosaicPlan {
    pub rounds: Vec<MosaicRound>,
    pub final_unmatched: Vec<usize>,
}

/// Plan plus, per image, its placement in the first reference's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedMosaic {
    pub plan: MosaicPlan,
    pub placements: Vec<Option<RigidTransform>>,
}

/// The placed neighbour of `id` with the most inliers (lowest id on ties)
/// and the resulting placement.
fn attach(table: &PairwiseTransformTable, placements: &[Option<RigidTransform>], id: usize) -> Option<RigidTransform> {
    let mut best: Option<(usize, usize)> = None;
    for (other, p) in placements.iter().enumerate() {
        if p.is_none() {
            continue;
        }
        if let Some(e) = table.get(other, id) {
            if best.map_or(true, |(_, n)| e.inliers > n) {
                best = Some((other, e.inliers));
            }
        }
    }
    let (other, _) = best?;
    let entry = table.get(other, id)?;
    Some(placements[other]?.compose(&entry.transform))
}

/// Greedy round planning over a pairwise table.
pub fn plan_mosaic(table: &PairwiseTransformTable) -> PlannedMosaic {
    let n = table.len();
    let mut remaining: BTreeSet<usize> = (0..n).collect();
    let mut placements: Vec<Option<RigidTransform>> = vec![None; n];
    let mut rounds = Vec::new();
    let mut final_unmatched = Vec::new();

    while !remaining.is_empty() {
        let anything_placed = placements.iter().any(Option::is_some);
        let reference = if anything_placed {
            // only images that can join the existing mosaic are candidates
            let frontier: BTreeSet<usize> = remaining
                .iter()
                .copied()
                .filter(|&id| attach(table, &placements, id).is_some())
                .collect();
            if frontier.is_empty() {
                break;
            }
            let r = select_among(table, &frontier, &remaining).expect("frontier is non-empty");
            placements[r] = attach(table, &placements, r);
            r
        } else {
            let r = select_reference(table, &remaining).expect("remaining is non-empty");
            if table.neighbour_count(r, &remaining) == 0 {
                // nothing connects to anything
                break;
            }
            placements[r] = Some(RigidTransform::identity());
            r
        };
        remaining.remove(&reference);

        // members: images with an entry to something placed before this
        // round or to the reference
        let snapshot = placements.clone();
        let mut stitched: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&id| attach(table, &snapshot, id).is_some())
            .collect();
        // placement follows the strongest chain, possibly through another
        // member of the same round
        let mut pending: BTreeSet<usize> = stitched.iter().copied().collect();
        while !pending.is_empty() {
            let mut best: Option<(usize, usize, usize)> = None;
            for &id in &pending {
                for (other, p) in placements.iter().enumerate() {
                    if p.is_none() {
                        continue;
                    }
                    if let Some(e) = table.get(other, id) {
                        if best.map_or(true, |(_, _, n)| e.inliers > n) {
                            best = Some((id, other, e.inliers));
                        }
                    }
                }
            }
            let (id, other, _) = best.expect("every member has a placed neighbour");
            placements[id] = Some(placements[other].expect("placed").compose(&table.get(other, id).expect("entry").transform));
            pending.remove(&id);
        }
        stitched.sort_unstable();
        for id in &stitched {
            remaining.remove(id);
        }
        rounds.push(MosaicRound { reference, stitched });
    }
    final_unmatched.extend(remaining);

    PlannedMosaic {
        plan: MosaicPlan { rounds, final_unmatched },
        placements,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub image: usize,
    pub id: String,
    pub theta_deg: f64,
    pub t_x: f64,
    pub t_y: f64,
}

/// Everything `plan.json` records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanReport {
    pub images: Vec<String>,
    pub features: Vec<usize>,
    pub rounds: Vec<MosaicRound>,
    pub final_unmatched: Vec<usize>,
    pub pairs: Vec<PairRecord>,
    pub placements: Vec<PlacementRecord>,
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub canvas_origin: (i64, i64),
    pub timings: StageTimes,
    pub total_time: f64,
}

#[derive(Debug, Clone)]
pub struct MosaicOutcome {
    pub plan: MosaicPlan,
    pub table: PairwiseTransformTable,
    pub placements: Vec<Option<RigidTransform>>,
    pub canvas: Canvas,
    pub report: PlanReport,
}

impl MosaicOutcome {
    pub fn is_partial(&self) -> bool {
        !self.plan.final_unmatched.is_empty()
    }
}

/// Registers all pairs, plans the rounds and composites the placed images.
pub fn plan_and_stitch(images: &[IntensityImage], cfg: &PipelineConfig) -> Result<MosaicOutcome> {
    if images.len() < 2 {
        return Err(Error::config(format!("mosaic needs at least 2 images, got {}", images.len())));
    }
    cfg.validate()?;
    let start = Instant::now();

    let prepared = images.par_iter().map(|img| prepare(img, cfg)).collect::<Result<Vec<_>>>()?;
    let build = build_table_from_prepared(&prepared, cfg)?;

    let t = Instant::now();
    let planned = plan_mosaic(&build.table);
    let mut placed_images = Vec::new();
    let mut placements = Vec::new();
    let mut dims = Vec::new();
    for (k, p) in planned.placements.iter().enumerate() {
        if let Some(h) = p {
            placed_images.push(&images[k]);
            placements.push(Placement {
                image_id: images[k].id().to_string(),
                transform: *h,
            });
            dims.push((images[k].nr(), images[k].nc()));
        }
    }
    if placements.is_empty() {
        // nothing connected: show the first image alone
        placed_images.push(&images[0]);
        placements.push(Placement {
            image_id: images[0].id().to_string(),
            transform: RigidTransform::identity(),
        });
        dims.push((images[0].nr(), images[0].nc()));
    }
    let extents = compute_canvas(&placements, &dims)?;
    let canvas = warp_and_blend(&placed_images, &placements, extents, cfg.blend, cfg.resample)?;
    let compositing_time = t.elapsed().as_secs_f64();

    let timings = StageTimes {
        detection: prepared.iter().map(|p| p.detection_time).sum(),
        description: prepared.iter().map(|p| p.description_time).sum(),
        matching: build.matching_time,
        stitching: build.registration_time + compositing_time,
    };
    let report = PlanReport {
        images: images.iter().map(|i| i.id().to_string()).collect(),
        features: prepared.iter().map(|p| p.features.len()).collect(),
        rounds: planned.plan.rounds.clone(),
        final_unmatched: planned.plan.final_unmatched.clone(),
        pairs: build.pairs,
        placements: planned
            .placements
            .iter()
            .enumerate()
            .filter_map(|(k, p)| {
                p.map(|h| PlacementRecord {
                    image: k,
                    id: images[k].id().to_string(),
                    theta_deg: h.theta_deg(),
                    t_x: h.tx,
                    t_y: h.ty,
                })
            })
            .collect(),
        canvas_width: extents.width,
        canvas_height: extents.height,
        canvas_origin: extents.origin_offset,
        timings,
        total_time: start.elapsed().as_secs_f64(),
    };
    Ok(MosaicOutcome {
        plan: planned.plan,
        table: build.table,
        placements: planned.placements,
        canvas,
        report,
    })
}
