use std::collections::BTreeMap;

use mgplan::cellarea::{
    apply_profile, correlate, floating_cells, rasterize, weighted_score, Aggregation, CellArea,
    CellDesign, FactorBasis, FloatingOptions, KeyFactor, LoadProfile, ObjectiveWeights,
    Objectives, PointFeature,
};
use mgplan::{Point, Rect};
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = Rect> {
    (-500.0..500.0f64, -500.0..500.0f64, 10.0..900.0f64, 10.0..900.0f64)
        .prop_map(|(x, y, w, h)| Rect::new(x, y, x + w, y + h))
}

fn cells_with(values: &[(f64, f64)]) -> Vec<CellArea> {
    values
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let mut c = CellArea::new(
                format!("c{i}"),
                Rect::new(i as f64, 0., i as f64 + 1., 1.).to_polygon(),
                CellDesign::Raster,
            )
            .unwrap();
            c.key_factors.insert("a".into(), KeyFactor::defined("a", a, "", FactorBasis::Absolute));
            c.key_factors.insert("b".into(), KeyFactor::defined("b", b, "", FactorBasis::Absolute));
            c
        })
        .collect()
}

proptest! {
    #[test]
    fn raster_partitions_bbox(r in bbox(), size in 40.0..400.0f64) {
        let cells = rasterize(&r, size).unwrap();
        let total: f64 = cells.iter().map(|c| c.area_m2()).sum();
        prop_assert!((total - r.area()).abs() <= 1e-6 * r.area());
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                prop_assert!(a.geometry.intersection_area(&b.geometry) <= 1e-9 * r.area());
            }
        }
    }

    #[test]
    fn profile_energy_closure(q in 0.0..1e7f64, w in prop::collection::vec(0.0..10.0f64, 1..200), dt in 0.1..24.0f64) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let p = LoadProfile::new(w, dt).unwrap();
        let s = apply_profile(q, &p);
        let energy: f64 = s.power_kw.iter().map(|x| x * dt).sum();
        prop_assert!((energy - q).abs() <= 1e-9 * q.max(1.0));
    }

    #[test]
    fn correlation_symmetric_and_affine_invariant(
        v in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..40),
        scale in 0.1..10.0f64,
        shift in -50.0..50.0f64,
    ) {
        let base = correlate(&cells_with(&v), "a", "b");
        prop_assume!(base.is_ok());
        let r = base.unwrap().coefficient;
        prop_assert!((correlate(&cells_with(&v), "b", "a").unwrap().coefficient - r).abs() < 1e-9);
        let moved: Vec<(f64, f64)> = v.iter().map(|&(a, b)| (scale * a + shift, b)).collect();
        prop_assert!((correlate(&cells_with(&moved), "a", "b").unwrap().coefficient - r).abs() < 1e-6);
    }

    #[test]
    fn scaled_weights_keep_ranking(
        objs in prop::collection::vec((0.0..100.0f64, 0.0..1.0f64, 0.0..1e5f64), 2..8),
        w in (0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64),
        k in 0.01..100.0f64,
    ) {
        let reference = Objectives { primary_energy: 50.0, self_sufficiency_gap: 0.5, cost: 1e4 };
        let objs: Vec<Objectives> = objs
            .into_iter()
            .map(|(p, g, c)| Objectives { primary_energy: p, self_sufficiency_gap: g, cost: c })
            .collect();
        let weights = ObjectiveWeights { primary_energy: w.0, self_sufficiency: w.1, cost: w.2 };
        let scaled = ObjectiveWeights { primary_energy: k * w.0, self_sufficiency: k * w.1, cost: k * w.2 };
        let argmin = |w: &ObjectiveWeights| {
            let scores: Vec<f64> = objs.iter().map(|o| weighted_score(o, &reference, w).unwrap().score).collect();
            let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
            // candidates within rounding of the best
            (0..scores.len()).filter(|&i| scores[i] <= best + 1e-9 * best.abs().max(1.0)).collect::<Vec<_>>()
        };
        let (a, b) = (argmin(&weights), argmin(&scaled));
        prop_assert!(a.iter().any(|i| b.contains(i)));
    }

    #[test]
    fn floating_zero_threshold_is_identity(rows in 1usize..5, cols in 1usize..5, seed in prop::collection::vec(0.0..10.0f64, 25)) {
        let region = Rect::new(0., 0., cols as f64 * 10.0, rows as f64 * 10.0);
        let features: Vec<PointFeature> = (0..rows * cols)
            .map(|i| PointFeature {
                position: Point::new((i % cols) as f64 * 10.0 + 5.0, (i / cols) as f64 * 10.0 + 5.0),
                attributes: BTreeMap::from([("v".to_string(), seed[i])]),
            })
            .collect();
        let opts = FloatingOptions { cell_size: 10.0, threshold: 0.0, aggregation: Aggregation::Density };
        let floating = floating_cells(&region, &features, "v", &opts).unwrap();
        let raster = rasterize(&region, 10.0).unwrap();
        prop_assert_eq!(floating.len(), raster.len());
        let boxes = |cells: &[CellArea]| {
            let mut b: Vec<[i64; 4]> = cells
                .iter()
                .map(|c| {
                    let r = c.geometry.bbox().unwrap();
                    [r.min.x, r.min.y, r.max.x, r.max.y].map(|v| (v * 1e6).round() as i64)
                })
                .collect();
            b.sort();
            b
        };
        prop_assert_eq!(boxes(&floating), boxes(&raster));
    }

    #[test]
    fn floating_cells_cover_region(values in prop::collection::vec(prop::sample::select(vec![1.0, 2.0, 8.0]), 16), t in 0.0..1.0f64) {
        let region = Rect::new(0., 0., 4., 4.);
        let features: Vec<PointFeature> = (0..16)
            .map(|i| PointFeature {
                position: Point::new((i % 4) as f64 + 0.5, (i / 4) as f64 + 0.5),
                attributes: BTreeMap::from([("v".to_string(), values[i])]),
            })
            .collect();
        let opts = FloatingOptions { cell_size: 1.0, threshold: t, aggregation: Aggregation::Density };
        let cells = floating_cells(&region, &features, "v", &opts).unwrap();
        let total: f64 = cells.iter().map(|c| c.area_m2()).sum();
        prop_assert!((total - 16.0).abs() < 1e-9);
    }
}
