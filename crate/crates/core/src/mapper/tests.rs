use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::cost::{LinearStage, WorkloadSpec};
use crate::quant::EncodedMatrix;
use crate::redistribution::LinearOp;
use crate::rng;
use crate::svd::{merge_sigma_vt, svd_decompose};

fn random(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut g = rng::stream(seed, 0);
    DenseMatrix::from_fn(m, n, |_, _| rng::standard_normal(&mut g))
}

fn words(rows: usize, cols: usize) -> EncodedMatrix {
    EncodedMatrix::from_words(rows, cols, &vec![0; rows * cols]).unwrap()
}

#[test]
fn partition_recomposes_exactly() {
    let f = svd_decompose(&random(8, 8, 1), 1e-10).unwrap();
    let (b, u) = merge_sigma_vt(&f);
    let full = u.matmul(&b).unwrap();
    let plan = ProtectionPlan::from_slc(8, &[0, 3], 25.0).unwrap();
    let (slc, mlc) = partition_by_plan(&b, &u, &plan).unwrap();
    assert_eq!(slc.ranks, vec![0, 3]);
    assert_eq!(mlc.ranks.len(), 6);
    let sum = slc.product().unwrap().add(&mlc.product().unwrap()).unwrap();
    assert!(sum.max_abs_diff(&full) <= 1e-12);

    let (s, m) = partition_by_plan(&b, &u, &ProtectionPlan::all_slc(8)).unwrap();
    assert!(m.is_empty() && s.ranks.len() == 8);
    let (s, m) = partition_by_plan(&b, &u, &ProtectionPlan::all_mlc(8)).unwrap();
    assert!(s.is_empty() && m.ranks.len() == 8);
    assert!(partition_by_plan(&b, &u, &ProtectionPlan::all_mlc(7)).is_err());
}

#[test]
fn tiling_arithmetic() {
    let shape = HardwareShape::default();
    assert_eq!(tile_matrix(&words(64, 16), CellMode::Slc, &shape).tile_count(), 1);
    assert_eq!(tile_matrix(&words(64, 32), CellMode::Mlc2, &shape).tile_count(), 1);
    assert_eq!(tile_matrix(&words(64, 32), CellMode::Slc, &shape).tile_count(), 2);
    let g = tile_matrix(&words(65, 1), CellMode::Slc, &shape);
    assert_eq!(g.row_tiles, 2);
    let spans = g.spans();
    assert_eq!((spans[1].row0, spans[1].rows), (64, 1));
    assert_eq!(TileGrid::new(0, 5, CellMode::Slc, shape.array).tile_count(), 0);
}

#[test]
fn grid_matches_programmed_matrix() {
    use crate::xbar::{NoiseSpec, ProgrammedMatrix};
    let shape = HardwareShape::default();
    for (r, c, mode) in [(100, 40, CellMode::Slc), (130, 70, CellMode::Mlc2), (1, 1, CellMode::Slc)] {
        let enc = words(r, c);
        let grid = tile_matrix(&enc, mode, &shape);
        let pm = ProgrammedMatrix::program(&enc, mode, shape.array, &NoiseSpec::none(), true, 0).unwrap();
        assert_eq!(grid.tile_count(), pm.tile_count());
        assert_eq!(grid.active_columns(), pm.active_columns());
    }
}

#[test]
fn one_pu_per_layer_gives_two_copies() {
    let shape = HardwareShape::default();
    let w = WorkloadSpec::bert_base(128);
    let par = ParallelismPlan::new(ParallelMode::OnePuPerLayer, w.hidden).unwrap();
    let p = place_model(&w, &shape, &par, &WeightStorage::Factored { k_percent: 10.0 }).unwrap();
    assert_eq!(p.len(), 12);
    assert_eq!(copies_per_chip(&p, &shape), 2);
    assert!(p.iter().all(|l| l.pus.len() == 1 && l.chip == 0));
}

#[test]
fn tensor_mode_halves_arrays_per_pu() {
    let shape = HardwareShape::default();
    let w = WorkloadSpec::bert_base(128);
    let storage = WeightStorage::Dense { mode: CellMode::Slc };
    let one = place_model(&w, &shape, &ParallelismPlan::new(ParallelMode::OnePuPerLayer, 768).unwrap(), &storage).unwrap();
    let two = place_model(&w, &shape, &ParallelismPlan::new(ParallelMode::Tensor { pus: 2 }, 768).unwrap(), &storage).unwrap();
    let total = one[0].analog_tiles_per_pu[0];
    let matrices = one[0].matrices.len();
    for &t in &two[0].analog_tiles_per_pu {
        assert!(t.abs_diff(total / 2) <= matrices * 64);
        assert!(t < total);
    }
    assert_eq!(two[0].tile_count(), total);
    assert_eq!(two[0].routes.len(), 1);
    assert_eq!(two[0].routes[0].bytes, 3072);
}

#[test]
fn capacity_failures() {
    let shape = HardwareShape::default();
    let mut w = WorkloadSpec::bert_large(128);
    let par = ParallelismPlan::new(ParallelMode::OnePuPerLayer, w.hidden).unwrap();
    let err = place_model(&w, &shape, &par, &WeightStorage::Factored { k_percent: 100.0 }).unwrap_err();
    assert!(matches!(err, crate::Error::PlacementFailed(_)));
    assert!(place_model(&w, &shape, &par, &WeightStorage::Factored { k_percent: 0.0 }).is_ok());
    w.hidden = 8192;
    assert!(matches!(
        place_model(&w, &shape, &par, &WeightStorage::Dense { mode: CellMode::Mlc2 }),
        Err(crate::Error::PlacementFailed(_))
    ));
    assert!(ParallelismPlan::new(ParallelMode::Tensor { pus: 1 }, 768).is_err());
}

#[test]
fn placement_respects_plans() {
    let shape = HardwareShape::default();
    let w = WorkloadSpec::encoder(16, 64, 128, 2, 1);
    let plans: Vec<ProtectionPlan> = w
        .linear_stages()
        .iter()
        .map(|&(_, i, o)| {
            let k = crate::svd::truncation_rank(o, i, 1);
            ProtectionPlan::from_slc(k, &[1, k - 1], 0.0).unwrap()
        })
        .collect();
    let p = place_layer(0, 0, vec![0], &w, &WeightStorage::Plans { plans: plans.clone() }, &shape).unwrap();
    for (plan, &(stage, _, _)) in plans.iter().zip(w.linear_stages().iter()) {
        assert!(p.respects(stage, plan));
        let other = ProtectionPlan::from_slc(plan.rank_count, &[0], 0.0).unwrap();
        assert!(!p.respects(stage, &other));
    }
    assert_eq!(p.matrices_for(LinearStage::Ffn1).count(), 4);
}

#[test]
fn pipeline_layout() {
    let shape = HardwareShape::default();
    let w = WorkloadSpec::llama3_1b_generate();
    let par = ParallelismPlan::new(ParallelMode::Pipeline { chips: 4 }, w.hidden).unwrap();
    let p = place_model(&w, &shape, &par, &WeightStorage::Factored { k_percent: 10.0 }).unwrap();
    assert!(p.iter().all(|l| l.pus.len() == 6));
    assert_eq!(p.last().unwrap().chip, 3);
    let crossings = p.iter().flat_map(|l| &l.routes).filter(|r| r.crosses_chip).count();
    assert_eq!(crossings, 3);
}

fn factor(m: usize, n: usize, seed: u64) -> crate::svd::SvdFactor {
    let f = svd_decompose(&random(m, n, seed), 1e-10).unwrap();
    crate::svd::truncate(&f, crate::svd::truncation_rank(m, n, 1)).unwrap()
}

#[test]
fn hybrid_layer_is_plan_independent_without_noise() {
    let f = factor(20, 24, 3);
    let x: Vec<f64> = (0..24).map(|i| (i as f64 * 0.37).sin()).collect();
    let cfg = HybridConfig::new(0.0, 1);
    let k = f.rank();
    let all_mlc = HybridLayer::new(&f, &ProtectionPlan::all_mlc(k), &cfg).unwrap();
    let base = all_mlc.apply(&x).unwrap();
    for slc in [vec![], vec![0], vec![0, 2, 5], (0..k).collect()] {
        let plan = ProtectionPlan::from_slc(k, &slc, 0.0).unwrap();
        let layer = HybridLayer::new(&f, &plan, &cfg).unwrap();
        assert_eq!(layer.apply(&x).unwrap(), base);
    }
    assert!(all_mlc.report().is_clean());
    let want = f.apply(&x).unwrap();
    let err = base.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(err < 0.05 * scale, "quantized layer drifted: {err} vs {scale}");
}

#[test]
fn hybrid_layer_noise_only_in_mlc() {
    let f = factor(16, 16, 4);
    let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.91).cos()).collect();
    let k = f.rank();
    let clean = HybridLayer::new(&f, &ProtectionPlan::all_slc(k), &HybridConfig::new(0.0, 1)).unwrap();
    let slc = HybridLayer::new(&f, &ProtectionPlan::all_slc(k), &HybridConfig::new(0.2, 1)).unwrap();
    let mlc = HybridLayer::new(&f, &ProtectionPlan::all_mlc(k), &HybridConfig::new(0.2, 1)).unwrap();
    assert_eq!(slc.apply(&x).unwrap(), clean.apply(&x).unwrap());
    assert_ne!(mlc.apply(&x).unwrap(), clean.apply(&x).unwrap());
    assert_eq!(slc.conversions_per_apply(), 2 * mlc.conversions_per_apply());
    assert!(slc.report().conversions > 0);
    slc.reset_report();
    assert_eq!(slc.report().conversions, 0);
}
