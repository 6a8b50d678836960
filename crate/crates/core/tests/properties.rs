use hfpm_core::mapper::partition_by_plan;
use hfpm_core::quant::{dequantize, offset_correct, offset_encode, quantize, QuantMatrix, QuantVector, WEIGHT_OFFSET};
use hfpm_core::redistribution::{select_by_score, ProtectionPlan};
use hfpm_core::rng;
use hfpm_core::svd::{hard_threshold_rank, merge_sigma_vt, svd_decompose, tail_error, truncate};
use hfpm_core::xbar::{ber, bitserial_gemv, CellMode, NoiseSpec, ProgrammedMatrix, TileGeometry, DEFAULT_ON_OFF_RATIO};
use hfpm_core::DenseMatrix;
use proptest::prelude::*;

fn gaussian(m: usize, n: usize, seed: u64) -> DenseMatrix {
    let mut g = rng::stream(seed, 0);
    DenseMatrix::from_fn(m, n, |_, _| rng::standard_normal(&mut g))
}

fn int8_matrix(m: usize, n: usize, seed: u64) -> QuantMatrix {
    use rand::Rng;
    let mut g = rng::stream(seed, 1);
    let data = (0..m * n).map(|_| g.random::<i8>()).collect();
    QuantMatrix::new(m, n, data, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_reconstructs_and_is_orthonormal(m in 1usize..14, n in 1usize..14, seed in any::<u64>()) {
        let w = gaussian(m, n, seed);
        let f = svd_decompose(&w, 1e-9).unwrap();
        prop_assert!(f.reconstruct().max_abs_diff(&w) <= 1e-9 * w.frobenius_norm().max(1.0));
        prop_assert!(f.orthonormality_error() <= 1e-9);
        prop_assert!(f.sigma.windows(2).all(|s| s[0] >= s[1]));
    }

    #[test]
    fn truncation_error_is_the_tail(m in 2usize..12, n in 2usize..12, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let w = gaussian(m, n, seed);
        let f = svd_decompose(&w, 1e-9).unwrap();
        let k = 1 + ((f.rank() - 1) as f64 * frac) as usize;
        let t = truncate(&f, k).unwrap();
        let err = w.sub(&t.reconstruct()).unwrap().frobenius_norm();
        prop_assert!((err - tail_error(&f.sigma, k)).abs() <= 1e-9 * w.frobenius_norm());
        // any other rank-k matrix does at least as badly
        let other = gaussian(m, k, seed ^ 1).matmul(&gaussian(k, n, seed ^ 2)).unwrap();
        prop_assert!(w.sub(&other).unwrap().frobenius_norm() + 1e-9 >= err);
    }

    #[test]
    fn hard_threshold_preserves_macs(d1 in 1usize..5000, d2 in 1usize..5000) {
        let k = hard_threshold_rank(d1, d2);
        prop_assert!(k * (d1 + d2) <= d1 * d2);
        prop_assert!((k + 1) * (d1 + d2) > d1 * d2);
    }

    #[test]
    fn quantization_round_trip(m in 1usize..10, n in 1usize..10, seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let w = gaussian(m, n, seed).scale(scale);
        let q = quantize(&w).unwrap();
        let back = dequantize(&q);
        prop_assert!(back.max_abs_diff(&w) <= q.scale() / 2.0 + 1e-12 * scale);
    }

    #[test]
    fn noise_free_gemv_is_exact(m in 1usize..130, n in 1usize..70, seed in any::<u64>(), mlc in any::<bool>()) {
        let w = int8_matrix(m, n, seed);
        let x: Vec<i8> = {
            use rand::Rng;
            let mut g = rng::stream(seed, 2);
            (0..n).map(|_| g.random()).collect()
        };
        let mode = if mlc { CellMode::Mlc2 } else { CellMode::Slc };
        let pm = ProgrammedMatrix::program(&offset_encode(&w.transpose()), mode, TileGeometry::default(), &NoiseSpec::none(), false, 0).unwrap();
        let out = bitserial_gemv(&pm, &QuantVector { data: x.clone(), scale: 1.0 }, &mut pm.adc()).unwrap();
        if out.report.is_clean() {
            prop_assert_eq!(out.values, w.gemv_exact(&x).unwrap());
        }
        prop_assert_eq!(out.report.conversions, pm.conversions_per_gemv());
    }

    #[test]
    fn plans_partition_ranks(scores in prop::collection::vec(0.0f64..10.0, 1..40), k in 0.0f64..=100.0) {
        let plan = select_by_score(&scores, k).unwrap();
        prop_assert!(plan.is_partition());
        let worst_slc = plan.slc_ranks.iter().map(|&r| scores[r]).fold(f64::INFINITY, f64::min);
        let best_mlc = plan.mlc_ranks.iter().map(|&r| scores[r]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(plan.slc_ranks.is_empty() || plan.mlc_ranks.is_empty() || worst_slc >= best_mlc);
    }

    #[test]
    fn partition_recomposes(m in 2usize..10, n in 2usize..10, seed in any::<u64>(), mask in any::<u16>()) {
        let f = svd_decompose(&gaussian(m, n, seed), 1e-9).unwrap();
        let (b, u) = merge_sigma_vt(&f);
        let slc: Vec<usize> = (0..f.rank()).filter(|r| mask >> r & 1 == 1).collect();
        let plan = ProtectionPlan::from_slc(f.rank(), &slc, 0.0).unwrap();
        let (s, l) = partition_by_plan(&b, &u, &plan).unwrap();
        let sum = s.product().unwrap().add(&l.product().unwrap()).unwrap();
        prop_assert!(sum.max_abs_diff(&u.matmul(&b).unwrap()) <= 1e-12 * sum.frobenius_norm().max(1.0));
    }
}

#[test]
fn offset_encoding_exhaustive() {
    for w in i8::MIN..=i8::MAX {
        for x in i8::MIN..=i8::MAX {
            let acc = (w as i64 + WEIGHT_OFFSET as i64) * x as i64;
            assert_eq!(offset_correct(acc, x as i64), w as i64 * x as i64);
        }
    }
}

#[test]
fn gemv_exhaustive_3x3_patterns() {
    // every weight value in every cell position of a 3×3 tile
    let geometry = TileGeometry::default();
    let x = [127i8, -128, 1];
    for mode in [CellMode::Slc, CellMode::Mlc2] {
        for pos in 0..9 {
            for v in i8::MIN..=i8::MAX {
                let mut data = vec![3i8, -5, 7, 0, 9, -11, 13, 2, -1];
                data[pos] = v;
                let w = QuantMatrix::new(3, 3, data, 1.0).unwrap();
                let pm = ProgrammedMatrix::program(&offset_encode(&w.transpose()), mode, geometry, &NoiseSpec::none(), false, 0).unwrap();
                let out = bitserial_gemv(&pm, &QuantVector { data: x.to_vec(), scale: 1.0 }, &mut pm.adc()).unwrap();
                assert!(out.report.is_clean());
                assert_eq!(out.values, w.gemv_exact(&x).unwrap());
            }
        }
    }
}

#[test]
fn ber_monotone_in_sigma() {
    for mode in [CellMode::Slc, CellMode::Mlc2] {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = grid.iter().map(|&s| ber(s, mode, DEFAULT_ON_OFF_RATIO)).collect();
        assert!(b.windows(2).all(|p| p[1] >= p[0]));
    }
}
