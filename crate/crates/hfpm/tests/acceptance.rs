//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero when any
//! criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hfpm::commands::cmd_simulate;
use hfpm::config::{ExperimentConfig, RankPolicy};
use hfpm::pipeline;
use hfpm::table::TableFile;
use hfpm_core::cost::{count_ops, scale_throughput, AreaRollup, ComponentCostTable, WorkloadSpec};
use hfpm_core::mapper::{HardwareShape, ParallelMode};
use hfpm_core::quant::{offset_encode, QuantMatrix, QuantVector};
use hfpm_core::redistribution::{
    finetune, grad_sigma, mse_upstream, sample_mse, top_fraction, truncated_base_factors, FinetuneConfig,
    SelectionMode, SyntheticTask,
};
use hfpm_core::rng;
use hfpm_core::svd::{hard_threshold_rank, svd_decompose};
use hfpm_core::xbar::{
    adc_bits, ber, bitserial_gemv, calibrate_sigma, nor_multiply, nor_multiply_signed, sfu_balance, CellMode,
    NoiseSpec, NorCost, ProgrammedMatrix, TileGeometry, DEFAULT_ON_OFF_RATIO,
};
use hfpm_core::DenseMatrix;
use rand::Rng;

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn c1_gemv_oracle() -> Outcome {
    let start = Instant::now();
    let mut g = rng::stream(1, 0);
    let (mut clean, mut mismatches) = (0, 0);
    for _ in 0..1000 {
        let m = g.random_range(1..=128usize);
        let n = g.random_range(1..=64usize);
        let w = QuantMatrix::new(m, n, (0..m * n).map(|_| g.random()).collect(), 1.0).unwrap();
        let x: Vec<i8> = (0..n).map(|_| g.random()).collect();
        let exact = w.gemv_exact(&x).unwrap();
        let enc = offset_encode(&w.transpose());
        for mode in [CellMode::Slc, CellMode::Mlc2] {
            let pm = ProgrammedMatrix::program(&enc, mode, TileGeometry::default(), &NoiseSpec::none(), false, 0).unwrap();
            let out = bitserial_gemv(&pm, &QuantVector { data: x.clone(), scale: 1.0 }, &mut pm.adc()).unwrap();
            if out.report.is_clean() {
                clean += 1;
                if out.values != exact {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && clean > 0 && secs < 60.0,
        format!("{clean}/2000 saturation-free runs, {mismatches} mismatches, {secs:.1} s"),
    )
}

fn c2_adc_bits() -> Outcome {
    let (s, m) = (adc_bits(64, 1), adc_bits(64, 2));
    outcome(s == 6 && m == 7, format!("adc_bits(64,1)={s}, adc_bits(64,2)={m}"))
}

fn c3_hard_threshold() -> Outcome {
    let (a, b) = (hard_threshold_rank(768, 768), hard_threshold_rank(768, 3072));
    let rows = [1, 2, 3, 7, 16, 33, 64, 100, 768, 3072];
    let cols = [1, 5, 128, 1000, 4096];
    let grid: Vec<(usize, usize)> = rows.iter().flat_map(|&d1| cols.iter().map(move |&d2| (d1, d2))).collect();
    let violations = grid
        .iter()
        .filter(|&&(d1, d2)| hard_threshold_rank(d1, d2) * (d1 + d2) > d1 * d2)
        .count();
    outcome(
        a == 384 && b == 614 && violations == 0 && grid.len() == 50,
        format!("k(768,768)={a}, k(768,3072)={b}, {violations} MAC violations over {} shapes", grid.len()),
    )
}

fn c4_grad_sigma() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let mut g = rng::stream(40 + i, 0);
        let (m, n) = (g.random_range(2..12usize), g.random_range(2..12usize));
        let w = DenseMatrix::from_fn(m, n, |_, _| rng::standard_normal(&mut g));
        let f = svd_decompose(&w, 1e-12).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut g)).collect();
        let t: Vec<f64> = (0..m).map(|_| rng::standard_normal(&mut g)).collect();
        let y = f.reconstruct().matvec(&x).unwrap();
        let an = grad_sigma(&f.u, &f.sigma, &f.v, &x, &mse_upstream(&y, &t)).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..f.rank())
            .map(|r| {
                let mut p = f.sigma.clone();
                let mut q = f.sigma.clone();
                p[r] += h;
                q[r] -= h;
                (sample_mse(&f.u, &p, &f.v, &x, &t).unwrap() - sample_mse(&f.u, &q, &f.v, &x, &t).unwrap()) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
        let err = an.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale;
        worst = worst.max(err);
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 instances"))
}

fn c5_gradient_concentration() -> Outcome {
    let start = Instant::now();
    let mut increased = 0;
    let mut pairs = Vec::new();
    for seed in 0..10u64 {
        let task = SyntheticTask::teacher_regression(seed).unwrap();
        let factors = truncated_base_factors(&task).unwrap();
        let cfg = FinetuneConfig {
            seed,
            ..FinetuneConfig::default()
        };
        let out = finetune(&factors, &task, &cfg).unwrap();
        let r = &out.records[0];
        let (before, after) = (top_fraction(&r.first_step, 10.0), top_fraction(&r.accumulated, 10.0));
        if after > before {
            increased += 1;
        }
        pairs.push(format!("{before:.2}->{after:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        increased >= 8 && secs < 300.0,
        format!("increased in {increased}/10 seeds [{}], {secs:.1} s", pairs.join(" ")),
    )
}

fn c6_selection_under_noise(table: &ComponentCostTable) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.noise.sigma = Some(0.025);
    cfg.k_percent_grid = vec![10.0, 100.0];
    cfg.seeds = (0..20).collect();
    cfg.selection_modes = vec![SelectionMode::Gradient, SelectionMode::Random];
    let sim = pipeline::simulate(&cfg, table, 0).unwrap();
    let mean = |k: f64, mode: &str| {
        let v: Vec<f64> = sim
            .rows
            .iter()
            .filter(|r| r.k_percent == k && r.selection_mode == mode)
            .map(|r| r.loss)
            .collect();
        pipeline::mean_std(&v).0
    };
    let (grad, random) = (mean(10.0, "gradient"), mean(10.0, "random"));
    let base = sim.rollup.baseline_loss;
    let full_exact = sim.rows.iter().filter(|r| r.k_percent == 100.0).all(|r| r.loss == base);
    outcome(
        grad < random && full_exact,
        format!(
            "k=10: gradient {grad:.6e} vs random {random:.6e}; k=100 equals baseline {base:.6e}: {full_exact}"
        ),
    )
}

fn c7_ber_calibration() -> Outcome {
    let s = calibrate_sigma(0.0404, CellMode::Mlc2, DEFAULT_ON_OFF_RATIO).unwrap();
    let b = ber(s, CellMode::Mlc2, DEFAULT_ON_OFF_RATIO);
    let grid: Vec<f64> = (0..50).map(|i| ber(0.01 * i as f64, CellMode::Mlc2, DEFAULT_ON_OFF_RATIO)).collect();
    let monotone = grid.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        (b - 0.0404).abs() <= 1e-6 && monotone,
        format!("sigma {s:.6} gives BER {b:.8}; monotone over 50 points: {monotone}"),
    )
}

fn c8_throughput(table: &ComponentCostTable) -> Outcome {
    let geometry = TileGeometry::default();
    let q = QuantMatrix::new(768, 768, vec![0; 768 * 768], 1.0).unwrap();
    let enc = offset_encode(&q);
    let conv = |mode| {
        ProgrammedMatrix::program(&enc, mode, geometry, &NoiseSpec::none(), false, 0)
            .unwrap()
            .conversions_per_gemv()
    };
    let ratio = conv(CellMode::Mlc2) as f64 / conv(CellMode::Slc) as f64;
    let shape = HardwareShape::default();
    let f = |w: &WorkloadSpec, m| scale_throughput(w, m, &shape, table).unwrap();
    let t2 = f(&WorkloadSpec::gpt2_generate(), ParallelMode::Tensor { pus: 2 });
    let llama = WorkloadSpec::llama3_1b_generate();
    let quad = f(&llama, ParallelMode::Pipeline { chips: 4 });
    let octa = f(&llama, ParallelMode::Pipeline { chips: 8 });
    outcome(
        ratio == 0.5 && (1.95..2.0).contains(&t2) && (quad - 1.96).abs() <= 0.05 && (octa - 3.65).abs() <= 0.05,
        format!("MLC2/SLC conversions {ratio}, tensor(2) {t2:.4}, quad {quad:.4}, octa {octa:.4}"),
    )
}

fn c9_digital() -> Outcome {
    let balance = sfu_balance(256, 1024);
    let cost = NorCost::per_product();
    let mut g = rng::stream(9, 0);
    let mut wrong = 0;
    let edges = [0u8, 1, 2, 127, 128, 254, 255];
    let mut pairs: Vec<(u8, u8)> = (0..10_000).map(|_| (g.random(), g.random())).collect();
    for &a in &edges {
        for &b in &edges {
            pairs.push((a, b));
        }
    }
    for &(a, b) in &pairs {
        let (p, c) = nor_multiply(a, b);
        if p != a as u16 * b as u16 || c != cost {
            wrong += 1;
        }
        let (sa, sb) = (a as i8, b as i8);
        if nor_multiply_signed(sa, sb).0 != sa as i16 * sb as i16 {
            wrong += 1;
        }
    }
    outcome(
        balance == 273 && cost.nor_ops == 64 && cost.columns == 192 && wrong == 0,
        format!(
            "sfu_balance {balance}, {} NORs / {} columns, {wrong} wrong of {} pairs",
            cost.nor_ops,
            cost.columns,
            pairs.len()
        ),
    )
}

fn c10_table(table: &ComponentCostTable) -> Outcome {
    let area = AreaRollup::new(table, &HardwareShape::default());
    let r2 = |v: f64| (v * 100.0).round() / 100.0;
    let frac = count_ops(&WorkloadSpec::bert_base(128)).static_fraction();
    outcome(
        r2(area.analog_module_mm2) == 0.47 && r2(area.digital_module_mm2) == 8.01 && frac > 0.70,
        format!(
            "analog {:.4} mm², digital {:.4} mm², BERT-base L=128 static fraction {frac:.4}",
            area.analog_module_mm2, area.digital_module_mm2
        ),
    )
}

fn c11_determinism(table: &ComponentCostTable) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.task.samples = 1024;
    cfg.task.holdout = 256;
    cfg.rank_policy = RankPolicy::HardThreshold;
    cfg.k_percent_grid = vec![0.0, 10.0, 100.0];
    cfg.seeds = vec![3, 4];
    cfg.selection_modes = vec![SelectionMode::Gradient, SelectionMode::Random];
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<_> = [1usize, 4]
        .iter()
        .map(|&jobs| {
            let out = dir.path().join(format!("jobs{jobs}"));
            cmd_simulate(&cfg, table, jobs, &out).unwrap();
            (
                fs::read(out.join("results.csv")).unwrap(),
                fs::read(out.join("summary.json")).unwrap(),
            )
        })
        .collect();
    let same = runs[0] == runs[1];
    outcome(
        same,
        format!("results.csv and summary.json identical across runs with 1 and 4 workers: {same}"),
    )
}

fn main() -> ExitCode {
    let table = TableFile::builtin().table;
    let criteria: Vec<Criterion> = vec![
        (1, "GEMV oracle equivalence", Box::new(c1_gemv_oracle)),
        (2, "ADC resolution", Box::new(c2_adc_bits)),
        (3, "hard-threshold rank", Box::new(c3_hard_threshold)),
        (4, "sigma gradient vs finite differences", Box::new(c4_grad_sigma)),
        (5, "gradient concentration after fine-tuning", Box::new(c5_gradient_concentration)),
        (6, "gradient selection under MLC noise", Box::new(|| c6_selection_under_noise(&table))),
        (7, "BER calibration", Box::new(c7_ber_calibration)),
        (8, "throughput ratios", Box::new(|| c8_throughput(&table))),
        (9, "digital NOR multiply and SFU balance", Box::new(c9_digital)),
        (10, "component table and static fraction", Box::new(|| c10_table(&table))),
        (11, "simulate determinism", Box::new(|| c11_determinism(&table))),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let start = Instant::now();
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| outcome(false, "panicked"));
        let took: Duration = start.elapsed();
        if !r.pass {
            failed += 1;
        }
        println!(
            "{} criterion {n}: {name}: {} ({:.1} s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
