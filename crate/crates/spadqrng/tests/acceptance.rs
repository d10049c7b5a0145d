//! Acceptance criteria, one line per criterion. Runs sequentially on
//! purpose: the throughput criterion must not share the CPU.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use spadqrng::bench::bench_extract;
use spadqrng::certify::estimate_parallel;
use spadqrng::simulate::{for_each_chunk, simulate_frames};
use spadqrng_core::bits::{pack_bits, unpack_bits};
use spadqrng_core::entropy::{
    conditional_prob, exact_min_entropy, lhl_epsilon_log2, max_k, photon_click_histogram, EntropyReport,
    ModelParams,
};
use spadqrng_core::extract::{
    extract_word, generate_matrix, stream_extract, ExtractorConfig, ExtractorMode, StreamExtractor,
};
use spadqrng_core::rng::SubstreamRng;
use spadqrng_core::source::{calibrate_lambda, calibrate_lambda_ones_fraction, BiasAccounting, DeviceProfile};
use spadqrng_core::special::{igamc, normal_two_sided_quantile};
use spadqrng_core::stats::{
    adjacent_pair_correlation, battery, crosscorrelation_map, hamming_histogram, BatteryConfig, PixelSeries,
};
use spadqrng_core::{BinaryMatrix, BitStream};

struct Outcome {
    passed: bool,
    /// A failure that the criterion itself declares non-fatal.
    fatal: bool,
    detail: String,
}

fn pass(passed: bool, detail: String) -> Outcome {
    Outcome {
        passed,
        fatal: true,
        detail,
    }
}

const MIN: Duration = Duration::from_secs(60);

fn random_stream(rng: &mut SubstreamRng, bits: usize) -> BitStream {
    let words: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rng.random()).collect();
    BitStream::from_words(words, bits).unwrap()
}

// 1. Leftover-hash sizing at the published rate.
fn lhl_sizing() -> Outcome {
    let k = max_k(0.73, 1024, -100.0).unwrap();
    let eps = lhl_epsilon_log2(0.73, 1024, k).unwrap();
    let eps_next = lhl_epsilon_log2(0.73, 1024, k + 1).unwrap();
    pass(
        k == 547 && eps <= -100.0 && eps_next > -100.0,
        format!("max_k = {k}, log2 eps at k: {eps:.2}, at k+1: {eps_next:.2}"),
    )
}

// 2. Closed form against exhaustive normalisation and a 10^6-trial simulation.
fn formula_vs_oracle() -> Outcome {
    const TRIALS: u64 = 1_000_000;
    let etas = [0.05, 0.12, 0.5, 0.9];
    let mut cells = 0usize;
    let mut families = Vec::new();
    for m in 1..=6usize {
        for n in 0..=12u64 {
            for &eta in &etas {
                families.push((m, n, eta));
                cells += 3usize.pow(m as u32);
            }
        }
    }
    // one family-wise 3-sigma-equivalent error rate over every compared cell
    let z_limit = normal_two_sided_quantile(0.0027 / cells as f64);
    let mut negative = 0usize;
    let mut worst_norm: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut beyond_3 = 0usize;
    let mut min_chi_p: f64 = 1.0;
    for (idx, &(m, n, eta)) in families.iter().enumerate() {
        let mut rng = SubstreamRng::seed_from_u64(0xacc2_0000 + idx as u64);
        let hist = photon_click_histogram(m, eta, n, TRIALS, &mut rng);
        let size = 1usize << m;
        // chi-square of the s = 0 table, sparse cells pooled
        let (mut chi, mut bins) = (0.0, 0usize);
        let (mut pool_o, mut pool_e) = (0.0, 0.0);
        for s in 0..size {
            let d = s.count_ones() as usize;
            let mut total = 0.0;
            for x in 0..size {
                if s & !x != 0 {
                    continue;
                }
                let p = conditional_prob(m, eta, n, d, x.count_ones() as usize);
                if p < 0.0 {
                    negative += 1;
                }
                total += p;
                // outcomes x given s come from photon patterns c with c | s = x
                let count: u64 = (0..size).filter(|&c| c | s == x).map(|c| hist[c]).sum();
                let freq = count as f64 / TRIALS as f64;
                let sd = (p.max(0.0) * (1.0 - p).max(0.0) / TRIALS as f64).sqrt();
                let z = if sd > 0.0 {
                    (freq - p).abs() / sd
                } else if freq != p.max(0.0) {
                    f64::INFINITY
                } else {
                    0.0
                };
                worst_z = worst_z.max(z);
                if z > 3.0 {
                    beyond_3 += 1;
                }
                if s == 0 {
                    let e = p * TRIALS as f64;
                    pool_o += count as f64;
                    pool_e += e;
                    if pool_e >= 5.0 {
                        chi += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
                        bins += 1;
                        pool_o = 0.0;
                        pool_e = 0.0;
                    }
                }
            }
            worst_norm = worst_norm.max((total - 1.0).abs());
        }
        if bins >= 2 {
            min_chi_p = min_chi_p.min(igamc((bins - 1) as f64 / 2.0, chi / 2.0));
        }
    }
    let chi_limit = 0.0027 / families.len() as f64;
    pass(
        negative == 0 && worst_norm <= 1e-10 && worst_z <= z_limit && min_chi_p >= chi_limit,
        format!(
            "{} (m,n,eta) cases, {cells} (x,s) cells: negatives {negative}, max |sum-1| {worst_norm:.1e}, \
             max |z| {worst_z:.2} (family-wise limit {z_limit:.2}; {beyond_3} cells beyond 3 sigma, \
             {:.0} expected by chance), smallest s=0 table chi-square P {min_chi_p:.2e} (limit {chi_limit:.1e})",
            families.len(),
            0.0027 * cells as f64
        ),
    )
}

// 3. Weight-class Monte Carlo estimator against exhaustive enumeration.
fn estimator_vs_exact() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for m in [2usize, 4, 8, 12] {
        let sets = [
            (0.12, 8.45e-5 + 1e-3, 0usize, m as f64 * 2f64.ln() / 0.12),
            (0.09, 0.05, 1, m as f64 * 2f64.ln() / 0.09),
            (0.5, 0.01, m / 4, 0.3 * m as f64),
        ];
        for (i, &(eta, p, hot, lambda)) in sets.iter().enumerate() {
            let params = ModelParams::new(m, eta, p, hot, lambda).unwrap();
            let exact = exact_min_entropy(&params, None).unwrap();
            let est = estimate_parallel(&params, 40_000, 300 + (m * 3 + i) as u64).unwrap();
            let z = (exact.h_min_total - est.h_min_total).abs() / est.std_error_total;
            worst = worst.max(z);
            lines.push(format!("m={m} set{i}: {:.4} vs {:.4}+-{:.4}", exact.h_min_total, est.h_min_total, est.std_error_total));
        }
    }
    pass(worst <= 3.0, format!("12 comparisons, max |z| = {worst:.2}; {}", lines.join("; ")))
}

fn describe(r: &EntropyReport) -> String {
    format!(
        "eta={:.2}: {:.4}+-{:.4}/non-hot bit, {:.4}/raw bit",
        r.params.eta, r.h_min_per_bit, r.std_error_per_bit, r.h_min_per_raw_bit
    )
}

// 4. Full-scale certification at the published parameter set.
fn full_scale() -> Outcome {
    const SAMPLES: u64 = 10_000;
    let profile = DeviceProfile::chip_default();
    let (lo, hi) = profile.eta_range();
    let reports: Vec<EntropyReport> = [lo, hi]
        .iter()
        .map(|&eta| estimate_parallel(&ModelParams::from_profile(&profile, eta).unwrap(), SAMPLES, 4).unwrap())
        .collect();
    let worst = reports.iter().min_by(|a, b| a.h_min_total.total_cmp(&b.h_min_total)).unwrap();
    let ok = (worst.h_min_per_bit - 0.73).abs() <= 0.05;
    let mut detail = format!(
        "lambda={:.1}, certified at eta={:.2}: h_min_per_bit {:.4} (per raw bit {:.4}), k_max {:?}; [{}; {}]",
        profile.lambda,
        worst.params.eta,
        worst.h_min_per_bit,
        worst.h_min_per_raw_bit,
        worst.extraction.k_max,
        describe(&reports[0]),
        describe(&reports[1])
    );
    if !ok {
        let base = ModelParams::from_profile(&profile, lo).unwrap();
        let mut sweep = Vec::new();
        for eta in [0.06, 0.09, 0.12] {
            let p = ModelParams { eta, ..base };
            let r = estimate_parallel(&p, 2000, 5).unwrap();
            sweep.push(format!("eta={eta}: {:.4}/{:.4}", r.h_min_per_bit, r.h_min_per_raw_bit));
        }
        for p_eff in [0.0, 0.01, 0.05] {
            let p = ModelParams { p_dark_eff: p_eff, ..base };
            let r = estimate_parallel(&p, 2000, 5).unwrap();
            sweep.push(format!("p_dark_eff={p_eff}: {:.4}/{:.4}", r.h_min_per_bit, r.h_min_per_raw_bit));
        }
        for hot in [0usize, 1024] {
            let p = ModelParams { hot_count: hot, ..base };
            let r = estimate_parallel(&p, 2000, 5).unwrap();
            sweep.push(format!("hot={hot}: {:.4}/{:.4}", r.h_min_per_bit, r.h_min_per_raw_bit));
        }
        for p_click in [0.3, 0.7] {
            let mut prof = profile.clone();
            prof.lambda = calibrate_lambda(&prof, p_click).unwrap();
            let p = ModelParams::from_profile(&prof, lo).unwrap();
            let r = estimate_parallel(&p, 2000, 5).unwrap();
            sweep.push(format!("p_click={p_click}: {:.4}/{:.4}", r.h_min_per_bit, r.h_min_per_raw_bit));
        }
        detail.push_str(&format!(
            "; outside 0.73+-0.05, sensitivity sweep (non-hot/raw per bit): {}",
            sweep.join(", ")
        ));
    }
    Outcome {
        passed: ok,
        fatal: false,
        detail,
    }
}

// 5. Hamming-weight histogram of simulated raw data.
fn raw_histogram() -> Outcome {
    const WORDS: usize = 1_000_000;
    let mut profile = DeviceProfile::chip_default();
    profile.lambda = calibrate_lambda_ones_fraction(&profile, 0.5036, BiasAccounting::ExcludeHot).unwrap();
    let hot: std::collections::HashSet<u32> = profile.hot_pixels.iter().copied().collect();
    let per_frame = profile.detectors() - hot.len();
    let frames = (WORDS * 8).div_ceil(per_frame) as u64;
    let mut bits = BitStream::with_capacity(frames as usize * per_frame);
    for_each_chunk(&profile, 5, frames, 256, |_, chunk| {
        for (frame, _) in chunk {
            for i in 0..profile.detectors() {
                if !hot.contains(&(i as u32)) {
                    bits.push(frame.bits().get(i));
                }
            }
        }
        Ok(())
    })
    .unwrap();
    let bits = bits.slice(0, WORDS * 8);
    let ones = bits.count_ones() as f64 / bits.len() as f64;
    let h = hamming_histogram(&bits, 8, 0.5036).unwrap();
    pass(
        h.words == WORDS as u64 && h.p_value > 0.01,
        format!(
            "{frames} frames, non-hot ones fraction {ones:.5}, chi-square {:.2} on {} dof, P = {:.4}",
            h.chi_square, h.dof, h.p_value
        ),
    )
}

// 6. Battery on extracted simulator output.
fn extracted_battery() -> Outcome {
    const SEQUENCES: usize = 100;
    const LEN: usize = 1_000_000;
    let profile = DeviceProfile::chip_default();
    let matrix = generate_matrix(32, 1024, &mut SubstreamRng::seed_from_u64(6)).unwrap();
    let config = ExtractorConfig::new(matrix, ExtractorMode::Fixed).unwrap();
    let out_per_frame = profile.detectors() / 1024 * 32;
    let frames = (SEQUENCES * LEN).div_ceil(out_per_frame) as u64;
    let mut ex = StreamExtractor::new(&config);
    let mut extracted = BitStream::with_capacity(SEQUENCES * LEN + out_per_frame);
    for_each_chunk(&profile, 6, frames, 2048, |_, chunk| {
        for (frame, _) in chunk {
            ex.push_bits(frame.bits());
        }
        extracted.extend_from_stream(&ex.take_output());
        Ok(())
    })
    .unwrap();
    let seqs: Vec<BitStream> = (0..SEQUENCES).map(|i| extracted.slice(i * LEN, LEN)).collect();
    let report = battery(&seqs, &BatteryConfig::default());
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{} {}/{} U={:.4}{}",
                r.name,
                r.pass_count,
                r.sequences,
                r.uniformity_p().unwrap_or(f64::NAN),
                if r.passed { "" } else { " FAIL" }
            )
        })
        .collect();
    let strict_templates = report.template_rows.iter().filter(|r| !r.passed).count();
    pass(
        report.passed && report.pass_threshold == 96 && report.rows.iter().all(|r| r.skipped.is_none()),
        format!(
            "{frames} frames -> {SEQUENCES} x {LEN} bits, threshold {}: {}; {} of {} individual templates \
             miss the per-template rule",
            report.pass_threshold,
            rows.join(", "),
            strict_templates,
            report.template_rows.len()
        ),
    )
}

fn subarray(p_cross: f64) -> DeviceProfile {
    let mut p = DeviceProfile::ideal(16, 16, 0.12, 0.0);
    p.p_dark = 8.45e-5;
    p.p_cross = p_cross;
    p.lambda = calibrate_lambda(&p, 0.5).unwrap();
    p
}

fn series_for(profile: &DeviceProfile, frames: u64, seed: u64) -> PixelSeries {
    let mut series = PixelSeries::new(profile.rows, profile.cols);
    for_each_chunk(profile, seed, frames, 1 << 14, |_, chunk| {
        for (frame, _) in chunk {
            series.push_frame(frame, (0, 0)).unwrap();
        }
        Ok(())
    })
    .unwrap();
    series
}

/// Mean Pearson correlation over adjacent pairs implied by the crosstalk
/// model: primary clicks are independent with probability `q0`, and a click
/// at `k` induces one at a uniformly chosen neighbour with probability
/// `p_cross`.
fn predicted_adjacent_correlation(profile: &DeviceProfile) -> f64 {
    let (rows, cols) = (profile.rows, profile.cols);
    let m = rows * cols;
    let q0 = 1.0 - (1.0 - profile.p_dark) * (-profile.eta_mean * profile.lambda / m as f64).exp();
    let nbrs = |r: usize, c: usize| {
        let mut v = Vec::new();
        if r > 0 {
            v.push((r - 1, c));
        }
        if r + 1 < rows {
            v.push((r + 1, c));
        }
        if c > 0 {
            v.push((r, c - 1));
        }
        if c + 1 < cols {
            v.push((r, c + 1));
        }
        v
    };
    let quiet_from = |k: (usize, usize)| 1.0 - q0 * profile.p_cross / nbrs(k.0, k.1).len() as f64;
    let p_zero = |x: (usize, usize)| (1.0 - q0) * nbrs(x.0, x.1).into_iter().map(quiet_from).product::<f64>();
    let (mut sum, mut pairs) = (0.0, 0usize);
    for r in 0..rows {
        for c in 0..cols {
            for j in [(r, c + 1), (r + 1, c)] {
                if j.0 >= rows || j.1 >= cols {
                    continue;
                }
                let (z0, z1) = (p_zero((r, c)), p_zero(j));
                let both = z0 * z1 / (quiet_from(j) * quiet_from((r, c)));
                let cov = both - z0 * z1;
                sum += cov / (z0 * (1.0 - z0) * z1 * (1.0 - z1)).sqrt();
                pairs += 1;
            }
        }
    }
    sum / pairs as f64
}

// 7. Crosstalk recovered by the correlation estimators.
fn correlation_estimators() -> Outcome {
    const FRAMES: u64 = 1_000_000;
    let with = subarray(1e-3);
    let series = series_for(&with, FRAMES, 71);
    let pooled = adjacent_pair_correlation(&series).unwrap();
    let predicted = predicted_adjacent_correlation(&with);
    let z_signal = pooled.mean / pooled.std_error;
    let z_model = (pooled.mean - predicted) / pooled.std_error;

    let without = subarray(0.0);
    let series0 = series_for(&without, FRAMES, 72);
    let map = crosscorrelation_map(&series0, (8, 8), 11).unwrap();
    let sigma = 1.0 / (FRAMES as f64).sqrt();
    let neighbours: Vec<f64> = map
        .entries
        .iter()
        .filter(|e| (e.0, e.1) != (0, 0))
        .map(|e| e.2.value().unwrap())
        .collect();
    let limit = normal_two_sided_quantile(0.0027 / neighbours.len() as f64);
    let worst0 = neighbours.iter().fold(0.0f64, |a, v| a.max(v.abs() / sigma));
    let beyond3 = neighbours.iter().filter(|v| v.abs() / sigma > 3.0).count();
    let pooled0 = adjacent_pair_correlation(&series0).unwrap();
    let z_null = pooled0.mean / pooled0.std_error;
    pass(
        z_signal > 3.0 && z_model.abs() <= 3.0 && worst0 <= limit && z_null.abs() <= 3.0,
        format!(
            "p_cross=1e-3: pooled adjacent rho {:.3e} +- {:.1e} over {} pairs (z={z_signal:.1}), model {predicted:.3e} \
             (z={z_model:.2}); p_cross=0: {} neighbours, max |z| {worst0:.2} (family-wise limit {limit:.2}, \
             {beyond3} beyond 3 sigma), pooled adjacent z={z_null:.2}",
            pooled.mean,
            pooled.std_error,
            pooled.pairs,
            neighbours.len()
        ),
    )
}

fn naive_product(m: &BinaryMatrix, x: &BitStream) -> u64 {
    let mut out = 0u64;
    for j in 0..m.rows() {
        let mut bit = false;
        for i in 0..m.cols() {
            bit ^= m.get(j, i) & x.get(i);
        }
        out |= (bit as u64) << j;
    }
    out
}

// 8. Extractor throughput, anchored to the naive product.
fn extractor_performance() -> Outcome {
    let mut rng = SubstreamRng::seed_from_u64(8);
    let mut mismatches = 0;
    for case in 0..10_000 {
        let (k, n) = if case % 2 == 0 { (8, 16) } else { (32, 1024) };
        let m = generate_matrix(k, n, &mut rng).unwrap();
        let x = random_stream(&mut rng, n);
        if extract_word(&m, &x).unwrap() != naive_product(&m, &x) {
            mismatches += 1;
        }
        if n == 1024 {
            let cfg = ExtractorConfig::new(m.clone(), ExtractorMode::Fixed).unwrap();
            if stream_extract(&cfg, &x).bits.read_bits(0, 32) != naive_product(&m, &x) {
                mismatches += 1;
            }
        }
    }
    let input_bits = 1 << 27;
    let mut results = Vec::new();
    for (mode, target) in [(ExtractorMode::Fixed, 400e6), (ExtractorMode::Variable, 100e6)] {
        let m = generate_matrix(mode.output_bits(), 1024, &mut rng).unwrap();
        let r = bench_extract(&ExtractorConfig::new(m, mode).unwrap(), input_bits, 2.0);
        results.push((mode, r.output_rate, target));
    }
    pass(
        mismatches == 0 && results.iter().all(|&(_, rate, target)| rate >= target),
        format!(
            "10^4 naive-oracle cases, {mismatches} mismatches; {}",
            results
                .iter()
                .map(|(mode, rate, target)| format!("{mode}: {:.0} Mbit/s (target {:.0})", rate / 1e6, target / 1e6))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// 9. Property suites.
fn property_suites() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let mut failures = Vec::new();

    let linear = runner.run(&(any::<u64>(), 0usize..3), |(seed, which)| {
        let mut rng = SubstreamRng::seed_from_u64(seed);
        let (k, n) = [(32, 1024), (8, 1024), (5, 77)][which];
        let m = generate_matrix(k, n, &mut rng).unwrap();
        let a = random_stream(&mut rng, n);
        let b = random_stream(&mut rng, n);
        let lhs = extract_word(&m, &a.xor(&b).unwrap()).unwrap();
        prop_assert_eq!(lhs, extract_word(&m, &a).unwrap() ^ extract_word(&m, &b).unwrap());
        prop_assert_eq!(extract_word(&m, &BitStream::zeros(n)).unwrap(), 0);
        Ok(())
    });
    if let Err(e) = linear {
        failures.push(format!("linearity: {e}"));
    }

    let profile = DeviceProfile::chip_default();
    let reference = simulate_frames(&profile, 99, 0, 16, Some(1)).unwrap();
    for threads in [2usize, 4, 8] {
        if simulate_frames(&profile, 99, 0, 16, Some(threads)).unwrap() != reference {
            failures.push(format!("simulation differs with {threads} threads"));
        }
    }

    let pack = runner.run(&proptest::collection::vec(any::<bool>(), 0..10_000), |bits| {
        let s = BitStream::from_bools(bits.iter().copied());
        let bytes = pack_bits(&s);
        prop_assert_eq!(bytes.len(), bits.len().div_ceil(8));
        prop_assert_eq!(unpack_bits(&bytes, bits.len()).unwrap(), s);
        Ok(())
    });
    if let Err(e) = pack {
        failures.push(format!("pack/unpack: {e}"));
    }

    let matrix = runner.run(&(1usize..40, 1usize..300, any::<u64>()), |(k, n, seed)| {
        let m = generate_matrix(k.min(n), n, &mut SubstreamRng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(BinaryMatrix::from_text(&m.to_text()).unwrap(), m);
        Ok(())
    });
    if let Err(e) = matrix {
        failures.push(format!("matrix text: {e}"));
    }

    pass(
        failures.is_empty(),
        if failures.is_empty() {
            "extractor linearity/zero (256 cases), thread counts 1/2/4/8, pack/unpack (256), matrix text (256)".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (u32, &'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 9] = [
        (1, "LHL sizing", lhl_sizing, None),
        (2, "closed form vs oracle", formula_vs_oracle, Some(10 * MIN)),
        (3, "estimator vs exact min-entropy", estimator_vs_exact, Some(10 * MIN)),
        (4, "full-scale certification", full_scale, Some(30 * MIN)),
        (5, "raw Hamming-weight histogram", raw_histogram, None),
        (6, "extracted-data battery", extracted_battery, Some(30 * MIN)),
        (7, "correlation estimators", correlation_estimators, None),
        (8, "extractor performance", extractor_performance, None),
        (9, "property suites", property_suites, None),
    ];
    let mut fatal = 0;
    for (id, name, run, limit) in criteria {
        let tag = format!("criterion_{id}");
        if !filter.is_empty() && !filter.iter().any(|f| tag.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                outcome.passed = false;
                outcome.fatal = true;
                outcome.detail.push_str(&format!("; exceeded {:.0} s budget", limit.as_secs_f64()));
            }
        }
        let verdict = match (outcome.passed, outcome.fatal) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (non-fatal: deviation reported)",
        };
        println!("acceptance {id} [{name}] {verdict} in {:.1} s: {}", elapsed.as_secs_f64(), outcome.detail);
        if !outcome.passed && outcome.fatal {
            fatal += 1;
        }
    }
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{fatal} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
