//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits nonzero if any criterion fails.
//!
//! Runs as a plain binary (`harness = false`) so the lines are visible
//! under `cargo test`.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mer_core::data::{
    build_distance_tensor, generate_splits, synth_generate, DistanceTensor, SplitSizes, SynthChannel, SynthConfig,
    SynthKind,
};
use mer_core::ensemble::{
    delta_loss, feature_map_psi, most_violated_top, most_violated_triplet, solve_working_set_qp,
    train, EnsembleModel, Objective, OrderingMatrix, TrainingConfig, WorkingConstraint, KKT_TOL,
};
use mer_core::evaluation::{
    cmc_curve, ensemble_distance_matrix, uniform_baseline_matrix, DistanceMatrix,
};
use mer_core::experiment::{run_eval, run_report, run_train, ExperimentConfig, Method, RunOptions};
use mer_core::metrics::{
    build_metric_bank, eigen_residual, kissme_fit, klfda_distance, klfda_fit, klfda_scatter, sigma_from_quantile,
    BankConfig, BankEntry, KernelKind, KernelParams, KlfdaOptions, LearnerSpec, PcaModel,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------
// 1. separation oracles vs exhaustive enumeration

fn random_tensor(rng: &mut ChaCha8Rng, m: usize, t: usize, integer: bool) -> DistanceTensor {
    let vals = (0..m * m * t)
        .map(|_| if integer { rng.random_range(0..4) as f64 } else { rng.random_range(0.0..3.0) })
        .collect();
    DistanceTensor::new((0..m).map(|i| format!("p{i}")).collect(), (0..t).map(|s| format!("d{s}")).collect(), vals)
        .unwrap()
}

fn gallery(i: usize, c: usize) -> usize {
    if c < i {
        c
    } else {
        c + 1
    }
}

/// Per-entry contribution of `p_ij = 1` to the objective being maximized;
/// both objectives are sums of these over the marked entries.
fn entry_coefficients(w: &[f64], tensor: &DistanceTensor, k: Option<usize>) -> Vec<f64> {
    let m = tensor.m();
    let ens = |i: usize, j: usize| -> f64 { (0..w.len()).map(|s| w[s] * tensor.value(i, j, s)).sum() };
    let mut coef = Vec::with_capacity(m * (m - 1));
    for i in 0..m {
        for c in 0..m - 1 {
            let j = gallery(i, c);
            let margin = ens(i, j) - ens(i, i);
            match k {
                Some(k) => {
                    // rank position by counting, ties to the lower gallery index
                    let d = ens(i, j);
                    let pos = (0..m - 1)
                        .map(|c2| gallery(i, c2))
                        .filter(|&j2| {
                            let d2 = ens(i, j2);
                            d2 < d || (d2 == d && j2 < j)
                        })
                        .count();
                    let top = if pos < k { 1.0 } else { 0.0 };
                    coef.push((top - margin) / (m * k) as f64);
                }
                None => coef.push((1.0 - margin) / (m * (m - 1)) as f64),
            }
        }
    }
    coef
}

/// Maximum of the linear objective over all `2^n` binary matrices, by
/// splitting the bits in two halves and enumerating every combination.
fn enumerate_max(coef: &[f64]) -> (f64, u64) {
    let n = coef.len();
    let lo_bits = n / 2;
    let table = |offset: usize, bits: usize| -> Vec<f64> {
        (0u64..1 << bits)
            .map(|mask| (0..bits).filter(|b| mask >> b & 1 == 1).map(|b| coef[offset + b]).sum())
            .collect()
    };
    let lo = table(0, lo_bits);
    let hi = table(lo_bits, n - lo_bits);
    let mut best = (f64::NEG_INFINITY, 0u64);
    for (h, hv) in hi.iter().enumerate() {
        for (l, lv) in lo.iter().enumerate() {
            let v = lv + hv;
            if v > best.0 {
                best = (v, (h as u64) << lo_bits | l as u64);
            }
        }
    }
    best
}

fn matrix_from_mask(m: usize, mask: u64) -> OrderingMatrix {
    let mut p = OrderingMatrix::correct(m);
    for idx in 0..m * (m - 1) {
        p.set(idx / (m - 1), idx % (m - 1), mask >> idx & 1 == 1);
    }
    p
}

fn top_objective(p: &OrderingMatrix, w: &[f64], tensor: &DistanceTensor, k: usize) -> f64 {
    let star = feature_map_psi(&OrderingMatrix::correct(tensor.m()), tensor, k).unwrap();
    let psi = feature_map_psi(p, tensor, k).unwrap();
    let lin: f64 = w.iter().zip(star.iter().zip(&psi)).map(|(w, (a, b))| w * (a - b)).sum();
    delta_loss(p, w, tensor, k).unwrap() - lin
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for inst in 0..200 {
        let m = [3, 4, 5][inst % 3];
        let t = rng.random_range(1..=3);
        let integer = inst % 4 == 0;
        let tensor = random_tensor(&mut rng, m, t, integer);
        let w: Vec<f64> = (0..t)
            .map(|_| if integer { rng.random_range(0..3) as f64 } else { rng.random_range(0.0..2.0) })
            .collect();
        let k = rng.random_range(1..m);

        let sep = most_violated_top(&w, &tensor, k).unwrap();
        let (best, mask) = enumerate_max(&entry_coefficients(&w, &tensor, Some(k)));
        // the enumerated maximizer, scored through the loss and feature map
        let direct = top_objective(&matrix_from_mask(m, mask), &w, &tensor, k);
        let err = (sep.value - best).abs().max((direct - best).abs());
        worst = worst.max(err);
        if err > 1e-10 {
            failures.push(format!("top instance {inst}: oracle {} enumeration {best} direct {direct}", sep.value));
        }

        let tri = most_violated_triplet(&w, &tensor).unwrap();
        let (best_t, _) = enumerate_max(&entry_coefficients(&w, &tensor, None));
        let err = (tri.value - best_t).abs();
        worst = worst.max(err);
        if err > 1e-10 {
            failures.push(format!("triplet instance {inst}: oracle {} enumeration {best_t}", tri.value));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(120);
    let mut detail = format!("200 instances, max |oracle - enumeration| = {worst:.2e}, {}", secs(elapsed));
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} mismatches, first: {f}", failures.len()));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// 2. working-set QP vs a projected-gradient reference

/// Euclidean projection onto `{a >= 0, sum(a) <= nu}`.
fn project(v: &mut [f64], nu: f64) {
    let clipped: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if clipped <= nu {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - nu) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

struct Reference {
    primal: f64,
    gap: f64,
}

/// Accelerated projected gradient ascent on the dual
/// `max b.a - 1/2 |(G^T a)_+|^2` over `{a >= 0, sum(a) <= nu}`, with
/// restarts; the primal point is `w = (G^T a)_+`.
fn reference_qp(cs: &[WorkingConstraint], t: usize, nu: f64) -> Reference {
    let r = cs.len();
    if r == 0 {
        return Reference { primal: 0.0, gap: 0.0 };
    }
    let lip: f64 = cs.iter().map(|c| c.g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().max(1e-12);
    let step = 1.0 / lip;
    let primal_w = |a: &[f64]| -> Vec<f64> {
        let mut u = vec![0.0; t];
        for (c, ai) in cs.iter().zip(a) {
            for (x, g) in u.iter_mut().zip(&c.g) {
                *x += ai * g;
            }
        }
        u.iter().map(|x| x.max(0.0)).collect()
    };
    let dual = |a: &[f64]| -> f64 {
        let w = primal_w(a);
        cs.iter().zip(a).map(|(c, ai)| c.b * ai).sum::<f64>() - 0.5 * w.iter().map(|x| x * x).sum::<f64>()
    };
    let primal = |a: &[f64]| -> f64 {
        let w = primal_w(a);
        let xi = cs
            .iter()
            .map(|c| c.b - c.g.iter().zip(&w).map(|(g, x)| g * x).sum::<f64>())
            .fold(0.0f64, f64::max);
        0.5 * w.iter().map(|x| x * x).sum::<f64>() + nu * xi
    };
    let mut a = vec![0.0; r];
    let mut y = a.clone();
    let mut theta = 1.0f64;
    let mut d_prev = dual(&a);
    let mut best = Reference { primal: primal(&a), gap: f64::INFINITY };
    for iter in 0..3_000_000 {
        let w = primal_w(&y);
        let mut next: Vec<f64> = cs
            .iter()
            .zip(&y)
            .map(|(c, yi)| yi + step * (c.b - c.g.iter().zip(&w).map(|(g, x)| g * x).sum::<f64>()))
            .collect();
        project(&mut next, nu);
        let d = dual(&next);
        if d < d_prev {
            // restart momentum
            theta = 1.0;
            y = next.clone();
        } else {
            let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            y = next.iter().zip(&a).map(|(n, o)| n + (theta - 1.0) / theta_next * (n - o)).collect();
            theta = theta_next;
        }
        a = next;
        d_prev = d;
        if iter % 64 == 0 {
            let p = primal(&a);
            let gap = p - d;
            if gap < best.gap {
                best = Reference { primal: p, gap };
            }
            if gap <= 1e-10 * p.abs().max(1.0) {
                break;
            }
        }
    }
    best
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_kkt: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    let mut worst_cert: f64 = 0.0;
    let mut failures = Vec::new();
    for inst in 0..100 {
        let t = rng.random_range(1..=10);
        let r = rng.random_range(1..=20);
        let nu = 10f64.powf(rng.random_range(-1.0..3.0));
        let cs: Vec<WorkingConstraint> = (0..r)
            .map(|_| WorkingConstraint {
                g: (0..t).map(|_| rng.random_range(-1.0..1.5)).collect(),
                b: rng.random_range(0.0..1.0),
            })
            .collect();
        let sol = match solve_working_set_qp(&cs, t, nu) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("instance {inst}: {e}"));
                continue;
            }
        };
        worst_kkt = worst_kkt.max(sol.residuals.max());
        // duality certificate from the returned multipliers
        let mut u = vec![0.0; t];
        for (c, a) in cs.iter().zip(&sol.alpha) {
            for (x, g) in u.iter_mut().zip(&c.g) {
                *x += a * g;
            }
        }
        let dual_value = cs.iter().zip(&sol.alpha).map(|(c, a)| c.b * a).sum::<f64>()
            - 0.5 * u.iter().map(|x| x.max(0.0).powi(2)).sum::<f64>();
        let cert = (sol.objective - dual_value).abs() / sol.objective.abs().max(1.0);
        worst_cert = worst_cert.max(cert);
        let feasible = sol.alpha.iter().all(|a| *a >= 0.0) && sol.alpha.iter().sum::<f64>() <= nu * (1.0 + 1e-12);
        let reference = reference_qp(&cs, t, nu);
        let diff = (sol.objective - reference.primal).abs() / sol.objective.abs().max(1.0);
        worst_obj = worst_obj.max(diff);
        if sol.residuals.max() > KKT_TOL || diff > 1e-6 || cert > 1e-8 || !feasible {
            failures.push(format!(
                "instance {inst} (T={t}, R={r}, nu={nu:.3e}): kkt {:.2e}, objective {} vs reference {} (gap {:.1e}), certificate {cert:.1e}",
                sol.residuals.max(),
                sol.objective,
                reference.primal,
                reference.gap
            ));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "100 working sets, max KKT residual {worst_kkt:.2e}, max duality gap {worst_cert:.2e}, max |obj - reference| {worst_obj:.2e}, {}",
        secs(elapsed)
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {} failures, first: {f}", failures.len()));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// shared synthetic runs for criteria 3-5

fn channel(name: &str, dim: usize, kind: SynthKind) -> SynthChannel {
    SynthChannel { name: name.into(), dim, kind }
}

fn kissme_bank(schema: &[mer_core::data::ChannelSchema]) -> BankConfig {
    BankConfig::new(
        schema
            .iter()
            .map(|c| BankEntry { channel: c.name.clone(), learner: LearnerSpec::Kissme { pca_dim: c.dim, regularize: true } })
            .collect(),
    )
}

struct SplitData {
    train: DistanceTensor,
    test: DistanceTensor,
}

fn split_tensors(config: &SynthConfig, splits: usize, seed: u64) -> Vec<SplitData> {
    let ds = synth_generate(config).unwrap();
    let bank_cfg = kissme_bank(ds.schema());
    generate_splits(&ds, splits, seed, SplitSizes::default())
        .unwrap()
        .iter()
        .map(|s| {
            let bank = build_metric_bank(&ds, &s.train_ids, &bank_cfg).unwrap();
            SplitData {
                train: build_distance_tensor(&bank, &ds, &s.train_ids).unwrap(),
                test: build_distance_tensor(&bank, &ds, &s.test_ids).unwrap(),
            }
        })
        .collect()
}

fn rank1(matrix: &DistanceMatrix) -> f64 {
    cmc_curve(matrix).unwrap().rates[0]
}

fn test_rank1(model: &EnsembleModel, test: &DistanceTensor) -> f64 {
    rank1(&ensemble_distance_matrix(&model.weights, test).unwrap())
}

struct Run {
    label: String,
    tensor: DistanceTensor,
    config: TrainingConfig,
    model: Result<EnsembleModel, String>,
}

const TOP: TrainingConfig =
    TrainingConfig { nu: 100.0, k: 10, epsilon: 1e-6, max_iterations: 500, objective: Objective::CmcTop };
const TRIPLET: TrainingConfig =
    TrainingConfig { nu: 1000.0, k: 10, epsilon: 1e-6, max_iterations: 500, objective: Objective::CmcTriplet };

fn fit(label: String, tensor: &DistanceTensor, config: TrainingConfig, runs: &mut Vec<Run>) -> Option<EnsembleModel> {
    let model = train(tensor, &config).map_err(|e| e.to_string());
    let out = model.as_ref().ok().cloned();
    runs.push(Run { label, tensor: tensor.clone(), config, model });
    out
}

fn criterion_4(runs: &mut Vec<Run>) -> Verdict {
    let start = Instant::now();
    let config = SynthConfig {
        m: 120,
        seed: 404,
        channels: vec![
            channel("oracle", 2, SynthKind::Oracle { margin: 1.0, delta: 0.05 }),
            channel("noise_a", 4, SynthKind::Noise { scale: 1.0 }),
            channel("noise_b", 4, SynthKind::Noise { scale: 1.0 }),
            channel("noise_c", 4, SynthKind::Noise { scale: 1.0 }),
        ],
    };
    let data = split_tensors(&config, 10, 4);
    let mut min_mass = [f64::INFINITY; 2];
    let mut mean_rank1 = [0.0; 2];
    let mut errors = Vec::new();
    for (s, d) in data.iter().enumerate() {
        for (o, cfg) in [TOP, TRIPLET].into_iter().enumerate() {
            match fit(format!("oracle split {s} {}", cfg.objective.name()), &d.train, cfg, runs) {
                Some(m) => {
                    min_mass[o] = min_mass[o].min(m.mass_fraction(0));
                    mean_rank1[o] += test_rank1(&m, &d.test) / data.len() as f64;
                }
                None => errors.push(format!("split {s} {}", cfg.objective.name())),
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = errors.is_empty()
        && min_mass.iter().all(|&v| v >= 0.9)
        && mean_rank1.iter().all(|&v| (v - 1.0).abs() < 1e-12)
        && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "10 splits of 60/60: oracle weight share min {:.4} (top) / {:.4} (triplet), mean test rank-1 {:.4} / {:.4}, {}{}",
            min_mass[0],
            min_mass[1],
            mean_rank1[0],
            mean_rank1[1],
            secs(elapsed),
            if errors.is_empty() { String::new() } else { format!(", training failed on {errors:?}") }
        ),
    )
}

fn criterion_5(runs: &mut Vec<Run>) -> Verdict {
    let config = SynthConfig {
        m: 120,
        seed: 505,
        channels: vec![
            channel("partial_a", 4, SynthKind::Partial { spread: 1.0, noise: 0.35 }),
            channel("partial_b", 4, SynthKind::Partial { spread: 1.0, noise: 0.35 }),
            channel("noise_a", 4, SynthKind::Noise { scale: 1.0 }),
            channel("noise_b", 4, SynthKind::Noise { scale: 1.0 }),
        ],
    };
    let data = split_tensors(&config, 10, 5);
    let n = data.len() as f64;
    let (mut single, mut uniform, mut top, mut triplet) = ([0.0; 2], 0.0, 0.0, 0.0);
    let mut errors = Vec::new();
    for (s, d) in data.iter().enumerate() {
        let m = d.test.m();
        for (c, acc) in single.iter_mut().enumerate() {
            *acc += rank1(&DistanceMatrix::new(m, m, d.test.slice(c)).unwrap()) / n;
        }
        uniform += rank1(&uniform_baseline_matrix(&d.test).0) / n;
        match fit(format!("partial split {s} cmc_top"), &d.train, TOP, runs) {
            Some(model) => top += test_rank1(&model, &d.test) / n,
            None => errors.push(format!("split {s} cmc_top")),
        }
        match fit(format!("partial split {s} cmc_triplet"), &d.train, TRIPLET, runs) {
            Some(model) => triplet += test_rank1(&model, &d.test) / n,
            None => errors.push(format!("split {s} cmc_triplet")),
        }
    }
    let designed = single.iter().all(|&r| (0.3..=0.7).contains(&r));
    let pass = errors.is_empty() && designed && top >= uniform && top >= triplet - 0.02;
    verdict(
        pass,
        format!(
            "single-channel rank-1 {:.3} / {:.3}; mean rank-1 uniform {uniform:.3}, cmc_top {top:.3}, cmc_triplet {triplet:.3}{}",
            single[0],
            single[1],
            if errors.is_empty() { String::new() } else { format!(", training failed on {errors:?}") }
        ),
    )
}

fn criterion_3(runs: &mut Vec<Run>) -> Verdict {
    // extra small random problems on top of the synthetic runs
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for inst in 0..20 {
        let m = rng.random_range(8..20);
        let t = rng.random_range(1..5);
        let mut vals = Vec::with_capacity(m * m * t);
        for i in 0..m {
            for j in 0..m {
                for s in 0..t {
                    let gap = if i == j { 0.0 } else { 0.8 + s as f64 * 0.4 };
                    vals.push(rng.random_range(0.0..1.5) + gap);
                }
            }
        }
        let tensor = DistanceTensor::new(
            (0..m).map(|i| format!("p{i}")).collect(),
            (0..t).map(|s| format!("d{s}")).collect(),
            vals,
        )
        .unwrap();
        let k = rng.random_range(1..m.min(6));
        for objective in [Objective::CmcTop, Objective::CmcTriplet] {
            let cfg = TrainingConfig { nu: 10f64.powf(rng.random_range(1.0..3.0)), k, objective, ..TOP };
            fit(format!("random {inst} {}", objective.name()), &tensor, cfg, runs);
        }
    }

    let mut problems = Vec::new();
    let mut max_iters = 0;
    let mut worst_slack = f64::NEG_INFINITY;
    for run in runs.iter() {
        let model = match &run.model {
            Ok(m) => m,
            Err(e) => {
                problems.push(format!("{}: {e}", run.label));
                continue;
            }
        };
        let d = model.diagnostics.as_ref().unwrap();
        max_iters = max_iters.max(d.iterations);
        if !d.converged || d.iterations > 500 {
            problems.push(format!("{}: not converged after {} iterations", run.label, d.iterations));
        }
        if let Some(pair) = d.objective_history.windows(2).find(|p| p[1] < p[0] - 1e-12 * p[0].abs().max(1.0)) {
            problems.push(format!("{}: objective decreased {} -> {}", run.label, pair[0], pair[1]));
        }
        // re-run the oracle at the returned weights
        let value = match run.config.objective {
            Objective::CmcTop => most_violated_top(&model.weights, &run.tensor, run.config.k).unwrap().value,
            Objective::CmcTriplet => most_violated_triplet(&model.weights, &run.tensor).unwrap().value,
        };
        worst_slack = worst_slack.max(value - d.xi);
        if value > d.xi + 1e-6 {
            problems.push(format!("{}: final value {value} exceeds xi {} + 1e-6", run.label, d.xi));
        }
    }
    let pass = problems.is_empty();
    let mut detail = format!(
        "{} training runs, max iterations {max_iters}, max (final value - xi) {worst_slack:.2e}",
        runs.len()
    );
    if let Some(p) = problems.first() {
        detail.push_str(&format!("; {} problems, first: {p}", problems.len()));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// 6. KISSME against closed form and an independent dense solve

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs())).unwrap();
        m.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let p = m[(col, col)];
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in (0..n).filter(|&r| r != col) {
            let f = m[(r, col)];
            for j in 0..n {
                m[(r, j)] -= f * m[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    inv
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let pairs = |var: f64, rng: &mut ChaCha8Rng| -> Vec<(Vec<f64>, Vec<f64>)> {
        let normal = Normal::new(0.0, var.sqrt()).unwrap();
        (0..n)
            .map(|_| {
                let x: f64 = rng.random_range(-3.0..3.0);
                (vec![x + normal.sample(rng)], vec![x])
            })
            .collect()
    };
    let sim = pairs(0.25, &mut rng);
    let dis = pairs(4.0, &mut rng);
    let m1 = kissme_fit(&sim, &dis, PcaModel::identity(1), false).unwrap().matrix()[(0, 0)];
    let err1 = (m1 - 3.75).abs() / 3.75;

    // 4-D: random covariances, sampled differences
    let dim = 4;
    let random_cov = |rng: &mut ChaCha8Rng, scale: f64| -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        (&a * a.transpose()) * scale / dim as f64 + DMatrix::identity(dim, dim) * 0.1 * scale
    };
    let cov_s = random_cov(&mut rng, 0.5);
    let cov_d = random_cov(&mut rng, 3.0);
    let sample = |cov: &DMatrix<f64>, rng: &mut ChaCha8Rng| -> Vec<(Vec<f64>, Vec<f64>)> {
        let l = cov.clone().cholesky().unwrap().l();
        (0..n)
            .map(|_| {
                let z = nalgebra::DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
                let diff = &l * z;
                let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (y.iter().zip(diff.iter()).map(|(a, b)| a + b).collect(), y)
            })
            .collect()
    };
    let sim = sample(&cov_s, &mut rng);
    let dis = sample(&cov_d, &mut rng);
    let fitted = kissme_fit(&sim, &dis, PcaModel::identity(dim), false).unwrap().matrix().clone();
    let second_moment = |pairs: &[(Vec<f64>, Vec<f64>)]| -> DMatrix<f64> {
        let mut s = DMatrix::zeros(dim, dim);
        for (x, y) in pairs {
            let d = nalgebra::DVector::from_iterator(dim, x.iter().zip(y).map(|(a, b)| a - b));
            s += &d * d.transpose();
        }
        s / pairs.len() as f64
    };
    let raw = invert(&second_moment(&sim)) - invert(&second_moment(&dis));
    let sym = (&raw + raw.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0)))
        * eig.eigenvectors.transpose();
    let err_m = (&fitted - &clipped).norm() / clipped.norm();
    let pass = err1 <= 0.05 && err_m <= 0.05;
    verdict(pass, format!("1-D M = {m1:.4} (rel. err {err1:.2e} vs 3.75); 4-D relative Frobenius error {err_m:.2e}"))
}

// ---------------------------------------------------------------------------
// 7. kLFDA eigen residuals and a separable two-class set

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let point = |rng: &mut ChaCha8Rng, class: usize| -> Vec<f64> {
        (0..3).map(|d| if d == 0 { class as f64 * 4.0 } else { 0.0 } + rng.random_range(-1.0..1.0)).collect()
    };
    let train: Vec<(Vec<f64>, usize)> = (0..40).map(|i| (point(&mut rng, i % 2), i % 2)).collect();
    let vectors: Vec<Vec<f64>> = train.iter().map(|(v, _)| v.clone()).collect();
    let labels: Vec<usize> = train.iter().map(|(_, l)| *l).collect();
    let sq: Vec<f64> = {
        let mut d = Vec::new();
        for i in 0..vectors.len() {
            for j in 0..i {
                d.push(vectors[i].iter().zip(&vectors[j]).map(|(a, b)| (a - b) * (a - b)).sum());
            }
        }
        d
    };
    let params = KernelParams::new(KernelKind::GaussRbf, sigma_from_quantile(&sq, 0.5).unwrap()).unwrap();
    let options = KlfdaOptions { dim: Some(1), ..KlfdaOptions::default() };
    let model = klfda_fit(&train, params, options).unwrap();
    let scatter = klfda_scatter(&vectors, &labels, &params, options.knn).unwrap();
    let mut worst: f64 = 0.0;
    for (k, &lambda) in model.eigenvalues().iter().enumerate() {
        let a: Vec<f64> = model.coefficients().column(k).iter().copied().collect();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(eigen_residual(&scatter, options.beta, lambda, &a) / norm);
    }
    // held-out probes matched against a held-out gallery of both classes
    let probes: Vec<(Vec<f64>, usize)> = (0..20).map(|i| (point(&mut rng, i % 2), i % 2)).collect();
    let gallery: Vec<(Vec<f64>, usize)> = (0..20).map(|i| (point(&mut rng, i % 2), i % 2)).collect();
    let hits = probes
        .iter()
        .filter(|(x, c)| {
            let nearest = gallery
                .iter()
                .map(|(y, gc)| (klfda_distance(&model, x, y).unwrap(), *gc))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            nearest.1 == *c
        })
        .count();
    let rate = hits as f64 / probes.len() as f64;
    verdict(worst <= 1e-6 && rate == 1.0, format!("max relative eigen residual {worst:.2e}; two-class rank-1 {rate:.3}"))
}

// ---------------------------------------------------------------------------
// 8. CMC curves vs brute-force rank counting

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    for inst in 0..1000 {
        let n = rng.random_range(1..=30);
        let ties = inst % 2 == 0;
        let vals: Vec<f64> = (0..n * n)
            .map(|_| if ties { rng.random_range(0..5) as f64 } else { rng.random_range(-10.0..10.0) })
            .collect();
        let matrix = DistanceMatrix::new(n, n, vals.clone()).unwrap();
        let curve = cmc_curve(&matrix).unwrap();
        let mut expected = vec![0.0; n];
        for i in 0..n {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| vals[i * n + a].total_cmp(&vals[i * n + b]).then(a.cmp(&b)));
            let pos = order.iter().position(|&j| j == i).unwrap();
            for e in expected.iter_mut().skip(pos) {
                *e += 1.0;
            }
        }
        expected.iter_mut().for_each(|e| *e /= n as f64);
        let monotone = curve.rates.windows(2).all(|w| w[0] <= w[1]);
        let ends = curve.rates.last() == Some(&1.0);
        let same = curve.rates.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-15);
        if !(monotone && ends && same) {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("1000 random matrices, {bad} disagreements with the brute-force oracle"))
}

// ---------------------------------------------------------------------------
// 9. determinism of the full pipeline

const PIPELINE: &str = r#"
seed = 9
num_splits = 3
ranks = [1, 2, 5, 10, 20]

[data.synth]
m = 60
seed = 99

[[data.synth.channels]]
name = "a"
dim = 4
kind = "partial"
spread = 1.0
noise = 0.3

[[data.synth.channels]]
name = "b"
dim = 4
kind = "partial"
spread = 1.0
noise = 0.3

[[data.synth.channels]]
name = "n"
dim = 3
kind = "noise"
scale = 1.0

[bank]
preset = "multi_metric"
kernel = "gauss_rbf"
max_pca = 4

[training]
nu_grid = [100.0, 300.0]
k = 5
"#;

fn artifacts(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            if p.is_dir() {
                if name != "cache" {
                    stack.push(p);
                }
            } else if name.ends_with(".manifest") || name.ends_with(".tsv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Verdict {
    let config = ExperimentConfig::from_toml(PIPELINE, Path::new(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let opts = RunOptions { jobs: if run == "first" { Some(1) } else { None }, cache_dir: None };
        for method in [Method::CmcTop, Method::CmcTriplet, Method::Uniform] {
            let cfg = ExperimentConfig { objective: method, ..config.clone() };
            let t = run_train(&cfg, &out, &opts).unwrap();
            failures.extend(t.failures.iter().map(|f| f.to_string()));
            let e = run_eval(&cfg, &out, &opts).unwrap();
            failures.extend(e.failures.iter().map(|f| f.to_string()));
        }
        run_report(&config, &out).unwrap();
    }
    let a = artifacts(&dir.path().join("first"));
    let b = artifacts(&dir.path().join("second"));
    let mut differing = Vec::new();
    if a != b {
        differing.push("file sets differ".to_string());
    }
    for p in &a {
        let x = std::fs::read(dir.path().join("first").join(p)).unwrap();
        let y = std::fs::read(dir.path().join("second").join(p)).ok();
        if Some(x) != y {
            differing.push(p.display().to_string());
        }
    }
    let pass = failures.is_empty() && differing.is_empty() && a.len() >= 3 * 3 + 7;
    verdict(
        pass,
        format!(
            "{} manifests/reports compared across two runs (1 thread vs all cores), {} differ{}",
            a.len(),
            differing.len(),
            if failures.is_empty() { String::new() } else { format!("; split failures: {failures:?}") }
        ),
    )
}

fn main() {
    let mut runs = Vec::new();
    let c4 = criterion_4(&mut runs);
    let c5 = criterion_5(&mut runs);
    let c3 = criterion_3(&mut runs);
    let results = [
        (1, "separation oracles match exhaustive enumeration", criterion_1()),
        (2, "working-set QP meets KKT and matches the reference solver", criterion_2()),
        (3, "cutting-plane contract", c3),
        (4, "oracle-channel recovery", c4),
        (5, "learned ensemble vs uniform baseline", c5),
        (6, "KISSME analytic check", criterion_6()),
        (7, "kLFDA eigen residuals and separable set", criterion_7()),
        (8, "CMC properties", criterion_8()),
        (9, "pipeline determinism", criterion_9()),
    ];
    let mut failed = 0;
    for (id, name, v) in &results {
        println!("criterion {id} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
