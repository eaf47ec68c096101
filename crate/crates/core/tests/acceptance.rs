//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;

use optigan::config::{TemperatureSchedule, TrainConfig};
use optigan::datasets::{grammar_corpus, synth_stern_conversion, SternConversionParams};
use optigan::discriminator::{stack_steps, Discriminator, DiscriminatorConfig};
use optigan::generator::{gumbel_softmax_sample, Generator, GeneratorConfig};
use optigan::harness::train::one_hot;
use optigan::harness::{
    bleu_reward, evaluate_bleu_suite, evaluate_mcgrew, evaluate_nll_gen, mcgrew_reward, pretrain_mle,
    train_adversarial, Dataset, HarnessConfig, Normalizer, OptimizerKind,
};
use optigan::objectives::{
    discriminator_loss_graph, generator_gan_loss_graph, optimal_discriminator, plugged_objective,
    real_lower_bound_graph, token_lower_bound_graph, FiniteDistribution,
};
use optigan::params::{Bound, ParamStore};
use optigan::policy::{reinforce_loss_graph, rollout_returns, BaselineState};
use optigan::config::BaselineMode;
use optigan::rewards::{BleuConfig, McGrewParams, ReferenceSet};
use optigan::rng::{rng_from, standard_normal};
use optigan::sequence::{RealSequence, TokenSequence};
use optigan::tape::{Graph, Var};
use optigan::vocab::{build_vocab, encode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("objective identity", objective_identity),
        ("gradient fidelity", gradient_fidelity),
        ("REINFORCE unbiasedness", reinforce_unbiasedness),
        ("rollout consistency", rollout_consistency),
        ("BLEU oracle", bleu_oracle),
        ("Gumbel-softmax fidelity", gumbel_fidelity),
        ("NLL_gen calibration", nll_calibration),
        ("text trend", text_trend),
        ("trajectory trend", trajectory_trend),
        ("determinism and alternation", determinism_and_alternation),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        println!(
            "criterion {:>2} {:<28} {}  ({:.1} s) {}",
            i + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            secs,
            result.detail
        );
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(t0: Instant, budget: Duration) -> bool {
    t0.elapsed() < budget
}

// ---------------------------------------------------------------- 1

fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn oracle_js(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * oracle_kl(p, &m) + 0.5 * oracle_kl(q, &m)
}

fn oracle_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|a| **a > 0.0).map(|a| a * a.ln()).sum::<f64>()
}

fn dirichlet(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn objective_identity() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng_from(2024);
    let mut max_residual: f64 = 0.0;
    let mut grid_ok = true;
    for &size in &[2usize, 4, 8] {
        for _ in 0..100 {
            let pd = dirichlet(size, &mut rng);
            let pg = dirichlet(size, &mut rng);
            let fd = FiniteDistribution::new(pd.clone()).unwrap();
            let fg = FiniteDistribution::new(pg.clone()).unwrap();
            let lhs = plugged_objective(&fd, &fg).unwrap();
            let rhs = -oracle_kl(&pd, &pg) - 2.0 * oracle_js(&pd, &pg) + 4.0f64.ln() - oracle_entropy(&pd);
            max_residual = max_residual.max((lhs - rhs).abs());
            let d_star = optimal_discriminator(&fd, &fg).unwrap();
            for i in 0..size {
                let inner = |d: f64| -pd[i] * d.ln() - pg[i] * (1.0 - d).ln();
                let best_grid = (1..1000).map(|k| inner(k as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
                if inner(d_star[i]) > best_grid + 1e-12 {
                    grid_ok = false;
                }
            }
        }
    }
    let fast = within(t0, Duration::from_secs(5));
    outcome(
        max_residual < 1e-9 && grid_ok && fast,
        format!("max residual {max_residual:.2e} over 300 pairs; D* grid-optimal: {grid_ok}"),
    )
}

// ---------------------------------------------------------------- 2

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

/// Analytic versus central-difference gradient of a scalar loss with respect
/// to every scalar of a model's parameter store.
fn grad_check<M: Clone>(
    model: &M,
    store: fn(&M) -> &ParamStore<f64>,
    store_mut: fn(&mut M) -> &mut ParamStore<f64>,
    build: impl Fn(&M, &mut Graph<f64>, &Bound) -> Var,
) -> f64 {
    let mut g = Graph::new();
    let b = store(model).bind(&mut g);
    let loss = build(model, &mut g, &b);
    let grads = g.backward(loss);
    let analytic: Vec<f64> = store(model)
        .collect_grads(&b, &grads)
        .iter()
        .flat_map(|m| m.iter().cloned().collect::<Vec<_>>())
        .collect();
    let flat = store(model).flatten();
    let h = 1e-6;
    let eval = |x: &[f64]| {
        let mut m = model.clone();
        store_mut(&mut m).set_flat(x).unwrap();
        let mut g = Graph::new();
        let b = store(&m).bind_frozen(&mut g);
        let v = build(&m, &mut g, &b);
        g.scalar(v)
    };
    let numeric: Vec<f64> = (0..flat.len())
        .map(|i| {
            let mut up = flat.clone();
            up[i] += h;
            let mut down = flat.clone();
            down[i] -= h;
            (eval(&up) - eval(&down)) / (2.0 * h)
        })
        .collect();
    relative_error(&analytic, &numeric)
}

fn gen_store(g: &Generator<f64>) -> &ParamStore<f64> {
    &g.params
}
fn gen_store_mut(g: &mut Generator<f64>) -> &mut ParamStore<f64> {
    &mut g.params
}
fn disc_store(d: &Discriminator<f64>) -> &ParamStore<f64> {
    &d.params
}
fn disc_store_mut(d: &mut Discriminator<f64>) -> &mut ParamStore<f64> {
    &mut d.params
}

fn micro_text(seed: u64) -> Generator<f64> {
    let mut cfg = GeneratorConfig::text(5, 0, 1, 4);
    cfg.hidden = 3;
    cfg.embed_dim = 3;
    Generator::new(cfg, &mut rng_from(seed)).unwrap()
}

fn micro_real(seed: u64) -> Generator<f64> {
    let mut cfg = GeneratorConfig::trajectory(3, 4);
    cfg.hidden = 3;
    cfg.layers = 1;
    cfg.latent_dim = 2;
    cfg.latent_hidden = 3;
    Generator::new(cfg, &mut rng_from(seed)).unwrap()
}

fn micro_disc(width: usize, row_stochastic: bool, seed: u64) -> Discriminator<f64> {
    let cfg = DiscriminatorConfig {
        input_width: width,
        seq_len: 4,
        embed_dim: 3,
        hidden: 3,
        row_stochastic,
    };
    Discriminator::new(cfg, &mut rng_from(seed)).unwrap()
}

fn gradient_fidelity() -> Outcome {
    let t0 = Instant::now();
    let mut errors = Vec::new();

    let gen = micro_text(1);
    let seqs = vec![
        TokenSequence::from_ids(vec![2, 3, 4, 2], 0),
        TokenSequence::from_ids(vec![4, 1, 0, 0], 0),
        TokenSequence::from_ids(vec![3, 0, 0, 0], 0),
    ];
    errors.push((
        "ML bound (tokens)",
        grad_check(&gen, gen_store, gen_store_mut, |m, g, b| {
            let v = token_lower_bound_graph(m, g, b, &seqs).unwrap();
            let s = g.mean_all(v);
            g.scale(s, -1.0)
        }),
    ));

    let rgen = micro_real(2);
    let mut rng = rng_from(3);
    let reals: Vec<RealSequence<f64>> = (0..3)
        .map(|_| RealSequence::new(Array2::from_shape_fn((4, 3), |_| standard_normal(&mut rng))).unwrap())
        .collect();
    let eps = Array2::from_shape_fn((3, 2), |_| standard_normal(&mut rng));
    errors.push((
        "ML bound (real, latent ELBO)",
        grad_check(&rgen, gen_store, gen_store_mut, |m, g, b| {
            let refs: Vec<&RealSequence<f64>> = reals.iter().collect();
            let rows = Generator::real_rows(g, &refs);
            let v = real_lower_bound_graph(m, g, b, &rows, 0.7, &eps).unwrap();
            let s = g.mean_all(v);
            g.scale(s, -1.0)
        }),
    ));

    let disc = micro_disc(5, true, 4);
    errors.push((
        "GAN generator loss (tokens)",
        grad_check(&gen, gen_store, gen_store_mut, |m, g, b| {
            let s = m.sample_tokens_graph(g, b, 3, 0.7, None, &mut rng_from(11)).unwrap();
            let db = disc.params.bind_frozen(g);
            let logits = disc.logits_graph(g, &db, &s.soft).unwrap();
            generator_gan_loss_graph(g, logits)
        }),
    ));

    let rdisc = micro_disc(3, false, 5);
    errors.push((
        "GAN generator loss (real)",
        grad_check(&rgen, gen_store, gen_store_mut, |m, g, b| {
            let s = m.sample_real_graph(g, b, 3, 0.3, None, &mut rng_from(12)).unwrap();
            let db = rdisc.params.bind_frozen(g);
            let logits = rdisc.logits_graph(g, &db, &s.steps).unwrap();
            generator_gan_loss_graph(g, logits)
        }),
    ));

    let real_x: Vec<Array2<f64>> = seqs.iter().map(|s| one_hot(s, 5)).collect();
    let mut rng = rng_from(6);
    let fake_x: Vec<Array2<f64>> = (0..3)
        .map(|_| {
            let mut x = Array2::from_shape_fn((4, 5), |_| rng.random_range(0.05..1.0));
            for mut row in x.rows_mut() {
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            x
        })
        .collect();
    for label in [1.0, 0.9] {
        errors.push((
            if label == 1.0 { "discriminator loss" } else { "discriminator loss (smoothed)" },
            grad_check(&disc, disc_store, disc_store_mut, |d, g, b| {
                let rs = stack_steps(g, &real_x, false);
                let fs = stack_steps(g, &fake_x, false);
                let rl = d.logits_graph(g, b, &rs).unwrap();
                let fl = d.logits_graph(g, b, &fs).unwrap();
                discriminator_loss_graph(g, rl, fl, label)
            }),
        ));
    }

    let returns = Array2::from_shape_fn((3, 4), |(r, t)| 0.3 * r as f64 - 0.2 * t as f64 + 0.5);
    errors.push((
        "REINFORCE surrogate",
        grad_check(&gen, gen_store, gen_store_mut, |m, g, b| {
            let s = m.sample_tokens_graph(g, b, 3, 1.0, None, &mut rng_from(13)).unwrap();
            reinforce_loss_graph(g, &s.log_probs, &returns, 0.25).unwrap()
        }),
    ));

    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let fast = within(t0, Duration::from_secs(60));
    let detail = errors
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(worst < 1e-3 && fast, format!("max rel. error {worst:.1e} [{detail}]"))
}

// ---------------------------------------------------------------- 3

/// Per-episode REINFORCE estimates for a two-action softmax bandit, computed
/// by differentiating the library surrogate. Returns `(∂/∂θ₀, ∂/∂θ₁)` pairs.
fn bandit_estimates(theta: [f64; 2], rewards: [f64; 2], running_baseline: bool, episodes: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = rng_from(seed);
    let z = theta[0].exp() + theta[1].exp();
    let p0 = theta[0].exp() / z;
    let mut baseline = BaselineState::new(if running_baseline { BaselineMode::RunningMean } else { BaselineMode::Fixed(0.0) });
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let a = if rng.random::<f64>() < p0 { 0 } else { 1 };
        let r = rewards[a];
        let b = baseline.value();
        baseline.observe(r);
        let mut g = Graph::new();
        let th = g.input(Array2::from_shape_vec((1, 2), theta.to_vec()).unwrap());
        let lsm = g.log_softmax(th);
        let l = g.pick(lsm, vec![a]);
        let loss = reinforce_loss_graph(&mut g, &[l], &Array2::from_elem((1, 1), r), b).unwrap();
        let grads = g.backward(loss);
        let d = grads.get(th).unwrap();
        // Ascent direction is the negated surrogate gradient.
        out.push([-d[[0, 0]], -d[[0, 1]]]);
    }
    out
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn reinforce_unbiasedness() -> Outcome {
    let t0 = Instant::now();
    let theta: [f64; 2] = [0.4, -0.3];
    let n = 100_000;
    let p = theta[0].exp() / (theta[0].exp() + theta[1].exp());
    let exact = p * (1.0 - p) * (1.0 - 0.0);
    let est = bandit_estimates(theta, [1.0, 0.0], false, n, 17);
    let mut unbiased = true;
    let mut detail = String::new();
    for (k, sign) in [(0usize, 1.0), (1, -1.0)] {
        let xs: Vec<f64> = est.iter().map(|e| e[k]).collect();
        let (m, v) = mean_and_var(&xs);
        let se = (v / n as f64).sqrt();
        let z = (m - sign * exact).abs() / se;
        unbiased &= z < 3.0;
        detail.push_str(&format!("θ{k}: {m:.5} vs {:.5} ({z:.2} SE); ", sign * exact));
    }
    let plain = bandit_estimates(theta, [6.0, 5.0], false, n, 18);
    let based = bandit_estimates(theta, [6.0, 5.0], true, n, 18);
    let (m_plain, v_plain) = mean_and_var(&plain.iter().map(|e| e[0]).collect::<Vec<_>>());
    let (m_based, v_based) = mean_and_var(&based.iter().map(|e| e[0]).collect::<Vec<_>>());
    let ratio = v_based / v_plain;
    let z_plain = (m_plain - exact).abs() / (v_plain / n as f64).sqrt();
    let z_based = (m_based - exact).abs() / (v_based / n as f64).sqrt();
    let shifted_ok = z_plain < 3.0 && z_based < 3.0;
    detail.push_str(&format!(
        "offset +5: variance ratio {ratio:.4}, means within {z_plain:.2}/{z_based:.2} SE"
    ));
    let fast = within(t0, Duration::from_secs(30));
    outcome(unbiased && shifted_ok && ratio < 1.0 && fast, detail)
}

// ---------------------------------------------------------------- 4

fn toy_reward(s: &TokenSequence) -> f64 {
    let table = [0.0, 0.2, 0.7, 1.3];
    table[s.ids[0]] + 0.5 * table[s.ids[1]] * table[s.ids[1]] + if s.ids == [2, 3] { 0.4 } else { 0.0 }
}

fn rollout_consistency() -> Outcome {
    let t0 = Instant::now();
    let mut cfg = GeneratorConfig::text(4, 0, 1, 2);
    cfg.hidden = 3;
    cfg.embed_dim = 3;
    let gen = Generator::<f64>::new(cfg, &mut rng_from(21)).unwrap();
    // Enumerate every valid length-2 sequence with its probability.
    let mut table: Vec<(TokenSequence, f64)> = Vec::new();
    for x1 in 0..4 {
        for x2 in 0..4 {
            if x1 == 0 && x2 != 0 {
                continue;
            }
            let seq = TokenSequence::from_ids(vec![x1, x2], 0);
            let (ll, _) = gen.forward_teacher_forced_tokens(&seq).unwrap();
            table.push((seq, ll.iter().sum::<f64>().exp()));
        }
    }
    let total: f64 = table.iter().map(|t| t.1).sum();
    let mut ok = (total - 1.0).abs() < 1e-12;
    let mut detail = format!("enumerated mass {total:.15}; ");
    let k = 10_000;
    for prefix in [vec![], vec![2usize]] {
        let cond: Vec<&(TokenSequence, f64)> = table.iter().filter(|(s, _)| s.ids.starts_with(&prefix)).collect();
        let z: f64 = cond.iter().map(|t| t.1).sum();
        let mean: f64 = cond.iter().map(|(s, p)| p / z * toy_reward(s)).sum();
        let second: f64 = cond.iter().map(|(s, p)| p / z * toy_reward(s).powi(2)).sum();
        let se = ((second - mean * mean) / k as f64).sqrt();
        let est = rollout_returns(&gen, &prefix, k, |s| Ok(toy_reward(s)), &mut rng_from(31)).unwrap();
        let zs = (est - mean).abs() / se;
        ok &= zs < 3.0;
        detail.push_str(&format!("prefix {prefix:?}: {est:.4} vs exact {mean:.4} ({zs:.2} SE); "));
    }
    let fast = within(t0, Duration::from_secs(30));
    outcome(ok && fast, detail)
}

// ---------------------------------------------------------------- 5

fn occurrences(seq: &[u8], gram: &[u8]) -> usize {
    if seq.len() < gram.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// Brute-force clipped counts: scan every candidate position, deduplicate
/// by linear search, count by rescanning.
fn brute_counts(cand: &[u8], refs: &[Vec<u8>], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let mut seen: Vec<&[u8]> = Vec::new();
    let mut matched = 0;
    for i in 0..=cand.len() - n {
        let gram = &cand[i..i + n];
        if seen.contains(&gram) {
            continue;
        }
        seen.push(gram);
        let c = occurrences(cand, gram);
        let r = refs.iter().map(|r| occurrences(r, gram)).max().unwrap_or(0);
        matched += c.min(r);
    }
    (matched, cand.len() + 1 - n)
}

fn brute_bleu(cand: &[u8], refs: &[Vec<u8>], max_n: usize) -> f64 {
    let mut score = 1.0;
    for n in 1..=max_n {
        let (m, t) = brute_counts(cand, refs, n);
        if m == 0 || t == 0 {
            return 0.0;
        }
        score *= (m as f64 / t as f64).powf(1.0 / max_n as f64);
    }
    score
}

fn bleu_oracle() -> Outcome {
    let mut rng = rng_from(55);
    let mut exact = true;
    let mut nonzero = 0;
    for _ in 0..50 {
        let word = |rng: &mut optigan::rng::SeededRng| rng.random_range(0u8..4);
        let cand: Vec<u8> = (0..rng.random_range(1..=12)).map(|_| word(&mut rng)).collect();
        let refs: Vec<Vec<u8>> = (0..rng.random_range(1..=3))
            .map(|_| (0..rng.random_range(1..=12)).map(|_| word(&mut rng)).collect())
            .collect();
        let set = ReferenceSet::new(&refs, 5).unwrap();
        for n in 1..=5 {
            exact &= set.clipped_counts(&cand, n) == brute_counts(&cand, &refs, n);
        }
        for max_n in 2..=5 {
            let lib = set.score(&cand, &BleuConfig::uniform(max_n).unwrap()).unwrap().score;
            let brute = brute_bleu(&cand, &refs, max_n);
            exact &= lib == brute;
            nonzero += (lib > 0.0) as usize;
        }
    }
    let r: Vec<u8> = vec![0, 1, 2, 3, 1, 2];
    let identity = (2..=5).all(|n| {
        ReferenceSet::new(std::slice::from_ref(&r), n)
            .unwrap()
            .score(&r, &BleuConfig::uniform(n).unwrap())
            .unwrap()
            .score
            == 1.0
    });
    let disjoint = ReferenceSet::new(std::slice::from_ref(&r), 2)
        .unwrap()
        .score(&[7u8, 8, 9], &BleuConfig::uniform(2).unwrap())
        .unwrap()
        .score
        == 0.0;
    outcome(
        exact && identity && disjoint,
        format!("bit-exact on 50 pairs x N=2..5 ({nonzero} non-zero scores); identity {identity}; disjoint {disjoint}"),
    )
}

// ---------------------------------------------------------------- 6

fn gumbel_fidelity() -> Outcome {
    let logits = [1.0f64, 0.2, -0.5, 2.0, 0.0, -1.3];
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let probs: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
    let mut rng = rng_from(77);
    let n = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..n {
        counts[gumbel_softmax_sample(&logits, 1.0, &mut rng).1] += 1;
    }
    let tv: f64 = 0.5 * counts.iter().zip(&probs).map(|(&c, p)| (c as f64 / n as f64 - p).abs()).sum::<f64>();
    let schedule = TemperatureSchedule {
        start: 2.0,
        end: 0.1,
        anneal_steps: 1000,
    };
    let mean_max = |tau: f64, rng: &mut optigan::rng::SeededRng| {
        (0..10_000)
            .map(|_| gumbel_softmax_sample(&logits, tau, rng).0.into_iter().fold(0.0, f64::max))
            .sum::<f64>()
            / 10_000.0
    };
    let start = mean_max(schedule.at(0), &mut rng);
    let end = mean_max(schedule.at(1000), &mut rng);
    outcome(
        tv < 0.02 && end > 0.95,
        format!("TV {tv:.4}; mean max component {start:.3} at tau=2 -> {end:.4} at tau=0.1"),
    )
}

// ---------------------------------------------------------------- 7

fn nll_calibration() -> Outcome {
    let mut gen = micro_text(8);
    for name in ["gen.output.weight", "gen.output.bias"] {
        let id = gen.params.find(name).unwrap();
        gen.params.get_mut(id).fill(0.0);
    }
    let data = vec![
        TokenSequence::from_ids(vec![2, 3, 4, 2], 0),
        TokenSequence::from_ids(vec![4, 0, 0, 0], 0),
        TokenSequence::from_ids(vec![3, 3, 0, 0], 0),
    ];
    let uniform = evaluate_nll_gen(&gen, &data).unwrap();
    let uniform_err = (uniform - 5.0f64.ln()).abs();

    let mut gen = micro_text(9);
    let one = vec![TokenSequence::from_ids(vec![3, 2, 4, 0], 0)];
    let initial = evaluate_nll_gen(&gen, &one).unwrap();
    let harness = HarnessConfig {
        batch_size: 1,
        generator_optimizer: OptimizerKind::adam(0.05),
        ..HarnessConfig::default()
    };
    pretrain_mle(&mut gen, &Dataset::Tokens(one.clone()), 200, &TrainConfig::default(), &harness).unwrap();
    let fin = evaluate_nll_gen(&gen, &one).unwrap();
    outcome(
        uniform_err < 1e-6 && fin < 0.1 * initial,
        format!("uniform |NLL - ln 5| = {uniform_err:.1e}; memorisation {initial:.4} -> {fin:.4}"),
    )
}

// ---------------------------------------------------------------- 8

const TEXT_LEN: usize = 12;
const TEXT_STEPS: usize = 300;
const TEXT_PRETRAIN_EPOCHS: usize = 10;

fn text_trend() -> Outcome {
    let t0 = Instant::now();
    let corpus = grammar_corpus(1500, &mut rng_from(7));
    let (train_s, test_s) = corpus.split_at(1000);
    let vocab = build_vocab(train_s, 30).unwrap();
    let v = vocab.len();
    let enc = |s: &[Vec<String>]| s.iter().map(|x| encode(x, &vocab, TEXT_LEN)).collect::<Vec<_>>();
    let (train, test) = (enc(train_s), enc(test_s));
    let data = Dataset::Tokens(train.clone());
    let variants = [("OptiGAN", 1.0, 2.0), ("OnlyGAN", 1.0, 0.0), ("OnlyRL", 0.0, 2.0)];
    let mut bleu2 = [0.0; 3];
    let mut nll = [0.0; 3];
    let mut paired = Vec::new();
    for seed in 0..3u64 {
        let mut seed_nll = [0.0; 3];
        let mut gcfg = GeneratorConfig::text(v, vocab.pad_id(), vocab.start_id(), TEXT_LEN);
        gcfg.hidden = 32;
        gcfg.embed_dim = 16;
        let mut gen = Generator::<f64>::new(gcfg, &mut rng_from(seed)).unwrap();
        let base = TrainConfig {
            seed,
            ..TrainConfig::text()
        };
        let pre = HarnessConfig {
            generator_optimizer: OptimizerKind::adam(1e-2),
            ..HarnessConfig::default()
        };
        pretrain_mle(&mut gen, &data, TEXT_PRETRAIN_EPOCHS, &base, &pre).unwrap();
        for (i, &(_, lambda, alpha)) in variants.iter().enumerate() {
            let mut g = gen.clone();
            let dcfg = DiscriminatorConfig {
                embed_dim: 16,
                hidden: 32,
                ..DiscriminatorConfig::text(v, TEXT_LEN)
            };
            let mut d = Discriminator::<f64>::new(dcfg, &mut rng_from(seed + 100)).unwrap();
            let cfg = TrainConfig {
                lambda_gan: lambda,
                alpha_rl: alpha,
                ..base.clone()
            };
            let mut reward = bleu_reward(&train[..500], 3).unwrap();
            train_adversarial(&mut g, &mut d, &data, &cfg, &HarnessConfig::default(), &mut reward, TEXT_STEPS).unwrap();
            seed_nll[i] = evaluate_nll_gen(&g, &test).unwrap();
            nll[i] += seed_nll[i] / 3.0;
            bleu2[i] += evaluate_bleu_suite(&g, &test, 2000, &mut rng_from(99)).unwrap()[0] / 3.0;
        }
        paired.push(format!("{:+.1e}", seed_nll[0] - seed_nll[2]));
    }
    let fast = within(t0, Duration::from_secs(600));
    let detail = variants
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{} BLEU-2 {:.3} NLL {:.5}", v.0, bleu2[i], nll[i]))
        .collect::<Vec<_>>()
        .join("; ");
    let detail = format!("{detail}; per-seed NLL OptiGAN - OnlyRL [{}]", paired.join(", "));
    outcome(bleu2[0] >= bleu2[1] && nll[0] <= nll[2] && fast, detail)
}

// ---------------------------------------------------------------- 9

const TRAJ_STEPS: usize = 300;
const TRAJ_PRETRAIN_EPOCHS: usize = 20;

fn trajectory_trend() -> Outcome {
    let t0 = Instant::now();
    let records = synth_stern_conversion(&SternConversionParams::default(), 500).unwrap();
    let joint: Vec<RealSequence<f64>> = records.iter().map(|r| r.to_joint()).collect();
    let norm = Normalizer::fit(&joint).unwrap();
    let data = Dataset::Real(joint.iter().map(|j| norm.apply::<f64>(j).unwrap()).collect());
    let features = joint[0].features();
    let params = McGrewParams::default();
    let variants = [("OptiGAN", 0.2, 0.75), ("GAN-only", 0.2, 0.0), ("MLE-only", 0.0, 0.0)];
    let mut score = [0.0; 3];
    for seed in 0..3u64 {
        let mut gcfg = GeneratorConfig::trajectory(features, records[0].steps());
        gcfg.hidden = 32;
        gcfg.layers = 1;
        let mut gen = Generator::<f64>::new(gcfg, &mut rng_from(seed)).unwrap();
        let base = TrainConfig {
            seed,
            ..TrainConfig::trajectory()
        };
        let pre = HarnessConfig {
            generator_optimizer: OptimizerKind::adam(1e-2),
            ..HarnessConfig::default()
        };
        pretrain_mle(&mut gen, &data, TRAJ_PRETRAIN_EPOCHS, &base, &pre).unwrap();
        for (i, &(_, lambda, alpha)) in variants.iter().enumerate() {
            let mut g = gen.clone();
            let dcfg = DiscriminatorConfig {
                embed_dim: 16,
                hidden: 32,
                ..DiscriminatorConfig::trajectory(features, records[0].steps())
            };
            let mut d = Discriminator::<f64>::new(dcfg, &mut rng_from(seed + 100)).unwrap();
            let cfg = TrainConfig {
                lambda_gan: lambda,
                alpha_rl: alpha,
                ..base.clone()
            };
            let mut reward = mcgrew_reward(params, norm.clone(), 1.0).unwrap();
            train_adversarial(&mut g, &mut d, &data, &cfg, &HarnessConfig::default(), &mut reward, TRAJ_STEPS).unwrap();
            score[i] += evaluate_mcgrew(&g, 200, cfg.sigma_sample, &norm, 1.0, &params, &mut rng_from(5)).unwrap() / 3.0;
        }
    }
    let fast = within(t0, Duration::from_secs(600));
    let detail = variants
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{} {:.3}", v.0, score[i]))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(score[0] >= score[1] && score[2] < score[0] && score[2] < score[1] && fast, detail)
}

// ---------------------------------------------------------------- 10

fn text_run(seed: u64) -> optigan::harness::RunManifest {
    let corpus = grammar_corpus(200, &mut rng_from(1));
    let vocab = build_vocab(&corpus, 30).unwrap();
    let data: Vec<TokenSequence> = corpus.iter().map(|s| encode(s, &vocab, TEXT_LEN)).collect();
    let mut gcfg = GeneratorConfig::text(vocab.len(), vocab.pad_id(), vocab.start_id(), TEXT_LEN);
    gcfg.hidden = 8;
    gcfg.embed_dim = 8;
    let mut gen = Generator::<f64>::new(gcfg, &mut rng_from(seed)).unwrap();
    let dcfg = DiscriminatorConfig {
        embed_dim: 8,
        hidden: 8,
        ..DiscriminatorConfig::text(vocab.len(), TEXT_LEN)
    };
    let mut d = Discriminator::<f64>::new(dcfg, &mut rng_from(seed + 1)).unwrap();
    let cfg = TrainConfig {
        seed,
        rollouts_k: 2,
        ..TrainConfig::text()
    };
    let harness = HarnessConfig {
        batch_size: 8,
        generator_optimizer: OptimizerKind::adam(1e-2),
        discriminator_optimizer: OptimizerKind::adam(1e-2),
        ..HarnessConfig::default()
    };
    let mut reward = bleu_reward(&data, 3).unwrap();
    train_adversarial(&mut gen, &mut d, &Dataset::Tokens(data), &cfg, &harness, &mut reward, 20).unwrap()
}

fn trajectory_run(seed: u64) -> optigan::harness::RunManifest {
    let p = SternConversionParams {
        steps: 10,
        ..SternConversionParams::default()
    };
    let records = synth_stern_conversion(&p, 40).unwrap();
    let joint: Vec<RealSequence<f64>> = records.iter().map(|r| r.to_joint()).collect();
    let norm = Normalizer::fit(&joint).unwrap();
    let data = Dataset::Real(joint.iter().map(|j| norm.apply::<f64>(j).unwrap()).collect());
    let mut gcfg = GeneratorConfig::trajectory(32, 10);
    gcfg.hidden = 8;
    gcfg.layers = 1;
    let mut gen = Generator::<f64>::new(gcfg, &mut rng_from(seed)).unwrap();
    let dcfg = DiscriminatorConfig {
        embed_dim: 8,
        hidden: 8,
        ..DiscriminatorConfig::trajectory(32, 10)
    };
    let mut d = Discriminator::<f64>::new(dcfg, &mut rng_from(seed + 1)).unwrap();
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::trajectory()
    };
    let harness = HarnessConfig {
        batch_size: 8,
        ..HarnessConfig::default()
    };
    let mut reward = mcgrew_reward(McGrewParams::default(), norm, 1.0).unwrap();
    train_adversarial(&mut gen, &mut d, &data, &cfg, &harness, &mut reward, 15).unwrap()
}

fn determinism_and_alternation() -> Outcome {
    let mut ok = true;
    let mut detail = String::new();
    for (name, a, b) in [
        ("text", text_run(4), text_run(4)),
        ("trajectory", trajectory_run(4), trajectory_run(4)),
    ] {
        let same = a.metrics_jsonl().unwrap() == b.metrics_jsonl().unwrap();
        let alternation = a.check_alternation().is_ok() && a.rows.iter().all(|r| r.d_updates == r.g_updates);
        let max_post = a.rows.iter().map(|r| r.g_grad_norm_clipped).fold(0.0, f64::max);
        let max_pre = a.rows.iter().map(|r| r.g_grad_norm).fold(0.0, f64::max);
        let identity = a.rows.iter().all(|r| {
            let lb = optigan::objectives::LossBreakdown {
                ml_term: r.ml_term,
                gan_term: r.gan_term,
                rl_term: r.rl_term,
                total: r.total,
            };
            lb.identity_residual(a.train_config.lambda_gan, a.train_config.alpha_rl) <= 1e-9 * r.total.abs().max(1.0)
        });
        ok &= same && alternation && max_post <= 10.0 + 1e-6 && identity;
        detail.push_str(&format!(
            "{name}: bit-identical logs {same}, strict D/G alternation {alternation}, grad norm max {max_pre:.2} -> {max_post:.4} after clipping, breakdown identity {identity}; "
        ));
    }
    outcome(ok, detail)
}
