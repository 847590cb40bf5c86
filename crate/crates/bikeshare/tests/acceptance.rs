//! Acceptance gate: one PASS/FAIL line per criterion; exits non-zero on any FAIL.
//! Criterion 9 needs downloaded data and runs only when `BSS_REAL_DATA`
//! points at a pipeline config for the six real cities.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bikeshare::cli::{simulate_parallel, SIMULATE_STAGE};
use bikeshare::config::PipelineConfig;
use bikeshare::formats::{matrix, network, ranks};
use bikeshare::pipeline::run_pipeline;
use bikeshare::stages::{self, derive_seed};
use bikeshare::synth::{write_fixture, SynthOptions};
use bikeshare_core::calendar::{Day, DayClass};
use bikeshare_core::divergence::{js_divergence, kl_divergence};
use bikeshare_core::louvain::{louvain, WeightedGraph};
use bikeshare_core::rankdist::{fit_rank_points, RankFit, RankParams, RankPoint};
use bikeshare_core::rankmodel::{fit_rank_model_points, model_closed_form, recurrence_iterate, SimulationParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let t = Instant::now();
    let v = f();
    let took = t.elapsed();
    let note = format!(" [{:.2}s, limit {}s]", took.as_secs_f64(), limit.as_secs());
    match v {
        Verdict::Pass(d) if took <= limit => Verdict::Pass(d + &note),
        Verdict::Pass(d) => Verdict::Fail(d + &note + " too slow"),
        Verdict::Fail(d) => Verdict::Fail(d + &note),
        skip => skip,
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| if sparse && rng.random::<f64>() < 0.3 { 0.0 } else { rng.random::<f64>() })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            return v.iter().map(|x| x / s).collect();
        }
    }
}

fn c1_divergence_axioms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = 10_000;
    let mut bad = Vec::new();
    for i in 0..pairs {
        let n = rng.random_range(2..=1440);
        let p = random_simplex(&mut rng, n, i % 2 == 0);
        let q = random_simplex(&mut rng, n, false);
        let pq = js_divergence(&p, &q).unwrap();
        let qp = js_divergence(&q, &p).unwrap();
        let equal = p == q;
        if pq.to_bits() != qp.to_bits() || !(0.0..=1.0).contains(&pq) || (pq == 0.0) != equal {
            bad.push(format!("jsd pair {i}"));
        }
        if js_divergence(&p, &p).unwrap() != 0.0 {
            bad.push(format!("jsd self {i}"));
        }
        // q has full support, so KL(p || q) is finite.
        let kl = kl_divergence(&p, &q).unwrap();
        if kl < 0.0 || (kl == 0.0) != equal || kl_divergence(&q, &q).unwrap() != 0.0 {
            bad.push(format!("kl pair {i}"));
        }
    }
    verdict(bad.is_empty(), format!("{pairs} pairs, {} violations {:?}", bad.len(), &bad[..bad.len().min(3)]))
}

fn c2_hand_jsd() -> Verdict {
    // Direct evaluation with the mixture m = (0.375, 0.625).
    let half = |a: f64, b: f64, m: f64| a * (a / m).log2() + b * (b / (1.0 - m)).log2();
    let oracle = 0.5 * half(0.5, 0.5, 0.375) + 0.5 * half(0.25, 0.75, 0.375);
    let got = js_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    let disjoint = js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let ok = (got - 0.04879).abs() <= 1e-5 && (got - oracle).abs() < 1e-12 && disjoint == 1.0;
    verdict(ok, format!("js = {got:.7} (direct {oracle:.7}), disjoint = {disjoint}"))
}

fn c3_recurrence_grid() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for ai in 1..=9 {
        let a = ai as f64 / 10.0;
        for m in [10.0, 100.0, 2000.0] {
            for s1 in [1.0, 5.0] {
                let seq = recurrence_iterate(s1, a, m, 200);
                for (i, &s) in seq.iter().enumerate() {
                    let k = (i + 1) as f64;
                    let closed = (s1 - m / a) * (1.0 - a / m).powf(k - 1.0) + m / a;
                    let lib = model_closed_form(k - 1.0, a, s1, m).unwrap();
                    worst = worst.max(((s - closed) / closed).abs()).max(((lib - closed) / closed).abs());
                    cases += 1;
                }
            }
        }
    }
    verdict(worst <= 1e-10, format!("{cases} points, max relative error {worst:.2e}"))
}

fn c4_monte_carlo() -> Verdict {
    let (a, m, s1) = (0.5, 100usize, 1u32);
    let params = SimulationParams { n: 101, m_max: m, a, s1, seed: derive_seed(42, SIMULATE_STAGE), trials: 100_000 };
    let sim = simulate_parallel(&params).unwrap();
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for k in 1..=50usize {
        let mf = (f64::from(s1) - m as f64 / a) * (1.0 - a / m as f64).powi(k as i32 - 1) + m as f64 / a;
        let diff = (sim.mean[k - 1] - mf).abs();
        let se = sim.stderr[k - 1];
        if diff > 3.0 * se {
            fails.push(k);
        }
        if se > 0.0 {
            worst = worst.max(diff / se);
        }
    }
    verdict(fails.is_empty(), format!("1e5 trials, max |mean - mean field| = {worst:.2} SE, k outside 3 SE: {fails:?}"))
}

fn truncated_power_law(alpha: f64, beta: f64, gamma: f64, n: usize) -> Vec<RankPoint> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-alpha) * (-beta * (k as f64).powf(gamma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().enumerate().map(|(i, v)| RankPoint { rank: (i + 1) as f64, proportion: v / total }).collect()
}

/// Noise-free recovery is checked directly. Under 2% log-noise the least-squares
/// estimate of beta itself scatters by about 6% between draws, so the fit is
/// judged on two things: it reaches the same optimum as a start at the truth,
/// and the estimates averaged over draws are within 10%.
fn c5_rank_fit_recovery() -> Verdict {
    let truth = [0.3, 1e-5, 2.0];
    let rel = |est: [f64; 3]| est.iter().zip(truth).map(|(g, t)| ((g - t) / t).abs()).fold(0.0, f64::max);
    let params = |f: &RankFit| [f.alpha, f.beta, f.gamma];
    let clean = truncated_power_law(truth[0], truth[1], truth[2], 500);
    let clean_err = match fit_rank_points(&clean, None) {
        Ok(f) => rel(params(&f)),
        Err(e) => return Verdict::Fail(format!("noiseless fit failed: {e}")),
    };
    let noise = Normal::<f64>::new(0.0, 0.02).unwrap();
    let draws = 10;
    let mut sum = [0.0; 3];
    let mut worst_draw: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for seed in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<RankPoint> = clean
            .iter()
            .map(|p| RankPoint { rank: p.rank, proportion: p.proportion * noise.sample(&mut rng).exp() })
            .collect();
        let from_truth = RankParams { alpha: truth[0], beta: truth[1], gamma: truth[2] };
        match (fit_rank_points(&pts, None), fit_rank_points(&pts, Some(from_truth))) {
            (Ok(f), Ok(g)) => {
                for (s, v) in sum.iter_mut().zip(params(&f)) {
                    *s += v / draws as f64;
                }
                worst_draw = worst_draw.max(rel(params(&f)));
                worst_gap = worst_gap.max((f.rmse_log - g.rmse_log) / g.rmse_log);
            }
            (Err(e), _) | (_, Err(e)) => return Verdict::Fail(format!("noisy fit (seed {seed}) failed: {e}")),
        }
    }
    let mean_err = rel(sum);
    verdict(
        clean_err <= 0.01 && mean_err <= 0.10 && worst_gap <= 1e-9,
        format!(
            "noiseless max rel err {clean_err:.2e}; 2% log-noise: mean of {draws} fits rel err {mean_err:.3}, \
             worst single draw {worst_draw:.3}, optimum gap to truth start {worst_gap:.1e}"
        ),
    )
}

fn c6_rank_model_recovery() -> Verdict {
    let (a, b, m): (f64, f64, f64) = (0.52, 38.7, 2000.0);
    let points: Vec<(f64, f64)> = (0..2000)
        .map(|x| {
            let y = (b - m / a) * (1.0 - a / m).powi(x) + m / a;
            (f64::from(x), y.round())
        })
        .collect();
    match fit_rank_model_points(&points, m, None) {
        Ok(fit) => verdict(
            (fit.a - a).abs() <= 0.02 && ((fit.b - b) / b).abs() <= 0.05,
            format!("a = {:.4} (|da| {:.4}), b = {:.3} (rel {:.4})", fit.a, (fit.a - a).abs(), fit.b, ((fit.b - b) / b).abs()),
        ),
        Err(e) => Verdict::Fail(format!("fit failed: {e}")),
    }
}

/// Dense-matrix modularity, written independently of the library.
fn oracle_modularity(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best modularity over every set partition (restricted growth strings).
fn brute_force(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut rgs = vec![0usize; n];
    loop {
        best = best.max(oracle_modularity(n, edges, &rgs));
        // Next restricted growth string.
        let mut i = n - 1;
        loop {
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if i > 0 && rgs[i] <= max_prefix {
                rgs[i] += 1;
                for r in rgs.iter_mut().skip(i + 1) {
                    *r = 0;
                }
                break;
            }
            if i == 0 {
                return best;
            }
            i -= 1;
        }
    }
}

/// Hourly profile: a commute double peak, a midday hump, or a blend, drawn as counts.
fn day_profile(rng: &mut ChaCha8Rng, blend: f64) -> Vec<f64> {
    let bump = |h: f64, c: f64, w: f64| (-(h - c) * (h - c) / (2.0 * w * w)).exp();
    let counts: Vec<f64> = (0..24)
        .map(|h| {
            let h = h as f64 + 0.5;
            let commute = bump(h, 8.0, 1.0) + bump(h, 17.5, 1.5);
            let leisure = bump(h, 14.0, 3.0);
            let rate = 400.0 * ((1.0 - blend) * commute + blend * leisure) + 5.0;
            (rate * (1.0 + 0.1 * (rng.random::<f64>() - 0.5))).round()
        })
        .collect();
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

type Fixture = (String, usize, Vec<(usize, usize, f64)>);

fn complete(n: usize, mut weight: impl FnMut(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, weight(i, j)));
        }
    }
    edges
}

/// Graphs with community structure: the gated fixture set.
fn structured_fixtures() -> Vec<Fixture> {
    let mut out = Vec::new();
    let mut cliques = complete(8, |i, j| if (i < 4) == (j < 4) { 10.0 } else { 0.0 });
    cliques.retain(|e| e.2 > 0.0);
    cliques.push((3, 4, 0.1));
    out.push(("two 4-cliques".to_string(), 8, cliques));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in 0..40 {
        let n = 4 + g % 5;
        let groups: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let edges = complete(n, |i, j| {
            if groups[i] == groups[j] {
                rng.random_range(50.0..400.0)
            } else {
                rng.random_range(5.0..40.0)
            }
        });
        out.push((format!("planted n={n} #{g}"), n, edges));
    }
    for g in 0..40 {
        // One week (plus an optional extra Monday) of profiles, weighted 1 / JSD.
        let n = 7 + g % 2;
        let blends: Vec<f64> = (0..n).map(|d| match d % 7 { 0..=3 => 0.0, 4 => 0.35, _ => 1.0 }).collect();
        let profiles: Vec<Vec<f64>> = blends.iter().map(|&b| day_profile(&mut rng, b)).collect();
        let edges = complete(n, |i, j| 1.0 / js_divergence(&profiles[i], &profiles[j]).unwrap().max(1e-9));
        out.push((format!("inverse-JSD week n={n} #{g}"), n, edges));
    }
    out
}

/// Unstructured graphs, where a greedy method can stop in a poorer local
/// optimum; reported, not gated.
fn random_fixtures() -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    for g in 0..60 {
        let n = 3 + g % 6;
        let edges = complete(n, |_, _| rng.random_range(0.01..10.0));
        out.push((format!("complete random n={n} #{g}"), n, edges));
    }
    for g in 0..60 {
        let n = 4 + g % 5;
        let mut edges = complete(n, |_, _| if rng.random::<f64>() < 0.45 { rng.random_range(0.5..5.0) } else { 0.0 });
        edges.retain(|e| e.2 > 0.0);
        if !edges.is_empty() {
            out.push((format!("sparse random n={n} #{g}"), n, edges));
        }
    }
    out
}

fn louvain_misses(fixtures: &[Fixture]) -> Vec<String> {
    let mut misses = Vec::new();
    for (name, n, edges) in fixtures {
        let graph = WeightedGraph::new(*n, edges.clone()).unwrap();
        let p = louvain(&graph, 42, 1.0);
        let got = oracle_modularity(*n, edges, &p.communities);
        let best = brute_force(*n, edges);
        if (got - best).abs() > 1e-9 || (p.modularity - got).abs() > 1e-9 {
            misses.push(format!("{name}: {got:.6} vs {best:.6}"));
        }
    }
    misses
}

fn c7_louvain_oracle() -> Verdict {
    let structured = structured_fixtures();
    let random = random_fixtures();
    let misses = louvain_misses(&structured);
    let random_misses = louvain_misses(&random).len();
    verdict(
        misses.is_empty(),
        format!(
            "{} structured graphs, {} below the exhaustive optimum {misses:?}; unstructured random graphs (not gated): {random_misses} of {} below",
            structured.len(),
            misses.len(),
            random.len()
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn c8_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_fixture(tmp.path(), &SynthOptions::default()).unwrap();
    let mut trees = Vec::new();
    for run in ["run_a", "run_b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_bikeshare"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("run")
            .output()
            .unwrap();
        if !status.status.success() {
            return Verdict::Fail(format!("{run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        trees.push(tree(&out));
    }
    let same = trees[0] == trees[1];
    let bytes: usize = trees[0].values().map(Vec::len).sum();
    verdict(same && !trees[0].is_empty(), format!("{} files, {bytes} bytes, identical: {same}", trees[0].len()))
}

/// Table rows keyed by city alias: (weekday total, weekend total, alpha weekday, alpha weekend, a).
fn reference_rows(id: &str) -> Option<(&'static str, Option<(u64, u64)>, (f64, f64), Option<f64>)> {
    let row = match id.to_ascii_lowercase().as_str() {
        "ny" | "nyc" | "new_york" => ("NY", Some((5_036_538, 1_759_118)), (0.129, 0.153), Some(0.52)),
        "london" | "lon" => ("LON", Some((1_210_884, 373_178)), (0.267, 0.289), None),
        "tokyo" | "tyo" => ("TYO", None, (0.314, 0.324), Some(0.51)),
        "boston" | "bos" => ("BOS", Some((528_142, 193_625)), (0.305, 0.379), Some(0.37)),
        "chicago" | "chi" => ("CHI", Some((464_355, 147_714)), (0.221, 0.224), Some(0.52)),
        "dc" | "washington" => ("DC", Some((549_643, 252_463)), (0.230, 0.157), Some(0.37)),
        _ => return None,
    };
    Some(row)
}

fn c9_real_data() -> Verdict {
    let Ok(config) = std::env::var("BSS_REAL_DATA") else {
        return Verdict::Skip("set BSS_REAL_DATA to a config for the six downloaded datasets".into());
    };
    let cfg = match PipelineConfig::load(Path::new(&config)) {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(format!("config: {e}")),
    };
    let out = cfg.output_dir();
    if let Err(e) = run_pipeline(&cfg, None) {
        return Verdict::Fail(format!("pipeline: {e}"));
    }
    let mut problems = Vec::new();
    let weekdays = [Day::Mon, Day::Tue, Day::Wed, Day::Thu, Day::Fri];
    for city in &cfg.config.cities {
        let Some((tag, totals, alphas, a)) = reference_rows(&city.id) else {
            problems.push(format!("unknown city id {}", city.id));
            continue;
        };
        let dir = out.join(&city.id);
        if let Some((wd, we)) = totals {
            let s: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join(stages::SUMMARY)).unwrap()).unwrap();
            if s["weekday_total"] != wd || s["weekend_total"] != we {
                problems.push(format!("{tag} totals {} / {}", s["weekday_total"], s["weekend_total"]));
            }
        }
        let m = matrix::read_matrix_csv(&dir.join(stages::JSD_CSV)).unwrap();
        for (x, y, v) in m.cells() {
            let (dx, dy): (Day, Day) = (x.parse().unwrap(), y.parse().unwrap());
            let wx = weekdays.contains(&dx);
            let wy = weekdays.contains(&dy);
            if wx && wy && v > 0.010 {
                problems.push(format!("{tag} {x}-{y} JSD {v:.4} > 0.010"));
            }
            if wx != wy && v < 0.012 {
                problems.push(format!("{tag} {x}-{y} JSD {v:.4} < 0.012"));
            }
        }
        for (class, want) in [(DayClass::Weekday, alphas.0), (DayClass::Weekend, alphas.1)] {
            let fit = ranks::read_fit(&dir.join(stages::fit_file(class))).unwrap();
            if ((fit.alpha - want) / want).abs() > 0.15 {
                problems.push(format!("{tag} {class} alpha {:.3} vs {want}", fit.alpha));
            }
        }
        if let Some(want) = a {
            let fit = ranks::read_model(&dir.join(stages::MODEL)).unwrap();
            if (fit.a - want).abs() > 0.1 {
                problems.push(format!("{tag} a {:.3} vs {want}", fit.a));
            }
        }
    }
    let net = network::read_network(&out.join(stages::NETWORK_DIR)).unwrap();
    // Fridays are borderline; the structure is judged on Mon-Thu and weekends.
    let community = |label: &str| net.community_of(label);
    let is_core = |l: &str| ["-Mon", "-Tue", "-Wed", "-Thu"].iter().any(|d| l.ends_with(d));
    let weekend: Vec<_> = net.nodes.iter().filter(|n| n.label.ends_with("-Sat") || n.label.ends_with("-Sun")).collect();
    if net.communities != 4 {
        problems.push(format!("{} communities", net.communities));
    }
    if weekend.windows(2).any(|w| w[0].community != w[1].community) {
        problems.push("weekend nodes split".into());
    } else if let Some(c) = weekend.first().map(|n| n.community) {
        if net.nodes.iter().any(|n| is_core(&n.label) && n.community == c) {
            problems.push("weekday node in the weekend community".into());
        }
    }
    let tokyo_id = cfg.config.cities.iter().find(|c| reference_rows(&c.id).is_some_and(|r| r.0 == "TYO")).map(|c| c.id.clone());
    if let Some(t) = tokyo_id {
        let tc = community(&format!("{t}-Mon"));
        for n in net.nodes.iter().filter(|n| is_core(&n.label)) {
            if n.label.starts_with(&format!("{t}-")) != (Some(n.community) == tc) {
                problems.push(format!("{} breaks the Tokyo weekday community", n.label));
            }
        }
    }
    verdict(problems.is_empty(), format!("{} deviations {:?}", problems.len(), problems))
}

fn main() {
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Verdict>)> = vec![
        ("1 divergence axioms", Box::new(|| timed(Duration::from_secs(10), c1_divergence_axioms))),
        ("2 hand-computed JSD", Box::new(c2_hand_jsd)),
        ("3 recurrence vs closed form", Box::new(|| timed(Duration::from_secs(1), c3_recurrence_grid))),
        ("4 Monte Carlo vs mean field", Box::new(|| timed(Duration::from_secs(30), c4_monte_carlo))),
        ("5 rank distribution fit recovery", Box::new(|| timed(Duration::from_secs(5), c5_rank_fit_recovery))),
        ("6 rank model fit recovery", Box::new(c6_rank_model_recovery)),
        ("7 Louvain vs exhaustive optimum", Box::new(|| timed(Duration::from_secs(60), c7_louvain_oracle))),
        ("8 pipeline determinism", Box::new(c8_determinism)),
        ("9 real-data reproduction", Box::new(c9_real_data)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Verdict::Pass(d) => println!("PASS criterion {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
            Verdict::Skip(d) => println!("SKIP criterion {name}: {d}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
