//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion, and exits nonzero if any failed.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use arc_core::counter::{BuildConfig, CountingIndex, SampleSpec, TreeSource};
use arc_core::generate::{clustered_points, dataset, generate_queries, uniform_points, with_random_weights, DatasetKind, QueryKind};
use arc_core::geom::{sq_dist, EpsParams, GridSpec, Seed, WeightedPointSet};
use arc_core::hamming::{collision_prob, HammingEmbedding};
use arc_core::io::ModelFile;
use arc_core::learned::{evaluate_visiting, learned_spanning_tree, pair_stab_counts, minimum_spanning_tree, QuerySample};
use arc_core::oracle::{enumerate_spanning_trees, exact_range_members, exact_sigma, exact_tq};
use arc_core::ptree::{canonical_path_of_tree, path_to_partition_tree, tree_to_path, visiting_number, SpanningPath};
use arc_core::spantree::{
    build_low_stab_forest, build_low_stab_tree, build_low_stab_tree_traced, generate_grid_queries, Edge, LightEdgeParams,
    QueryMultiset,
};
use arc_core::stabber::{build_classifier, default_repetitions, StabConfig, StabIndex, Verdict};
use rand::seq::SliceRandom;
use rand::Rng;

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

fn path_edges(p: &SpanningPath) -> Vec<Edge> {
    p.edges().map(|(a, b)| Edge::new(a, b).unwrap()).collect()
}

fn random_unit_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn offset(q: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    q.iter().zip(dir).map(|(a, b)| a + t * b).collect()
}

fn c1_collision_bounds() -> Outcome {
    let t0 = Instant::now();
    let mut worst_gap = f64::INFINITY;
    let mut worst_p2 = f64::INFINITY;
    let mut pass = true;
    for k in 1..=9 {
        let eps = k as f64 / 10.0;
        let w = 1.0 + eps;
        let p1 = collision_prob(1.0, w).unwrap();
        let p2 = collision_prob(w, w).unwrap();
        pass &= p1 - p2 >= eps / 5.0 - 1e-6 && p2 >= 0.25 - 1e-6;
        worst_gap = worst_gap.min(p1 - p2 - eps / 5.0);
        worst_p2 = worst_p2.min(p2);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        pass && secs < 1.0,
        format!("min(p1-p2-eps/5) = {worst_gap:.4}, min p2 = {worst_p2:.4}, {secs:.3}s"),
    )
}

fn c2_concentration() -> Outcome {
    let t0 = Instant::now();
    let (eps, dprime, d, trials) = (0.5, 64, 16, 10_000);
    let params = EpsParams::unit(eps).unwrap();
    let bound = (-eps * eps * dprime as f64 / 19200.0).exp() + 0.02;
    let mut rng = Seed(2002).rng();
    let (mut near_bad, mut far_bad, mut far_below_theta) = (0, 0, 0);
    for t in 0..trials {
        let emb = HammingEmbedding::new(d, dprime, &params, Seed(20_000 + t)).unwrap();
        let p: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dir = random_unit_vector(d, &mut rng);
        let fp = emb.embed(&p).unwrap();
        let near = fp.hamming(&emb.embed(&offset(&p, &dir, 1.0)).unwrap()) as f64;
        let far = fp.hamming(&emb.embed(&offset(&p, &dir, 1.5)).unwrap()) as f64;
        near_bad += (near > emb.theta()) as usize;
        far_bad += (far < emb.far_threshold()) as usize;
        far_below_theta += (far <= emb.theta()) as usize;
    }
    let (rn, rf) = (near_bad as f64 / trials as f64, far_bad as f64 / trials as f64);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        rn <= bound && rf <= bound && secs < 30.0,
        format!(
            "near>theta {rn:.4}, far<theta+eps*d' {rf:.4}, bound {bound:.4}; info: far<=theta {:.4}; {secs:.1}s",
            far_below_theta as f64 / trials as f64
        ),
    )
}

fn c3_witness_recall() -> Outcome {
    let t0 = Instant::now();
    let params = EpsParams::unit(0.5).unwrap();
    let pts = Arc::new(clustered_points(500, 16, 8, 2.0, 0.2, Seed(3003)).unwrap());
    let members: Vec<usize> = (0..500).collect();
    let queries = generate_queries(&pts, QueryKind::NearData { spread: 0.3 }, 1000, Seed(3004)).unwrap();
    let strict = StabConfig {
        strict_bands: true,
        ..StabConfig::default()
    };
    let mut tallies = [[0usize; 4]; 2]; // [config][near_has, near_hit, far_has, far_hit]
    for b in 0..200u64 {
        for (ci, cfg) in [StabConfig::default(), strict].iter().enumerate() {
            let idx = StabIndex::build(pts.clone(), &members, &params, cfg, Seed(30_000 + b)).unwrap();
            for q in &queries[(b as usize * 5)..(b as usize * 5 + 5)] {
                let w = idx.witnesses(q).unwrap();
                let ds: Vec<f64> = pts.points().map(|p| sq_dist(p, q)).collect();
                let has_near = ds.iter().any(|&x| x <= params.outer_radius().powi(2));
                let has_far = ds.iter().any(|&x| x >= 1.0);
                let t = &mut tallies[ci];
                if has_near {
                    t[0] += 1;
                    t[1] += w.near.is_some() as usize;
                }
                if has_far {
                    t[2] += 1;
                    t[3] += w.far.is_some() as usize;
                }
            }
        }
    }
    let rate = |hit: usize, has: usize| if has == 0 { 1.0 } else { hit as f64 / has as f64 };
    let (nr, fr) = (rate(tallies[0][1], tallies[0][0]), rate(tallies[0][3], tallies[0][2]));
    let (snr, sfr) = (rate(tallies[1][1], tallies[1][0]), rate(tallies[1][3], tallies[1][2]));
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        nr >= 0.95 && fr >= 0.95 && tallies[0][0] > 0 && tallies[0][2] > 0 && secs < 120.0,
        format!(
            "near recall {nr:.4} ({}), far recall {fr:.4} ({}); info: band-only scan near {snr:.4}, far {sfr:.4}; {secs:.1}s",
            tallies[0][0], tallies[0][2]
        ),
    )
}

fn c4_mandatory_verdicts() -> Outcome {
    let params = EpsParams::unit(0.5).unwrap();
    let (n, d, trials) = (40, 8, 1000);
    let reps = default_repetitions(n);
    let mut rng = Seed(4004).rng();
    let mut ok = [0usize; 3];
    for t in 0..trials {
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let at = |lo: f64, hi: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let dir = random_unit_vector(d, rng);
            offset(&q, &dir, rng.random_range(lo..hi))
        };
        let inside: Vec<Vec<f64>> = (0..n).map(|_| at(0.0, 1.0, &mut rng)).collect();
        let outside: Vec<Vec<f64>> = (0..n).map(|_| at(1.5000001, 4.0, &mut rng)).collect();
        let mut planted: Vec<Vec<f64>> = (0..n - 2).map(|_| at(0.0, 4.0, &mut rng)).collect();
        planted.push(at(0.8, 0.8 + 1e-12, &mut rng));
        planted.push(at(1.6, 1.6 + 1e-12, &mut rng));
        let cases = [(inside, Verdict::Covered), (outside, Verdict::Disjoint), (planted, Verdict::Stabbed)];
        for (k, (set, want)) in cases.into_iter().enumerate() {
            let set = WeightedPointSet::unit_weights(set).unwrap();
            let c = build_classifier(&set, &params, reps, Seed(40_000 + 3 * t as u64 + k as u64)).unwrap();
            ok[k] += (c.classify(&q).unwrap() == want) as usize;
        }
    }
    let rates: Vec<f64> = ok.iter().map(|&x| x as f64 / trials as f64).collect();
    outcome(
        rates.iter().all(|&r| r >= 0.999),
        format!("covered {:.4}, disjoint {:.4}, stabbed {:.4} ({reps} repetitions)", rates[0], rates[1], rates[2]),
    )
}

fn stab_counts_match(q: &QueryMultiset, edges: &[Edge], pts: &WeightedPointSet, p: &EpsParams) -> bool {
    (0..q.len()).all(|i| {
        let sigma = exact_sigma(q.query(i), edges, pts, p).unwrap() as u32;
        q.stab_exponent(i) == sigma && q.sampler().log2_weight(i) == sigma as f64
    })
}

fn c5_mwu_bookkeeping() -> Outcome {
    let p = EpsParams::unit(0.5).unwrap();
    let lp = LightEdgeParams::default_for(0.5);
    let g = GridSpec::new(0.25).unwrap();
    let mut rng = Seed(5005).rng();
    let (mut instances, mut good, mut queries) = (0, 0, 0);
    for inst in 0..20u64 {
        let n = rng.random_range(4..=32);
        let pts = uniform_points(n, 2, 2.5, Seed(50_000 + inst)).unwrap();
        let mut q = generate_grid_queries(&pts, &p, &g).unwrap();
        let forest = build_low_stab_forest(&pts, &mut q, &p, &lp, Seed(inst)).unwrap();
        instances += 1;
        queries += q.len();
        good += stab_counts_match(&q, forest.edges(), &pts, &p) as usize;

        let mut q = generate_grid_queries(&pts, &p, &g).unwrap();
        let tree = build_low_stab_tree(&pts, &mut q, &p, &lp, Seed(inst)).unwrap();
        instances += 1;
        good += stab_counts_match(&q, tree.edges(), &pts, &p) as usize;
    }
    outcome(
        good == instances,
        format!("{good}/{instances} forests and trees exact over {queries} forest queries"),
    )
}

fn c6_path_and_tree_bounds() -> Outcome {
    let p = EpsParams::unit(0.5).unwrap();
    let lp = LightEdgeParams::default_for(0.5);
    let g = GridSpec::new(0.25).unwrap();
    let mut rng = Seed(6006).rng();
    let (mut checks, mut fail51, mut fail52) = (0, 0, 0);
    let mut bad_instances = BTreeSet::new();
    let mut worst = (0usize, 0usize, 0usize);
    for inst in 0..50u64 {
        let n = rng.random_range(8..=32);
        let pts = uniform_points(n, 2, 2.5, Seed(60_000 + inst)).unwrap();
        let mut q = generate_grid_queries(&pts, &p, &g).unwrap();
        let tree = build_low_stab_tree(&pts, &mut q, &p, &lp, Seed(inst)).unwrap();
        let path = tree_to_path(&tree, &pts).unwrap();
        let pt = path_to_partition_tree(&path, &pts).unwrap();
        let pe = path_edges(&path);
        let depth = (n as f64).log2().ceil() as usize;
        for query in q.queries() {
            let s_tree = exact_sigma(query, tree.edges(), &pts, &p).unwrap();
            let s_path = exact_sigma(query, &pe, &pts, &p).unwrap();
            let tq = exact_tq(&pts, query, &p).unwrap();
            let zeta = visiting_number(&pt, query, &pts, &p).unwrap();
            checks += 1;
            if s_path > 2 * s_tree + 2 * tq {
                fail51 += 1;
                bad_instances.insert(inst);
                if s_path > worst.0 {
                    worst = (s_path, s_tree, tq);
                }
            }
            if zeta > 2 * (s_path + tq) * depth + 1 {
                fail52 += 1;
                bad_instances.insert(inst);
            }
        }
    }
    let mut detail = format!("{checks} (instance, query) checks; path bound violated {fail51}, tree bound violated {fail52}");
    if fail51 > 0 {
        detail.push_str(&format!(
            "; worst path case sigma_path={} with sigma_tree={} t_q={} in {} instance(s)",
            worst.0,
            worst.1,
            worst.2,
            bad_instances.len()
        ));
    }
    outcome(fail51 == 0 && fail52 == 0, detail)
}

fn c7_leaf_path_vs_visiting() -> Outcome {
    let p = EpsParams::unit(0.5).unwrap();
    let mut rng = Seed(7007).rng();
    let mut bad = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=32);
        let pts = WeightedPointSet::unit_weights(
            (0..n).map(|_| vec![rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]).collect(),
        )
        .unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let t = path_to_partition_tree(&SpanningPath::new(order).unwrap(), &pts).unwrap();
        let q = [rng.random_range(-1.0..4.0), rng.random_range(-1.0..4.0)];
        let sigma = exact_sigma(&q, &path_edges(&canonical_path_of_tree(&t)), &pts, &p).unwrap();
        bad += (sigma > visiting_number(&t, &q, &pts, &p).unwrap()) as usize;
    }
    outcome(bad == 0, format!("{bad} violations in 10000 pairs"))
}

fn c8_sample_optimality() -> Outcome {
    let t0 = Instant::now();
    let p = EpsParams::unit(0.5).unwrap();
    let mut rng = Seed(8008).rng();
    let mut good = 0;
    for inst in 0..25 {
        let n = 4 + inst % 4;
        let pts = WeightedPointSet::unit_weights(
            (0..n).map(|_| vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).collect(),
        )
        .unwrap();
        let sample = QuerySample::new(
            (0..80).map(|_| vec![rng.random_range(-0.5..2.5), rng.random_range(-0.5..2.5)]).collect(),
            "uniform",
        )
        .unwrap();
        let m = pair_stab_counts(&pts, &sample, &p).unwrap();
        let learned = learned_spanning_tree(&pts, &sample, &p).unwrap();
        assert_eq!(learned, minimum_spanning_tree(&m).unwrap());
        let objective: usize = sample.queries().iter().map(|q| exact_sigma(q, learned.edges(), &pts, &p).unwrap()).sum();
        let best = enumerate_spanning_trees(n)
            .unwrap()
            .iter()
            .map(|t| m.weight_of(t.edges()))
            .min()
            .unwrap();
        good += (objective as u64 == best && m.weight_of(learned.edges()) == best) as usize;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(good == 25 && secs < 60.0, format!("{good}/25 instances optimal, {secs:.1}s"))
}

fn c9_end_to_end_sandwich() -> Outcome {
    let t0 = Instant::now();
    let base = dataset(DatasetKind::Uniform, 512, 16, Seed(9009)).unwrap();
    let pts = with_random_weights(&base, Seed(9010)).unwrap();
    let params = EpsParams::unit(0.5).unwrap();
    let mut cfg = BuildConfig::learned(0.5, Seed(9011));
    cfg.tree_source = TreeSource::Learned {
        sample: SampleSpec::Generated {
            kind: QueryKind::NearData { spread: 0.25 },
            m: Some(4096),
            delta: 0.1,
            multiplier: 1.0,
        },
    };
    let idx = CountingIndex::build(&pts, cfg, None).unwrap();
    let queries = generate_queries(&pts, QueryKind::NearData { spread: 0.25 }, 500, Seed(9012)).unwrap();
    let (mut sandwich, mut identity, mut nontrivial) = (0, 0, 0);
    for q in &queries {
        let ans = idx.count(q, true).unwrap();
        let members = idx.members_of(ans.member_ranges.as_ref().unwrap());
        let s: BTreeSet<usize> = members.iter().copied().collect();
        let inner: BTreeSet<usize> = exact_range_members(&pts, q, 1.0).unwrap().into_iter().collect();
        let outer: BTreeSet<usize> = exact_range_members(&pts, q, 1.5).unwrap().into_iter().collect();
        sandwich += (inner.is_subset(&s) && s.is_subset(&outer)) as usize;
        let w: f64 = members.iter().map(|&i| pts.weight(i)).sum();
        identity += ((w - ans.weight).abs() <= 1e-12 * w.max(1.0)) as usize;
        nontrivial += (!inner.is_empty() && outer.len() < pts.len()) as usize;
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        sandwich as f64 >= 0.99 * 500.0 && identity == 500,
        format!("sandwich {sandwich}/500, weight identity {identity}/500, nontrivial queries {nontrivial}; {secs:.1}s"),
    )
}

/// One-sided sign test: P(X >= wins) for X ~ Bin(trials, 1/2).
fn sign_test_p(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=trials {
        let mut c = 1.0;
        for j in 0..k {
            c *= (trials - j) as f64 / (j + 1) as f64;
        }
        p += c * 0.5f64.powi(trials as i32);
    }
    p
}

fn c10_learned_beats_random() -> Outcome {
    let t0 = Instant::now();
    let (mut wins, mut ties, mut learned_total, mut random_total) = (0, 0, 0.0, 0.0);
    for inst in 0..20u64 {
        let pts = clustered_points(128, 4, 6, 4.0, 0.25, Seed(100_000 + inst)).unwrap();
        let kind = QueryKind::NearData { spread: 0.5 };
        let train = QuerySample::new(generate_queries(&pts, kind, 2000, Seed(110_000 + inst)).unwrap(), "train").unwrap();
        let holdout = QuerySample::new(generate_queries(&pts, kind, 300, Seed(120_000 + inst)).unwrap(), "holdout").unwrap();
        let mut learned_cfg = BuildConfig::learned(0.5, Seed(130_000 + inst));
        learned_cfg.tree_source = TreeSource::Learned {
            sample: SampleSpec::Provided {
                m: train.len(),
                digest: String::new(),
            },
        };
        let learned = CountingIndex::build(&pts, learned_cfg, Some(&train)).unwrap();
        let random = CountingIndex::build(&pts, BuildConfig::new(0.5, TreeSource::Random, Seed(140_000 + inst)), None).unwrap();
        let params = EpsParams::unit(0.5).unwrap();
        let a = evaluate_visiting(&learned, &holdout, &pts, &params).unwrap();
        let b = evaluate_visiting(&random, &holdout, &pts, &params).unwrap();
        assert_eq!(a.holdout_overlaps_training, Some(false));
        learned_total += a.mean_visiting;
        random_total += b.mean_visiting;
        if a.mean_visiting < b.mean_visiting {
            wins += 1;
        } else if a.mean_visiting == b.mean_visiting {
            ties += 1;
        }
    }
    let trials = 20 - ties;
    let pval = sign_test_p(wins, trials);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        pval < 0.05,
        format!(
            "learned wins {wins}/{trials} (ties {ties}), sign-test p = {pval:.2e}; mean visiting {:.1} vs {:.1}; {secs:.1}s",
            learned_total / 20.0,
            random_total / 20.0
        ),
    )
}

fn c11_determinism_and_persistence() -> Outcome {
    let pts = with_random_weights(&dataset(DatasetKind::Clusters, 300, 8, Seed(11_011)).unwrap(), Seed(11_012)).unwrap();
    let probe = generate_queries(&pts, QueryKind::NearData { spread: 0.35 }, 100, Seed(11_013)).unwrap();
    let cfg = BuildConfig::learned(0.5, Seed(11_014));
    let a = CountingIndex::build(&pts, cfg.clone(), None).unwrap();
    let b = CountingIndex::build(&pts, cfg, None).unwrap();
    let mut problems = Vec::new();
    if a.path() != b.path() {
        problems.push("paths differ".to_string());
    }

    let verdicts = |idx: &CountingIndex| -> Vec<Verdict> {
        let t = idx.tree();
        probe
            .iter()
            .flat_map(|q| {
                let x = idx.transform_query(q).unwrap();
                t.internal_nodes()
                    .map(move |v| t.node(v).classifier.as_ref().unwrap().classify(&x).unwrap())
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    if verdicts(&a) != verdicts(&b) {
        problems.push("verdicts differ".to_string());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ModelFile::from_index(&a, &pts).save(&path).unwrap();
    let c = ModelFile::load(&path).unwrap().rebuild(&pts).unwrap();
    let mut same = 0;
    for q in &probe {
        let (x, y, z) = (a.count(q, true).unwrap(), b.count(q, true).unwrap(), c.count(q, true).unwrap());
        let bits = |w: f64| w.to_bits();
        if x == y && x == z && bits(x.weight) == bits(y.weight) && bits(x.weight) == bits(z.weight) {
            same += 1;
        }
    }
    if same != probe.len() {
        problems.push(format!("{} probe answers differ", probe.len() - same));
    }

    let small = uniform_points(24, 2, 2.0, Seed(11_015)).unwrap();
    let p = EpsParams::unit(0.5).unwrap();
    let lp = LightEdgeParams::default_for(0.5);
    let g = GridSpec::new(0.25).unwrap();
    let t1 = build_low_stab_tree_traced(&small, &mut generate_grid_queries(&small, &p, &g).unwrap(), &p, &lp, Seed(3)).unwrap();
    let t2 = build_low_stab_tree_traced(&small, &mut generate_grid_queries(&small, &p, &g).unwrap(), &p, &lp, Seed(3)).unwrap();
    if t1.tree != t2.tree {
        problems.push("worst-case trees differ".to_string());
    }

    let detail = if problems.is_empty() {
        format!("identical paths, verdicts, and {same}/100 probe answers after save and rebuild")
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("collision probability bounds", c1_collision_bounds),
        ("embedding concentration", c2_concentration),
        ("witness recall", c3_witness_recall),
        ("mandatory verdicts", c4_mandatory_verdicts),
        ("MWU weight bookkeeping", c5_mwu_bookkeeping),
        ("DFS path and partition tree bounds", c6_path_and_tree_bounds),
        ("leaf path stabbing vs visiting number", c7_leaf_path_vs_visiting),
        ("learned tree sample optimality", c8_sample_optimality),
        ("end-to-end sandwich", c9_end_to_end_sandwich),
        ("learned vs random tree", c10_learned_beats_random),
        ("determinism and persistence", c11_determinism_and_persistence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += (!o.pass) as usize;
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
