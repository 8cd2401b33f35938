use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dialeval::adem::{adem_score, AdemParams};
use dialeval::analytics::{normalize_scores, pearson, spearman, system_level_correlation};
use dialeval::corpus::{split_by_context, SourceModel, EOU};
use dialeval::encoder::layer_norm::normalize;
use dialeval::encoder::{EmbeddingTriple, EncoderConfig, HierEncoder};
use dialeval::metrics::{bleu_n, lcs_len, meteor, rouge_l, BleuConfig, MeteorConfig, RougeConfig};
use dialeval::synth::{synth_text_dataset, TextSynthConfig};
use dialeval::vhred::{Dialogue, DialogueDraws, Vhred, VhredConfig};

fn pearson_def(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks_def(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn non_constant(v: &[f64]) -> bool {
    v.iter().any(|x| *x != v[0])
}

fn series(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-50.0..50.0f64), (0..6i32).prop_map(f64::from)], len)
}

fn sentence() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 1..=10)
}

fn words(ids: &[u8], names: &[&'static str]) -> Vec<&'static str> {
    ids.iter().map(|&i| names[i as usize]).collect()
}

const NAMES: [&str; 6] = ["apple", "runs", "blue", "sky", "jumped", "cats"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlations_match_definitions(x in series(50), y in series(50)) {
        prop_assume!(non_constant(&x) && non_constant(&y));
        let p = pearson(&x, &y).unwrap();
        let s = spearman(&x, &y).unwrap();
        prop_assert!((p.coefficient - pearson_def(&x, &y)).abs() <= 1e-12);
        prop_assert!((s.coefficient - pearson_def(&ranks_def(&x), &ranks_def(&y))).abs() <= 1e-12);
        for r in [p, s] {
            prop_assert!(r.coefficient.abs() <= 1.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn spearman_ignores_increasing_maps(x in series(30), y in series(30)) {
        prop_assume!(non_constant(&x) && non_constant(&y));
        let s = spearman(&x, &y).unwrap().coefficient;
        let tx: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
        let ty: Vec<f64> = y.iter().map(|v| 3.0 * v - 7.0).collect();
        prop_assert_eq!(spearman(&tx, &ty).unwrap().coefficient, s);
    }

    #[test]
    fn normalization_is_non_decreasing(
        metric in prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], 3..80),
        seed in any::<u64>(),
    ) {
        prop_assume!(non_constant(&metric));
        let human: Vec<f64> = (0..metric.len()).map(|i| (1 + (seed as usize + i * 3) % 5) as f64).collect();
        prop_assume!(non_constant(&human));
        let out = normalize_scores(&metric, &human).unwrap();
        for i in 0..metric.len() {
            for j in 0..metric.len() {
                if metric[i] <= metric[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }

    #[test]
    fn system_level_ignores_order_within_groups(seed in any::<u64>(), n in 12usize..60) {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sources: Vec<SourceModel> = (0..n).map(|i| SourceModel::ALL[i % 4]).collect();
        let human: Vec<f64> = (0..n).map(|_| rng.random_range(1..=5) as f64).collect();
        let metric: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let (base, _) = system_level_correlation(&sources, &human, &metric).unwrap();
        // permute each source's examples among that source's positions
        let mut groups: BTreeMap<SourceModel, Vec<usize>> = BTreeMap::new();
        for (i, s) in sources.iter().enumerate() {
            groups.entry(*s).or_default().push(i);
        }
        let (mut h2, mut m2) = (human.clone(), metric.clone());
        for idx in groups.values() {
            let mut perm = idx.clone();
            perm.shuffle(&mut rng);
            for (&to, &from) in idx.iter().zip(&perm) {
                h2[to] = human[from];
                m2[to] = metric[from];
            }
        }
        let (moved, _) = system_level_correlation(&sources, &h2, &m2).unwrap();
        prop_assert!((moved.coefficient - base.coefficient).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_relabeling(a in sentence(), b in sentence(), shift in 1u8..6) {
        let relabel = |v: &[u8]| v.iter().map(|x| (x + shift) % 6).collect::<Vec<u8>>();
        let (ra, rb) = (relabel(&a), relabel(&b));
        for n in 1..=4 {
            let cfg = BleuConfig::new(n);
            prop_assert_eq!(bleu_n(&a, &[b.as_slice()], &cfg).unwrap(), bleu_n(&ra, &[rb.as_slice()], &cfg).unwrap());
        }
        let rc = RougeConfig::default();
        prop_assert_eq!(rouge_l(&a, &[b.as_slice()], &rc).unwrap(), rouge_l(&ra, &[rb.as_slice()], &rc).unwrap());
        // exact matching only; stems depend on spelling
        let mc = MeteorConfig::exact_only();
        let names: Vec<String> = (0..6).map(|i| format!("w{i}")).collect();
        let w = |v: &[u8]| v.iter().map(|&i| names[i as usize].clone()).collect::<Vec<String>>();
        prop_assert_eq!(meteor(&w(&a), &w(&b), &mc).unwrap(), meteor(&w(&ra), &w(&rb), &mc).unwrap());
    }

    #[test]
    fn metric_scores_are_bounded(a in sentence(), b in sentence()) {
        let (wa, wb) = (words(&a, &NAMES), words(&b, &NAMES));
        let refs = [wb.as_slice()];
        let mut scores = vec![
            rouge_l(&wa, &refs, &RougeConfig::default()).unwrap(),
            meteor(&wa, &wb, &MeteorConfig::default()).unwrap(),
        ];
        for n in 1..=4 {
            scores.push(bleu_n(&wa, &refs, &BleuConfig::new(n)).unwrap());
            scores.push(bleu_n(&wa, &refs, &BleuConfig::unsmoothed(n)).unwrap());
        }
        for s in scores {
            prop_assert!((0.0..=1.0).contains(&s), "{s}");
        }
        let self_refs = [wa.as_slice()];
        prop_assert_eq!(rouge_l(&wa, &self_refs, &RougeConfig::default()).unwrap(), 1.0);
        for n in 1..=wa.len().min(4) {
            prop_assert!((bleu_n(&wa, &self_refs, &BleuConfig::unsmoothed(n)).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unigram_bleu_is_clipped_precision(a in sentence(), b in sentence()) {
        prop_assume!(a.len() == b.len());
        let mut avail: BTreeMap<u8, usize> = BTreeMap::new();
        for t in &b {
            *avail.entry(*t).or_default() += 1;
        }
        let mut hits = 0;
        for t in &a {
            if let Some(c) = avail.get_mut(t) {
                if *c > 0 {
                    *c -= 1;
                    hits += 1;
                }
            }
        }
        let got = bleu_n(&a, &[b.as_slice()], &BleuConfig::unsmoothed(1)).unwrap();
        prop_assert_eq!(got, hits as f64 / a.len() as f64);
    }

    #[test]
    fn lcs_matches_enumeration(a in sentence(), b in sentence()) {
        let mut best = 0;
        for mask in 0u32..(1 << a.len()) {
            let sub: Vec<u8> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| a[i]).collect();
            let mut it = b.iter();
            if sub.len() > best && sub.iter().all(|c| it.any(|d| d == c)) {
                best = sub.len();
            }
        }
        prop_assert_eq!(lcs_len(&a, &b), best);
    }

    #[test]
    fn layer_norm_standardizes(v in prop::collection::vec(-20.0..20.0f64, 2..16)) {
        prop_assume!(non_constant(&v));
        let (x, _) = normalize(&v);
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
        prop_assert!(m.abs() < 1e-10);
        prop_assert!((var - 1.0).abs() < 1e-10);
    }

    #[test]
    fn encoding_is_pure(seed in any::<u64>(), toks in prop::collection::vec(4u32..10, 1..5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = HierEncoder::new(
            EncoderConfig { vocab_size: 10, embed_dim: 3, utterance_hidden: 4, context_hidden: 5, layer_norm: true },
            &mut rng,
        );
        let mut u = toks.clone();
        u.push(EOU);
        let d = vec![u.clone(), u];
        prop_assert_eq!(enc.encode_dialogue(&d).unwrap(), enc.clone().encode_dialogue(&d).unwrap());
    }

    #[test]
    fn elbo_objective_never_exceeds_reconstruction(seed in any::<u64>(), w in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = VhredConfig {
            encoder: EncoderConfig { vocab_size: 8, embed_dim: 3, utterance_hidden: 4, context_hidden: 4, layer_norm: true },
            latent_dim: 2,
            mlp_hidden: 3,
            decoder_hidden: 4,
            word_dropout: 0.25,
        };
        let m = Vhred::new(cfg, &mut rng).unwrap();
        let d = Dialogue::new(vec![vec![4, 5, EOU], vec![6, EOU], vec![7, 4, EOU]]);
        let draws = DialogueDraws::sample(&d, 2, 0.25, &mut rng);
        let t = m.dialogue_elbo(&d, &draws, w).unwrap();
        prop_assert!(t.kl >= 0.0);
        prop_assert!(t.objective <= t.recon);
    }

    #[test]
    fn score_is_jointly_linear(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let mut v = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let t = EmbeddingTriple::new(v(), v(), v()).unwrap();
        let mut a = AdemParams::identity(n);
        let mut b = AdemParams::identity(n);
        a.alpha = 0.0;
        b.alpha = 0.0;
        a.m.data.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        b.m.data.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        let mut sum = a.clone();
        sum.m.data.iter_mut().zip(&b.m.data).for_each(|(x, y)| *x += y);
        let mut zero = a.clone();
        zero.m.data.iter_mut().for_each(|x| *x = 0.0);
        let lhs = adem_score(&sum, &t).unwrap();
        let rhs = adem_score(&a, &t).unwrap() + adem_score(&b, &t).unwrap() - adem_score(&zero, &t).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn splits_partition_the_dataset_by_context(seed in any::<u64>(), contexts in 3usize..40) {
        let ds = synth_text_dataset(&TextSynthConfig { contexts, seed, ..TextSynthConfig::default() }).unwrap();
        let s = split_by_context(&ds, [0.7, 0.15, 0.15], seed).unwrap();
        let key = |e: &dialeval::corpus::EvalExample| {
            (e.context.context_id.clone(), e.model_response.text.clone(), e.source_model)
        };
        let all: BTreeSet<_> = ds.iter().map(key).collect();
        let parts = [&s.train, &s.validation, &s.test];
        let union: BTreeSet<_> = parts.iter().flat_map(|p| p.iter().map(key)).collect();
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), ds.len());
        prop_assert_eq!(union, all);
        let ctx = |p: &[dialeval::corpus::EvalExample]| -> BTreeSet<String> {
            p.iter().map(|e| e.context.context_id.clone()).collect()
        };
        let (a, b, c) = (ctx(&s.train), ctx(&s.validation), ctx(&s.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
    }
}
