use std::collections::BTreeMap;

use npi_core::analysis::*;
use npi_core::baseline::*;
use npi_core::extraction::*;
use npi_core::probe::*;
use npi_core::rewrite::*;
use npi_core::synthcorpus::{generate_corpus, GrammarConfig};
use npi_core::treebank::*;
use proptest::prelude::*;

// ---- trees ----

fn arb_tree() -> impl Strategy<Value = ParseTree> {
    let leaf = ("[A-Z]{1,3}", "[a-z0-9.,']{1,6}").prop_map(|(l, t)| ParseTree::leaf(l, t, 0));
    leaf.prop_recursive(4, 40, 4, |inner| {
        ("[A-Z]{1,4}(-[A-Z]{1,3})?", prop::collection::vec(inner, 1..4)).prop_map(|(l, cs)| ParseTree::node(l, cs))
    })
}

fn check_spans(t: &ParseTree) {
    if t.is_leaf() {
        assert_eq!(t.span.len(), 1);
        return;
    }
    assert_eq!(t.children.first().unwrap().span.start, t.span.start);
    assert_eq!(t.children.last().unwrap().span.end, t.span.end);
    for w in t.children.windows(2) {
        assert_eq!(w[0].span.end, w[1].span.start);
    }
    t.children.iter().for_each(check_spans);
}

proptest! {
    #[test]
    fn bracketed_round_trip(mut tree in arb_tree()) {
        tree.reindex(0);
        let text = tree.to_bracketed();
        let back = parse_ptb(&text).unwrap();
        prop_assert_eq!(&back, &tree);
        prop_assert_eq!(back.to_bracketed(), text);
    }

    #[test]
    fn spans_partition_the_leaves(mut tree in arb_tree()) {
        tree.reindex(0);
        let back = parse_ptb(&tree.to_bracketed()).unwrap();
        check_spans(&back);
        let leaves = back.leaves();
        prop_assert_eq!(back.span, Span::new(0, leaves.len()));
        // Leaves are the atoms that do not directly follow an open bracket.
        let text = back.to_bracketed().replace('(', " ( ").replace(')', " ) ");
        let lexemes: Vec<&str> = text.split_whitespace().collect();
        let atoms = (1..lexemes.len())
            .filter(|&i| !matches!(lexemes[i], "(" | ")") && lexemes[i - 1] != "(")
            .count();
        prop_assert_eq!(atoms, leaves.len());
    }
}

// ---- extraction, labels and rewrites on generated corpora ----

fn corpus(seed: u64, n: usize) -> (npi_core::synthcorpus::SynthCorpus, Lexicon) {
    let lex = Lexicon::default();
    let cfg = GrammarConfig {
        seed,
        ..GrammarConfig::default()
    };
    (generate_corpus(&cfg, n, &lex).unwrap(), lex)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extracted_constructions_are_consistent(seed in 0u64..10_000) {
        let (corpus, lex) = corpus(seed, 40);
        let summary = extract_corpus(&corpus.trees, &lex);
        for c in &summary.constructions {
            prop_assert!(surface_prefilter(&c.tokens, &lex));
            prop_assert!(lex.is_licensor(c.licensor()));
            prop_assert!(lex.is_npi(c.npi()));
            prop_assert!(c.scope.contains(c.npi_index));
            prop_assert!(c.scope.start > c.licensor_index);
            prop_assert_eq!(c.distance, c.npi_index - c.licensor_index);
            let labeled = label_tokens(&c.tokens, c, &lex).unwrap();
            prop_assert!(labeled.is_well_ordered());
            prop_assert_eq!(labeled.labels[c.npi_index], ScopeLabel::Npi);
        }
    }

    #[test]
    fn rewrites_shift_tokens_as_expected(seed in 0u64..10_000) {
        let (corpus, lex) = corpus(seed, 30);
        for c in &corpus.gold {
            let set = build_rewrite_set(c, &lex).unwrap();
            let neg = set.variant(Condition::NpiNeg);
            let pos = set.variant(Condition::NpiPos);
            let expected = match lex.licensor_rewrite(c.licensor()).unwrap() {
                LicensorRewrite::Remove => neg.tokens.len() - 1,
                LicensorRewrite::Replace(_) => neg.tokens.len(),
            };
            prop_assert_eq!(pos.tokens.len(), expected);
            for v in &set.variants {
                if !v.valid {
                    prop_assert!(v.condition.uses_ppi());
                    continue;
                }
                let item = &v.tokens[v.item_index];
                if v.condition.uses_ppi() {
                    prop_assert!(lex.is_ppi(item));
                    prop_assert_eq!(lex.npi_for(item).unwrap(), c.npi().to_lowercase());
                } else {
                    prop_assert!(lex.is_npi(item));
                }
                prop_assert_eq!(v.tokens.len(), if v.condition.is_negative() { neg.tokens.len() } else { pos.tokens.len() });
            }
        }
    }

    #[test]
    fn no_npi_outside_a_licensed_scope(seed in 0u64..10_000) {
        let (corpus, lex) = corpus(seed, 40);
        let summary = extract_corpus(&corpus.trees, &lex);
        let mut covered: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for c in &summary.constructions {
            covered.entry(c.sentence_id).or_default().push(c.npi_index);
        }
        for (id, tokens) in corpus.sentences().iter().enumerate() {
            for (i, t) in tokens.iter().enumerate() {
                if lex.is_npi(t) {
                    prop_assert!(covered.get(&id).is_some_and(|v| v.contains(&i)), "sentence {id} token {i}");
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn ppi_swap_is_an_involution(
        npi in prop::sample::select(vec!["any", "anybody", "anyone", "anything", "anytime", "anywhere"]),
        capital in any::<bool>(),
        before in prop::collection::vec("[a-z]{1,5}", 0..4),
        after in prop::collection::vec("[a-z]{1,5}", 0..4),
    ) {
        let lex = Lexicon::default();
        let word = if capital { format!("{}{}", npi[..1].to_uppercase(), &npi[1..]) } else { npi.to_string() };
        let mut tokens = before.clone();
        tokens.push(word);
        tokens.extend(after.iter().cloned());
        let index = before.len();
        let swapped = swap_to_ppi(&tokens, index, &lex).unwrap();
        prop_assert!(lex.is_ppi(&swapped[index]));
        let back = lex.npi_for(&swapped[index]).unwrap();
        let mut restored = swapped.clone();
        restored[index] = if capital { format!("{}{}", back[..1].to_uppercase(), &back[1..]) } else { back.to_string() };
        prop_assert_eq!(restored, tokens);
    }
}

// ---- analysis ----

proptest! {
    #[test]
    fn relative_difference_bounds(a in 0.0f64..1e9, b in 1e-12f64..1e9) {
        let ab = relative_difference(a, b).unwrap();
        let ba = relative_difference(b, a).unwrap();
        prop_assert_eq!(ab, -ba);
        prop_assert!(ab.abs() <= 2.0);
        prop_assert_eq!(relative_difference(b, b).unwrap(), 0.0);
    }
}

fn arb_variant() -> impl Strategy<Value = Option<VariantScore>> {
    prop::option::weighted(
        0.85,
        (1u32..400, 1u32..400).prop_map(|(pp, pr)| VariantScore {
            perplexity: pp as f64 / 4.0,
            probability: pr as f64 / 400.0,
            slor: None,
        }),
    )
}

fn arb_scores() -> impl Strategy<Value = Vec<ConditionScores>> {
    prop::collection::vec(
        (
            [arb_variant(), arb_variant(), arb_variant(), arb_variant()],
            prop::option::of(1u32..400),
            prop::option::of(1u32..400),
            1usize..12,
        ),
        1..30,
    )
    .prop_map(|items| {
        items
            .into_iter()
            .enumerate()
            .map(|(i, (variants, sn, sp, distance))| ConditionScores {
                sentence_id: i,
                npi_index: distance + 1,
                distance,
                variants,
                sen_neg: sn.map(f64::from),
                sen_pos: sp.map(f64::from),
            })
            .collect()
    })
}

fn counts(rows: &[ComparisonRow]) -> Vec<(usize, usize)> {
    rows.iter().map(|r| (r.n, r.complying)).collect()
}

proptest! {
    #[test]
    fn comparisons_invariant_under_monotone_rescaling(scores in arb_scores(), k in 1u32..5) {
        let f = |x: f64| (k as f64) * x * x * x;
        let scaled: Vec<ConditionScores> = scores
            .iter()
            .map(|s| {
                let mut t = s.clone();
                for v in t.variants.iter_mut().flatten() {
                    v.perplexity = f(v.perplexity);
                    v.probability = f(v.probability);
                }
                t.sen_neg = t.sen_neg.map(f);
                t.sen_pos = t.sen_pos.map(f);
                t
            })
            .collect();
        prop_assert_eq!(counts(&tally_conditions(&scores)), counts(&tally_conditions(&scaled)));
    }

    #[test]
    fn buckets_merge_back_to_global(scores in arb_scores(), cut in 2usize..8) {
        let constructions: Vec<LicensedConstruction> = scores
            .iter()
            .map(|s| LicensedConstruction {
                sentence_id: s.sentence_id,
                tokens: vec![],
                licensor_index: 1,
                npi_index: s.npi_index,
                scope: Span::new(2, s.npi_index + 1),
                pattern_id: 1,
                distance: s.distance,
            })
            .collect();
        let buckets = bucket_by_distance(&scores, &constructions, &[0, cut, cut + 2]).unwrap();
        prop_assert_eq!(buckets.iter().map(|b| b.n).sum::<usize>(), scores.len());
        let global = tally_conditions(&scores);
        for (i, row) in global.iter().enumerate() {
            let n: usize = buckets.iter().map(|b| b.rows[i].n).sum();
            let c: usize = buckets.iter().map(|b| b.rows[i].complying).sum();
            prop_assert_eq!((n, c), (row.n, row.complying));
            if let Some(p) = row.percent() {
                let weighted: f64 = buckets.iter().filter_map(|b| b.rows[i].percent().map(|q| q * b.rows[i].n as f64)).sum();
                prop_assert!((weighted / row.n as f64 - p).abs() < 1e-9);
            }
        }
    }
}

// Average ranks by counting, independent of any sort.
fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let below = x.iter().filter(|b| *b < a).count() as f64;
            let equal = x.iter().filter(|b| *b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let cov = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>()
    };
    cov(&rx, &ry) / (cov(&rx, &rx) * cov(&ry, &ry)).sqrt()
}

// tau-b = (C - D) / sqrt((n0 - n1)(n0 - n2)) with tie-group corrections.
fn oracle_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let sign = |v: f64| (v > 0.0) as i64 - (v < 0.0) as i64;
    let mut s = 0i64;
    for i in 0..n {
        for j in 0..n {
            if i < j {
                s += sign(x[i] - x[j]) * sign(y[i] - y[j]);
            }
        }
    }
    let tie_pairs = |v: &[f64]| {
        let mut groups: BTreeMap<u64, i64> = BTreeMap::new();
        v.iter().for_each(|a| *groups.entry(a.to_bits()).or_default() += 1);
        groups.values().map(|t| t * (t - 1) / 2).sum::<i64>()
    };
    let n0 = (n * (n - 1) / 2) as i64;
    s as f64 / (((n0 - tie_pairs(x)) * (n0 - tie_pairs(y))) as f64).sqrt()
}

proptest! {
    #[test]
    fn correlations_match_oracles(pairs in prop::collection::vec((0u8..6, 0u8..6), 2..25)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        if constant(&x) || constant(&y) {
            prop_assert!(matches!(spearman_rho(&x, &y), Err(AnalysisError::ConstantInput)));
            prop_assert!(matches!(kendall_tau(&x, &y), Err(AnalysisError::ConstantInput)));
            return Ok(());
        }
        let rho = spearman_rho(&x, &y).unwrap();
        let tau = kendall_tau(&x, &y).unwrap();
        prop_assert!((rho - oracle_spearman(&x, &y)).abs() < 1e-12);
        prop_assert!((tau - oracle_kendall(&x, &y)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&rho) && (-1.0..=1.0).contains(&tau));
        // Monotone transforms leave both unchanged.
        let gx: Vec<f64> = x.iter().map(|v| (v * 0.7).exp()).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v + 3.0).collect();
        prop_assert_eq!(spearman_rho(&gx, &gy).unwrap(), rho);
        prop_assert_eq!(kendall_tau(&gx, &gy).unwrap(), tau);
    }
}

// ---- baseline ----

proptest! {
    #[test]
    fn prefix_representation_shape(tokens in prop::collection::vec("[a-e]", 1..15), dim in 1usize..10, seed in any::<u64>()) {
        let table = EmbeddingTable::random(&["a", "b", "c"], dim, seed);
        for mode in [Composition::PrefixMean, Composition::WordOnly] {
            let reps = additive_prefix_repr(&tokens, &table, mode);
            prop_assert_eq!(reps.len(), tokens.len());
            prop_assert!(reps.iter().all(|r| r.len() == dim));
        }
    }

    #[test]
    fn prefix_mean_ignores_order(tokens in prop::collection::vec("[a-e]", 2..15), rot in 0usize..15, seed in any::<u64>()) {
        let table = EmbeddingTable::random(&["a", "b", "c", "d"], 6, seed);
        let last = tokens.len() - 1;
        let mut shuffled = tokens[..last].to_vec();
        let r = rot % shuffled.len().max(1);
        shuffled.rotate_left(r);
        shuffled.reverse();
        shuffled.push(tokens[last].clone());
        let a = additive_prefix_repr(&tokens, &table, Composition::PrefixMean);
        let b = additive_prefix_repr(&shuffled, &table, Composition::PrefixMean);
        for (p, q) in a[last].iter().zip(&b[last]) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}

// ---- probe ----

fn arb_records() -> impl Strategy<Value = Vec<FeatureRecord>> {
    prop::collection::vec((0usize..8, 0usize..5, prop::collection::vec(-3.0f64..3.0, 3)), 10..40).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (sid, label, vector))| FeatureRecord {
                sentence_id: sid,
                position: i,
                label: ScopeLabel::from_index(label).unwrap(),
                vector,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probe_loss_never_increases(records in arb_records()) {
        let hyper = ProbeHyper { max_iter: 150, ..ProbeHyper::default() };
        match fit_probe_traced(&records, &hyper) {
            Ok((_, trace)) => {
                for w in trace.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
                }
            }
            Err(ProbeError::DegenerateData(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn evaluation_ignores_record_order(records in arb_records(), rot in 0usize..40) {
        let hyper = ProbeHyper { max_iter: 50, ..ProbeHyper::default() };
        let Ok(model) = fit_probe(&records, &hyper) else { return Ok(()) };
        let a = evaluate_probe(&model, &records).unwrap();
        let mut shuffled = records.clone();
        shuffled.rotate_left(rot % records.len());
        shuffled.reverse();
        let b = evaluate_probe(&model, &shuffled).unwrap();
        prop_assert_eq!(&a.confusion, &b.confusion);
        prop_assert_eq!(a.token_accuracy, b.token_accuracy);
        prop_assert_eq!(a.confusion.total(), records.len());
        prop_assert_eq!(a.token_accuracy, a.confusion.trace() as f64 / a.confusion.total() as f64);
        for label in ScopeLabel::ALL {
            prop_assert_eq!(a.confusion.gold_total(label), records.iter().filter(|r| r.label == label).count());
        }
    }
}
