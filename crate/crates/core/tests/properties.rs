use lookahead_core::augment::{augment_copy, strip_augmentation, strip_ids, strip_tokens};
use lookahead_core::scc::{generate_digraph, parse_scc, run_tarjan_with_trace, scc_oracle, linearize_scc, SccInstance};
use lookahead_core::stargraph::{generate_star, linearize_star, parse_star, StarParams};
use lookahead_core::task::build_task_mixture;
use lookahead_core::{AugSpec, Policy, TaskSpec, Vocab};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn star_linearize_parse_round_trip(d in 2usize..8, n in 4usize..9, seed in any::<u64>()) {
        let inst = generate_star(StarParams::new(d, n), seed).unwrap();
        let back = parse_star(&linearize_star(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn scc_linearize_parse_round_trip(n in 1usize..9, p in 0.0f64..1.0, seed in any::<u64>()) {
        let inst = SccInstance::new(generate_digraph(n, p, seed).unwrap());
        let back = parse_scc(&linearize_scc(&inst)).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn copy_then_strip_is_identity(
        seq in prop::collection::vec(6u32..200, 3..60),
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
        c in any::<prop::sample::Index>(),
    ) {
        let len = seq.len();
        // d < s <= len - k, k >= 1
        let s = 2 + a.index(len - 2);
        let k = 1 + b.index(len - s);
        let d = c.index(s);
        let aug = augment_copy(&seq, d, s, k).unwrap();
        prop_assert_eq!(aug.ids.0.len(), len + k + 2);
        prop_assert_eq!(&aug.ids.0[d + 1..d + 1 + k], &seq[s - 1..s - 1 + k]);
        prop_assert_eq!(strip_ids(&aug.ids.0), seq.clone());
        prop_assert_eq!(strip_augmentation(&aug).0, seq);
    }

    #[test]
    fn tarjan_matches_reachability_oracle(n in 1usize..9, p in 0.0f64..1.0, seed in any::<u64>()) {
        let g = generate_digraph(n, p, seed).unwrap();
        prop_assert_eq!(run_tarjan_with_trace(&g).final_labels, scc_oracle(&g));
    }

    #[test]
    fn star_spans_skip_first_hop_and_goal(
        d in 2usize..6,
        n in 4usize..10,
        seed in any::<u64>(),
        fixed in any::<bool>(),
    ) {
        let task = TaskSpec::Star(StarParams::new(d, n));
        let spec = AugSpec { p: 0.0, policy: if fixed { Policy::Fixed } else { Policy::Random }, ..AugSpec::default() };
        let ex = task.generate(1, seed).unwrap();
        let inst = parse_star(&ex[0]).unwrap();
        let mut rng = lookahead_core::seed::rng(seed);
        let z = task.parse(&ex[0]).unwrap().span_tokens(&spec, &mut rng).unwrap();
        let (v1, goal) = (inst.path[1].to_string(), inst.goal.to_string());
        prop_assert!(!z.is_empty());
        prop_assert!(z.iter().all(|t| *t != v1 && *t != goal));
    }
}

#[test]
fn mixture_strips_back_to_the_dataset() {
    for task in [TaskSpec::Star(StarParams::new(3, 6)), TaskSpec::Scc { sizes: vec![4, 7], edge_prob: 0.3 }] {
        let vocab: Vocab = task.vocab();
        let examples = task.generate(60, 11).unwrap();
        let policy = task.default_policy();
        let spec = AugSpec { p: 0.3, policy, ..AugSpec::default() };
        let seqs = build_task_mixture(&task, &examples, &vocab, &spec, 5).unwrap();
        assert!(seqs.iter().any(|s| s.is_augmented()));
        for (seq, ex) in seqs.iter().zip(&examples) {
            let toks = vocab.decode(&strip_ids(&seq.ids.0)).unwrap();
            let mut want: Vec<String> = ex.prefix.clone();
            want.extend(ex.completion.iter().cloned());
            want.push(lookahead_core::vocab::EOS.to_string());
            assert_eq!(toks, want);
            assert_eq!(strip_tokens(&toks), toks);
        }
    }
}
