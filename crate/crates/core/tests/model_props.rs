use dtrnn::gradcheck::{check_instance, random_instance, GradCheckConfig};
use dtrnn::kernel::sigmoid_scalar;
use dtrnn::model::{backward_tree, forward_node, Gate, Pooling};
use dtrnn::rng::{stream_rng, Stream};
use dtrnn::treegen::{DeepTree, TreeNode};
use dtrnn::{forward_tree, ModelParams};
use proptest::prelude::*;

fn params(seed: u64, input: usize, hidden: usize, attention: bool, scale: f64) -> ModelParams {
    let mut rng = stream_rng(seed, Stream::Init);
    ModelParams::random_uniform(input, hidden, 3, attention, scale, &mut rng)
}

fn child_states(hidden: usize, n: usize) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    prop::collection::vec(
        (
            prop::collection::vec(-1.0..1.0f64, hidden),
            prop::collection::vec(-3.0..3.0f64, hidden),
        ),
        n,
    )
}

fn as_refs(states: &[(Vec<f64>, Vec<f64>)]) -> Vec<(&[f64], &[f64])> {
    states.iter().map(|(h, c)| (&h[..], &c[..])).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cell_is_invariant_to_child_order(
        seed in any::<u64>(),
        attention in any::<bool>(),
        (states, perm) in (1usize..6).prop_flat_map(|k| (child_states(4, k), Just((0..k).collect::<Vec<_>>()).prop_shuffle())),
        x in prop::collection::btree_set(0u32..6, 0..4),
    ) {
        let p = params(seed, 6, 4, attention, 1.0);
        let pooling = if attention { Pooling::AttentionMax } else { Pooling::Max };
        let x: Vec<u32> = x.into_iter().collect();
        let permuted: Vec<_> = perm.iter().map(|&i| states[i].clone()).collect();
        let a = forward_node(&p, &x, &as_refs(&states), pooling).unwrap();
        let b = forward_node(&p, &x, &as_refs(&permuted), pooling).unwrap();
        prop_assert!(close(&a.hidden, &b.hidden, 1e-12));
        prop_assert!(close(&a.cell, &b.cell, 1e-12));
        prop_assert!(close(&a.pooled, &b.pooled, 1e-12));
    }

    #[test]
    fn gates_stay_in_range(
        seed in any::<u64>(),
        attention in any::<bool>(),
        scale in 0.1..20.0f64,
        states in (0usize..5).prop_flat_map(|k| child_states(5, k)),
    ) {
        let p = params(seed, 6, 5, attention, scale);
        let pooling = if attention { Pooling::AttentionMax } else { Pooling::Max };
        let t = forward_node(&p, &[0, 2, 5], &as_refs(&states), pooling).unwrap();
        let unit = |v: &[f64]| v.iter().all(|&g| (0.0..=1.0).contains(&g));
        let signed = |v: &[f64]| v.iter().all(|&g| (-1.0..=1.0).contains(&g));
        prop_assert!(unit(&t.input) && unit(&t.output));
        prop_assert!(t.forget.iter().all(|f| unit(f)));
        prop_assert_eq!(t.forget.len(), states.len());
        prop_assert!(signed(&t.update) && signed(&t.cell_tanh) && signed(&t.hidden));
    }

    #[test]
    fn attention_weights_form_a_distribution(
        seed in any::<u64>(),
        scale in 0.1..10.0f64,
        states in (1usize..7).prop_flat_map(|k| child_states(3, k)),
    ) {
        let p = params(seed, 6, 3, true, scale);
        let t = forward_node(&p, &[1, 3], &as_refs(&states), Pooling::AttentionMax).unwrap();
        let alpha = t.attention.unwrap();
        prop_assert_eq!(alpha.len(), states.len());
        prop_assert!(alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_matches_closed_form(seed in any::<u64>(), attention in any::<bool>(), x in prop::collection::btree_set(0u32..6, 0..5)) {
        let p = params(seed, 6, 4, attention, 2.0);
        let pooling = if attention { Pooling::AttentionMax } else { Pooling::Max };
        let x: Vec<u32> = x.into_iter().collect();
        let t = forward_node(&p, &x, &[], pooling).unwrap();
        prop_assert!(t.pooled.iter().all(|&v| v == 0.0));
        prop_assert!(t.forget.is_empty() && t.argmax.is_empty() && t.attention.is_none());
        let pre = |g: Gate, d: usize| {
            let gi = g as usize;
            p.bias[gi][d] + x.iter().map(|&j| p.w_x[gi].get(j as usize, d)).sum::<f64>()
        };
        for d in 0..4 {
            let i = sigmoid_scalar(pre(Gate::Input, d));
            let o = sigmoid_scalar(pre(Gate::Output, d));
            let u = pre(Gate::Update, d).tanh();
            prop_assert!((t.cell[d] - i * u).abs() < 1e-12);
            prop_assert!((t.hidden[d] - o * (i * u).tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_output_ignores_sibling_order(seed in any::<u64>(), attention in any::<bool>()) {
        let mut rng = stream_rng(seed, Stream::GradCheck);
        let inst = random_instance(&mut rng, &GradCheckConfig::default(), attention);
        let reversed: Vec<TreeNode> = inst
            .tree
            .nodes
            .iter()
            .map(|n| TreeNode { children: n.children.iter().rev().copied().collect(), ..n.clone() })
            .collect();
        let tree2 = DeepTree::from_nodes(inst.tree.target, inst.tree.method, None, reversed).unwrap();
        let a = forward_tree(&inst.params, &inst.tree, &inst.graph, attention).unwrap();
        let b = forward_tree(&inst.params, &tree2, &inst.graph, attention).unwrap();
        prop_assert!(close(&a.probs, &b.probs, 1e-12));
    }

    #[test]
    fn clipped_norm_never_exceeds_threshold(seed in any::<u64>(), attention in any::<bool>(), clip in 1e-4..10.0f64) {
        let mut rng = stream_rng(seed, Stream::GradCheck);
        let inst = random_instance(&mut rng, &GradCheckConfig::default(), attention);
        let trace = forward_tree(&inst.params, &inst.tree, &inst.graph, attention).unwrap();
        let (_, mut grads) = backward_tree(&inst.params, &trace, inst.label).unwrap();
        let before = grads.clip_global_norm(clip);
        let after = grads.global_norm();
        prop_assert!(after <= clip + 1e-12);
        if before <= clip {
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn random_instances_pass_gradient_check(seed in any::<u64>(), attention in any::<bool>()) {
        let mut rng = stream_rng(seed, Stream::GradCheck);
        let inst = random_instance(&mut rng, &GradCheckConfig::default(), attention);
        let (err, ..) = check_instance(&inst, 1e-5).unwrap();
        prop_assert!(err < 1e-5, "relative error {err}");
    }
}
