//! Gated deep linear networks: graph, gating, forward pass, loss, gradients,
//! per-path statistics and gradient-descent training.

mod graph;
pub mod io;
mod ops;
mod presets;

pub use graph::{Binding, Edge, GatedGraph, GatingTable, GraphBuilder, Node, Path};
pub use ops::{
    forward, forward_batch, gradient, gradient_by_paths, init_weights, loss, pathway_stats, predict, train, Init,
    ModeProbe, PathwayStats, TrainConfig, DIVERGENCE_LOSS,
};
pub use presets::{build_reln_graph, check_capacity, combinations, pathway_patterns, RelnPreset};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{build_hierarchy_dataset, build_xor_margin, contextual_task};
    use crate::error::Error;
    use crate::linalg::{self, Matrix};

    fn chain(d: usize, h: usize, p: usize) -> GatedGraph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", (0..d).collect());
        let hid = b.node("h", h);
        let y = b.output("y", (0..p).collect());
        b.edge("w1", x, hid);
        b.edge("w2", hid, y);
        b.build().unwrap()
    }

    fn random_weights(graph: &mut GatedGraph, std: f64, seed: u64) {
        init_weights(graph, Init::Std(std), seed).unwrap();
    }

    fn finite_difference(
        graph: &GatedGraph,
        gates: &GatingTable,
        ds: &crate::datasets::Dataset,
        step: f64,
    ) -> Vec<Matrix> {
        let mut g = graph.clone();
        let mut out = Vec::new();
        for e in 0..graph.edges.len() {
            let mut m = Matrix::zeros(graph.edges[e].weight.nrows(), graph.edges[e].weight.ncols());
            for idx in 0..m.len() {
                let orig = g.edges[e].weight[idx];
                g.edges[e].weight[idx] = orig + step;
                let lp = loss(&g, gates, ds).unwrap();
                g.edges[e].weight[idx] = orig - step;
                let lm = loss(&g, gates, ds).unwrap();
                g.edges[e].weight[idx] = orig;
                m[idx] = -(lp - lm) / (2.0 * step);
            }
            out.push(m);
        }
        out
    }

    fn max_rel(a: &[Matrix], b: &[Matrix]) -> f64 {
        let scale = b.iter().map(linalg::max_abs).fold(0.0f64, f64::max).max(1e-300);
        a.iter().zip(b).map(|(x, y)| linalg::max_abs_diff(x, y)).fold(0.0, f64::max) / scale
    }

    #[test]
    fn ungated_chain_is_plain_product() {
        let ds = build_xor_margin(0.5).unwrap();
        let mut g = chain(3, 4, 1);
        random_weights(&mut g, 0.5, 1);
        let gates = GatingTable::all_on(&g, 4);
        let pred = predict(&g, &gates, &ds).unwrap();
        let expected = &g.edges[1].weight * &g.edges[0].weight * &ds.inputs;
        assert!(linalg::max_abs_diff(&pred, &expected) < 1e-14);
        let single = forward(&g, &gates, &ds, 2).unwrap();
        assert!((single[2][0] - expected[(0, 2)]).abs() < 1e-14);
        assert!(matches!(forward(&g, &gates, &ds, 4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn node_gate_zero_annihilates() {
        let ds = build_xor_margin(1.0).unwrap();
        let mut g = chain(3, 4, 1);
        random_weights(&mut g, 1.0, 2);
        let mut gates = GatingTable::all_on(&g, 4);
        gates.node[1][3] = 0.0;
        let h = forward(&g, &gates, &ds, 3).unwrap();
        assert!(h[1].iter().all(|&x| x == 0.0));
        assert!(h[2].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn xor_linear_positive_example_uses_one_pathway() {
        let ds = build_xor_margin(1.0).unwrap();
        let (mut g, gates) = build_reln_graph(RelnPreset::XorLinear, &ds, 4).unwrap();
        assert_eq!(g.paths().len(), 2);
        random_weights(&mut g, 0.3, 3);
        let full = forward(&g, &gates, &ds, 1).unwrap();
        let pos_only = &g.edges[1].weight * &g.edges[0].weight * ds.inputs.column(1);
        let y = g.node_index("y").unwrap();
        assert!((full[y][0] - pos_only[0]).abs() < 1e-14);
    }

    #[test]
    fn zero_weights_loss_and_gradient() {
        let ds = build_xor_margin(1.0).unwrap();
        let (g, gates) = build_reln_graph(RelnPreset::XorLinear, &ds, 4).unwrap();
        assert!((loss(&g, &gates, &ds).unwrap() - 0.5).abs() < 1e-15);
        for m in gradient(&g, &gates, &ds).unwrap() {
            assert_eq!(linalg::max_abs(&m), 0.0);
        }
    }

    #[test]
    fn realizing_weights_give_zero_loss() {
        let ds = build_hierarchy_dataset(4).unwrap();
        let mut g = chain(4, 4, 7);
        g.edges[0].weight = Matrix::identity(4, 4);
        g.edges[1].weight = ds.targets.clone();
        let gates = GatingTable::all_on(&g, 4);
        assert!(loss(&g, &gates, &ds).unwrap() < 1e-30);
    }

    #[test]
    fn contextual_initial_loss_is_target_energy() {
        let ds = contextual_task(3, 8, Some(0)).unwrap();
        let (g, gates) = build_reln_graph(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds, 100).unwrap();
        let expected = ds.targets.norm_squared() / (2.0 * 24.0);
        assert!((loss(&g, &gates, &ds).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn two_layer_gradient_matches_closed_expression() {
        let ds = build_hierarchy_dataset(4).unwrap();
        let mut g = chain(4, 3, 7);
        random_weights(&mut g, 0.2, 4);
        let gates = GatingTable::all_on(&g, 4);
        let grads = gradient(&g, &gates, &ds).unwrap();
        let n = 4.0;
        let syx = &ds.targets * ds.inputs.transpose() / n;
        let sx = &ds.inputs * ds.inputs.transpose() / n;
        let (w1, w2) = (&g.edges[0].weight, &g.edges[1].weight);
        let expected = w2.transpose() * (&syx - w2 * w1 * &sx);
        assert!(linalg::max_abs_diff(&grads[0], &expected) < 1e-14);
    }

    #[test]
    fn backprop_path_sum_and_finite_differences_agree() {
        let xor = build_xor_margin(0.7).unwrap();
        let ctx = contextual_task(3, 8, Some(1)).unwrap();
        let cases = vec![
            (RelnPreset::XorLinear, xor.clone(), 5),
            (RelnPreset::XorPointwise, xor, 5),
            (RelnPreset::Contextual { contexts: 3, arity: 2 }, ctx.clone(), 10),
            (RelnPreset::Depth2Contextual { contexts: 3 }, ctx, 10),
        ];
        for (preset, ds, width) in cases {
            let (mut g, gates) = build_reln_graph(preset, &ds, width).unwrap();
            random_weights(&mut g, 0.3, 5);
            let bp = gradient(&g, &gates, &ds).unwrap();
            let ps = gradient_by_paths(&g, &gates, &ds).unwrap();
            let fd = finite_difference(&g, &gates, &ds, 1e-6);
            assert!(max_rel(&bp, &ps) < 1e-12, "{preset}: backprop vs path sum");
            assert!(max_rel(&bp, &fd) < 1e-5, "{preset}: backprop vs finite differences {}", max_rel(&bp, &fd));
        }
    }

    #[test]
    fn edge_gates_enter_gradients() {
        let ds = build_xor_margin(0.3).unwrap();
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![0, 1, 2]);
        let a = b.node("a", 3);
        let c = b.node("c", 2);
        let y = b.output("y", vec![0]);
        b.edge("xa", x, a);
        b.edge("xc", x, c);
        b.edge("ac", a, c);
        b.edge("ay", a, y);
        b.edge("cy", c, y);
        let mut g = b.build().unwrap();
        random_weights(&mut g, 0.5, 6);
        let mut gates = GatingTable::all_on(&g, 4);
        gates.edge[2] = vec![1.0, 0.0, 1.0, 0.0];
        gates.node[2] = vec![1.0, 1.0, 0.0, 1.0];
        gates.edge[4] = vec![0.0, 1.0, 1.0, 1.0];
        let bp = gradient(&g, &gates, &ds).unwrap();
        let ps = gradient_by_paths(&g, &gates, &ds).unwrap();
        let fd = finite_difference(&g, &gates, &ds, 1e-6);
        assert!(max_rel(&bp, &ps) < 1e-12);
        assert!(max_rel(&bp, &fd) < 1e-6);
    }

    #[test]
    fn pathway_input_overlap_ratios() {
        for (contexts, ratio) in [(3, 0.5), (4, 2.0 / 3.0), (5, 0.75)] {
            let ds = contextual_task(contexts, 8, None).unwrap();
            let (g, gates) =
                build_reln_graph(RelnPreset::Contextual { contexts, arity: contexts - 1 }, &ds, 16).unwrap();
            let st = pathway_stats(&g, &gates, &ds).unwrap();
            assert_eq!(g.paths().len(), contexts + 1);
            for j in 1..=contexts {
                for p in 1..=contexts {
                    if j != p {
                        let expected = st.sigma_x(p, p).unwrap() * ratio;
                        assert!(linalg::max_abs_diff(st.sigma_x(j, p).unwrap(), &expected) < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn always_on_pathway_sees_the_dataset() {
        let ds = build_hierarchy_dataset(8).unwrap();
        let g = chain(8, 8, 15);
        let st = pathway_stats(&g, &GatingTable::all_on(&g, 8), &ds).unwrap();
        let full = crate::datasets::correlation_stats(&ds, None).unwrap();
        assert!(linalg::max_abs_diff(st.sigma_yx(0), &full.sigma_yx) < 1e-15);
    }

    #[test]
    fn inert_paths_are_flagged() {
        let ds = build_xor_margin(1.0).unwrap();
        let g = chain(3, 2, 1);
        let mut gates = GatingTable::all_on(&g, 4);
        gates.node[1] = vec![0.0; 4];
        let st = pathway_stats(&g, &gates, &ds).unwrap();
        assert!(st.inert[0]);
        assert_eq!(linalg::max_abs(st.sigma_yx(0)), 0.0);
    }

    #[test]
    fn preset_pathway_counts() {
        let ctx3 = contextual_task(3, 8, None).unwrap();
        let ctx5 = contextual_task(5, 8, None).unwrap();
        let xor = build_xor_margin(0.0).unwrap();
        let count = |p: RelnPreset, ds| build_reln_graph(p, ds, 100).unwrap().0.paths().len();
        assert_eq!(count(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ctx3), 4);
        assert_eq!(count(RelnPreset::Contextual { contexts: 5, arity: 4 }, &ctx5), 6);
        assert_eq!(count(RelnPreset::Contextual { contexts: 3, arity: 1 }, &ctx3), 4);
        assert_eq!(count(RelnPreset::Depth2Contextual { contexts: 3 }, &ctx3), 4);
        let (g, gates) = build_reln_graph(RelnPreset::XorPointwise, &xor, 8).unwrap();
        assert_eq!(g.paths().len(), 4);
        for p in g.paths() {
            assert_eq!(gates.path_gate(p, &g).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn under_parameterized_pathway_is_rejected() {
        let ds = contextual_task(3, 8, None).unwrap();
        let r = build_reln_graph(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds, 4);
        assert!(matches!(r, Err(Error::UnderParameterized { .. })));
    }

    #[test]
    fn preset_names_parse() {
        for s in ["xor_linear", "xor_pointwise", "contextual(3,2)", "depth2_contextual(3)"] {
            assert_eq!(s.parse::<RelnPreset>().unwrap().to_string(), s);
        }
        assert!(matches!("nope".parse::<RelnPreset>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn zero_learning_rate_keeps_initial_loss() {
        let ds = build_xor_margin(0.5).unwrap();
        let (mut g, gates) = build_reln_graph(RelnPreset::XorLinear, &ds, 4).unwrap();
        let mut cfg = TrainConfig::new(0.0, 20);
        cfg.init = Some(Init::Std(0.1));
        let t = train(&mut g, &gates, &ds, &cfg).unwrap();
        assert_eq!(t.len(), 21);
        assert!(t.loss.iter().all(|&l| l == t.loss[0]));
    }

    #[test]
    fn xor_pointwise_converges_at_zero_margin() {
        let ds = build_xor_margin(0.0).unwrap();
        let (mut g, gates) = build_reln_graph(RelnPreset::XorPointwise, &ds, 128).unwrap();
        let mut cfg = TrainConfig::new(0.1, 400);
        cfg.init = Some(Init::Variance(4e-8 / 128.0));
        cfg.seed = 3;
        let t = train(&mut g, &gates, &ds, &cfg).unwrap();
        assert!(t.final_loss().unwrap() < 1e-4, "final {}", t.final_loss().unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let ds = build_hierarchy_dataset(4).unwrap();
        let mut g = chain(4, 4, 7);
        let mut cfg = TrainConfig::new(5.0, 200);
        cfg.init = Some(Init::Std(0.5));
        let gates = GatingTable::all_on(&g, 4);
        assert!(matches!(train(&mut g, &gates, &ds, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn training_is_deterministic_and_records_modes() {
        let ds = build_hierarchy_dataset(4).unwrap();
        let gates = GatingTable::all_on(&chain(4, 8, 7), 4);
        let stats = pathway_stats(&chain(4, 8, 7), &gates, &ds).unwrap();
        let mut cfg = TrainConfig::new(0.05, 50);
        cfg.init = Some(Init::Std(1e-3));
        cfg.seed = 9;
        cfg.record_every = 10;
        cfg.probes = vec![ModeProbe::from_stats(&stats, 0, 4)];
        cfg.output_epochs = vec![50];
        cfg.snapshot_epochs = vec![0];
        let mut g1 = chain(4, 8, 7);
        let mut g2 = chain(4, 8, 7);
        let a = train(&mut g1, &gates, &ds, &cfg).unwrap();
        let b = train(&mut g2, &gates, &ds, &cfg).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.epochs, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(a.mode_names, vec!["path0_mode0", "path0_mode1", "path0_mode2", "path0_mode3"]);
        assert!(a.output_at(50).is_some());
        assert_eq!(a.snapshots.len(), 1);
    }

    #[test]
    fn json_roundtrip_preserves_graph_and_gates() {
        let ds = contextual_task(3, 8, Some(2)).unwrap();
        let (mut g, gates) = build_reln_graph(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds, 10).unwrap();
        random_weights(&mut g, 0.1, 8);
        let text = io::to_json(&g, &gates).unwrap();
        let (g2, gates2) = io::from_json(&text).unwrap();
        assert_eq!(gates2, gates);
        assert_eq!(g2.paths(), g.paths());
        for (a, b) in g.edges.iter().zip(&g2.edges) {
            assert_eq!(a.weight, b.weight);
        }
    }

    #[test]
    fn gate_masks_are_lsb_first() {
        let g = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(io::encode_gates(&g), "0102");
        assert_eq!(io::decode_gates("0102", 10).unwrap(), g);
        assert!(io::decode_gates("01", 10).is_err());
    }
}
