use graphnls::graph::{bounded_star, ray_star, Edge, EdgeLength, GraphClass, MetricGraph};
use graphnls::io::{graph_to_toml, parse_graph_str};
use proptest::prelude::*;
use std::path::Path;

/// Chain `V0 - V1 - … - Vn`, shuffled by `order`, with optional rays at the ends.
fn chain(lengths: &[f64], order: &[usize], rays: usize) -> MetricGraph {
    let n = lengths.len();
    let vertices: Vec<String> = (0..=n).map(|i| format!("V{i}")).collect();
    let mut edges: Vec<Edge> = order
        .iter()
        .map(|&i| {
            let (a, b) = if i % 2 == 0 { (i, i + 1) } else { (i + 1, i) };
            Edge::segment(&format!("e{i}"), &vertices[a], &vertices[b], lengths[i])
        })
        .collect();
    if rays >= 1 {
        edges.push(Edge::ray("left", "V0"));
    }
    if rays == 2 {
        edges.push(Edge::ray("right", &vertices[n]));
    }
    MetricGraph::new(3.0, vertices, edges)
}

fn chain_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    prop::collection::vec(0.01f64..50.0, 1..25).prop_flat_map(|lengths| {
        let order: Vec<usize> = (0..lengths.len()).collect();
        (Just(lengths), Just(order).prop_shuffle())
    })
}

#[test]
fn small_stars_classify_as_line_and_halfline() {
    assert_eq!(ray_star(3.0, 2).classify().unwrap(), GraphClass::EquivalentToLine);
    assert_eq!(ray_star(3.0, 1).classify().unwrap(), GraphClass::EquivalentToHalfline);
    assert_eq!(ray_star(3.0, 3).classify().unwrap(), GraphClass::StarLike);
    assert_eq!(bounded_star(3.0, &[1.0, 2.0, 5.0]).classify().unwrap(), GraphClass::Bounded);
}

proptest! {
    #[test]
    fn chains_classify_by_ray_count((lengths, order) in chain_strategy(), rays in 0usize..3) {
        let g = chain(&lengths, &order, rays);
        let expected = match rays {
            0 => GraphClass::Bounded,
            1 => GraphClass::EquivalentToHalfline,
            _ => GraphClass::EquivalentToLine,
        };
        prop_assert_eq!(g.classify().unwrap(), expected);
    }

    #[test]
    fn validate_is_idempotent_and_pure(
        (lengths, order) in chain_strategy(),
        bad_length in prop::option::of(0usize..25),
        drop_endpoint in prop::option::of(0usize..25),
        rays in 0usize..3,
    ) {
        let mut g = chain(&lengths, &order, rays);
        let mut edges = g.edges().to_vec();
        if let Some(i) = bad_length {
            let i = i % lengths.len();
            edges[i].length = EdgeLength::Finite(-1.0);
        }
        if let Some(i) = drop_endpoint {
            let i = i % lengths.len();
            edges[i].endpoint_b = None;
        }
        g = MetricGraph::new(3.0, g.vertices().iter().map(|v| v.id.clone()).collect(), edges);
        let before = g.clone();
        let first = g.validate();
        prop_assert_eq!(&first, &g.validate());
        prop_assert_eq!(&before, &g);
        if bad_length.is_none() && drop_endpoint.is_none() {
            prop_assert!(first.is_empty());
        } else {
            prop_assert!(!first.is_empty());
        }
    }

    #[test]
    fn valid_graphs_round_trip_through_toml((lengths, order) in chain_strategy(), rays in 0usize..3) {
        let g = chain(&lengths, &order, rays);
        let back = parse_graph_str(&graph_to_toml(&g), Path::new("chain.toml")).unwrap();
        prop_assert_eq!(back, g);
    }
}
