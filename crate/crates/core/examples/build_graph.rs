//! Seed the misinformation knowledge graph from dev judgments and extend it
//! with training judgments, then draw capped training triples.
//!
//! ```text
//! cargo run --example build_graph
//! ```

use mistlink::corpus::RelevanceJudgment;
use mistlink::MisinfoKnowledgeGraph;

fn main() -> mistlink::Result<()> {
    let mists = vec!["m1".to_string(), "m2".to_string()];
    let dev = vec![
        RelevanceJudgment::new("d1", "m1", true),
        RelevanceJudgment::new("d2", "m1", true),
        RelevanceJudgment::new("d3", "m2", true),
        RelevanceJudgment::new("d4", "m2", false),
    ];
    let train = vec![
        RelevanceJudgment::new("t1", "m1", true),
        RelevanceJudgment::new("t2", "m1", true),
        RelevanceJudgment::new("t2", "m2", true),
        RelevanceJudgment::new("t3", "m2", false),
    ];
    let mut graph = MisinfoKnowledgeGraph::seed_fcgs(&mists, &dev)?;
    println!("seed: {} nodes, {} edges", graph.node_count(), graph.total_edges());
    let stats = graph.phase1_extend(&train)?;
    println!("after extension: {stats:?}");
    for m in graph.mists() {
        println!("  {m}: members {:?}, {} edges", graph.members(m), graph.edge_count(m));
    }
    println!("unconnected: {:?}", graph.unconnected());
    for t in graph.training_triples(Some(3), 0) {
        println!("  ({}, {}, {})", t.head, t.relation, t.tail);
    }
    Ok(())
}
