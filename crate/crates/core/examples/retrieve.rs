//! BM25 candidate retrieval for a misinformation target, with the
//! "coronavirus" query expansion and pooling.
//!
//! ```text
//! cargo run --example retrieve
//! ```

use mistlink::corpus::{MisTarget, TweetDoc};
use mistlink::retrieval::{build_index, expand_query, retrieve_candidates, Bm25Params};
use mistlink::text::tokenize;

fn main() -> mistlink::Result<()> {
    let docs: Vec<TweetDoc> = [
        ("a", "COVID-19 vaccines alter your DNA permanently"),
        ("b", "the coronavirus vaccine changes human dna, share before deleted"),
        ("c", "mrna shots rewrite genes says anonymous doctor"),
        ("d", "wash your hands and stay home if you feel sick"),
        ("e", "coronavirus cases rising again in the city"),
    ]
    .iter()
    .map(|(id, t)| TweetDoc::new(*id, *t))
    .collect();
    let index = build_index(&docs)?;
    println!("{} docs, avgdl {:.2}", index.doc_count(), index.avg_doc_length());

    let mist = MisTarget::new("m1", "COVID-19 vaccines alter human DNA");
    let (plain, expanded) = expand_query(&mist);
    println!("query {plain:?}\nexpanded {expanded:?}");
    for d in &docs {
        let s = index.bm25_score(&tokenize(&mist.description), &d.id, Bm25Params::default())?;
        println!("  bm25({}) = {s:.4}", d.id);
    }
    let pooled = retrieve_candidates(&index, &mist, 3, Bm25Params::default());
    println!("pooled top-3 per query: {:?}", pooled.doc_ids());
    Ok(())
}
