//! Near-duplicate removal with MinHash.
//!
//! ```text
//! cargo run --example dedup
//! ```

use mistlink::corpus::{dedup_corpus, shingle, MinHasher, TweetDoc};

fn main() -> mistlink::Result<()> {
    let docs = vec![
        TweetDoc::new("t1", "the vaccine contains a microchip that tracks your location at all times"),
        TweetDoc::new("t2", "the vaccine contains a microchip that tracks your location at all hours"),
        TweetDoc::new("t3", "drinking hot water every fifteen minutes kills the virus in your throat"),
        TweetDoc::new("t4", "the vaccine contains a microchip that tracks your location at all times"),
        TweetDoc::new("t5", "5g towers spread the virus through radio waves in big cities"),
    ];
    let hasher = MinHasher::new(100, 0);
    let sigs: Vec<_> = docs.iter().map(|d| hasher.signature(&shingle(&d.text))).collect::<Result<_, _>>()?;
    println!("estimated Jaccard vs t1:");
    for (d, s) in docs.iter().zip(&sigs).skip(1) {
        println!("  {} {:.2}", d.id, sigs[0].jaccard(s));
    }
    let kept = dedup_corpus(&docs, 0.5, &hasher)?;
    let ids: Vec<&str> = kept.iter().map(|d| d.id.as_str()).collect();
    println!("kept {} of {}: {ids:?}", kept.len(), docs.len());
    Ok(())
}
