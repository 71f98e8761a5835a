//! Score one (tweet, target, tweet) triple with every scoring function.
//!
//! ```text
//! cargo run --example score_functions
//! ```

use mistlink::kge::{score_knn, score_transd, score_transe, score_transms, score_tucker, CoreTensor, EMBED_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mistlink::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<f64>>();
    let (h, r, t) = (v(EMBED_DIM), v(EMBED_DIM), v(EMBED_DIM));
    let (hp, rp, tp) = (v(EMBED_DIM), v(EMBED_DIM), v(EMBED_DIM));

    println!("TransE  {:.4}", score_transe(&h, &r, &t)?);
    println!("TransD  {:.4}", score_transd(&h, &hp, &r, &rp, &t, &tp)?);
    println!("TransMS {:.4} (swapped {:.4})", score_transms(&h, &r, 0.3, &t)?, score_transms(&t, &r, 0.3, &h)?);
    println!("KNN     {:.4}", score_knn(&h, &t)?);

    let (z, w) = (4, 4);
    let core = CoreTensor::from_vec(z, w, v(z * w * z))?;
    println!("TuckER  {:.4}", score_tucker(&core, &h[..z], &r[..w], &t[..z])?);
    Ok(())
}
