//! Assembles the loss of one pair from hand-written logits, Gaussians and
//! representations, and shows how diversity enters through the Gram
//! determinant.

use dgib::objective::{dgib_loss, gaussian_kl, gram_det, DgibConfig};

fn main() -> dgib::Result<()> {
    let cfg = DgibConfig {
        beta1: 1e-4,
        beta2: 1e-4,
        k: 2,
    };
    let gaussians = vec![
        (vec![0.5, -0.2], vec![0.8, 1.1]),
        (vec![0.1, 0.9], vec![0.5, 0.7]),
    ];
    for (m, v) in &gaussians {
        println!("KL(N({m:?}, {v:?}) || N(0, I)) = {:.6}", gaussian_kl(m, v)?);
    }
    let similar = vec![vec![1.0, 0.0], vec![0.99, 0.05]];
    let diverse = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    println!(
        "gram_det similar {:.6}, diverse {:.6}",
        gram_det(&similar)?,
        gram_det(&diverse)?
    );
    for (name, zs) in [("similar", &similar), ("diverse", &diverse)] {
        let loss = dgib_loss(&[1.5, 0.7], 1.0, &gaussians, zs, &cfg)?;
        println!(
            "{name:>8}: ce {:.6} kl {:.6} dpp {:.6} total {:.8}",
            loss.ce, loss.kl, loss.dpp, loss.total
        );
    }
    Ok(())
}
