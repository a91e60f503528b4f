//! Runs a reduced version of the built-in oracle suite: motif adjacency
//! against enumeration, gradients against finite differences, and the
//! closed-form loss identities.

use dgib::selfcheck::{gradient_check, identities, motif_oracle};

fn main() -> dgib::Result<()> {
    let mut checks = vec![motif_oracle(30, 0)?, gradient_check(3, 0, 1e-4)?];
    checks.extend(identities()?);
    for c in &checks {
        println!(
            "{} {:<22} {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(())
}
