//! Writes the planted-signal five-study fixture used by the tests.
//!
//! ```text
//! cargo run -p efilter --example make_fixture -- crates/core/tests/fixtures
//! ```
//!
//! Every study shares `SHARED` SNP ids and has `EXTRA` ids of its own, so
//! the aligned matrix has exactly `SHARED` hypotheses. Each shared SNP is
//! non-null in a random subset of studies: none (most), exactly one,
//! two to four, or all five.

use std::io::Write;
use std::path::PathBuf;

use efilter::simulate::two_sided_p;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STUDIES: usize = 5;
const SHARED: usize = 10000;
const EXTRA: usize = 40;
const SEED: u64 = 20240611;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut signal = vec![[false; STUDIES]; SHARED];
    for row in signal.iter_mut() {
        let u: f64 = rng.random();
        let count = match u {
            u if u < 0.96 => 0,
            u if u < 0.98 => 1,
            u if u < 0.99 => rng.random_range(2..=4),
            _ => STUDIES,
        };
        let mut idx: Vec<usize> = (0..STUDIES).collect();
        for k in 0..count {
            let j = rng.random_range(k..STUDIES);
            idx.swap(k, j);
            row[idx[k]] = true;
        }
    }
    let means = [2.5, 3.0, 3.5, 4.0, 4.5];

    for s in 0..STUDIES {
        let path = dir.join(format!("study{}.tsv", s + 1));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "id\tchromosome\tbp\tpvalue")?;
        let mut rows = Vec::with_capacity(SHARED + EXTRA);
        for (j, row) in signal.iter().enumerate() {
            let mu = if row[s] {
                means[rng.random_range(0..means.len())] * if rng.random::<bool>() { 1.0 } else { -1.0 }
            } else {
                0.0
            };
            let z: f64 = mu + rng.sample::<f64, _>(StandardNormal);
            rows.push((format!("rs{}", 100000 + j), 1 + j % 22, 10000 + 137 * j, z));
        }
        for e in 0..EXTRA {
            let z: f64 = rng.sample(StandardNormal);
            rows.push((format!("rs{}", 900000 + 1000 * s + e), 1 + e % 22, 5_000_000 + e, z));
        }
        // files list SNPs in genome order, not id order
        rows.sort_by_key(|r| (r.1, r.2));
        for (id, chr, bp, z) in rows {
            writeln!(w, "{id}\t{chr}\t{bp}\t{:.6e}", two_sided_p(z))?;
        }
    }
    Ok(())
}
