use mclab_core::checks::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    for lemma in DeterministicLemma::ALL {
        let start = Instant::now();
        let res = check_deterministic(lemma, 1000, 42).unwrap();
        println!("{:<26} violations={} worst_margin={:+.3e} ({:.1}s)",
                 res.lemma, res.violations, res.worst_margin, start.elapsed().as_secs_f64());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
