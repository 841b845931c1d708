//! One `PASS`/`FAIL` line per criterion; exits non-zero if any fails.
//! Arguments that are not flags select criteria by substring, e.g.
//! `cargo test -p bjmetro-validation --test acceptance -- chaos`.

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; ignore them.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (passed, ran) = bjmetro_validation::run(&filters);
    println!("acceptance: {passed} of {ran} criteria passed");
    if passed < ran {
        std::process::exit(1);
    }
}
