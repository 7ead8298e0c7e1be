//! Deterministic toy target used by the shipped fixtures; see
//! `magpie::fixtures::toy_main` for the cost model.

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(magpie::fixtures::toy_main(&args));
}
