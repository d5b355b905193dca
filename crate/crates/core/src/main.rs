fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(lrm::cli::parse_and_dispatch(&argv));
}
