fn main() {
    std::process::exit(riskfsc::cli::run(std::env::args().collect()));
}
