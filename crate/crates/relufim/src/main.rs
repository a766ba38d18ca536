fn main() {
    std::process::exit(relufim::cli::run());
}
