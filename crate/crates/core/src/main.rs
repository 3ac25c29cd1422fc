fn main() {
    std::process::exit(weylmap::cli::run());
}
