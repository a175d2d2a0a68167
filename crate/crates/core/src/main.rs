fn main() {
    std::process::exit(frac_noether::cli::run());
}
