fn main() {
    std::process::exit(squeezetrack::cli::run());
}
