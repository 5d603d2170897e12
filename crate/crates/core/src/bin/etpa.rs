fn main() {
    std::process::exit(etpa::cli::main());
}
