fn main() {
    std::process::exit(bears::cli::main());
}
