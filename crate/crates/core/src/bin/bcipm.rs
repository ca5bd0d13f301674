fn main() {
    std::process::exit(bcipm::cli::main());
}
