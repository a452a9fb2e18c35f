fn main() {
    std::process::exit(pledger::cli::main());
}
