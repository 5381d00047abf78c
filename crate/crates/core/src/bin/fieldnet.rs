fn main() {
    std::process::exit(fieldnet::cli::main());
}
