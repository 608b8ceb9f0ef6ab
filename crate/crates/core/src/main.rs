fn main() {
    std::process::exit(qcad::cli::main());
}
