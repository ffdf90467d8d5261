fn main() {
    std::process::exit(tree_tdvp::cli::main());
}
