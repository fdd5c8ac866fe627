fn main() {
    std::process::exit(oraclelab::cli::main_with_args(std::env::args()));
}
