fn main() {
    std::process::exit(icboost::cli::main_with(std::env::args_os()));
}
