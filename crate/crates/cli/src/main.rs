fn main() {
    std::process::exit(sovm_cli::cli::dispatch(std::env::args_os()));
}
