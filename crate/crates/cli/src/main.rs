fn main() {
    std::process::exit(spxpool_cli::cli_dispatch(std::env::args_os()));
}
