fn main() {
    std::process::exit(ampi_cli::dispatch(std::env::args_os()));
}
