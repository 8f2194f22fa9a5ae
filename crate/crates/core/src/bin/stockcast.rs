fn main() {
    std::process::exit(stockcast::cli::dispatch(std::env::args_os()));
}
