fn main() {
    std::process::exit(fvrlab::cli::run(std::env::args_os()));
}
