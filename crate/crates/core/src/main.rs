fn main() {
    std::process::exit(pushlab::cli::run(std::env::args_os()));
}
