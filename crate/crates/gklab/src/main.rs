fn main() {
    std::process::exit(gklab::cli::run(std::env::args_os()));
}
