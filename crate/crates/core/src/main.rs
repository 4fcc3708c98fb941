fn main() {
    std::process::exit(sglab::cli::run(std::env::args_os()));
}
