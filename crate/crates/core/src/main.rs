fn main() {
    std::process::exit(declare::cli::run(std::env::args_os()));
}
