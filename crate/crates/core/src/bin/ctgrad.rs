fn main() {
    std::process::exit(ctgrad::cli::run(std::env::args_os()));
}
