fn main() {
    std::process::exit(fgsim::cli::run(std::env::args_os()));
}
