fn main() {
    std::process::exit(binsub::cli::run(std::env::args_os()));
}
