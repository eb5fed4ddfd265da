fn main() {
    std::process::exit(snowfold::cli::run(std::env::args_os()));
}
