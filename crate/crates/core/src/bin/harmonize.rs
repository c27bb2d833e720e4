fn main() {
    std::process::exit(painterly::cli::run(std::env::args_os()));
}
