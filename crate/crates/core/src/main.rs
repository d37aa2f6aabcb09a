fn main() {
    std::process::exit(bild::cli::main_with_args(std::env::args_os()));
}
