fn main() {
    std::process::exit(relay_pdf::cli::main_with_args(std::env::args_os()));
}
