fn main() {
    std::process::exit(wordsway::cli::main_with_args(std::env::args_os()));
}
