fn main() {
    std::process::exit(amsem::cli::main_with_args(std::env::args_os()));
}
