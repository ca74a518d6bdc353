fn main() {
    std::process::exit(adam_lab::cli::main_with_args(std::env::args_os()));
}
