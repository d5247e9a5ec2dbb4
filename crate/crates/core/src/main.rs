fn main() {
    std::process::exit(madmix::cli::main_with_args(std::env::args_os()));
}
