fn main() {
    std::process::exit(ltcds::cli::main_with_args(std::env::args_os()));
}
