fn main() {
    std::process::exit(kbc::commands::main_with_args(std::env::args_os()));
}
