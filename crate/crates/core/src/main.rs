fn main() {
    std::process::exit(dssid::cli::main_with_args(std::env::args_os()));
}
