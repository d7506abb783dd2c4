fn main() {
    std::process::exit(kpr_cli::run(std::env::args_os()));
}
