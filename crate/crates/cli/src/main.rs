fn main() {
    std::process::exit(esi_cli::run(std::env::args_os()));
}
