fn main() {
    std::process::exit(wmamba_cli::run(std::env::args_os()));
}
