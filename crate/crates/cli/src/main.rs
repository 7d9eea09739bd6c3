fn main() {
    std::process::exit(adstrat_cli::main_with(std::env::args_os()));
}
