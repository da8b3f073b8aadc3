fn main() {
    std::process::exit(duopoly::cli::main_with(std::env::args_os()));
}
