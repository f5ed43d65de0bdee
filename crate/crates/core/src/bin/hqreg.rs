fn main() {
    std::process::exit(hqreg::cli::main(std::env::args_os()));
}
