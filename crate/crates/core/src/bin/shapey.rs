fn main() {
    std::process::exit(shapey::cli::main(std::env::args_os()));
}
