fn main() {
    std::process::exit(bridgelab_cli::main_with(std::env::args_os()));
}
