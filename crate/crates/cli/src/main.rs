fn main() {
    std::process::exit(prmlab_cli::run(std::env::args_os()));
}
