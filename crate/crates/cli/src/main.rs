fn main() {
    std::process::exit(uam_vkc_cli::main_with(std::env::args_os()));
}
