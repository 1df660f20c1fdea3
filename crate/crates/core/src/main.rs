fn main() {
    std::process::exit(hindsight_atlas::cli::main_with(std::env::args_os()));
}
