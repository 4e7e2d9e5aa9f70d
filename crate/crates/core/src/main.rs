fn main() {
    std::process::exit(coldstart_al::cli::run(std::env::args_os()));
}
