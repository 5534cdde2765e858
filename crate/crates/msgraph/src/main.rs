fn main() {
    std::process::exit(msgraph::cli::run(std::env::args_os()));
}
