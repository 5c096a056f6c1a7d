fn main() {
    std::process::exit(pvpost::cli::run(std::env::args_os()));
}
