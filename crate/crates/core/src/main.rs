fn main() {
    std::process::exit(randchan::cli::run(std::env::args_os()));
}
