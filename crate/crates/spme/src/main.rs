fn main() {
    std::process::exit(spme::run(std::env::args_os()));
}
