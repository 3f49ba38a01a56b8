fn main() {
    std::process::exit(voc_app::run(std::env::args_os().collect()));
}
