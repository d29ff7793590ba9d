fn main() {
    std::process::exit(distillgrasp::pipeline::cli::run(std::env::args_os()));
}
