fn main() {
    std::process::exit(secondgrade::app::main_with_args(std::env::args_os()));
}
