fn main() {
    std::process::exit(ecg_guard_cli::app::run(std::env::args_os()));
}
