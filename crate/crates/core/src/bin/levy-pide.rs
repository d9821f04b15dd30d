fn main() -> std::process::ExitCode {
    levy_pide::pricing::cli::main_entry()
}
