fn main() -> std::process::ExitCode {
    segmil::cli::main_entry()
}
