fn main() {
    let env = |k: &str| std::env::var(k).ok();
    let code = skyfed_cli::main_with(std::env::args(), &env, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    std::process::exit(code);
}
