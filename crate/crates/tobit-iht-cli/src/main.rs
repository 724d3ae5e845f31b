fn main() {
    eprintln!("tobit-iht: command-line interface not yet wired");
    std::process::exit(2);
}
