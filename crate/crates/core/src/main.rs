fn main() {
    // CLI wired up once the pipeline modules land.
    eprintln!("obslab: pipeline CLI not yet assembled");
    std::process::exit(2);
}
