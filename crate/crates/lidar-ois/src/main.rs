use clap::Parser;

fn main() -> anyhow::Result<()> {
    lidar_ois::cli::run(lidar_ois::cli::Cli::parse())
}
