#include "gnnforge/cli.hpp"

int main(int argc, char** argv) { return gnnforge::cli::run_cli(argc, argv); }
