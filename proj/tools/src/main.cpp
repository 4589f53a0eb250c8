#include "condnet/cli/commands.hpp"

int main(int argc, char** argv) { return condnet::cli::run_cli(argc, argv); }
