#include "comevl/cli.hpp"

int main(int argc, char** argv) { return comevl::cli::run_cli(argc, argv); }
